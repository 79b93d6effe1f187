//! Fourier-diagonal operators on the periodic grid.
//!
//! A complex field `psi = psi1 + i psi2` is transformed as a whole. Real even
//! symbols (kinetic term, Coulomb kernel, Sobolev weights) therefore act on
//! both components at once. Odd symbols (gradient, boost) zero the Nyquist
//! mode so that they map real fields to real fields and stay antisymmetric.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::fft::Fft3;
use crate::field::Field;
use crate::grid::Grid;

/// A Fourier multiplier sampled on the wavenumber lattice (FFT order).
#[derive(Clone, Debug)]
pub struct Multiplier {
    pub symbol: Vec<Complex64>,
}

impl Multiplier {
    pub fn real(symbol: Vec<f64>) -> Result<Self> {
        if symbol.iter().any(|s| !s.is_finite()) {
            return Err(LabError::InvalidField("multiplier symbol is not finite".into()));
        }
        Ok(Multiplier {
            symbol: symbol.into_iter().map(|s| Complex64::new(s, 0.0)).collect(),
        })
    }

    pub fn complex(symbol: Vec<Complex64>) -> Result<Self> {
        if symbol.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(LabError::InvalidField("multiplier symbol is not finite".into()));
        }
        Ok(Multiplier { symbol })
    }
}

/// Precomputed transform plans and lattice data for one grid.
#[derive(Clone, Debug)]
pub struct Spectral {
    grid: Grid,
    fft: Fft3,
    /// per-axis wavenumbers, Nyquist kept (used by even symbols)
    k_even: Vec<f64>,
    /// per-axis wavenumbers, Nyquist zeroed (used by odd symbols)
    k_odd: Vec<f64>,
    k_sq: Vec<f64>,
    coulomb: Vec<f64>,
}

/// The three norms used throughout: `L^2`, `H^{1/2}` and the weighted norm
/// `||psi||_X^2 = ||psi||_{H^{1/2}}^2 + eps ||\,|x|^{1/2} psi||^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h_half: f64,
    pub x_weight: f64,
}

impl Spectral {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n();
        let k_even = grid.wavenumbers();
        let mut k_odd = k_even.clone();
        k_odd[n / 2] = 0.0;
        let len = grid.len();
        let mut k_sq = vec![0.0; len];
        for idx in 0..len {
            let (i, j, k) = grid.coords_of(idx);
            k_sq[idx] = k_even[i] * k_even[i] + k_even[j] * k_even[j] + k_even[k] * k_even[k];
        }
        let r_t = 0.5 * grid.box_length();
        let coulomb = k_sq
            .iter()
            .map(|&q| {
                if q == 0.0 {
                    2.0 * PI * r_t * r_t
                } else {
                    let kabs = q.sqrt();
                    4.0 * PI * (1.0 - (kabs * r_t).cos()) / q
                }
            })
            .collect();
        Spectral {
            grid,
            fft: Fft3::new(n),
            k_even,
            k_odd,
            k_sq,
            coulomb,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    /// `|k|^2` on the lattice (FFT order).
    pub fn k_squared(&self) -> &[f64] {
        &self.k_sq
    }

    /// The wavevector of lattice index `idx` with Nyquist components zeroed.
    #[inline]
    pub fn k_odd_vec(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.grid.coords_of(idx);
        [self.k_odd[i], self.k_odd[j], self.k_odd[k]]
    }

    /// The wavevector of lattice index `idx` with the Nyquist value kept.
    #[inline]
    pub fn k_even_vec(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.grid.coords_of(idx);
        [self.k_even[i], self.k_even[j], self.k_even[k]]
    }

    pub fn coulomb_symbol(&self) -> &[f64] {
        &self.coulomb
    }

    pub fn forward(&self, psi: &Field) -> Vec<Complex64> {
        let mut data = psi.to_complex();
        self.fft.forward(&mut data);
        data
    }

    pub fn inverse(&self, mut data: Vec<Complex64>) -> Field {
        self.fft.inverse(&mut data);
        Field::from_complex(self.grid, &data)
    }

    fn check(&self, psi: &Field) -> Result<()> {
        if !psi.grid.same_as(&self.grid) {
            return Err(LabError::InvalidField("field grid does not match operator grid".into()));
        }
        psi.validate()
    }

    /// Applies a real symbol given as a function of the lattice index.
    pub fn apply_real_symbol(&self, psi: &Field, symbol: impl Fn(usize) -> f64) -> Field {
        let mut data = self.forward(psi);
        for (idx, z) in data.iter_mut().enumerate() {
            *z *= symbol(idx);
        }
        self.inverse(data)
    }

    pub fn apply_multiplier(&self, psi: &Field, mult: &Multiplier) -> Result<Field> {
        self.check(psi)?;
        if mult.symbol.len() != self.grid.len() {
            return Err(LabError::InvalidField("multiplier size does not match grid".into()));
        }
        let mut data = self.forward(psi);
        for (z, s) in data.iter_mut().zip(&mult.symbol) {
            *z *= s;
        }
        Ok(self.inverse(data))
    }

    #[inline]
    pub fn kinetic_symbol_at(&self, idx: usize, m: f64) -> f64 {
        let q = self.k_sq[idx];
        // sqrt(q + m^2) - m without cancellation for small q
        q / ((q + m * m).sqrt() + m)
    }

    pub fn kinetic_multiplier(&self, m: f64) -> Multiplier {
        Multiplier {
            symbol: (0..self.grid.len())
                .map(|i| Complex64::new(self.kinetic_symbol_at(i, m), 0.0))
                .collect(),
        }
    }

    /// `(sqrt(-Delta + m^2) - m) psi`.
    pub fn apply_kinetic(&self, psi: &Field, m: f64) -> Result<Field> {
        check_mass(m)?;
        self.check(psi)?;
        Ok(self.apply_real_symbol(psi, |i| self.kinetic_symbol_at(i, m)))
    }

    #[inline]
    pub fn boost_symbol_at(&self, idx: usize, v: [f64; 3]) -> f64 {
        let k = self.k_odd_vec(idx);
        -(v[0] * k[0] + v[1] * k[1] + v[2] * k[2])
    }

    /// `i v . grad psi` (symbol `-v.k`).
    pub fn apply_boost(&self, psi: &Field, v: [f64; 3]) -> Result<Field> {
        check_velocity(v)?;
        self.check(psi)?;
        Ok(self.apply_real_symbol(psi, |i| self.boost_symbol_at(i, v)))
    }

    /// Symbol of `sqrt(-Delta+m^2) - m + mu + i v.grad`.
    #[inline]
    pub fn linear_symbol_at(&self, idx: usize, m: f64, mu: f64, v: [f64; 3]) -> f64 {
        self.kinetic_symbol_at(idx, m) + mu + self.boost_symbol_at(idx, v)
    }

    /// `(sqrt(-Delta+m^2) - m + mu) psi + i v.grad psi` in one transform pair.
    pub fn apply_linear(&self, psi: &Field, m: f64, mu: f64, v: [f64; 3]) -> Field {
        self.apply_real_symbol(psi, |i| self.linear_symbol_at(i, m, mu, v))
    }

    /// Spectral gradient `(d_1 psi, d_2 psi, d_3 psi)`.
    pub fn gradient(&self, psi: &Field) -> [Field; 3] {
        let data = self.forward(psi);
        let mut out: Vec<Field> = Vec::with_capacity(3);
        for axis in 0..3 {
            let mut d = data.clone();
            for (idx, z) in d.iter_mut().enumerate() {
                let k = self.k_odd_vec(idx)[axis];
                *z *= Complex64::new(0.0, k);
            }
            out.push(self.inverse(d));
        }
        let mut it = out.into_iter();
        [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
    }

    /// Derivative along one axis.
    pub fn derivative(&self, psi: &Field, axis: usize) -> Field {
        let mut data = self.forward(psi);
        for (idx, z) in data.iter_mut().enumerate() {
            let k = self.k_odd_vec(idx)[axis];
            *z *= Complex64::new(0.0, k);
        }
        self.inverse(data)
    }

    /// `(1/|x|) * rho` with the kernel truncated at radius `L/2`.
    pub fn hartree_potential(&self, rho: &[f64]) -> Result<Vec<f64>> {
        if rho.len() != self.grid.len() {
            return Err(LabError::InvalidField("density size does not match grid".into()));
        }
        if rho.iter().any(|x| !x.is_finite()) {
            return Err(LabError::InvalidField("density has non-finite entries".into()));
        }
        Ok(self.hartree_pair(rho, None).0)
    }

    /// Coulomb potentials of two real densities with one complex transform
    /// pair: the kernel is real and even, so real and imaginary parts of the
    /// packed input stay separate.
    pub fn hartree_pair(&self, a: &[f64], b: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let mut data: Vec<Complex64> = match b {
            Some(b) => a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect(),
            None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        };
        self.fft.forward(&mut data);
        for (z, k) in data.iter_mut().zip(&self.coulomb) {
            *z *= *k;
        }
        self.fft.inverse(&mut data);
        let pa = data.iter().map(|z| z.re).collect();
        let pb = if b.is_some() {
            data.iter().map(|z| z.im).collect()
        } else {
            Vec::new()
        };
        (pa, pb)
    }

    /// `||psi||_{H^{1/2}}^2` via the symbol `(1 + |k|^2)^{1/2}`.
    pub fn h_half_sq(&self, psi: &Field) -> f64 {
        let data = self.forward(psi);
        let s: f64 = data
            .iter()
            .zip(&self.k_sq)
            .map(|(z, q)| (1.0 + q).sqrt() * z.norm_sqr())
            .sum();
        s * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// `<psi, |x - center| psi>` with the minimum-image distance.
    pub fn weighted_moment(&self, psi: &Field, center: [f64; 3]) -> f64 {
        let g = self.grid;
        let mut s = 0.0;
        for idx in 0..g.len() {
            let d = g.displacement(idx, center);
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            s += r * (psi.re[idx] * psi.re[idx] + psi.im[idx] * psi.im[idx]);
        }
        s * g.cell_volume()
    }

    pub fn norms(&self, psi: &Field, eps: f64) -> Norms {
        self.norms_about(psi, eps, [0.0; 3])
    }

    /// Norms with the weight `|x - center|` in the X-norm.
    pub fn norms_about(&self, psi: &Field, eps: f64, center: [f64; 3]) -> Norms {
        let l2 = psi.norm();
        let hh = self.h_half_sq(psi);
        let w = self.weighted_moment(psi, center);
        Norms {
            l2,
            h_half: hh.sqrt(),
            x_weight: (hh + eps * w).max(0.0).sqrt(),
        }
    }

    /// Sub-grid translation `out(x) = psi(x - a)` by Fourier phases. The
    /// Nyquist mode uses `cos(k a)` so real fields stay real.
    pub fn translate(&self, psi: &Field, a: [f64; 3]) -> Field {
        let n = self.grid.n();
        let phases: Vec<[Complex64; 3]> = (0..n)
            .map(|i| {
                let mut p = [Complex64::new(1.0, 0.0); 3];
                for ax in 0..3 {
                    let k = self.k_even[i];
                    p[ax] = if i == n / 2 {
                        Complex64::new((k * a[ax]).cos(), 0.0)
                    } else {
                        Complex64::from_polar(1.0, -k * a[ax])
                    };
                }
                p
            })
            .collect();
        let mut data = self.forward(psi);
        for (idx, z) in data.iter_mut().enumerate() {
            let (i, j, k) = self.grid.coords_of(idx);
            *z *= phases[i][0] * phases[j][1] * phases[k][2];
        }
        self.inverse(data)
    }

    /// `exp(-a . grad)` with the spectral derivative, i.e. translation by `a`
    /// with the Nyquist modes held fixed. Unlike [`Spectral::translate`] this
    /// is unitary and composes exactly (`shift(a) shift(b) = shift(a + b)`).
    pub fn shift(&self, psi: &Field, a: [f64; 3]) -> Field {
        let n = self.grid.n();
        let phases: Vec<[Complex64; 3]> = (0..n)
            .map(|i| {
                let mut p = [Complex64::new(1.0, 0.0); 3];
                for ax in 0..3 {
                    p[ax] = Complex64::from_polar(1.0, -self.k_odd[i] * a[ax]);
                }
                p
            })
            .collect();
        let mut data = self.forward(psi);
        for (idx, z) in data.iter_mut().enumerate() {
            let (i, j, k) = self.grid.coords_of(idx);
            *z *= phases[i][0] * phases[j][1] * phases[k][2];
        }
        self.inverse(data)
    }

    /// `exp(-i t s(k))` applied spectrally, for a real symbol `s`.
    pub fn propagate(&self, psi: &Field, t: f64, symbol: impl Fn(usize) -> f64) -> Field {
        let mut data = self.forward(psi);
        for (idx, z) in data.iter_mut().enumerate() {
            *z *= Complex64::from_polar(1.0, -t * symbol(idx));
        }
        self.inverse(data)
    }
}

pub(crate) fn check_mass(m: f64) -> Result<()> {
    if m.is_finite() && m > 0.0 {
        Ok(())
    } else {
        Err(LabError::ParameterDomain(format!("mass parameter m must be positive, got {m}")))
    }
}

pub(crate) fn check_velocity(v: [f64; 3]) -> Result<()> {
    let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if s < 1.0 {
        Ok(())
    } else {
        Err(LabError::ParameterDomain(format!("speed |v| = {s} must be below 1")))
    }
}

pub fn apply_kinetic(psi: &Field, m: f64) -> Result<Field> {
    Spectral::new(psi.grid).apply_kinetic(psi, m)
}

pub fn apply_boost(psi: &Field, v: [f64; 3]) -> Result<Field> {
    Spectral::new(psi.grid).apply_boost(psi, v)
}

/// Coulomb potential of the real part of `rho`, returned as a real field.
pub fn hartree_potential(rho: &Field) -> Result<Field> {
    if rho.im.iter().any(|&x| x != 0.0) {
        return Err(LabError::InvalidField("density must be a real field".into()));
    }
    let phi = Spectral::new(rho.grid).hartree_potential(&rho.re)?;
    Field::real(rho.grid, phi)
}

pub fn norms(psi: &Field, eps: f64) -> Norms {
    Spectral::new(psi.grid).norms(psi, eps)
}
