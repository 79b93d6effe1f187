//! Mass, momentum, energy, the action `E_{v,mu} = H_0 + mu N - v.P`, its
//! gradient and Hessian action, and the cubic remainder of the Hartree term.
//!
//! Inner products are the real pairing `<u, w> = int (u1 w1 + u2 w2)`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::Field;
use crate::spectral::{check_mass, check_velocity, Spectral};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValues {
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    pub action: f64,
}

/// The three pieces of the energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyTerms {
    /// `1/2 <psi, T psi>`
    pub kinetic: f64,
    /// `1/2 <psi, V psi>`
    pub potential: f64,
    /// `1/4 <Phi(|psi|^2), |psi|^2>`
    pub interaction: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential - self.interaction
    }
}

/// `N(psi) = 1/2 ||psi||^2`.
pub fn mass(psi: &Field) -> f64 {
    0.5 * psi.norm_sq()
}

/// `P(psi) = 1/2 <psi, J grad psi>`, evaluated on Fourier coefficients.
pub fn momentum(sp: &Spectral, psi: &Field) -> [f64; 3] {
    let data = sp.forward(psi);
    let mut p = [0.0; 3];
    for (idx, z) in data.iter().enumerate() {
        let k = sp.k_odd_vec(idx);
        let w = z.norm_sqr();
        p[0] += k[0] * w;
        p[1] += k[1] * w;
        p[2] += k[2] * w;
    }
    let g = sp.grid();
    let s = 0.5 * g.cell_volume() / g.len() as f64;
    [p[0] * s, p[1] * s, p[2] * s]
}

/// `<Phi(|psi|^2), |psi|^2>`.
pub fn hartree_pairing(sp: &Spectral, psi: &Field) -> f64 {
    let rho = psi.density();
    let (phi, _) = sp.hartree_pair(&rho, None);
    phi.iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>() * sp.grid().cell_volume()
}

pub fn energy_terms(sp: &Spectral, psi: &Field, potential: Option<&[f64]>, m: f64) -> Result<EnergyTerms> {
    check_mass(m)?;
    let h3 = sp.grid().cell_volume();
    let data = sp.forward(psi);
    let kin: f64 = data
        .iter()
        .enumerate()
        .map(|(i, z)| sp.kinetic_symbol_at(i, m) * z.norm_sqr())
        .sum::<f64>()
        * h3
        / sp.grid().len() as f64;
    let rho = psi.density();
    let pot = match potential {
        Some(v) => {
            if v.len() != rho.len() {
                return Err(LabError::InvalidField("potential size does not match grid".into()));
            }
            0.5 * v.iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>() * h3
        }
        None => 0.0,
    };
    let (phi, _) = sp.hartree_pair(&rho, None);
    let inter = 0.25 * phi.iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>() * h3;
    Ok(EnergyTerms {
        kinetic: 0.5 * kin,
        potential: pot,
        interaction: inter,
    })
}

/// `H_V(psi)`; `potential = None` means `V = 0`.
pub fn energy(sp: &Spectral, psi: &Field, potential: Option<&[f64]>, m: f64) -> Result<f64> {
    Ok(energy_terms(sp, psi, potential, m)?.total())
}

/// `E_{v,mu}(psi) = H_0 + mu N - v.P`.
pub fn action(sp: &Spectral, psi: &Field, v: [f64; 3], mu: f64, m: f64) -> Result<f64> {
    check_velocity(v)?;
    let h0 = energy(sp, psi, None, m)?;
    let p = momentum(sp, psi);
    Ok(h0 + mu * mass(psi) - (v[0] * p[0] + v[1] * p[1] + v[2] * p[2]))
}

pub fn values(sp: &Spectral, psi: &Field, potential: Option<&[f64]>, v: [f64; 3], mu: f64, m: f64) -> Result<FunctionalValues> {
    Ok(FunctionalValues {
        mass: mass(psi),
        momentum: momentum(sp, psi),
        energy: energy(sp, psi, potential, m)?,
        action: action(sp, psi, v, mu, m)?,
    })
}

/// `E'_{v,mu}(psi) = (T + mu) psi + i v.grad psi - Phi(|psi|^2) psi`.
pub fn action_gradient(sp: &Spectral, psi: &Field, v: [f64; 3], mu: f64, m: f64) -> Result<Field> {
    check_velocity(v)?;
    check_mass(m)?;
    let mut out = sp.apply_linear(psi, m, mu, v);
    let (phi, _) = sp.hartree_pair(&psi.density(), None);
    for i in 0..out.len() {
        out.re[i] -= phi[i] * psi.re[i];
        out.im[i] -= phi[i] * psi.im[i];
    }
    Ok(out)
}

/// Gradient of `H_V`: `T psi + V psi - Phi(|psi|^2) psi`.
pub fn energy_gradient(sp: &Spectral, psi: &Field, potential: Option<&[f64]>, m: f64) -> Result<Field> {
    let mut out = action_gradient(sp, psi, [0.0; 3], 0.0, m)?;
    if let Some(v) = potential {
        for i in 0..out.len() {
            out.re[i] += v[i] * psi.re[i];
            out.im[i] += v[i] * psi.im[i];
        }
    }
    Ok(out)
}

/// Matrix-free Hessian `L_{v,mu}` of the action at a fixed state `phi`.
#[derive(Clone, Debug)]
pub struct Hessian<'a> {
    sp: &'a Spectral,
    phi: Field,
    self_potential: Vec<f64>,
    v: [f64; 3],
    mu: f64,
    m: f64,
}

impl<'a> Hessian<'a> {
    pub fn new(sp: &'a Spectral, phi: &Field, v: [f64; 3], mu: f64, m: f64) -> Result<Self> {
        check_velocity(v)?;
        check_mass(m)?;
        let (pot, _) = sp.hartree_pair(&phi.density(), None);
        Ok(Hessian {
            sp,
            phi: phi.clone(),
            self_potential: pot,
            v,
            mu,
            m,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        self.sp
    }

    pub fn state(&self) -> &Field {
        &self.phi
    }

    /// `Phi(|phi|^2)`.
    pub fn self_potential(&self) -> &[f64] {
        &self.self_potential
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn velocity(&self) -> [f64; 3] {
        self.v
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// `L xi = (T + mu + i v.grad - Phi) xi - 2 Phi(phi . xi) phi`.
    pub fn apply(&self, xi: &Field) -> Field {
        let mut out = self.sp.apply_linear(xi, self.m, self.mu, self.v);
        let cross = self.phi.pointwise_dot(xi);
        let (pc, _) = self.sp.hartree_pair(&cross, None);
        for i in 0..out.len() {
            out.re[i] -= self.self_potential[i] * xi.re[i] + 2.0 * pc[i] * self.phi.re[i];
            out.im[i] -= self.self_potential[i] * xi.im[i] + 2.0 * pc[i] * self.phi.im[i];
        }
        out
    }

    /// Applies two Hessian actions sharing the Coulomb transform.
    pub fn apply_pair(&self, a: &Field, b: &Field) -> (Field, Field) {
        let mut oa = self.sp.apply_linear(a, self.m, self.mu, self.v);
        let mut ob = self.sp.apply_linear(b, self.m, self.mu, self.v);
        let ca = self.phi.pointwise_dot(a);
        let cb = self.phi.pointwise_dot(b);
        let (pa, pb) = self.sp.hartree_pair(&ca, Some(&cb));
        let w = &self.self_potential;
        for i in 0..oa.len() {
            oa.re[i] -= w[i] * a.re[i] + 2.0 * pa[i] * self.phi.re[i];
            oa.im[i] -= w[i] * a.im[i] + 2.0 * pa[i] * self.phi.im[i];
            ob.re[i] -= w[i] * b.re[i] + 2.0 * pb[i] * self.phi.re[i];
            ob.im[i] -= w[i] * b.im[i] + 2.0 * pb[i] * self.phi.im[i];
        }
        (oa, ob)
    }

    /// Restriction to real fields: `L11 = T + mu - Phi - 2 Phi(phi1 .) phi1`
    /// when `phi` is real and `v = 0`.
    pub fn apply_l11(&self, u: &[f64]) -> Vec<f64> {
        let f = Field {
            grid: self.phi.grid,
            re: u.to_vec(),
            im: vec![0.0; u.len()],
        };
        self.apply(&f).re
    }

    /// `L22 = T + mu - Phi` acting on the imaginary component.
    pub fn apply_l22(&self, u: &[f64]) -> Vec<f64> {
        let f = Field {
            grid: self.phi.grid,
            re: vec![0.0; u.len()],
            im: u.to_vec(),
        };
        let mut out = self.sp.apply_linear(&f, self.m, self.mu, [0.0; 3]);
        for i in 0..u.len() {
            out.im[i] -= self.self_potential[i] * u[i];
        }
        out.im
    }
}

/// One-shot Hessian action.
pub fn hessian_apply(sp: &Spectral, phi: &Field, v: [f64; 3], mu: f64, m: f64, xi: &Field) -> Result<Field> {
    Ok(Hessian::new(sp, phi, v, mu, m)?.apply(xi))
}

/// `M_phi(xi) = -(Phi(|xi|^2) phi + 2 Phi(phi . xi) xi + Phi(|xi|^2) xi)`,
/// the part of `H_0'(phi + xi) - H_0'(phi)` beyond first order in `xi`.
pub fn nonlinear_remainder(sp: &Spectral, phi: &Field, xi: &Field) -> Result<Field> {
    phi.check_same_grid(xi)?;
    let cross = phi.pointwise_dot(xi);
    let (p_xi, p_cross) = sp.hartree_pair(&xi.density(), Some(&cross));
    let mut out = Field::zeros(phi.grid);
    for i in 0..out.len() {
        out.re[i] = -(p_xi[i] * (phi.re[i] + xi.re[i]) + 2.0 * p_cross[i] * xi.re[i]);
        out.im[i] = -(p_xi[i] * (phi.im[i] + xi.im[i]) + 2.0 * p_cross[i] * xi.im[i]);
    }
    Ok(out)
}
