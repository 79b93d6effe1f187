//! The symplectic form, the matrix of the form on the tangent frame, and the
//! skew-orthogonal decomposition onto the soliton manifold.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::family::{Family, Profile};
use crate::field::Field;
use crate::groundstate::FamilyScalars;
use crate::linalg;
use crate::spectral::Spectral;

/// `omega(u, w) = int (u2 w1 - u1 w2) = -<u, J w>`.
pub fn symplectic_form(u: &Field, w: &Field) -> f64 {
    let mut s = 0.0;
    for i in 0..u.len() {
        s += u.im[i] * w.re[i] - u.re[i] * w.im[i];
    }
    s * u.grid.cell_volume()
}

/// `Omega_jk = omega(z_j, z_k)` for a frame of eight vectors.
pub fn frame_matrix(frame: &[Field]) -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    for j in 0..8 {
        for k in (j + 1)..8 {
            let w = symplectic_form(&frame[j], &frame[k]);
            m[j][k] = w;
            m[k][j] = -w;
        }
    }
    m
}

fn to_dmatrix(a: &[[f64; 8]; 8]) -> DMatrix<f64> {
    DMatrix::from_fn(8, 8, |i, j| a[i][j])
}

fn max_abs8(a: &[[f64; 8]; 8]) -> f64 {
    a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

/// Positions allowed to be nonzero when `v` points along `axis`.
fn aligned_pattern(axis: usize) -> [[bool; 8]; 8] {
    let mut p = [[false; 8]; 8];
    let mut set = |j: usize, k: usize| {
        p[j][k] = true;
        p[k][j] = true;
    };
    for j in 0..3 {
        set(j, 3 + j);
    }
    set(axis, 7);
    set(3 + axis, 6);
    set(6, 7);
    p
}

/// The matrix of the symplectic form on the tangent frame, with its
/// determinant and the blocks `g, q, gamma` of the inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaMatrix {
    pub entries: [[f64; 8]; 8],
    pub det: f64,
    pub g: [[f64; 3]; 3],
    pub q: [f64; 3],
    pub gamma_scalar: f64,
}

impl OmegaMatrix {
    /// Computes the entries from the frame and the inverse blocks from the
    /// `tau, n_v, n_mu` blocks read off the entries.
    pub fn from_frame(frame: &[Field]) -> Result<Self> {
        if frame.len() != 8 {
            return Err(LabError::ContractViolation(format!("frame has {} vectors, expected 8", frame.len())));
        }
        Self::from_entries(frame_matrix(frame))
    }

    pub fn from_entries(entries: [[f64; 8]; 8]) -> Result<Self> {
        let det = to_dmatrix(&entries).determinant();
        let mut out = OmegaMatrix {
            entries,
            det,
            g: [[0.0; 3]; 3],
            q: [0.0; 3],
            gamma_scalar: 0.0,
        };
        let (g, q, gamma) = inverse_blocks(&out.tau(), &out.n_v(), out.n_mu())?;
        out.g = g;
        out.q = q;
        out.gamma_scalar = gamma;
        Ok(out)
    }

    /// The block form built from family scalars.
    pub fn from_scalars(fs: &FamilyScalars) -> Result<Self> {
        let mut e = [[0.0; 8]; 8];
        for j in 0..3 {
            for k in 0..3 {
                e[j][3 + k] = fs.tau[j][k];
                e[3 + k][j] = -fs.tau[j][k];
            }
            e[j][7] = -fs.n_v[j];
            e[7][j] = fs.n_v[j];
            e[3 + j][6] = fs.n_v[j];
            e[6][3 + j] = -fs.n_v[j];
        }
        e[6][7] = -fs.n_mu;
        e[7][6] = fs.n_mu;
        Self::from_entries(e)
    }

    /// `tau_jk = Omega_{j, 3+k}`
    pub fn tau(&self) -> [[f64; 3]; 3] {
        let mut t = [[0.0; 3]; 3];
        for (j, row) in t.iter_mut().enumerate() {
            for (k, x) in row.iter_mut().enumerate() {
                *x = self.entries[j][3 + k];
            }
        }
        t
    }

    pub fn n_v(&self) -> [f64; 3] {
        [-self.entries[0][7], -self.entries[1][7], -self.entries[2][7]]
    }

    pub fn n_mu(&self) -> f64 {
        -self.entries[6][7]
    }

    pub fn max_abs(&self) -> f64 {
        max_abs8(&self.entries)
    }

    /// `max |Omega + Omega^T|`
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for j in 0..8 {
            for k in 0..8 {
                d = d.max((self.entries[j][k] + self.entries[k][j]).abs());
            }
        }
        d
    }

    pub fn inverse_direct(&self) -> Result<[[f64; 8]; 8]> {
        let inv = to_dmatrix(&self.entries)
            .try_inverse()
            .ok_or(LabError::Degeneracy { det: self.det, kappa: 0.0 })?;
        let mut out = [[0.0; 8]; 8];
        for (j, row) in out.iter_mut().enumerate() {
            for (k, x) in row.iter_mut().enumerate() {
                *x = inv[(j, k)];
            }
        }
        Ok(out)
    }

    /// The inverse assembled from `g, q, gamma`.
    pub fn inverse_from_blocks(&self) -> [[f64; 8]; 8] {
        let mut e = [[0.0; 8]; 8];
        for j in 0..3 {
            for k in 0..3 {
                e[j][3 + k] = -self.g[j][k];
                e[3 + j][k] = self.g[j][k];
            }
            e[j][7] = self.q[j];
            e[3 + j][6] = -self.q[j];
            e[6][3 + j] = self.q[j];
            e[7][j] = -self.q[j];
        }
        e[6][7] = -self.gamma_scalar;
        e[7][6] = self.gamma_scalar;
        e
    }

    /// `max |Omega * inv - I|` for the block inverse.
    pub fn identity_defect(&self) -> f64 {
        let inv = self.inverse_from_blocks();
        let mut d: f64 = 0.0;
        for j in 0..8 {
            for k in 0..8 {
                let mut s = 0.0;
                for l in 0..8 {
                    s += self.entries[j][l] * inv[l][k];
                }
                let id = if j == k { 1.0 } else { 0.0 };
                d = d.max((s - id).abs());
            }
        }
        d
    }

    /// `max |inv_blocks - inv_direct| / max |inv_direct|`
    pub fn block_inverse_defect(&self) -> Result<f64> {
        let direct = self.inverse_direct()?;
        let blocks = self.inverse_from_blocks();
        let mut d: f64 = 0.0;
        for j in 0..8 {
            for k in 0..8 {
                d = d.max((direct[j][k] - blocks[j][k]).abs());
            }
        }
        Ok(d / max_abs8(&direct))
    }

    /// Largest entry outside the aligned sparsity pattern, relative to
    /// `max |Omega|`, and the number of positions checked.
    pub fn aligned_pattern_defect(&self, axis: usize) -> (f64, usize) {
        let pat = aligned_pattern(axis);
        let scale = self.max_abs();
        let mut d: f64 = 0.0;
        let mut count = 0;
        for j in 0..8 {
            for k in 0..8 {
                if j != k && !pat[j][k] {
                    d = d.max(self.entries[j][k].abs());
                    count += 1;
                }
            }
        }
        (d / scale, count)
    }

    /// `(tau_bb tau_cc)^2 (tau_aa n_mu + n_va^2)^2` for `v` along axis `a`.
    pub fn aligned_det(&self, axis: usize) -> f64 {
        let t = self.tau();
        let n_v = self.n_v();
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        let p = t[b][b] * t[c][c];
        let s = t[axis][axis] * self.n_mu() + n_v[axis] * n_v[axis];
        p * p * s * s
    }

    pub fn check_nondegenerate(&self, kappa_min: f64) -> Result<()> {
        if !(self.det >= kappa_min) {
            return Err(LabError::Degeneracy {
                det: self.det,
                kappa: kappa_min,
            });
        }
        Ok(())
    }
}

/// `g = (tau + n_v n_v^T / n_mu)^{-1}`, `q = (tau n_mu + n_v n_v^T)^{-1} n_v`,
/// `gamma = (-1 + n_v^T (tau n_mu + n_v n_v^T)^{-1} n_v) / n_mu`.
pub fn inverse_blocks(tau: &[[f64; 3]; 3], n_v: &[f64; 3], n_mu: f64) -> Result<([[f64; 3]; 3], [f64; 3], f64)> {
    if n_mu == 0.0 {
        return Err(LabError::Degeneracy { det: 0.0, kappa: 0.0 });
    }
    let mut a = [[0.0; 3]; 3];
    for j in 0..3 {
        for k in 0..3 {
            a[j][k] = tau[j][k] * n_mu + n_v[j] * n_v[k];
        }
    }
    let a_inv = linalg::mat3_inverse(a)?;
    let mut g = [[0.0; 3]; 3];
    for j in 0..3 {
        for k in 0..3 {
            g[j][k] = a_inv[j][k] * n_mu;
        }
    }
    let q = linalg::mat3_vec(&a_inv, n_v);
    let gamma = (-1.0 + linalg::dot3(n_v, &q)) / n_mu;
    Ok((g, q, gamma))
}

/// Computes `Omega` on a frame and rejects it when `det < kappa_min`.
pub fn omega_matrix(frame: &[Field], kappa_min: f64) -> Result<OmegaMatrix> {
    let om = OmegaMatrix::from_frame(frame)?;
    om.check_nondegenerate(kappa_min)?;
    Ok(om)
}

/// Projection along the frame onto its skew-orthogonal complement:
/// `xi -> xi + sum_k c_k z_k` with `c = Omega^{-1} b`, `b_j = omega(xi, z_j)`.
pub struct SkewProjector<'a> {
    frame: &'a [Field],
    inverse: [[f64; 8]; 8],
}

impl<'a> SkewProjector<'a> {
    pub fn new(frame: &'a [Field], omega: &[[f64; 8]; 8]) -> Result<Self> {
        let inverse = OmegaMatrix::from_entries(*omega)?.inverse_direct()?;
        Ok(SkewProjector { frame, inverse })
    }

    pub fn constraints(&self, xi: &Field) -> [f64; 8] {
        let mut b = [0.0; 8];
        for (j, z) in self.frame.iter().enumerate() {
            b[j] = symplectic_form(xi, z);
        }
        b
    }

    pub fn max_constraint(&self, xi: &Field) -> f64 {
        self.constraints(xi).iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn project(&self, xi: &Field) -> Field {
        let b = self.constraints(xi);
        let mut out = xi.clone();
        for k in 0..8 {
            let c: f64 = (0..8).map(|j| self.inverse[k][j] * b[j]).sum();
            out.axpy(c, &self.frame[k]);
        }
        out
    }
}

/// Soliton coordinates `zeta = (y, v, theta, mu)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub y: [f64; 3],
    pub v: [f64; 3],
    pub theta: f64,
    pub mu: f64,
}

impl SolitonParams {
    pub fn at_rest(mu: f64) -> Self {
        SolitonParams {
            y: [0.0; 3],
            v: [0.0; 3],
            theta: 0.0,
            mu,
        }
    }

    /// Coordinates in frame order `(y, v, theta, mu)`.
    pub fn to_array(&self) -> [f64; 8] {
        [self.y[0], self.y[1], self.y[2], self.v[0], self.v[1], self.v[2], self.theta, self.mu]
    }

    pub fn from_array(a: &[f64; 8]) -> Self {
        SolitonParams {
            y: [a[0], a[1], a[2]],
            v: [a[3], a[4], a[5]],
            theta: a[6],
            mu: a[7],
        }
    }

    /// Phase reduced to `[0, 2 pi)`.
    pub fn wrapped(mut self) -> Self {
        self.theta = self.theta.rem_euclid(TAU);
        if self.theta >= TAU {
            self.theta = 0.0;
        }
        self
    }

    /// Componentwise distance, with the phase compared modulo `2 pi`.
    pub fn distance(&self, other: &SolitonParams) -> [f64; 8] {
        let a = self.to_array();
        let b = other.to_array();
        let mut d = [0.0; 8];
        for j in 0..8 {
            d[j] = (a[j] - b[j]).abs();
        }
        let dt = (self.theta - other.theta).rem_euclid(TAU);
        d[6] = dt.min(TAU - dt);
        d
    }

    /// Checks `|v| < r_limit` and `mu` in `[mu_min, mu_max]`.
    pub fn validate(&self, r_limit: f64, mu_range: [f64; 2]) -> Result<()> {
        let s = linalg::norm3(&self.v);
        if !(s < r_limit) || !(self.mu >= mu_range[0] && self.mu <= mu_range[1]) || !self.theta.is_finite() {
            return Err(LabError::ParameterDomain(format!(
                "soliton parameters |v| = {s}, mu = {} outside |v| < {r_limit}, mu in [{}, {}]",
                self.mu, mu_range[0], mu_range[1]
            )));
        }
        Ok(())
    }
}

/// `e^{-theta J} f(x - y)`
pub fn to_lab_frame(sp: &Spectral, f: &Field, y: [f64; 3], theta: f64) -> Field {
    sp.shift(f, y).rotate_phase(theta)
}

/// `e^{theta J} f(x + y)`, the inverse of [`to_lab_frame`].
pub fn to_soliton_frame(sp: &Spectral, f: &Field, y: [f64; 3], theta: f64) -> Field {
    sp.shift(&f.rotate_phase(-theta), [-y[0], -y[1], -y[2]])
}

/// The soliton `phi_zeta` from the family table.
pub fn soliton(sp: &Spectral, family: &Family, zeta: &SolitonParams) -> Result<Field> {
    let p = family.profile(sp, zeta.v, zeta.mu)?;
    Ok(to_lab_frame(sp, &p.phi, zeta.y, zeta.theta))
}

/// Real inner product whose quadratic form is the squared X-norm,
/// `<a, (1 - Delta)^{1/2} b> + eps <a, |x - center| b>`.
pub fn x_inner(sp: &Spectral, a: &Field, b: &Field, eps: f64, center: [f64; 3]) -> f64 {
    let fa = sp.forward(a);
    let fb = sp.forward(b);
    let ksq = sp.k_squared();
    let g = sp.grid();
    let mut s = 0.0;
    for i in 0..fa.len() {
        s += (1.0 + ksq[i]).sqrt() * (fa[i].re * fb[i].re + fa[i].im * fb[i].im);
    }
    let mut w = 0.0;
    if eps != 0.0 {
        for idx in 0..g.len() {
            let d = g.displacement(idx, center);
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            w += r * (a.re[idx] * b.re[idx] + a.im[idx] * b.im[idx]);
        }
    }
    s * g.cell_volume() / g.len() as f64 + eps * w * g.cell_volume()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionOptions {
    /// convergence when `max_j |G_j| < tol * ||psi||^2`
    pub tol: f64,
    pub max_steps: usize,
    pub damping: f64,
    pub damped_steps: usize,
    /// step of the finite differences of the frame in `(v, mu)`
    pub fd_step: f64,
}

impl Default for DecompositionOptions {
    fn default() -> Self {
        DecompositionOptions {
            tol: 1e-9,
            max_steps: 25,
            damping: 0.5,
            damped_steps: 2,
            fd_step: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub params: SolitonParams,
    /// `xi = e^{theta J} psi(. + y) - phi_{v,mu}`, in the soliton frame
    pub residual_field: Field,
    /// `max_j |omega(xi, z_j)|`
    pub constraint_norm: f64,
    pub steps: usize,
    /// `max_j |G_j|` before each step and after the last one
    pub history: Vec<f64>,
    /// the interpolated profile at the returned `(v, mu)`
    pub profile: Profile,
}

fn constraints_of(xi: &Field, frame: &[Field]) -> [f64; 8] {
    let mut g = [0.0; 8];
    for j in 0..8 {
        g[j] = symplectic_form(xi, &frame[j]);
    }
    g
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Parameter `p` (index into `(v1, v2, v3, mu)`) shifted by `h`.
fn shifted(v: [f64; 3], mu: f64, p: usize, h: f64) -> ([f64; 3], f64) {
    let mut v = v;
    let mut mu = mu;
    if p < 3 {
        v[p] += h;
    } else {
        mu += h;
    }
    (v, mu)
}

/// Finite differences of the `v`- and `mu`-frame vectors along parameter `p`,
/// central when both neighbours lie in the table.
fn frame_derivative(sp: &Spectral, family: &Family, v: [f64; 3], mu: f64, p: usize, h: f64) -> Result<[Field; 4]> {
    let (vp, mp) = shifted(v, mu, p, h);
    let (vm, mm) = shifted(v, mu, p, -h);
    let (a, b, step) = match (family.contains(vp, mp), family.contains(vm, mm)) {
        (true, true) => (family.profile(sp, vp, mp)?, family.profile(sp, vm, mm)?, 2.0 * h),
        (true, false) => (family.profile(sp, vp, mp)?, family.profile(sp, v, mu)?, h),
        (false, true) => (family.profile(sp, v, mu)?, family.profile(sp, vm, mm)?, h),
        (false, false) => return Err(LabError::DomainExit(format!("no room for a difference step at v={v:?}, mu={mu}"))),
    };
    let d = |j: usize| {
        let mut f = a.frame[j].sub(&b.frame[j]);
        f.scale(1.0 / step);
        f
    };
    Ok([d(3), d(4), d(5), d(7)])
}

/// Newton iteration for `G_j(zeta) = omega(psi - phi_zeta, z_{j,zeta}) = 0`.
pub fn skew_decompose(
    sp: &Spectral,
    psi: &Field,
    guess: &SolitonParams,
    family: &Family,
    opts: &DecompositionOptions,
) -> Result<Decomposition> {
    let scale = psi.norm_sq();
    let target = opts.tol * scale;
    let mut zeta = guess.to_array();
    let mut history = Vec::new();
    for step in 0..=opts.max_steps {
        let v = [zeta[3], zeta[4], zeta[5]];
        let mu = zeta[7];
        let prof = family.profile(sp, v, mu)?;
        let psit = to_soliton_frame(sp, psi, [zeta[0], zeta[1], zeta[2]], zeta[6]);
        let xi = psit.sub(&prof.phi);
        let g = constraints_of(&xi, &prof.frame);
        let gmax = max_abs(&g);
        history.push(gmax);
        if gmax < target {
            let params = SolitonParams::from_array(&zeta).wrapped();
            return Ok(Decomposition {
                params,
                residual_field: xi,
                constraint_norm: gmax,
                steps: step,
                history,
                profile: prof,
            });
        }
        if step == opts.max_steps || !gmax.is_finite() {
            break;
        }
        // Jacobian dG_j / dzeta_k
        let mut jac = DMatrix::<f64>::zeros(8, 8);
        let grad = sp.gradient(&psit);
        let jpsi = psit.apply_j();
        for j in 0..8 {
            for k in 0..3 {
                jac[(j, k)] = symplectic_form(&grad[k], &prof.frame[j]);
            }
            jac[(j, 6)] = symplectic_form(&jpsi, &prof.frame[j]);
        }
        // v and mu columns: -omega(z_p, z_j) + omega(xi, d_p z_j)
        let params = [3usize, 4, 5, 7];
        for (pi, &p) in params.iter().enumerate() {
            let zp = &prof.frame[p];
            let dfr = frame_derivative(sp, family, v, mu, pi, opts.fd_step)?;
            for j in 0..8 {
                let dz = match j {
                    0..=2 => sp.derivative(zp, j),
                    6 => zp.apply_j(),
                    3..=5 => dfr[j - 3].clone(),
                    _ => dfr[3].clone(),
                };
                jac[(j, p)] = -symplectic_form(zp, &prof.frame[j]) + symplectic_form(&xi, &dz);
            }
        }
        let rhs = DVector::from_iterator(8, g.iter().map(|x| -x));
        let delta = linalg::solve_dense(&jac, &rhs)?;
        let damp = if step < opts.damped_steps { opts.damping } else { 1.0 };
        for k in 0..8 {
            zeta[k] += damp * delta[k];
        }
        log::debug!("skew decomposition step {step}: max|G| = {gmax:.3e}");
    }
    Err(LabError::DecompositionLost {
        steps: opts.max_steps,
        constraint: history.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    /// weight of the `|x|` term in the X-norm
    pub eps: f64,
    /// largest admissible `||psi - phi_zeta||_X`
    pub threshold: f64,
    pub max_steps: usize,
    pub step_tol: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            eps: 0.0,
            threshold: 0.5,
            max_steps: 40,
            step_tol: 1e-11,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub params: SolitonParams,
    /// `||psi - phi_zeta||_X`
    pub distance: f64,
    pub steps: usize,
}

/// Center of a periodic density from the phase of its first Fourier mode
/// along each axis.
pub fn periodic_centroid(f: &Field) -> [f64; 3] {
    let g = f.grid;
    let k1 = TAU / g.box_length();
    let rho = f.density();
    let mut out = [0.0; 3];
    for (a, o) in out.iter_mut().enumerate() {
        let mut s = num_complex::Complex64::new(0.0, 0.0);
        for idx in 0..g.len() {
            let (i, j, k) = g.coords_of(idx);
            let c = [i, j, k][a];
            let x = g.coordinate(c);
            s += rho[idx] * num_complex::Complex64::from_polar(1.0, k1 * x);
        }
        *o = if s.norm() > 0.0 { s.arg() / k1 } else { 0.0 };
    }
    out
}

/// Minimizes `||psi - phi_zeta||_X` over `zeta`: `y` from the periodic
/// centroid, `theta` from the complex pairing with the profile, then
/// Gauss-Newton in all eight coordinates.
pub fn orthogonal_project(
    sp: &Spectral,
    psi: &Field,
    family: &Family,
    start: Option<&SolitonParams>,
    opts: &ProjectionOptions,
) -> Result<Projection> {
    let mid_mu = 0.5 * (family.mus()[0] + family.mus().last().unwrap());
    let (v0, mu0) = match start {
        Some(s) => (s.v, s.mu),
        None => ([0.0; 3], mid_mu),
    };
    let y0 = periodic_centroid(psi);
    let p0 = family.profile(sp, v0, mu0)?;
    let shifted = sp.shift(&p0.phi, y0);
    // <phi, psi> in the complex pairing: sum conj(phi) psi
    let (mut cr, mut ci) = (0.0, 0.0);
    for i in 0..psi.len() {
        cr += shifted.re[i] * psi.re[i] + shifted.im[i] * psi.im[i];
        ci += shifted.re[i] * psi.im[i] - shifted.im[i] * psi.re[i];
    }
    let theta0 = ci.atan2(cr);
    let mut zeta = [y0[0], y0[1], y0[2], v0[0], v0[1], v0[2], theta0, mu0];
    let mut steps = 0;
    for step in 0..opts.max_steps {
        steps = step + 1;
        let v = [zeta[3], zeta[4], zeta[5]];
        let prof = family.profile(sp, v, zeta[7])?;
        let psit = to_soliton_frame(sp, psi, [zeta[0], zeta[1], zeta[2]], zeta[6]);
        let r = psit.sub(&prof.phi);
        let grad = sp.gradient(&psit);
        let [g0, g1, g2] = grad;
        let cols = [
            g0,
            g1,
            g2,
            prof.frame[3].scaled(-1.0),
            prof.frame[4].scaled(-1.0),
            prof.frame[5].scaled(-1.0),
            psit.apply_j(),
            prof.frame[7].scaled(-1.0),
        ];
        let mut a = DMatrix::<f64>::zeros(8, 8);
        let mut b = DVector::<f64>::zeros(8);
        for i in 0..8 {
            b[i] = -x_inner(sp, &cols[i], &r, opts.eps, [0.0; 3]);
            for j in i..8 {
                let x = x_inner(sp, &cols[i], &cols[j], opts.eps, [0.0; 3]);
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        let delta = linalg::solve_dense(&a, &b)?;
        let mut next = zeta;
        for k in 0..8 {
            next[k] += delta[k];
        }
        // keep (v, mu) inside the table
        if !family.contains([next[3], next[4], next[5]], next[7]) {
            let mut t = 1.0;
            while t > 1e-3 && !family.contains([zeta[3] + t * delta[3], zeta[4] + t * delta[4], zeta[5] + t * delta[5]], zeta[7] + t * delta[7]) {
                t *= 0.5;
            }
            for k in 0..8 {
                next[k] = zeta[k] + t * delta[k];
            }
        }
        zeta = next;
        let size = delta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if size < opts.step_tol {
            break;
        }
    }
    // distance at the final point
    let prof = family.profile(sp, [zeta[3], zeta[4], zeta[5]], zeta[7])?;
    let r = to_soliton_frame(sp, psi, [zeta[0], zeta[1], zeta[2]], zeta[6]).sub(&prof.phi);
    let distance = x_inner(sp, &r, &r, opts.eps, [0.0; 3]).max(0.0).sqrt();
    if distance > opts.threshold {
        return Err(LabError::NotNearManifold {
            distance,
            threshold: opts.threshold,
        });
    }
    Ok(Projection {
        params: SolitonParams::from_array(&zeta).wrapped(),
        distance,
        steps,
    })
}
