//! Ground states `phi_{v,mu}` of `E_{v,mu}`, their tangent frames, family
//! scalars and decay rates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::Field;
use crate::functionals::{self, Hessian};
use crate::grid::Grid;
use crate::linalg::{self, Deflation};
use crate::spectral::{check_mass, check_velocity, Spectral};
use crate::symmetry::{self, LatticeSymmetry};
use crate::symplectic::symplectic_form;

/// Printed upper bound on the critical mass.
pub const CRITICAL_MASS_UPPER: f64 = 1.4;
/// Printed lower bound on the critical mass.
pub const CRITICAL_MASS_LOWER: f64 = 2.0 / std::f64::consts::PI;

/// `mu_l(|v|) = (1 - sqrt(1 - |v|^2)) m`.
pub fn mu_lower_bound(v: [f64; 3], m: f64) -> Result<f64> {
    check_velocity(v)?;
    check_mass(m)?;
    let s2 = linalg::dot3(&v, &v);
    // 1 - sqrt(1 - s2) written without cancellation
    Ok(m * s2 / (1.0 + (1.0 - s2).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// target for `||E'(phi)|| / ||phi||`
    pub tol: f64,
    pub max_iter: usize,
    /// largest admissible boundary amplitude relative to the peak
    pub boundary_tol: f64,
    /// symmetrize boosted iterates every this many iterations
    pub symmetrize_every: usize,
    /// largest speed increment per continuation step
    pub continuation_step: f64,
    /// required gap `mu - mu_l(|v|)`, in units of `m`
    pub mu_margin: f64,
    pub max_speed: f64,
    /// standard deviation of the Gaussian seed
    pub seed_width: f64,
    /// tolerance of intermediate continuation solves
    pub continuation_tol: f64,
    /// relative tolerance of the tangent-frame linear solves
    pub linear_tol: f64,
    pub linear_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 3000,
            boundary_tol: 1e-6,
            symmetrize_every: 10,
            continuation_step: 0.05,
            mu_margin: 0.05,
            max_speed: 0.6,
            seed_width: 2.0,
            continuation_tol: 1e-7,
            linear_tol: 1e-11,
            linear_max_iter: 600,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub field: Field,
    pub v: [f64; 3],
    pub mu: f64,
    pub m: f64,
    /// `||E'_{v,mu}(phi)|| / ||phi||`
    pub residual: f64,
    pub decay_rate: Option<f64>,
    pub mass_n: f64,
    pub boundary_ratio: f64,
    pub iterations: usize,
    /// description of the seed the branch was continued from
    pub seed: String,
}

impl GroundState {
    pub fn grid(&self) -> Grid {
        self.field.grid
    }

    pub fn near_critical_mass(&self) -> bool {
        self.mass_n >= CRITICAL_MASS_LOWER
    }
}

fn gaussian_seed(grid: Grid, width: f64) -> Field {
    let a = 0.5 / (width * width);
    Field::from_fn(grid, |p| {
        Complex64::new((-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) * a).exp(), 0.0)
    })
}

/// Largest amplitude on the outer faces of the box relative to the peak.
pub fn boundary_ratio(f: &Field) -> f64 {
    let g = f.grid;
    let mut b: f64 = 0.0;
    for idx in 0..g.len() {
        let (i, j, k) = g.coords_of(idx);
        if i == 0 || j == 0 || k == 0 {
            b = b.max(f.re[idx].hypot(f.im[idx]));
        }
    }
    b / f.max_abs()
}

fn check_parameters(v: [f64; 3], mu: f64, m: f64, opts: &SolverOptions) -> Result<()> {
    check_mass(m)?;
    check_velocity(v)?;
    let speed = linalg::norm3(&v);
    if speed > opts.max_speed + 1e-12 {
        return Err(LabError::ParameterDomain(format!(
            "speed {speed} exceeds the configured limit {}",
            opts.max_speed
        )));
    }
    let mul = mu_lower_bound(v, m)?;
    if !(mu > mul + opts.mu_margin * m) {
        return Err(LabError::ParameterDomain(format!(
            "mu = {mu} must exceed mu_l(|v|) + margin = {}",
            mul + opts.mu_margin * m
        )));
    }
    Ok(())
}

/// Rotates the phase so that `<J phi, seed> = 0` and `<phi, seed> > 0`.
fn fix_phase(phi: &Field, seed: &Field) -> Field {
    let a = phi.dot(seed);
    let b = phi.apply_j().dot(seed);
    // complex pairing int seed * phi = a + i b for real seeds
    phi.rotate_phase(-b.atan2(a))
}

struct IterationOutcome {
    field: Field,
    residual: f64,
    iterations: usize,
}

/// Petviashvili iteration `phi <- M^{3/2} A^{-1} [Phi(|phi|^2) phi]` with
/// `A = T + mu + i v.grad` and `M = <phi, A phi> / <phi, Phi phi>`.
fn petviashvili(
    sp: &Spectral,
    seed: Field,
    v: [f64; 3],
    mu: f64,
    m: f64,
    tol: f64,
    max_iter: usize,
    group: &[LatticeSymmetry],
    symmetrize_every: usize,
    force_real: bool,
) -> Result<IterationOutcome> {
    let min_symbol = (0..sp.grid().len())
        .map(|i| sp.linear_symbol_at(i, m, mu, v))
        .fold(f64::INFINITY, f64::min);
    if min_symbol <= 0.0 {
        return Err(LabError::ParameterDomain(format!(
            "resolvent symbol is not positive (min {min_symbol:.3e})"
        )));
    }
    let mut phi = symmetry::symmetrize(&seed, group);
    let mut damping = 1.0;
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut res = f64::INFINITY;
    for it in 0..max_iter {
        let rho = phi.density();
        let (pot, _) = sp.hartree_pair(&rho, None);
        let nl = phi.mul_real(&pot);
        let a_phi = sp.apply_linear(&phi, m, mu, v);
        let norm = phi.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(LabError::solver("ground-state iteration (collapsed iterate)", it, res));
        }
        res = a_phi.sub(&nl).norm() / norm;
        if res < tol {
            return Ok(IterationOutcome {
                field: phi,
                residual: res,
                iterations: it,
            });
        }
        if res < best {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
            // the renormalization factor is oscillating; fall back to a
            // damped update
            if since_best > 25 && damping > 0.2 {
                damping *= 0.5;
                since_best = 0;
                log::debug!("ground-state iteration: damping reduced to {damping}");
            }
        }
        let ratio = phi.dot(&a_phi) / phi.dot(&nl);
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(LabError::solver("ground-state iteration (bad renormalization)", it, res));
        }
        let mut next = sp.apply_real_symbol(&nl, |i| 1.0 / sp.linear_symbol_at(i, m, mu, v));
        next.scale(ratio.powf(1.5));
        if damping < 1.0 {
            next.scale(damping);
            next.axpy(1.0 - damping, &phi);
        }
        if force_real {
            next.im.iter_mut().for_each(|x| *x = 0.0);
        }
        if force_real || (symmetrize_every > 0 && (it + 1) % symmetrize_every == 0) {
            next = symmetry::symmetrize(&next, group);
        }
        phi = next;
    }
    Err(LabError::solver("ground-state iteration", max_iter, res))
}

fn finish(
    sp: &Spectral,
    out: IterationOutcome,
    v: [f64; 3],
    mu: f64,
    m: f64,
    phase_ref: &Field,
    opts: &SolverOptions,
    seed: String,
) -> Result<GroundState> {
    let field = fix_phase(&out.field, phase_ref);
    let ratio = boundary_ratio(&field);
    if ratio > opts.boundary_tol {
        return Err(LabError::BoxTooSmall { ratio });
    }
    let residual = functionals::action_gradient(sp, &field, v, mu, m)?.norm() / field.norm();
    let mass_n = functionals::mass(&field);
    if mass_n >= CRITICAL_MASS_LOWER {
        log::warn!("ground-state mass {mass_n:.4} lies in the critical window [2/pi, 1.4)");
    }
    let mut gs = GroundState {
        field,
        v,
        mu,
        m,
        residual,
        decay_rate: None,
        mass_n,
        boundary_ratio: ratio,
        iterations: out.iterations,
        seed,
    };
    match decay_rate(sp, &gs) {
        Ok(d) => gs.decay_rate = Some(d),
        Err(e) => log::warn!("decay fit skipped: {e}"),
    }
    Ok(gs)
}

/// Radial ground state `phi_mu = (phi, 0)` from a Gaussian seed. Iterates are
/// made real and projected onto the cube symmetry group about the center.
pub fn solve_unboosted(sp: &Spectral, mu: f64, m: f64, opts: &SolverOptions) -> Result<GroundState> {
    check_parameters([0.0; 3], mu, m, opts)?;
    let grid = sp.grid();
    let seed = gaussian_seed(grid, opts.seed_width);
    let group = symmetry::octahedral_group();
    let out = petviashvili(sp, seed.clone(), [0.0; 3], mu, m, opts.tol, opts.max_iter, &group, 1, true)?;
    finish(sp, out, [0.0; 3], mu, m, &seed, opts, format!("gaussian(width={})", opts.seed_width))
}

/// Re-solves at `(v, mu)` starting from `start`, without continuation.
pub fn refine(sp: &Spectral, start: &Field, v: [f64; 3], mu: f64, m: f64, opts: &SolverOptions) -> Result<GroundState> {
    check_parameters(v, mu, m, opts)?;
    let group = symmetry::group_for_velocity(v);
    let real = v == [0.0; 3];
    let every = if real { 1 } else { opts.symmetrize_every };
    let out = petviashvili(sp, start.clone(), v, mu, m, opts.tol, opts.max_iter, &group, every, real)?;
    let seed = gaussian_seed(sp.grid(), opts.seed_width);
    finish(sp, out, v, mu, m, &seed, opts, "refined".into())
}

/// Boosted ground state by continuation in the speed along `v/|v|`,
/// starting from the radial state (or from `warm` when it is close).
pub fn solve_boosted(
    sp: &Spectral,
    v: [f64; 3],
    mu: f64,
    m: f64,
    warm: Option<&GroundState>,
    opts: &SolverOptions,
) -> Result<GroundState> {
    check_parameters(v, mu, m, opts)?;
    let speed = linalg::norm3(&v);
    if speed == 0.0 {
        return match warm {
            Some(w) if w.v == [0.0; 3] && (w.mu - mu).abs() < 1e-14 => Ok(w.clone()),
            _ => solve_unboosted(sp, mu, m, opts),
        };
    }
    let dir = [v[0] / speed, v[1] / speed, v[2] / speed];
    let seed = gaussian_seed(sp.grid(), opts.seed_width);

    // choose the starting point of the continuation path
    let (mut current, mut s0, seed_note) = match warm {
        Some(w) if (w.mu - mu).abs() < 0.05 * m => {
            let ws = linalg::norm3(&w.v);
            let aligned = ws == 0.0 || linalg::norm3(&[
                w.v[0] / ws - dir[0],
                w.v[1] / ws - dir[1],
                w.v[2] / ws - dir[2],
            ]) < 1e-12;
            if aligned && ws <= speed + 1e-12 {
                (w.field.clone(), ws, format!("continued from v={:?}, mu={}", w.v, w.mu))
            } else {
                let base = solve_unboosted(sp, mu, m, opts)?;
                (base.field, 0.0, base.seed)
            }
        }
        _ => {
            let base = solve_unboosted(sp, mu, m, opts)?;
            (base.field, 0.0, base.seed)
        }
    };
    let group = symmetry::group_for_velocity(v);
    let mut total_iter = 0;
    loop {
        let s = (s0 + opts.continuation_step).min(speed);
        let last = (speed - s).abs() < 1e-14;
        let vs = [dir[0] * s, dir[1] * s, dir[2] * s];
        let tol = if last { opts.tol } else { opts.continuation_tol.max(opts.tol) };
        let out = petviashvili(sp, current, vs, mu, m, tol, opts.max_iter, &group, opts.symmetrize_every, false)?;
        total_iter += out.iterations;
        current = fix_phase(&out.field, &seed);
        if last {
            let out = IterationOutcome {
                field: current,
                residual: out.residual,
                iterations: total_iter,
            };
            return finish(sp, out, v, mu, m, &seed, opts, seed_note);
        }
        s0 = s;
    }
}

/// The eight tangent vectors
/// `(d_x1, d_x2, d_x3, d_v1, d_v2, d_v3, J, d_mu)` applied to `phi`.
#[derive(Clone, Debug)]
pub struct TangentFrame {
    pub vectors: Vec<Field>,
    /// `||L d_xj phi|| / ||d_xj phi||` for j = 1..3 and `||L J phi|| / ||phi||`
    pub kernel_residuals: [f64; 4],
    /// `||L d_vj phi - J d_xj phi|| / ||J d_xj phi||` (j = 1..3) and
    /// `||L d_mu phi + phi|| / ||phi||`
    pub solve_residuals: [f64; 4],
    pub solver_iterations: usize,
}

impl TangentFrame {
    pub const LABELS: [&'static str; 8] = ["dx1", "dx2", "dx3", "dv1", "dv2", "dv3", "J", "dmu"];

    pub fn dx(&self, j: usize) -> &Field {
        &self.vectors[j]
    }

    pub fn dv(&self, j: usize) -> &Field {
        &self.vectors[3 + j]
    }

    pub fn j_phi(&self) -> &Field {
        &self.vectors[6]
    }

    pub fn dmu(&self) -> &Field {
        &self.vectors[7]
    }

    /// The kernel directions `{d_x phi, J phi}`.
    pub fn kernel(&self) -> Vec<Field> {
        vec![
            self.vectors[0].clone(),
            self.vectors[1].clone(),
            self.vectors[2].clone(),
            self.vectors[6].clone(),
        ]
    }
}

/// Symmetric positive definite preconditioner `(T + mu + i v.grad)^{-1}`.
pub fn resolvent<'a>(sp: &'a Spectral, m: f64, mu: f64, v: [f64; 3]) -> impl Fn(&Field) -> Field + 'a {
    move |u: &Field| sp.apply_real_symbol(u, |i| 1.0 / sp.linear_symbol_at(i, m, mu, v))
}

/// Solves `L u = rhs` on the complement of the kernel directions.
pub fn solve_deflated(hess: &Hessian, kernel: &Deflation, rhs: &Field, tol: f64, max_iter: usize) -> Result<(Field, linalg::KrylovStats)> {
    let sp = hess.spectral();
    let pre = resolvent(sp, hess.m(), hess.mu(), hess.velocity());
    let op = |u: &Field| kernel.project(&hess.apply(&kernel.project(u)));
    let prec = |u: &Field| kernel.project(&pre(&kernel.project(u)));
    let b = kernel.project(rhs);
    let (x, stats) = linalg::minres(&op, &prec, &b, tol, max_iter)?;
    Ok((kernel.project(&x), stats))
}

pub fn tangent_frame(sp: &Spectral, gs: &GroundState, opts: &SolverOptions) -> Result<TangentFrame> {
    let phi = &gs.field;
    let hess = Hessian::new(sp, phi, gs.v, gs.mu, gs.m)?;
    let dx = sp.gradient(phi);
    let jphi = phi.apply_j();
    let kernel = Deflation::new(&[dx[0].clone(), dx[1].clone(), dx[2].clone(), jphi.clone()]);

    let mut kernel_res = [0.0; 4];
    for j in 0..3 {
        kernel_res[j] = hess.apply(&dx[j]).norm() / dx[j].norm();
    }
    kernel_res[3] = hess.apply(&jphi).norm() / phi.norm();

    let mut vectors: Vec<Field> = dx.iter().cloned().collect();
    let mut solve_res = [0.0; 4];
    let mut iters = 0;
    for j in 0..3 {
        let rhs = dx[j].apply_j();
        let (u, st) = solve_deflated(&hess, &kernel, &rhs, opts.linear_tol, opts.linear_max_iter)?;
        iters += st.iterations;
        solve_res[j] = hess.apply(&u).sub(&rhs).norm() / rhs.norm();
        vectors.push(u);
    }
    vectors.push(jphi);
    let rhs = phi.scaled(-1.0);
    let (u, st) = solve_deflated(&hess, &kernel, &rhs, opts.linear_tol, opts.linear_max_iter)?;
    iters += st.iterations;
    solve_res[3] = hess.apply(&u).sub(&rhs).norm() / rhs.norm();
    vectors.push(u);
    Ok(TangentFrame {
        vectors,
        kernel_residuals: kernel_res,
        solve_residuals: solve_res,
        solver_iterations: iters,
    })
}

/// Finite-difference tangents of the family, for cross-validation.
#[derive(Clone, Debug)]
pub struct FrameCheck {
    /// relative l2 differences for `d_v1, d_v2, d_v3, d_mu`
    pub relative_diff: [f64; 4],
    /// `n_mu` from the finite difference of the mass
    pub n_mu_fd: f64,
}

pub fn finite_difference_frame(
    sp: &Spectral,
    gs: &GroundState,
    frame: &TangentFrame,
    step: f64,
    opts: &SolverOptions,
) -> Result<FrameCheck> {
    let mut fine = opts.clone();
    fine.tol = opts.tol.min(1e-11);
    let solve_at = |v: [f64; 3], mu: f64| -> Result<GroundState> { refine(sp, &gs.field, v, mu, gs.m, &fine) };
    let mut diff = [0.0; 4];
    for j in 0..3 {
        let mut vp = gs.v;
        let mut vm = gs.v;
        vp[j] += step;
        vm[j] -= step;
        let p = solve_at(vp, gs.mu)?;
        let q = solve_at(vm, gs.mu)?;
        let mut d = p.field.sub(&q.field);
        d.scale(0.5 / step);
        diff[j] = d.sub(frame.dv(j)).norm() / frame.dv(j).norm().max(1e-300);
    }
    let p = solve_at(gs.v, gs.mu + step)?;
    let q = solve_at(gs.v, gs.mu - step)?;
    let mut d = p.field.sub(&q.field);
    d.scale(0.5 / step);
    diff[3] = d.sub(frame.dmu()).norm() / frame.dmu().norm();
    let n_mu_fd = (functionals::mass(&p.field) - functionals::mass(&q.field)) / (2.0 * step);
    Ok(FrameCheck {
        relative_diff: diff,
        n_mu_fd,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyScalars {
    pub n: f64,
    pub n_mu: f64,
    pub n_v: [f64; 3],
    /// `tau_jk = omega(d_xj phi, d_vk phi)`
    pub tau: [[f64; 3]; 3],
    /// `<L d_vj phi, d_vk phi>`, the second expression for `tau`
    pub tau_hessian: [[f64; 3]; 3],
    pub gamma: [[f64; 3]; 3],
}

impl FamilyScalars {
    pub fn tau_asymmetry(&self) -> f64 {
        let mut a: f64 = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                a = a.max((self.tau[j][k] - self.tau[k][j]).abs());
            }
        }
        a
    }
}

/// Positivity margin demanded of `n_mu`.
pub const STABILITY_MARGIN: f64 = 1e-3;

pub fn family_scalars(sp: &Spectral, gs: &GroundState, frame: &TangentFrame) -> Result<FamilyScalars> {
    let phi = &gs.field;
    let n = functionals::mass(phi);
    let n_mu = frame.dmu().dot(phi);
    if !(n_mu > STABILITY_MARGIN) {
        return Err(LabError::StabilityViolation { n_mu });
    }
    let mut n_v = [0.0; 3];
    let mut tau = [[0.0; 3]; 3];
    let mut tau_h = [[0.0; 3]; 3];
    let hess = Hessian::new(sp, phi, gs.v, gs.mu, gs.m)?;
    let l_dv: Vec<Field> = (0..3).map(|j| hess.apply(frame.dv(j))).collect();
    for j in 0..3 {
        n_v[j] = frame.dv(j).dot(phi);
        for k in 0..3 {
            tau[j][k] = symplectic_form(frame.dx(j), frame.dv(k));
            tau_h[j][k] = l_dv[j].dot(frame.dv(k));
        }
    }
    let mut gamma = [[0.0; 3]; 3];
    for j in 0..3 {
        for k in 0..3 {
            gamma[j][k] = (tau[j][k] + n_v[j] * n_v[k] / n_mu) / n;
        }
    }
    Ok(FamilyScalars {
        n,
        n_mu,
        n_v,
        tau,
        tau_hessian: tau_h,
        gamma,
    })
}

/// Evaluates the trigonometric interpolant of `coeffs` (forward transform of
/// a field) at an arbitrary point.
pub fn interpolate_at(sp: &Spectral, coeffs: &[Complex64], x: [f64; 3]) -> Complex64 {
    let g = sp.grid();
    let n = g.n();
    let x0 = -0.5 * g.box_length();
    let k = g.wavenumbers();
    let phases: Vec<[Complex64; 3]> = (0..n)
        .map(|i| {
            let mut p = [Complex64::new(1.0, 0.0); 3];
            for a in 0..3 {
                p[a] = if i == n / 2 {
                    Complex64::new((k[i] * (x[a] - x0)).cos(), 0.0)
                } else {
                    Complex64::from_polar(1.0, k[i] * (x[a] - x0))
                };
            }
            p
        })
        .collect();
    let mut acc = Complex64::default();
    for kk in 0..n {
        for jj in 0..n {
            let pjk = phases[jj][1] * phases[kk][2];
            let base = n * (jj + n * kk);
            let mut row = Complex64::default();
            for ii in 0..n {
                row += coeffs[base + ii] * phases[ii][0];
            }
            acc += row * pjk;
        }
    }
    acc / g.len() as f64
}

/// Directional decay rates of `|phi|` along `v/|v|` (or `e_3`) and a
/// perpendicular direction, from a least-squares fit of `log|phi|` on
/// `r in [0.25 L, 0.4 L]`.
pub fn directional_decay_rates(sp: &Spectral, gs: &GroundState) -> Result<[f64; 2]> {
    let g = sp.grid();
    let speed = linalg::norm3(&gs.v);
    let along = if speed > 0.0 {
        [gs.v[0] / speed, gs.v[1] / speed, gs.v[2] / speed]
    } else {
        [0.0, 0.0, 1.0]
    };
    // a unit vector perpendicular to `along`
    let trial = if along[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let c = linalg::dot3(&trial, &along);
    let mut perp = [trial[0] - c * along[0], trial[1] - c * along[1], trial[2] - c * along[2]];
    let pn = linalg::norm3(&perp);
    perp.iter_mut().for_each(|x| *x /= pn);

    let coeffs = sp.forward(&gs.field);
    let l = g.box_length();
    let samples = 12;
    let mut rates = [0.0; 2];
    for (slot, dir) in [along, perp].iter().enumerate() {
        let mut rs = Vec::with_capacity(samples);
        let mut ls = Vec::with_capacity(samples);
        for s in 0..samples {
            let r = l * (0.25 + 0.15 * s as f64 / (samples - 1) as f64);
            let mut acc = 0.0;
            // average the two opposite rays so |phi| parity does not matter
            for sign in [1.0, -1.0] {
                let p = [sign * r * dir[0], sign * r * dir[1], sign * r * dir[2]];
                acc += interpolate_at(sp, &coeffs, p).norm();
            }
            let amp = 0.5 * acc;
            if !(amp > 0.0) {
                return Err(LabError::FitFailure("vanishing amplitude in the fit window".into()));
            }
            rs.push(r);
            ls.push(amp.ln());
        }
        if ls.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LabError::FitFailure(format!(
                "tail of |phi| is not monotone along {dir:?}"
            )));
        }
        let nf = rs.len() as f64;
        let mr = rs.iter().sum::<f64>() / nf;
        let ml = ls.iter().sum::<f64>() / nf;
        let sxy: f64 = rs.iter().zip(&ls).map(|(r, l)| (r - mr) * (l - ml)).sum();
        let sxx: f64 = rs.iter().map(|r| (r - mr) * (r - mr)).sum();
        rates[slot] = -sxy / sxx;
    }
    Ok(rates)
}

/// Decay rate `delta`: the smaller directional rate.
pub fn decay_rate(sp: &Spectral, gs: &GroundState) -> Result<f64> {
    let r = directional_decay_rates(sp, gs)?;
    let d = r[0].min(r[1]);
    if !(d > 0.0) {
        return Err(LabError::FitFailure(format!("non-positive decay rate {d}")));
    }
    Ok(d)
}

/// `min(m, (mu - mu_l)(1 - |v|^2)^{-1/2})`, the ceiling on decay rates.
pub fn decay_bound(v: [f64; 3], mu: f64, m: f64) -> Result<f64> {
    let mul = mu_lower_bound(v, m)?;
    let s2 = linalg::dot3(&v, &v);
    Ok(m.min((mu - mul) / (1.0 - s2).sqrt()))
}

/// One line of the JSON-lines family table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub v: [f64; 3],
    pub mu: f64,
    pub m: f64,
    pub n: f64,
    pub n_mu: f64,
    pub n_v: [f64; 3],
    pub tau: [[f64; 3]; 3],
    pub gamma: [[f64; 3]; 3],
    pub delta: Option<f64>,
    pub residual: f64,
    pub seed: String,
}

impl FamilyRecord {
    pub fn new(gs: &GroundState, fs: &FamilyScalars) -> Self {
        FamilyRecord {
            v: gs.v,
            mu: gs.mu,
            m: gs.m,
            n: fs.n,
            n_mu: fs.n_mu,
            n_v: fs.n_v,
            tau: fs.tau,
            gamma: fs.gamma,
            delta: gs.decay_rate,
            residual: gs.residual,
            seed: gs.seed.clone(),
        }
    }
}

/// `E(N) - 1/4 <Phi(|phi|^2), |phi|^2> + mu N`, which vanishes for solutions
/// of the unboosted Euler-Lagrange equation; returned relative to `|mu N|`.
pub fn identity_defect(sp: &Spectral, gs: &GroundState) -> Result<f64> {
    let e = functionals::energy(sp, &gs.field, None, gs.m)?;
    let w = functionals::hartree_pairing(sp, &gs.field);
    let n = functionals::mass(&gs.field);
    Ok((e - 0.25 * w + gs.mu * n).abs() / (gs.mu * n).abs())
}
