//! Matrix-free eigenanalysis of the Hessian and its blocks, and a sampled
//! coercivity estimate on the skew-orthogonal complement of the tangent frame.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::field::Field;
use crate::functionals::Hessian;
use crate::groundstate::{mu_lower_bound, GroundState, TangentFrame};
use crate::linalg;
use crate::spectral::Spectral;
use crate::symplectic;

/// Which components a random probe carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sector {
    Real,
    Imaginary,
    Complex,
}

/// Gaussian white noise smoothed by `exp(-|k|^2 / k_c^2)` with `k_c` half
/// the Nyquist wavenumber, normalized to unit l2 norm.
pub fn smooth_random_field(sp: &Spectral, rng: &mut ChaCha8Rng, sector: Sector) -> Field {
    let g = sp.grid();
    let mut f = Field::zeros(g);
    if sector != Sector::Imaginary {
        f.re.iter_mut().for_each(|x| *x = StandardNormal.sample(rng));
    }
    if sector != Sector::Real {
        f.im.iter_mut().for_each(|x| *x = StandardNormal.sample(rng));
    }
    let kc = 0.5 * g.max_wavenumber();
    let ksq = sp.k_squared();
    let mut out = sp.apply_real_symbol(&f, |i| (-ksq[i] / (kc * kc)).exp());
    // the symbol is even, but keep the unused component exactly zero
    match sector {
        Sector::Real => out.im.iter_mut().for_each(|x| *x = 0.0),
        Sector::Imaginary => out.re.iter_mut().for_each(|x| *x = 0.0),
        Sector::Complex => {}
    }
    let n = out.norm();
    out.scale(1.0 / n);
    out
}

/// Largest `|<Lu, w> - <u, Lw>|` over random pairs, relative to
/// `max(||Lu|| ||w||, ||u|| ||Lw||)`.
pub fn symmetry_defect(
    op: &dyn Fn(&Field) -> Field,
    sp: &Spectral,
    sector: Sector,
    pairs: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = smooth_random_field(sp, &mut rng, sector);
        let w = smooth_random_field(sp, &mut rng, sector);
        let lu = op(&u);
        let lw = op(&w);
        let scale = (lu.norm() * w.norm()).max(u.norm() * lw.norm()).max(1e-300);
        worst = worst.max((lu.dot(&w) - u.dot(&lw)).abs() / scale);
    }
    worst
}

#[derive(Clone, Debug, Serialize)]
pub struct LanczosOptions {
    /// pairs must satisfy `||Lu - lambda u|| < tol |lambda - shift|`
    pub tol: f64,
    /// block size; 0 means the number of requested pairs
    pub block: usize,
    pub max_basis: usize,
    pub max_restarts: usize,
    pub shift: f64,
    pub seed: u64,
    pub symmetry_tol: f64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-6,
            block: 0,
            max_basis: 120,
            max_restarts: 60,
            shift: 0.0,
            seed: 7,
            symmetry_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpairs {
    /// ascending
    pub values: Vec<f64>,
    pub vectors: Vec<Field>,
    /// `||L u - lambda u||` with unit `u`
    pub residuals: Vec<f64>,
    pub applications: usize,
    pub restarts: usize,
}

fn random_orthogonal(basis: &[Field], sp: &Spectral, rng: &mut ChaCha8Rng, sector: Sector) -> Field {
    loop {
        let mut w = smooth_random_field(sp, rng, sector);
        for _ in 0..2 {
            for q in basis {
                let c = q.dot(&w);
                w.axpy(-c, q);
            }
        }
        let n = w.norm();
        if n > 1e-3 {
            w.scale(1.0 / n);
            return w;
        }
    }
}

/// Orthogonalizes `block` against `basis` (two passes of classical
/// Gram-Schmidt) and then within itself. Returns the new orthonormal block,
/// the projection coefficients (`basis.len() x p`) and the triangular factor.
fn orthogonalize_block(
    basis: &[Field],
    mut block: Vec<Field>,
    sp: &Spectral,
    rng: &mut ChaCha8Rng,
    sector: Sector,
) -> (Vec<Field>, DMatrix<f64>, DMatrix<f64>) {
    let p = block.len();
    let mut coeff = DMatrix::zeros(basis.len(), p);
    let mut r = DMatrix::zeros(p, p);
    for (c, w) in block.iter_mut().enumerate() {
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let h = q.dot(w);
                coeff[(i, c)] += h;
                w.axpy(-h, q);
            }
        }
    }
    let mut out: Vec<Field> = Vec::with_capacity(p);
    for (c, mut w) in block.into_iter().enumerate() {
        let n0 = w.norm();
        for _ in 0..2 {
            for (a, q) in out.iter().enumerate() {
                let h = q.dot(&w);
                r[(a, c)] += h;
                w.axpy(-h, q);
            }
        }
        let n1 = w.norm();
        if n1 > 1e-10 * n0.max(1e-300) && n1 > 1e-300 {
            r[(c, c)] = n1;
            w.scale(1.0 / n1);
            out.push(w);
        } else {
            // breakdown: continue with a fresh direction, no coupling
            let mut all: Vec<Field> = basis.to_vec();
            all.extend(out.iter().cloned());
            out.push(random_orthogonal(&all, sp, rng, sector));
        }
    }
    (out, coeff, r)
}

fn sorted_eigen(t: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let m = t.nrows();
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn combine(basis: &[Field], coeffs: impl Iterator<Item = f64>) -> Field {
    let mut y = Field::zeros(basis[0].grid);
    for (q, c) in basis.iter().zip(coeffs) {
        if c != 0.0 {
            y.axpy(c, q);
        }
    }
    y
}

/// Lowest `k` eigenpairs of a symmetric operator by block Lanczos with full
/// reorthogonalization and thick restarts. Start vectors are smooth random
/// fields in `sector`.
pub fn lowest_eigenpairs(
    op: &dyn Fn(&Field) -> Field,
    sp: &Spectral,
    k: usize,
    sector: Sector,
    opts: &LanczosOptions,
) -> Result<Eigenpairs> {
    if k == 0 {
        return Err(LabError::ParameterDomain("no eigenpairs requested".into()));
    }
    let defect = symmetry_defect(op, sp, sector, 10, opts.seed ^ 0x5eed);
    if !(defect <= opts.symmetry_tol) {
        return Err(LabError::ContractViolation(format!(
            "operator is not symmetric: relative defect {defect:.3e}"
        )));
    }
    let p = if opts.block == 0 { k } else { opts.block };
    let keep = (k + p).min(opts.max_basis.saturating_sub(2 * p)).max(k);
    if opts.max_basis < keep + 2 * p {
        return Err(LabError::ParameterDomain(format!(
            "basis limit {} too small for {k} pairs with block {p}",
            opts.max_basis
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Vec<Field> = (0..p).map(|_| smooth_random_field(sp, &mut rng, sector)).collect();
    let (mut q, _, _) = orthogonalize_block(&[], start, sp, &mut rng, sector);
    let cap = opts.max_basis + p;
    let mut h = DMatrix::<f64>::zeros(cap, cap);
    let mut active = 0..p;
    let mut applications = 0;
    let mut restarts = 0;
    let mut history: Vec<f64> = Vec::new();
    loop {
        let block: Vec<Field> = active.clone().map(|i| op(&q[i])).collect();
        applications += p;
        let (newb, coeff, r) = orthogonalize_block(&q, block, sp, &mut rng, sector);
        let base = q.len();
        for (c, col) in active.clone().enumerate() {
            for i in 0..base {
                h[(i, col)] = coeff[(i, c)];
            }
            for a in 0..p {
                h[(base + a, col)] = r[(a, c)];
            }
        }
        q.extend(newb);

        let m = base;
        let t = DMatrix::from_fn(m, m, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
        let (theta, s) = sorted_eigen(t);
        let coupling = h.view((base, 0), (p, m)).into_owned();
        let estimates: Vec<f64> = (0..m.min(keep)).map(|i| (&coupling * s.column(i)).norm()).collect();
        let wanted = k.min(m);
        let converged = m >= k
            && (0..wanted).all(|i| estimates[i] <= 0.5 * opts.tol * (theta[i] - opts.shift).abs());
        if converged {
            let mut values = Vec::with_capacity(k);
            let mut vectors = Vec::with_capacity(k);
            let mut residuals = Vec::with_capacity(k);
            let mut ok = true;
            for i in 0..k {
                let mut y = combine(&q[..m], s.column(i).iter().copied());
                let ny = y.norm();
                y.scale(1.0 / ny);
                let ly = op(&y);
                applications += 1;
                let lam = y.dot(&ly);
                let mut res = ly;
                res.axpy(-lam, &y);
                let rn = res.norm();
                ok &= rn < opts.tol * (lam - opts.shift).abs();
                values.push(lam);
                vectors.push(y);
                residuals.push(rn);
            }
            if ok {
                return Ok(Eigenpairs {
                    values,
                    vectors,
                    residuals,
                    applications,
                    restarts,
                });
            }
            log::debug!("Lanczos: estimated convergence not confirmed, continuing");
        }
        if q.len() + p > opts.max_basis {
            restarts += 1;
            history.push(theta[0]);
            if restarts > opts.max_restarts {
                let worst = (0..wanted)
                    .map(|i| estimates[i] / (theta[i] - opts.shift).abs())
                    .fold(0.0, f64::max);
                let shown: Vec<String> = theta.iter().take(k).map(|x| format!("{x:.6e}")).collect();
                return Err(LabError::solver(
                    format!("block Lanczos (Ritz values [{}])", shown.join(", ")),
                    applications,
                    worst,
                ));
            }
            // thick restart: keep the lowest Ritz vectors and the last block
            let mut kept: Vec<Field> = (0..keep)
                .map(|i| combine(&q[..m], s.column(i).iter().copied()))
                .collect();
            for y in kept.iter_mut() {
                let n = y.norm();
                y.scale(1.0 / n);
            }
            let last: Vec<Field> = q.drain(base..).collect();
            let mut hn = DMatrix::<f64>::zeros(cap, cap);
            for i in 0..keep {
                hn[(i, i)] = theta[i];
                let c = &coupling * s.column(i);
                for a in 0..p {
                    hn[(keep + a, i)] = c[a];
                    hn[(i, keep + a)] = c[a];
                }
            }
            h = hn;
            q = kept;
            q.extend(last);
            active = keep..keep + p;
        } else {
            active = base..base + p;
        }
    }
}

/// Operator under study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorTag {
    L11,
    L22,
    Lfull,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub operator_tag: OperatorTag,
    pub v: [f64; 3],
    pub mu: f64,
    /// ascending
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub kernel_tol: f64,
    pub kernel_dim: usize,
    /// kernel dimension with `kernel_tol / 2`
    pub kernel_dim_half_tol: usize,
    pub negative_count: usize,
    /// smallest `|lambda|` above `kernel_tol`
    pub gap: f64,
    /// `mu - mu_l(|v|)`
    pub essential_onset_estimate: f64,
    /// pairs carrying more than 1% of their mass near the box faces
    pub boundary_flags: Vec<bool>,
    /// largest principal angle between the computed kernel and the expected
    /// kernel directions
    pub kernel_angle: Option<f64>,
    pub expected_kernel_dim: usize,
    pub expected_negative: usize,
    pub lanczos_tol: f64,
    pub shift: f64,
    pub applications: usize,
    pub pass: bool,
}

/// `max(1e-6, 10 * residual * mu)`.
pub fn kernel_tolerance(gs: &GroundState) -> f64 {
    (10.0 * gs.residual * gs.mu).max(1e-6)
}

/// Fraction of `||u||^2` on points within `0.1 L` of a box face.
pub fn boundary_mass_fraction(u: &Field) -> f64 {
    let g = u.grid;
    let edge = 0.4 * g.box_length();
    let mut outer = 0.0;
    let mut total = 0.0;
    for idx in 0..g.len() {
        let w = u.re[idx] * u.re[idx] + u.im[idx] * u.im[idx];
        total += w;
        let p = g.point(idx);
        if p.iter().any(|x| x.abs() >= edge) {
            outer += w;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

#[derive(Clone, Debug)]
pub struct ReportSpec<'a> {
    pub tag: OperatorTag,
    pub v: [f64; 3],
    pub mu: f64,
    pub m: f64,
    pub kernel_tol: f64,
    pub expected_kernel: &'a [Field],
    pub expected_negative: usize,
    pub lanczos_tol: f64,
    pub shift: f64,
}

pub fn build_report(pairs: &Eigenpairs, spec: &ReportSpec) -> Result<SpectralReport> {
    let tol = spec.kernel_tol;
    let count = |t: f64| pairs.values.iter().filter(|l| l.abs() < t).count();
    let kernel_dim = count(tol);
    let kernel_dim_half = count(0.5 * tol);
    let negative_count = pairs.values.iter().filter(|&&l| l <= -tol).count();
    let gap = pairs
        .values
        .iter()
        .filter(|&&l| l >= tol)
        .fold(f64::INFINITY, |a, &l| a.min(l));
    let kernel_vectors: Vec<Field> = pairs
        .values
        .iter()
        .zip(&pairs.vectors)
        .filter(|(l, _)| l.abs() < tol)
        .map(|(_, u)| u.clone())
        .collect();
    let expected_dim = spec.expected_kernel.len();
    let kernel_angle = if kernel_vectors.len() == expected_dim && expected_dim > 0 {
        Some(linalg::max_principal_angle(&kernel_vectors, spec.expected_kernel))
    } else {
        None
    };
    let boundary_flags = pairs.vectors.iter().map(|u| boundary_mass_fraction(u) > 0.01).collect();
    let onset = spec.mu - mu_lower_bound(spec.v, spec.m)?;
    let pass = kernel_dim == expected_dim
        && kernel_dim_half == kernel_dim
        && negative_count == spec.expected_negative
        && gap.is_finite()
        && gap > 10.0 * tol
        && kernel_angle.map_or(expected_dim == 0, |a| a < 1e-3);
    Ok(SpectralReport {
        operator_tag: spec.tag,
        v: spec.v,
        mu: spec.mu,
        eigenvalues: pairs.values.clone(),
        residuals: pairs.residuals.clone(),
        kernel_tol: tol,
        kernel_dim,
        kernel_dim_half_tol: kernel_dim_half,
        negative_count,
        gap,
        essential_onset_estimate: onset,
        boundary_flags,
        kernel_angle,
        expected_kernel_dim: expected_dim,
        expected_negative: spec.expected_negative,
        lanczos_tol: spec.lanczos_tol,
        shift: spec.shift,
        applications: pairs.applications,
        pass,
    })
}

/// `L11` and `L22` reports for an unboosted state.
#[derive(Clone, Debug, Serialize)]
pub struct KernelVerdict {
    pub l11: SpectralReport,
    pub l22: SpectralReport,
    pub pass: bool,
}

/// Checks that `L11` has exactly the three translation modes in its kernel
/// and that `L22` has the simple zero mode `phi`.
pub fn verify_kernel_assumption(sp: &Spectral, gs: &GroundState, opts: &LanczosOptions) -> Result<KernelVerdict> {
    if gs.v != [0.0; 3] {
        return Err(LabError::ParameterDomain("the kernel check needs an unboosted state".into()));
    }
    let hess = Hessian::new(sp, &gs.field, gs.v, gs.mu, gs.m)?;
    let grid = sp.grid();
    let mut o = opts.clone();
    o.shift = -2.0 * gs.mu;
    let kernel_tol = kernel_tolerance(gs);

    let l11 = |u: &Field| Field {
        grid,
        re: hess.apply_l11(&u.re),
        im: vec![0.0; u.len()],
    };
    let pairs = lowest_eigenpairs(&l11, sp, 6, Sector::Real, &o)?;
    let dx: Vec<Field> = sp
        .gradient(&gs.field)
        .into_iter()
        .map(|d| Field {
            grid,
            re: d.re,
            im: vec![0.0; grid.len()],
        })
        .collect();
    let r11 = build_report(
        &pairs,
        &ReportSpec {
            tag: OperatorTag::L11,
            v: gs.v,
            mu: gs.mu,
            m: gs.m,
            kernel_tol,
            expected_kernel: &dx,
            expected_negative: 1,
            lanczos_tol: o.tol,
            shift: o.shift,
        },
    )?;

    let l22 = |u: &Field| Field {
        grid,
        re: vec![0.0; u.len()],
        im: hess.apply_l22(&u.im),
    };
    let pairs = lowest_eigenpairs(&l22, sp, 3, Sector::Imaginary, &o)?;
    let phi_im = Field {
        grid,
        re: vec![0.0; grid.len()],
        im: gs.field.re.clone(),
    };
    let r22 = build_report(
        &pairs,
        &ReportSpec {
            tag: OperatorTag::L22,
            v: gs.v,
            mu: gs.mu,
            m: gs.m,
            kernel_tol,
            expected_kernel: std::slice::from_ref(&phi_im),
            expected_negative: 0,
            lanczos_tol: o.tol,
            shift: o.shift,
        },
    )?;
    let pass = r11.pass && r22.pass;
    Ok(KernelVerdict { l11: r11, l22: r22, pass })
}

/// Report on the full Hessian: one negative eigenvalue and the kernel
/// `{d_x phi, J phi}`.
pub fn full_spectrum_report(
    sp: &Spectral,
    gs: &GroundState,
    frame: &TangentFrame,
    opts: &LanczosOptions,
) -> Result<SpectralReport> {
    let hess = Hessian::new(sp, &gs.field, gs.v, gs.mu, gs.m)?;
    let mut o = opts.clone();
    o.shift = -2.0 * gs.mu;
    let op = |u: &Field| hess.apply(u);
    let pairs = lowest_eigenpairs(&op, sp, 7, Sector::Complex, &o)?;
    let kernel = frame.kernel();
    build_report(
        &pairs,
        &ReportSpec {
            tag: OperatorTag::Lfull,
            v: gs.v,
            mu: gs.mu,
            m: gs.m,
            kernel_tol: kernel_tolerance(gs),
            expected_kernel: &kernel,
            expected_negative: 1,
            lanczos_tol: o.tol,
            shift: o.shift,
        },
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct CoercivityReport {
    /// minimum of `<xi, L xi> / ||xi||^2_{H^{1/2}}` over the projected samples
    pub rho_hat: f64,
    pub samples: usize,
    /// largest `|omega(xi, z_j)|` after projection, for unit-norm samples
    pub max_constraint: f64,
    /// the quotient of `d_x1 phi` before projection
    pub kernel_quotient: f64,
    /// `||P d_x1 phi|| / ||d_x1 phi||`, zero when kernel vectors are excluded
    pub kernel_residual_after_projection: f64,
    pub pass: bool,
}

/// Margin demanded of the sampled coercivity constant.
pub const COERCIVITY_MARGIN: f64 = 1e-3;

pub fn coercivity_estimate(
    sp: &Spectral,
    gs: &GroundState,
    frame: &TangentFrame,
    omega: &[[f64; 8]; 8],
    n_samples: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    let hess = Hessian::new(sp, &gs.field, gs.v, gs.mu, gs.m)?;
    let projector = symplectic::SkewProjector::new(&frame.vectors, omega)?;
    let quotient = |xi: &Field| hess.apply(xi).dot(xi) / sp.h_half_sq(xi);

    let z = frame.dx(0);
    let kernel_quotient = quotient(z);
    let kernel_residual = projector.project(z).norm() / z.norm();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rho: f64 = f64::INFINITY;
    let mut max_constraint: f64 = 0.0;
    for _ in 0..n_samples {
        let xi = smooth_random_field(sp, &mut rng, Sector::Complex);
        let p = projector.project(&xi);
        let c = projector.max_constraint(&p);
        max_constraint = max_constraint.max(c);
        if c > 1e-10 {
            return Err(LabError::ContractViolation(format!(
                "skew-orthogonal projection left |omega(xi, z_j)| = {c:.3e}"
            )));
        }
        rho = rho.min(quotient(&p));
    }
    Ok(CoercivityReport {
        rho_hat: rho,
        samples: n_samples,
        max_constraint,
        kernel_quotient,
        kernel_residual_after_projection: kernel_residual,
        pass: rho > COERCIVITY_MARGIN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use num_complex::Complex64;

    fn fixture() -> (Spectral, Field) {
        let sp = Spectral::new(Grid::new(8, 8.0).unwrap());
        let phi = Field::from_fn(sp.grid(), |p| {
            let r2 = p[0] * p[0] + 1.3 * p[1] * p[1] + 0.7 * p[2] * p[2];
            Complex64::new(1.2 * (-0.4 * r2).exp(), 0.1 * p[0] * (-0.5 * r2).exp())
        });
        (sp, phi)
    }

    /// Dense matrix of `op` restricted to the components selected by `sector`.
    fn dense(op: &dyn Fn(&Field) -> Field, grid: Grid, sector: Sector) -> DMatrix<f64> {
        let n = grid.len();
        let (re, im) = match sector {
            Sector::Real => (true, false),
            Sector::Imaginary => (false, true),
            Sector::Complex => (true, true),
        };
        let slots: Vec<(bool, usize)> = (0..n)
            .filter(|_| re)
            .map(|i| (false, i))
            .chain((0..n).filter(|_| im).map(|i| (true, i)))
            .collect();
        let dim = slots.len();
        let mut m = DMatrix::zeros(dim, dim);
        for (c, &(ci, i)) in slots.iter().enumerate() {
            let mut e = Field::zeros(grid);
            if ci {
                e.im[i] = 1.0;
            } else {
                e.re[i] = 1.0;
            }
            let out = op(&e);
            for (r, &(ri, j)) in slots.iter().enumerate() {
                m[(r, c)] = if ri { out.im[j] } else { out.re[j] };
            }
        }
        m
    }

    fn dense_lowest(m: DMatrix<f64>, k: usize) -> Vec<f64> {
        let sym = 0.5 * (&m + m.transpose());
        let (vals, _) = sorted_eigen(sym);
        vals[..k].to_vec()
    }

    #[test]
    fn lanczos_matches_dense_diagonalization_full_hessian() {
        let (sp, phi) = fixture();
        let hess = Hessian::new(&sp, &phi, [0.0, 0.0, 0.2], 0.5, 1.0).unwrap();
        let op = |u: &Field| hess.apply(u);
        let mut o = LanczosOptions::default();
        o.tol = 1e-9;
        o.shift = -5.0;
        o.max_basis = 200;
        let pairs = lowest_eigenpairs(&op, &sp, 5, Sector::Complex, &o).unwrap();
        let exact = dense_lowest(dense(&op, sp.grid(), Sector::Complex), 5);
        for (a, b) in pairs.values.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
        for (u, (l, r)) in pairs.vectors.iter().zip(pairs.values.iter().zip(&pairs.residuals)) {
            let mut res = op(u);
            res.axpy(-l, u);
            assert!((res.norm() - r).abs() < 1e-12);
            assert!((u.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lanczos_matches_dense_diagonalization_real_block() {
        let (sp, phi) = fixture();
        let real = Field {
            grid: phi.grid,
            re: phi.re.clone(),
            im: vec![0.0; phi.len()],
        };
        let hess = Hessian::new(&sp, &real, [0.0; 3], 0.4, 1.0).unwrap();
        let grid = sp.grid();
        let op = |u: &Field| Field {
            grid,
            re: hess.apply_l11(&u.re),
            im: vec![0.0; u.len()],
        };
        let mut o = LanczosOptions::default();
        o.tol = 1e-9;
        o.shift = -5.0;
        o.block = 2;
        o.max_basis = 40;
        o.max_restarts = 400;
        let pairs = lowest_eigenpairs(&op, &sp, 4, Sector::Real, &o).unwrap();
        assert!(pairs.restarts > 0, "fixture should exercise thick restarts");
        let exact = dense_lowest(dense(&op, grid, Sector::Real), 4);
        for (a, b) in pairs.values.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn asymmetric_operator_is_rejected() {
        let (sp, _) = fixture();
        let op = |u: &Field| sp.derivative(u, 0);
        let err = lowest_eigenpairs(&op, &sp, 2, Sector::Complex, &LanczosOptions::default());
        assert!(matches!(err, Err(LabError::ContractViolation(_))));
    }

    #[test]
    fn smooth_random_fields_respect_sector_and_norm() {
        let (sp, _) = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = smooth_random_field(&sp, &mut rng, Sector::Real);
        assert!(r.im.iter().all(|&x| x == 0.0));
        let i = smooth_random_field(&sp, &mut rng, Sector::Imaginary);
        assert!(i.re.iter().all(|&x| x == 0.0));
        assert!((r.norm() - 1.0).abs() < 1e-13 && (i.norm() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn boundary_fraction_of_localized_and_flat_fields() {
        let (_, phi) = fixture();
        assert!(boundary_mass_fraction(&phi) < 0.01);
        let flat = Field::from_fn(phi.grid, |_| Complex64::new(1.0, 0.0));
        // points with some |x_j| >= 0.4 L: coordinate -4 only (one of eight per axis)
        let expect = 1.0 - (7.0f64 / 8.0).powi(3);
        assert!((boundary_mass_fraction(&flat) - expect).abs() < 1e-12);
    }
}
