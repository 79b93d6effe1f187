//! The acceptance suite: criteria 1 to 11, each reported as one PASS/FAIL
//! line. Shared by `hartree-lab verify` and the `acceptance` test target.
//!
//! Grids follow the desk scale unless a criterion needs otherwise:
//! criteria 3, 4, 5, 6, 9 and 10 use `n = 48, L = 30`; criteria 7 and 8 use
//! `n = 64, L = 30`. `HARTREE_LAB_ACCEPTANCE=quick` shrinks grids and
//! horizons for smoke runs; the tolerances never change.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use hartree_lab::evolution::{self, EvolutionConfig};
use hartree_lab::family::Family;
use hartree_lab::functionals::Hessian;
use hartree_lab::groundstate::{self, GroundState, SolverOptions};
use hartree_lab::io::write_json;
use hartree_lab::modulation::{self, TrackConfig};
use hartree_lab::potential::{Potential, PotentialSpec, Preset};
use hartree_lab::spectrum::{self, LanczosOptions, Sector};
use hartree_lab::symplectic::{self, DecompositionOptions, OmegaMatrix, SkewProjector, SolitonParams};
use hartree_lab::{Field, Grid, Result, Spectral};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::{self, omega_report};
use crate::config::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    pub fn from_env() -> Scale {
        match std::env::var("HARTREE_LAB_ACCEPTANCE").as_deref() {
            Ok("quick") => Scale::Quick,
            _ => Scale::Full,
        }
    }

    fn pick<T>(self, full: T, quick: T) -> T {
        match self {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {:<28} {} [{:.1} s]",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn failed(id: u8, name: &'static str, err: impl fmt::Display, seconds: f64) -> CriterionResult {
    CriterionResult {
        id,
        name,
        pass: false,
        detail: format!("error: {err}"),
        seconds,
    }
}

const NAMES: [&str; 11] = [
    "ground-state residual",
    "Euler-Lagrange identity",
    "kernel assumption",
    "boosted spectrum",
    "symplectic structure",
    "decomposition round-trip",
    "conservation",
    "free soliton transport",
    "second-order scaling",
    "Lyapunov sandwich",
    "oracle equivalence",
];

fn name(id: u8) -> &'static str {
    NAMES[id as usize - 1]
}

/// Depth of the Gaussian well in the conservation runs.
pub const WELL_AMPLITUDE: f64 = 0.5;

/// Height of the tanh ramp in the scaling study.
pub const RAMP_AMPLITUDE: f64 = 0.1;

const MU: f64 = 0.5;

fn grid(n: usize, l: f64) -> Grid {
    Grid::new(n, l).expect("acceptance grids are valid")
}

fn ez(s: f64) -> [f64; 3] {
    [0.0, 0.0, s]
}

fn well(eps: f64, grid: &Grid) -> Result<Potential> {
    Potential::new(
        PotentialSpec {
            preset: Preset::GaussianWell,
            epsilon: eps,
            amplitude: WELL_AMPLITUDE,
            ..PotentialSpec::default()
        },
        grid,
    )
}

/// Runs every criterion in order and prints one line per criterion as it
/// finishes. Writes `acceptance.json` to `out` when given.
pub fn run_all(scale: Scale, out: Option<&Path>) -> Vec<CriterionResult> {
    let mut results = Vec::new();
    let emit = |r: CriterionResult, results: &mut Vec<CriterionResult>| {
        println!("{r}");
        results.push(r);
    };
    emit(criterion_11(), &mut results);
    for r in criteria_1_2(scale) {
        emit(r, &mut results);
    }
    emit(criterion_3(scale), &mut results);
    for r in criteria_4_5(scale) {
        emit(r, &mut results);
    }
    for r in criteria_6_9_10(scale) {
        emit(r, &mut results);
    }
    emit(criterion_7(scale), &mut results);
    emit(criterion_8(scale), &mut results);
    results.sort_by_key(|r| r.id);
    if let Some(dir) = out {
        if let Err(e) = write_json(&dir.join("acceptance.json"), &results) {
            log::warn!("could not write acceptance.json: {e}");
        }
    }
    results
}

pub fn summary_line(results: &[CriterionResult]) -> String {
    let passed = results.iter().filter(|r| r.pass).count();
    format!("{passed}/{} criteria passed", results.len())
}

/// Criterion 1 (solves at rest and at `0.3 e3`) and criterion 2 (the
/// Euler-Lagrange identity at rest).
pub fn criteria_1_2(scale: Scale) -> Vec<CriterionResult> {
    let sp = Spectral::new(grid(scale.pick(64, 32), scale.pick(40.0, 30.0)));
    let opts = scale.pick(SolverOptions::default(), box30_options());
    let clock = Instant::now();
    let rest = groundstate::solve_unboosted(&sp, MU, 1.0, &opts);
    let t_rest = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let boosted = match &rest {
        Ok(r) => groundstate::solve_boosted(&sp, ez(0.3), MU, 1.0, Some(r), &opts),
        Err(_) => groundstate::solve_boosted(&sp, ez(0.3), MU, 1.0, None, &opts),
    };
    let t_boost = clock.elapsed().as_secs_f64();
    let c1 = match (&rest, &boosted) {
        (Ok(r), Ok(b)) => CriterionResult {
            id: 1,
            name: name(1),
            pass: r.residual < 1e-8 && b.residual < 1e-8 && t_rest < 300.0 && t_boost < 900.0,
            detail: format!(
                "residual {:.2e} at rest ({t_rest:.0} s < 300 s), {:.2e} at v = 0.3 e3 ({t_boost:.0} s < 900 s), tol 1e-8",
                r.residual, b.residual
            ),
            seconds: t_rest + t_boost,
        },
        (Err(e), _) | (_, Err(e)) => failed(1, name(1), e, t_rest + t_boost),
    };
    let clock = Instant::now();
    let c2 = match rest.and_then(|r| groundstate::identity_defect(&sp, &r)) {
        Ok(d) => CriterionResult {
            id: 2,
            name: name(2),
            pass: d < 1e-6,
            detail: format!("|E - W/4 + mu N| / |mu N| = {d:.2e} < 1e-6"),
            seconds: clock.elapsed().as_secs_f64(),
        },
        Err(e) => failed(2, name(2), e, clock.elapsed().as_secs_f64()),
    };
    vec![c1, c2]
}

fn tracking_grid(scale: Scale) -> Grid {
    grid(scale.pick(48, 32), 30.0)
}

/// Boundary tolerance of the `L = 30` box (the tail of `phi_{0,0.5}` at
/// the faces sits near `1e-5`).
fn box30_options() -> SolverOptions {
    SolverOptions {
        boundary_tol: 2e-5,
        ..SolverOptions::default()
    }
}

pub fn criterion_3(scale: Scale) -> CriterionResult {
    let clock = Instant::now();
    let sp = Spectral::new(tracking_grid(scale));
    let run = || -> Result<spectrum::KernelVerdict> {
        let gs = groundstate::solve_unboosted(&sp, MU, 1.0, &box30_options())?;
        spectrum::verify_kernel_assumption(&sp, &gs, &LanczosOptions::default())
    };
    let seconds = || clock.elapsed().as_secs_f64();
    match run() {
        Ok(v) => CriterionResult {
            id: 3,
            name: name(3),
            pass: v.pass && seconds() < 1200.0,
            detail: format!(
                "L11 kernel_dim {} gap {:.2e} (tol {:.1e}) angle {:.1e}; L22 kernel_dim {} angle {:.1e}",
                v.l11.kernel_dim,
                v.l11.gap,
                v.l11.kernel_tol,
                v.l11.kernel_angle.unwrap_or(f64::NAN),
                v.l22.kernel_dim,
                v.l22.kernel_angle.unwrap_or(f64::NAN)
            ),
            seconds: seconds(),
        },
        Err(e) => failed(3, name(3), e, seconds()),
    }
}

/// Criterion 4 (full Hessian at `(0.2 e3, 0.5)` and `n_mu > 0` along the
/// sweep) and criterion 5 (Omega on the tangent frame at that state).
pub fn criteria_4_5(scale: Scale) -> Vec<CriterionResult> {
    let clock = Instant::now();
    let sp = Spectral::new(tracking_grid(scale));
    let opts = box30_options();
    let v = ez(0.2);
    let solved = (|| -> Result<_> {
        let rest = groundstate::solve_unboosted(&sp, MU, 1.0, &opts)?;
        let gs = groundstate::solve_boosted(&sp, v, MU, 1.0, Some(&rest), &opts)?;
        let frame = groundstate::tangent_frame(&sp, &gs, &opts)?;
        Ok((gs, frame))
    })();
    let (gs, frame) = match solved {
        Ok(x) => x,
        Err(e) => {
            let s = clock.elapsed().as_secs_f64();
            return vec![failed(4, name(4), &e, s), failed(5, name(5), &e, s)];
        }
    };
    let c4 = (|| -> Result<CriterionResult> {
        let report = spectrum::full_spectrum_report(&sp, &gs, &frame, &LanczosOptions::default())?;
        let mut n_mu = Vec::new();
        let mut prev: GroundState = gs.clone();
        // mu = 0.4 decays more slowly and reaches ~5e-5 of its peak on the
        // faces of this box; the sign of n_mu is insensitive to that
        let sweep = SolverOptions {
            boundary_tol: 1e-4,
            ..opts.clone()
        };
        for mu in [0.4, 0.5, 0.6] {
            let g = groundstate::solve_boosted(&sp, v, mu, 1.0, Some(&prev), &sweep)?;
            let f = groundstate::tangent_frame(&sp, &g, &sweep)?;
            n_mu.push(groundstate::family_scalars(&sp, &g, &f)?.n_mu);
            prev = g;
        }
        Ok(CriterionResult {
            id: 4,
            name: name(4),
            pass: report.negative_count == 1 && report.kernel_dim == 4 && n_mu.iter().all(|&x| x > 0.0),
            detail: format!(
                "{} negative, kernel_dim {} (gap {:.2e}); n_mu at mu 0.4/0.5/0.6 = {:.4}/{:.4}/{:.4}",
                report.negative_count, report.kernel_dim, report.gap, n_mu[0], n_mu[1], n_mu[2]
            ),
            seconds: clock.elapsed().as_secs_f64(),
        })
    })()
    .unwrap_or_else(|e| failed(4, name(4), e, clock.elapsed().as_secs_f64()));
    let clock = Instant::now();
    let c5 = match omega_report(&frame.vectors, v, MU, 2) {
        Ok(r) => {
            let scale = r.entries.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
            let anti = r.antisymmetry / scale;
            CriterionResult {
                id: 5,
                name: name(5),
                pass: anti < 1e-10 && r.pattern_defect < 1e-6 && r.det_relative_error < 1e-6 && r.block_inverse_defect < 1e-8,
                detail: format!(
                    "antisymmetry {anti:.1e}, pattern {:.1e}, det vs formula {:.1e}, inverse blocks {:.1e}",
                    r.pattern_defect, r.det_relative_error, r.block_inverse_defect
                ),
                seconds: clock.elapsed().as_secs_f64(),
            }
        }
        Err(e) => failed(5, name(5), e, clock.elapsed().as_secs_f64()),
    };
    vec![c4, c5]
}

/// Family table and scaling ladder of the tracked experiments: a tanh ramp
/// along the family axis with the soliton started at its inflection point,
/// plus a skew-orthogonal perturbation of X-norm `eps / 2`.
pub fn tracking_config(scale: Scale) -> ExperimentConfig {
    ExperimentConfig {
        n: scale.pick(48, 32),
        length: 30.0,
        speeds: vec![0.0, 0.1, 0.2],
        mus: vec![0.35, 0.4, 0.45, 0.5, 0.55],
        epsilon: 0.05,
        preset: Preset::SmoothRamp,
        amplitude: RAMP_AMPLITUDE,
        boundary_tol: 1.0,
        init_mu: MU,
        offset: 0.0,
        perturbation: 0.5,
        scaling_eps: vec![0.1, 0.05, 0.025],
        t_budget: scale.pick(40.0, 4.0),
        ..ExperimentConfig::default()
    }
}

/// Criterion 6 on the family table, then criteria 9 and 10 on the same
/// table.
pub fn criteria_6_9_10(scale: Scale) -> Vec<CriterionResult> {
    let clock = Instant::now();
    let cfg = tracking_config(scale);
    let sp = Spectral::new(cfg.grid());
    let family = match commands::build_family(&sp, &cfg, 1) {
        Ok(f) => f,
        Err(e) => {
            let s = clock.elapsed().as_secs_f64();
            return vec![failed(6, name(6), &e, s), failed(9, name(9), &e, s), failed(10, name(10), &e, s)];
        }
    };
    let family_seconds = clock.elapsed().as_secs_f64();
    log::info!("tracking family built in {family_seconds:.0} s");
    let clock = Instant::now();
    let c6 = criterion_6(&sp, &family).unwrap_or_else(|e| failed(6, name(6), e, 0.0));
    let c6 = CriterionResult {
        seconds: clock.elapsed().as_secs_f64(),
        ..c6
    };
    let mut rest = criteria_9_10(&sp, &family, &cfg, scale);
    for r in &mut rest {
        r.seconds += family_seconds / 2.0;
    }
    let mut out = vec![c6];
    out.append(&mut rest);
    out
}

fn max_distance(a: &SolitonParams, b: &SolitonParams) -> f64 {
    a.distance(b).iter().fold(0.0, |m, x| m.max(*x))
}

/// Decomposition of `phi_zeta + xi0` with `xi0` skew-orthogonal to the
/// frame at `zeta`, so that `zeta` is the exact answer.
pub fn criterion_6(sp: &Spectral, family: &Family) -> Result<CriterionResult> {
    let zeta = SolitonParams {
        y: [0.7, -0.4, 1.1],
        v: [0.0, 0.0, 0.13],
        theta: 0.3,
        mu: 0.47,
    };
    let profile = family.profile(sp, zeta.v, zeta.mu)?;
    let omega = OmegaMatrix::from_frame(&profile.frame)?;
    let projector = SkewProjector::new(&profile.frame, &omega.entries)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = projector.project(&spectrum::smooth_random_field(sp, &mut rng, Sector::Complex));
    let opts = DecompositionOptions {
        tol: 1e-11,
        ..DecompositionOptions::default()
    };
    let guess = SolitonParams {
        y: [0.75, -0.45, 1.05],
        v: [0.0, 0.0, 0.12],
        theta: 0.32,
        mu: 0.475,
    };
    let mut worst_constraint: f64 = 0.0;
    let mut worst_zeta: f64 = 0.0;
    let mut worst_xi: f64 = 0.0;
    let mut worst_equivariance: f64 = 0.0;
    let mut pass = true;
    for size in [1e-4, 1e-3, 1e-2] {
        let xi0 = noise.scaled(size / noise.norm());
        let psi = symplectic::to_lab_frame(sp, &profile.phi.add(&xi0), zeta.y, zeta.theta);
        let dec = symplectic::skew_decompose(sp, &psi, &guess, family, &opts)?;
        let rel_constraint = dec.constraint_norm / psi.norm_sq();
        let dz = max_distance(&dec.params, &zeta);
        let dxi = dec.residual_field.sub(&xi0).norm() / size;
        // shift by a and rotate by beta: the parameters move by (a, beta)
        let a = [0.35, -0.2, 0.5];
        let beta = 0.9;
        let moved = symplectic::to_lab_frame(sp, &psi, a, beta);
        let shifted_guess = SolitonParams {
            y: [guess.y[0] + a[0], guess.y[1] + a[1], guess.y[2] + a[2]],
            theta: guess.theta + beta,
            ..guess
        };
        let dec2 = symplectic::skew_decompose(sp, &moved, &shifted_guess, family, &opts)?;
        let expect = SolitonParams {
            y: [dec.params.y[0] + a[0], dec.params.y[1] + a[1], dec.params.y[2] + a[2]],
            theta: dec.params.theta + beta,
            ..dec.params
        };
        let eq = max_distance(&dec2.params, &expect).max(dec2.residual_field.sub(&dec.residual_field).norm());
        pass &= rel_constraint < 1e-9 && dz < 1e-6 && dxi < 1e-2 && eq < 1e-8;
        worst_constraint = worst_constraint.max(rel_constraint);
        worst_zeta = worst_zeta.max(dz);
        worst_xi = worst_xi.max(dxi);
        worst_equivariance = worst_equivariance.max(eq);
    }
    Ok(CriterionResult {
        id: 6,
        name: name(6),
        pass,
        detail: format!(
            "constraint/|psi|^2 {worst_constraint:.1e} < 1e-9, |dzeta| {worst_zeta:.1e} < 1e-6, |dxi|/|xi0| {worst_xi:.1e} < 1e-2, equivariance {worst_equivariance:.1e} < 1e-8"
        ),
        seconds: 0.0,
    })
}

fn criteria_9_10(sp: &Spectral, family: &Family, cfg: &ExperimentConfig, scale: Scale) -> Vec<CriterionResult> {
    let clock = Instant::now();
    let runs = match commands::scaling_runs(sp, family, cfg, 1, 1) {
        Ok(r) => r,
        Err(e) => {
            let s = clock.elapsed().as_secs_f64();
            return vec![failed(9, name(9), &e, s), failed(10, name(10), &e, s)];
        }
    };
    let summaries: Vec<_> = runs.iter().map(|(_, s)| s.clone()).collect();
    let report = modulation::scaling_study(&summaries);
    let t9 = clock.elapsed().as_secs_f64();
    let exps: Vec<String> = report.fits.iter().map(|f| format!("{} {:.2}", f.quantity, f.exponent)).collect();
    let horizons: Vec<String> = summaries.iter().map(|s| format!("{}", s.t_reached)).collect();
    let c9 = CriterionResult {
        id: 9,
        name: name(9),
        pass: report.pass && t9 < 8.0 * 3600.0 && summaries.iter().all(|s| s.status == modulation::TrackStatus::Completed),
        detail: format!(
            "exponents [{}] in [1.6, 2.4]; sup |xi|_X/eps = {:.3}; horizons {}",
            exps.join(", "),
            report.xi_constant,
            horizons.join("/")
        ),
        seconds: t9,
    };
    let clock = Instant::now();
    let c10 = (|| -> Result<CriterionResult> {
        let opts = box30_options();
        let gs = groundstate::solve_unboosted(sp, MU, 1.0, &opts)?;
        let frame = groundstate::tangent_frame(sp, &gs, &opts)?;
        let omega = OmegaMatrix::from_frame(&frame.vectors)?;
        let co = spectrum::coercivity_estimate(sp, &gs, &frame, &omega.entries, scale.pick(500, 100), 5)?;
        let trace = &runs
            .iter()
            .find(|(t, _)| (t.eps - 0.05).abs() < 1e-12)
            .ok_or_else(|| hartree_lab::LabError::ContractViolation("no eps = 0.05 run".into()))?
            .0;
        let sw = modulation::lyapunov_sandwich(trace, co.rho_hat);
        Ok(CriterionResult {
            id: 10,
            name: name(10),
            pass: co.rho_hat > 0.0 && sw.pass,
            detail: format!(
                "rho_hat {:.3e} over {} probes; lower constant {:.3}, upper constant {:.3} (< {}) on {} samples",
                co.rho_hat,
                co.samples,
                sw.lower_constant,
                sw.upper_constant,
                modulation::SANDWICH_CONSTANT_MAX,
                sw.samples
            ),
            seconds: clock.elapsed().as_secs_f64(),
        })
    })()
    .unwrap_or_else(|e| failed(10, name(10), e, clock.elapsed().as_secs_f64()));
    vec![c9, c10]
}

fn conservation_grid(scale: Scale) -> Grid {
    grid(scale.pick(64, 32), 30.0)
}

/// Mass and energy in the well, momentum without potential, and the
/// Ehrenfest residual under time-step refinement.
pub fn criterion_7(scale: Scale) -> CriterionResult {
    let clock = Instant::now();
    let run = || -> Result<(bool, String)> {
        let sp = Spectral::new(conservation_grid(scale));
        let opts = box30_options();
        let t_end = scale.pick(20.0, 2.0);
        let rest = groundstate::solve_unboosted(&sp, MU, 1.0, &opts)?;
        let eps = 0.05;
        let pot = well(eps, &sp.grid())?;
        let psi0 = symplectic::to_lab_frame(&sp, &rest.field, ez(0.1 / eps), 0.0);
        let cfg = |dt: f64, t_end: f64| EvolutionConfig {
            dt,
            t_end,
            monitor_stride: 10,
            x_eps: eps,
            ..EvolutionConfig::default()
        };
        let (_, well_trace) = evolution::evolve(&sp, &psi0, &cfg(0.01, t_end), Some(&pot))?;
        let dn = well_trace.mass_drift();
        let dh = well_trace.energy_drift();
        let ehrenfest = evolution::ehrenfest_residual(&well_trace)?;

        let moving = groundstate::solve_boosted(&sp, ez(0.2), MU, 1.0, Some(&rest), &opts)?;
        let (_, free_trace) = evolution::evolve(&sp, &moving.field, &cfg(0.01, t_end), None)?;
        let dp = free_trace.momentum_drift();

        // refinement in dt with the sample spacing refined alongside
        let t_ref = 2.0;
        let coarse = evolution::ehrenfest_residual(&evolution::evolve(&sp, &psi0, &cfg(0.02, t_ref), Some(&pot))?.1)?;
        let fine = evolution::ehrenfest_residual(&evolution::evolve(&sp, &psi0, &cfg(0.01, t_ref), Some(&pot))?.1)?;
        let order = (coarse / fine).log2();
        let pass = dn < 1e-8 && dh < 1e-7 && dp < 1e-7 && ehrenfest < 1e-4 && (1.5..=2.5).contains(&order);
        Ok((
            pass,
            format!(
                "drifts N {dn:.1e} < 1e-8, H {dh:.1e} < 1e-7, P {dp:.1e} < 1e-7; Ehrenfest {ehrenfest:.1e} < 1e-4, order {order:.2} ({coarse:.1e} -> {fine:.1e})"
            ),
        ))
    };
    match run() {
        Ok((pass, detail)) => CriterionResult {
            id: 7,
            name: name(7),
            pass,
            detail,
            seconds: clock.elapsed().as_secs_f64(),
        },
        Err(e) => failed(7, name(7), e, clock.elapsed().as_secs_f64()),
    }
}

/// Tracking of the exact moving soliton `phi_{0.2 e3, 0.5}` without
/// potential.
pub fn criterion_8(scale: Scale) -> CriterionResult {
    let clock = Instant::now();
    let run = || -> Result<(bool, String)> {
        let cfg = ExperimentConfig {
            n: scale.pick(64, 32),
            length: 30.0,
            speeds: vec![0.0, 0.1, 0.2, 0.3],
            mus: vec![0.45, 0.5, 0.55],
            // the slowest-decaying node (v = 0.3, mu = 0.45, delta = 0.81)
            // reaches ~3e-5 of its peak on the faces, still 12 decay
            // lengths from the center
            boundary_tol: 5e-5,
            perturbation: 0.0,
            ..ExperimentConfig::default()
        };
        let sp = Spectral::new(cfg.grid());
        let family = commands::build_family(&sp, &cfg, 1)?;
        let v = 0.2;
        let zeta = SolitonParams {
            y: [0.0; 3],
            v: ez(v),
            theta: 0.0,
            mu: MU,
        };
        let psi0 = symplectic::soliton(&sp, &family, &zeta)?;
        let t_end = scale.pick(10.0, 2.0);
        let tcfg = TrackConfig {
            evolution: EvolutionConfig {
                dt: 0.01,
                t_end,
                monitor_stride: 20,
                ..EvolutionConfig::default()
            },
            decomposition: DecompositionOptions::default(),
            eps: 0.0,
            wall_budget: None,
        };
        let trace = modulation::track(&sp, &psi0, Some(&zeta), &family, None, &tcfg)?;
        let last = trace.samples.last().expect("track returns at least one sample");
        let dy = {
            let d = [last.zeta.y[0], last.zeta.y[1], last.zeta.y[2] - v * last.t];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        };
        let xi_end = last.xi_hhalf;
        let xi_sup = trace.samples.iter().map(|s| s.xi_hhalf).fold(0.0, f64::max);
        let pass = (last.t - t_end).abs() < 1e-9 && dy < 1e-3 && xi_end < 1e-4;
        Ok((
            pass,
            format!(
                "at t = {}: |y - v t| {dy:.2e} < 1e-3, |xi|_H1/2 {xi_end:.2e} < 1e-4 (sup {xi_sup:.2e})",
                last.t
            ),
        ))
    };
    match run() {
        Ok((pass, detail)) => CriterionResult {
            id: 8,
            name: name(8),
            pass,
            detail,
            seconds: clock.elapsed().as_secs_f64(),
        },
        Err(e) => failed(8, name(8), e, clock.elapsed().as_secs_f64()),
    }
}

/// Naive triple-sum DFT in FFT index order, `sign = -1` forward.
fn slow_dft(data: &[Complex64], n: usize, sign: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); n * n * n];
    for (kidx, o) in out.iter_mut().enumerate() {
        let k = [kidx % n, (kidx / n) % n, kidx / (n * n)];
        let mut acc = Complex64::default();
        for (xidx, d) in data.iter().enumerate() {
            let x = [xidx % n, (xidx / n) % n, xidx / (n * n)];
            let phase = (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]) % n;
            acc += d * Complex64::from_polar(1.0, sign * 2.0 * PI * phase as f64 / n as f64);
        }
        *o = acc;
    }
    out
}

/// Applies `symbol(kvec, nyquist)` through the slow transforms; `kvec` holds
/// the signed wavenumbers and `nyquist[a]` marks the Nyquist plane.
fn slow_multiplier(f: &Field, l: f64, symbol: impl Fn([f64; 3], [bool; 3]) -> Complex64) -> Field {
    let n = f.grid.n();
    let mut data = slow_dft(&f.to_complex(), n, -1.0);
    let freq = |i: usize| if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
    for (idx, z) in data.iter_mut().enumerate() {
        let c = [idx % n, (idx / n) % n, idx / (n * n)];
        let k = c.map(|i| 2.0 * PI * freq(i) / l);
        *z *= symbol(k, c.map(|i| i == n / 2));
    }
    let back = slow_dft(&data, n, 1.0);
    let scaled: Vec<Complex64> = back.iter().map(|z| z / (n * n * n) as f64).collect();
    Field::from_complex(f.grid, &scaled)
}

/// Dense matrix of a real-linear operator on the chosen components.
fn dense(op: &dyn Fn(&Field) -> Field, grid: Grid, re: bool, im: bool) -> DMatrix<f64> {
    let n = grid.len();
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
    let mut vals: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals.truncate(k);
    vals
}

fn max_diff(a: &Field, b: &Field) -> f64 {
    let d = a.sub(b).max_abs();
    d / b.max_abs().max(1.0)
}

/// Dense diagonalization against Lanczos and spectral multipliers against
/// naive transforms on `8^3` grids.
pub fn criterion_11() -> CriterionResult {
    let clock = Instant::now();
    let run = || -> Result<(bool, String)> {
        let l = 8.0;
        let g = grid(8, l);
        let sp = Spectral::new(g);
        let phi = Field::from_fn(g, |p| {
            let r2 = p[0] * p[0] + 1.3 * p[1] * p[1] + 0.7 * p[2] * p[2];
            Complex64::new(1.2 * (-0.4 * r2).exp(), 0.1 * p[0] * (-0.5 * r2).exp())
        });
        // eigenvalues
        let mut eig_err: f64 = 0.0;
        let hess = Hessian::new(&sp, &phi, ez(0.2), 0.5, 1.0)?;
        let full = |u: &Field| hess.apply(u);
        let lopts = LanczosOptions {
            tol: 1e-9,
            shift: -5.0,
            max_basis: 200,
            ..LanczosOptions::default()
        };
        let pairs = spectrum::lowest_eigenpairs(&full, &sp, 5, Sector::Complex, &lopts)?;
        for (a, b) in pairs.values.iter().zip(dense_lowest(dense(&full, g, true, true), 5)) {
            eig_err = eig_err.max((a - b).abs() / b.abs().max(1.0));
        }
        let real = Field {
            grid: g,
            re: phi.re.clone(),
            im: vec![0.0; g.len()],
        };
        let h11 = Hessian::new(&sp, &real, [0.0; 3], 0.4, 1.0)?;
        let l11 = |u: &Field| Field {
            grid: g,
            re: h11.apply_l11(&u.re),
            im: vec![0.0; u.len()],
        };
        let pairs = spectrum::lowest_eigenpairs(&l11, &sp, 4, Sector::Real, &lopts)?;
        for (a, b) in pairs.values.iter().zip(dense_lowest(dense(&l11, g, true, false), 4)) {
            eig_err = eig_err.max((a - b).abs() / b.abs().max(1.0));
        }
        // multipliers
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = spectrum::smooth_random_field(&sp, &mut rng, Sector::Complex).add(&phi);
        let m = 0.7;
        let v = [0.1, -0.25, 0.3];
        let odd = |k: [f64; 3], nyq: [bool; 3]| std::array::from_fn::<f64, 3, _>(|a| if nyq[a] { 0.0 } else { k[a] });
        let kinetic = |k: [f64; 3]| {
            let q = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            (q + m * m).sqrt() - m
        };
        let boost = |k: [f64; 3], nyq: [bool; 3]| {
            let ko = odd(k, nyq);
            -(v[0] * ko[0] + v[1] * ko[1] + v[2] * ko[2])
        };
        let mut mult_err: f64 = 0.0;
        let check = |got: Field, want: Field, err: &mut f64| *err = err.max(max_diff(&got, &want));
        check(sp.apply_kinetic(&f, m)?, slow_multiplier(&f, l, |k, _| kinetic(k).into()), &mut mult_err);
        check(sp.apply_boost(&f, v)?, slow_multiplier(&f, l, |k, n| boost(k, n).into()), &mut mult_err);
        check(
            sp.apply_linear(&f, m, 0.45, v),
            slow_multiplier(&f, l, |k, n| (kinetic(k) + 0.45 + boost(k, n)).into()),
            &mut mult_err,
        );
        for a in 0..3 {
            check(
                sp.derivative(&f, a),
                slow_multiplier(&f, l, |k, n| Complex64::new(0.0, odd(k, n)[a])),
                &mut mult_err,
            );
        }
        let t = 0.37;
        check(
            sp.propagate(&f, t, |i| sp.kinetic_symbol_at(i, m)),
            slow_multiplier(&f, l, |k, _| Complex64::from_polar(1.0, -t * kinetic(k))),
            &mut mult_err,
        );
        let rho = f.density();
        let phi_h = Field::real(g, sp.hartree_potential(&rho)?)?;
        let r = 0.5 * l;
        let coulomb = |k: [f64; 3]| {
            let q = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if q == 0.0 {
                2.0 * PI * r * r
            } else {
                4.0 * PI * (1.0 - (q.sqrt() * r).cos()) / q
            }
        };
        let rho_field = Field::real(g, rho)?;
        check(phi_h, slow_multiplier(&rho_field, l, |k, _| coulomb(k).into()), &mut mult_err);
        Ok((
            eig_err < 1e-8 && mult_err < 1e-12,
            format!("eigenvalues {eig_err:.1e} < 1e-8, multipliers {mult_err:.1e} < 1e-12"),
        ))
    };
    match run() {
        Ok((pass, detail)) => CriterionResult {
            id: 11,
            name: name(11),
            pass,
            detail,
            seconds: clock.elapsed().as_secs_f64(),
        },
        Err(e) => failed(11, name(11), e, clock.elapsed().as_secs_f64()),
    }
}
