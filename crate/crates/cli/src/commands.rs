//! Subcommand implementations. Each writes its artifacts plus a manifest
//! into the output directory.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use hartree_lab::evolution::{self, Control, EvolutionConfig};
use hartree_lab::family::Family;
use hartree_lab::groundstate::{self, FamilyScalars, GroundState, TangentFrame};
use hartree_lab::io::{write_json, write_json_lines, CsvTable, Manifest};
use hartree_lab::modulation::{self, ModulationTrace, RunSummary, ScalingReport, TrackConfig};
use hartree_lab::potential::Potential;
use hartree_lab::spectrum::{self, LanczosOptions, Sector};
use hartree_lab::symplectic::{self, DecompositionOptions, OmegaMatrix, SkewProjector, SolitonParams};
use hartree_lab::{Field, LabError, Result, Spectral};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Everything a subcommand needs besides its own arguments.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub config_text: String,
    pub out: PathBuf,
    pub workers: usize,
    pub seed: u64,
    pub resume: Option<PathBuf>,
}

impl RunContext {
    fn manifest(&self, command: &str, artifacts: &[&str]) -> Result<()> {
        let mut m = Manifest::new(command, &self.config_text, self.seed, self.cfg.tolerances());
        m.artifacts = artifacts.iter().map(|s| s.to_string()).collect();
        m.write(&self.out)
    }

    fn spectral(&self) -> Spectral {
        Spectral::new(self.cfg.grid())
    }

    fn potential(&self, eps: f64) -> Result<Potential> {
        Potential::new(self.cfg.potential_spec(eps), &self.cfg.grid())
    }

    fn initial_params(&self, eps: Option<f64>) -> SolitonParams {
        let c = &self.cfg;
        let mut y = c.init_y;
        if let Some(e) = eps {
            y[c.axis] += c.offset / e;
        }
        SolitonParams {
            y,
            v: c.init_v,
            theta: 0.0,
            mu: c.init_mu,
        }
    }
}

/// Logs `l_exp = 1 / sup |grad V|`, `l_sol = 1 / delta` and their ratio.
pub fn log_scales(cfg: &ExperimentConfig, pot: &Potential, delta: Option<f64>) -> Result<(f64, f64, f64)> {
    let l_exp = pot.length_scale(&cfg.grid());
    let delta = match delta {
        Some(d) => d,
        None => groundstate::decay_bound(cfg.init_v, cfg.init_mu, cfg.m)?,
    };
    let l_sol = 1.0 / delta;
    let eps_eff = l_sol / l_exp;
    log::info!("length scales: l_exp = {l_exp:.6}, l_sol = {l_sol:.6}, effective epsilon = {eps_eff:.6}");
    Ok((l_exp, l_sol, eps_eff))
}

type Column = Vec<(GroundState, TangentFrame, FamilyScalars)>;

fn solve_column(sp: &Spectral, cfg: &ExperimentConfig, mu: f64) -> Result<Column> {
    let opts = cfg.solver_options();
    let base = groundstate::solve_unboosted(sp, mu, cfg.m, &opts)?;
    let mut col: Column = Vec::with_capacity(cfg.speeds.len());
    let mut prev = base.clone();
    for &s in &cfg.speeds {
        let mut v = [0.0; 3];
        v[cfg.axis] = s;
        let gs = if s == 0.0 {
            base.clone()
        } else {
            groundstate::solve_boosted(sp, v, mu, cfg.m, Some(&prev), &opts)?
        };
        let frame = groundstate::tangent_frame(sp, &gs, &opts)?;
        let scalars = groundstate::family_scalars(sp, &gs, &frame)?;
        log::info!("node v={s:.3} mu={mu:.3}: residual {:.2e}, N {:.6}, n_mu {:.4}", gs.residual, scalars.n, scalars.n_mu);
        prev = gs.clone();
        col.push((gs, frame, scalars));
    }
    Ok(col)
}

/// Runs `job(i)` for `i < count` on up to `workers` threads; results keep
/// their index order, so the output does not depend on the worker count.
pub fn parallel_map<T: Send>(count: usize, workers: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, count.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= count {
                    break;
                }
                let r = job(i);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Builds the family table, one frequency column per job. Each column
/// starts from its own unboosted solve.
pub fn build_family(sp: &Spectral, cfg: &ExperimentConfig, workers: usize) -> Result<Family> {
    let columns = parallel_map(cfg.mus.len(), workers, |j| solve_column(sp, cfg, cfg.mus[j]));
    let columns: Vec<Column> = columns.into_iter().collect::<Result<_>>()?;
    let mut states: Vec<Column> = (0..cfg.speeds.len()).map(|_| Vec::with_capacity(cfg.mus.len())).collect();
    for col in columns {
        for (i, entry) in col.into_iter().enumerate() {
            states[i].push(entry);
        }
    }
    Family::assemble(sp.grid(), cfg.axis, &cfg.speeds, &cfg.mus, cfg.m, states)
}

fn solve_state(sp: &Spectral, cfg: &ExperimentConfig, v: [f64; 3], mu: f64) -> Result<GroundState> {
    let opts = cfg.solver_options();
    if v == [0.0; 3] {
        groundstate::solve_unboosted(sp, mu, cfg.m, &opts)
    } else {
        groundstate::solve_boosted(sp, v, mu, cfg.m, None, &opts)
    }
}

/// `phi_zeta + xi` with `xi` a seeded smooth field, skew-orthogonal to the
/// tangent frame, of X-norm `size`.
pub fn perturbed_soliton(
    sp: &Spectral,
    family: &Family,
    zeta: &SolitonParams,
    size: f64,
    eps: f64,
    seed: u64,
) -> Result<Field> {
    let profile = family.profile(sp, zeta.v, zeta.mu)?;
    let mut state = profile.phi.clone();
    if size > 0.0 {
        let omega = OmegaMatrix::from_frame(&profile.frame)?;
        let projector = SkewProjector::new(&profile.frame, &omega.entries)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = projector.project(&spectrum::smooth_random_field(sp, &mut rng, Sector::Complex));
        let xnorm = symplectic::x_inner(sp, &xi, &xi, eps, [0.0; 3]).sqrt();
        state.axpy(size / xnorm, &xi);
    }
    Ok(symplectic::to_lab_frame(sp, &state, zeta.y, zeta.theta))
}

fn state_name(v: f64, mu: f64) -> String {
    format!("phi_v{v:+.4}_mu{mu:.4}.prhf")
}

pub fn groundstate(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.cfg;
    let sp = ctx.spectral();
    let family = build_family(&sp, cfg, ctx.workers)?;
    let ns = cfg.speeds.len();
    let nm = cfg.mus.len();
    // signed order puts the non-negative speeds last
    let first = ns - 1;
    let records = &family.records()[first * nm..];
    write_json_lines(&ctx.out.join("family.jsonl"), records)?;
    let states = ctx.out.join("states");
    for i in first..family.speeds().len() {
        for j in 0..nm {
            let path = states.join(state_name(family.speeds()[i], cfg.mus[j]));
            family.node_state(i, j).write_prhf(&path, cfg.m)?;
        }
    }
    let delta = records.iter().filter_map(|r| r.delta).fold(f64::INFINITY, f64::min);
    let pot = ctx.potential(cfg.epsilon)?;
    log_scales(cfg, &pot, delta.is_finite().then_some(delta))?;
    println!(
        "family: {} x {} nodes, largest residual {:.3e}",
        ns,
        nm,
        family.max_node_residual()
    );
    ctx.manifest("groundstate", &["family.jsonl", "states/"])
}

#[derive(Serialize)]
struct SpectrumOutput {
    rest: spectrum::KernelVerdict,
    boosted: Option<spectrum::SpectralReport>,
    coercivity: spectrum::CoercivityReport,
}

/// Kernel verdict at rest, full-Hessian report at `initial.v` when it is
/// nonzero, and the sampled coercivity constant.
pub fn spectrum(ctx: &RunContext) -> Result<bool> {
    let cfg = &ctx.cfg;
    let sp = ctx.spectral();
    let lopts = LanczosOptions {
        tol: cfg.lanczos_tol,
        seed: ctx.seed,
        ..LanczosOptions::default()
    };
    let rest = solve_state(&sp, cfg, [0.0; 3], cfg.init_mu)?;
    let pot = ctx.potential(cfg.epsilon)?;
    log_scales(cfg, &pot, rest.decay_rate)?;
    let verdict = spectrum::verify_kernel_assumption(&sp, &rest, &lopts)?;
    let (gs, boosted) = if cfg.init_v == [0.0; 3] {
        (rest, None)
    } else {
        let gs = solve_state(&sp, cfg, cfg.init_v, cfg.init_mu)?;
        let frame = groundstate::tangent_frame(&sp, &gs, &cfg.solver_options())?;
        let report = spectrum::full_spectrum_report(&sp, &gs, &frame, &lopts)?;
        (gs, Some(report))
    };
    let frame = groundstate::tangent_frame(&sp, &gs, &cfg.solver_options())?;
    let omega = OmegaMatrix::from_frame(&frame.vectors)?;
    let coercivity = spectrum::coercivity_estimate(&sp, &gs, &frame, &omega.entries, cfg.coercivity_samples, ctx.seed)?;
    println!(
        "L11 kernel_dim {} (gap {:.3e}), L22 kernel_dim {}: {}",
        verdict.l11.kernel_dim,
        verdict.l11.gap,
        verdict.l22.kernel_dim,
        if verdict.pass { "PASS" } else { "FAIL" }
    );
    if let Some(b) = &boosted {
        println!(
            "full Hessian at v = {:?}: {} negative, kernel_dim {}",
            b.v, b.negative_count, b.kernel_dim
        );
    }
    println!("coercivity estimate rho_hat = {:.4e} over {} probes", coercivity.rho_hat, coercivity.samples);
    let pass = verdict.pass && boosted.as_ref().is_none_or(|b| b.pass) && coercivity.pass;
    write_json(
        &ctx.out.join("spectrum.json"),
        &SpectrumOutput {
            rest: verdict,
            boosted,
            coercivity,
        },
    )?;
    ctx.manifest("spectrum", &["spectrum.json"])?;
    Ok(pass)
}

/// Checks of one `Omega` computed from a tangent frame.
#[derive(Clone, Debug, Serialize)]
pub struct OmegaReport {
    pub v: [f64; 3],
    pub mu: f64,
    pub entries: [[f64; 8]; 8],
    pub antisymmetry: f64,
    /// largest entry that vanishes for `v` along the axis, relative to `max |Omega|`
    pub pattern_defect: f64,
    pub det: f64,
    pub det_formula: f64,
    pub det_relative_error: f64,
    pub block_inverse_defect: f64,
}

pub fn omega_report(frame: &[Field], v: [f64; 3], mu: f64, axis: usize) -> Result<OmegaReport> {
    let omega = OmegaMatrix::from_frame(frame)?;
    let det_formula = omega.aligned_det(axis);
    Ok(OmegaReport {
        v,
        mu,
        entries: omega.entries,
        antisymmetry: omega.antisymmetry_defect(),
        pattern_defect: omega.aligned_pattern_defect(axis).0,
        det: omega.det,
        det_formula,
        det_relative_error: (omega.det - det_formula).abs() / det_formula.abs(),
        block_inverse_defect: omega.block_inverse_defect()?,
    })
}

pub fn omega(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.cfg;
    let sp = ctx.spectral();
    let family = build_family(&sp, cfg, ctx.workers)?;
    let mut reports = Vec::new();
    for &s in family.speeds() {
        for &mu in family.mus() {
            let mut v = [0.0; 3];
            v[cfg.axis] = s;
            let p = family.profile(&sp, v, mu)?;
            reports.push(omega_report(&p.frame, v, mu, cfg.axis)?);
        }
    }
    let worst = |f: fn(&OmegaReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    println!(
        "{} nodes: antisymmetry {:.2e}, pattern {:.2e}, det {:.2e}, inverse blocks {:.2e}",
        reports.len(),
        worst(|r| r.antisymmetry),
        worst(|r| r.pattern_defect),
        worst(|r| r.det_relative_error),
        worst(|r| r.block_inverse_defect)
    );
    write_json_lines(&ctx.out.join("omega.jsonl"), &reports)?;
    ctx.manifest("omega", &["omega.jsonl"])
}

fn evolution_config(cfg: &ExperimentConfig, eps: f64, checkpoint_dir: Option<PathBuf>) -> EvolutionConfig {
    EvolutionConfig {
        dt: cfg.dt,
        t_end: cfg.t_end,
        monitor_stride: cfg.monitor_stride,
        checkpoint_every: cfg.checkpoint_every,
        checkpoint_dir,
        x_eps: eps,
        nonlinear: cfg.nonlinear,
        m: cfg.m,
    }
}

#[derive(Serialize)]
struct EvolveSummary {
    t0: f64,
    t_end: f64,
    mass_drift: f64,
    energy_drift: f64,
    momentum_drift: f64,
    mass_warning: bool,
    accuracy_warning: bool,
}

/// Raw PDE run from the soliton at the `initial.*` parameters (or from a
/// checkpoint).
pub fn evolve(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.cfg;
    let sp = ctx.spectral();
    let pot = ctx.potential(cfg.epsilon)?;
    let (psi0, t0) = match &ctx.resume {
        Some(path) => {
            let (psi, info) = evolution::read_checkpoint(path)?;
            if !psi.grid.same_as(&sp.grid()) {
                return Err(LabError::InvalidField(format!(
                    "checkpoint grid (n = {}, L = {}) differs from the configured grid",
                    psi.grid.n(),
                    psi.grid.box_length()
                )));
            }
            log::info!("resuming from {} at t = {} (step {})", path.display(), info.t, info.step);
            (psi, info.t)
        }
        None => {
            let gs = solve_state(&sp, cfg, cfg.init_v, cfg.init_mu)?;
            log_scales(cfg, &pot, gs.decay_rate)?;
            (symplectic::to_lab_frame(&sp, &gs.field, cfg.init_y, 0.0), 0.0)
        }
    };
    let ecfg = evolution_config(cfg, cfg.epsilon, Some(ctx.out.join("checkpoints")));
    let (psi, trace) = evolution::evolve_from(&sp, &psi0, t0, &ecfg, Some(&pot), |_, _, _| Ok(Control::Continue))?;
    trace.to_csv().write(&ctx.out.join("monitor.csv"))?;
    psi.write_prhf(&ctx.out.join("final.prhf"), cfg.m)?;
    let summary = EvolveSummary {
        t0,
        t_end: cfg.t_end,
        mass_drift: trace.mass_drift(),
        energy_drift: trace.energy_drift(),
        momentum_drift: trace.momentum_drift(),
        mass_warning: trace.mass_warning,
        accuracy_warning: trace.accuracy_warning,
    };
    println!(
        "evolved to t = {}: relative drifts N {:.2e}, H {:.2e}, P {:.2e}",
        cfg.t_end, summary.mass_drift, summary.energy_drift, summary.momentum_drift
    );
    write_json(&ctx.out.join("summary.json"), &summary)?;
    ctx.manifest("evolve", &["monitor.csv", "final.prhf", "summary.json"])
}

/// One tracked run in `potential(eps)` from the soliton at the initial
/// parameters.
pub fn tracked_run(
    sp: &Spectral,
    family: &Family,
    cfg: &ExperimentConfig,
    eps: f64,
    zeta: &SolitonParams,
    t_end: f64,
    seed: u64,
) -> Result<(ModulationTrace, RunSummary)> {
    let pot = Potential::new(cfg.potential_spec(eps), &sp.grid())?;
    let psi0 = perturbed_soliton(sp, family, zeta, cfg.perturbation * eps, eps, seed)?;
    let mut evolution = evolution_config(cfg, eps, None);
    evolution.t_end = t_end;
    let tcfg = TrackConfig {
        evolution,
        decomposition: DecompositionOptions {
            tol: cfg.decomposition_tol,
            ..DecompositionOptions::default()
        },
        eps,
        wall_budget: cfg.wall_budget,
    };
    let trace = modulation::track(sp, &psi0, Some(zeta), family, Some(&pot), &tcfg)?;
    let summary = modulation::summarize(&trace, family, Some(&pot), cfg.dt);
    Ok((trace, summary))
}

fn write_run(dir: &Path, trace: &ModulationTrace, summary: &RunSummary) -> Result<()> {
    trace.to_csv().write(&dir.join("modulation.csv"))?;
    trace.monitor.to_csv().write(&dir.join("monitor.csv"))?;
    write_json(&dir.join("summary.json"), summary)
}

pub fn track(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.cfg;
    let sp = ctx.spectral();
    let family = build_family(&sp, cfg, ctx.workers)?;
    log_scales(cfg, &ctx.potential(cfg.epsilon)?, None)?;
    let zeta = ctx.initial_params(None);
    let (trace, summary) = tracked_run(&sp, &family, cfg, cfg.epsilon, &zeta, cfg.t_end, ctx.seed)?;
    println!(
        "tracked to t = {} ({:?}): max |ydot - v| {:.3e}, max |Y| {:.3e}, max ||xi||_X / eps {:.3}",
        summary.t_reached, summary.status, summary.max_drift, summary.max_y, summary.xi_constant
    );
    write_run(&ctx.out, &trace, &summary)?;
    ctx.manifest("track", &["modulation.csv", "monitor.csv", "summary.json"])
}

pub const EFFECTIVE_HEADER: [&str; 9] = ["t", "y1", "y2", "y3", "v1", "v2", "v3", "theta", "mu"];

pub fn effective(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.cfg;
    let sp = ctx.spectral();
    let family = build_family(&sp, cfg, ctx.workers)?;
    let pot = ctx.potential(cfg.epsilon)?;
    log_scales(cfg, &pot, None)?;
    let zeta = ctx.initial_params(None);
    let traj = modulation::effective_integrate(&family, &pot, &zeta, cfg.t_end, cfg.dt)?;
    let mut table = CsvTable::new(&EFFECTIVE_HEADER);
    for s in &traj {
        let mut row = vec![s.t];
        row.extend_from_slice(&s.state.to_array());
        table.push_row(&row);
    }
    table.write(&ctx.out.join("effective.csv"))?;
    let last = traj.last().expect("trajectory starts with the initial state");
    println!("effective motion to t = {}: y = {:?}, v = {:?}, mu = {}", last.t, last.state.y, last.state.v, last.state.mu);
    ctx.manifest("effective", &["effective.csv"])
}

/// Runs every `scaling.eps` to `min(1/eps, scaling.t_budget)` on the worker
/// pool and fits the exponents.
pub fn scaling_runs(
    sp: &Spectral,
    family: &Family,
    cfg: &ExperimentConfig,
    workers: usize,
    seed: u64,
) -> Result<Vec<(ModulationTrace, RunSummary)>> {
    let runs = parallel_map(cfg.scaling_eps.len(), workers, |i| {
        let eps = cfg.scaling_eps[i];
        let mut y = cfg.init_y;
        y[cfg.axis] += cfg.offset / eps;
        let zeta = SolitonParams {
            y,
            v: cfg.init_v,
            theta: 0.0,
            mu: cfg.init_mu,
        };
        let t_end = (1.0 / eps).min(cfg.t_budget);
        log::info!("scaling run eps = {eps}: y0 = {y:?}, t_end = {t_end}");
        tracked_run(sp, family, cfg, eps, &zeta, t_end, seed)
    });
    runs.into_iter().collect()
}

pub fn scaling(ctx: &RunContext) -> Result<bool> {
    let cfg = &ctx.cfg;
    let sp = ctx.spectral();
    let family = build_family(&sp, cfg, ctx.workers)?;
    let runs = scaling_runs(&sp, &family, cfg, ctx.workers, ctx.seed)?;
    for (trace, summary) in &runs {
        write_run(&ctx.out.join(format!("eps_{}", summary.eps)), trace, summary)?;
    }
    let summaries: Vec<RunSummary> = runs.into_iter().map(|(_, s)| s).collect();
    let report: ScalingReport = modulation::scaling_study(&summaries);
    for f in &report.fits {
        println!("{:<18} exponent {:.3} {}", f.quantity, f.exponent, if f.pass { "PASS" } else { "FAIL" });
    }
    println!("sup ||xi||_X / eps over all runs: {:.4}", report.xi_constant);
    write_json(&ctx.out.join("scaling.json"), &report)?;
    ctx.manifest("scaling", &["scaling.json", "eps_*/"])?;
    Ok(report.pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let out = parallel_map(17, 4, |i| i * i);
        assert_eq!(out, (0..17).map(|i| i * i).collect::<Vec<_>>());
        assert!(parallel_map(0, 3, |i| i).is_empty());
    }
}
