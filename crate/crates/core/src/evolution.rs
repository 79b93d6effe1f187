//! Strang splitting for `i psi_t = T psi + V psi - Phi(|psi|^2) psi` with
//! conservation and Ehrenfest monitors and PRHF checkpoints.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::Field;
use crate::functionals;
use crate::groundstate::{CRITICAL_MASS_LOWER, CRITICAL_MASS_UPPER};
use crate::io::{self, CsvTable};
use crate::potential::Potential;
use crate::spectral::{check_mass, Spectral};

/// Largest `dt * max T(k)` before the accuracy warning.
pub const ACCURACY_GUARD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub monitor_stride: usize,
    /// steps between checkpoints; 0 disables them
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// weight of the `|x|` term in the monitored X-norm
    pub x_eps: f64,
    /// false switches off the Hartree term (linear flow)
    pub nonlinear: bool,
    pub m: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            dt: 0.01,
            t_end: 1.0,
            monitor_stride: 10,
            checkpoint_every: 0,
            checkpoint_dir: None,
            x_eps: 0.05,
            nonlinear: true,
            m: 1.0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        check_mass(self.m)?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(LabError::ParameterDomain(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(LabError::ParameterDomain(format!("end time must be non-negative, got {}", self.t_end)));
        }
        if self.monitor_stride == 0 {
            return Err(LabError::ParameterDomain("monitor stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// One Strang step: half potential phase, full kinetic propagator, half
/// potential phase with the refreshed Hartree potential.
pub struct Stepper<'a> {
    sp: &'a Spectral,
    dt: f64,
    kinetic: Vec<Complex64>,
    potential: Option<Vec<f64>>,
    nonlinear: bool,
}

impl<'a> Stepper<'a> {
    /// `dt` may be negative (backward stepping).
    pub fn new(sp: &'a Spectral, potential: Option<&Potential>, m: f64, dt: f64, nonlinear: bool) -> Result<Self> {
        check_mass(m)?;
        let kinetic = (0..sp.grid().len())
            .map(|i| Complex64::from_polar(1.0, -dt * sp.kinetic_symbol_at(i, m)))
            .collect();
        let potential = potential.filter(|p| !p.is_zero()).map(|p| p.sample(&sp.grid()));
        Ok(Stepper {
            sp,
            dt,
            kinetic,
            potential,
            nonlinear,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `psi <- exp(-i tau (V - Phi(|psi|^2))) psi`; exact because the phase
    /// leaves `|psi|` unchanged.
    fn potential_phase(&self, psi: &mut Field, tau: f64) {
        let phi = if self.nonlinear {
            Some(self.sp.hartree_pair(&psi.density(), None).0)
        } else {
            None
        };
        if phi.is_none() && self.potential.is_none() {
            return;
        }
        for i in 0..psi.len() {
            let mut w = 0.0;
            if let Some(v) = &self.potential {
                w += v[i];
            }
            if let Some(p) = &phi {
                w -= p[i];
            }
            let (s, c) = (-tau * w).sin_cos();
            let (a, b) = (psi.re[i], psi.im[i]);
            psi.re[i] = c * a - s * b;
            psi.im[i] = s * a + c * b;
        }
    }

    pub fn step(&self, psi: &Field) -> Field {
        let mut out = psi.clone();
        self.potential_phase(&mut out, 0.5 * self.dt);
        let mut data = self.sp.forward(&out);
        for (z, k) in data.iter_mut().zip(&self.kinetic) {
            *z *= k;
        }
        let mut out = self.sp.inverse(data);
        self.potential_phase(&mut out, 0.5 * self.dt);
        out
    }
}

/// `dt * max_k T(k)`.
pub fn accuracy_number(sp: &Spectral, m: f64, dt: f64) -> f64 {
    let tmax = (0..sp.grid().len()).map(|i| sp.kinetic_symbol_at(i, m)).fold(0.0, f64::max);
    dt.abs() * tmax
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    pub t: f64,
    pub n: f64,
    pub h: f64,
    pub p: [f64; 3],
    pub xnorm: f64,
    /// `-1/2 <psi, grad V psi>`, the Ehrenfest right-hand side
    pub force: [f64; 3],
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MonitorTrace {
    pub samples: Vec<MonitorSample>,
    /// initial mass lies in `[2/pi, 1.4)`
    pub mass_warning: bool,
    pub accuracy_warning: bool,
}

impl MonitorTrace {
    pub const HEADER: [&'static str; 7] = ["t", "N", "H", "Px", "Py", "Pz", "Xnorm"];

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&Self::HEADER);
        for s in &self.samples {
            t.push_row(&[s.t, s.n, s.h, s.p[0], s.p[1], s.p[2], s.xnorm]);
        }
        t
    }

    /// Largest `|N(t) - N(0)| / N(0)` over the trace.
    pub fn mass_drift(&self) -> f64 {
        let n0 = self.samples.first().map_or(0.0, |s| s.n);
        self.samples.iter().map(|s| (s.n - n0).abs() / n0).fold(0.0, f64::max)
    }

    /// Largest `|H(t) - H(0)| / |H(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.samples.first().map_or(0.0, |s| s.h);
        self.samples.iter().map(|s| (s.h - h0).abs() / h0.abs()).fold(0.0, f64::max)
    }

    /// Largest `|P(t) - P(0)|` (absolute, max over components).
    pub fn momentum_drift(&self) -> f64 {
        let p0 = self.samples.first().map_or([0.0; 3], |s| s.p);
        self.samples
            .iter()
            .flat_map(|s| (0..3).map(move |j| (s.p[j] - p0[j]).abs()))
            .fold(0.0, f64::max)
    }

    /// Largest relative jump of the X-norm between consecutive samples.
    pub fn xnorm_max_jump(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].xnorm - w[0].xnorm).abs() / w[0].xnorm.max(1e-300))
            .fold(0.0, f64::max)
    }
}

/// Monitor values of `psi` at time `t`.
pub fn monitor(
    sp: &Spectral,
    psi: &Field,
    t: f64,
    v_sample: Option<&[f64]>,
    grad_v: Option<&[Vec<f64>; 3]>,
    m: f64,
    x_eps: f64,
) -> Result<MonitorSample> {
    let h = functionals::energy(sp, psi, v_sample, m)?;
    let rho = psi.density();
    let mut force = [0.0; 3];
    if let Some(g) = grad_v {
        let h3 = sp.grid().cell_volume();
        for j in 0..3 {
            force[j] = -0.5 * g[j].iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>() * h3;
        }
    }
    Ok(MonitorSample {
        t,
        n: functionals::mass(psi),
        h,
        p: functionals::momentum(sp, psi),
        xnorm: sp.norms(psi, x_eps).x_weight,
        force,
    })
}

/// Returned by the monitor hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub t: f64,
    pub step: usize,
    pub m: f64,
    pub dt: f64,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_checkpoint(path: &Path, psi: &Field, info: &CheckpointInfo) -> Result<()> {
    psi.write_prhf(path, info.m)?;
    io::write_json(&sidecar(path), info)
}

/// Reads a PRHF checkpoint and its JSON sidecar (time and step).
pub fn read_checkpoint(path: &Path) -> Result<(Field, CheckpointInfo)> {
    let (psi, m) = Field::read_prhf(path)?;
    let text = std::fs::read_to_string(sidecar(path))?;
    let info: CheckpointInfo = serde_json::from_str(&text)?;
    if info.m != m {
        return Err(LabError::Format(format!("checkpoint mass parameter {m} differs from sidecar {}", info.m)));
    }
    Ok((psi, info))
}

/// Checks the initial mass against the critical-mass bounds: refuses
/// `N >= 1.4`, returns `true` when `N` lies in `[2/pi, 1.4)`.
pub fn check_initial_mass(psi: &Field) -> Result<bool> {
    let n = functionals::mass(psi);
    if n >= CRITICAL_MASS_UPPER {
        return Err(LabError::ParameterDomain(format!(
            "initial mass {n} is not below the critical-mass upper bound {CRITICAL_MASS_UPPER}"
        )));
    }
    if n >= CRITICAL_MASS_LOWER {
        log::warn!("initial mass {n} lies between 2/pi and {CRITICAL_MASS_UPPER}; global existence is not guaranteed");
        return Ok(true);
    }
    Ok(false)
}

/// Evolves `psi0` from `t0` to `cfg.t_end`, calling `hook(step, t, psi)` at
/// every monitor sample (including the first). The hook may stop the run.
pub fn evolve_from(
    sp: &Spectral,
    psi0: &Field,
    t0: f64,
    cfg: &EvolutionConfig,
    potential: Option<&Potential>,
    mut hook: impl FnMut(usize, f64, &Field) -> Result<Control>,
) -> Result<(Field, MonitorTrace)> {
    cfg.validate()?;
    psi0.validate()?;
    let mut trace = MonitorTrace {
        mass_warning: check_initial_mass(psi0)?,
        ..Default::default()
    };
    let acc = accuracy_number(sp, cfg.m, cfg.dt);
    if acc >= ACCURACY_GUARD {
        log::warn!("dt * max T(k) = {acc:.3} exceeds the accuracy guard {ACCURACY_GUARD}");
        trace.accuracy_warning = true;
    }
    let stepper = Stepper::new(sp, potential, cfg.m, cfg.dt, cfg.nonlinear)?;
    let grid = sp.grid();
    let pot = potential.filter(|p| !p.is_zero());
    let v_sample = pot.map(|p| p.sample(&grid));
    let grad_v = pot.map(|p| p.sample_gradient(&grid));
    let total = ((cfg.t_end - t0) / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let mut psi = psi0.clone();
    let mut last_good = psi.clone();
    let mut last_good_t = t0;
    for step in 0..=total {
        let t = t0 + step as f64 * cfg.dt;
        if step > 0 {
            psi = stepper.step(&psi);
            if !psi.is_finite() {
                if let Some(dir) = &cfg.checkpoint_dir {
                    let path = dir.join("last_good.prhf");
                    write_checkpoint(
                        &path,
                        &last_good,
                        &CheckpointInfo {
                            t: last_good_t,
                            step: step - 1,
                            m: cfg.m,
                            dt: cfg.dt,
                        },
                    )?;
                }
                return Err(LabError::BlowUp {
                    time: t,
                    reason: "non-finite field after a splitting step".into(),
                });
            }
        }
        if step % cfg.monitor_stride == 0 || step == total {
            let s = monitor(sp, &psi, t, v_sample.as_deref(), grad_v.as_ref(), cfg.m, cfg.x_eps)?;
            trace.samples.push(s);
            last_good.clone_from(&psi);
            last_good_t = t;
            if hook(step, t, &psi)? == Control::Stop {
                break;
            }
        }
        if cfg.checkpoint_every > 0 && step > 0 && step % cfg.checkpoint_every == 0 {
            if let Some(dir) = &cfg.checkpoint_dir {
                write_checkpoint(
                    &dir.join("checkpoint.prhf"),
                    &psi,
                    &CheckpointInfo {
                        t,
                        step,
                        m: cfg.m,
                        dt: cfg.dt,
                    },
                )?;
            }
        }
    }
    Ok((psi, trace))
}

pub fn evolve(sp: &Spectral, psi0: &Field, cfg: &EvolutionConfig, potential: Option<&Potential>) -> Result<(Field, MonitorTrace)> {
    evolve_from(sp, psi0, 0.0, cfg, potential, |_, _, _| Ok(Control::Continue))
}

/// Largest component of `dP/dt - F` over interior samples, with `dP/dt` by
/// central differences of the monitored momentum.
pub fn ehrenfest_residual(trace: &MonitorTrace) -> Result<f64> {
    let s = &trace.samples;
    if s.len() < 5 {
        return Err(LabError::ParameterDomain(format!(
            "the Ehrenfest residual needs at least 5 samples, got {}",
            s.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for i in 1..s.len() - 1 {
        let dt = s[i + 1].t - s[i - 1].t;
        for j in 0..3 {
            let dp = (s[i + 1].p[j] - s[i - 1].p[j]) / dt;
            worst = worst.max((dp - s[i].force[j]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::potential::{Preset, PotentialSpec};

    fn bump(g: Grid) -> Field {
        Field::from_fn(g, |p| {
            let r2 = p[0] * p[0] + p[1] * p[1] + (p[2] - 0.5) * (p[2] - 0.5);
            Complex64::new(0.3 * (-0.3 * r2).exp(), 0.1 * p[0] * (-0.4 * r2).exp())
        })
    }

    #[test]
    fn linear_flow_propagates_plane_waves_exactly() {
        let g = Grid::new(16, 12.0).unwrap();
        let sp = Spectral::new(g);
        let k = [2.0 * std::f64::consts::TAU / 12.0, 0.0, -std::f64::consts::TAU / 12.0];
        let wave = |t: f64| {
            let om = ((k[0] * k[0] + k[2] * k[2]) + 1.0f64).sqrt() - 1.0;
            Field::from_fn(g, move |p| Complex64::from_polar(0.1, k[0] * p[0] + k[2] * p[2] - om * t))
        };
        let st = Stepper::new(&sp, None, 1.0, 0.05, false).unwrap();
        let mut psi = wave(0.0);
        for _ in 0..20 {
            psi = st.step(&psi);
        }
        assert!(psi.sub(&wave(1.0)).max_abs() < 1e-10);
    }

    #[test]
    fn backward_step_inverts_forward_step() {
        let g = Grid::new(16, 12.0).unwrap();
        let sp = Spectral::new(g);
        let pot = Potential::new(
            PotentialSpec {
                preset: Preset::GaussianWell,
                epsilon: 0.2,
                ..PotentialSpec::default()
            },
            &g,
        )
        .unwrap();
        let psi = bump(g);
        let f = Stepper::new(&sp, Some(&pot), 1.0, 0.02, true).unwrap();
        let b = Stepper::new(&sp, Some(&pot), 1.0, -0.02, true).unwrap();
        let back = b.step(&f.step(&psi));
        assert!(back.sub(&psi).max_abs() < 1e-10);
    }

    #[test]
    fn gauge_covariance_is_exact() {
        let g = Grid::new(16, 12.0).unwrap();
        let sp = Spectral::new(g);
        let st = Stepper::new(&sp, None, 1.0, 0.02, true).unwrap();
        let psi = bump(g);
        let a = st.step(&psi.rotate_phase(0.7));
        let b = st.step(&psi).rotate_phase(0.7);
        assert!(a.sub(&b).max_abs() < 1e-12);
    }

    #[test]
    fn mass_is_conserved_to_round_off_and_refusal_above_critical_bound() {
        let g = Grid::new(16, 12.0).unwrap();
        let sp = Spectral::new(g);
        let cfg = EvolutionConfig {
            t_end: 0.5,
            dt: 0.05,
            monitor_stride: 2,
            ..Default::default()
        };
        let (_, tr) = evolve(&sp, &bump(g), &cfg, None).unwrap();
        assert!(tr.mass_drift() < 1e-13);
        assert_eq!(tr.samples.len(), 6);
        let heavy = bump(g).scaled(6.0);
        assert!(functionals::mass(&heavy) >= CRITICAL_MASS_UPPER);
        assert!(matches!(evolve(&sp, &heavy, &cfg, None), Err(LabError::ParameterDomain(_))));
    }

    #[test]
    fn ehrenfest_needs_five_samples_and_vanishes_without_potential() {
        let g = Grid::new(24, 12.0).unwrap();
        let sp = Spectral::new(g);
        let cfg = EvolutionConfig {
            t_end: 0.3,
            dt: 0.05,
            monitor_stride: 1,
            ..Default::default()
        };
        let (_, tr) = evolve(&sp, &bump(g), &cfg, None).unwrap();
        let r = ehrenfest_residual(&tr).unwrap();
        assert!(r < 1e-8, "{r}");
        let short = MonitorTrace {
            samples: tr.samples[..4].to_vec(),
            ..Default::default()
        };
        assert!(ehrenfest_residual(&short).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let g = Grid::new(8, 6.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.prhf");
        let psi = bump(g);
        let info = CheckpointInfo {
            t: 1.25,
            step: 125,
            m: 1.0,
            dt: 0.01,
        };
        write_checkpoint(&path, &psi, &info).unwrap();
        let (back, i2) = read_checkpoint(&path).unwrap();
        assert_eq!(back, psi);
        assert_eq!(i2.step, 125);
        assert_eq!(i2.t, 1.25);
    }
}
