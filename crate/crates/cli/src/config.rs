//! Flat `section.key = value` experiment configuration.
//!
//! Lines are `section.key = value`; `#` starts a comment; lists are comma
//! separated. Every key has a default, unknown keys are rejected, and every
//! error names the line and the key.

use std::collections::BTreeMap;
use std::path::PathBuf;

use hartree_lab::groundstate::{mu_lower_bound, SolverOptions};
use hartree_lab::potential::{PotentialSpec, Preset};
use hartree_lab::{Grid, LabError, Result};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub length: f64,
    pub m: f64,
    /// coordinate axis of the family velocities, 0-based
    pub axis: usize,
    pub speeds: Vec<f64>,
    pub mus: Vec<f64>,
    pub preset: Preset,
    pub epsilon: f64,
    pub amplitude: f64,
    pub core_fraction: f64,
    pub center: [f64; 3],
    pub solver_tol: f64,
    pub boundary_tol: f64,
    pub max_iter: usize,
    pub mu_margin: f64,
    pub lanczos_tol: f64,
    pub coercivity_samples: usize,
    pub dt: f64,
    pub t_end: f64,
    pub monitor_stride: usize,
    pub checkpoint_every: usize,
    pub nonlinear: bool,
    /// initial soliton: velocity, frequency and position
    pub init_v: [f64; 3],
    pub init_mu: f64,
    pub init_y: [f64; 3],
    /// scaled offset `s0`: the tracked runs start at `y = s0 / eps` along the axis
    pub offset: f64,
    /// `||xi_0||_X` as a fraction of `eps` (0 for exact solitary waves)
    pub perturbation: f64,
    pub decomposition_tol: f64,
    pub wall_budget: Option<f64>,
    pub scaling_eps: Vec<f64>,
    /// simulated time cap of each scaling run (runs target `1/eps`)
    pub t_budget: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 48,
            length: 30.0,
            m: 1.0,
            axis: 2,
            speeds: vec![0.0, 0.1, 0.2],
            mus: vec![0.35, 0.4, 0.45, 0.5, 0.55],
            preset: Preset::SmoothRamp,
            epsilon: 0.05,
            amplitude: 0.1,
            core_fraction: 0.35,
            center: [0.0; 3],
            solver_tol: 1e-10,
            boundary_tol: 2e-5,
            max_iter: 3000,
            mu_margin: 0.05,
            lanczos_tol: 1e-6,
            coercivity_samples: 500,
            dt: 0.01,
            t_end: 10.0,
            monitor_stride: 10,
            checkpoint_every: 0,
            nonlinear: true,
            init_v: [0.0; 3],
            init_mu: 0.5,
            init_y: [0.0; 3],
            offset: 0.0,
            perturbation: 0.5,
            decomposition_tol: 1e-9,
            wall_budget: None,
            scaling_eps: vec![0.1, 0.05, 0.025],
            t_budget: 40.0,
            seed: 1,
            out: PathBuf::from("out"),
        }
    }
}

fn config_error(line: usize, key: &str, message: impl Into<String>) -> LabError {
    LabError::Config {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_f64(line: usize, key: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| config_error(line, key, format!("expected a finite number, got `{s}`")))
}

fn parse_usize(line: usize, key: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| config_error(line, key, format!("expected a non-negative integer, got `{s}`")))
}

fn parse_list(line: usize, key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|p| parse_f64(line, key, p)).collect()
}

fn parse_vec3(line: usize, key: &str, s: &str) -> Result<[f64; 3]> {
    let v = parse_list(line, key, s)?;
    <[f64; 3]>::try_from(v.as_slice()).map_err(|_| config_error(line, key, format!("expected three components, got {}", v.len())))
}

fn parse_bool(line: usize, key: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(config_error(line, key, format!("expected true or false, got `{other}`"))),
    }
}

fn parse_axis(line: usize, key: &str, s: &str) -> Result<usize> {
    match s.trim() {
        "1" | "x" | "x1" => Ok(0),
        "2" | "y" | "x2" => Ok(1),
        "3" | "z" | "x3" => Ok(2),
        other => Err(config_error(line, key, format!("expected an axis 1, 2 or 3, got `{other}`"))),
    }
}

impl ExperimentConfig {
    /// Parses and validates config text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        let mut lines: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(config_error(ln, body, "expected `section.key = value`"));
            };
            let key = key.trim();
            let value = value.trim();
            if key.split('.').count() != 2 {
                return Err(config_error(ln, key, "keys have exactly one dot (`section.key`)"));
            }
            if lines.insert(key.to_string(), ln).is_some() {
                return Err(config_error(ln, key, "key given twice"));
            }
            c.set(ln, key, value)?;
        }
        c.validate(&lines)?;
        Ok(c)
    }

    fn set(&mut self, ln: usize, key: &str, v: &str) -> Result<()> {
        match key {
            "grid.n" => self.n = parse_usize(ln, key, v)?,
            "grid.length" => self.length = parse_f64(ln, key, v)?,
            "physics.m" => self.m = parse_f64(ln, key, v)?,
            "family.axis" => self.axis = parse_axis(ln, key, v)?,
            "family.speeds" => self.speeds = parse_list(ln, key, v)?,
            "family.mus" => self.mus = parse_list(ln, key, v)?,
            "potential.preset" => {
                self.preset = Preset::parse(v)
                    .ok_or_else(|| config_error(ln, key, format!("unknown preset `{v}` (zero, gaussian_well, smooth_ramp, cosine_bump)")))?
            }
            "potential.epsilon" => self.epsilon = parse_f64(ln, key, v)?,
            "potential.amplitude" => self.amplitude = parse_f64(ln, key, v)?,
            "potential.core_fraction" => self.core_fraction = parse_f64(ln, key, v)?,
            "potential.center" => self.center = parse_vec3(ln, key, v)?,
            "solver.tol" => self.solver_tol = parse_f64(ln, key, v)?,
            "solver.boundary_tol" => self.boundary_tol = parse_f64(ln, key, v)?,
            "solver.max_iter" => self.max_iter = parse_usize(ln, key, v)?,
            "solver.mu_margin" => self.mu_margin = parse_f64(ln, key, v)?,
            "spectrum.lanczos_tol" => self.lanczos_tol = parse_f64(ln, key, v)?,
            "spectrum.coercivity_samples" => self.coercivity_samples = parse_usize(ln, key, v)?,
            "evolution.dt" => self.dt = parse_f64(ln, key, v)?,
            "evolution.t_end" => self.t_end = parse_f64(ln, key, v)?,
            "evolution.monitor_stride" => self.monitor_stride = parse_usize(ln, key, v)?,
            "evolution.checkpoint_every" => self.checkpoint_every = parse_usize(ln, key, v)?,
            "evolution.nonlinear" => self.nonlinear = parse_bool(ln, key, v)?,
            "initial.v" => self.init_v = parse_vec3(ln, key, v)?,
            "initial.mu" => self.init_mu = parse_f64(ln, key, v)?,
            "initial.y" => self.init_y = parse_vec3(ln, key, v)?,
            "initial.offset" => self.offset = parse_f64(ln, key, v)?,
            "initial.perturbation" => self.perturbation = parse_f64(ln, key, v)?,
            "track.decomposition_tol" => self.decomposition_tol = parse_f64(ln, key, v)?,
            "track.wall_budget" => self.wall_budget = Some(parse_f64(ln, key, v)?),
            "scaling.eps" => self.scaling_eps = parse_list(ln, key, v)?,
            "scaling.t_budget" => self.t_budget = parse_f64(ln, key, v)?,
            "run.seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| config_error(ln, key, format!("expected an unsigned integer, got `{v}`")))?
            }
            "run.out" => self.out = PathBuf::from(v),
            _ => return Err(config_error(ln, key, "unknown key")),
        }
        Ok(())
    }

    /// Cross-key checks; errors point at the line of the offending key
    /// (line 0 when it was left at its default).
    fn validate(&self, lines: &BTreeMap<String, usize>) -> Result<()> {
        let at = |k: &str| lines.get(k).copied().unwrap_or(0);
        let fail = |k: &str, msg: String| Err(config_error(at(k), k, msg));
        if let Err(e) = Grid::new(self.n, self.length) {
            return fail("grid.n", e.to_string());
        }
        if !(self.m > 0.0) {
            return fail("physics.m", format!("mass parameter must be positive, got {}", self.m));
        }
        if self.speeds.is_empty() || self.mus.len() < 2 {
            return fail("family.mus", "need at least one speed and two frequencies".into());
        }
        if self.speeds.len() >= 2 && self.speeds[0] != 0.0 {
            return fail("family.speeds", "a family table starts at speed 0".into());
        }
        for w in [&self.speeds, &self.mus] {
            if w.len() >= 2 {
                let h = w[1] - w[0];
                if !(h > 0.0) || w.windows(2).any(|p| ((p[1] - p[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) {
                    let k = if std::ptr::eq(w, &self.speeds) { "family.speeds" } else { "family.mus" };
                    return fail(k, "nodes must be increasing and equally spaced".into());
                }
            }
        }
        let vmax = self.speeds.iter().fold(0.0f64, |a, s| a.max(s.abs()));
        for &mu in &self.mus {
            let mut v = [0.0; 3];
            v[self.axis] = vmax;
            let bound = mu_lower_bound(v, self.m).map_err(|e| config_error(at("family.speeds"), "family.speeds", e.to_string()))?;
            if !(mu > bound + self.mu_margin * self.m) {
                return fail(
                    "family.mus",
                    format!(
                        "mu = {mu} violates mu > mu_l(|v|) + margin = {bound:.6} + {} at |v| = {vmax}",
                        self.mu_margin * self.m
                    ),
                );
            }
        }
        match mu_lower_bound(self.init_v, self.m) {
            Ok(b) if self.init_mu > b + self.mu_margin * self.m => {}
            Ok(b) => {
                return fail(
                    "initial.mu",
                    format!("mu = {} violates mu > mu_l(|v|) + margin = {b:.6} + {}", self.init_mu, self.mu_margin * self.m),
                )
            }
            Err(e) => return fail("initial.v", e.to_string()),
        }
        if !(self.epsilon > 0.0) {
            return fail("potential.epsilon", format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.scaling_eps.iter().any(|e| !(*e > 0.0)) {
            return fail("scaling.eps", "every epsilon must be positive".into());
        }
        if !(self.dt > 0.0) {
            return fail("evolution.dt", format!("time step must be positive, got {}", self.dt));
        }
        if self.monitor_stride == 0 {
            return fail("evolution.monitor_stride", "stride must be at least 1".into());
        }
        if !(self.core_fraction > 0.0 && self.core_fraction < 0.5) {
            return fail("potential.core_fraction", format!("must lie in (0, 0.5), got {}", self.core_fraction));
        }
        if self.perturbation < 0.0 || self.perturbation > 1.0 {
            return fail("initial.perturbation", "the perturbation is a fraction of epsilon in [0, 1]".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.n, self.length).expect("validated")
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            boundary_tol: self.boundary_tol,
            max_iter: self.max_iter,
            mu_margin: self.mu_margin,
            ..SolverOptions::default()
        }
    }

    pub fn potential_spec(&self, epsilon: f64) -> PotentialSpec {
        PotentialSpec {
            preset: self.preset,
            epsilon,
            amplitude: self.amplitude,
            center: self.center,
            axis: self.axis,
            core_fraction: self.core_fraction,
        }
    }

    /// Tolerances recorded in manifests.
    pub fn tolerances(&self) -> serde_json::Value {
        serde_json::json!({
            "solver_tol": self.solver_tol,
            "boundary_tol": self.boundary_tol,
            "lanczos_tol": self.lanczos_tol,
            "decomposition_tol": self.decomposition_tol,
            "dt": self.dt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_keys_parse() {
        let c = ExperimentConfig::parse(
            "# comment\ngrid.n = 32\ngrid.length = 24\nfamily.speeds = 0, 0.1\nfamily.axis = 3\n\
             potential.preset = cosine_bump  # trailing\nevolution.nonlinear = false\nrun.seed = 9\n",
        )
        .unwrap();
        assert_eq!(c.n, 32);
        assert_eq!(c.speeds, vec![0.0, 0.1]);
        assert_eq!(c.axis, 2);
        assert_eq!(c.preset, Preset::CosineBump);
        assert!(!c.nonlinear);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = ExperimentConfig::parse("grid.n = 32\n\ngrid.length = abc\n").unwrap_err();
        match e {
            LabError::Config { line, key, .. } => {
                assert_eq!(line, 3);
                assert_eq!(key, "grid.length");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(ExperimentConfig::parse("foo.bar = 1"), Err(LabError::Config { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("grid = 1"), Err(LabError::Config { .. })));
        assert!(matches!(ExperimentConfig::parse("grid.n = 1\ngrid.n = 2"), Err(LabError::Config { line: 2, .. })));
    }

    #[test]
    fn mu_below_lower_bound_names_the_bound() {
        let e = ExperimentConfig::parse("family.speeds = 0, 0.4\nfamily.mus = 0.05, 0.1\n").unwrap_err();
        match e {
            LabError::Config { line, key, message } => {
                assert_eq!(line, 2);
                assert_eq!(key, "family.mus");
                assert!(message.contains("mu_l"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }
}
