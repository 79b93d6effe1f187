//! Slowly varying external potentials `V(x) = A W(eps (x - c))`.
//!
//! A profile `W` with bounded derivatives is only periodic in the box for
//! special `eps`, so each preset is multiplied by a smooth window equal to 1
//! on the core cube `|x_j| <= core` and decaying to 0 (with all derivatives)
//! at the box faces. Inside the core the scaling bound
//! `|d^alpha V| <= A C eps^{|alpha|}` holds with the analytic constant of
//! the profile; the taper is reported separately.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Zero,
    /// `-A exp(-eps^2 |x - c|^2 / 2)`
    GaussianWell,
    /// `A tanh(eps (x_a - c_a))` along `axis`
    SmoothRamp,
    /// `A cos(eps (x_a - c_a))` along `axis`
    CosineBump,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Preset> {
        match s {
            "zero" => Some(Preset::Zero),
            "gaussian_well" => Some(Preset::GaussianWell),
            "smooth_ramp" => Some(Preset::SmoothRamp),
            "cosine_bump" => Some(Preset::CosineBump),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Zero => "zero",
            Preset::GaussianWell => "gaussian_well",
            Preset::SmoothRamp => "smooth_ramp",
            Preset::CosineBump => "cosine_bump",
        }
    }

    /// `sup |d^alpha W|` over `|alpha| <= 3` for the unscaled profile.
    pub fn derivative_constant(&self) -> f64 {
        match self {
            Preset::Zero => 0.0,
            // 1D Gaussian derivatives up to order 3 are bounded by
            // sup |s^3 - 3 s| e^{-s^2/2} = 1.3802; mixed partials are products
            Preset::GaussianWell => 1.3803,
            // sup |tanh'''| = 2
            Preset::SmoothRamp => 2.0,
            Preset::CosineBump => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub preset: Preset,
    pub epsilon: f64,
    pub amplitude: f64,
    pub center: [f64; 3],
    /// direction of the one-dimensional presets
    pub axis: usize,
    /// half-width of the core cube as a fraction of the box length
    pub core_fraction: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec {
            preset: Preset::Zero,
            epsilon: 0.05,
            amplitude: 0.5,
            center: [0.0; 3],
            axis: 2,
            core_fraction: 0.35,
        }
    }
}

/// `e^{-1/t}` for `t > 0`, the building block of the smooth step.
fn flat(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step `s(t)` from 0 (t <= 0) to 1 (t >= 1) and its first
/// derivative.
fn smooth_step(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let a = flat(t);
    let b = flat(1.0 - t);
    let da = a / (t * t);
    let db = -b / ((1.0 - t) * (1.0 - t));
    let s = a / (a + b);
    let ds = (da * (a + b) - a * (da + db)) / ((a + b) * (a + b));
    (s, ds)
}

#[derive(Clone, Debug)]
pub struct Potential {
    spec: PotentialSpec,
    core: f64,
    half: f64,
}

impl Potential {
    pub fn new(spec: PotentialSpec, grid: &Grid) -> Result<Self> {
        if !(spec.epsilon.is_finite() && spec.epsilon > 0.0) {
            return Err(LabError::ParameterDomain(format!("potential epsilon must be positive, got {}", spec.epsilon)));
        }
        if !spec.amplitude.is_finite() {
            return Err(LabError::ParameterDomain("potential amplitude must be finite".into()));
        }
        if spec.axis > 2 {
            return Err(LabError::ParameterDomain(format!("potential axis {} is not 0, 1 or 2", spec.axis)));
        }
        if !(spec.core_fraction > 0.0 && spec.core_fraction < 0.5) {
            return Err(LabError::ParameterDomain(format!(
                "core fraction {} must lie in (0, 0.5)",
                spec.core_fraction
            )));
        }
        let half = 0.5 * grid.box_length();
        let core = spec.core_fraction * grid.box_length();
        if spec.center.iter().any(|c| c.abs() > core) {
            return Err(LabError::ParameterDomain(format!(
                "potential center {:?} outside the core cube |x_j| <= {core}",
                spec.center
            )));
        }
        Ok(Potential { spec, core, half })
    }

    pub fn zero(grid: &Grid) -> Self {
        Potential::new(PotentialSpec::default(), grid).expect("default spec is valid")
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn is_zero(&self) -> bool {
        self.spec.preset == Preset::Zero || self.spec.amplitude == 0.0
    }

    /// Half-width of the cube on which the window equals 1.
    pub fn core(&self) -> f64 {
        self.core
    }

    pub fn in_core(&self, x: [f64; 3]) -> bool {
        x.iter().all(|c| c.abs() <= self.core)
    }

    /// Window factor along one coordinate and its derivative.
    fn window1(&self, s: f64) -> (f64, f64) {
        let a = s.abs();
        let (st, dst) = smooth_step((a - self.core) / (self.half - self.core));
        let w = 1.0 - st;
        let dw = -dst / (self.half - self.core) * s.signum();
        (w, dw)
    }

    /// Unwindowed profile value and gradient.
    fn profile(&self, x: [f64; 3]) -> (f64, [f64; 3]) {
        let e = self.spec.epsilon;
        let a = self.spec.amplitude;
        let d = [x[0] - self.spec.center[0], x[1] - self.spec.center[1], x[2] - self.spec.center[2]];
        match self.spec.preset {
            Preset::Zero => (0.0, [0.0; 3]),
            Preset::GaussianWell => {
                let r2 = e * e * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
                let v = -a * (-0.5 * r2).exp();
                (v, [-e * e * d[0] * v, -e * e * d[1] * v, -e * e * d[2] * v])
            }
            Preset::SmoothRamp => {
                let t = (e * d[self.spec.axis]).tanh();
                let mut g = [0.0; 3];
                g[self.spec.axis] = a * e * (1.0 - t * t);
                (a * t, g)
            }
            Preset::CosineBump => {
                let s = e * d[self.spec.axis];
                let mut g = [0.0; 3];
                g[self.spec.axis] = -a * e * s.sin();
                (a * s.cos(), g)
            }
        }
    }

    /// `V(x)` and `grad V(x)` at a point in box coordinates.
    pub fn value_gradient(&self, x: [f64; 3]) -> (f64, [f64; 3]) {
        let (p, dp) = self.profile(x);
        let w: Vec<(f64, f64)> = x.iter().map(|&s| self.window1(s)).collect();
        let win = w[0].0 * w[1].0 * w[2].0;
        let mut g = [0.0; 3];
        for j in 0..3 {
            let mut dwin = w[j].1;
            for (k, wk) in w.iter().enumerate() {
                if k != j {
                    dwin *= wk.0;
                }
            }
            g[j] = dp[j] * win + p * dwin;
        }
        (p * win, g)
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        self.value_gradient(x).0
    }

    pub fn gradient(&self, x: [f64; 3]) -> [f64; 3] {
        self.value_gradient(x).1
    }

    /// `V` on the grid points.
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len()).map(|i| self.value(grid.point(i))).collect()
    }

    /// `grad V` on the grid points, one vector per component.
    pub fn sample_gradient(&self, grid: &Grid) -> [Vec<f64>; 3] {
        let mut out = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for i in 0..grid.len() {
            let g = self.gradient(grid.point(i));
            for c in 0..3 {
                out[c][i] = g[c];
            }
        }
        out
    }

    /// `l_exp = 1 / sup |grad V|` on the grid.
    pub fn length_scale(&self, grid: &Grid) -> f64 {
        let g = self.sample_gradient(grid);
        let mut sup: f64 = 0.0;
        for i in 0..grid.len() {
            sup = sup.max((g[0][i] * g[0][i] + g[1][i] * g[1][i] + g[2][i] * g[2][i]).sqrt());
        }
        if sup == 0.0 {
            f64::INFINITY
        } else {
            1.0 / sup
        }
    }
}

/// Sampled constants `C_alpha = sup |d^alpha V| / (A eps^{|alpha|})` by order.
#[derive(Clone, Debug, Serialize)]
pub struct DerivativeCertificate {
    /// largest constant over multi-indices of order 0..=3, inside the core
    pub core_constants: [f64; 4],
    /// the same over the whole box, taper included
    pub box_constants: [f64; 4],
    /// analytic bound of the profile
    pub bound: f64,
    pub pass: bool,
}

/// All multi-indices `alpha` with `|alpha| <= 3`, as exponent triples.
fn multi_indices() -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in 0..=3u32 {
        for b in 0..=(3 - a) {
            for c in 0..=(3 - a - b) {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// `d^alpha V(x)` by nested central differences of the analytic potential.
fn difference(pot: &Potential, x: [f64; 3], alpha: [u32; 3], step: f64) -> f64 {
    // expand prod_j D_j^{alpha_j} as a sum over stencil offsets
    let weights = |p: u32| -> Vec<(f64, f64)> {
        match p {
            0 => vec![(0.0, 1.0)],
            1 => vec![(-1.0, -0.5), (1.0, 0.5)],
            2 => vec![(-1.0, 1.0), (0.0, -2.0), (1.0, 1.0)],
            _ => vec![(-2.0, -0.5), (-1.0, 1.0), (1.0, -1.0), (2.0, 0.5)],
        }
    };
    let mut acc = 0.0;
    for (o0, w0) in weights(alpha[0]) {
        for (o1, w1) in weights(alpha[1]) {
            for (o2, w2) in weights(alpha[2]) {
                let y = [x[0] + o0 * step, x[1] + o1 * step, x[2] + o2 * step];
                acc += w0 * w1 * w2 * pot.value(y);
            }
        }
    }
    acc / step.powi(alpha.iter().sum::<u32>() as i32)
}

/// Samples `d^alpha V` for every `|alpha| <= 3` at the grid points (nested
/// central differences of the analytic potential) and compares with
/// `A C eps^{|alpha|}` on the core.
pub fn certify(pot: &Potential, grid: &Grid) -> DerivativeCertificate {
    let spec = pot.spec();
    let mut core = [0.0f64; 4];
    let mut whole = [0.0f64; 4];
    if pot.is_zero() {
        return DerivativeCertificate {
            core_constants: core,
            box_constants: whole,
            bound: 0.0,
            pass: true,
        };
    }
    let step = 1e-2 / spec.epsilon.max(1.0 / grid.box_length());
    let step = step.min(0.05 * grid.spacing());
    let indices = multi_indices();
    for i in 0..grid.len() {
        let x = grid.point(i);
        let inside = pot.in_core(x);
        for &alpha in &indices {
            let order = alpha.iter().sum::<u32>() as usize;
            let scale = spec.amplitude.abs() * spec.epsilon.powi(order as i32);
            let c = difference(pot, x, alpha, step).abs() / scale;
            whole[order] = whole[order].max(c);
            if inside {
                core[order] = core[order].max(c);
            }
        }
    }
    let bound = spec.preset.derivative_constant();
    // difference error is O(step^2) relative; allow 1%
    let pass = core.iter().all(|&c| c <= 1.01 * bound);
    DerivativeCertificate {
        core_constants: core,
        box_constants: whole,
        bound,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(preset: Preset) -> PotentialSpec {
        PotentialSpec {
            preset,
            epsilon: 0.2,
            amplitude: 0.7,
            center: [0.5, -0.3, 1.0],
            axis: 2,
            core_fraction: 0.3,
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = Grid::new(16, 20.0).unwrap();
        for preset in [Preset::GaussianWell, Preset::SmoothRamp, Preset::CosineBump] {
            let p = Potential::new(spec(preset), &g).unwrap();
            // one point in the core, one in the taper
            for x in [[0.3, -1.2, 2.0], [7.1, -8.2, 3.0]] {
                let grad = p.gradient(x);
                for j in 0..3 {
                    let h = 1e-5;
                    let mut a = x;
                    let mut b = x;
                    a[j] += h;
                    b[j] -= h;
                    let fd = (p.value(a) - p.value(b)) / (2.0 * h);
                    assert!((fd - grad[j]).abs() < 1e-8, "{preset:?} {x:?} {j}: {fd} vs {}", grad[j]);
                }
            }
        }
    }

    #[test]
    fn window_vanishes_at_the_faces_and_is_one_in_the_core() {
        let g = Grid::new(16, 20.0).unwrap();
        let p = Potential::new(spec(Preset::CosineBump), &g).unwrap();
        assert_eq!(p.value([10.0, 0.0, 0.0]), 0.0);
        assert_eq!(p.value([0.0, -10.0, 0.0]), 0.0);
        let x = [1.0, 2.0, 3.0];
        let exact = 0.7 * (0.2f64 * (3.0 - 1.0)).cos();
        assert!((p.value(x) - exact).abs() < 1e-15);
    }

    #[test]
    fn gaussian_constant_is_the_sup_of_hermite_functions() {
        // sup over s of |s^3 - 3 s| e^{-s^2/2}
        let mut sup: f64 = 0.0;
        for i in 0..200_000 {
            let s = i as f64 * 5e-5;
            sup = sup.max((s * s * s - 3.0 * s).abs() * (-0.5 * s * s).exp());
        }
        assert!(sup <= Preset::GaussianWell.derivative_constant());
        assert!(sup > Preset::GaussianWell.derivative_constant() - 1e-3);
    }

    #[test]
    fn self_similar_scaling_is_certified_in_the_core() {
        let g = Grid::new(24, 30.0).unwrap();
        for eps in [0.1, 0.05] {
            let mut s = spec(Preset::GaussianWell);
            s.epsilon = eps;
            s.center = [0.0; 3];
            s.core_fraction = 0.35;
            let p = Potential::new(s, &g).unwrap();
            let c = certify(&p, &g);
            assert!(c.pass, "{c:?}");
            assert!(c.core_constants[0] > 0.99 && c.core_constants[0] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn center_outside_core_is_rejected() {
        let g = Grid::new(16, 20.0).unwrap();
        let mut s = spec(Preset::GaussianWell);
        s.center = [9.0, 0.0, 0.0];
        assert!(matches!(Potential::new(s, &g), Err(LabError::ParameterDomain(_))));
    }
}
