//! Randomized invariants of the spectral core, the functionals and the
//! time stepper.

use hartree_lab::evolution::{Control, EvolutionConfig, Stepper};
use hartree_lab::functionals::{self, Hessian};
use hartree_lab::potential::{Potential, PotentialSpec, Preset};
use hartree_lab::spectrum::{smooth_random_field, Sector};
use hartree_lab::{Field, Grid, Spectral};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sp(n: usize, l: f64) -> Spectral {
    Spectral::new(Grid::new(n, l).unwrap())
}

fn random(sp: &Spectral, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    smooth_random_field(sp, &mut rng, Sector::Complex)
}

/// Localized random state of moderate mass.
fn bump(sp: &Spectral, seed: u64, amp: f64) -> Field {
    let w: Vec<f64> = (0..sp.grid().len())
        .map(|i| {
            let r = sp.grid().radius(i);
            (-0.3 * r * r).exp()
        })
        .collect();
    let mut f = random(sp, seed).mul_real(&w);
    let n = f.norm();
    f.scale(amp / n);
    f
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(seed in any::<u64>(), n in prop::sample::select(vec![8usize, 10, 12])) {
        let s = sp(n, 7.5);
        let f = random(&s, seed).scaled(3.7);
        let coeffs = s.forward(&f);
        let k: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>() / s.grid().len() as f64;
        let x: f64 = f.re.iter().chain(&f.im).map(|a| a * a).sum();
        prop_assert!(rel(k, x) < 1e-12);
    }

    #[test]
    fn kinetic_and_boost_commute_with_lattice_shifts(
        seed in any::<u64>(),
        shift in prop::array::uniform3(-3i64..4),
        m in 0.2f64..2.0,
        v in prop::array::uniform3(-0.5f64..0.5),
    ) {
        let s = sp(8, 6.0);
        let f = random(&s, seed);
        let a = s.apply_kinetic(&f.lattice_shift(shift), m).unwrap();
        let b = s.apply_kinetic(&f, m).unwrap().lattice_shift(shift);
        prop_assert!(a.sub(&b).max_abs() < 1e-12 * b.max_abs().max(1.0));
        let a = s.apply_boost(&f.lattice_shift(shift), v).unwrap();
        let b = s.apply_boost(&f, v).unwrap().lattice_shift(shift);
        prop_assert!(a.sub(&b).max_abs() < 1e-12 * b.max_abs().max(1.0));
    }

    #[test]
    fn kinetic_is_symmetric(s1 in any::<u64>(), s2 in any::<u64>(), m in 0.2f64..2.0) {
        let s = sp(8, 6.0);
        let (u, w) = (random(&s, s1), random(&s, s2));
        let a = u.dot(&s.apply_kinetic(&w, m).unwrap());
        let b = s.apply_kinetic(&u, m).unwrap().dot(&w);
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn hartree_potential_of_even_density_is_even(seed in any::<u64>()) {
        let s = sp(8, 8.0);
        let f = random(&s, seed);
        let even = f.add(&f.reflect());
        let rho = even.density();
        let phi = s.hartree_potential(&rho).unwrap();
        let phi = Field::real(s.grid(), phi).unwrap();
        prop_assert!(phi.im.iter().all(|x| *x == 0.0));
        prop_assert!(phi.sub(&phi.reflect()).max_abs() < 1e-12 * phi.max_abs());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hessian_is_symmetric(s0 in any::<u64>(), s1 in any::<u64>(), s2 in any::<u64>(), vz in -0.5f64..0.5) {
        let s = sp(8, 8.0);
        let phi = bump(&s, s0, 1.0);
        let h = Hessian::new(&s, &phi, [0.0, 0.1, vz], 0.4, 1.0).unwrap();
        let (u, w) = (random(&s, s1), random(&s, s2));
        let a = h.apply(&u).dot(&w);
        let b = u.dot(&h.apply(&w));
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn functionals_are_gauge_invariant(seed in any::<u64>(), theta in -10.0f64..10.0) {
        let s = sp(8, 8.0);
        let psi = bump(&s, seed, 1.2);
        let pot = Potential::new(PotentialSpec { preset: Preset::GaussianWell, epsilon: 0.3, ..Default::default() }, &s.grid()).unwrap();
        let v = pot.sample(&s.grid());
        let rotated = psi.rotate_phase(theta);
        let a = functionals::values(&s, &psi, Some(&v), [0.1, 0.0, 0.2], 0.5, 1.0).unwrap();
        let b = functionals::values(&s, &rotated, Some(&v), [0.1, 0.0, 0.2], 0.5, 1.0).unwrap();
        prop_assert!(rel(b.mass, a.mass) < 1e-12);
        prop_assert!((b.energy - a.energy).abs() < 1e-12 * a.energy.abs().max(1.0));
        prop_assert!((b.action - a.action).abs() < 1e-12 * a.action.abs().max(1.0));
        for k in 0..3 {
            prop_assert!((b.momentum[k] - a.momentum[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_directional_derivatives(s0 in any::<u64>(), s1 in any::<u64>()) {
        let s = sp(8, 8.0);
        let psi = bump(&s, s0, 1.0);
        let eta = random(&s, s1);
        let pot = Potential::new(PotentialSpec { preset: Preset::CosineBump, epsilon: 0.4, ..Default::default() }, &s.grid()).unwrap();
        let vs = pot.sample(&s.grid());
        let (v, mu, m) = ([0.0, 0.2, -0.1], 0.45, 1.0);
        let h = 1e-5;
        let fd = |f: &dyn Fn(&Field) -> f64| {
            let mut p = psi.clone();
            p.axpy(h, &eta);
            let mut q = psi.clone();
            q.axpy(-h, &eta);
            (f(&p) - f(&q)) / (2.0 * h)
        };
        let check = |fd: f64, exact: f64| rel(fd, exact) < 1e-6 || (fd - exact).abs() < 1e-9;
        // mass: gradient psi
        prop_assert!(check(fd(&|p| functionals::mass(p)), psi.dot(&eta)));
        // momentum: gradient J grad psi, component by component
        let grad = s.gradient(&psi);
        for k in 0..3 {
            let exact = grad[k].apply_j().dot(&eta);
            prop_assert!(check(fd(&|p| functionals::momentum(&s, p)[k]), exact));
        }
        let e = functionals::energy_gradient(&s, &psi, Some(&vs), m).unwrap().dot(&eta);
        prop_assert!(check(fd(&|p| functionals::energy(&s, p, Some(&vs), m).unwrap()), e));
        let a = functionals::action_gradient(&s, &psi, v, mu, m).unwrap().dot(&eta);
        prop_assert!(check(fd(&|p| functionals::action(&s, p, v, mu, m).unwrap()), a));
    }

    #[test]
    fn momentum_is_invariant_under_lattice_shifts(seed in any::<u64>(), shift in prop::array::uniform3(-4i64..5)) {
        let s = sp(8, 8.0);
        let psi = bump(&s, seed, 1.0);
        let a = functionals::momentum(&s, &psi);
        let b = functionals::momentum(&s, &psi.lattice_shift(shift));
        for k in 0..3 {
            prop_assert!((a[k] - b[k]).abs() < 1e-13 * a[k].abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn evolution_commutes_with_gauge(seed in any::<u64>(), theta in -3.0f64..3.0) {
        let s = sp(12, 10.0);
        let psi = bump(&s, seed, 0.6);
        let pot = Potential::new(PotentialSpec { preset: Preset::GaussianWell, epsilon: 0.3, ..Default::default() }, &s.grid()).unwrap();
        let stepper = Stepper::new(&s, Some(&pot), 1.0, 0.02, true).unwrap();
        let mut a = psi.clone();
        let mut b = psi.rotate_phase(theta);
        for _ in 0..5 {
            a = stepper.step(&a);
            b = stepper.step(&b);
        }
        prop_assert!(b.sub(&a.rotate_phase(theta)).max_abs() < 1e-12);
    }

    #[test]
    fn backward_steps_undo_forward_steps(seed in any::<u64>()) {
        let s = sp(12, 10.0);
        let psi = bump(&s, seed, 0.6);
        let pot = Potential::new(PotentialSpec { preset: Preset::SmoothRamp, epsilon: 0.2, ..Default::default() }, &s.grid()).unwrap();
        let fwd = Stepper::new(&s, Some(&pot), 1.0, 0.01, true).unwrap();
        let bwd = Stepper::new(&s, Some(&pot), 1.0, -0.01, true).unwrap();
        let mut f = psi.clone();
        for _ in 0..4 {
            f = fwd.step(&f);
        }
        for _ in 0..4 {
            f = bwd.step(&f);
        }
        prop_assert!(f.sub(&psi).norm() < 1e-10 * psi.norm());
    }

    #[test]
    fn weighted_norm_has_no_jumps(seed in any::<u64>()) {
        let s = sp(12, 10.0);
        let psi = bump(&s, seed, 0.6);
        let cfg = EvolutionConfig { dt: 0.01, t_end: 0.3, monitor_stride: 5, x_eps: 0.1, ..Default::default() };
        let (_, trace) = hartree_lab::evolution::evolve_from(&s, &psi, 0.0, &cfg, None, |_, _, _| Ok(Control::Continue)).unwrap();
        prop_assert!(trace.samples.iter().all(|x| x.xnorm.is_finite()));
        prop_assert!(trace.xnorm_max_jump() < 0.1);
    }
}
