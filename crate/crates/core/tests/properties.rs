use std::f64::consts::TAU;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinorbit_core::cohomology::solve_difference_equation;
use spinorbit_core::fourier::{invert_circle_map, uniform_grid, wrap_pi, CircleMap, PeriodicFn};
use spinorbit_core::model_maps::{
    ClosedFormP, CylinderMap, IntegratedQ, IntegratorOpts, SpinOrbitParams, GOLDEN_MEAN,
};

fn random_fn(rng: &mut ChaCha8Rng, n: usize, degree: usize, decay: f64) -> PeriodicFn {
    let mut c = vec![Complex64::new(0.0, 0.0); degree + 1];
    c[0] = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
    for (k, ck) in c.iter_mut().enumerate().skip(1) {
        let amp = (-decay * k as f64).exp();
        *ck = Complex64::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp));
    }
    PeriodicFn::from_coeffs(n, &c)
}

fn sup_diff(f: &PeriodicFn, g: &PeriodicFn) -> f64 {
    uniform_grid(4 * f.grid_len())
        .into_iter()
        .map(|t| (f.eval(t, 0) - g.eval(t, 0)).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shifts_compose(seed in any::<u64>(), a in -7.0f64..7.0, b in -7.0f64..7.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_fn(&mut rng, 32, 32, 0.2);
        let lhs = f.shift(a).shift(b);
        let rhs = f.shift(a + b);
        prop_assert!(sup_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn derivative_commutes_with_shift(seed in any::<u64>(), a in -7.0f64..7.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_fn(&mut rng, 24, 24, 0.3);
        let lhs = f.derivative().shift(a);
        let rhs = f.shift(a).derivative();
        prop_assert!(sup_diff(&lhs, &rhs) < 1e-11);
    }

    #[test]
    fn circle_inverse_is_involutive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_fn(&mut rng, 64, 4, 0.8).scale(0.1);
        let m = CircleMap::new(d);
        prop_assume!(m.lipschitz() < 0.9);
        let inv = invert_circle_map(&m, 1e-14).unwrap();
        prop_assert!(m.composition_residual(&inv) < 1e-12);
        let back = invert_circle_map(&inv, 1e-14).unwrap();
        prop_assert!(sup_diff(&back.displacement, &m.displacement) < 1e-11);
    }

    #[test]
    fn difference_equation_is_linear(seed in any::<u64>(), s in -3.0f64..3.0, eta in 0.01f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_fn(&mut rng, 64, 64, 0.1);
        let g = random_fn(&mut rng, 64, 64, 0.1);
        let b = (-TAU * eta).exp();
        let sf = solve_difference_equation(&f, 1.0, b, GOLDEN_MEAN, 1e-10).unwrap();
        let sg = solve_difference_equation(&g, 1.0, b, GOLDEN_MEAN, 1e-10).unwrap();
        let sum = &f + &(&g * s);
        let ss = solve_difference_equation(&sum, 1.0, b, GOLDEN_MEAN, 1e-10).unwrap();
        let combo = &sf.f + &(&sg.f * s);
        prop_assert!(sup_diff(&ss.f, &combo) < 1e-12);
        prop_assert!((ss.mu - (sf.mu + s * sg.mu)).abs() < 1e-12);
    }

    #[test]
    fn difference_equation_is_shift_equivariant(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_fn(&mut rng, 64, 64, 0.1);
        let s1 = solve_difference_equation(&g, 1.0, 1.0, GOLDEN_MEAN, 1e-10).unwrap();
        let s2 = solve_difference_equation(&g.shift(a), 1.0, 1.0, GOLDEN_MEAN, 1e-10).unwrap();
        prop_assert!(sup_diff(&s2.f, &s1.f.shift(a)) < 1e-12);
        prop_assert!((s1.mu - g.mean()).abs() < 1e-14);
    }

    #[test]
    fn rotated_circle_of_p(theta in 0.0f64..TAU, eta in 0.01f64..0.5, sign in prop::bool::ANY,
                           detune in -0.3f64..0.3, alpha in 0.1f64..0.9) {
        let eta = if sign { eta } else { -eta };
        let p = SpinOrbitParams::new(eta, alpha + detune, 0.0, alpha);
        let img = ClosedFormP::new(p.clone()).eval(theta, p.r_alpha()).unwrap();
        prop_assert!((img.dtheta - TAU * alpha).abs() < 1e-12);
        prop_assert!((img.r - p.r_alpha() - p.tau_alpha()).abs() < 1e-12);
    }
}

#[test]
fn conformal_determinant_of_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for eps in [0.0, 1e-3] {
        for eta in [0.05, 0.2] {
            let p = SpinOrbitParams::new(eta, GOLDEN_MEAN + 0.01, eps, GOLDEN_MEAN);
            let q = IntegratedQ::new(p, IntegratorOpts::default());
            for _ in 0..10 {
                let (_, j) = q
                    .eval_with_jacobian(rng.gen_range(0.0..TAU), rng.gen_range(-1.0..1.0))
                    .unwrap();
                assert!((j.det() - (-TAU * eta).exp()).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn integrator_is_fifth_order() {
    let p = SpinOrbitParams::new(0.1, GOLDEN_MEAN, 0.05, GOLDEN_MEAN);
    let eval = |n: usize| IntegratedQ::new(p.clone(), IntegratorOpts { n_steps: n }).eval(1.0, 0.3).unwrap();
    let exact = eval(4096);
    let err = |n: usize| {
        let img = eval(n);
        (img.dtheta - exact.dtheta).abs().max((img.r - exact.r).abs())
    };
    let order = (err(32) / err(64)).log2();
    assert!(order > 4.5, "observed order {order}");
}

#[test]
fn forward_and_backward_q_are_inverse() {
    let p = SpinOrbitParams::new(0.1, GOLDEN_MEAN + 0.05, 1e-3, GOLDEN_MEAN);
    let q = IntegratedQ::new(p, IntegratorOpts::default());
    let inv = q.inverse().unwrap();
    for (t, r) in [(0.2, 0.1), (3.0, -0.5), (5.5, 0.9)] {
        let img = q.eval(t, r).unwrap();
        let back = inv.eval(t + img.dtheta, img.r).unwrap();
        assert!(wrap_pi(img.dtheta + back.dtheta).abs() < 1e-12);
        assert!((back.r - r).abs() < 1e-12);
    }
}
