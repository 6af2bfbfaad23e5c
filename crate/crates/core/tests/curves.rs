use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinorbit_core::model_maps::{CylinderMap, IntegratedQ, IntegratorOpts, SpinOrbitParams, GOLDEN_MEAN};
use spinorbit_core::normal_form::{
    gt2_region_test, localize_at_translated_curve, normal_form_at, normal_form_radius, reduce_to_constants,
    taylor_coefficients_in_x, Gt2Class, NfOptions,
};
use spinorbit_core::russmann::{
    find_c_alpha_frequency, rotated_frame, solve_translated_curve, trace_c_alpha, CAlphaConfig, CurveOptions,
};

const ALPHA: f64 = GOLDEN_MEAN;

fn q(eta: f64, nu: f64, eps: f64) -> Arc<dyn CylinderMap> {
    Arc::new(IntegratedQ::new(SpinOrbitParams::new(eta, nu, eps, ALPHA), IntegratorOpts::default()))
}

#[test]
fn unperturbed_integrated_curve_is_exact() {
    let q = q(0.1, ALPHA + 0.1, 0.0);
    let tc = solve_translated_curve(q.clone(), ALPHA, &CurveOptions::default()).unwrap();
    assert!(tc.gamma.max_abs_grid() <= 1e-12);
    assert!(tc.h.displacement.max_abs_grid() <= 1e-12);
    assert!((tc.b - q.params().tau_alpha()).abs() <= 1e-12);
    assert!(tc.conj_residual <= 1e-12 && tc.trans_residual <= 1e-12);
}

#[test]
fn translation_at_exact_frequency_is_small() {
    let tc = solve_translated_curve(q(0.05, ALPHA, 1e-3), ALPHA, &CurveOptions::default()).unwrap();
    assert!(tc.accepted(1e-9));
    // Regression value from the solver at N = 128, 512 steps.
    assert!((tc.b - 2.8066e-6).abs() < 1e-9, "b = {:e}", tc.b);
    assert!(tc.b.abs() <= 10.0 * 1e-3);
}

#[test]
fn c_alpha_slope_and_trace() {
    let cfg = CAlphaConfig {
        curve: CurveOptions {
            mode_cap: 64,
            ..CurveOptions::default()
        },
        ..CAlphaConfig::default()
    };
    let pt = find_c_alpha_frequency(0.1, 1e-3, ALPHA, &cfg).unwrap();
    assert!(pt.b_residual <= cfg.tol_b);
    assert!((pt.slope / (TAU * 0.1) - 1.0).abs() < 0.2, "slope {}", pt.slope);

    let grid = [0.05, 0.1, 0.2];
    let fwd = trace_c_alpha(1e-3, ALPHA, &grid, &cfg);
    let rev_grid: Vec<f64> = grid.iter().rev().cloned().collect();
    let rev = trace_c_alpha(1e-3, ALPHA, &rev_grid, &cfg);
    assert!(fwd.gaps.is_empty() && rev.gaps.is_empty());
    for p in &fwd.points {
        let r = rev.points.iter().find(|r| r.eta == p.eta).unwrap();
        assert!((p.nu_star - r.nu_star).abs() <= 10.0 * cfg.tol_b / (TAU * p.eta));
    }
}

#[test]
fn unperturbed_trace_is_vertical() {
    let cfg = CAlphaConfig {
        curve: CurveOptions {
            mode_cap: 8,
            ..CurveOptions::default()
        },
        integrator: IntegratorOpts { n_steps: 64 },
        ..CAlphaConfig::default()
    };
    let tr = trace_c_alpha(0.0, ALPHA, &[0.05, 0.1, 0.2, 0.4], &cfg);
    assert_eq!(tr.points.len(), 4);
    assert!(tr.points.iter().all(|p| p.nu_star == ALPHA));
}

#[test]
fn localized_map_and_taylor_fits() {
    let q = q(0.05, ALPHA + 0.002, 1e-3);
    let tc = solve_translated_curve(q.clone(), ALPHA, &CurveOptions::default()).unwrap();
    let l = localize_at_translated_curve(q, &tc).unwrap();
    assert!(l.vertical_defect <= 1e-9 && l.tangential_defect <= 1e-9);
    assert!((l.lambda - tc.b).abs() <= 1e-9);
    let t1 = taylor_coefficients_in_x(&l, 3, 1e-2).unwrap();
    let t2 = taylor_coefficients_in_x(&l, 3, 5e-3).unwrap();
    let l_factor = (-TAU * 0.05f64).exp();
    assert!((t1.b[1].mean() - l_factor).abs() <= 1e-3);
    assert!(t1.b[2].max_abs_grid() <= 100.0 * 1e-3);
    let shift = t1.b[1].coeff_distance(&t2.b[1]);
    assert!(shift <= 1e-9, "B_1 moved by {shift:e}");
}

#[test]
fn reduced_map_round_trips_and_is_angle_free() {
    let q = q(0.05, ALPHA, 1e-3);
    let tc = solve_translated_curve(q.clone(), ALPHA, &CurveOptions::default()).unwrap();
    let opts = NfOptions::default();
    let nf = normal_form_at(q, &tc, &opts).unwrap();
    let chain = nf.transform_chain();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t = rng.gen_range(0.0..TAU);
        let r = tc.r_offset + rng.gen_range(-1e-2..1e-2);
        let (xi, y) = chain.forward(t, r).unwrap();
        let (t2, r2) = chain.inverse(xi, y).unwrap();
        worst = worst.max((t - t2).abs()).max((r - r2).abs());
    }
    assert!(worst <= 1e-10, "round trip {worst:e}");
    let rem = &nf.remainder_norms;
    let tol = rem.constant.max(rem.angle).max(rem.radial);
    for (i, v) in nf.angular_variance.iter().enumerate() {
        assert!(v * opts.radius.powi(i as i32) <= tol, "order {i}: {v:e} vs {tol:e}");
    }
    let (a, b) = (&nf.alpha_bar, &nf.beta_bar);
    assert!((b[0] - (-TAU * 0.05f64).exp()).abs() <= 1e-3);
    assert!(a[0] > 0.0);
    let rad = normal_form_radius(&nf).unwrap();
    assert!(rad.residual <= 1e-12);
    let bound = 10.0 * b[1].abs() * rad.r_minus.powi(2) / (b[0] - 1.0).abs();
    assert!((rad.r0 - rad.r_minus).abs() <= bound.max(1e-15));
}

#[test]
fn c_alpha_removes_the_lambda_remainder() {
    let cfg = CAlphaConfig::default();
    let pt = find_c_alpha_frequency(0.05, 1e-3, ALPHA, &cfg).unwrap();
    let q_on = q(0.05, pt.nu_star, 1e-3);
    let l = localize_at_translated_curve(q_on, &pt.curve).unwrap();
    let nf = reduce_to_constants(&l, &NfOptions::default()).unwrap();
    assert!(nf.lambda.abs() <= 1e-12);
    assert!(nf.remainder_norms.constant <= 1e-12);
    let p = SpinOrbitParams::new(0.05, pt.nu_star, 1e-3, ALPHA);
    assert_eq!(gt2_region_test(&p, &nf, &NfOptions::default()).class, Gt2Class::Inside);
    let rot = spinorbit_core::russmann::restricted_rotation_number(&rotated_frame(q(0.05, pt.nu_star, 1e-3), ALPHA), &pt.curve.gamma, 100_000)
        .unwrap();
    assert!((rot - TAU * ALPHA).abs() <= 1e-9);
}
