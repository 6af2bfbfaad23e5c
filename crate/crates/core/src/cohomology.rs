//! The difference equation `μ + a f(θ + 2πα) − b f(θ) = g(θ)` on the circle,
//! solved mode by mode, and a finite Diophantine audit of `α`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::{uniform_grid, PeriodicFn};

/// Divisors below this magnitude are treated as a resonance.
pub const DIVISOR_FLOOR: f64 = 1e-13;

/// Resonant modes of `g` smaller than this are dropped instead of failing.
pub const DUST_LEVEL: f64 = 1e-15;

/// Refinement factor of the residual verification grid.
pub const VERIFY_FACTOR: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CohomologyError {
    #[error("small divisor {divisor:.3e} at mode k = {k}")]
    SmallDivisor { k: i64, divisor: f64 },
    #[error("difference-equation residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    Precision { residual: f64, tol: f64 },
    #[error("invalid coefficients a = {a}, b = {b}")]
    InvalidCoefficients { a: f64, b: f64 },
}

/// Strip widths and Diophantine constants used for the bound diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundDiagnostics {
    pub s: f64,
    pub sigma: f64,
    pub dioph_gamma: f64,
    pub dioph_tau: f64,
}

impl Default for BoundDiagnostics {
    fn default() -> Self {
        Self {
            s: 0.1,
            sigma: 0.05,
            dioph_gamma: 0.38,
            dioph_tau: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceSolution {
    /// Zero-average solution.
    pub f: PeriodicFn,
    pub mu: f64,
    /// Smallest `|a e^{i2πkα} − b|` over the modes carried by `g`.
    pub min_divisor: f64,
    pub min_divisor_mode: i64,
    /// `|f|_s · γ σ^{τ+1} / |g|_{s+σ}`: the constant the small-divisor bound
    /// would need at the configured widths.
    pub bound_ratio: f64,
    /// Sup of the substitution residual on the verification grid.
    pub residual: f64,
    /// Resonant modes dropped as truncation dust.
    pub dropped_modes: Vec<i64>,
    /// Set when `a ≈ −b`, where the small-divisor bound degenerates.
    pub degenerate_bound: bool,
}

/// Solves with the default bound diagnostics.
pub fn solve_difference_equation(
    g: &PeriodicFn,
    a: f64,
    b: f64,
    alpha: f64,
    tol: f64,
) -> Result<DifferenceSolution, CohomologyError> {
    solve_difference_equation_with(g, a, b, alpha, tol, &BoundDiagnostics::default())
}

pub fn solve_difference_equation_with(
    g: &PeriodicFn,
    a: f64,
    b: f64,
    alpha: f64,
    tol: f64,
    diag: &BoundDiagnostics,
) -> Result<DifferenceSolution, CohomologyError> {
    if a == 0.0 || b == 0.0 || !a.is_finite() || !b.is_finite() {
        return Err(CohomologyError::InvalidCoefficients { a, b });
    }
    let n = g.n_modes();
    let gc = g.coeffs();
    let mut fc = vec![Complex64::new(0.0, 0.0); gc.len()];
    let mut min_divisor = f64::INFINITY;
    let mut min_divisor_mode = 0;
    let mut dropped_modes = Vec::new();
    for (k, gk) in gc.iter().enumerate().skip(1) {
        if gk.norm() == 0.0 {
            continue;
        }
        let d = a * Complex64::from_polar(1.0, TAU * k as f64 * alpha) - b;
        let dn = d.norm();
        if dn < DIVISOR_FLOOR {
            if gk.norm() < DUST_LEVEL {
                dropped_modes.push(k as i64);
                continue;
            }
            return Err(CohomologyError::SmallDivisor { k: k as i64, divisor: dn });
        }
        if dn < min_divisor {
            min_divisor = dn;
            min_divisor_mode = k as i64;
        }
        fc[k] = gk / d;
    }
    let f = PeriodicFn::from_coeffs(n, &fc);
    let mu = g.mean();

    let m = VERIFY_FACTOR * g.grid_len();
    let shift = TAU * alpha;
    let residual = uniform_grid(m)
        .iter()
        .map(|&t| (mu + a * f.eval(t + shift, 0) - b * f.eval(t, 0) - g.eval(t, 0)).abs())
        .fold(0.0, f64::max);
    if !(residual <= tol) {
        return Err(CohomologyError::Precision { residual, tol });
    }

    let g_norm = g.weighted_norm(diag.s + diag.sigma);
    let bound_ratio = if g_norm > 0.0 {
        f.weighted_norm(diag.s) * diag.dioph_gamma * diag.sigma.powf(diag.dioph_tau + 1.0) / g_norm
    } else {
        0.0
    };
    let degenerate_bound = (a + b).abs() < 1e-8 * (a.abs() + b.abs());
    Ok(DifferenceSolution {
        f,
        mu,
        min_divisor,
        min_divisor_mode,
        bound_ratio,
        residual,
        dropped_modes,
        degenerate_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiophantineReport {
    /// `min_{1≤k≤K} k^τ |kα − l|` with `l` the nearest integer.
    pub min_value: f64,
    pub argmin: u64,
    pub passes: bool,
    /// The three smallest `(k, k^τ|kα − l|)` pairs, smallest first.
    pub worst: Vec<(u64, f64)>,
}

pub fn diophantine_report(alpha: f64, gamma: f64, tau: f64, k_max: u64) -> DiophantineReport {
    let mut worst: Vec<(u64, f64)> = Vec::with_capacity(4);
    for k in 1..=k_max.max(1) {
        let x = k as f64 * alpha;
        let v = (k as f64).powf(tau) * (x - x.round()).abs();
        if worst.len() < 3 || v < worst[worst.len() - 1].1 {
            let pos = worst.iter().position(|w| v < w.1).unwrap_or(worst.len());
            worst.insert(pos, (k, v));
            worst.truncate(3);
        }
    }
    let (argmin, min_value) = worst[0];
    DiophantineReport {
        min_value,
        argmin,
        passes: min_value >= gamma,
        worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_maps::GOLDEN_MEAN;

    #[test]
    fn constant_rhs() {
        let g = PeriodicFn::constant(8, 1.7);
        let s = solve_difference_equation(&g, 1.0, 1.0, GOLDEN_MEAN, 1e-14).unwrap();
        assert_eq!(s.mu, 1.7);
        assert_eq!(s.f.max_abs_grid(), 0.0);
    }

    #[test]
    fn single_cosine_mode() {
        let g = PeriodicFn::from_fn(16, f64::cos);
        let s = solve_difference_equation(&g, 1.0, 1.0, GOLDEN_MEAN, 1e-12).unwrap();
        assert!(s.mu.abs() < 1e-16);
        let d = Complex64::from_polar(1.0, TAU * GOLDEN_MEAN) - 1.0;
        for j in 0..10_000 {
            let t = TAU * j as f64 / 10_000.0;
            let exact = (Complex64::from_polar(1.0, t) / d).re;
            assert!((s.f.eval(t, 0) - exact).abs() < 1e-14);
            let lhs = exact_shifted(t, d) - exact;
            assert!((lhs - t.cos()).abs() < 1e-12);
        }
    }

    fn exact_shifted(t: f64, d: Complex64) -> f64 {
        (Complex64::from_polar(1.0, t + TAU * GOLDEN_MEAN) / d).re
    }

    #[test]
    fn dissipative_sine_mode() {
        let b = (-TAU * 0.1).exp();
        let g = PeriodicFn::from_fn(16, |t| (5.0 * t).sin());
        let s = solve_difference_equation(&g, 1.0, b, GOLDEN_MEAN, 1e-12).unwrap();
        let d = Complex64::from_polar(1.0, 5.0 * TAU * GOLDEN_MEAN) - b;
        let f5 = Complex64::new(0.0, -0.5) / d;
        assert!((s.f.coeff(5) - f5).norm() < 1e-15);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn resonance_is_reported() {
        let g = PeriodicFn::from_fn(8, |t| (2.0 * t).cos());
        let err = solve_difference_equation(&g, 1.0, 1.0, 0.5, 1e-12).unwrap_err();
        assert!(matches!(err, CohomologyError::SmallDivisor { k: 2, .. }));
    }

    #[test]
    fn dust_modes_are_dropped() {
        let g = PeriodicFn::from_coeffs(8, &[Complex64::new(0.0, 0.0), Complex64::new(0.3, 0.0), Complex64::new(1e-17, 0.0)]);
        let s = solve_difference_equation(&g, 1.0, 1.0, 0.5, 1e-12).unwrap();
        assert_eq!(s.dropped_modes, vec![2]);
    }

    #[test]
    fn golden_audit() {
        let r = diophantine_report(GOLDEN_MEAN, 0.38, 1.0, 100_000);
        assert_eq!(r.argmin, 1);
        assert!((r.min_value - 0.381966).abs() < 1e-5);
        assert!(r.passes);
        assert_eq!(r.worst.len(), 3);
    }

    #[test]
    fn rational_alpha_fails() {
        let r = diophantine_report(0.5, 1e-6, 1.0, 10);
        assert!(!r.passes);
        assert_eq!(r.argmin, 2);
        assert_eq!(r.min_value, 0.0);
    }

    #[test]
    fn fibonacci_limit() {
        let fib = [1597u64, 2584, 4181, 6765];
        for k in fib {
            let x = k as f64 * GOLDEN_MEAN;
            let v = k as f64 * (x - x.round()).abs();
            assert!((v - 1.0 / 5f64.sqrt()).abs() < 1e-5, "k={k} v={v}");
        }
    }
}
