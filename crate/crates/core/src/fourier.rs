//! Band-limited periodic functions on the circle `T = R / 2πZ`.
//!
//! A [`PeriodicFn`] keeps two views of the same function: the samples on the
//! uniform grid of `2N + 2` nodes and the complex Fourier coefficients
//! `c_0, …, c_{N+1}`. Negative modes are implied by `c_{-k} = conj(c_k)`.
//! Index `N + 1` is the Nyquist mode of the grid; after fitting it holds a real
//! number and contributes `2 c_{N+1} cos((N+1)θ)` to the interpolant.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Iteration cap of the per-node fixed point in [`invert_circle_map`].
pub const INVERSION_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FourierError {
    #[error("invalid sample count {0}: need an even number of at least 4 samples")]
    InvalidSampleCount(usize),
    #[error("circle map displacement has Lipschitz estimate {lip:.6} >= 1; fixed point is not a contraction")]
    NotAContraction { lip: f64 },
    #[error("circle map inversion did not converge in {iterations} iterations (residual {residual:.3e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },
    #[error("non-finite value encountered while building a periodic function")]
    NonFinite,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

fn inverse_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// Wraps an angle difference into `(-π, π]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Reduces an angle into `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Uniform grid `2πj/m`, `j = 0..m`.
pub fn uniform_grid(m: usize) -> Vec<f64> {
    (0..m).map(|j| TAU * j as f64 / m as f64).collect()
}

/// A real, band-limited, 2π-periodic function.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicFn {
    n_modes: usize,
    coeffs: Vec<Complex64>,
    grid: Vec<f64>,
}

impl PeriodicFn {
    /// Trigonometric interpolation of `2N + 2` uniform samples.
    pub fn fit(samples: &[f64]) -> Result<Self, FourierError> {
        let m = samples.len();
        if m < 4 || m % 2 != 0 {
            return Err(FourierError::InvalidSampleCount(m));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(FourierError::NonFinite);
        }
        let n = m / 2 - 1;
        let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        forward_fft(m).process(&mut buf);
        let scale = 1.0 / m as f64;
        let mut coeffs = Vec::with_capacity(n + 2);
        coeffs.push(Complex64::new(buf[0].re * scale, 0.0));
        for c in buf.iter().take(n + 1).skip(1) {
            coeffs.push(c * scale);
        }
        coeffs.push(Complex64::new(0.5 * buf[m / 2].re * scale, 0.0));
        Ok(Self {
            n_modes: n,
            coeffs,
            grid: samples.to_vec(),
        })
    }

    /// Samples `f` on the grid of `2N + 2` nodes and interpolates.
    pub fn from_fn(n_modes: usize, f: impl Fn(f64) -> f64) -> Self {
        let samples: Vec<f64> = uniform_grid(2 * n_modes + 2).into_iter().map(f).collect();
        Self::fit(&samples).expect("grid of 2N+2 >= 4 nodes")
    }

    /// Builds a function from coefficients `c_0..` (missing entries are zero,
    /// entries beyond `N + 1` are dropped).
    pub fn from_coeffs(n_modes: usize, coeffs: &[Complex64]) -> Self {
        assert!(n_modes >= 1, "need at least one mode");
        let mut c = vec![Complex64::new(0.0, 0.0); n_modes + 2];
        for (dst, src) in c.iter_mut().zip(coeffs) {
            *dst = *src;
        }
        c[0].im = 0.0;
        let grid = grid_from_coeffs(&c, 2 * n_modes + 2);
        Self {
            n_modes,
            coeffs: c,
            grid,
        }
    }

    pub fn zero(n_modes: usize) -> Self {
        Self::constant(n_modes, 0.0)
    }

    pub fn constant(n_modes: usize, value: f64) -> Self {
        Self::from_coeffs(n_modes, &[Complex64::new(value, 0.0)])
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Number of grid nodes, `2N + 2`.
    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.grid
    }

    pub fn grid_points(&self) -> Vec<f64> {
        uniform_grid(self.grid.len())
    }

    /// Stored coefficients `c_0..=c_{N+1}`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient `c_k` for any integer `k`; zero outside the band.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let a = k.unsigned_abs() as usize;
        if a >= self.coeffs.len() {
            return Complex64::new(0.0, 0.0);
        }
        if k >= 0 {
            self.coeffs[a]
        } else {
            self.coeffs[a].conj()
        }
    }

    /// Average over the circle, `c_0`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Value (`order = 0`) or derivative of order `1..=4` at `theta`.
    pub fn eval(&self, theta: f64, order: u32) -> f64 {
        assert!(order <= 4, "derivative order {order} exceeds 4");
        let z = Complex64::from_polar(1.0, theta);
        let mut zk = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            zk *= z;
            let kk = k as f64;
            let term = c * zk;
            acc += match order {
                0 => term,
                1 => Complex64::new(-term.im * kk, term.re * kk),
                2 => -term * (kk * kk),
                3 => Complex64::new(term.im, -term.re) * (kk * kk * kk),
                _ => term * (kk * kk * kk * kk),
            };
            // Renormalize to keep the recurrence on the unit circle.
            if k % 32 == 0 {
                zk = Complex64::from_polar(1.0, theta * (k as f64));
            }
        }
        let base = if order == 0 { self.coeffs[0].re } else { 0.0 };
        base + 2.0 * acc.re
    }

    /// `f(θ + δ)`, computed as `c_k e^{ikδ}`.
    pub fn shift(&self, delta: f64) -> Self {
        let c: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * Complex64::from_polar(1.0, k as f64 * delta))
            .collect();
        Self::from_coeffs(self.n_modes, &c)
    }

    /// Spectral derivative.
    pub fn derivative(&self) -> Self {
        let c: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * Complex64::new(0.0, k as f64))
            .collect();
        Self::from_coeffs(self.n_modes, &c)
    }

    /// Sup-norm majorant `Σ|c_k|` over all integer `k`.
    pub fn sup_estimate(&self) -> f64 {
        self.weighted_norm(0.0)
    }

    /// Weighted norm `Σ|c_k| e^{|k|s}`.
    pub fn weighted_norm(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let w = if k == 0 { 1.0 } else { 2.0 };
                w * c.norm() * (k as f64 * s).exp()
            })
            .sum()
    }

    /// Truncation diagnostic `Σ_{|k| > N/2} |c_k|`.
    pub fn tail_mass(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(k, _)| 2 * k > self.n_modes)
            .map(|(_, c)| 2.0 * c.norm())
            .sum()
    }

    /// Largest absolute grid value.
    pub fn max_abs_grid(&self) -> f64 {
        self.grid.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Lipschitz estimate: largest `|f'|` over the grid nodes.
    pub fn lipschitz_estimate(&self) -> f64 {
        self.derivative().max_abs_grid()
    }

    /// Values on a grid `factor` times denser than the native one
    /// (zero-padded inverse transform).
    pub fn dense_values(&self, factor: usize) -> Vec<f64> {
        assert!(factor >= 1);
        let m = self.grid.len() * factor;
        if factor == 1 {
            return self.grid.clone();
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        buf[0] = self.coeffs[0];
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            buf[k] = *c;
            buf[m - k] = c.conj();
        }
        inverse_fft(m).process(&mut buf);
        buf.iter().map(|z| z.re).collect()
    }

    /// Changes the mode cutoff, truncating or zero-padding coefficients.
    pub fn resample(&self, n_modes: usize) -> Self {
        Self::from_coeffs(n_modes, &self.coeffs)
    }

    /// Applies `op` to the grid values and interpolates the result.
    /// Nonlinear `op` aliases modes above the cutoff back into the band.
    pub fn map_grid(&self, op: impl Fn(f64) -> f64) -> Result<Self, FourierError> {
        let samples: Vec<f64> = self.grid.iter().map(|&x| op(x)).collect();
        Self::fit(&samples)
    }

    /// Pointwise product on the grid (see [`PeriodicFn::map_grid`] on aliasing).
    pub fn grid_product(&self, other: &Self) -> Self {
        assert_eq!(self.n_modes, other.n_modes, "mode cutoff mismatch");
        let samples: Vec<f64> = self.grid.iter().zip(&other.grid).map(|(a, b)| a * b).collect();
        Self::fit(&samples).expect("finite product")
    }

    /// Largest coefficient difference to `other`.
    pub fn coeff_distance(&self, other: &Self) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len()) as i64;
        (0..n)
            .map(|k| (self.coeff(k) - other.coeff(k)).norm())
            .fold(0.0, f64::max)
    }

    fn zip_coeffs(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.n_modes, other.n_modes, "mode cutoff mismatch");
        let c: Vec<Complex64> = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| op(*a, *b)).collect();
        Self::from_coeffs(self.n_modes, &c)
    }

    pub fn scale(&self, s: f64) -> Self {
        let c: Vec<Complex64> = self.coeffs.iter().map(|a| a * s).collect();
        Self::from_coeffs(self.n_modes, &c)
    }

    /// Adds a constant to the function.
    pub fn offset(&self, v: f64) -> Self {
        let mut c = self.coeffs.clone();
        c[0] += v;
        Self::from_coeffs(self.n_modes, &c)
    }
}

fn grid_from_coeffs(c: &[Complex64], m: usize) -> Vec<f64> {
    let n = m / 2 - 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    buf[0] = Complex64::new(c[0].re, 0.0);
    for k in 1..=n {
        buf[k] = c[k];
        buf[m - k] = c[k].conj();
    }
    buf[m / 2] = Complex64::new(2.0 * c[n + 1].re, 0.0);
    inverse_fft(m).process(&mut buf);
    buf.iter().map(|z| z.re).collect()
}

impl Add for &PeriodicFn {
    type Output = PeriodicFn;
    fn add(self, rhs: &PeriodicFn) -> PeriodicFn {
        self.zip_coeffs(rhs, |a, b| a + b)
    }
}

impl Sub for &PeriodicFn {
    type Output = PeriodicFn;
    fn sub(self, rhs: &PeriodicFn) -> PeriodicFn {
        self.zip_coeffs(rhs, |a, b| a - b)
    }
}

impl Neg for &PeriodicFn {
    type Output = PeriodicFn;
    fn neg(self) -> PeriodicFn {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &PeriodicFn {
    type Output = PeriodicFn;
    fn mul(self, rhs: f64) -> PeriodicFn {
        self.scale(rhs)
    }
}

/// Free-function form of [`PeriodicFn::fit`].
pub fn fit_periodic(samples: &[f64]) -> Result<PeriodicFn, FourierError> {
    PeriodicFn::fit(samples)
}

/// Free-function form of [`PeriodicFn::eval`].
pub fn eval_periodic(f: &PeriodicFn, theta: f64, order: u32) -> f64 {
    f.eval(theta, order)
}

/// Free-function form of [`PeriodicFn::shift`].
pub fn shift_periodic(f: &PeriodicFn, delta: f64) -> PeriodicFn {
    f.shift(delta)
}

/// Degree-one circle map `θ ↦ θ + u(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleMap {
    pub displacement: PeriodicFn,
}

impl CircleMap {
    pub fn new(displacement: PeriodicFn) -> Self {
        Self { displacement }
    }

    pub fn identity(n_modes: usize) -> Self {
        Self::new(PeriodicFn::zero(n_modes))
    }

    /// Image of `theta`, not reduced mod 2π.
    pub fn apply(&self, theta: f64) -> f64 {
        theta + self.displacement.eval(theta, 0)
    }

    pub fn lipschitz(&self) -> f64 {
        self.displacement.lipschitz_estimate()
    }

    /// `1 + u' > 0` at every grid node.
    pub fn is_orientation_preserving(&self) -> bool {
        self.displacement.derivative().grid_values().iter().all(|d| 1.0 + d > 0.0)
    }

    /// Largest `|(id+u)((id+v)(θ)) − θ|` over the grid of `self`, mod 2π.
    pub fn composition_residual(&self, inverse: &CircleMap) -> f64 {
        self.displacement
            .grid_points()
            .iter()
            .map(|&t| wrap_pi(self.apply(inverse.apply(t)) - t).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves `v = −u∘(id+v)` node by node; the result is the displacement of
/// `(id+u)^{-1}`.
pub fn invert_circle_map(m: &CircleMap, tol: f64) -> Result<CircleMap, FourierError> {
    let u = &m.displacement;
    let lip = m.lipschitz();
    if lip >= 1.0 {
        return Err(FourierError::NotAContraction { lip });
    }
    let nodes = u.grid_points();
    let mut values = Vec::with_capacity(nodes.len());
    let mut worst = 0.0f64;
    for &t in &nodes {
        let mut v = -u.eval(t, 0);
        let mut iter = 0;
        loop {
            let next = -u.eval(t + v, 0);
            let step = (next - v).abs();
            v = next;
            iter += 1;
            if step <= 0.25 * tol || step == 0.0 {
                break;
            }
            if iter >= INVERSION_MAX_ITER {
                return Err(FourierError::ConvergenceFailure {
                    iterations: iter,
                    residual: step,
                });
            }
        }
        worst = worst.max((v + u.eval(t + v, 0)).abs());
        values.push(v);
    }
    if worst > tol {
        return Err(FourierError::ConvergenceFailure {
            iterations: INVERSION_MAX_ITER,
            residual: worst,
        });
    }
    Ok(CircleMap::new(PeriodicFn::fit(&values)?))
}

/// Pointwise inverse of `θ ↦ θ + u(θ)`: returns `d` with `(θ+d) + u(θ+d) = θ`.
pub fn invert_point(u: &PeriodicFn, theta: f64, tol: f64) -> Result<f64, FourierError> {
    let mut d = -u.eval(theta, 0);
    for _ in 0..INVERSION_MAX_ITER {
        let next = -u.eval(theta + d, 0);
        let step = (next - d).abs();
        d = next;
        if step <= 0.25 * tol || step == 0.0 {
            return Ok(d);
        }
    }
    Err(FourierError::ConvergenceFailure {
        iterations: INVERSION_MAX_ITER,
        residual: (d + u.eval(theta + d, 0)).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples() {
        let f = fit_periodic(&[2.5; 10]).unwrap();
        assert!((f.mean() - 2.5).abs() < 1e-15);
        for k in 1..=5 {
            assert!(f.coeff(k).norm() < 1e-15);
        }
    }

    #[test]
    fn cos_on_sixteen_nodes() {
        let samples: Vec<f64> = uniform_grid(16).iter().map(|t| t.cos()).collect();
        let f = fit_periodic(&samples).unwrap();
        assert_eq!(f.n_modes(), 7);
        assert!((f.coeff(1) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((f.coeff(-1) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        for k in [0, 2, 3, 4, 5, 6, 7, 8] {
            assert!(f.coeff(k).norm() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn sin3_with_eight_modes() {
        let f = PeriodicFn::from_fn(8, |t| (3.0 * t).sin());
        assert!((f.coeff(3) - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        assert!((f.coeff(-3) - Complex64::new(0.0, 0.5)).norm() < 1e-14);
    }

    #[test]
    fn bad_sample_counts() {
        assert_eq!(fit_periodic(&[1.0, 2.0, 3.0, 4.0, 5.0]), Err(FourierError::InvalidSampleCount(5)));
        assert_eq!(fit_periodic(&[1.0, 2.0]), Err(FourierError::InvalidSampleCount(2)));
    }

    #[test]
    fn eval_examples() {
        let c = PeriodicFn::from_fn(8, f64::cos);
        assert!((c.eval(0.0, 0) - 1.0).abs() < 1e-14);
        assert!(c.eval(0.0, 1).abs() < 1e-14);
        assert!((c.eval(0.0, 2) + 1.0).abs() < 1e-14);
        let s2 = PeriodicFn::from_fn(8, |t| (2.0 * t).sin());
        assert!(s2.eval(PI / 4.0, 1).abs() < 1e-13);
    }

    #[test]
    fn derivatives_up_to_four() {
        let f = PeriodicFn::from_fn(16, |t| (3.0 * t).sin() + 0.5 * t.cos());
        let t: f64 = 0.7;
        let exact = [
            (3.0 * t).sin() + 0.5 * t.cos(),
            3.0 * (3.0 * t).cos() - 0.5 * t.sin(),
            -9.0 * (3.0 * t).sin() - 0.5 * t.cos(),
            -27.0 * (3.0 * t).cos() + 0.5 * t.sin(),
            81.0 * (3.0 * t).sin() + 0.5 * t.cos(),
        ];
        for (order, e) in exact.iter().enumerate() {
            assert!((f.eval(t, order as u32) - e).abs() < 1e-11, "order {order}");
        }
    }

    #[test]
    fn nyquist_mode_interpolates() {
        let samples: Vec<f64> = (0..8).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let f = fit_periodic(&samples).unwrap();
        for (t, s) in f.grid_points().iter().zip(&samples) {
            assert!((f.eval(*t, 0) - s).abs() < 1e-14);
        }
    }

    #[test]
    fn shift_examples() {
        let c = PeriodicFn::from_fn(8, f64::cos);
        assert_eq!(c.shift(0.0).coeffs(), c.coeffs());
        let minus = c.shift(PI);
        assert!((minus.coeff(1) + Complex64::new(0.5, 0.0)).norm() < 1e-15);
        let s = PeriodicFn::from_fn(8, f64::sin).shift(PI / 2.0);
        assert!(s.coeff_distance(&c) < 1e-14);
    }

    #[test]
    fn dense_values_match_eval() {
        let f = PeriodicFn::from_fn(12, |t| (t.sin()).exp());
        let dense = f.dense_values(4);
        for (j, v) in dense.iter().enumerate() {
            let t = TAU * j as f64 / dense.len() as f64;
            assert!((v - f.eval(t, 0)).abs() < 1e-13);
        }
    }

    #[test]
    fn invert_identity_and_rotation() {
        let id = invert_circle_map(&CircleMap::identity(8), 1e-14).unwrap();
        assert!(id.displacement.max_abs_grid() == 0.0);
        let rot = invert_circle_map(&CircleMap::new(PeriodicFn::constant(8, 0.3)), 1e-14).unwrap();
        assert!((rot.displacement.mean() + 0.3).abs() < 1e-15);
        assert!(rot.displacement.tail_mass() < 1e-15);
    }

    #[test]
    fn invert_refuses_non_contraction() {
        let m = CircleMap::new(PeriodicFn::from_fn(8, |t| 1.5 * t.sin()));
        assert!(matches!(invert_circle_map(&m, 1e-12), Err(FourierError::NotAContraction { .. })));
    }

    #[test]
    fn wrap_helpers() {
        assert!((wrap_pi(3.0 * PI) - PI).abs() < 1e-15);
        assert!((wrap_pi(-0.1) + 0.1).abs() < 1e-15);
        assert!((wrap_angle(-0.5) - (TAU - 0.5)).abs() < 1e-15);
    }
}
