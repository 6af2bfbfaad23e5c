//! Localization at a translated curve, Taylor coefficients in the normal
//! variable, reduction to constant coefficients, the invariant radius `R0`
//! and the GT2 region test.
//!
//! After localization the map reads
//!
//! ```text
//! (ξ, x) ↦ (ξ + 2πα + Σ A_i(ξ) x^i,  λ + Σ B_i(ξ) x^i)
//! ```
//!
//! and the changes `x = X(ξ) y`, `z = y + X⁽ⁱ⁾(ξ) yⁱ`, `ζ = ξ + Z⁽ⁱ⁾(ξ) yⁱ`
//! replace `A_i, B_i` by their constants `ᾱ_i, β̄_i` up to order `k`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::{solve_difference_equation, CohomologyError};
use crate::fourier::{invert_point, uniform_grid, wrap_pi, FourierError, PeriodicFn};
use crate::graph_transform::{find_invariant_graph, GtError, GtOptions, GtReport, LipschitzGraph};
use crate::model_maps::{
    CoordinateChange, CylinderMap, Jacobian, MapError, SpinOrbitParams, TransformChain, Transformed, VerticalShift,
};
use crate::russmann::TranslatedCurve;

/// Newton tolerance of the polynomial coordinate inversions.
const INVERSION_TOL: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormalFormError {
    #[error("map evaluation failed: {0}")]
    Map(#[from] MapError),
    #[error("fourier: {0}")]
    Fourier(#[from] FourierError),
    #[error("cohomological equation failed: {0}")]
    Cohomology(#[from] CohomologyError),
    #[error("fit over |x| <= {radius:e} is unreliable (conditioning {conditioning:.2e}, residual {residual:.2e})")]
    RadiusTooLarge { radius: f64, conditioning: f64, residual: f64 },
    #[error("B_1 not positive on the grid (min {min:.3e}), no logarithm")]
    LogBranch { min: f64 },
    #[error("|beta_1 - 1| = {gap:.3e} too small for a radius")]
    DegenerateMultiplier { gap: f64 },
    #[error("no invariant radius within |R| <= 1 (last iterate {last:.3e})")]
    NoRadius { last: f64 },
    #[error("order k = {0} outside 1..=6")]
    InvalidOrder(usize),
}

fn inversion_error(e: FourierError) -> MapError {
    MapError::CoordinateInversion(e.to_string())
}

/// `G: (θ, ρ̃) ↦ (h⁻¹(θ), ρ̃ − γ(θ))`, stored through the parameterization
/// `(H, Γ)` so that the inverse is explicit.
#[derive(Debug, Clone)]
pub struct RussmannChart {
    pub h: PeriodicFn,
    pub gamma: PeriodicFn,
    dh: PeriodicFn,
    dgamma: PeriodicFn,
}

impl RussmannChart {
    pub fn new(tc: &TranslatedCurve) -> Self {
        let h = tc.h.displacement.clone();
        let gamma = tc.gamma_param.clone();
        Self {
            dh: h.derivative(),
            dgamma: gamma.derivative(),
            h,
            gamma,
        }
    }
}

impl CoordinateChange for RussmannChart {
    fn forward(&self, theta: f64, r: f64) -> Result<(f64, f64), MapError> {
        let d = invert_point(&self.h, theta, 1e-15).map_err(inversion_error)?;
        Ok((d, r - self.gamma.eval(theta + d, 0)))
    }

    fn inverse(&self, xi: f64, y: f64) -> Result<(f64, f64), MapError> {
        Ok((self.h.eval(xi, 0), y + self.gamma.eval(xi, 0)))
    }

    fn jacobian(&self, theta: f64, _r: f64) -> Jacobian {
        let xi = theta + invert_point(&self.h, theta, 1e-15).unwrap_or(0.0);
        let p = 1.0 / (1.0 + self.dh.eval(xi, 0));
        Jacobian::new(p, 0.0, -self.dgamma.eval(xi, 0) * p, 1.0)
    }

    fn label(&self) -> String {
        "russmann chart".into()
    }
}

/// `y = x / X(ξ)`.
#[derive(Debug, Clone)]
pub struct RadialScale {
    pub x: PeriodicFn,
    dx: PeriodicFn,
}

impl RadialScale {
    pub fn new(x: PeriodicFn) -> Self {
        Self { dx: x.derivative(), x }
    }
}

impl CoordinateChange for RadialScale {
    fn forward(&self, theta: f64, r: f64) -> Result<(f64, f64), MapError> {
        Ok((0.0, r / self.x.eval(theta, 0)))
    }

    fn inverse(&self, xi: f64, y: f64) -> Result<(f64, f64), MapError> {
        Ok((0.0, self.x.eval(xi, 0) * y))
    }

    fn jacobian(&self, theta: f64, r: f64) -> Jacobian {
        let x = self.x.eval(theta, 0);
        Jacobian::new(1.0, 0.0, -r * self.dx.eval(theta, 0) / (x * x), 1.0 / x)
    }

    fn label(&self) -> String {
        "X".into()
    }
}

/// `z = y + F(ξ) yⁱ`.
#[derive(Debug, Clone)]
pub struct RadialPower {
    pub order: i32,
    pub f: PeriodicFn,
    df: PeriodicFn,
}

impl RadialPower {
    pub fn new(order: i32, f: PeriodicFn) -> Self {
        Self { order, df: f.derivative(), f }
    }
}

impl CoordinateChange for RadialPower {
    fn forward(&self, theta: f64, r: f64) -> Result<(f64, f64), MapError> {
        Ok((0.0, r + self.f.eval(theta, 0) * r.powi(self.order)))
    }

    fn inverse(&self, xi: f64, z: f64) -> Result<(f64, f64), MapError> {
        let f = self.f.eval(xi, 0);
        let i = self.order;
        let mut y = z;
        for _ in 0..50 {
            let res = y + f * y.powi(i) - z;
            let step = res / (1.0 + i as f64 * f * y.powi(i - 1));
            y -= step;
            if step.abs() <= INVERSION_TOL * (1.0 + y.abs()) {
                return Ok((0.0, y));
            }
        }
        Err(MapError::CoordinateInversion(format!("X({i}) at z = {z:e}")))
    }

    fn jacobian(&self, theta: f64, r: f64) -> Jacobian {
        let i = self.order;
        let f = self.f.eval(theta, 0);
        Jacobian::new(
            1.0,
            0.0,
            self.df.eval(theta, 0) * r.powi(i),
            1.0 + i as f64 * f * r.powi(i - 1),
        )
    }

    fn label(&self) -> String {
        format!("X({})", self.order)
    }
}

/// `ζ = ξ + Z(ξ) yⁱ`.
#[derive(Debug, Clone)]
pub struct AngularPower {
    pub order: i32,
    pub z: PeriodicFn,
    dz: PeriodicFn,
}

impl AngularPower {
    pub fn new(order: i32, z: PeriodicFn) -> Self {
        Self { order, dz: z.derivative(), z }
    }
}

impl CoordinateChange for AngularPower {
    fn forward(&self, theta: f64, r: f64) -> Result<(f64, f64), MapError> {
        Ok((self.z.eval(theta, 0) * r.powi(self.order), r))
    }

    fn inverse(&self, zeta: f64, y: f64) -> Result<(f64, f64), MapError> {
        let yi = y.powi(self.order);
        let mut s = 0.0;
        for _ in 0..100 {
            let res = s + self.z.eval(zeta + s, 0) * yi;
            let step = res / (1.0 + self.dz.eval(zeta + s, 0) * yi);
            s -= step;
            if step.abs() <= INVERSION_TOL {
                return Ok((s, y));
            }
        }
        Err(MapError::CoordinateInversion(format!("Z({}) at y = {y:e}", self.order)))
    }

    fn jacobian(&self, theta: f64, r: f64) -> Jacobian {
        let i = self.order;
        Jacobian::new(
            1.0 + self.dz.eval(theta, 0) * r.powi(i),
            i as f64 * self.z.eval(theta, 0) * r.powi(i - 1),
            0.0,
            1.0,
        )
    }

    fn label(&self) -> String {
        format!("Z({})", self.order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NfOptions {
    pub order: usize,
    /// Half-width of the x interval used for the Taylor fits.
    pub radius: f64,
    /// Angular modes of the coefficient functions.
    pub n_modes: usize,
    /// `η ≥ margin·ε` in the region test.
    pub margin: f64,
    /// The effective multiplier must stay below `1 − safety`.
    pub safety: f64,
    /// Largest accepted value-level misfit of a Taylor fit.
    pub fit_tol: f64,
}

impl Default for NfOptions {
    fn default() -> Self {
        Self {
            order: 3,
            radius: 1e-2,
            n_modes: 32,
            margin: 10.0,
            safety: 0.05,
            fit_tol: 1e-8,
        }
    }
}

/// `Q` in the coordinates `(ξ, x)` of a translated curve.
#[derive(Debug, Clone)]
pub struct LocalizedMap {
    pub map: Transformed,
    pub lambda: f64,
    pub curve: TranslatedCurve,
    /// `sup |vertical image of x = 0 − λ|`.
    pub vertical_defect: f64,
    /// `sup |tangential image of x = 0 − (ξ + 2πα)|`.
    pub tangential_defect: f64,
}

/// Builds `G∘Q∘G⁻¹` for `q` in `r` coordinates.
pub fn localize_at_translated_curve(
    q: Arc<dyn CylinderMap>,
    tc: &TranslatedCurve,
) -> Result<LocalizedMap, NormalFormError> {
    let chain = TransformChain::new()
        .with(Arc::new(VerticalShift { offset: tc.r_offset }))
        .with(Arc::new(RussmannChart::new(tc)));
    let map = Transformed::new(q, chain);
    let m = 4 * tc.gamma.grid_len();
    let mut vertical = Vec::with_capacity(m);
    let mut tangential = 0.0f64;
    for xi in uniform_grid(m) {
        let img = map.eval(xi, 0.0)?;
        vertical.push(img.r);
        tangential = tangential.max(wrap_pi(img.dtheta - TAU * tc.alpha).abs());
    }
    let lambda = vertical.iter().sum::<f64>() / m as f64;
    let vertical_defect = vertical.iter().map(|v| (v - lambda).abs()).fold(0.0, f64::max);
    Ok(LocalizedMap {
        map,
        lambda,
        curve: tc.clone(),
        vertical_defect,
        tangential_defect: tangential,
    })
}

/// Coefficients of `(ξ, x) ↦ (ξ + 2πα + Σ A_i xⁱ, Σ B_i xⁱ)`, index `i = 0..=k`.
#[derive(Debug, Clone)]
pub struct TaylorCoefficients {
    pub a: Vec<PeriodicFn>,
    pub b: Vec<PeriodicFn>,
    pub radius: f64,
    /// Sup over grid and nodes of the value-level misfit.
    pub fit_residual: f64,
    pub conditioning: f64,
}

/// Monomial coefficients of the Chebyshev interpolant of degree `deg`
/// through `n` Chebyshev nodes: row `p` maps samples to the `s^p`
/// coefficient.
struct ChebFit {
    nodes: Vec<f64>,
    rows: Vec<Vec<f64>>,
    conditioning: f64,
}

impl ChebFit {
    fn new(n: usize, deg: usize) -> Self {
        let nodes: Vec<f64> = (0..n).map(|m| (PI * (m as f64 + 0.5) / n as f64).cos()).collect();
        // T_p as monomial coefficient vectors.
        let mut t: Vec<Vec<f64>> = vec![vec![1.0], vec![0.0, 1.0]];
        for p in 2..=deg {
            let mut next = vec![0.0; p + 1];
            for (q, c) in t[p - 1].iter().enumerate() {
                next[q + 1] += 2.0 * c;
            }
            for (q, c) in t[p - 2].iter().enumerate() {
                next[q] -= c;
            }
            t.push(next);
        }
        let mut rows = vec![vec![0.0; n]; deg + 1];
        for p in 0..=deg {
            let w = if p == 0 { 1.0 } else { 2.0 } / n as f64;
            for m in 0..n {
                let tp = (p as f64 * PI * (m as f64 + 0.5) / n as f64).cos();
                for (q, c) in t[p].iter().enumerate() {
                    rows[q][m] += w * tp * c;
                }
            }
        }
        let conv: f64 = t.iter().take(deg + 1).map(|r| r.iter().map(|c| c.abs()).sum::<f64>()).fold(0.0, f64::max);
        Self {
            nodes,
            rows,
            conditioning: conv * (deg + 1) as f64,
        }
    }

    fn apply(&self, samples: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().zip(samples).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Per-node fits of the x-derivatives of both components, with Jacobians
/// from the map, at Chebyshev nodes in `[−radius, radius]`.
pub fn taylor_coefficients_in_x(l: &LocalizedMap, k: usize, radius: f64) -> Result<TaylorCoefficients, NormalFormError> {
    let opts = NfOptions {
        order: k,
        radius,
        ..NfOptions::default()
    };
    fit_taylor(&l.map, l.curve.alpha, &opts)
}

/// Taylor coefficients of any map near `y = 0`.
pub fn fit_taylor(map: &dyn CylinderMap, alpha: f64, opts: &NfOptions) -> Result<TaylorCoefficients, NormalFormError> {
    let k = opts.order;
    if !(1..=6).contains(&k) {
        return Err(NormalFormError::InvalidOrder(k));
    }
    let deg = k + 1;
    let fit = ChebFit::new(2 * (k + 3), deg);
    let r = opts.radius;
    let grid = uniform_grid(2 * opts.n_modes + 2);
    let mut a = vec![Vec::with_capacity(grid.len()); deg + 2];
    let mut b = vec![Vec::with_capacity(grid.len()); deg + 2];
    let mut misfit = 0.0f64;
    let mut ta = vec![0.0; fit.nodes.len()];
    let mut tb = vec![0.0; fit.nodes.len()];
    let mut va = vec![0.0; fit.nodes.len()];
    let mut vb = vec![0.0; fit.nodes.len()];
    for &xi in &grid {
        let img0 = map.eval(xi, 0.0)?;
        let a0 = wrap_pi(img0.dtheta - TAU * alpha);
        for (m, s) in fit.nodes.iter().enumerate() {
            let (img, j) = map.eval_with_jacobian(xi, r * s)?;
            ta[m] = j.m[0][1];
            tb[m] = j.m[1][1];
            va[m] = img.dtheta - img0.dtheta;
            vb[m] = img.r - img0.r;
        }
        let ca = fit.apply(&ta);
        let cb = fit.apply(&tb);
        a[0].push(a0);
        b[0].push(img0.r);
        for i in 1..=deg + 1 {
            let scale = i as f64 * r.powi(i as i32 - 1);
            a[i].push(ca[i - 1] / scale);
            b[i].push(cb[i - 1] / scale);
        }
        for (m, s) in fit.nodes.iter().enumerate() {
            let x = r * s;
            let (mut pa, mut pb) = (0.0, 0.0);
            for i in (1..=deg + 1).rev() {
                pa = (pa + a[i].last().unwrap()) * x;
                pb = (pb + b[i].last().unwrap()) * x;
            }
            misfit = misfit.max((va[m] - pa).abs()).max((vb[m] - pb).abs());
        }
    }
    if fit.conditioning > 1e6 || !(misfit <= opts.fit_tol) {
        return Err(NormalFormError::RadiusTooLarge {
            radius: r,
            conditioning: fit.conditioning,
            residual: misfit,
        });
    }
    let to_fn = |v: Vec<Vec<f64>>| -> Result<Vec<PeriodicFn>, FourierError> {
        v.into_iter().take(k + 1).map(|c| PeriodicFn::fit(&c)).collect()
    };
    Ok(TaylorCoefficients {
        a: to_fn(a)?,
        b: to_fn(b)?,
        radius: r,
        fit_residual: misfit,
        conditioning: fit.conditioning,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RemainderNorms {
    /// `max(sup|B_0 − λ|, sup|A_0|)`: the part driven by `λ`.
    pub constant: f64,
    /// Largest value-level misfit among all Taylor fits.
    pub fit: f64,
    /// Half-width of the annulus the totals are measured on.
    pub annulus: f64,
    /// `sup |angle(T) − angle(NF)|` on the annulus.
    pub angle: f64,
    /// `sup |radial(T) − radial(NF)|` on the annulus.
    pub radial: f64,
    /// `sup |∂_y radial(T) − ∂_y radial(NF)|` on the annulus.
    pub radial_derivative: f64,
}

#[derive(Debug, Clone)]
pub struct NormalForm {
    pub order_k: usize,
    /// `ᾱ_1..ᾱ_k`.
    pub alpha_bar: Vec<f64>,
    /// `β̄_1..β̄_k`.
    pub beta_bar: Vec<f64>,
    pub lambda: f64,
    pub r0: f64,
    /// First-order radius `−λ/(β̄_1 − 1)`.
    pub r_minus: f64,
    pub remainder_norms: RemainderNorms,
    /// Per order `i = 0..=k`: `max(sup|α_i − avg α_i|, sup|β_i − avg β_i|)`
    /// of the fully reduced map.
    pub angular_variance: Vec<f64>,
    pub alpha: f64,
    pub radius: f64,
    /// Reduced map: `Q` through the whole chain.
    pub map: Transformed,
}

impl NormalForm {
    pub fn transform_chain(&self) -> &TransformChain {
        &self.map.chain
    }

    /// Radial part `λ + Σ β̄_i yⁱ`.
    pub fn radial(&self, y: f64) -> f64 {
        self.lambda + poly(&self.beta_bar, y)
    }

    /// `|β̄_1 + Σ_{i≥2} i β̄_i R0^{i−1}|`.
    pub fn effective_multiplier(&self) -> f64 {
        dpoly(&self.beta_bar, self.r0).abs()
    }
}

/// `Σ c_{i−1} yⁱ`.
fn poly(c: &[f64], y: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ci| (acc + ci) * y)
}

/// `Σ i c_{i−1} y^{i−1}`.
fn dpoly(c: &[f64], y: f64) -> f64 {
    c.iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (i, ci)| acc * y + (i + 1) as f64 * ci)
}

fn coh_tol(g: &PeriodicFn) -> f64 {
    1e-9 * (1.0 + g.sup_estimate())
}

/// Reduces the localized map to constant coefficients up to `opts.order`,
/// refitting the true transformed map after every change.
pub fn reduce_to_constants(l: &LocalizedMap, opts: &NfOptions) -> Result<NormalForm, NormalFormError> {
    let k = opts.order;
    let alpha = l.curve.alpha;
    let mut map = l.map.clone();
    let mut fit_worst = 0.0f64;
    let mut refit = |m: &Transformed| -> Result<TaylorCoefficients, NormalFormError> {
        let t = fit_taylor(m, alpha, opts)?;
        fit_worst = fit_worst.max(t.fit_residual);
        Ok(t)
    };

    let t = refit(&map)?;
    let min_b1 = t.b[1].grid_values().iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_b1 > 0.0) {
        return Err(NormalFormError::LogBranch { min: min_b1 });
    }
    let log_b1 = t.b[1].map_grid(f64::ln)?;
    let sol = solve_difference_equation(&log_b1, 1.0, 1.0, alpha, coh_tol(&log_b1))?;
    let beta1 = sol.mu.exp();
    map = map.then(Arc::new(RadialScale::new(sol.f.map_grid(f64::exp)?)));
    let mut beta_bar = vec![beta1];

    for i in 2..=k {
        let t = refit(&map)?;
        let g = -&t.b[i];
        let sol = solve_difference_equation(&g, beta1.powi(i as i32), beta1, alpha, coh_tol(&g))?;
        beta_bar.push(-sol.mu);
        map = map.then(Arc::new(RadialPower::new(i as i32, sol.f)));
    }
    let mut alpha_bar = Vec::with_capacity(k);
    for i in 1..=k {
        let t = refit(&map)?;
        let g = -&t.a[i];
        let sol = solve_difference_equation(&g, beta1.powi(i as i32), 1.0, alpha, coh_tol(&g))?;
        alpha_bar.push(-sol.mu);
        map = map.then(Arc::new(AngularPower::new(i as i32, sol.f)));
    }

    let t = refit(&map)?;
    let lambda = t.b[0].mean();
    let angular_variance: Vec<f64> = (0..=k)
        .map(|i| {
            let va = variation(&t.a[i]);
            let vb = variation(&t.b[i]);
            va.max(vb)
        })
        .collect();
    let constant = t.b[0]
        .grid_values()
        .iter()
        .map(|v| (v - lambda).abs())
        .fold(t.a[0].max_abs_grid(), f64::max);

    let mut nf = NormalForm {
        order_k: k,
        alpha_bar,
        beta_bar,
        lambda,
        r0: 0.0,
        r_minus: 0.0,
        remainder_norms: RemainderNorms {
            constant,
            fit: fit_worst,
            ..RemainderNorms::default()
        },
        angular_variance,
        alpha,
        radius: opts.radius,
        map,
    };
    let rad = normal_form_radius(&nf)?;
    nf.r0 = rad.r0;
    nf.r_minus = rad.r_minus;
    measure_remainders(&mut nf, opts)?;
    Ok(nf)
}

fn variation(f: &PeriodicFn) -> f64 {
    let m = f.mean();
    f.grid_values().iter().map(|v| (v - m).abs()).fold(0.0, f64::max)
}

/// Sup of the reduced map minus its normal form on `|y| ≤ max(radius, 1.25|R0|)`.
fn measure_remainders(nf: &mut NormalForm, opts: &NfOptions) -> Result<(), NormalFormError> {
    let ann = opts.radius.max(1.25 * nf.r0.abs());
    let nodes = ChebFit::new(2 * (opts.order + 3), 1).nodes;
    let mut ys: Vec<f64> = nodes.iter().map(|s| ann * s).collect();
    ys.push(0.0);
    ys.push(nf.r0);
    let (mut ang, mut rad, mut der) = (0.0f64, 0.0f64, 0.0f64);
    for xi in uniform_grid(2 * opts.n_modes + 2) {
        for &y in &ys {
            let (img, j) = nf.map.eval_with_jacobian(xi, y)?;
            ang = ang.max(wrap_pi(img.dtheta - TAU * nf.alpha - poly(&nf.alpha_bar, y)).abs());
            rad = rad.max((img.r - nf.radial(y)).abs());
            der = der.max((j.m[1][1] - dpoly(&nf.beta_bar, y)).abs());
        }
    }
    let r = &mut nf.remainder_norms;
    r.annulus = ann;
    r.angle = ang;
    r.radial = rad;
    r.radial_derivative = der;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusSolution {
    pub r0: f64,
    pub r_minus: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Newton solve of `R = λ + Σ β̄_i Rⁱ` seeded at `−λ/(β̄_1 − 1)`.
pub fn normal_form_radius(nf: &NormalForm) -> Result<RadiusSolution, NormalFormError> {
    let gap = nf.beta_bar[0] - 1.0;
    if gap.abs() <= 1e-10 {
        return Err(NormalFormError::DegenerateMultiplier { gap: gap.abs() });
    }
    let r_minus = -nf.lambda / gap;
    let mut r = r_minus;
    for it in 0..60 {
        let f = nf.radial(r) - r;
        if f.abs() <= 1e-15 {
            return Ok(RadiusSolution {
                r0: r,
                r_minus,
                residual: f.abs(),
                iterations: it,
            });
        }
        let df = dpoly(&nf.beta_bar, r) - 1.0;
        r -= f / df;
        if !(r.abs() <= 1.0) {
            return Err(NormalFormError::NoRadius { last: r });
        }
    }
    let residual = (nf.radial(r) - r).abs();
    if residual <= 1e-12 {
        Ok(RadiusSolution {
            r0: r,
            r_minus,
            residual,
            iterations: 60,
        })
    } else {
        Err(NormalFormError::NoRadius { last: r })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gt2Class {
    Inside,
    Outside,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gt2Report {
    pub class: Gt2Class,
    /// `η ≥ √(2π)|ν − α|`.
    pub detuning_ok: bool,
    /// `η ≥ margin·ε`.
    pub dissipation_ok: bool,
    /// Effective multiplier plus the derivative remainder.
    pub multiplier: f64,
    pub threshold: f64,
}

/// Conditions (a) and (b) of the region test, which need no normal form.
pub fn gt2_prechecks(p: &SpinOrbitParams, margin: f64) -> (bool, bool) {
    let a = p.eta >= (TAU).sqrt() * (p.nu - p.alpha).abs();
    let b = p.eta >= margin * p.eps;
    (a, b)
}

pub fn gt2_region_test(p: &SpinOrbitParams, nf: &NormalForm, opts: &NfOptions) -> Gt2Report {
    let (detuning_ok, dissipation_ok) = gt2_prechecks(p, opts.margin);
    let multiplier = nf.effective_multiplier() + nf.remainder_norms.radial_derivative;
    let threshold = 1.0 - opts.safety;
    let class = if !(detuning_ok && dissipation_ok) || !(multiplier < 1.0) {
        Gt2Class::Outside
    } else if multiplier < threshold {
        Gt2Class::Inside
    } else {
        Gt2Class::Marginal
    };
    Gt2Report {
        class,
        detuning_ok,
        dissipation_ok,
        multiplier,
        threshold,
    }
}

/// The reduced map in `R̃ = y − R0`.
pub fn recentered_map(nf: &NormalForm) -> Transformed {
    nf.map.then(Arc::new(VerticalShift { offset: nf.r0 }))
}

/// Graph transform on the recentered map, started from `R̃ ≡ 0`.
pub fn recentered_invariant_graph(
    nf: &NormalForm,
    opts: &GtOptions,
) -> Result<(LipschitzGraph, GtReport), GtError> {
    let m = recentered_map(nf);
    find_invariant_graph(&m, &LipschitzGraph::constant(64, 0.0), opts)
}

/// Curve, localization and reduction in one call.
pub fn normal_form_at(
    q: Arc<dyn CylinderMap>,
    tc: &TranslatedCurve,
    opts: &NfOptions,
) -> Result<NormalForm, NormalFormError> {
    let l = localize_at_translated_curve(q, tc)?;
    reduce_to_constants(&l, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_maps::{ClosedFormP, GOLDEN_MEAN};
    use crate::russmann::{solve_translated_curve, CurveOptions};

    fn unperturbed(eta: f64, detune: f64) -> (Arc<dyn CylinderMap>, TranslatedCurve) {
        let p = SpinOrbitParams::new(eta, GOLDEN_MEAN + detune, 0.0, GOLDEN_MEAN);
        let q: Arc<dyn CylinderMap> = Arc::new(ClosedFormP::new(p));
        let opts = CurveOptions {
            mode_cap: 16,
            ..CurveOptions::default()
        };
        let tc = solve_translated_curve(q.clone(), GOLDEN_MEAN, &opts).unwrap();
        (q, tc)
    }

    #[test]
    fn chebyshev_fit_is_exact_on_polynomials() {
        let f = ChebFit::new(12, 5);
        let s: Vec<f64> = f.nodes.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x.powi(3) + 0.25 * x.powi(5)).collect();
        let c = f.apply(&s);
        let want = [1.0, -2.0, 0.0, 0.5, 0.0, 0.25];
        for (a, b) in c.iter().zip(want) {
            assert!((a - b).abs() < 1e-14, "{c:?}");
        }
    }

    #[test]
    fn unperturbed_localization() {
        let (q, tc) = unperturbed(0.1, 0.02);
        let l = localize_at_translated_curve(q.clone(), &tc).unwrap();
        assert!((l.lambda - q.params().tau_alpha()).abs() < 1e-14);
        assert!(l.vertical_defect < 1e-14 && l.tangential_defect < 1e-13);
    }

    #[test]
    fn unperturbed_normal_form() {
        let (q, tc) = unperturbed(0.1, 0.02);
        let l = localize_at_translated_curve(q.clone(), &tc).unwrap();
        let opts = NfOptions {
            n_modes: 8,
            ..NfOptions::default()
        };
        let nf = reduce_to_constants(&l, &opts).unwrap();
        let p = q.params();
        assert!((nf.beta_bar[0] - p.normal_factor()).abs() < 1e-12);
        assert!((nf.alpha_bar[0] - p.twist()).abs() < 1e-12);
        for c in nf.beta_bar[1..].iter().chain(&nf.alpha_bar[1..]) {
            assert!(c.abs() < 1e-10, "{nf:?}");
        }
        let closed = -p.tau_alpha() / (p.normal_factor() - 1.0);
        assert!((nf.r0 - closed).abs() < 1e-13);
    }

    #[test]
    fn radius_of_trivial_translation_is_zero() {
        let (q, tc) = unperturbed(0.1, 0.0);
        let nf = normal_form_at(q, &tc, &NfOptions { n_modes: 8, ..NfOptions::default() }).unwrap();
        assert_eq!(nf.lambda, 0.0);
        assert_eq!(nf.r0, 0.0);
    }

    #[test]
    fn polynomial_changes_round_trip() {
        let f = PeriodicFn::from_fn(8, |t| 0.3 * t.sin());
        let changes: Vec<Arc<dyn CoordinateChange>> = vec![
            Arc::new(RadialScale::new(f.offset(1.0))),
            Arc::new(RadialPower::new(2, f.clone())),
            Arc::new(AngularPower::new(3, f.clone())),
        ];
        for c in changes {
            for (t, r) in [(0.1, 0.2), (2.0, -0.3), (5.0, 0.01)] {
                let (chi, y) = c.forward(t, r).unwrap();
                let (s, r2) = c.inverse(t + chi, y).unwrap();
                assert!((chi + s).abs() < 1e-14 && (r - r2).abs() < 1e-14, "{}", c.label());
            }
        }
    }

    #[test]
    fn region_conditions() {
        let p = SpinOrbitParams::new(0.1, GOLDEN_MEAN + 0.1, 1e-3, GOLDEN_MEAN);
        assert_eq!(gt2_prechecks(&p, 10.0), (false, true));
        let p = SpinOrbitParams::new(5e-4, GOLDEN_MEAN, 1e-3, GOLDEN_MEAN);
        assert_eq!(gt2_prechecks(&p, 10.0), (true, false));
    }
}
