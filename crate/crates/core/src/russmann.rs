//! Translated curves of `Q` and the curves `C_α` in parameter space.
//!
//! The curve is sought as a parameterization `K(ξ) = (ξ + H(ξ), Γ(ξ))` in the
//! coordinates `ρ̃ = r − r_α`, with
//!
//! ```text
//! Q(K(ξ)) = K(ξ + 2πα) + (β, b)
//! ```
//!
//! The inner Newton loop solves for `(H, Γ, b, β)` at a fixed average height
//! `c = avg Γ`; the outer loop moves `c` until the rotation defect `β`
//! vanishes. Then `γ = Γ∘h⁻¹` with `h = id + H`, and `Q(θ, γ(θ)) =
//! (h∘R_{2πα}∘h⁻¹(θ), b + γ(h∘R_{2πα}∘h⁻¹(θ)))`.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::{solve_difference_equation, CohomologyError};
use crate::fourier::{invert_point, uniform_grid, wrap_angle, wrap_pi, CircleMap, FourierError, PeriodicFn};
use crate::model_maps::{
    twist_factor, CylinderMap, IntegratedQ, IntegratorOpts, MapError, PotentialSpec, SpinOrbitParams, TransformChain,
    Transformed, VerticalShift,
};

/// Twist below which the offset Newton step is meaningless.
pub const TORSION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RussmannError {
    #[error("cohomological equation failed: {0}")]
    Cohomology(#[from] CohomologyError),
    #[error("map evaluation failed: {0}")]
    Map(#[from] MapError),
    #[error("fourier: {0}")]
    Fourier(#[from] FourierError),
    #[error("twist {twist:.3e} below {TORSION_FLOOR:e}: torsion lost")]
    TorsionLoss { twist: f64 },
    #[error("normal multiplier not positive on the curve (min {min:.3e})")]
    NonPositiveMultiplier { min: f64 },
    #[error("newton stagnated: rotation defect {beta:.3e}, equation residual {residual:.3e}, defect history {history:?}")]
    Stagnation { beta: f64, residual: f64, history: Vec<f64> },
    #[error("newton did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("|eta| = {eta:.3e} is not above margin {margin} x eps = {bound:.3e}")]
    OutsideRegion { eta: f64, margin: f64, bound: f64 },
    #[error("secant for b(nu) = 0 failed; history (nu, b): {history:?}")]
    NoRoot { history: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveOptions {
    /// Acceptance tolerance of both defining residuals.
    pub tol: f64,
    /// Inner Newton iterations per outer step.
    pub max_newton: usize,
    /// Outer offset iterations.
    pub max_outer: usize,
    /// Mode cutoff `N` of the unknowns.
    pub mode_cap: usize,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_newton: 25,
            max_outer: 16,
            mode_cap: 128,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TranslatedCurve {
    /// `ρ̃ = γ(θ)`, sampled on the uniform θ grid.
    pub gamma: PeriodicFn,
    /// `h = id + H`, fixing θ = 0.
    pub h: CircleMap,
    /// Parameterized height `Γ = γ∘h`.
    pub gamma_param: PeriodicFn,
    pub b: f64,
    pub c_offset: f64,
    /// Remaining rotation defect.
    pub beta: f64,
    pub conj_residual: f64,
    pub trans_residual: f64,
    /// `r_α`: the curve lives in `ρ̃ = r − r_α`.
    pub r_offset: f64,
    pub alpha: f64,
    /// Average of the twist along the curve.
    pub twist: f64,
    pub newton_iterations: usize,
    pub outer_iterations: usize,
}

impl TranslatedCurve {
    /// `g = h∘R_{2πα}∘h⁻¹`, as an unreduced angle.
    pub fn conjugated_rotation(&self, theta: f64) -> Result<f64, FourierError> {
        let d = invert_point(&self.h.displacement, theta, 1e-15)?;
        let xi = theta + d;
        Ok(self.h.apply(xi + TAU * self.alpha))
    }

    pub fn accepted(&self, tol: f64) -> bool {
        self.conj_residual <= tol && self.trans_residual <= tol
    }
}

/// `Q` in `ρ̃ = r − r_α` coordinates for the rotation `α`.
pub fn rotated_frame(q: Arc<dyn CylinderMap>, alpha: f64) -> Transformed {
    let p = q.params();
    let detune = p.nu - alpha;
    let offset = detune * (1.0 - TAU / twist_factor(p.eta));
    Transformed::new(q, TransformChain::new().with(Arc::new(VerticalShift { offset })))
}

struct State {
    h: PeriodicFn,
    g: PeriodicFn,
    b: f64,
    beta: f64,
}

struct Linearization {
    e1: Vec<f64>,
    e2: Vec<f64>,
    s: Vec<f64>,
    lambda: Vec<f64>,
    err: f64,
}

fn linearize(qt: &dyn CylinderMap, st: &State, alpha: f64) -> Result<Linearization, RussmannError> {
    let shift = TAU * alpha;
    let h_plus = st.h.shift(shift);
    let g_plus = st.g.shift(shift);
    let dh_plus = st.h.derivative().shift(shift);
    let dg_plus = st.g.derivative().shift(shift);
    let nodes = st.h.grid_points();
    let m = nodes.len();
    let mut out = Linearization {
        e1: Vec::with_capacity(m),
        e2: Vec::with_capacity(m),
        s: Vec::with_capacity(m),
        lambda: Vec::with_capacity(m),
        err: 0.0,
    };
    for j in 0..m {
        let (hj, gj) = (st.h.grid_values()[j], st.g.grid_values()[j]);
        let (img, jac) = qt.eval_with_jacobian(nodes[j] + hj, gj)?;
        let e1 = hj + img.dtheta - h_plus.grid_values()[j] - shift - st.beta;
        let e2 = img.r - g_plus.grid_values()[j] - st.b;
        out.err = out.err.max(e1.abs()).max(e2.abs());
        let p = 1.0 / (1.0 + dh_plus.grid_values()[j]);
        let q = dg_plus.grid_values()[j] * p;
        out.e1.push(e1 * p);
        out.e2.push(e2 - q * e1);
        out.s.push(jac.m[0][1] * p);
        out.lambda.push(jac.m[1][1] - q * jac.m[0][1]);
    }
    Ok(out)
}

fn coh_tol(g: &PeriodicFn) -> f64 {
    1e-9 * (1.0 + g.sup_estimate())
}

/// One Newton step at fixed `avg Γ = c`. Returns the new state.
fn newton_step(st: &State, lin: &Linearization, alpha: f64, c: f64) -> Result<State, RussmannError> {
    let n = st.h.n_modes();
    let shift = TAU * alpha;
    let fit = |v: Vec<f64>| PeriodicFn::fit(&v);
    let min_l = lin.lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_l > 0.0) {
        return Err(RussmannError::NonPositiveMultiplier { min: min_l });
    }
    let log_l = fit(lin.lambda.iter().map(|l| l.ln()).collect())?;
    let ysol = solve_difference_equation(&log_l, 1.0, 1.0, alpha, coh_tol(&log_l))?;
    let lbar = ysol.mu.exp();
    let y = ysol.f.map_grid(f64::exp)?;
    let y_plus = y.shift(shift);

    // Λ W2 − W2(+) = R  ⇔  V(+) − Λ̄ V = −R / Y(+), W2 = Y V.
    let solve_normal = |r: &[f64]| -> Result<PeriodicFn, RussmannError> {
        let g = fit(r.iter().zip(y_plus.grid_values()).map(|(r, yp)| -r / yp).collect())?;
        let sol = solve_difference_equation(&g, 1.0, lbar, alpha, coh_tol(&g))?;
        let v = sol.f.offset(sol.mu / (1.0 - lbar));
        Ok(y.grid_product(&v))
    };
    let dh_plus = st.h.derivative().shift(shift);
    let dg = st.g.derivative();
    let dg_plus = dg.shift(shift);
    let p: Vec<f64> = dh_plus.grid_values().iter().map(|d| 1.0 / (1.0 + d)).collect();
    let q: Vec<f64> = p.iter().zip(dg_plus.grid_values()).map(|(p, d)| p * d).collect();

    let m = lin.e1.len();
    let r0: Vec<f64> = lin.e2.iter().map(|e| -e).collect();
    let rb = vec![1.0; m];
    let rbeta: Vec<f64> = q.iter().map(|q| -q).collect();
    let mut parts = Vec::with_capacity(3);
    for (idx, rn) in [r0, rb, rbeta].iter().enumerate() {
        let w2 = solve_normal(rn)?;
        let g: Vec<f64> = (0..m)
            .map(|j| {
                let base = match idx {
                    0 => lin.e1[j],
                    1 => 0.0,
                    _ => -p[j],
                };
                base + lin.s[j] * w2.grid_values()[j]
            })
            .collect();
        let g = fit(g)?;
        let sol = solve_difference_equation(&g, 1.0, 1.0, alpha, coh_tol(&g))?;
        let avg_dgamma = dg.grid_product(&sol.f).mean() + w2.mean();
        parts.push((w2, sol.f, sol.mu, avg_dgamma));
    }
    // μ⁰ + Δb μᵇ + Δβ μᵝ = 0 and Δavg Γ = c − avg Γ.
    let target = c - st.g.mean();
    let (a11, a12, r1) = (parts[1].2, parts[2].2, -parts[0].2);
    let (a21, a22, r2) = (parts[1].3, parts[2].3, target - parts[0].3);
    let det = a11 * a22 - a12 * a21;
    let db = (r1 * a22 - a12 * r2) / det;
    let dbeta = (a11 * r2 - a21 * r1) / det;
    let w1f: Vec<f64> = (0..m)
        .map(|j| parts[0].1.grid_values()[j] + db * parts[1].1.grid_values()[j] + dbeta * parts[2].1.grid_values()[j])
        .collect();
    let w2: Vec<f64> = (0..m)
        .map(|j| parts[0].0.grid_values()[j] + db * parts[1].0.grid_values()[j] + dbeta * parts[2].0.grid_values()[j])
        .collect();
    let dh = st.h.derivative();
    let w1c = -st.h.grid_values()[0] / (1.0 + dh.grid_values()[0]) - w1f[0];
    let mut hn = Vec::with_capacity(m);
    let mut gn = Vec::with_capacity(m);
    for j in 0..m {
        let w1 = w1f[j] + w1c;
        hn.push(st.h.grid_values()[j] + (1.0 + dh.grid_values()[j]) * w1);
        gn.push(st.g.grid_values()[j] + dg.grid_values()[j] * w1 + w2[j]);
    }
    let h = fit(hn)?.resample(n);
    let g = fit(gn)?.resample(n);
    Ok(State {
        h,
        g,
        b: st.b + db,
        beta: st.beta + dbeta,
    })
}

/// Inner Newton loop at fixed `c`; returns the final equation residual.
fn inner_solve(
    qt: &dyn CylinderMap,
    st: &mut State,
    alpha: f64,
    c: f64,
    opts: &CurveOptions,
    iterations: &mut usize,
) -> Result<(f64, f64), RussmannError> {
    let mut lin = linearize(qt, st, alpha)?;
    let mut twist = mean(&lin.s);
    for _ in 0..opts.max_newton {
        if twist.abs() < TORSION_FLOOR {
            return Err(RussmannError::TorsionLoss { twist });
        }
        let next = newton_step(st, &lin, alpha, c)?;
        let next_lin = linearize(qt, &next, alpha)?;
        *iterations += 1;
        let improved = next_lin.err < 0.5 * lin.err;
        let settled = (next.g.mean() - c).abs() < 1e-14 && next_lin.err <= 1e-3 * opts.tol;
        *st = next;
        let prev = lin.err;
        lin = next_lin;
        twist = mean(&lin.s);
        if settled || (!improved && lin.err <= opts.tol) || lin.err == 0.0 {
            return Ok((lin.err, twist));
        }
        if !improved && lin.err > 4.0 * prev {
            break;
        }
    }
    if lin.err <= opts.tol {
        Ok((lin.err, twist))
    } else {
        Err(RussmannError::NoConvergence {
            residual: lin.err,
            iterations: *iterations,
        })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Initial data for [`solve_translated_curve_from`].
#[derive(Debug, Clone)]
pub struct CurveGuess {
    pub h: PeriodicFn,
    pub gamma_param: PeriodicFn,
    pub b: f64,
    pub c_offset: f64,
}

impl From<&TranslatedCurve> for CurveGuess {
    fn from(tc: &TranslatedCurve) -> Self {
        Self {
            h: tc.h.displacement.clone(),
            gamma_param: tc.gamma_param.clone(),
            b: tc.b,
            c_offset: tc.c_offset,
        }
    }
}

/// Solves for the translated curve of `q` (a map in `r` coordinates) with
/// rotation `2πα`, starting from the unperturbed curve.
pub fn solve_translated_curve(
    q: Arc<dyn CylinderMap>,
    alpha: f64,
    opts: &CurveOptions,
) -> Result<TranslatedCurve, RussmannError> {
    solve_translated_curve_from(q, alpha, opts, None)
}

pub fn solve_translated_curve_from(
    q: Arc<dyn CylinderMap>,
    alpha: f64,
    opts: &CurveOptions,
    guess: Option<&CurveGuess>,
) -> Result<TranslatedCurve, RussmannError> {
    let n = opts.mode_cap;
    let p = q.params().clone();
    let qt = rotated_frame(q, alpha);
    let tau = TAU * p.eta * (p.nu - alpha);
    let mut st = match guess {
        Some(g) => State {
            h: g.h.resample(n),
            g: g.gamma_param.resample(n),
            b: g.b,
            beta: 0.0,
        },
        None => State {
            h: PeriodicFn::zero(n),
            g: PeriodicFn::zero(n),
            b: tau,
            beta: 0.0,
        },
    };
    let mut c = guess.map_or(0.0, |g| g.c_offset);
    let mut iterations = 0;
    let (mut residual, mut twist) = inner_solve(&qt, &mut st, alpha, c, opts, &mut iterations)?;
    let beta_tol = 0.05 * opts.tol;
    let mut history = vec![st.beta.abs()];
    let mut slope = twist;
    let mut prev: Option<(f64, f64)> = None;
    let mut outer = 0;
    while st.beta.abs() > beta_tol {
        if outer >= opts.max_outer {
            return Err(RussmannError::Stagnation {
                beta: st.beta,
                residual,
                history,
            });
        }
        if let Some((c0, b0)) = prev {
            let s = (st.beta - b0) / (c - c0);
            if s.is_finite() && s.abs() > TORSION_FLOOR {
                slope = s;
            }
        }
        prev = Some((c, st.beta));
        c -= st.beta / slope;
        outer += 1;
        let r = inner_solve(&qt, &mut st, alpha, c, opts, &mut iterations)?;
        residual = r.0;
        twist = r.1;
        history.push(st.beta.abs());
        let k = history.len();
        if k >= 4 && history[k - 1] > 0.9 * history[k - 4] {
            return Err(RussmannError::Stagnation {
                beta: st.beta,
                residual,
                history,
            });
        }
    }
    finish(&qt, st, c, alpha, twist, iterations, outer, opts, p.nu - alpha, p.eta)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    qt: &Transformed,
    st: State,
    c: f64,
    alpha: f64,
    twist: f64,
    iterations: usize,
    outer: usize,
    _opts: &CurveOptions,
    detune: f64,
    eta: f64,
) -> Result<TranslatedCurve, RussmannError> {
    let h = CircleMap::new(st.h.clone());
    let nodes = st.h.grid_points();
    let mut gamma_vals = Vec::with_capacity(nodes.len());
    for &t in &nodes {
        let d = invert_point(&st.h, t, 1e-15)?;
        gamma_vals.push(st.g.eval(t + d, 0));
    }
    let gamma = PeriodicFn::fit(&gamma_vals)?;
    let mut tc = TranslatedCurve {
        gamma,
        h,
        gamma_param: st.g,
        b: st.b,
        c_offset: c,
        beta: st.beta,
        conj_residual: f64::NAN,
        trans_residual: f64::NAN,
        r_offset: detune * (1.0 - TAU / twist_factor(eta)),
        alpha,
        twist,
        newton_iterations: iterations,
        outer_iterations: outer,
    };
    let (conj, trans) = curve_residuals(qt, &tc)?;
    tc.conj_residual = conj;
    tc.trans_residual = trans;
    Ok(tc)
}

/// Both defining residuals on a grid four times denser than the solver's.
/// `qt` is the map in `ρ̃` coordinates.
pub fn curve_residuals(qt: &dyn CylinderMap, tc: &TranslatedCurve) -> Result<(f64, f64), RussmannError> {
    let m = 4 * tc.gamma.grid_len();
    let mut conj = 0.0f64;
    let mut trans = 0.0f64;
    for t in uniform_grid(m) {
        let g = tc.gamma.eval(t, 0);
        let img = qt.eval(t, g)?;
        let target = tc.conjugated_rotation(t)?;
        conj = conj.max(wrap_pi(t + img.dtheta - target).abs());
        trans = trans.max((img.r - tc.b - tc.gamma.eval(target, 0)).abs());
    }
    Ok((conj, trans))
}

/// Rotation number (per iterate, in radians) of `θ ↦ Θ_Q(θ, γ(θ))` by
/// weighted Birkhoff averaging of the interpolated displacement.
pub fn restricted_rotation_number(
    qt: &dyn CylinderMap,
    gamma: &PeriodicFn,
    n_iter: usize,
) -> Result<f64, RussmannError> {
    let nodes = gamma.grid_points();
    let mut disp = Vec::with_capacity(nodes.len());
    for (&t, &g) in nodes.iter().zip(gamma.grid_values()) {
        disp.push(qt.eval(t, g)?.dtheta);
    }
    let disp = PeriodicFn::fit(&disp)?;
    Ok(weighted_birkhoff_rotation(&disp, 0.0, n_iter))
}

/// Weighted Birkhoff average of the displacement `d` along the orbit of
/// `θ ↦ θ + d(θ)`, with the smooth bump `exp(−1/(s(1−s)))`.
pub fn weighted_birkhoff_rotation(d: &PeriodicFn, theta0: f64, n_iter: usize) -> f64 {
    let mut t = theta0;
    let mut num = 0.0;
    let mut den = 0.0;
    for n in 0..n_iter {
        let s = (n as f64 + 0.5) / n_iter as f64;
        let w = (-1.0 / (s * (1.0 - s))).exp();
        let v = d.eval(t, 0);
        num += w * v;
        den += w;
        t = wrap_angle(t + v);
    }
    num / den
}

/// Settings for solving `b(ν) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CAlphaConfig {
    pub margin: f64,
    pub tol_b: f64,
    pub max_secant: usize,
    /// Run even when `|η| ≤ margin·ε`.
    pub force: bool,
    pub curve: CurveOptions,
    pub integrator: IntegratorOpts,
    pub potential: PotentialSpec,
    pub dioph_gamma: f64,
    pub dioph_tau: f64,
}

impl Default for CAlphaConfig {
    fn default() -> Self {
        Self {
            margin: 10.0,
            tol_b: 1e-10,
            max_secant: 30,
            force: false,
            curve: CurveOptions::default(),
            integrator: IntegratorOpts::default(),
            potential: PotentialSpec::default(),
            dioph_gamma: 0.38,
            dioph_tau: 1.0,
        }
    }
}

impl CAlphaConfig {
    pub fn params(&self, eta: f64, nu: f64, eps: f64, alpha: f64) -> SpinOrbitParams {
        let mut p = SpinOrbitParams::new(eta, nu, eps, alpha).with_potential(self.potential.clone());
        p.dioph_gamma = self.dioph_gamma;
        p.dioph_tau = self.dioph_tau;
        p
    }
}

#[derive(Debug, Clone)]
pub struct CAlphaPoint {
    pub eta: f64,
    pub nu_star: f64,
    pub b_residual: f64,
    pub conj_residual: f64,
    pub trans_residual: f64,
    /// Secant steps taken.
    pub iterations: usize,
    /// Last secant slope `db/dν`.
    pub slope: f64,
    pub curve: TranslatedCurve,
}

/// Solves `b(ν) = 0` by secant, seeded at `ν = α` with slope `2πη`.
pub fn find_c_alpha_frequency(eta: f64, eps: f64, alpha: f64, cfg: &CAlphaConfig) -> Result<CAlphaPoint, RussmannError> {
    find_c_alpha_frequency_from(eta, eps, alpha, cfg, alpha, None)
}

pub fn find_c_alpha_frequency_from(
    eta: f64,
    eps: f64,
    alpha: f64,
    cfg: &CAlphaConfig,
    nu_seed: f64,
    guess: Option<&CurveGuess>,
) -> Result<CAlphaPoint, RussmannError> {
    let bound = cfg.margin * eps;
    if eta.abs() <= bound && !cfg.force {
        return Err(RussmannError::OutsideRegion {
            eta,
            margin: cfg.margin,
            bound,
        });
    }
    let solve = |nu: f64, g: Option<&CurveGuess>| {
        let q: Arc<dyn CylinderMap> = Arc::new(IntegratedQ::new(cfg.params(eta, nu, eps, alpha), cfg.integrator));
        solve_translated_curve_from(q, alpha, &cfg.curve, g)
    };
    let mut nu0 = nu_seed;
    let mut c0 = solve(nu0, guess)?;
    let mut history = vec![(nu0, c0.b)];
    let mut slope = TAU * eta;
    if c0.b.abs() <= cfg.tol_b {
        return Ok(point(eta, nu0, c0, 0, slope));
    }
    let mut nu1 = nu0 - c0.b / slope;
    for it in 1..=cfg.max_secant {
        let c1 = solve(nu1, Some(&CurveGuess::from(&c0)))?;
        history.push((nu1, c1.b));
        if c1.b.abs() <= cfg.tol_b {
            let s = (c1.b - c0.b) / (nu1 - nu0);
            if s.is_finite() && s != 0.0 {
                slope = s;
            }
            return Ok(point(eta, nu1, c1, it, slope));
        }
        let s = (c1.b - c0.b) / (nu1 - nu0);
        if s.is_finite() && s != 0.0 {
            slope = s;
        }
        let next = nu1 - c1.b / slope;
        if !next.is_finite() {
            break;
        }
        nu0 = nu1;
        c0 = c1;
        nu1 = next;
    }
    Err(RussmannError::NoRoot { history })
}

fn point(eta: f64, nu: f64, tc: TranslatedCurve, iterations: usize, slope: f64) -> CAlphaPoint {
    CAlphaPoint {
        eta,
        nu_star: nu,
        b_residual: tc.b.abs(),
        conj_residual: tc.conj_residual,
        trans_residual: tc.trans_residual,
        iterations,
        slope,
        curve: tc,
    }
}

#[derive(Debug, Clone, Default)]
pub struct CAlphaTrace {
    pub points: Vec<CAlphaPoint>,
    /// `(η, reason)` for grid values without a point.
    pub gaps: Vec<(f64, String)>,
}

impl CAlphaTrace {
    /// Largest `|ν* − α|` along the trace.
    pub fn max_deviation(&self, alpha: f64) -> f64 {
        self.points.iter().map(|p| (p.nu_star - alpha).abs()).fold(0.0, f64::max)
    }
}

/// Samples `C_α` over `eta_grid`, each solve seeded by the previous `ν*`.
pub fn trace_c_alpha(eps: f64, alpha: f64, eta_grid: &[f64], cfg: &CAlphaConfig) -> CAlphaTrace {
    let mut trace = CAlphaTrace::default();
    let mut seed = alpha;
    let mut guess: Option<CurveGuess> = None;
    for &eta in eta_grid {
        match find_c_alpha_frequency_from(eta, eps, alpha, cfg, seed, guess.as_ref()) {
            Ok(p) => {
                seed = p.nu_star;
                guess = Some(CurveGuess::from(&p.curve));
                trace.points.push(p);
            }
            Err(e) => trace.gaps.push((eta, e.to_string())),
        }
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_maps::{ClosedFormP, GOLDEN_MEAN};

    #[test]
    fn unperturbed_curve_is_flat() {
        let p = SpinOrbitParams::new(0.1, GOLDEN_MEAN + 0.07, 0.0, GOLDEN_MEAN);
        let opts = CurveOptions { mode_cap: 16, ..CurveOptions::default() };
        let tc = solve_translated_curve(Arc::new(ClosedFormP::new(p.clone())), GOLDEN_MEAN, &opts).unwrap();
        assert!(tc.gamma.max_abs_grid() < 1e-14);
        assert!(tc.h.displacement.max_abs_grid() < 1e-14);
        assert!((tc.b - p.tau_alpha()).abs() < 1e-14);
        assert_eq!(tc.c_offset, 0.0);
    }

    #[test]
    fn birkhoff_average_of_rigid_rotation() {
        let d = PeriodicFn::constant(8, TAU * GOLDEN_MEAN);
        assert!((weighted_birkhoff_rotation(&d, 0.3, 1000) - TAU * GOLDEN_MEAN).abs() < 1e-14);
    }

    #[test]
    fn perturbed_curve_identity_and_rotation() {
        let p = SpinOrbitParams::new(0.05, GOLDEN_MEAN, 1e-3, GOLDEN_MEAN);
        let q: Arc<dyn CylinderMap> = Arc::new(IntegratedQ::new(p, IntegratorOpts { n_steps: 256 }));
        let opts = CurveOptions { mode_cap: 64, ..CurveOptions::default() };
        let tc = solve_translated_curve(q.clone(), GOLDEN_MEAN, &opts).unwrap();
        assert!(tc.accepted(1e-9), "{} {}", tc.conj_residual, tc.trans_residual);
        assert!(tc.b.abs() <= 1e-2);
        assert!(tc.h.is_orientation_preserving());
        assert!(tc.h.displacement.eval(0.0, 0).abs() < 1e-14);
        let rot = restricted_rotation_number(&rotated_frame(q, GOLDEN_MEAN), &tc.gamma, 20_000).unwrap();
        assert!((rot - TAU * GOLDEN_MEAN).abs() < 1e-9);
    }

    #[test]
    fn unperturbed_c_alpha_is_vertical() {
        let cfg = CAlphaConfig {
            curve: CurveOptions { mode_cap: 8, ..CurveOptions::default() },
            integrator: IntegratorOpts { n_steps: 64 },
            ..CAlphaConfig::default()
        };
        let pt = find_c_alpha_frequency(0.1, 0.0, GOLDEN_MEAN, &cfg).unwrap();
        assert_eq!(pt.nu_star, GOLDEN_MEAN);
        assert_eq!(pt.iterations, 0);
    }

    #[test]
    fn outside_region_is_refused() {
        let cfg = CAlphaConfig::default();
        let err = find_c_alpha_frequency(5e-3, 1e-3, GOLDEN_MEAN, &cfg).unwrap_err();
        assert!(matches!(err, RussmannError::OutsideRegion { .. }));
    }
}
