//! Hadamard graph transform on Lipschitz graphs over the circle.
//!
//! All functions here take the map in the coordinates where the candidate
//! circle lives (usually `ρ = r − (ν − α)`, see
//! [`rho_coordinates`](crate::model_maps::rho_coordinates)), and assume the map
//! is attracting. For `η < 0` pass the inverse map, see [`attracting_map`].

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::{invert_circle_map, uniform_grid, wrap_angle, CircleMap, FourierError, PeriodicFn};
use crate::model_maps::{
    twist_factor, ClosedFormP, CylinderMap, IntegratedQ, IntegratorOpts, MapError, SpinOrbitParams,
};

/// Half-width of the annulus `T × [−1, 1]` that graphs must stay in.
pub const ANNULUS_HALF_WIDTH: f64 = 1.0;

/// Number of points on the logarithmic `k` grid of [`gt1_feasibility`].
pub const GT1_K_GRID: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GtError {
    #[error("horizontal map is not invertible: {0}")]
    NotAContraction(FourierError),
    #[error("graph left the annulus: sup|phi| = {sup:.4e}")]
    AnnulusEscape { sup: f64 },
    #[error("graph transform diverging: contraction ratio {ratio:.4} over the last window at iteration {iteration}")]
    Divergence { ratio: f64, iteration: usize },
    #[error("no convergence after {iterations} iterations (last sup change {last:.3e})")]
    Timeout { iterations: usize, history: Vec<f64>, last: f64 },
    #[error("graph Lipschitz estimate {lip:.4e} exceeds the class bound {bound:.4e}")]
    LipschitzBound { lip: f64, bound: f64 },
    #[error("map evaluation failed: {0}")]
    Map(#[from] MapError),
    #[error("fourier: {0}")]
    Fourier(FourierError),
}

impl From<FourierError> for GtError {
    fn from(e: FourierError) -> Self {
        match e {
            FourierError::NotAContraction { .. } | FourierError::ConvergenceFailure { .. } => GtError::NotAContraction(e),
            other => GtError::Fourier(other),
        }
    }
}

/// Candidate invariant circle `ρ = φ(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzGraph {
    pub phi: PeriodicFn,
    pub lip_k: f64,
}

impl LipschitzGraph {
    pub fn new(phi: PeriodicFn) -> Self {
        let lip_k = phi.lipschitz_estimate();
        Self { phi, lip_k }
    }

    pub fn constant(n_modes: usize, c: f64) -> Self {
        Self::new(PeriodicFn::constant(n_modes, c))
    }

    pub fn sup(&self) -> f64 {
        self.phi.max_abs_grid()
    }
}

/// Returns the map itself for `η ≥ 0` and its inverse for `η < 0`.
pub fn attracting_map(q: Arc<dyn CylinderMap>) -> Result<Arc<dyn CylinderMap>, MapError> {
    if q.params().eta >= 0.0 {
        Ok(q)
    } else {
        q.inverse().ok_or_else(|| MapError::Unsupported("map has no inverse".into()))
    }
}

/// One application of `Γφ = R∘(id,φ)∘[Θ∘(id,φ)]⁻¹`, resampled on the grid.
/// `tol` is the tolerance of the horizontal inversion.
pub fn apply_graph_transform(q: &dyn CylinderMap, phi: &LipschitzGraph, tol: f64) -> Result<LipschitzGraph, GtError> {
    let nodes = phi.phi.grid_points();
    let mut u = Vec::with_capacity(nodes.len());
    let mut w = Vec::with_capacity(nodes.len());
    for (&t, &p) in nodes.iter().zip(phi.phi.grid_values()) {
        let img = q.eval(t, p)?;
        u.push(img.dtheta);
        w.push(img.r);
    }
    let horizontal = CircleMap::new(PeriodicFn::fit(&u)?);
    let inv = invert_circle_map(&horizontal, tol)?;
    let w = PeriodicFn::fit(&w)?;
    let values: Vec<f64> = nodes
        .iter()
        .zip(inv.displacement.grid_values())
        .map(|(&t, &v)| w.eval(t + v, 0))
        .collect();
    let next = LipschitzGraph::new(PeriodicFn::fit(&values)?);
    let sup = next.sup();
    if sup > ANNULUS_HALF_WIDTH {
        return Err(GtError::AnnulusEscape { sup });
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtOptions {
    /// Target invariance residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Lipschitz class bound for the result.
    pub k_bound: f64,
    /// Number of iterations over which a ratio `≥ 1` counts as divergence.
    pub window: usize,
    /// Tolerance of the horizontal inversion.
    pub inversion_tol: f64,
}

impl Default for GtOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 400,
            k_bound: 1.0,
            window: 6,
            inversion_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GtReport {
    pub iterations: usize,
    /// Sup change of the last iterate.
    pub final_residual: f64,
    /// Observed ratio of successive sup changes.
    pub contraction_estimate: f64,
    /// Sup over a 4×-dense grid of `|R(θ,φ(θ)) − φ(θ + Θ(θ,φ(θ)) − θ)|`.
    pub invariance_residual: f64,
    /// Per-period geometric mean of the normal factor `det DQ / c` along the
    /// circle dynamics, `c` the tangential factor.
    pub normal_multiplier: f64,
    /// Per-period geometric mean of the tangential factor.
    pub tangential_multiplier: f64,
    pub history: Vec<f64>,
}

impl GtReport {
    pub fn converged(&self, tol: f64) -> bool {
        self.contraction_estimate < 1.0 && self.invariance_residual <= tol
    }
}

/// Iterates the graph transform to its fixed point.
pub fn find_invariant_graph(
    q: &dyn CylinderMap,
    phi0: &LipschitzGraph,
    opts: &GtOptions,
) -> Result<(LipschitzGraph, GtReport), GtError> {
    let mut phi = phi0.clone();
    let mut history: Vec<f64> = Vec::new();
    let mut ratio = 0.0;
    let mut converged = false;
    for it in 1..=opts.max_iter {
        let next = apply_graph_transform(q, &phi, opts.inversion_tol)?;
        let d = next
            .phi
            .grid_values()
            .iter()
            .zip(phi.phi.grid_values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        history.push(d);
        phi = next;
        let n = history.len();
        if n >= 2 && history[n - 2] > 0.0 {
            ratio = d / history[n - 2];
        }
        let c = ratio.clamp(0.0, 0.99);
        if d == 0.0 || d * c / (1.0 - c) <= 0.05 * opts.tol && n >= 2 || d <= 1e-3 * opts.tol {
            converged = true;
            break;
        }
        if n > opts.window && d > opts.tol {
            let windowed = (d / history[n - 1 - opts.window]).powf(1.0 / opts.window as f64);
            if windowed >= 1.0 {
                return Err(GtError::Divergence { ratio: windowed, iteration: it });
            }
        }
    }
    if !converged {
        let last = *history.last().unwrap_or(&f64::NAN);
        return Err(GtError::Timeout {
            iterations: history.len(),
            history,
            last,
        });
    }
    if phi.lip_k > opts.k_bound {
        return Err(GtError::LipschitzBound {
            lip: phi.lip_k,
            bound: opts.k_bound,
        });
    }
    let invariance_residual = invariance_residual(q, &phi)?;
    let (normal_multiplier, tangential_multiplier) = interpolated_multipliers(q, &phi, 10_000)?;
    let report = GtReport {
        iterations: history.len(),
        final_residual: *history.last().unwrap_or(&0.0),
        contraction_estimate: ratio,
        invariance_residual,
        normal_multiplier,
        tangential_multiplier,
        history,
    };
    Ok((phi, report))
}

/// Graph-invariance defect on a grid four times denser than `phi`'s.
pub fn invariance_residual(q: &dyn CylinderMap, phi: &LipschitzGraph) -> Result<f64, MapError> {
    let dense = phi.phi.dense_values(4);
    let mut worst = 0.0f64;
    for (t, p) in uniform_grid(dense.len()).into_iter().zip(dense) {
        let img = q.eval(t, p)?;
        worst = worst.max((img.r - phi.phi.eval(t + img.dtheta, 0)).abs());
    }
    Ok(worst)
}

/// Normal and tangential factors averaged along an orbit of the interpolated
/// circle dynamics.
fn interpolated_multipliers(q: &dyn CylinderMap, phi: &LipschitzGraph, n_iter: usize) -> Result<(f64, f64), GtError> {
    let dphi = phi.phi.derivative();
    let nodes = phi.phi.grid_points();
    let mut log_n = Vec::with_capacity(nodes.len());
    let mut log_c = Vec::with_capacity(nodes.len());
    let mut shift = Vec::with_capacity(nodes.len());
    for (&t, &p) in nodes.iter().zip(phi.phi.grid_values()) {
        let (img, j) = q.eval_with_jacobian(t, p)?;
        let c = j.m[0][0] + j.m[0][1] * dphi.eval(t, 0);
        log_c.push(c.abs().ln());
        log_n.push((j.det() / c).abs().ln());
        shift.push(img.dtheta);
    }
    let log_n = PeriodicFn::fit(&log_n)?;
    let log_c = PeriodicFn::fit(&log_c)?;
    let shift = PeriodicFn::fit(&shift)?;
    let mut t = 0.0;
    let (mut sn, mut sc) = (0.0, 0.0);
    for _ in 0..n_iter {
        sn += log_n.eval(t, 0);
        sc += log_c.eval(t, 0);
        t = wrap_angle(t + shift.eval(t, 0));
    }
    Ok(((sn / n_iter as f64).exp(), (sc / n_iter as f64).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominationReport {
    pub normal_multiplier: f64,
    pub tangential_multiplier: f64,
    pub iterates: usize,
}

impl DominationReport {
    /// Normal factor below one and below the tangential factor.
    pub fn dominated(&self) -> bool {
        self.normal_multiplier < 1.0 && self.normal_multiplier < self.tangential_multiplier
    }
}

/// Normal versus tangential growth along a true orbit on the circle, both
/// from the map's Jacobian.
pub fn domination_check(q: &dyn CylinderMap, phi: &LipschitzGraph, n_iter: usize) -> Result<DominationReport, MapError> {
    let dphi = phi.phi.derivative();
    let mut t = 0.0;
    let (mut sn, mut sc) = (0.0, 0.0);
    for _ in 0..n_iter {
        let r = phi.phi.eval(t, 0);
        let (img, j) = q.eval_with_jacobian(t, r)?;
        let c = j.m[0][0] + j.m[0][1] * dphi.eval(t, 0);
        sc += c.abs().ln();
        sn += (j.det() / c).abs().ln();
        t = wrap_angle(t + img.dtheta);
    }
    Ok(DominationReport {
        normal_multiplier: (sn / n_iter as f64).exp(),
        tangential_multiplier: (sc / n_iter as f64).exp(),
        iterates: n_iter,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Gt1Outcome {
    Feasible { k: f64, contraction: f64 },
    Infeasible,
}

impl Gt1Outcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Gt1Outcome::Feasible { .. })
    }

    pub fn k(&self) -> Option<f64> {
        match self {
            Gt1Outcome::Feasible { k, .. } => Some(*k),
            Gt1Outcome::Infeasible => None,
        }
    }

    pub fn contraction(&self) -> Option<f64> {
        match self {
            Gt1Outcome::Feasible { contraction, .. } => Some(*contraction),
            Gt1Outcome::Infeasible => None,
        }
    }
}

/// Searches `k ∈ (ε/η, η)` for a Lipschitz class where the graph transform
/// is both well defined and a contraction; returns the feasible `k` with the
/// smallest contraction constant.
pub fn gt1_feasibility(eta: f64, eps: f64, a_f: f64, a_g: f64) -> Gt1Outcome {
    let e = eta.abs();
    if e == 0.0 || !e.is_finite() {
        return Gt1Outcome::Infeasible;
    }
    let l = (-TAU * e).exp();
    let tw = twist_factor(e);
    let lo = if eps > 0.0 { eps / e } else { 1e-12 * e };
    let hi = e;
    if lo >= hi {
        return Gt1Outcome::Infeasible;
    }
    let mut best: Option<(f64, f64)> = None;
    for i in 0..GT1_K_GRID {
        let k = lo * (hi / lo).powf((i as f64 + 0.5) / GT1_K_GRID as f64);
        let lhs = k * l + eps * a_g * (1.0 + k);
        let rhs = k * (1.0 - (tw * k + eps * a_f * (1.0 + k)));
        let contraction = l + eps * a_g + TAU * k + eps * k * a_f;
        if lhs <= rhs && contraction < 1.0 && best.map_or(true, |(_, c)| contraction < c) {
            best = Some((k, contraction));
        }
    }
    match best {
        Some((k, contraction)) => Gt1Outcome::Feasible { k, contraction },
        None => Gt1Outcome::Infeasible,
    }
}

/// Sup bounds `A_f, A_g` of the derivatives of the perturbation terms of `Q`
/// over `T × [−1, 1]` in `ρ` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationBounds {
    pub a_f: f64,
    pub a_g: f64,
    /// `sup|g|/ε` on the same grid: calibrates the pre-annulus constant.
    pub g_sup: f64,
}

/// Samples `DQ − DP` on an `n_theta × n_rho` grid. For `η < 0` the inverse
/// maps are compared.
pub fn perturbation_bounds(
    params: &SpinOrbitParams,
    opts: &IntegratorOpts,
    n_theta: usize,
    n_rho: usize,
) -> Result<PerturbationBounds, MapError> {
    if params.eps == 0.0 {
        return Ok(PerturbationBounds { a_f: 0.0, a_g: 0.0, g_sup: 0.0 });
    }
    let q = attracting_map(Arc::new(IntegratedQ::new(params.clone(), *opts)))?;
    let p = attracting_map(Arc::new(ClosedFormP::new(params.clone())))?;
    let (_, jp) = p.eval_with_jacobian(0.0, 0.0)?;
    let det = params.detuning();
    let mut a_f = 0.0f64;
    let mut a_g = 0.0f64;
    let mut g_sup = 0.0f64;
    for i in 0..n_theta {
        let t = TAU * i as f64 / n_theta as f64;
        for j in 0..n_rho {
            let rho = -ANNULUS_HALF_WIDTH + 2.0 * ANNULUS_HALF_WIDTH * j as f64 / (n_rho - 1).max(1) as f64;
            let r = rho + det;
            let (img, jq) = q.eval_with_jacobian(t, r)?;
            let ip = p.eval(t, r)?;
            a_f = a_f.max((jq.m[0][0] - jp.m[0][0]).abs()).max((jq.m[0][1] - jp.m[0][1]).abs());
            a_g = a_g.max((jq.m[1][0] - jp.m[1][0]).abs()).max((jq.m[1][1] - jp.m[1][1]).abs());
            g_sup = g_sup.max((img.r - ip.r).abs());
        }
    }
    let e = params.eps;
    Ok(PerturbationBounds {
        a_f: a_f / e,
        a_g: a_g / e,
        g_sup: g_sup / e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasinOptions {
    pub n_samples: usize,
    pub n_iters: usize,
    pub capture_tol: f64,
    pub r_box: f64,
    pub seed: u64,
}

impl Default for BasinOptions {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_iters: 500,
            capture_tol: 1e-6,
            r_box: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasinReport {
    pub fraction_converged: f64,
    pub n_captured: usize,
    pub n_diverged: usize,
    pub max_capture_iters: usize,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// Quasi-random points of `T × [−r_box, r_box]` (additive recurrence with the
/// plastic-number basis, offset by the seed).
pub fn quasi_random_points(n: usize, r_box: f64, seed: u64) -> Vec<(f64, f64)> {
    const PLASTIC: f64 = 1.324_717_957_244_746;
    let a1 = 1.0 / PLASTIC;
    let a2 = 1.0 / (PLASTIC * PLASTIC);
    let s1 = unit_interval(splitmix64(seed));
    let s2 = unit_interval(splitmix64(seed ^ 0xD1B5_4A32_D192_ED03));
    (1..=n)
        .map(|i| {
            let u = (s1 + a1 * i as f64).fract();
            let v = (s2 + a2 * i as f64).fract();
            (TAU * u, r_box * (2.0 * v - 1.0))
        })
        .collect()
}

/// Fraction of initial conditions whose orbit comes within `capture_tol` of
/// the graph. Orbits leaving `|r| ≤ 10 r_box` count as not converged.
pub fn basin_probe(q: &dyn CylinderMap, phi: &LipschitzGraph, opts: &BasinOptions) -> BasinReport {
    let mut captured = 0;
    let mut diverged = 0;
    let mut max_iters = 0;
    'points: for (t0, r0) in quasi_random_points(opts.n_samples, opts.r_box, opts.seed) {
        let (mut t, mut r) = (t0, r0);
        for n in 0..=opts.n_iters {
            if (r - phi.phi.eval(t, 0)).abs() < opts.capture_tol {
                captured += 1;
                max_iters = max_iters.max(n);
                continue 'points;
            }
            if n == opts.n_iters {
                break;
            }
            match q.eval(t, r) {
                Ok(img) if img.r.is_finite() && img.r.abs() <= 10.0 * opts.r_box => {
                    t = wrap_angle(t + img.dtheta);
                    r = img.r;
                }
                _ => {
                    diverged += 1;
                    continue 'points;
                }
            }
        }
    }
    BasinReport {
        fraction_converged: captured as f64 / opts.n_samples.max(1) as f64,
        n_captured: captured,
        n_diverged: diverged,
        max_capture_iters: max_iters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_maps::{rho_coordinates, GOLDEN_MEAN};

    fn p_rho(eta: f64) -> Arc<dyn CylinderMap> {
        let p = SpinOrbitParams::new(eta, GOLDEN_MEAN + 0.05, 0.0, GOLDEN_MEAN);
        Arc::new(rho_coordinates(Arc::new(ClosedFormP::new(p))))
    }

    #[test]
    fn zero_graph_is_invariant_for_p() {
        let q = p_rho(0.2);
        let g = apply_graph_transform(q.as_ref(), &LipschitzGraph::constant(16, 0.0), 1e-14).unwrap();
        assert!(g.sup() < 1e-15);
    }

    #[test]
    fn constant_graph_contracts_by_normal_factor() {
        let q = p_rho(0.2);
        let g = apply_graph_transform(q.as_ref(), &LipschitzGraph::constant(16, 0.3), 1e-14).unwrap();
        let expected = 0.3 * (-TAU * 0.2).exp();
        for v in g.phi.grid_values() {
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn unperturbed_iteration_is_geometric() {
        let eta = 0.2;
        let q = p_rho(eta);
        let opts = GtOptions { tol: 1e-12, ..GtOptions::default() };
        let (g, rep) = find_invariant_graph(q.as_ref(), &LipschitzGraph::constant(16, 0.5), &opts).unwrap();
        assert!(g.sup() < 1e-12);
        let l = (-TAU * eta).exp();
        for (n, d) in rep.history.iter().enumerate().take(8) {
            let expected = 0.5 * (1.0 - l) * l.powi(n as i32);
            assert!((d - expected).abs() < 1e-14, "n={n}");
        }
        assert!((rep.contraction_estimate - l).abs() < 1e-6);
        assert!((rep.normal_multiplier - l).abs() < 1e-12);
        assert!((rep.tangential_multiplier - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strong_dissipation_converges_in_two_steps() {
        let q = p_rho(3.0);
        let (g, rep) = find_invariant_graph(q.as_ref(), &LipschitzGraph::constant(16, 0.5), &GtOptions::default()).unwrap();
        assert!(rep.iterations <= 2);
        assert!(g.sup() < 1e-8);
    }

    #[test]
    fn escape_is_reported() {
        let p = SpinOrbitParams::new(-0.2, GOLDEN_MEAN, 0.0, GOLDEN_MEAN);
        let q = rho_coordinates(Arc::new(ClosedFormP::new(p)));
        let err = apply_graph_transform(&q, &LipschitzGraph::constant(8, 0.5), 1e-14).unwrap_err();
        assert!(matches!(err, GtError::AnnulusEscape { .. }));
    }

    #[test]
    fn gt1_examples() {
        match gt1_feasibility(0.3, 0.0, 0.0, 0.0) {
            Gt1Outcome::Feasible { contraction, .. } => assert!(contraction < 1.0 && contraction > (-TAU * 0.3).exp()),
            Gt1Outcome::Infeasible => panic!("unperturbed map must be feasible"),
        }
        assert!(gt1_feasibility(0.2, 1e-3, 2.0, 2.0).is_feasible());
        assert_eq!(gt1_feasibility(0.01, 1e-3, 2.0, 2.0), Gt1Outcome::Infeasible);
        assert_eq!(gt1_feasibility(0.01, 1e-3, 0.0, 0.0), Gt1Outcome::Infeasible);
    }

    #[test]
    fn basin_of_p_is_everything() {
        let q = p_rho(0.2);
        let opts = BasinOptions { n_samples: 200, ..BasinOptions::default() };
        let rep = basin_probe(q.as_ref(), &LipschitzGraph::constant(8, 0.0), &opts);
        assert_eq!(rep.fraction_converged, 1.0);
        // |ρ| ≤ 5 contracts by e^{−0.4π} per step down to 1e-6.
        let bound = ((5.0f64 / 1e-6).ln() / (TAU * 0.2)).ceil() as usize;
        assert!(rep.max_capture_iters <= bound);
    }

    #[test]
    fn repulsive_regime_uses_inverse() {
        let p = SpinOrbitParams::new(-0.2, GOLDEN_MEAN + 0.05, 0.0, GOLDEN_MEAN);
        let q = attracting_map(Arc::new(rho_coordinates(Arc::new(ClosedFormP::new(p))))).unwrap();
        let opts = BasinOptions { n_samples: 100, ..BasinOptions::default() };
        let rep = basin_probe(q.as_ref(), &LipschitzGraph::constant(8, 0.0), &opts);
        assert_eq!(rep.fraction_converged, 1.0);
    }

    #[test]
    fn quasi_random_points_fill_the_box() {
        let pts = quasi_random_points(1000, 5.0, 7);
        assert!(pts.iter().all(|&(t, r)| (0.0..TAU).contains(&t) && r.abs() <= 5.0));
        let upper = pts.iter().filter(|p| p.1 > 0.0).count();
        assert!((upper as i64 - 500).abs() < 20);
        assert_ne!(quasi_random_points(3, 5.0, 1), quasi_random_points(3, 5.0, 2));
    }
}
