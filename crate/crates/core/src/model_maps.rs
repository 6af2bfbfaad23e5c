//! The spin-orbit vector field and its time-2π maps.
//!
//! Coordinates are `(θ, r)` with `r = θ̇ − α`. The field reads
//!
//! ```text
//! θ̇ = α + r
//! ṙ = −η r + η(ν − α) − ε ∂_θ f(θ, t)
//! ```
//!
//! Maps return the angular displacement `θ' − θ` rather than a wrapped angle,
//! so nearby images can be subtracted without losing digits.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::{diophantine_report, DiophantineReport};

/// `(√5 − 1)/2`.
pub const GOLDEN_MEAN: f64 = 0.618_033_988_749_894_9;

/// Below this `|η|` the twist factor is evaluated by its Taylor series.
pub const TWIST_SERIES_CUTOFF: f64 = 1e-8;

/// Default step count of the time-2π integrator.
pub const DEFAULT_STEPS: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("integration diverged at step {step} (non-finite state)")]
    Divergence { step: usize },
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("coordinate change could not be inverted: {0}")]
    CoordinateInversion(String),
    #[error("operation not supported: {0}")]
    Unsupported(String),
}

/// One harmonic `a cos(kθ + lt) + b sin(kθ + lt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialTerm {
    pub k: i32,
    pub l: i32,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
}

/// Finite trigonometric potential `f(θ, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub terms: Vec<PotentialTerm>,
}

impl Default for PotentialSpec {
    /// The leading spin-orbit harmonic `cos(2θ − 2t)`.
    fn default() -> Self {
        Self {
            terms: vec![PotentialTerm { k: 2, l: -2, a: 1.0, b: 0.0 }],
        }
    }
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<(), MapError> {
        for (i, t) in self.terms.iter().enumerate() {
            if !t.a.is_finite() || !t.b.is_finite() {
                return Err(MapError::InvalidPotential(format!("term {i} has a non-finite amplitude")));
            }
            if self.terms[..i].iter().any(|s| s.k == t.k && s.l == t.l) {
                return Err(MapError::InvalidPotential(format!("duplicate harmonic (k={}, l={})", t.k, t.l)));
            }
        }
        Ok(())
    }

    pub fn value(&self, theta: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|h| {
                let (s, c) = (h.k as f64 * theta + h.l as f64 * t).sin_cos();
                h.a * c + h.b * s
            })
            .sum()
    }

    /// `∂_θ f`.
    pub fn d_theta(&self, theta: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|h| {
                let (s, c) = (h.k as f64 * theta + h.l as f64 * t).sin_cos();
                h.k as f64 * (h.b * c - h.a * s)
            })
            .sum()
    }

    /// `(∂_θ f, ∂²_θ f)` with one `sin_cos` per term.
    pub fn d_theta_12(&self, theta: f64, t: f64) -> (f64, f64) {
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for h in &self.terms {
            let k = h.k as f64;
            let (s, c) = (k * theta + h.l as f64 * t).sin_cos();
            d1 += k * (h.b * c - h.a * s);
            d2 -= k * k * (h.a * c + h.b * s);
        }
        (d1, d2)
    }
}

/// A point of parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinOrbitParams {
    pub eta: f64,
    pub nu: f64,
    pub eps: f64,
    pub alpha: f64,
    pub dioph_gamma: f64,
    pub dioph_tau: f64,
    pub potential: PotentialSpec,
}

impl SpinOrbitParams {
    /// Golden-mean Diophantine constants (`γ = 0.38`, `τ = 1`) and the
    /// default potential.
    pub fn new(eta: f64, nu: f64, eps: f64, alpha: f64) -> Self {
        Self {
            eta,
            nu,
            eps,
            alpha,
            dioph_gamma: 0.38,
            dioph_tau: 1.0,
            potential: PotentialSpec::default(),
        }
    }

    pub fn with_potential(mut self, potential: PotentialSpec) -> Self {
        self.potential = potential;
        self
    }

    pub fn with_nu(&self, nu: f64) -> Self {
        let mut p = self.clone();
        p.nu = nu;
        p
    }

    /// `ν − α`.
    pub fn detuning(&self) -> f64 {
        self.nu - self.alpha
    }

    /// `(1 − e^{−2πη})/η`.
    pub fn twist(&self) -> f64 {
        twist_factor(self.eta)
    }

    /// Normal factor of `P`, `e^{−2πη}`.
    pub fn normal_factor(&self) -> f64 {
        (-TAU * self.eta).exp()
    }

    /// Height of the circle rotated by exactly `2πα` under `P`.
    pub fn r_alpha(&self) -> f64 {
        self.detuning() * (1.0 - TAU / self.twist())
    }

    /// Vertical translation of the rotated circle, `2πη(ν − α)`.
    pub fn tau_alpha(&self) -> f64 {
        TAU * self.eta * self.detuning()
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if !(self.eps >= 0.0) {
            return Err(MapError::InvalidPotential(format!("eps must be nonnegative, got {}", self.eps)));
        }
        self.potential.validate()
    }

    /// Finite Diophantine audit of `α` up to `k_max`.
    pub fn diophantine_audit(&self, k_max: u64) -> DiophantineReport {
        diophantine_report(self.alpha, self.dioph_gamma, self.dioph_tau, k_max)
    }
}

/// `(1 − e^{−2πη})/η`, continuous through `η = 0` where it equals 2π.
pub fn twist_factor(eta: f64) -> f64 {
    if eta.abs() < TWIST_SERIES_CUTOFF {
        let x = TAU * eta;
        TAU * (1.0 - x / 2.0 + x * x / 6.0)
    } else {
        -(-TAU * eta).exp_m1() / eta
    }
}

/// Right-hand side `(θ̇, ṙ)`.
pub fn spin_orbit_vector_field(p: &SpinOrbitParams, theta: f64, r: f64, t: f64) -> (f64, f64) {
    let force = if p.eps == 0.0 { 0.0 } else { p.eps * p.potential.d_theta(theta, t) };
    (p.alpha + r, -p.eta * r + p.eta * p.detuning() - force)
}

/// Closed form of the unperturbed time-2π map; `ε` is ignored.
pub fn unperturbed_time2pi_map(p: &SpinOrbitParams, point: (f64, f64)) -> (f64, f64) {
    let img = closed_form_image(p, point.0, point.1);
    (point.0 + img.dtheta, img.r)
}

fn closed_form_image(p: &SpinOrbitParams, _theta: f64, r: f64) -> MapImage {
    let rho = r - p.detuning();
    MapImage {
        dtheta: TAU * p.nu + p.twist() * rho,
        r: p.detuning() + p.normal_factor() * rho,
    }
}

/// Options of the fixed-step Dormand–Prince integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorOpts {
    pub n_steps: usize,
}

impl Default for IntegratorOpts {
    fn default() -> Self {
        Self { n_steps: DEFAULT_STEPS }
    }
}

/// Time-2π flow of the full field.
pub fn perturbed_time2pi_map(
    p: &SpinOrbitParams,
    point: (f64, f64),
    integ: &IntegratorOpts,
) -> Result<(f64, f64), MapError> {
    let img = integrate_flow(p, point.0, point.1, integ.n_steps, false)?;
    Ok((point.0 + img.dtheta, img.r))
}

/// Image of a point: angular displacement and new radial coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapImage {
    pub dtheta: f64,
    pub r: f64,
}

impl MapImage {
    /// Image angle, not reduced mod 2π.
    pub fn theta(&self, theta0: f64) -> f64 {
        theta0 + self.dtheta
    }
}

/// Real 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    pub m: [[f64; 2]; 2],
}

impl Jacobian {
    pub const IDENTITY: Jacobian = Jacobian { m: [[1.0, 0.0], [0.0, 1.0]] };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Self {
        let d = self.det();
        Self::new(self.m[1][1] / d, -self.m[0][1] / d, -self.m[1][0] / d, self.m[0][0] / d)
    }

    pub fn mul(&self, o: &Jacobian) -> Jacobian {
        let a = &self.m;
        let b = &o.m;
        Jacobian::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }

    pub fn apply(&self, v: (f64, f64)) -> (f64, f64) {
        (self.m[0][0] * v.0 + self.m[0][1] * v.1, self.m[1][0] * v.0 + self.m[1][1] * v.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    ClosedFormP,
    IntegratedQ,
    Transformed,
}

/// A diffeomorphism of the cylinder `T × R` with its Jacobian.
pub trait CylinderMap: Send + Sync {
    fn kind(&self) -> MapKind;
    fn params(&self) -> &SpinOrbitParams;
    fn eval(&self, theta: f64, r: f64) -> Result<MapImage, MapError>;
    fn eval_with_jacobian(&self, theta: f64, r: f64) -> Result<(MapImage, Jacobian), MapError>;
    /// The inverse diffeomorphism, when available.
    fn inverse(&self) -> Option<Arc<dyn CylinderMap>> {
        None
    }
}

/// Jacobian of any cylinder map at a point.
pub fn map_jacobian(m: &dyn CylinderMap, point: (f64, f64)) -> Result<Jacobian, MapError> {
    m.eval_with_jacobian(point.0, point.1).map(|(_, j)| j)
}

/// The unperturbed map `P`, or its inverse.
#[derive(Debug, Clone)]
pub struct ClosedFormP {
    params: SpinOrbitParams,
    inverted: bool,
}

impl ClosedFormP {
    pub fn new(params: SpinOrbitParams) -> Self {
        Self { params, inverted: false }
    }
}

impl CylinderMap for ClosedFormP {
    fn kind(&self) -> MapKind {
        MapKind::ClosedFormP
    }

    fn params(&self) -> &SpinOrbitParams {
        &self.params
    }

    fn eval(&self, theta: f64, r: f64) -> Result<MapImage, MapError> {
        let p = &self.params;
        if !self.inverted {
            return Ok(closed_form_image(p, theta, r));
        }
        let rho_out = r - p.detuning();
        let rho = rho_out / p.normal_factor();
        Ok(MapImage {
            dtheta: -(TAU * p.nu + p.twist() * rho),
            r: p.detuning() + rho,
        })
    }

    fn eval_with_jacobian(&self, theta: f64, r: f64) -> Result<(MapImage, Jacobian), MapError> {
        let p = &self.params;
        let j = Jacobian::new(1.0, p.twist(), 0.0, p.normal_factor());
        let j = if self.inverted { j.inverse() } else { j };
        Ok((self.eval(theta, r)?, j))
    }

    fn inverse(&self) -> Option<Arc<dyn CylinderMap>> {
        Some(Arc::new(Self {
            params: self.params.clone(),
            inverted: !self.inverted,
        }))
    }
}

/// The perturbed map `Q`, integrated numerically (backwards for the inverse).
#[derive(Debug, Clone)]
pub struct IntegratedQ {
    params: SpinOrbitParams,
    opts: IntegratorOpts,
    backward: bool,
}

impl IntegratedQ {
    pub fn new(params: SpinOrbitParams, opts: IntegratorOpts) -> Self {
        Self { params, opts, backward: false }
    }

    pub fn opts(&self) -> &IntegratorOpts {
        &self.opts
    }

    pub fn is_backward(&self) -> bool {
        self.backward
    }
}

impl CylinderMap for IntegratedQ {
    fn kind(&self) -> MapKind {
        MapKind::IntegratedQ
    }

    fn params(&self) -> &SpinOrbitParams {
        &self.params
    }

    fn eval(&self, theta: f64, r: f64) -> Result<MapImage, MapError> {
        integrate_flow(&self.params, theta, r, self.opts.n_steps, self.backward)
    }

    fn eval_with_jacobian(&self, theta: f64, r: f64) -> Result<(MapImage, Jacobian), MapError> {
        integrate_variational(&self.params, theta, r, self.opts.n_steps, self.backward)
    }

    fn inverse(&self) -> Option<Arc<dyn CylinderMap>> {
        Some(Arc::new(Self {
            params: self.params.clone(),
            opts: self.opts,
            backward: !self.backward,
        }))
    }
}

// Dormand–Prince 5(4) tableau; only the fifth-order weights are used.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Fixed-step DP5 from `t0` over `n` steps of size `h` with compensated
/// accumulation of the state. `y[0]` is an angular displacement.
fn dp5<const D: usize>(
    rhs: impl Fn(f64, &[f64; D]) -> [f64; D],
    mut y: [f64; D],
    t0: f64,
    h: f64,
    n: usize,
) -> Result<[f64; D], MapError> {
    let mut comp = [0.0; D];
    let mut k = [[0.0; D]; 7];
    k[0] = rhs(t0, &y);
    for step in 0..n {
        let t = t0 + h * step as f64;
        for s in 1..7 {
            let mut ys = y;
            for (i, v) in ys.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * k[j][i];
                }
                *v += h * acc;
            }
            k[s] = rhs(t + C[s] * h, &ys);
        }
        for i in 0..D {
            let mut incr = 0.0;
            for j in 0..6 {
                incr += A[6][j] * k[j][i];
            }
            // Kahan summation of y += h * incr.
            let dy = h * incr - comp[i];
            let sum = y[i] + dy;
            comp[i] = (sum - y[i]) - dy;
            y[i] = sum;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(MapError::Divergence { step: step + 1 });
        }
        k[0] = k[6];
    }
    Ok(y)
}

fn time_span(n_steps: usize, backward: bool) -> (f64, f64) {
    let h = TAU / n_steps as f64;
    if backward {
        (TAU, -h)
    } else {
        (0.0, h)
    }
}

fn integrate_flow(p: &SpinOrbitParams, theta: f64, r: f64, n: usize, backward: bool) -> Result<MapImage, MapError> {
    let (t0, h) = time_span(n, backward);
    let drift = p.eta * p.detuning();
    let y = dp5(
        |t, y: &[f64; 2]| {
            let force = if p.eps == 0.0 { 0.0 } else { p.eps * p.potential.d_theta(theta + y[0], t) };
            [p.alpha + y[1], -p.eta * y[1] + drift - force]
        },
        [0.0, r],
        t0,
        h,
        n,
    )?;
    Ok(MapImage { dtheta: y[0], r: y[1] })
}

fn integrate_variational(
    p: &SpinOrbitParams,
    theta: f64,
    r: f64,
    n: usize,
    backward: bool,
) -> Result<(MapImage, Jacobian), MapError> {
    let (t0, h) = time_span(n, backward);
    let drift = p.eta * p.detuning();
    let y = dp5(
        |t, y: &[f64; 6]| {
            let (d1, d2) = if p.eps == 0.0 {
                (0.0, 0.0)
            } else {
                let (a, b) = p.potential.d_theta_12(theta + y[0], t);
                (p.eps * a, p.eps * b)
            };
            [
                p.alpha + y[1],
                -p.eta * y[1] + drift - d1,
                y[4],
                y[5],
                -d2 * y[2] - p.eta * y[4],
                -d2 * y[3] - p.eta * y[5],
            ]
        },
        [0.0, r, 1.0, 0.0, 0.0, 1.0],
        t0,
        h,
        n,
    )?;
    Ok((MapImage { dtheta: y[0], r: y[1] }, Jacobian::new(y[2], y[3], y[4], y[5])))
}

/// A change of coordinates `(θ, r) ↦ (θ + χ, y)` on the cylinder.
///
/// Angles are carried as shifts so that displacements can be composed
/// without cancellation.
pub trait CoordinateChange: Send + Sync + fmt::Debug {
    /// Old point to `(χ, y)`: new angle is `θ + χ`.
    fn forward(&self, theta: f64, r: f64) -> Result<(f64, f64), MapError>;
    /// New point to `(s, r)`: old angle is `ξ + s`.
    fn inverse(&self, xi: f64, y: f64) -> Result<(f64, f64), MapError>;
    /// Jacobian of [`CoordinateChange::forward`] at an old point.
    fn jacobian(&self, theta: f64, r: f64) -> Jacobian;
    fn label(&self) -> String;
}

/// `y = r − offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalShift {
    pub offset: f64,
}

impl CoordinateChange for VerticalShift {
    fn forward(&self, _theta: f64, r: f64) -> Result<(f64, f64), MapError> {
        Ok((0.0, r - self.offset))
    }

    fn inverse(&self, _xi: f64, y: f64) -> Result<(f64, f64), MapError> {
        Ok((0.0, y + self.offset))
    }

    fn jacobian(&self, _theta: f64, _r: f64) -> Jacobian {
        Jacobian::IDENTITY
    }

    fn label(&self) -> String {
        format!("vertical shift by {:.6e}", self.offset)
    }
}

/// Ordered list of coordinate changes, applied first to last.
#[derive(Debug, Clone, Default)]
pub struct TransformChain {
    pub changes: Vec<Arc<dyn CoordinateChange>>,
}

impl TransformChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, c: Arc<dyn CoordinateChange>) -> Self {
        self.changes.push(c);
        self
    }

    pub fn push(&mut self, c: Arc<dyn CoordinateChange>) {
        self.changes.push(c);
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.changes.iter().map(|c| c.label()).collect()
    }

    /// Total angle shift and final radial coordinate of the forward chain.
    pub fn forward_shift(&self, theta: f64, r: f64) -> Result<(f64, f64), MapError> {
        let mut chi = 0.0;
        let mut y = r;
        for c in &self.changes {
            let (dx, ny) = c.forward(theta + chi, y)?;
            chi += dx;
            y = ny;
        }
        Ok((chi, y))
    }

    /// Total angle shift and original radial coordinate of the inverse chain.
    pub fn inverse_shift(&self, xi: f64, y: f64) -> Result<(f64, f64), MapError> {
        let mut s = 0.0;
        let mut r = y;
        for c in self.changes.iter().rev() {
            let (ds, nr) = c.inverse(xi + s, r)?;
            s += ds;
            r = nr;
        }
        Ok((s, r))
    }

    pub fn forward(&self, theta: f64, r: f64) -> Result<(f64, f64), MapError> {
        let (chi, y) = self.forward_shift(theta, r)?;
        Ok((theta + chi, y))
    }

    pub fn inverse(&self, xi: f64, y: f64) -> Result<(f64, f64), MapError> {
        let (s, r) = self.inverse_shift(xi, y)?;
        Ok((xi + s, r))
    }

    /// Jacobian of the forward chain at an old point.
    pub fn jacobian(&self, theta: f64, r: f64) -> Result<Jacobian, MapError> {
        let mut j = Jacobian::IDENTITY;
        let mut chi = 0.0;
        let mut y = r;
        for c in &self.changes {
            j = c.jacobian(theta + chi, y).mul(&j);
            let (dx, ny) = c.forward(theta + chi, y)?;
            chi += dx;
            y = ny;
        }
        Ok(j)
    }
}

/// `chain ∘ base ∘ chain⁻¹`.
#[derive(Clone)]
pub struct Transformed {
    pub base: Arc<dyn CylinderMap>,
    pub chain: TransformChain,
}

impl fmt::Debug for Transformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transformed")
            .field("base", &self.base.kind())
            .field("chain", &self.chain.labels())
            .finish()
    }
}

impl Transformed {
    pub fn new(base: Arc<dyn CylinderMap>, chain: TransformChain) -> Self {
        Self { base, chain }
    }

    /// Appends one more change to a copy of the chain.
    pub fn then(&self, c: Arc<dyn CoordinateChange>) -> Self {
        Self {
            base: self.base.clone(),
            chain: self.chain.clone().with(c),
        }
    }
}

impl CylinderMap for Transformed {
    fn kind(&self) -> MapKind {
        MapKind::Transformed
    }

    fn params(&self) -> &SpinOrbitParams {
        self.base.params()
    }

    fn eval(&self, xi: f64, y: f64) -> Result<MapImage, MapError> {
        let (s, r) = self.chain.inverse_shift(xi, y)?;
        let theta = xi + s;
        let img = self.base.eval(theta, r)?;
        let (chi, y1) = self.chain.forward_shift(theta + img.dtheta, img.r)?;
        Ok(MapImage {
            dtheta: s + img.dtheta + chi,
            r: y1,
        })
    }

    fn eval_with_jacobian(&self, xi: f64, y: f64) -> Result<(MapImage, Jacobian), MapError> {
        let (s, r) = self.chain.inverse_shift(xi, y)?;
        let theta = xi + s;
        let (img, jb) = self.base.eval_with_jacobian(theta, r)?;
        let (chi, y1) = self.chain.forward_shift(theta + img.dtheta, img.r)?;
        let j_in = self.chain.jacobian(theta, r)?.inverse();
        let j_out = self.chain.jacobian(theta + img.dtheta, img.r)?;
        Ok((
            MapImage {
                dtheta: s + img.dtheta + chi,
                r: y1,
            },
            j_out.mul(&jb).mul(&j_in),
        ))
    }

    fn inverse(&self) -> Option<Arc<dyn CylinderMap>> {
        let base = self.base.inverse()?;
        Some(Arc::new(Self {
            base,
            chain: self.chain.clone(),
        }))
    }
}

/// `Q` (or `P`) in the coordinates `ρ = r − (ν − α)`.
pub fn rho_coordinates(base: Arc<dyn CylinderMap>) -> Transformed {
    let offset = base.params().detuning();
    Transformed::new(base, TransformChain::new().with(Arc::new(VerticalShift { offset })))
}

/// `Q` (or `P`) in the coordinates `ρ̃ = r − r_α` centred on the rotated circle.
pub fn rotated_coordinates(base: Arc<dyn CylinderMap>) -> Transformed {
    let offset = base.params().r_alpha();
    Transformed::new(base, TransformChain::new().with(Arc::new(VerticalShift { offset })))
}

/// Numerically integrated `Q` behind an `Arc`.
pub fn integrated_q(params: SpinOrbitParams, opts: IntegratorOpts) -> Arc<dyn CylinderMap> {
    Arc::new(IntegratedQ::new(params, opts))
}

/// `π` re-exported for callers building half-period shifts.
pub const HALF_TURN: f64 = PI;

#[cfg(test)]
mod tests {
    use super::*;

    fn params(eta: f64, detune: f64, eps: f64) -> SpinOrbitParams {
        SpinOrbitParams::new(eta, GOLDEN_MEAN + detune, eps, GOLDEN_MEAN)
    }

    #[test]
    fn field_examples() {
        let p = params(0.1, 0.0, 0.0);
        assert_eq!(spin_orbit_vector_field(&p, 1.0, 0.0, 2.0), (GOLDEN_MEAN, 0.0));
        let p = params(0.1, 0.1, 0.0);
        let (_, dr) = spin_orbit_vector_field(&p, 0.0, 0.3, 0.0);
        assert!((dr + 0.02).abs() < 1e-15);
        let p = params(0.1, 0.0, 1.0);
        assert_eq!(spin_orbit_vector_field(&p, 0.0, 0.0, 0.0).1, 0.0);
    }

    #[test]
    fn twist_limits() {
        assert!((twist_factor(0.0) - TAU).abs() < 1e-15);
        let eta = 0.99e-8;
        let exact = -(-TAU * eta).exp_m1() / eta;
        assert!((twist_factor(eta) - exact).abs() < 1e-14);
        assert!((twist_factor(0.1) - (1.0 - (-0.2 * PI).exp()) / 0.1).abs() < 1e-14);
    }

    #[test]
    fn rotated_circle_examples() {
        let p = params(0.1, 0.1, 0.0);
        // -0.0346843..., quoted to six decimals.
        assert!((p.r_alpha() + 0.034685).abs() < 1e-6);
        assert!((p.tau_alpha() - 0.0628319).abs() < 5e-8);
        let (t1, r1) = unperturbed_time2pi_map(&p, (0.4, p.r_alpha()));
        assert!((t1 - 0.4 - TAU * GOLDEN_MEAN).abs() < 1e-12);
        assert!((r1 - p.r_alpha() - p.tau_alpha()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_jacobian() {
        let p = params(0.1, 0.2, 0.0);
        let j = map_jacobian(&ClosedFormP::new(p.clone()), (1.0, 0.3)).unwrap();
        assert_eq!(j.m, [[1.0, p.twist()], [0.0, p.normal_factor()]]);
        let j0 = map_jacobian(&ClosedFormP::new(params(0.0, 0.2, 0.0)), (1.0, 0.3)).unwrap();
        assert_eq!(j0.m, [[1.0, TAU], [0.0, 1.0]]);
    }

    #[test]
    fn closed_form_inverse_round_trip() {
        let p = ClosedFormP::new(params(0.3, -0.1, 0.0));
        let inv = p.inverse().unwrap();
        let a = p.eval(0.5, 0.2).unwrap();
        let b = inv.eval(0.5 + a.dtheta, a.r).unwrap();
        assert!((a.dtheta + b.dtheta).abs() < 1e-14);
        assert!((b.r - 0.2).abs() < 1e-14);
    }

    #[test]
    fn integrated_matches_closed_form() {
        let p = params(0.2, 0.05, 0.0);
        let q = IntegratedQ::new(p.clone(), IntegratorOpts::default());
        let cf = ClosedFormP::new(p);
        for &(t, r) in &[(0.0, 0.0), (1.0, -0.7), (4.0, 0.9)] {
            let a = q.eval(t, r).unwrap();
            let b = cf.eval(t, r).unwrap();
            assert!((a.dtheta - b.dtheta).abs() < 1e-10);
            assert!((a.r - b.r).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_integration_inverts() {
        let p = params(0.2, 0.05, 1e-3);
        let q = IntegratedQ::new(p, IntegratorOpts::default());
        let inv = q.inverse().unwrap();
        let a = q.eval(0.7, 0.1).unwrap();
        let b = inv.eval(0.7 + a.dtheta, a.r).unwrap();
        assert!((a.dtheta + b.dtheta).abs() < 1e-11);
        assert!((b.r - 0.1).abs() < 1e-11);
    }

    #[test]
    fn divergence_is_reported() {
        let p = params(-200.0, 0.0, 0.0);
        let q = IntegratedQ::new(p, IntegratorOpts { n_steps: 8 });
        assert!(matches!(q.eval(0.0, 1e300), Err(MapError::Divergence { .. })));
    }

    #[test]
    fn potential_duplicates_rejected() {
        let spec = PotentialSpec {
            terms: vec![PotentialTerm { k: 2, l: -2, a: 1.0, b: 0.0 }; 2],
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn transformed_jacobian_chain_rule() {
        let p = params(0.2, 0.05, 1e-3);
        let q = rho_coordinates(integrated_q(p.clone(), IntegratorOpts::default()));
        let (img, j) = q.eval_with_jacobian(0.3, 0.1).unwrap();
        let (img0, j0) = IntegratedQ::new(p.clone(), IntegratorOpts::default())
            .eval_with_jacobian(0.3, 0.1 + p.detuning())
            .unwrap();
        assert!((img.dtheta - img0.dtheta).abs() < 1e-14);
        assert!((img.r - (img0.r - p.detuning())).abs() < 1e-14);
        assert_eq!(j, j0);
    }
}
