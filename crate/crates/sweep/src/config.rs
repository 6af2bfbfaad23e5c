//! Run configuration, read from TOML. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use spinorbit_core::graph_transform::{BasinOptions, GtOptions};
use spinorbit_core::model_maps::{IntegratorOpts, PotentialSpec, SpinOrbitParams, GOLDEN_MEAN};
use spinorbit_core::normal_form::NfOptions;
use spinorbit_core::russmann::{CAlphaConfig, CurveOptions};

use crate::SweepError;

/// Tolerance names accepted in `[tolerances]` and by `--tol`.
pub const TOLERANCE_NAMES: [&str; 5] = ["curve", "b", "gt", "fit", "capture"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + step * i as f64).collect()
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    fn validate(&self, name: &str) -> Result<(), SweepError> {
        if self.count < 2 || !(self.min < self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(SweepError::Config(format!(
                "{name}: need min < max and count >= 2, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierFlags {
    #[serde(default = "yes")]
    pub run_gt1: bool,
    #[serde(default = "yes")]
    pub run_gt2: bool,
    #[serde(default)]
    pub run_empirical_gt: bool,
}

fn yes() -> bool {
    true
}

impl Default for ClassifierFlags {
    fn default() -> Self {
        Self {
            run_gt1: true,
            run_gt2: true,
            run_empirical_gt: false,
        }
    }
}

/// Discretization knobs shared by every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Angular modes of curves and normal-form coefficients.
    pub n_modes: usize,
    /// Integrator steps per period.
    pub n_steps: usize,
    pub order: usize,
    pub radius: f64,
    pub margin: f64,
    pub safety: f64,
    /// Grid of the perturbation-bound sampling.
    pub bounds_theta: usize,
    pub bounds_rho: usize,
    /// Trace `C_α` over the η rows.
    pub trace_c_alpha: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_modes: 16,
            n_steps: 192,
            order: 3,
            radius: 1e-2,
            margin: 10.0,
            safety: 0.05,
            bounds_theta: 24,
            bounds_rho: 24,
            trace_c_alpha: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps: f64,
    #[serde(default = "golden")]
    pub alpha: f64,
    pub eta_range: Range,
    pub nu_range: Range,
    #[serde(default)]
    pub classifier: ClassifierFlags,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub numerics: Numerics,
}

fn golden() -> f64 {
    GOLDEN_MEAN
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, SweepError> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| SweepError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SweepError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// A single-point configuration with default everything.
    pub fn point(eps: f64) -> Self {
        Self {
            eps,
            alpha: GOLDEN_MEAN,
            eta_range: Range { min: 0.01, max: 0.5, count: 2 },
            nu_range: Range {
                min: GOLDEN_MEAN - 0.2,
                max: GOLDEN_MEAN + 0.2,
                count: 2,
            },
            classifier: ClassifierFlags::default(),
            tolerances: BTreeMap::new(),
            potential: PotentialSpec::default(),
            workers: 1,
            seed: 0,
            output_dir: default_out(),
            numerics: Numerics::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        self.eta_range.validate("eta_range")?;
        self.nu_range.validate("nu_range")?;
        if self.workers == 0 {
            return Err(SweepError::Config("workers must be >= 1".into()));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(SweepError::Config(format!("eps must be finite and >= 0, got {}", self.eps)));
        }
        for (name, v) in &self.tolerances {
            if !TOLERANCE_NAMES.contains(&name.as_str()) {
                return Err(SweepError::Config(format!(
                    "unknown tolerance '{name}' (known: {})",
                    TOLERANCE_NAMES.join(", ")
                )));
            }
            if !(*v > 0.0) {
                return Err(SweepError::Config(format!("tolerance {name} must be > 0")));
            }
        }
        let n = &self.numerics;
        if n.n_modes < 4 || n.n_steps < 16 || !(1..=6).contains(&n.order) || n.bounds_theta < 2 || n.bounds_rho < 2 {
            return Err(SweepError::Config(format!("numerics out of range: {n:?}")));
        }
        self.potential
            .validate()
            .map_err(|e| SweepError::Config(e.to_string()))?;
        Ok(())
    }

    /// Applies a `name=value` override.
    pub fn set_tolerance(&mut self, spec: &str) -> Result<(), SweepError> {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| SweepError::Config(format!("--tol expects name=value, got '{spec}'")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| SweepError::Config(format!("--tol {name}: '{value}' is not a number")))?;
        self.tolerances.insert(name.trim().to_string(), v);
        self.validate()
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        if let Some(v) = self.tolerances.get(name) {
            return *v;
        }
        match name {
            "curve" => 1e-10,
            "b" => 1e-10,
            "gt" => 1e-8,
            "fit" => 1e-8,
            "capture" => 1e-6,
            _ => f64::NAN,
        }
    }

    /// SHA-256 of everything that determines the raster (workers and the
    /// output directory excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 1;
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn params(&self, eta: f64, nu: f64) -> SpinOrbitParams {
        SpinOrbitParams::new(eta, nu, self.eps, self.alpha).with_potential(self.potential.clone())
    }

    pub fn integrator(&self) -> IntegratorOpts {
        IntegratorOpts {
            n_steps: self.numerics.n_steps,
        }
    }

    pub fn curve_options(&self) -> CurveOptions {
        CurveOptions {
            tol: self.tolerance("curve"),
            mode_cap: self.numerics.n_modes,
            ..CurveOptions::default()
        }
    }

    pub fn nf_options(&self) -> NfOptions {
        let n = &self.numerics;
        NfOptions {
            order: n.order,
            radius: n.radius,
            n_modes: n.n_modes,
            margin: n.margin,
            safety: n.safety,
            fit_tol: self.tolerance("fit"),
        }
    }

    pub fn gt_options(&self) -> GtOptions {
        GtOptions {
            tol: self.tolerance("gt"),
            ..GtOptions::default()
        }
    }

    pub fn basin_options(&self) -> BasinOptions {
        BasinOptions {
            capture_tol: self.tolerance("capture"),
            seed: self.seed,
            ..BasinOptions::default()
        }
    }

    pub fn c_alpha_config(&self) -> CAlphaConfig {
        CAlphaConfig {
            margin: self.numerics.margin,
            tol_b: self.tolerance("b"),
            curve: self.curve_options(),
            integrator: self.integrator(),
            potential: self.potential.clone(),
            ..CAlphaConfig::default()
        }
    }
}
