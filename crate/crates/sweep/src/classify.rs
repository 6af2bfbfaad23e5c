//! Per-point classification: GT1 feasibility, the GT2 pipeline, and the
//! merge into one cell code.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use spinorbit_core::graph_transform::{gt1_feasibility, perturbation_bounds, Gt1Outcome};
use spinorbit_core::model_maps::{CylinderMap, IntegratedQ};
use spinorbit_core::normal_form::{gt2_prechecks, gt2_region_test, normal_form_at, recentered_invariant_graph, Gt2Class};
use spinorbit_core::russmann::solve_translated_curve;

use crate::config::SweepConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellCode {
    Gt1,
    Gt2,
    Both,
    CAlphaNear,
    Unresolved,
    Error(String),
}

impl CellCode {
    pub fn is_gt2(&self) -> bool {
        matches!(self, CellCode::Gt2 | CellCode::Both)
    }

    pub fn is_gt1(&self) -> bool {
        matches!(self, CellCode::Gt1 | CellCode::Both)
    }

    pub fn is_certified(&self) -> bool {
        self.is_gt1() || self.is_gt2()
    }

    /// Small integer for plot matrices.
    pub fn index(&self) -> u8 {
        match self {
            CellCode::Unresolved => 0,
            CellCode::Gt1 => 1,
            CellCode::Gt2 => 2,
            CellCode::Both => 3,
            CellCode::CAlphaNear => 4,
            CellCode::Error(_) => 9,
        }
    }
}

impl fmt::Display for CellCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellCode::Gt1 => f.write_str("GT1"),
            CellCode::Gt2 => f.write_str("GT2"),
            CellCode::Both => f.write_str("BOTH"),
            CellCode::CAlphaNear => f.write_str("C_ALPHA_NEAR"),
            CellCode::Unresolved => f.write_str("UNRESOLVED"),
            CellCode::Error(_) => f.write_str("ERROR"),
        }
    }
}

impl FromStr for CellCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "GT1" => CellCode::Gt1,
            "GT2" => CellCode::Gt2,
            "BOTH" => CellCode::Both,
            "C_ALPHA_NEAR" => CellCode::CAlphaNear,
            "UNRESOLVED" => CellCode::Unresolved,
            "ERROR" => CellCode::Error(String::new()),
            _ => return Err(format!("unknown cell code '{s}'")),
        })
    }
}

/// One classified parameter point with every metric that was computed.
/// Missing metrics are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub i_eta: usize,
    pub i_nu: usize,
    pub eta: f64,
    pub nu: f64,
    pub code: CellCode,
    /// GT1 contraction constant.
    pub contraction: f64,
    pub gt1_k: f64,
    pub a_f: f64,
    pub a_g: f64,
    pub beta1: f64,
    pub r0: f64,
    pub lambda: f64,
    /// GT2 effective multiplier plus derivative remainder.
    pub multiplier: f64,
    /// Largest translated-curve residual.
    pub residual: f64,
    /// Invariance residual of the empirical graph transform.
    pub gt_residual: f64,
    pub note: String,
}

impl CellRecord {
    fn empty(i_eta: usize, i_nu: usize, eta: f64, nu: f64) -> Self {
        Self {
            i_eta,
            i_nu,
            eta,
            nu,
            code: CellCode::Unresolved,
            contraction: f64::NAN,
            gt1_k: f64::NAN,
            a_f: f64::NAN,
            a_g: f64::NAN,
            beta1: f64::NAN,
            r0: f64::NAN,
            lambda: f64::NAN,
            multiplier: f64::NAN,
            residual: f64::NAN,
            gt_residual: f64::NAN,
            note: String::new(),
        }
    }
}

fn add_note(note: &mut String, s: &str) {
    if !note.is_empty() {
        note.push_str("; ");
    }
    note.push_str(s);
}

/// Classifies `(η, ν)` under `cfg`. Never fails: problems become ERROR
/// cells or notes.
pub fn classify_point(cfg: &SweepConfig, i_eta: usize, i_nu: usize, eta: f64, nu: f64) -> CellRecord {
    let mut rec = CellRecord::empty(i_eta, i_nu, eta, nu);
    let p = cfg.params(eta, nu);
    let flags = cfg.classifier;

    let mut gt1 = false;
    let mut gt1_error: Option<String> = None;
    if flags.run_gt1 {
        let n = &cfg.numerics;
        match perturbation_bounds(&p, &cfg.integrator(), n.bounds_theta, n.bounds_rho) {
            Ok(b) => {
                rec.a_f = b.a_f;
                rec.a_g = b.a_g;
                if let Gt1Outcome::Feasible { k, contraction } = gt1_feasibility(eta, cfg.eps, b.a_f, b.a_g) {
                    gt1 = true;
                    rec.gt1_k = k;
                    rec.contraction = contraction;
                }
            }
            Err(e) => gt1_error = Some(format!("gt1 bounds: {e}")),
        }
    }

    let mut gt2 = false;
    let mut gt2_error: Option<String> = None;
    if flags.run_gt2 {
        let (detuning_ok, dissipation_ok) = gt2_prechecks(&p, cfg.numerics.margin);
        if detuning_ok && dissipation_ok {
            match gt2_pipeline(cfg, &mut rec) {
                Ok(class) => match class {
                    Gt2Class::Inside => gt2 = true,
                    Gt2Class::Marginal => add_note(&mut rec.note, "gt2 marginal"),
                    Gt2Class::Outside => {}
                },
                Err(e) => gt2_error = Some(e),
            }
        }
    }

    rec.code = match (gt1, gt2) {
        (true, true) => CellCode::Both,
        (true, false) => CellCode::Gt1,
        (false, true) => CellCode::Gt2,
        (false, false) => CellCode::Unresolved,
    };
    if let Some(e) = gt2_error {
        if gt1 {
            add_note(&mut rec.note, &e);
        } else {
            rec.code = CellCode::Error(e.clone());
            add_note(&mut rec.note, &e);
        }
    }
    if let Some(e) = gt1_error {
        if !rec.code.is_certified() {
            rec.code = CellCode::Error(e.clone());
        }
        add_note(&mut rec.note, &e);
    }
    rec
}

fn gt2_pipeline(cfg: &SweepConfig, rec: &mut CellRecord) -> Result<Gt2Class, String> {
    let p = cfg.params(rec.eta, rec.nu);
    let q: Arc<dyn CylinderMap> = Arc::new(IntegratedQ::new(p.clone(), cfg.integrator()));
    let tc = solve_translated_curve(q.clone(), cfg.alpha, &cfg.curve_options()).map_err(|e| format!("curve: {e}"))?;
    rec.residual = tc.conj_residual.max(tc.trans_residual);
    let nf_opts = cfg.nf_options();
    let nf = normal_form_at(q, &tc, &nf_opts).map_err(|e| format!("normal form: {e}"))?;
    rec.beta1 = nf.beta_bar[0];
    rec.r0 = nf.r0;
    rec.lambda = nf.lambda;
    let report = gt2_region_test(&p, &nf, &nf_opts);
    rec.multiplier = report.multiplier;
    if cfg.classifier.run_empirical_gt && report.class == Gt2Class::Inside {
        match recentered_invariant_graph(&nf, &cfg.gt_options()) {
            Ok((_, r)) => {
                rec.gt_residual = r.invariance_residual;
                if !r.converged(cfg.tolerance("gt")) {
                    return Ok(Gt2Class::Marginal);
                }
            }
            Err(e) => {
                add_note(&mut rec.note, &format!("empirical gt: {e}"));
                return Ok(Gt2Class::Marginal);
            }
        }
    }
    Ok(report.class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use spinorbit_core::model_maps::GOLDEN_MEAN;

    #[test]
    fn codes_round_trip_through_text() {
        for c in [CellCode::Gt1, CellCode::Gt2, CellCode::Both, CellCode::CAlphaNear, CellCode::Unresolved] {
            assert_eq!(c.to_string().parse::<CellCode>().unwrap(), c);
        }
    }

    #[test]
    fn tiny_dissipation_is_unresolved() {
        let cfg = SweepConfig::point(1e-3);
        let r = classify_point(&cfg, 0, 0, 1e-4, GOLDEN_MEAN);
        assert_eq!(r.code, CellCode::Unresolved);
    }

    #[test]
    fn unperturbed_is_gt1() {
        let mut cfg = SweepConfig::point(0.0);
        cfg.classifier.run_gt2 = false;
        let r = classify_point(&cfg, 0, 0, 0.05, GOLDEN_MEAN + 0.1);
        assert_eq!(r.code, CellCode::Gt1);
    }
}
