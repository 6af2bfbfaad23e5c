use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spinorbit_core::graph_transform::{
    attracting_map, basin_probe, domination_check, find_invariant_graph, LipschitzGraph,
};
use spinorbit_core::model_maps::{rho_coordinates, ClosedFormP, CylinderMap, IntegratedQ};
use spinorbit_core::normal_form::{gt2_region_test, normal_form_at};
use spinorbit_core::russmann::{solve_translated_curve, trace_c_alpha};
use spinorbit_sweep::sweep::{write_calpha, CAlphaRow};
use spinorbit_sweep::{run_sweep, RunOptions, SweepConfig, SweepError};

#[derive(Parser)]
#[command(name = "spinorbit", version, about = "Invariant circles of the dissipative spin-orbit map")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol", global = true)]
    tol: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Point {
    #[arg(long, allow_hyphen_values = true)]
    eta: f64,
    /// Defaults to α.
    #[arg(long, allow_hyphen_values = true)]
    nu: Option<f64>,
    /// Defaults to the config value (or 1e-3 without a config).
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Image and Jacobian of one point under P or Q.
    MapEval {
        #[command(flatten)]
        point: Point,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        /// Use the closed-form unperturbed map.
        #[arg(long)]
        closed_form: bool,
    },
    /// Graph transform at one parameter point.
    Circle {
        #[command(flatten)]
        point: Point,
    },
    /// Translated curve at one parameter point.
    Curve {
        #[command(flatten)]
        point: Point,
    },
    /// C_α trace over the configured η rows, or the given η values.
    Calpha {
        #[arg(long, allow_hyphen_values = true)]
        eta: Vec<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Normal-form report as JSON.
    Nf {
        #[command(flatten)]
        point: Point,
    },
    /// Full raster over the configured grid.
    Sweep {
        #[arg(long)]
        resume: bool,
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Basin probe around the invariant circle.
    Basin {
        #[command(flatten)]
        point: Point,
    },
}

enum Failure {
    Sweep(SweepError),
    Point(String),
    Partial,
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        Failure::Sweep(e)
    }
}

fn point_error(e: impl std::fmt::Display) -> Failure {
    Failure::Point(e.to_string())
}

fn load_config(cli: &Cli, require: bool) -> Result<SweepConfig, SweepError> {
    let mut cfg = match &cli.config {
        Some(p) => SweepConfig::load(p)?,
        None if require => return Err(SweepError::Config("this command needs --config".into())),
        None => SweepConfig::point(1e-3),
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    for t in &cli.tol {
        cfg.set_tolerance(t)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_eps(cfg: &SweepConfig, eps: Option<f64>) -> Result<SweepConfig, SweepError> {
    let mut c = cfg.clone();
    if let Some(e) = eps {
        c.eps = e;
    }
    c.validate()?;
    Ok(c)
}

fn print(v: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&v).expect("json"));
}

fn graph_at(cfg: &SweepConfig, eta: f64, nu: f64) -> Result<(Arc<dyn CylinderMap>, LipschitzGraph, serde_json::Value), Failure> {
    let p = cfg.params(eta, nu);
    let q = attracting_map(Arc::new(rho_coordinates(Arc::new(IntegratedQ::new(p, cfg.integrator())))))
        .map_err(point_error)?;
    let (g, rep) = find_invariant_graph(q.as_ref(), &LipschitzGraph::constant(cfg.numerics.n_modes, 0.0), &cfg.gt_options())
        .map_err(point_error)?;
    let dom = domination_check(q.as_ref(), &g, 1000).map_err(point_error)?;
    let v = json!({
        "iterations": rep.iterations,
        "invariance_residual": rep.invariance_residual,
        "contraction_estimate": rep.contraction_estimate,
        "normal_multiplier": rep.normal_multiplier,
        "tangential_multiplier": rep.tangential_multiplier,
        "dominated": dom.dominated(),
        "lipschitz": g.lip_k,
        "sup": g.sup(),
    });
    Ok((q, g, v))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.cmd {
        Cmd::MapEval { point, theta, r, closed_form } => {
            let cfg = with_eps(&load_config(cli, false)?, point.eps)?;
            let p = cfg.params(point.eta, point.nu.unwrap_or(cfg.alpha));
            let m: Box<dyn CylinderMap> = if *closed_form {
                Box::new(ClosedFormP::new(p))
            } else {
                Box::new(IntegratedQ::new(p, cfg.integrator()))
            };
            let (img, j) = m.eval_with_jacobian(*theta, *r).map_err(point_error)?;
            print(json!({
                "dtheta": img.dtheta,
                "r": img.r,
                "jacobian": j.m,
                "det": j.det(),
            }));
        }
        Cmd::Circle { point } => {
            let cfg = with_eps(&load_config(cli, false)?, point.eps)?;
            let (_, _, v) = graph_at(&cfg, point.eta, point.nu.unwrap_or(cfg.alpha))?;
            print(v);
        }
        Cmd::Basin { point } => {
            let cfg = with_eps(&load_config(cli, false)?, point.eps)?;
            let (q, g, _) = graph_at(&cfg, point.eta, point.nu.unwrap_or(cfg.alpha))?;
            let rep = basin_probe(q.as_ref(), &g, &cfg.basin_options());
            print(serde_json::to_value(rep).expect("json"));
        }
        Cmd::Curve { point } => {
            let cfg = with_eps(&load_config(cli, false)?, point.eps)?;
            let p = cfg.params(point.eta, point.nu.unwrap_or(cfg.alpha));
            let q: Arc<dyn CylinderMap> = Arc::new(IntegratedQ::new(p, cfg.integrator()));
            let tc = solve_translated_curve(q, cfg.alpha, &cfg.curve_options()).map_err(point_error)?;
            print(json!({
                "b": tc.b,
                "beta": tc.beta,
                "conj_residual": tc.conj_residual,
                "trans_residual": tc.trans_residual,
                "newton_iterations": tc.newton_iterations,
                "outer_iterations": tc.outer_iterations,
                "gamma_mean": tc.gamma.mean(),
                "gamma_sup": tc.gamma.max_abs_grid(),
            }));
        }
        Cmd::Calpha { eta, eps } => {
            let cfg = with_eps(&load_config(cli, false)?, *eps)?;
            let c = cfg.c_alpha_config();
            let rows: Vec<f64> = if eta.is_empty() {
                cfg.eta_range.values().into_iter().filter(|e| e.abs() > c.margin * cfg.eps).collect()
            } else {
                eta.clone()
            };
            let tr = trace_c_alpha(cfg.eps, cfg.alpha, &rows, &c);
            let out: Vec<CAlphaRow> = tr
                .points
                .iter()
                .map(|p| CAlphaRow {
                    eta: p.eta,
                    nu_star: p.nu_star,
                    b_residual: p.b_residual,
                    conj_residual: p.conj_residual,
                    iterations: p.iterations,
                })
                .collect();
            std::fs::create_dir_all(&cfg.output_dir).map_err(point_error)?;
            write_calpha(&cfg.output_dir.join("calpha.csv"), &out)?;
            print(json!({ "points": out, "gaps": tr.gaps }));
        }
        Cmd::Nf { point } => {
            let cfg = with_eps(&load_config(cli, false)?, point.eps)?;
            let nu = point.nu.unwrap_or(cfg.alpha);
            let p = cfg.params(point.eta, nu);
            let q: Arc<dyn CylinderMap> = Arc::new(IntegratedQ::new(p.clone(), cfg.integrator()));
            let tc = solve_translated_curve(q.clone(), cfg.alpha, &cfg.curve_options()).map_err(point_error)?;
            let opts = cfg.nf_options();
            let nf = normal_form_at(q, &tc, &opts).map_err(point_error)?;
            let rep = gt2_region_test(&p, &nf, &opts);
            print(json!({
                "eta": point.eta,
                "nu": nu,
                "eps": cfg.eps,
                "k": nf.order_k,
                "alpha_bar": nf.alpha_bar,
                "beta_bar": nf.beta_bar,
                "lambda": nf.lambda,
                "R0": nf.r0,
                "remainders": nf.remainder_norms,
                "angular_variance": nf.angular_variance,
                "multiplier": rep.multiplier,
                "classification": rep.class,
            }));
        }
        Cmd::Sweep { resume, stop_after } => {
            let cfg = load_config(cli, true)?;
            let opts = RunOptions {
                resume: *resume,
                stop_after: *stop_after,
            };
            let raster = run_sweep(&cfg, &opts)?;
            eprintln!(
                "{} cells in {:.1} s: {:?}",
                raster.manifest.cells, raster.manifest.wall_time_s, raster.manifest.counts
            );
            if raster.has_errors() {
                return Err(Failure::Partial);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Sweep(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Point(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Partial) => {
            eprintln!("sweep finished with ERROR cells");
            ExitCode::from(3)
        }
    }
}
