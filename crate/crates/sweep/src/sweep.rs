//! Raster sweeps over `(η, ν)`: static block partition by rows across scoped worker
//! threads, a single checkpoint writer, C_α overlay and output files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use spinorbit_core::russmann::trace_c_alpha;

use crate::classify::{classify_point, CellCode, CellRecord};
use crate::config::SweepConfig;
use crate::SweepError;

/// Cells between checkpoint writes.
pub const CHECKPOINT_BATCH: usize = 64;

pub const CHECKPOINT_FILE: &str = "checkpoint.csv";

const COLUMNS: [&str; 16] = [
    "i_eta",
    "i_nu",
    "eta",
    "nu",
    "code",
    "contraction",
    "beta1",
    "R0",
    "residual",
    "multiplier",
    "lambda",
    "gt1_k",
    "a_f",
    "a_g",
    "gt_residual",
    "note",
];

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub resume: bool,
    /// Stop once this many new cells are done (simulated interruption).
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CAlphaRow {
    pub eta: f64,
    pub nu_star: f64,
    pub b_residual: f64,
    pub conj_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub wall_time_s: f64,
    pub workers: usize,
    pub cells: usize,
    pub resumed_cells: usize,
    pub counts: BTreeMap<String, usize>,
    pub calpha_points: usize,
    pub calpha_gaps: Vec<(f64, String)>,
}

#[derive(Debug, Clone)]
pub struct RegionRaster {
    pub n_eta: usize,
    pub n_nu: usize,
    pub etas: Vec<f64>,
    pub nus: Vec<f64>,
    /// Row-major over `(η, ν)`.
    pub cells: Vec<CellRecord>,
    pub calpha: Vec<CAlphaRow>,
    pub manifest: Manifest,
}

impl RegionRaster {
    pub fn cell(&self, i_eta: usize, i_nu: usize) -> &CellRecord {
        &self.cells[i_eta * self.n_nu + i_nu]
    }

    pub fn has_errors(&self) -> bool {
        self.cells.iter().any(|c| matches!(c.code, CellCode::Error(_)))
    }

    /// Index of the grid ν nearest to `nu`.
    pub fn nearest_nu(&self, nu: f64) -> usize {
        let mut best = 0;
        for (j, v) in self.nus.iter().enumerate() {
            if (v - nu).abs() < (self.nus[best] - nu).abs() {
                best = j;
            }
        }
        best
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn io(path: &Path, e: impl std::fmt::Display) -> SweepError {
    SweepError::Io(format!("{}: {e}", path.display()))
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

fn parse_num(s: &str) -> Result<f64, String> {
    if s.is_empty() {
        Ok(f64::NAN)
    } else {
        s.parse().map_err(|_| format!("bad number '{s}'"))
    }
}

fn record_fields(c: &CellRecord) -> Vec<String> {
    vec![
        c.i_eta.to_string(),
        c.i_nu.to_string(),
        format!("{}", c.eta),
        format!("{}", c.nu),
        c.code.to_string(),
        num(c.contraction),
        num(c.beta1),
        num(c.r0),
        num(c.residual),
        num(c.multiplier),
        num(c.lambda),
        num(c.gt1_k),
        num(c.a_f),
        num(c.a_g),
        num(c.gt_residual),
        c.note.clone(),
    ]
}

fn parse_record(r: &csv::StringRecord) -> Result<CellRecord, String> {
    if r.len() != COLUMNS.len() {
        return Err(format!("expected {} fields, got {}", COLUMNS.len(), r.len()));
    }
    let f = |i: usize| parse_num(&r[i]);
    let idx = |i: usize| r[i].parse::<usize>().map_err(|_| format!("bad index '{}'", &r[i]));
    let note = r[15].to_string();
    let mut code: CellCode = r[4].parse()?;
    if let CellCode::Error(reason) = &mut code {
        *reason = note.clone();
    }
    Ok(CellRecord {
        i_eta: idx(0)?,
        i_nu: idx(1)?,
        eta: f(2)?,
        nu: f(3)?,
        code,
        contraction: f(5)?,
        beta1: f(6)?,
        r0: f(7)?,
        residual: f(8)?,
        multiplier: f(9)?,
        lambda: f(10)?,
        gt1_k: f(11)?,
        a_f: f(12)?,
        a_g: f(13)?,
        gt_residual: f(14)?,
        note,
    })
}

fn write_cells(path: &Path, header_comment: Option<&str>, cells: &[CellRecord]) -> Result<(), SweepError> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp).map_err(|e| io(&tmp, e))?;
        if let Some(h) = header_comment {
            writeln!(file, "# {h}").map_err(|e| io(&tmp, e))?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(COLUMNS).map_err(|e| io(&tmp, e))?;
        for c in cells {
            w.write_record(record_fields(c)).map_err(|e| io(&tmp, e))?;
        }
        w.flush().map_err(|e| io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

/// Reads cells written by the sweep (raster or checkpoint).
pub fn read_cells(path: &Path) -> Result<(Option<String>, Vec<CellRecord>), SweepError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    let hash = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .map(str::to_string);
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut cells = Vec::new();
    for r in rdr.records() {
        let r = r.map_err(|e| io(path, e))?;
        cells.push(parse_record(&r).map_err(|e| io(path, e))?);
    }
    Ok((hash, cells))
}

/// Classifies every cell of the configured grid and writes the outputs to
/// `cfg.output_dir`.
pub fn run_sweep(cfg: &SweepConfig, opts: &RunOptions) -> Result<RegionRaster, SweepError> {
    cfg.validate()?;
    let started = now_unix();
    let clock = Instant::now();
    let out = cfg.output_dir.clone();
    fs::create_dir_all(out.join("plotdata")).map_err(|e| io(&out, e))?;
    let hash = cfg.hash();
    let ckpt = out.join(CHECKPOINT_FILE);

    let mut done: Vec<CellRecord> = Vec::new();
    if opts.resume && ckpt.exists() {
        let (found, cells) = read_cells(&ckpt)?;
        let found = found.unwrap_or_default();
        if found != hash {
            return Err(SweepError::ResumeMismatch { expected: hash, found });
        }
        done = cells;
    }
    let resumed = done.len();
    let finished: HashSet<(usize, usize)> = done.iter().map(|c| (c.i_eta, c.i_nu)).collect();

    let etas = cfg.eta_range.values();
    let nus = cfg.nu_range.values();
    let workers = cfg.workers.min(etas.len()).max(1);
    let stop = AtomicBool::new(false);
    let header = format!("config_hash={hash}");
    let mut interrupted = false;

    let calpha = std::thread::scope(|s| -> Result<_, SweepError> {
        let trace = s.spawn(|| {
            if !cfg.numerics.trace_c_alpha {
                return None;
            }
            let c = cfg.c_alpha_config();
            let rows: Vec<f64> = etas.iter().cloned().filter(|e| e.abs() > c.margin * cfg.eps).collect();
            Some(trace_c_alpha(cfg.eps, cfg.alpha, &rows, &c))
        });

        let (tx, rx) = mpsc::channel::<CellRecord>();
        for w in 0..workers {
            let tx = tx.clone();
            let (etas, nus, finished, stop) = (&etas, &nus, &finished, &stop);
            s.spawn(move || {
                let lo = w * etas.len() / workers;
                let hi = (w + 1) * etas.len() / workers;
                for (i, &eta) in etas.iter().enumerate().take(hi).skip(lo) {
                    for (j, &nu) in nus.iter().enumerate() {
                        if finished.contains(&(i, j)) {
                            continue;
                        }
                        if stop.load(Ordering::Relaxed) {
                            return;
                        }
                        if tx.send(classify_point(cfg, i, j, eta, nu)).is_err() {
                            return;
                        }
                    }
                }
            });
        }
        drop(tx);

        let mut since = 0;
        let mut fresh = 0;
        for rec in rx {
            done.push(rec);
            since += 1;
            fresh += 1;
            if since >= CHECKPOINT_BATCH {
                write_cells(&ckpt, Some(&header), &done)?;
                since = 0;
            }
            if opts.stop_after.is_some_and(|n| fresh >= n) {
                stop.store(true, Ordering::Relaxed);
                interrupted = true;
            }
        }
        write_cells(&ckpt, Some(&header), &done)?;
        Ok(trace.join().expect("trace thread"))
    })?;
    if interrupted && done.len() < etas.len() * nus.len() {
        return Err(SweepError::Interrupted { done: done.len() });
    }

    done.sort_by_key(|c| (c.i_eta, c.i_nu));
    let mut calpha_rows = Vec::new();
    let mut gaps = Vec::new();
    if let Some(tr) = calpha {
        for p in &tr.points {
            calpha_rows.push(CAlphaRow {
                eta: p.eta,
                nu_star: p.nu_star,
                b_residual: p.b_residual,
                conj_residual: p.conj_residual,
                iterations: p.iterations,
            });
        }
        gaps = tr.gaps;
    }
    let step = cfg.nu_range.step();
    for row in &calpha_rows {
        if let Some(i) = etas.iter().position(|e| *e == row.eta) {
            for c in done[i * nus.len()..(i + 1) * nus.len()].iter_mut() {
                if c.code == CellCode::Unresolved && (c.nu - row.nu_star).abs() <= step {
                    c.code = CellCode::CAlphaNear;
                }
            }
        }
    }

    let mut counts = BTreeMap::new();
    for c in &done {
        *counts.entry(c.code.to_string()).or_insert(0) += 1;
    }
    let manifest = Manifest {
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: now_unix(),
        wall_time_s: clock.elapsed().as_secs_f64(),
        workers,
        cells: done.len(),
        resumed_cells: resumed,
        counts,
        calpha_points: calpha_rows.len(),
        calpha_gaps: gaps,
    };
    let raster = RegionRaster {
        n_eta: etas.len(),
        n_nu: nus.len(),
        etas,
        nus,
        cells: done,
        calpha: calpha_rows,
        manifest,
    };
    write_outputs(&out, &raster)?;
    Ok(raster)
}

/// `raster.csv`, `calpha.csv`, `manifest.json` and `plotdata/`.
pub fn write_outputs(out: &Path, r: &RegionRaster) -> Result<(), SweepError> {
    write_cells(&out.join("raster.csv"), None, &r.cells)?;
    write_calpha(&out.join("calpha.csv"), &r.calpha)?;
    write_calpha(&out.join("plotdata").join("calpha.csv"), &r.calpha)?;

    let codes = out.join("plotdata").join("codes.csv");
    let mut w = csv::Writer::from_path(&codes).map_err(|e| io(&codes, e))?;
    let mut head = vec!["eta".to_string()];
    head.extend(r.nus.iter().map(|v| format!("{v}")));
    w.write_record(&head).map_err(|e| io(&codes, e))?;
    for (i, eta) in r.etas.iter().enumerate() {
        let mut row = vec![format!("{eta}")];
        row.extend((0..r.n_nu).map(|j| r.cell(i, j).code.index().to_string()));
        w.write_record(&row).map_err(|e| io(&codes, e))?;
    }
    w.flush().map_err(|e| io(&codes, e))?;

    let bnd = out.join("plotdata").join("gt1_boundary.csv");
    let mut w = csv::Writer::from_path(&bnd).map_err(|e| io(&bnd, e))?;
    w.write_record(["nu", "eta_min_gt1"]).map_err(|e| io(&bnd, e))?;
    for (j, nu) in r.nus.iter().enumerate() {
        let lowest = (0..r.n_eta).find(|&i| r.cell(i, j).code.is_gt1()).map(|i| r.etas[i]);
        w.write_record([format!("{nu}"), lowest.map(|e| format!("{e}")).unwrap_or_default()])
            .map_err(|e| io(&bnd, e))?;
    }
    w.flush().map_err(|e| io(&bnd, e))?;

    let mpath = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&r.manifest).map_err(|e| io(&mpath, e))?;
    fs::write(&mpath, text).map_err(|e| io(&mpath, e))
}

pub fn write_calpha(path: &Path, rows: &[CAlphaRow]) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    w.write_record(["eta", "nu_star", "b_residual", "conj_residual", "iterations"])
        .map_err(|e| io(path, e))?;
    for c in rows {
        w.write_record([
            format!("{}", c.eta),
            format!("{}", c.nu_star),
            num(c.b_residual),
            num(c.conj_residual),
            c.iterations.to_string(),
        ])
        .map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

/// Path of the raster written by [`run_sweep`].
pub fn raster_path(cfg: &SweepConfig) -> PathBuf {
    cfg.output_dir.join("raster.csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip_exactly() {
        let c = CellRecord {
            i_eta: 3,
            i_nu: 7,
            eta: 0.1 + 0.2,
            nu: 0.618_033_988_749_894_9,
            code: CellCode::Error("curve: no, it \"failed\", twice".into()),
            contraction: 1.0 / 3.0,
            gt1_k: f64::NAN,
            a_f: 91.2,
            a_g: 1e-300,
            beta1: -0.0,
            r0: 5e-324,
            lambda: f64::NAN,
            multiplier: 0.73,
            residual: 1e-14,
            gt_residual: f64::NAN,
            note: "curve: no, it \"failed\", twice".into(),
        };
        let dir = std::env::temp_dir().join(format!("spinorbit-rt-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cells.csv");
        write_cells(&path, Some("config_hash=abc"), std::slice::from_ref(&c)).unwrap();
        let (hash, back) = read_cells(&path).unwrap();
        assert_eq!(hash.as_deref(), Some("abc"));
        let b = &back[0];
        assert_eq!(record_fields(b), record_fields(&c));
        assert_eq!(b.code, c.code);
        assert_eq!(b.eta.to_bits(), c.eta.to_bits());
        assert_eq!(b.r0.to_bits(), c.r0.to_bits());
        fs::remove_dir_all(&dir).unwrap();
    }
}
