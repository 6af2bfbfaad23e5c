//! Configuration, point classification and raster sweeps for the
//! spin-orbit invariant-circle study, plus the `spinorbit` command line.

pub mod classify;
pub mod config;
pub mod sweep;

pub use classify::{classify_point, CellCode, CellRecord};
pub use config::SweepConfig;
pub use sweep::{run_sweep, RegionRaster, RunOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint was written for config {found}, current config is {expected}")]
    ResumeMismatch { expected: String, found: String },
    #[error("i/o: {0}")]
    Io(String),
    #[error("stopped after {done} cells; rerun with --resume")]
    Interrupted { done: usize },
}

impl SweepError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            SweepError::Config(_) => 2,
            SweepError::ResumeMismatch { .. } => 4,
            SweepError::Io(_) | SweepError::Interrupted { .. } => 1,
        }
    }
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/sweeps.md")]
    mod sweeps {}
}
