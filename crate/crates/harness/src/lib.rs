//! Experiment harness: synthetic corpus generation, dataset preparation,
//! the training loop with gradient accumulation and checkpoint selection,
//! suite runs, and report/plot emission.

pub mod config;
pub mod data;
pub mod evaluate;
pub mod firegrid;
pub mod suite;
pub mod synth;
pub mod trainer;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Figlib(#[from] smokeynet_core::figlib::FiglibError),
    #[error(transparent)]
    Preprocess(#[from] smokeynet_core::preprocess::PreprocessError),
    #[error(transparent)]
    Model(#[from] smokeynet_core::model::ModelError),
    #[error(transparent)]
    Objective(#[from] smokeynet_core::objective::ObjectiveError),
    #[error(transparent)]
    Checkpoint(#[from] smokeynet_core::checkpoint::CheckpointError),
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}, micro-batch {batch}: loss = {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error("{0}")]
    Other(String),
}

/// The single documented environment knob: compute device selection. Only
/// the CPU backend exists, so anything but "cpu" (or unset) is refused.
pub const DEVICE_ENV_VAR: &str = "SMOKEYNET_DEVICE";

pub fn check_device() -> Result<(), HarnessError> {
    match std::env::var(DEVICE_ENV_VAR) {
        Err(_) => Ok(()),
        Ok(v) if v.eq_ignore_ascii_case("cpu") => Ok(()),
        Ok(v) => Err(HarnessError::Config(format!(
            "{DEVICE_ENV_VAR}={v} is not supported; this build runs on cpu only"
        ))),
    }
}
