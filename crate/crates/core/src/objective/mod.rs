//! The weighted binary cross-entropy objective with intermediate tile
//! supervision, the validation selection metric, and evaluation metrics
//! including time-to-detection and latency.

mod loss;
mod metrics;
mod ttd;

pub use loss::{
    total_loss, weighted_bce, weighted_bce_tensor, LossBreakdown, LossWeights, BCE_EPS,
};
pub use metrics::{
    classification_metrics, render_metrics_table, validation_error_rate, ClassificationMetrics,
    ConfusionCounts, MetricsReport,
};
pub use ttd::{render_ttd_detail, time_to_detection, FireEval, FireTtd, TtdReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("undefined on empty input: {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("example {0} is not excluded but has no tile labels")]
    MissingTileLabels(usize),
    #[error("tile label count {got} does not match model tile count {want}")]
    TileCountMismatch { got: usize, want: usize },
    #[error("latency measurement needs at least one trial")]
    NoTrials,
}

/// Wall-clock latency of `run`, averaged over `trials` calls after
/// discarding `warmup` calls; reported in milliseconds per call.
pub fn measure_latency<F: FnMut()>(
    mut run: F,
    warmup: usize,
    trials: usize,
) -> Result<f64, ObjectiveError> {
    if trials == 0 {
        return Err(ObjectiveError::NoTrials);
    }
    for _ in 0..warmup {
        run();
    }
    let start = std::time::Instant::now();
    for _ in 0..trials {
        run();
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / trials as f64)
}
