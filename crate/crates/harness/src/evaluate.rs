//! Split evaluation: predictions, classification metrics, per-fire
//! time-to-detection, parameter count, and inference latency.

use smokeynet_autograd::nn::Ctx;
use smokeynet_autograd::no_grad;
use smokeynet_core::model::{InputBatch, SmokeyNet};
use smokeynet_core::objective::{
    classification_metrics, measure_latency, time_to_detection, ClassificationMetrics, FireEval,
    MetricsReport, TtdReport,
};

use crate::data::{load_example, stack_batch, FrameCache, PipelineConfig, PreparedExample};
use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct PredictionRow {
    pub fire_id: String,
    pub offset_seconds: i32,
    pub label: bool,
    pub prediction: bool,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub metrics: ClassificationMetrics,
    pub ttd: TtdReport,
    pub fire_evals: Vec<FireEval>,
    pub rows: Vec<PredictionRow>,
}

/// Evaluate a model over prepared examples (evaluation mode, augmentation
/// disabled).
pub fn evaluate_split(
    model: &SmokeyNet<f32>,
    examples: &[PreparedExample],
    pipe: &PipelineConfig,
    cache: &mut FrameCache,
    micro_batch: usize,
) -> Result<EvalOutcome, HarnessError> {
    let pipe = PipelineConfig {
        background: model.config.extra_channel == smokeynet_core::model::ExtraChannel::Background,
        ..pipe.clone()
    };
    let grid = pipe.grid()?;
    let mut rows: Vec<PredictionRow> = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(micro_batch.max(1)) {
        let loaded: Vec<_> = chunk
            .iter()
            .map(|ex| load_example(ex, &pipe, &grid, cache, None))
            .collect::<Result<_, _>>()?;
        let (frames, background) = stack_batch(&loaded);
        let batch = match background {
            Some(bg) => InputBatch::with_background(frames, bg),
            None => InputBatch::new(frames),
        };
        let outputs = no_grad(|| model.forward(&batch, &mut Ctx::eval()))?;
        for (ex, pred) in chunk.iter().zip(outputs.image_predictions()) {
            rows.push(PredictionRow {
                fire_id: ex.fire_id.clone(),
                offset_seconds: ex.offset_seconds,
                label: ex.image_label,
                prediction: pred,
            });
        }
    }

    let predictions: Vec<bool> = rows.iter().map(|r| r.prediction).collect();
    let labels: Vec<bool> = rows.iter().map(|r| r.label).collect();
    let metrics = classification_metrics(&predictions, &labels);

    let mut fire_evals: Vec<FireEval> = Vec::new();
    for row in &rows {
        match fire_evals.last_mut() {
            Some(f) if f.fire_id == row.fire_id => {
                f.frames
                    .push((row.offset_seconds, row.label, row.prediction));
            }
            _ => fire_evals.push(FireEval {
                fire_id: row.fire_id.clone(),
                frames: vec![(row.offset_seconds, row.label, row.prediction)],
            }),
        }
    }
    for fire in fire_evals.iter_mut() {
        fire.frames.sort_by_key(|f| f.0);
    }
    let ttd = time_to_detection(&fire_evals);

    Ok(EvalOutcome {
        metrics,
        ttd,
        fire_evals,
        rows,
    })
}

/// Wall-clock ms per image at batch size 1.
pub fn model_latency(
    model: &SmokeyNet<f32>,
    example: &PreparedExample,
    pipe: &PipelineConfig,
    cache: &mut FrameCache,
    warmup: usize,
    trials: usize,
) -> Result<f64, HarnessError> {
    let pipe = PipelineConfig {
        background: model.config.extra_channel == smokeynet_core::model::ExtraChannel::Background,
        ..pipe.clone()
    };
    let grid = pipe.grid()?;
    let loaded = load_example(example, &pipe, &grid, cache, None)?;
    let (frames, background) = stack_batch(std::slice::from_ref(&loaded));
    let batch = match background {
        Some(bg) => InputBatch::with_background(frames, bg),
        None => InputBatch::new(frames),
    };
    Ok(measure_latency(
        || {
            no_grad(|| model.forward(&batch, &mut Ctx::eval())).expect("latency forward");
        },
        warmup,
        trials,
    )?)
}

/// Assemble the full per-variant report.
pub fn full_report(
    model: &SmokeyNet<f32>,
    outcome: &EvalOutcome,
    latency_ms: f64,
) -> MetricsReport {
    MetricsReport {
        metrics: outcome.metrics,
        ttd: Some(outcome.ttd.clone()),
        params_millions: model.params_millions(),
        latency_ms_per_image: latency_ms,
    }
}
