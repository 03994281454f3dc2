//! The training engine: accumulated-gradient SGD on the weighted objective,
//! per-epoch validation and checkpointing, argmin checkpoint selection.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use smokeynet_autograd::nn::{init::seed_stream, Ctx};
use smokeynet_autograd::optim::Sgd;
use smokeynet_autograd::no_grad;
use smokeynet_core::checkpoint::save_checkpoint;
use smokeynet_core::figlib::SupervisionSource;
use smokeynet_core::model::{InputBatch, ModelGeometry, SmokeyNet, VariantConfig};
use smokeynet_core::objective::{total_loss, validation_error_rate, LossWeights};

use crate::data::{load_example, stack_batch, FrameCache, PipelineConfig, PreparedExample,
    PreparedSplits};
use crate::HarnessError;

/// Hyperparameter grids swept sequentially when tuning.
pub const LR_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const WD_GRID: [f64; 2] = [1e-4, 1e-3];
pub const RESIZE_PERCENT_GRID: [u32; 4] = [100, 90, 80, 50];
pub const TILE_THRESHOLD_GRID: [u32; 4] = [0, 10, 100, 250];
pub const DROPOUT_GRID: [f64; 2] = [0.0, 0.1];
pub const IMAGE_POS_WEIGHT_GRID: [f64; 4] = [1.0, 2.0, 5.0, 10.0];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub micro_batch: usize,
    /// Reached through gradient accumulation over micro-batches.
    pub effective_batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub tile_positive_weight: f64,
    pub image_positive_weight: f64,
    /// Stop once train accuracy and validation error have both met their
    /// targets (used by the desk-scale sanity run); None trains all epochs.
    pub early_stop_train_acc: Option<f64>,
    pub early_stop_val_err: Option<f64>,
    /// Global-norm gradient clipping; None disables.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            weight_decay: 0.001,
            dropout: 0.0,
            micro_batch: 2,
            effective_batch: 32,
            epochs: 25,
            seed: 7,
            tile_positive_weight: 40.0,
            image_positive_weight: 5.0,
            early_stop_train_acc: None,
            early_stop_val_err: None,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    /// Desk-scale preset for the synthetic corpus: listed sweep values
    /// (lr 1e-2, image positive weight 1) and per-micro-batch steps so a
    /// tiny separable set fits within the epoch budget.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            learning_rate: 0.01,
            micro_batch: 2,
            effective_batch: 2,
            image_positive_weight: 1.0,
            seed,
            early_stop_train_acc: Some(0.97),
            early_stop_val_err: Some(0.10),
            grad_clip: Some(5.0),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.micro_batch == 0 || self.effective_batch % self.micro_batch != 0 {
            return Err(HarnessError::Config(format!(
                "effective_batch {} must be a positive multiple of micro_batch {}",
                self.effective_batch, self.micro_batch
            )));
        }
        if self.epochs == 0 {
            return Err(HarnessError::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            tile_positive_weight: self.tile_positive_weight,
            image_positive_weight: self.image_positive_weight,
        }
    }

    /// Optimizer steps one epoch takes: micro-batches grouped k at a time.
    pub fn steps_per_epoch(&self, num_examples: usize) -> usize {
        let micro_batches = num_examples.div_ceil(self.micro_batch);
        let k = self.effective_batch / self.micro_batch;
        micro_batches.div_ceil(k)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_error_rate: f64,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: VariantConfig,
    pub train: TrainConfig,
    pub epochs: Vec<EpochStats>,
    pub selected_epoch: usize,
}

impl RunRecord {
    /// Argmin of the validation curve with the earliest-epoch tie rule.
    pub fn select_checkpoint(epochs: &[EpochStats]) -> usize {
        let mut best = 0usize;
        for (i, e) in epochs.iter().enumerate() {
            if e.val_error_rate < epochs[best].val_error_rate {
                best = i;
            }
        }
        epochs[best].epoch
    }

    pub fn selected_stats(&self) -> &EpochStats {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.selected_epoch)
            .expect("selected epoch recorded")
    }
}

pub struct TrainedRun {
    pub record: RunRecord,
    /// Model restored to the selected checkpoint.
    pub model: SmokeyNet<f32>,
}

fn forward_predictions(
    model: &SmokeyNet<f32>,
    examples: &[PreparedExample],
    pipe: &PipelineConfig,
    grid: &smokeynet_core::preprocess::TileGrid,
    cache: &mut FrameCache,
    micro_batch: usize,
) -> Result<Vec<bool>, HarnessError> {
    let mut preds = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(micro_batch.max(1)) {
        let loaded: Vec<_> = chunk
            .iter()
            .map(|ex| load_example(ex, pipe, grid, cache, None))
            .collect::<Result<_, _>>()?;
        let (frames, background) = stack_batch(&loaded);
        let batch = match background {
            Some(bg) => InputBatch::with_background(frames, bg),
            None => InputBatch::new(frames),
        };
        let outputs = no_grad(|| model.forward(&batch, &mut Ctx::eval()))?;
        preds.extend(outputs.image_predictions());
    }
    Ok(preds)
}

/// Accuracy of a model over a split, evaluation mode, no augmentation.
pub fn split_accuracy(
    model: &SmokeyNet<f32>,
    examples: &[PreparedExample],
    pipe: &PipelineConfig,
    cache: &mut FrameCache,
    micro_batch: usize,
) -> Result<f64, HarnessError> {
    let grid = pipe.grid()?;
    let preds = forward_predictions(model, examples, pipe, &grid, cache, micro_batch)?;
    let labels: Vec<bool> = examples.iter().map(|e| e.image_label).collect();
    Ok(1.0 - validation_error_rate(&preds, &labels)?)
}

/// Run accumulated-gradient SGD on the total loss, evaluating and
/// checkpointing every epoch; returns the run record plus the model
/// restored to the selected (minimum validation error, earliest tie)
/// checkpoint.
pub fn train(
    variant: &VariantConfig,
    cfg: &TrainConfig,
    splits: &PreparedSplits,
    pipe: &PipelineConfig,
    out_dir: &Path,
) -> Result<TrainedRun, HarnessError> {
    cfg.validate()?;
    let mut variant = variant.clone();
    variant.dropout = cfg.dropout;
    variant.validate().map_err(smokeynet_core::model::ModelError::from)?;
    if splits.train.is_empty() {
        return Err(HarnessError::Config("training split is empty".into()));
    }
    if !splits
        .train
        .iter()
        .any(|e| e.supervision != SupervisionSource::Excluded)
    {
        return Err(HarnessError::Config(
            "training split has no tile supervision (every example is excluded)".into(),
        ));
    }
    let pipe = PipelineConfig {
        background: variant.extra_channel == smokeynet_core::model::ExtraChannel::Background,
        ..pipe.clone()
    };
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let grid = pipe.grid()?;
    let geometry = ModelGeometry::from_grid(&grid, 3);
    let model = SmokeyNet::<f32>::build(variant.clone(), geometry, cfg.seed)?;
    let optimizer = Sgd::new(
        model.parameters(),
        cfg.learning_rate as f32,
        cfg.weight_decay as f32,
    )
    .with_clip(cfg.grad_clip.map(|c| c as f32));
    let weights = cfg.weights();
    let group = cfg.effective_batch / cfg.micro_batch;
    let mut cache = FrameCache::new();
    let mut epochs: Vec<EpochStats> = Vec::new();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..splits.train.len()).collect();
        let mut shuffle_rng = seed_stream(cfg.seed, &format!("data-order-{epoch}"));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0f64;
        let mut micro_count = 0usize;
        let micro_batches: Vec<&[usize]> = order.chunks(cfg.micro_batch).collect();
        for (step, step_group) in micro_batches.chunks(group).enumerate() {
            let scale = 1.0 / step_group.len() as f32;
            for (mi, micro) in step_group.iter().enumerate() {
                let loaded: Vec<_> = micro
                    .iter()
                    .map(|&i| {
                        let ex = &splits.train[i];
                        let aug =
                            seed_stream(cfg.seed, &format!("augment-{epoch}-{i}")).next_u64();
                        load_example(ex, &pipe, &grid, &mut cache, Some(aug))
                    })
                    .collect::<Result<_, _>>()?;
                let (frames, background) = stack_batch(&loaded);
                let batch = match background {
                    Some(bg) => InputBatch::with_background(frames, bg),
                    None => InputBatch::new(frames),
                };
                let mut ctx = Ctx::train(seed_stream(
                    cfg.seed,
                    &format!("dropout-{epoch}-{step}-{mi}"),
                ));
                let outputs = model.forward(&batch, &mut ctx)?;
                let tile_label_refs: Vec<_> = loaded
                    .iter()
                    .map(|l| l.tile_labels.as_ref())
                    .collect();
                let image_labels: Vec<bool> = loaded.iter().map(|l| l.image_label).collect();
                let supervision: Vec<_> = loaded.iter().map(|l| l.supervision).collect();
                let (loss, breakdown) = total_loss(
                    &outputs,
                    &tile_label_refs,
                    &image_labels,
                    &weights,
                    &supervision,
                )?;
                if !breakdown.total.is_finite() {
                    return Err(HarnessError::Diverged {
                        epoch,
                        batch: micro_count,
                        loss: f64::from(breakdown.total),
                    });
                }
                epoch_loss += f64::from(breakdown.total);
                micro_count += 1;
                smokeynet_autograd::ops::mul_scalar(&loss, scale).backward();
            }
            optimizer.step();
        }

        let eval_batch = pipe.eval_batch(cfg.micro_batch);
        let train_accuracy =
            split_accuracy(&model, &splits.train, &pipe, &mut cache, eval_batch)?;
        let val_error_rate = if splits.val.is_empty() {
            1.0 - train_accuracy
        } else {
            let preds = forward_predictions(
                &model,
                &splits.val,
                &pipe,
                &grid,
                &mut cache,
                eval_batch,
            )?;
            let labels: Vec<bool> = splits.val.iter().map(|e| e.image_label).collect();
            validation_error_rate(&preds, &labels)?
        };
        let checkpoint = out_dir.join(format!("epoch_{epoch:03}.ckpt"));
        save_checkpoint(&checkpoint, &model, epoch, val_error_rate)?;
        epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss / micro_count.max(1) as f64,
            train_accuracy,
            val_error_rate,
            checkpoint,
        });

        let acc_ok = cfg
            .early_stop_train_acc
            .is_some_and(|t| train_accuracy >= t);
        let val_ok = cfg.early_stop_val_err.is_some_and(|t| val_error_rate <= t);
        if acc_ok && val_ok {
            break;
        }
    }

    let selected_epoch = RunRecord::select_checkpoint(&epochs);
    let record = RunRecord {
        variant: variant.clone(),
        train: cfg.clone(),
        epochs,
        selected_epoch,
    };
    let run_json = out_dir.join("run.json");
    fs::write(
        &run_json,
        serde_json::to_string_pretty(&record).expect("record serializes"),
    )
    .map_err(|source| HarnessError::Io {
        path: run_json,
        source,
    })?;

    let selected = record.selected_stats().checkpoint.clone();
    let (_, model) = smokeynet_core::checkpoint::load_model::<f32>(&selected)?;
    Ok(TrainedRun { record, model })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_per_epoch_accumulation_arithmetic() {
        let cfg = TrainConfig {
            micro_batch: 2,
            effective_batch: 32,
            ..TrainConfig::default()
        };
        // ceil(num_micro_batches / 16)
        assert_eq!(cfg.steps_per_epoch(64), 2);
        assert_eq!(cfg.steps_per_epoch(65), 3);
        assert_eq!(cfg.steps_per_epoch(31), 1);
    }

    #[test]
    fn invalid_accumulation_rejected() {
        let cfg = TrainConfig {
            micro_batch: 3,
            effective_batch: 32,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn checkpoint_selection_is_earliest_argmin() {
        let mk = |epoch, val| EpochStats {
            epoch,
            train_loss: 0.0,
            train_accuracy: 0.0,
            val_error_rate: val,
            checkpoint: PathBuf::new(),
        };
        let epochs = vec![mk(0, 0.5), mk(1, 0.2), mk(2, 0.3), mk(3, 0.2)];
        assert_eq!(RunRecord::select_checkpoint(&epochs), 1);
    }
}
