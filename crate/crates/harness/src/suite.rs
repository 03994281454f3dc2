//! Ablation suite runs: train (or reuse) each variant, evaluate on the test
//! split, and emit the comparison table plus per-fire detail.

use std::fs;
use std::path::Path;

use smokeynet_core::model::VariantConfig;
use smokeynet_core::objective::{render_metrics_table, render_ttd_detail, MetricsReport};

use crate::data::{FrameCache, PipelineConfig, PreparedSplits};
use crate::evaluate::{evaluate_split, full_report, model_latency};
use crate::trainer::{train, TrainConfig};
use crate::HarnessError;

pub struct SuiteRow {
    pub name: String,
    pub seed: u64,
    pub outcome: Result<MetricsReport, String>,
}

pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
    pub table: String,
}

/// Train and evaluate each variant in order. Failures are isolated: the
/// suite continues and the failure is recorded in place of metrics.
/// Duplicate variant entries run independently with distinct derived seeds.
pub fn run_suite(
    variants: &[VariantConfig],
    cfg: &TrainConfig,
    splits: &PreparedSplits,
    pipe: &PipelineConfig,
    out_dir: &Path,
) -> Result<SuiteReport, HarnessError> {
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut rows: Vec<SuiteRow> = Vec::new();
    for (i, variant) in variants.iter().enumerate() {
        let run_cfg = TrainConfig {
            seed: cfg.seed + i as u64,
            ..cfg.clone()
        };
        let run_dir = out_dir.join(format!("run_{i:02}"));
        let outcome = run_variant(variant, &run_cfg, splits, pipe, &run_dir);
        rows.push(SuiteRow {
            name: variant.name(),
            seed: run_cfg.seed,
            outcome: outcome.map_err(|e| e.to_string()),
        });
    }

    let table_rows: Vec<(String, MetricsReport)> = rows
        .iter()
        .filter_map(|r| {
            r.outcome
                .as_ref()
                .ok()
                .map(|m| (r.name.clone(), m.clone()))
        })
        .collect();
    let mut table = render_metrics_table(&table_rows);
    for row in rows.iter().filter(|r| r.outcome.is_err()) {
        table.push_str(&format!(
            "{}\tFAILED: {}\n",
            row.name,
            row.outcome.as_ref().unwrap_err()
        ));
    }
    let table_path = out_dir.join("comparison.tsv");
    fs::write(&table_path, &table).map_err(|source| HarnessError::Io {
        path: table_path,
        source,
    })?;
    Ok(SuiteReport { rows, table })
}

fn run_variant(
    variant: &VariantConfig,
    cfg: &TrainConfig,
    splits: &PreparedSplits,
    pipe: &PipelineConfig,
    run_dir: &Path,
) -> Result<MetricsReport, HarnessError> {
    let trained = train(variant, cfg, splits, pipe, run_dir)?;
    let mut cache = FrameCache::new();
    let eval_set = if splits.test.is_empty() {
        &splits.val
    } else {
        &splits.test
    };
    let outcome =
        evaluate_split(&trained.model, eval_set, pipe, &mut cache, pipe.eval_batch(cfg.micro_batch))?;
    let latency = match eval_set.first() {
        Some(example) => model_latency(&trained.model, example, pipe, &mut cache, 1, 3)?,
        None => 0.0,
    };
    let report = full_report(&trained.model, &outcome, latency);
    let detail = render_ttd_detail(&outcome.ttd);
    let detail_path = run_dir.join("ttd_detail.tsv");
    fs::write(&detail_path, detail).map_err(|source| HarnessError::Io {
        path: detail_path,
        source,
    })?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_variant_list_emits_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let splits = PreparedSplits::default();
        let report = run_suite(
            &[],
            &TrainConfig::default(),
            &splits,
            &PipelineConfig::desk(),
            dir.path(),
        )
        .unwrap();
        assert!(report.rows.is_empty());
        let mut lines = report.table.lines();
        assert!(lines.next().unwrap().starts_with("Model\t"));
        assert!(lines.next().is_none());
    }

    #[test]
    fn failures_are_isolated_and_recorded() {
        let dir = tempfile::tempdir().unwrap();
        // empty training split fails fast for every variant
        let splits = PreparedSplits::default();
        let variants = vec![
            smokeynet_core::model::VariantConfig::cnn_only(),
            smokeynet_core::model::VariantConfig::cnn_only(),
        ];
        let report = run_suite(
            &variants,
            &TrainConfig::default(),
            &splits,
            &PipelineConfig::desk(),
            dir.path(),
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        // duplicate entries run with distinct seeds
        assert_ne!(report.rows[0].seed, report.rows[1].seed);
        assert!(report.rows.iter().all(|r| r.outcome.is_err()));
        assert!(report.table.contains("FAILED"));
    }
}
