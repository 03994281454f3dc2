use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use smokeynet_core::checkpoint::load_model;
use smokeynet_core::figlib::{index_archive, load_split_manifest, ArchiveIndex, SplitManifest};
use smokeynet_core::objective::{render_metrics_table, render_ttd_detail};
use smokeynet_harness::config::{backbone_by_name, variant_by_name, Config};
use smokeynet_harness::data::{prepare_splits, FrameCache, PreparedSplits};
use smokeynet_harness::evaluate::{evaluate_split, full_report, model_latency, PredictionRow};
use smokeynet_harness::firegrid::render_fire_grid;
use smokeynet_harness::suite::run_suite;
use smokeynet_harness::synth::generate_synthetic_corpus;
use smokeynet_harness::trainer::train;
use smokeynet_harness::{check_device, HarnessError};

#[derive(Parser)]
#[command(
    name = "smokeynet",
    about = "Tiled spatiotemporal wildfire-smoke detection: data pipeline, training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Index an archive, validate the split manifest, report counts.
    Prepare {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic archive with annotations and a split manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        fires: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        no_plume: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one variant and checkpoint every epoch.
    Train {
        #[arg(long, default_value = "flagship")]
        variant: String,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=3))]
        frames: Option<u64>,
        #[arg(long)]
        backbone: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a split and emit reports.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train and evaluate a comma-separated list of variants.
    Suite {
        #[arg(long)]
        variants: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Re-emit the metrics table and fire grid from saved predictions.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    Ok(match path {
        Some(p) => Config::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => Config::default(),
    })
}

fn load_archive(cfg: &Config) -> Result<(ArchiveIndex, SplitManifest)> {
    let archive = cfg
        .data
        .archive
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("no archive configured (data.archive or --archive)"))?;
    let index = index_archive(archive, &cfg.data.offset_pattern)?;
    for w in &index.warnings {
        eprintln!("warning: {w}");
    }
    let manifest_path = cfg
        .data
        .manifest
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("no split manifest configured (data.manifest or --manifest)"))?;
    let (manifest, report) = load_split_manifest(manifest_path, &index)?;
    eprintln!(
        "splits: train {} fires / {} images, val {} / {}, test {} / {}, omitted {} / {}",
        report.fires["train"],
        report.images["train"],
        report.fires["val"],
        report.images["val"],
        report.fires["test"],
        report.images["test"],
        report.fires["omit"],
        report.images["omit"],
    );
    Ok((index, manifest))
}

fn prepared(cfg: &Config) -> Result<PreparedSplits> {
    let (index, manifest) = load_archive(cfg)?;
    Ok(prepare_splits(&index, &manifest, cfg.variant.num_frames))
}

fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut text = String::from("fire_id\toffset_seconds\tlabel\tprediction\n");
    for r in rows {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.fire_id,
            r.offset_seconds,
            u8::from(r.label),
            u8::from(r.prediction)
        ));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            bail!("malformed prediction row: {line:?}");
        }
        rows.push(PredictionRow {
            fire_id: cols[0].to_string(),
            offset_seconds: cols[1].parse()?,
            label: cols[2] == "1",
            prediction: cols[3] == "1",
        });
    }
    Ok(rows)
}

fn emit_eval_artifacts(
    out: &Path,
    name: &str,
    model: &smokeynet_core::Model32,
    outcome: &smokeynet_harness::evaluate::EvalOutcome,
    latency_ms: f64,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let report = full_report(model, outcome, latency_ms);
    let table = render_metrics_table(&[(name.to_string(), report)]);
    println!("{table}");
    fs::write(out.join("metrics.tsv"), &table)?;
    fs::write(out.join("ttd_detail.tsv"), render_ttd_detail(&outcome.ttd))?;
    write_predictions(&out.join("predictions.tsv"), &outcome.rows)?;
    render_fire_grid(
        &outcome.fire_evals,
        &out.join("fire_grid.png"),
        &out.join("fire_grid.tsv"),
    )?;
    Ok(())
}

fn main() -> Result<()> {
    check_device()?;
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Prepare {
            archive,
            manifest,
            config,
        } => {
            let mut cfg = load_config(&config)?;
            cfg.data.archive = Some(archive.clone());
            if manifest.is_some() {
                cfg.data.manifest = manifest;
            }
            let index = index_archive(&archive, &cfg.data.offset_pattern)?;
            println!(
                "indexed {} fires, {} frames",
                index.fires.len(),
                index.total_frames()
            );
            for w in &index.warnings {
                eprintln!("warning: {w}");
            }
            let incomplete = index.fires.iter().filter(|f| f.missing_slots > 0).count();
            println!("fires with missing frames on the 60s grid: {incomplete}");
            if let Some(manifest_path) = &cfg.data.manifest {
                let (_, report) = load_split_manifest(manifest_path, &index)?;
                println!(
                    "manifest ok: train {}/{} val {}/{} test {}/{} omitted {}/{} (fires/images)",
                    report.fires["train"],
                    report.images["train"],
                    report.fires["val"],
                    report.images["val"],
                    report.fires["test"],
                    report.images["test"],
                    report.fires["omit"],
                    report.images["omit"],
                );
            }
        }
        Cmd::Synth {
            out,
            fires,
            frames,
            seed,
            no_plume,
            config,
        } => {
            let cfg = load_config(&config)?;
            let mut spec = cfg.synth.clone();
            if let Some(f) = fires {
                spec.num_fires = f;
            }
            if let Some(f) = frames {
                spec.frames_per_fire = f;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            if no_plume {
                spec.plume = false;
            }
            // the corpus is generated at the configured pipeline geometry
            let geometry = cfg.data.geometry;
            if (spec.height, spec.width)
                != (geometry.processed_height(), geometry.processed_width())
            {
                spec.height = geometry.processed_height();
                spec.width = geometry.processed_width();
            }
            let grid = geometry.grid().map_err(HarnessError::from)?;
            let truth = generate_synthetic_corpus(&spec, &out, &grid, cfg.data.tile_threshold)?;
            println!(
                "wrote {} fires ({} frames) under {}; manifest at {}",
                truth.fires.len(),
                truth.fires.iter().map(|f| f.frames.len()).sum::<usize>(),
                out.display(),
                truth.manifest_path.display()
            );
        }
        Cmd::Train {
            variant,
            frames,
            backbone,
            seed,
            config,
            out,
            archive,
            manifest,
        } => {
            let mut cfg = load_config(&config)?;
            cfg.variant = variant_by_name(&variant)?;
            if let Some(b) = backbone {
                cfg.variant.backbone = backbone_by_name(&b)?;
            }
            if let Some(f) = frames {
                cfg.variant.num_frames = f as usize;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if archive.is_some() {
                cfg.data.archive = archive;
            }
            if manifest.is_some() {
                cfg.data.manifest = manifest;
            }
            cfg.variant
                .validate()
                .map_err(smokeynet_core::model::ModelError::from)
                .map_err(HarnessError::from)?;
            if cfg.variant.pretrained_backbone && cfg.pretrained_weights.is_none() {
                bail!(
                    "model.pretrained = true needs model.pretrained_weights = <checkpoint> \
                     (no bundled corpus-pretrained weights exist)"
                );
            }
            let splits = prepared(&cfg)?;
            println!(
                "training {} on {} examples ({} val, {} test)",
                cfg.variant.name(),
                splits.train.len(),
                splits.val.len(),
                splits.test.len()
            );
            let run = train(&cfg.variant, &cfg.train, &splits, &cfg.pipeline(), &out)?;
            let sel = run.record.selected_stats();
            println!(
                "selected epoch {} (val error {:.4}); per-epoch record at {}",
                run.record.selected_epoch,
                sel.val_error_rate,
                out.join("run.json").display()
            );
        }
        Cmd::Eval {
            checkpoint,
            split,
            config,
            out,
            archive,
            manifest,
        } => {
            let mut cfg = load_config(&config)?;
            if archive.is_some() {
                cfg.data.archive = archive;
            }
            if manifest.is_some() {
                cfg.data.manifest = manifest;
            }
            if let Some(s) = split {
                cfg.eval.split = s;
            }
            let (meta, model) = load_model::<f32>(&checkpoint)?;
            cfg.variant = meta.variant.clone();
            let splits = prepared(&cfg)?;
            let examples = match cfg.eval.split.as_str() {
                "train" => &splits.train,
                "val" => &splits.val,
                "test" => &splits.test,
                other => bail!("unknown split {other:?} (train, val, test)"),
            };
            if examples.is_empty() {
                bail!("split {:?} holds no examples", cfg.eval.split);
            }
            let mut cache = FrameCache::new();
            let outcome = evaluate_split(
                &model,
                examples,
                &cfg.pipeline(),
                &mut cache,
                cfg.train.micro_batch,
            )?;
            let latency = model_latency(
                &model,
                &examples[0],
                &cfg.pipeline(),
                &mut cache,
                cfg.eval.latency_warmup,
                cfg.eval.latency_trials,
            )?;
            emit_eval_artifacts(&out, &meta.variant.name(), &model, &outcome, latency)?;
        }
        Cmd::Suite {
            variants,
            seed,
            config,
            out,
            archive,
            manifest,
        } => {
            let mut cfg = load_config(&config)?;
            if archive.is_some() {
                cfg.data.archive = archive;
            }
            if manifest.is_some() {
                cfg.data.manifest = manifest;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let list: Vec<_> = variants
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(variant_by_name)
                .collect::<Result<_, _>>()?;
            let splits = prepared(&cfg)?;
            let report = run_suite(&list, &cfg.train, &splits, &cfg.pipeline(), &out)?;
            println!("{}", report.table);
            println!("comparison table at {}", out.join("comparison.tsv").display());
        }
        Cmd::Report { run, out } => {
            let out = out.unwrap_or_else(|| run.clone());
            fs::create_dir_all(&out)?;
            let rows = read_predictions(&run.join("predictions.tsv"))?;
            let mut fires: Vec<smokeynet_core::objective::FireEval> = Vec::new();
            for row in &rows {
                match fires.last_mut() {
                    Some(f) if f.fire_id == row.fire_id => {
                        f.frames.push((row.offset_seconds, row.label, row.prediction));
                    }
                    _ => fires.push(smokeynet_core::objective::FireEval {
                        fire_id: row.fire_id.clone(),
                        frames: vec![(row.offset_seconds, row.label, row.prediction)],
                    }),
                }
            }
            for f in fires.iter_mut() {
                f.frames.sort_by_key(|fr| fr.0);
            }
            let preds: Vec<bool> = rows.iter().map(|r| r.prediction).collect();
            let labels: Vec<bool> = rows.iter().map(|r| r.label).collect();
            let metrics = smokeynet_core::objective::classification_metrics(&preds, &labels);
            let ttd = smokeynet_core::objective::time_to_detection(&fires);
            println!(
                "accuracy {:.2}% F1 {:.2}% precision {:.2}% recall {:.2}% mean TTD {:.2} min",
                metrics.accuracy * 100.0,
                metrics.f1 * 100.0,
                metrics.precision * 100.0,
                metrics.recall * 100.0,
                ttd.mean_including_flagged
            );
            fs::write(out.join("ttd_detail.tsv"), render_ttd_detail(&ttd))?;
            render_fire_grid(
                &fires,
                &out.join("fire_grid.png"),
                &out.join("fire_grid.tsv"),
            )?;
            println!("fire grid at {}", out.join("fire_grid.png").display());
        }
    }
    Ok(())
}
