//! Acceptance suite: one test per criterion, each printing a pass line with
//! its wall-clock time. Run with `cargo test --release --test acceptance --
//! --nocapture` to see every line.

use std::time::Instant;

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, RngCore};
use smokeynet_autograd::nn::{init::seed_stream, Ctx};
use smokeynet_autograd::{no_grad, ops, Tensor};
use smokeynet_core::figlib::{index_archive, OffsetPattern, SupervisionSource};
use smokeynet_core::model::{
    input_array, InputBatch, ModelGeometry, SmokeyNet, VariantConfig,
};
use smokeynet_core::objective::{
    classification_metrics, time_to_detection, total_loss, weighted_bce, weighted_bce_tensor,
    FireEval, LossWeights,
};
use smokeynet_core::preprocess::{
    rasterize_regions, tile_image, tile_labels, ImageBuffer, Mask, TileGrid,
};
use smokeynet_harness::data::{load_example, prepare_splits, FrameCache, PipelineConfig};
use smokeynet_harness::synth::{generate_synthetic_corpus, SyntheticSpec};
use smokeynet_harness::trainer::{train, RunRecord, TrainConfig};

fn pass(criterion: &str, start: Instant, budget_secs: f64) {
    let elapsed = start.elapsed().as_secs_f64();
    println!("[PASS] {criterion} ({elapsed:.2}s, budget {budget_secs:.0}s)");
    assert!(
        elapsed < budget_secs,
        "{criterion}: {elapsed:.2}s exceeded the {budget_secs}s budget"
    );
}

#[test]
fn acceptance_01_tiling_geometry() {
    let start = Instant::now();
    let grid = TileGrid::canonical();
    assert_eq!(grid.tile_count(), 45);
    assert_eq!((grid.rows, grid.cols), (5, 9));
    assert_eq!(grid.stride, 204);
    // every pixel covered and reconstruction bit-exact
    let data = ndarray::Array3::from_shape_fn((3, 1040, 1856), |(c, y, x)| {
        ((c * 7_919 + y * 1_856 + x) % 65_521) as f32 / 65_521.0
    });
    let img = ImageBuffer::new(data);
    let tiles = tile_image(&img, &grid).unwrap();
    let mut rebuilt = ImageBuffer::<f32>::zeros(3, 1040, 1856);
    let mut coverage = ndarray::Array2::<u8>::zeros((1040, 1856));
    for (tile, win) in tiles.iter().zip(grid.tiles.iter()) {
        rebuilt
            .data
            .slice_mut(ndarray::s![
                ..,
                win.y0..win.y0 + grid.tile_size,
                win.x0..win.x0 + grid.tile_size
            ])
            .assign(&tile.data);
        coverage
            .slice_mut(ndarray::s![
                win.y0..win.y0 + grid.tile_size,
                win.x0..win.x0 + grid.tile_size
            ])
            .mapv_inplace(|v| v.saturating_add(1));
    }
    assert_eq!(rebuilt.data, img.data, "reconstruction is bit-exact");
    assert!(coverage.iter().all(|&c| c >= 1), "every pixel covered");
    pass("criterion 1: tiling geometry", start, 1.0);
}

#[test]
fn acceptance_02_tile_labels_vs_bruteforce() {
    let start = Instant::now();
    let grid = TileGrid::canonical();
    let mut rng = seed_stream(2025, "acceptance-tile-labels");
    for case in 0..100 {
        // sparse random mask, recorded as a pixel list for the oracle
        let n_pixels = 200 + (rng.next_u64() % 8_000) as usize;
        let mut mask = Mask::zeros((1040, 1856));
        let mut pixels = Vec::with_capacity(n_pixels);
        for _ in 0..n_pixels {
            let y = (rng.next_u64() % 1040) as usize;
            let x = (rng.next_u64() % 1856) as usize;
            if mask[[y, x]] == 0 {
                mask[[y, x]] = 1;
                pixels.push((y, x));
            }
        }
        let got = tile_labels(&mask, &grid, 250).unwrap();
        // oracle: walk the set pixels, add each to every covering tile
        let mut counts = vec![0u32; grid.tile_count()];
        for &(y, x) in &pixels {
            for (i, t) in grid.tiles.iter().enumerate() {
                if y >= t.y0
                    && y < t.y0 + grid.tile_size
                    && x >= t.x0
                    && x < t.x0 + grid.tile_size
                {
                    counts[i] += 1;
                }
            }
        }
        let want: Vec<bool> = counts.iter().map(|&c| c > 250).collect();
        assert_eq!(got.labels, want, "case {case}");
    }
    // strict-inequality boundary: exactly 250 pixels in one tile window
    let mut mask = Mask::zeros((1040, 1856));
    for i in 0..250usize {
        mask[[i / 50, i % 50]] = 1;
    }
    assert!(!tile_labels(&mask, &grid, 250).unwrap().labels[0]);
    mask[[60, 60]] = 1;
    assert!(tile_labels(&mask, &grid, 250).unwrap().labels[0]);
    pass("criterion 2: tile labels vs brute-force counts", start, 10.0);
}

#[test]
fn acceptance_03_rasterization_vs_oracle() {
    let start = Instant::now();
    let mut rng = seed_stream(2025, "acceptance-raster");
    for case in 0..200 {
        let nverts = 3 + (rng.next_u64() % 10) as usize; // up to 12
        let poly: Vec<[f64; 2]> = (0..nverts)
            .map(|_| [rng.random::<f64>() * 64.0, rng.random::<f64>() * 64.0])
            .collect();
        let ann = smokeynet_core::figlib::AnnotationSet {
            contours: vec![poly.clone()],
            boxes: vec![],
        };
        let (mask, _) = rasterize_regions(&ann, SupervisionSource::Contour, 64, 64);
        let want = smokeynet_core::preprocess::raster::oracle::fill_mask(&[poly], 64, 64);
        assert_eq!(mask, want, "case {case}");
    }
    pass("criterion 3: rasterization vs point-in-polygon oracle", start, 30.0);
}

#[test]
fn acceptance_04_loss_correctness() {
    let start = Instant::now();
    let ln2 = std::f64::consts::LN_2;

    let v = weighted_bce(&[0.5f64], &[true], 5.0).unwrap();
    assert!((v - 5.0 * ln2).abs() < 1e-9, "5 ln2 case: {v}");
    let v = weighted_bce(&[0.5f64], &[false], 5.0).unwrap();
    assert!((v - ln2).abs() < 1e-9, "ln2 case: {v}");

    // constructed all-0.5 flagship example: 136 ln2
    let tiles = 45;
    let zeros = vec![0.0f64; tiles];
    let outputs = smokeynet_core::model::ModelOutputs {
        tile_logits_cnn: Tensor::constant(
            ArrayD::from_shape_vec(IxDyn(&[1, tiles]), zeros.clone()).unwrap(),
        ),
        tile_logits_temporal: Some(Tensor::constant(
            ArrayD::from_shape_vec(IxDyn(&[1, tiles]), zeros.clone()).unwrap(),
        )),
        tile_logits_spatial: Some(Tensor::constant(
            ArrayD::from_shape_vec(IxDyn(&[1, tiles]), zeros).unwrap(),
        )),
        image_logit: Tensor::constant(ArrayD::from_elem(IxDyn(&[1]), 0.0f64)),
    };
    let tile_label_vec = smokeynet_core::preprocess::TileLabelVector {
        labels: vec![false; tiles],
        rows: 5,
        cols: 9,
    };
    let (_, breakdown) = total_loss(
        &outputs,
        &[Some(&tile_label_vec)],
        &[false],
        &LossWeights::default(),
        &[SupervisionSource::Contour],
    )
    .unwrap();
    assert!(
        (breakdown.total - 136.0 * ln2).abs() < 1e-6,
        "total {} vs 136 ln2 {}",
        breakdown.total,
        136.0 * ln2
    );

    // analytic gradient vs central differences, away from the clamp
    let mut rng = seed_stream(4, "acceptance-loss-grad");
    let probs: Vec<f64> = (0..24).map(|_| rng.random::<f64>() * 0.9 + 0.05).collect();
    let labels: Vec<f64> = (0..24).map(|_| f64::from(rng.random::<bool>())).collect();
    let labels_arr = ArrayD::from_shape_vec(IxDyn(&[24]), labels).unwrap();
    let p = Tensor::param(ArrayD::from_shape_vec(IxDyn(&[24]), probs.clone()).unwrap());
    weighted_bce_tensor(&p, &labels_arr, 40.0).backward();
    let grad = p.grad().unwrap();
    for i in 0..probs.len() {
        let h = 1e-6;
        let eval = |v: f64| {
            let mut shifted = probs.clone();
            shifted[i] = v;
            let pt = Tensor::constant(ArrayD::from_shape_vec(IxDyn(&[24]), shifted).unwrap());
            no_grad(|| weighted_bce_tensor(&pt, &labels_arr, 40.0)).item()
        };
        let fd = (eval(probs[i] + h) - eval(probs[i] - h)) / (2.0 * h);
        let an = grad[[i]];
        assert!(
            ((fd - an) / fd.abs().max(1e-4)).abs() < 1e-5,
            "grad {i}: analytic {an} vs fd {fd}"
        );
    }
    pass("criterion 4: loss correctness", start, 10.0);
}

#[test]
fn acceptance_05_metrics_vs_bruteforce() {
    let start = Instant::now();
    let mut rng = seed_stream(5, "acceptance-metrics");
    let n = 10_000;
    let preds: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    let m = classification_metrics(&preds, &labels);
    // brute-force recount
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..n {
        if preds[i] && labels[i] {
            tp += 1;
        } else if preds[i] && !labels[i] {
            fp += 1;
        } else if !preds[i] && !labels[i] {
            tn += 1;
        } else {
            fn_ += 1;
        }
    }
    assert_eq!((m.counts.tp, m.counts.fp, m.counts.tn, m.counts.fn_), (tp, fp, tn, fn_));
    assert_eq!(m.accuracy, (tp + tn) as f64 / n as f64);
    assert_eq!(m.precision, tp as f64 / (tp + fp) as f64);
    assert_eq!(m.recall, tp as f64 / (tp + fn_) as f64);

    // published precision/recall reproduce the published F1 within +-0.05
    let (p, r): (f64, f64) = (0.8984, 0.7645);
    let f1 = 2.0 * p * r / (p + r) * 100.0;
    assert!((f1 - 82.59).abs() < 0.05, "f1 {f1}");
    pass("criterion 5: metrics vs brute-force recount", start, 5.0);
}

#[test]
fn acceptance_06_time_to_detection_rules() {
    let start = Instant::now();
    let fire = |predict: &dyn Fn(i32) -> bool| FireEval {
        fire_id: "f".into(),
        frames: (-40..=40)
            .map(|m| (m * 60, m >= 0, predict(m * 60)))
            .collect(),
    };
    let r = time_to_detection(&[fire(&|off| off >= 180)]);
    assert_eq!(r.per_fire[0].ttd_minutes, 3.0);
    assert!(!r.per_fire[0].flagged);
    let r = time_to_detection(&[fire(&|off| off >= 0)]);
    assert_eq!(r.per_fire[0].ttd_minutes, 0.0);
    let r = time_to_detection(&[fire(&|_| false)]);
    assert_eq!(r.per_fire[0].ttd_minutes, 41.0);
    assert!(r.per_fire[0].flagged);
    pass("criterion 6: time-to-detection rules", start, 5.0);
}

fn buildable_variants() -> Vec<VariantConfig> {
    vec![
        VariantConfig::flagship(),
        VariantConfig::three_frame(),
        VariantConfig::mobilenet(),
        VariantConfig::mobilenet_fpn(),
        VariantConfig::efficientnet(),
        VariantConfig::deit_tiny(),
        VariantConfig::cnn_only(),
        VariantConfig::cnn_lstm(),
        VariantConfig::cnn_vit(),
        VariantConfig::transformer_temporal(),
        VariantConfig::cnn3d(),
        VariantConfig::background_fusion(),
    ]
}

fn random_batch(cfg: &VariantConfig, geometry: &ModelGeometry, seed: u64) -> InputBatch<f32> {
    let mut rng = seed_stream(seed, "acceptance-batch");
    let frames = input_array(2, cfg.num_frames, geometry, 3, || {
        rng.random::<f32>() * 2.0 - 1.0
    });
    if cfg.extra_channel == smokeynet_core::model::ExtraChannel::Background {
        let bg = input_array(2, cfg.num_frames, geometry, 1, || rng.random::<f32>());
        InputBatch::with_background(frames, bg)
    } else {
        InputBatch::new(frames)
    }
}

fn check_stage_shapes(cfg: &VariantConfig, out: &smokeynet_core::model::ModelOutputs<f32>, tiles: usize) {
    use smokeynet_core::model::{SpatialKind, TemporalKind};
    assert_eq!(out.tile_logits_cnn.shape(), vec![2, tiles], "{}", cfg.name());
    assert_eq!(
        out.tile_logits_temporal.is_some(),
        cfg.temporal != TemporalKind::None,
        "{}",
        cfg.name()
    );
    assert_eq!(
        out.tile_logits_spatial.is_some(),
        cfg.spatial == SpatialKind::Vit,
        "{}",
        cfg.name()
    );
    for (_, logits) in out.stages() {
        assert_eq!(logits.shape(), vec![2, tiles]);
    }
    assert_eq!(out.image_logit.shape(), vec![2]);
}

#[test]
fn acceptance_07_architecture_contracts() {
    let start = Instant::now();

    // full-scale forwards: stage-correct logit shapes on a batch of 2
    let full = ModelGeometry::canonical();
    for (i, cfg) in buildable_variants().into_iter().enumerate() {
        let model = SmokeyNet::<f32>::build(cfg.clone(), full, 100 + i as u64).unwrap();
        let batch = random_batch(&cfg, &full, 200 + i as u64);
        let out = no_grad(|| model.forward(&batch, &mut Ctx::eval())).unwrap();
        check_stage_shapes(&cfg, &out, full.tiles());
        println!("  forward ok: {} ({} stages)", cfg.name(), out.stage_count());
    }

    // gradient flow on the same wiring at the reduced 5x9 geometry
    let reduced = ModelGeometry {
        rows: 5,
        cols: 9,
        tile_size: 32,
        in_channels: 3,
    };
    let tiles = reduced.tiles();
    for (i, cfg) in buildable_variants().into_iter().enumerate() {
        let model = SmokeyNet::<f32>::build(cfg.clone(), reduced, 300 + i as u64).unwrap();
        let batch = random_batch(&cfg, &reduced, 400 + i as u64);
        let mut ctx = Ctx::train(seed_stream(1, "acceptance-grad"));
        let out = model.forward(&batch, &mut ctx).unwrap();
        check_stage_shapes(&cfg, &out, tiles);
        // mixed labels: one positive example with mixed tiles, one negative
        let mut tl_pos = smokeynet_core::preprocess::TileLabelVector {
            labels: vec![false; tiles],
            rows: reduced.rows,
            cols: reduced.cols,
        };
        tl_pos.labels[3] = true;
        tl_pos.labels[17] = true;
        let tl_neg = smokeynet_core::preprocess::TileLabelVector {
            labels: vec![false; tiles],
            rows: reduced.rows,
            cols: reduced.cols,
        };
        let (loss, _) = total_loss(
            &out,
            &[Some(&tl_pos), Some(&tl_neg)],
            &[true, false],
            &LossWeights::default(),
            &[SupervisionSource::Contour, SupervisionSource::Contour],
        )
        .unwrap();
        loss.backward();
        let mut by_stage: std::collections::BTreeMap<String, (usize, usize)> = Default::default();
        smokeynet_autograd::nn::Module::visit_params(&model, "", &mut |name, t| {
            let stage = name.split('.').next().unwrap_or("").to_string();
            let g = t
                .grad()
                .unwrap_or_else(|| panic!("{}: {name} missing gradient", cfg.name()));
            assert!(
                g.iter().all(|v| v.is_finite()),
                "{}: {name} has non-finite gradient",
                cfg.name()
            );
            let entry = by_stage.entry(stage).or_insert((0, 0));
            entry.0 += g.len();
            entry.1 += g.iter().filter(|v| **v != 0.0).count();
        });
        for (stage, (total, nonzero)) in &by_stage {
            assert!(
                *nonzero > 0,
                "{}: stage {stage} has all-zero gradients ({total} scalars)",
                cfg.name()
            );
        }
        println!("  gradient flow ok: {}", cfg.name());
    }

    // pyramid widths 784 / 2352 / 960 and fusion halving 2E -> E
    {
        use smokeynet_core::model::backbones::{
            MobileNetFpn, FPN_CONCAT_FEATURES, FPN_MAP_FEATURES, FPN_OUT_FEATURES,
        };
        let mut rng = seed_stream(9, "acceptance-fpn");
        let fpn = MobileNetFpn::<f32>::new(3, &mut rng);
        let x = Tensor::constant(ArrayD::from_elem(IxDyn(&[1, 3, 224, 224]), 0.1f32));
        let taps = fpn.backbone.forward_taps(&x, false);
        let (emb, widths) = fpn.neck.forward(&taps.c4, &taps.c5);
        assert_eq!(widths, [FPN_MAP_FEATURES; 3]);
        assert_eq!(FPN_MAP_FEATURES, 784);
        assert_eq!(FPN_CONCAT_FEATURES, 2352);
        assert_eq!(FPN_OUT_FEATURES, 960);
        assert_eq!(emb.shape(), vec![1, 960]);

        let e = 960usize;
        let mut rng = seed_stream(10, "acceptance-fusion");
        let fusion = smokeynet_autograd::nn::Linear::<f32>::new(2 * e, e, true, &mut rng);
        let raw = Tensor::constant(ArrayD::from_elem(IxDyn(&[1, 45, e]), 0.2f32));
        let bg = Tensor::constant(ArrayD::from_elem(IxDyn(&[1, 45, e]), 0.1f32));
        let fused = smokeynet_core::model::fuse_streams(&raw, &bg, &fusion).unwrap();
        assert_eq!(fused.shape(), vec![1, 45, e], "fusion halves 2E to E");
    }

    pass("criterion 7: architecture contracts", start, 600.0);
}

#[test]
fn acceptance_08_desk_scale_learning() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let pipe = PipelineConfig::desk();
    let grid = pipe.grid().unwrap();
    let spec = SyntheticSpec::desk(8, 17, 7);
    let truth = generate_synthetic_corpus(&spec, &corpus, &grid, pipe.tile_threshold).unwrap();
    let index = index_archive(&corpus, &OffsetPattern::SignedToken).unwrap();
    let splits = prepare_splits(&index, &truth.manifest, 2);
    assert_eq!(splits.train.len(), 4 * 17);

    let cfg = TrainConfig::desk(7);
    let run = train(
        &VariantConfig::flagship(),
        &cfg,
        &splits,
        &pipe,
        &dir.path().join("run"),
    )
    .unwrap();

    let best_train_acc = run
        .record
        .epochs
        .iter()
        .map(|e| e.train_accuracy)
        .fold(0.0f64, f64::max);
    println!(
        "  trained {} epochs; best train accuracy {best_train_acc:.3}",
        run.record.epochs.len()
    );
    assert!(
        best_train_acc >= 0.95,
        "train accuracy {best_train_acc} below 0.95 within {} epochs",
        cfg.epochs
    );

    // selected checkpoint is the validation-error argmin (earliest tie)
    assert_eq!(
        run.record.selected_epoch,
        RunRecord::select_checkpoint(&run.record.epochs)
    );
    let min_val = run
        .record
        .epochs
        .iter()
        .map(|e| e.val_error_rate)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(run.record.selected_stats().val_error_rate, min_val);

    // synthetic-test accuracy of the selected checkpoint
    let mut cache = FrameCache::new();
    let outcome = smokeynet_harness::evaluate::evaluate_split(
        &run.model,
        &splits.test,
        &pipe,
        &mut cache,
        cfg.micro_batch,
    )
    .unwrap();
    println!("  test accuracy {:.3}", outcome.metrics.accuracy);
    assert!(
        outcome.metrics.accuracy >= 0.80,
        "test accuracy {} below 0.80",
        outcome.metrics.accuracy
    );
    pass("criterion 8: desk-scale learning sanity", start, 1800.0);
}

#[test]
fn acceptance_09_pipeline_roundtrip() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let pipe = PipelineConfig::desk();
    let grid = pipe.grid().unwrap();
    let spec = SyntheticSpec::desk(4, 81, 11);
    let truth = generate_synthetic_corpus(&spec, dir.path(), &grid, pipe.tile_threshold).unwrap();
    let index = index_archive(dir.path(), &OffsetPattern::SignedToken).unwrap();

    // counts, offsets and labels reproduce exactly
    assert_eq!(index.fires.len(), 4);
    assert_eq!(index.total_frames(), 4 * 81);
    for (seq, fire) in index.fires.iter().zip(truth.fires.iter()) {
        assert_eq!(seq.fire_id, fire.fire_id);
        assert_eq!(seq.frames.len(), fire.frames.len());
        assert_eq!(seq.missing_slots, 0);
        for (frame, ft) in seq.frames.iter().zip(fire.frames.iter()) {
            assert_eq!(frame.offset_seconds, ft.offset_seconds);
            assert_eq!(frame.image_label, ft.image_label);
        }
    }

    // splits cover the archive; tile labels through the pipeline equal the
    // generator's ground truth exactly
    let report = smokeynet_core::figlib::validate_splits(&truth.manifest, &index).unwrap();
    assert_eq!(report.fires.values().sum::<usize>(), 4);
    let splits = prepare_splits(&index, &truth.manifest, 2);
    assert_eq!(
        splits.train.len() + splits.val.len() + splits.test.len(),
        4 * 81
    );
    let mut cache = FrameCache::new();
    let by_fire: std::collections::BTreeMap<&str, &smokeynet_harness::synth::FireTruth> = truth
        .fires
        .iter()
        .map(|f| (f.fire_id.as_str(), f))
        .collect();
    for ex in splits.train.iter().chain(&splits.val).chain(&splits.test) {
        let loaded = load_example(ex, &pipe, &grid, &mut cache, None).unwrap();
        let ft = by_fire[ex.fire_id.as_str()]
            .frames
            .iter()
            .find(|f| f.offset_seconds == ex.offset_seconds)
            .unwrap();
        assert_eq!(loaded.image_label, ft.image_label);
        assert_eq!(
            loaded.tile_labels.unwrap().labels,
            ft.tile_labels,
            "{} offset {}",
            ex.fire_id,
            ex.offset_seconds
        );
    }
    pass("criterion 9: pipeline round-trip", start, 300.0);
}

#[test]
fn acceptance_10_full_scale_reproduction_note() {
    // Non-gating: full-corpus training needs the real archive mirror and
    // GPU-scale compute. This pins the published hyperparameters so such a
    // run is configured exactly as documented.
    let cfg = TrainConfig::default();
    assert_eq!(cfg.learning_rate, 0.001);
    assert_eq!(cfg.weight_decay, 0.001);
    assert_eq!(cfg.dropout, 0.0);
    assert_eq!(cfg.effective_batch, 32);
    assert_eq!(cfg.epochs, 25);
    assert_eq!(cfg.tile_positive_weight, 40.0);
    assert_eq!(cfg.image_positive_weight, 5.0);
    let pipe = PipelineConfig::full();
    assert_eq!(pipe.tile_threshold, 250);
    assert_eq!(pipe.geometry.resize_height, 1392);
    assert_eq!(pipe.geometry.crop_top, 352);
    println!(
        "[NOTE] criterion 10: full-scale reproduction is documented, not gated; with the real \
         archive and these hyperparameters the flagship variant is expected within a few \
         accuracy points of the published result, subject to aggregator-hyperparameter ambiguity"
    );
}
