//! Temporary diagnostic: single-batch overfit of the flagship variant.
use smokeynet_autograd::nn::{init::seed_stream, Ctx};
use smokeynet_autograd::optim::Sgd;
use smokeynet_core::figlib::{index_archive, OffsetPattern};
use smokeynet_core::model::{InputBatch, ModelGeometry, SmokeyNet, VariantConfig};
use smokeynet_core::objective::{total_loss, LossWeights};
use smokeynet_harness::data::{
    load_example, prepare_splits, stack_batch, FrameCache, PipelineConfig,
};
use smokeynet_harness::synth::{generate_synthetic_corpus, SyntheticSpec};

#[test]
#[ignore]
fn single_batch_overfit() {
    let dir = tempfile::tempdir().unwrap();
    let pipe = PipelineConfig::desk();
    let grid = pipe.grid().unwrap();
    let spec = SyntheticSpec::desk(2, 9, 7);
    let truth = generate_synthetic_corpus(&spec, dir.path(), &grid, pipe.tile_threshold).unwrap();
    let index = index_archive(dir.path(), &OffsetPattern::SignedToken).unwrap();
    let splits = prepare_splits(&index, &truth.manifest, 2);
    let neg = splits
        .train
        .iter()
        .find(|e| e.offset_seconds == -240)
        .unwrap();
    let pos = splits
        .train
        .iter()
        .find(|e| e.offset_seconds == 240)
        .unwrap();
    let mut cache = FrameCache::new();
    let loaded = [
        load_example(neg, &pipe, &grid, &mut cache, None).unwrap(),
        load_example(pos, &pipe, &grid, &mut cache, None).unwrap(),
    ];
    println!(
        "pos example has {} positive tiles",
        loaded[1]
            .tile_labels
            .as_ref()
            .unwrap()
            .labels
            .iter()
            .filter(|&&l| l)
            .count()
    );
    let (frames, _) = stack_batch(&loaded);
    let batch = InputBatch::new(frames);

    let geometry = ModelGeometry::from_grid(&grid, 3);
    let model = SmokeyNet::<f32>::build(VariantConfig::flagship(), geometry, 7).unwrap();
    let opt = Sgd::new(model.parameters(), 0.01, 0.0).with_clip(Some(5.0));
    let labels = [false, true];
    let tile_refs: Vec<_> = loaded.iter().map(|l| l.tile_labels.as_ref()).collect();
    let sup: Vec<_> = loaded.iter().map(|l| l.supervision).collect();
    for step in 0..120 {
        let t0 = std::time::Instant::now();
        let mut ctx = Ctx::train(seed_stream(1, "probe"));
        let out = model.forward(&batch, &mut ctx).unwrap();
        let t_fwd = t0.elapsed();
        let weights = LossWeights {
            image_positive_weight: 1.0,
            ..LossWeights::default()
        };
        let (loss, b) = total_loss(&out, &tile_refs, &labels, &weights, &sup).unwrap();
        let t1 = std::time::Instant::now();
        loss.backward();
        let t_bwd = t1.elapsed();
        let t2 = std::time::Instant::now();
        opt.step();
        let t_step = t2.elapsed();
        println!("timing fwd {:.3}s bwd {:.3}s step {:.3}s", t_fwd.as_secs_f64(), t_bwd.as_secs_f64(), t_step.as_secs_f64());
        if step % 15 == 0 || step == 119 {
            let img = out.image_logit.data().as_slice().unwrap().to_vec();
            let spatial = out.tile_logits_spatial.as_ref().unwrap();
            let sd = spatial.data();
            let pos_tile_max = sd
                .index_axis(ndarray::Axis(0), 1)
                .iter()
                .cloned()
                .fold(f32::MIN, f32::max);
            let neg_tile_max = sd
                .index_axis(ndarray::Axis(0), 0)
                .iter()
                .cloned()
                .fold(f32::MIN, f32::max);
            println!(
                "step {step}: total {:.3} image_term {:.4} img_logits [{:.3} {:.3}] spatial_tile_max neg {:.2} pos {:.2}",
                b.total, b.image_term, img[0], img[1], neg_tile_max, pos_tile_max
            );
        }
    }
}
