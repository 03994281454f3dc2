use ndarray::{ArrayD, IxDyn};
use smokeynet_autograd::{ops, Scalar, Tensor};

use super::ObjectiveError;
use crate::figlib::SupervisionSource;
use crate::model::ModelOutputs;
use crate::preprocess::TileLabelVector;

/// Probabilities are clamped to [eps, 1 - eps] before logarithms.
pub const BCE_EPS: f64 = 1e-7;

/// Positive-example weights: 40 on tile terms (the negative/positive tile
/// ratio), 5 on the image term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub tile_positive_weight: f64,
    pub image_positive_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            tile_positive_weight: 40.0,
            image_positive_weight: 5.0,
        }
    }
}

/// Mean weighted binary cross-entropy over a probability list:
///
///   -(1/N) * sum( w*y*ln(p) + (1-y)*ln(1-p) )
///
/// with the clamp applied before the logs.
pub fn weighted_bce<T: Scalar>(
    probabilities: &[T],
    labels: &[bool],
    positive_weight: T,
) -> Result<T, ObjectiveError> {
    if probabilities.is_empty() {
        return Err(ObjectiveError::EmptyInput("weighted_bce"));
    }
    if probabilities.len() != labels.len() {
        return Err(ObjectiveError::LengthMismatch(
            probabilities.len(),
            labels.len(),
        ));
    }
    let eps = T::of_f64(BCE_EPS);
    let hi = T::one() - eps;
    let mut acc = T::zero();
    for (&p, &y) in probabilities.iter().zip(labels.iter()) {
        let pc = p.max(eps).min(hi);
        acc = acc + if y {
            positive_weight * pc.ln()
        } else {
            (T::one() - pc).ln()
        };
    }
    Ok(-acc / T::of_usize(probabilities.len()))
}

/// Differentiable form over a probability tensor: mean of the elementwise
/// weighted terms (the labels array is a constant of the same shape).
pub fn weighted_bce_tensor<T: Scalar>(
    probs: &Tensor<T>,
    labels: &ArrayD<T>,
    positive_weight: T,
) -> Tensor<T> {
    let terms = ops::bce_terms(probs, labels, positive_weight, T::of_f64(BCE_EPS));
    ops::mean_all(&terms)
}

/// Scalar components of one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T: Scalar> {
    pub image_term: T,
    /// One entry per present architecture stage, in stage order.
    pub tile_terms: Vec<T>,
    pub total: T,
}

fn labels_to_array<T: Scalar>(labels: &[bool]) -> ArrayD<T> {
    ArrayD::from_shape_vec(
        IxDyn(&[labels.len()]),
        labels
            .iter()
            .map(|&y| if y { T::one() } else { T::zero() })
            .collect(),
    )
    .unwrap()
}

/// Total training loss: the weighted image BCE plus, for every present
/// stage, the sum over tile positions of the batch-mean weighted tile BCE.
///
/// Excluded examples contribute the image term only; their rows are masked
/// out of every tile term and the per-position mean divides by the count of
/// supervised examples.
pub fn total_loss<T: Scalar>(
    outputs: &ModelOutputs<T>,
    tile_labels: &[Option<&TileLabelVector>],
    image_labels: &[bool],
    weights: &LossWeights,
    supervision: &[SupervisionSource],
) -> Result<(Tensor<T>, LossBreakdown<T>), ObjectiveError> {
    let batch = image_labels.len();
    if batch == 0 {
        return Err(ObjectiveError::EmptyInput("total_loss"));
    }
    if tile_labels.len() != batch || supervision.len() != batch {
        return Err(ObjectiveError::LengthMismatch(tile_labels.len(), batch));
    }
    let tiles = outputs.tile_logits_cnn.shape()[1];

    // image term over the full batch, computed in the stable logit form
    let image_term = ops::mean_all(&ops::bce_logit_terms(
        &outputs.image_logit,
        &labels_to_array(image_labels),
        T::of_f64(weights.image_positive_weight),
    ));

    // supervised-example mask and stacked tile-label matrix
    let mut included = 0usize;
    let mut mask = ArrayD::<T>::zeros(IxDyn(&[batch, 1]));
    let mut label_mat = ArrayD::<T>::zeros(IxDyn(&[batch, tiles]));
    for i in 0..batch {
        let excluded = supervision[i] == SupervisionSource::Excluded;
        match (excluded, tile_labels[i]) {
            (true, _) => {}
            (false, Some(tl)) => {
                if tl.labels.len() != tiles {
                    return Err(ObjectiveError::TileCountMismatch {
                        got: tl.labels.len(),
                        want: tiles,
                    });
                }
                included += 1;
                mask[[i, 0]] = T::one();
                for (j, &l) in tl.labels.iter().enumerate() {
                    label_mat[[i, j]] = if l { T::one() } else { T::zero() };
                }
            }
            (false, None) => return Err(ObjectiveError::MissingTileLabels(i)),
        }
    }

    let mut tile_terms: Vec<Tensor<T>> = Vec::new();
    if included > 0 {
        let mask_t = Tensor::constant(mask);
        let scale = T::one() / T::of_usize(included);
        for (_, logits) in outputs.stages() {
            let terms = ops::bce_logit_terms(
                logits,
                &label_mat,
                T::of_f64(weights.tile_positive_weight),
            );
            let masked = ops::mul(&terms, &mask_t);
            // sum over tile positions of the per-position mean over
            // supervised examples = total sum / included count
            tile_terms.push(ops::mul_scalar(&ops::sum_all(&masked), scale));
        }
    }

    let mut total = image_term.clone();
    for t in &tile_terms {
        total = ops::add(&total, t);
    }
    let breakdown = LossBreakdown {
        image_term: image_term.item(),
        tile_terms: tile_terms.iter().map(Tensor::item).collect(),
        total: total.item(),
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use smokeynet_autograd::no_grad;

    fn logits_of(vals: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::constant(ArrayD::from_shape_vec(IxDyn(shape), vals.to_vec()).unwrap())
    }

    fn half_prob_outputs(batch: usize, tiles: usize, stages: usize) -> ModelOutputs<f64> {
        let zeros = vec![0.0f64; batch * tiles];
        ModelOutputs {
            tile_logits_cnn: logits_of(&zeros, &[batch, tiles]),
            tile_logits_temporal: (stages >= 2).then(|| logits_of(&zeros, &[batch, tiles])),
            tile_logits_spatial: (stages >= 3).then(|| logits_of(&zeros, &[batch, tiles])),
            image_logit: logits_of(&vec![0.0; batch], &[batch]),
        }
    }

    fn all_negative_labels(tiles: usize) -> TileLabelVector {
        TileLabelVector {
            labels: vec![false; tiles],
            rows: 1,
            cols: tiles,
        }
    }

    #[test]
    fn hand_values_for_weighted_bce() {
        let ln2 = std::f64::consts::LN_2;
        let v = weighted_bce(&[0.5f64], &[true], 5.0).unwrap();
        assert!((v - 5.0 * ln2).abs() < 1e-12);
        let v = weighted_bce(&[0.5f64], &[false], 7.0).unwrap();
        assert!((v - ln2).abs() < 1e-12);
        // perfect predictions post-clamp: loss <= -ln(1 - eps) ~ 1e-7
        let v = weighted_bce(&[1.0f64, 0.0], &[true, false], 1.0).unwrap();
        assert!(v >= 0.0 && v <= -(1.0 - BCE_EPS).ln() + 1e-15, "got {v}");
        // w = 1 reduces to the unweighted mean form
        let probs = [0.3f64, 0.8, 0.6];
        let labels = [true, false, true];
        let w1 = weighted_bce(&probs, &labels, 1.0).unwrap();
        let manual = -(0.3f64.ln() + 0.2f64.ln() + 0.6f64.ln()) / 3.0;
        assert!((w1 - manual).abs() < 1e-12);
        assert!(weighted_bce::<f64>(&[], &[], 1.0).is_err());
    }

    #[test]
    fn all_half_flagship_example_is_136_ln2() {
        let tiles = 45;
        let outputs = half_prob_outputs(1, tiles, 3);
        let tl = all_negative_labels(tiles);
        let (_, b) = total_loss(
            &outputs,
            &[Some(&tl)],
            &[false],
            &LossWeights::default(),
            &[SupervisionSource::Contour],
        )
        .unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((b.image_term - ln2).abs() < 1e-9);
        assert_eq!(b.tile_terms.len(), 3);
        for t in &b.tile_terms {
            assert!((t - 45.0 * ln2).abs() < 1e-9);
        }
        assert!((b.total - 136.0 * ln2).abs() < 1e-6);
    }

    #[test]
    fn excluded_examples_contribute_image_term_only() {
        let tiles = 4;
        let outputs = half_prob_outputs(2, tiles, 2);
        let (_, b) = total_loss(
            &outputs,
            &[None, None],
            &[false, true],
            &LossWeights::default(),
            &[SupervisionSource::Excluded, SupervisionSource::Excluded],
        )
        .unwrap();
        assert!(b.tile_terms.is_empty());
        assert!((b.total - b.image_term).abs() < 1e-12);
    }

    #[test]
    fn missing_tile_labels_is_supervision_error() {
        let outputs = half_prob_outputs(1, 4, 1);
        let err = total_loss(
            &outputs,
            &[None],
            &[true],
            &LossWeights::default(),
            &[SupervisionSource::Contour],
        )
        .unwrap_err();
        assert!(matches!(err, ObjectiveError::MissingTileLabels(0)));
    }

    #[test]
    fn stage_removal_removes_exactly_that_term() {
        let tiles = 6;
        let tl = all_negative_labels(tiles);
        let three = half_prob_outputs(1, tiles, 3);
        let two = half_prob_outputs(1, tiles, 2);
        let w = LossWeights::default();
        let sup = [SupervisionSource::Contour];
        let (_, b3) = total_loss(&three, &[Some(&tl)], &[false], &w, &sup).unwrap();
        let (_, b2) = total_loss(&two, &[Some(&tl)], &[false], &w, &sup).unwrap();
        let removed = b3.total - b2.total;
        assert!((removed - b3.tile_terms[2]).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictions_give_near_zero_total() {
        let tiles = 3;
        let big = 40.0f64;
        let outputs = ModelOutputs {
            tile_logits_cnn: logits_of(&[big, -big, -big], &[1, tiles]),
            tile_logits_temporal: None,
            tile_logits_spatial: None,
            image_logit: logits_of(&[big], &[1]),
        };
        let tl = TileLabelVector {
            labels: vec![true, false, false],
            rows: 1,
            cols: 3,
        };
        let (_, b) = total_loss(
            &outputs,
            &[Some(&tl)],
            &[true],
            &LossWeights::default(),
            &[SupervisionSource::Contour],
        )
        .unwrap();
        assert!(b.total < 1e-5, "got {}", b.total);
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_clamp() {
        let probs = [0.12f64, 0.37, 0.55, 0.83, 0.49, 0.91];
        let labels = ArrayD::from_shape_vec(
            IxDyn(&[6]),
            vec![1.0f64, 0.0, 1.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        let p = Tensor::param(ArrayD::from_shape_vec(IxDyn(&[6]), probs.to_vec()).unwrap());
        let loss = weighted_bce_tensor(&p, &labels, 40.0);
        loss.backward();
        let grad = p.grad().unwrap();
        for i in 0..probs.len() {
            let h = 1e-6;
            let eval = |v: f64| {
                let mut shifted = probs.to_vec();
                shifted[i] = v;
                let pt = Tensor::constant(
                    ArrayD::from_shape_vec(IxDyn(&[6]), shifted).unwrap(),
                );
                no_grad(|| weighted_bce_tensor(&pt, &labels, 40.0)).item()
            };
            let fd = (eval(probs[i] + h) - eval(probs[i] - h)) / (2.0 * h);
            let an = grad[[i]];
            assert!(
                ((fd - an) / fd.abs().max(1.0)).abs() < 1e-5,
                "i={i}: {an} vs {fd}"
            );
        }
    }

    #[test]
    fn monotone_and_weight_scaling() {
        // loss strictly decreases as p rises toward a positive label
        let mut prev = f64::INFINITY;
        for p in [0.1f64, 0.3, 0.5, 0.7, 0.9] {
            let v = weighted_bce(&[p], &[true], 40.0).unwrap();
            assert!(v < prev);
            prev = v;
        }
        // doubling w doubles an all-positive batch, leaves all-negative alone
        let probs = [0.2f64, 0.4, 0.7];
        let pos = [true, true, true];
        let neg = [false, false, false];
        let a = weighted_bce(&probs, &pos, 10.0).unwrap();
        let b = weighted_bce(&probs, &pos, 20.0).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
        let a = weighted_bce(&probs, &neg, 10.0).unwrap();
        let b = weighted_bce(&probs, &neg, 20.0).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}
