use ndarray::{ArrayD, Zip};

use super::should_record;
use crate::{Scalar, Tensor};

/// Elementwise weighted binary cross-entropy terms:
///
///   term = -(w * y * ln(p~) + (1 - y) * ln(1 - p~))
///
/// where `p~` clamps `p` to `[eps, 1 - eps]` before the logarithms. Labels
/// are constants. The gradient is evaluated at the clamped probability (so
/// it stays bounded by w/eps) rather than zeroed where the clamp is active:
/// saturated sigmoid outputs must keep a recovery gradient or they die.
pub fn bce_terms<T: Scalar>(
    probs: &Tensor<T>,
    labels: &ArrayD<T>,
    pos_weight: T,
    eps: T,
) -> Tensor<T> {
    assert_eq!(
        probs.shape().as_slice(),
        labels.shape(),
        "probability/label shape mismatch"
    );
    let hi = T::one() - eps;
    let term = |p: T, y: T| {
        let pc = p.max(eps).min(hi);
        -(pos_weight * y * pc.ln() + (T::one() - y) * (T::one() - pc).ln())
    };
    let out = Zip::from(&*probs.data())
        .and(labels)
        .map_collect(|&p, &y| term(p, y));
    if !should_record(&[probs]) {
        return Tensor::constant(out);
    }
    let ph = probs.clone();
    let labels = labels.clone();
    Tensor::from_op(
        out,
        vec![probs.clone()],
        Box::new(move |g| {
            let pd = ph.data();
            let gx = Zip::from(g)
                .and(&*pd)
                .and(&labels)
                .map_collect(|&gv, &p, &y| {
                    let pc = p.max(eps).min(hi);
                    gv * (-(pos_weight * y / pc) + (T::one() - y) / (T::one() - pc))
                });
            drop(pd);
            ph.accumulate_grad_owned(gx);
        }),
    )
}

/// The same weighted binary cross-entropy evaluated directly from logits:
///
///   term = w * y * softplus(-z) + (1 - y) * softplus(z)
///
/// Value-identical to `bce_terms(sigmoid(z), ...)` wherever the probability
/// clamp is inactive, but the gradient (y: -w*sigmoid(-z), else sigmoid(z))
/// is bounded by the weight and never vanishes at saturation. Training goes
/// through this form.
pub fn bce_logit_terms<T: Scalar>(
    logits: &Tensor<T>,
    labels: &ArrayD<T>,
    pos_weight: T,
) -> Tensor<T> {
    assert_eq!(
        logits.shape().as_slice(),
        labels.shape(),
        "logit/label shape mismatch"
    );
    let softplus = |z: T| {
        // ln(1 + e^z), stable on both tails
        if z > T::zero() {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        }
    };
    let out = Zip::from(&*logits.data())
        .and(labels)
        .map_collect(|&z, &y| pos_weight * y * softplus(-z) + (T::one() - y) * softplus(z));
    if !should_record(&[logits]) {
        return Tensor::constant(out);
    }
    let zh = logits.clone();
    let labels = labels.clone();
    Tensor::from_op(
        out,
        vec![logits.clone()],
        Box::new(move |g| {
            let zd = zh.data();
            let sig = |z: T| {
                if z >= T::zero() {
                    T::one() / (T::one() + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (T::one() + e)
                }
            };
            let gx = Zip::from(g)
                .and(&*zd)
                .and(&labels)
                .map_collect(|&gv, &z, &y| {
                    gv * (-(pos_weight * y * sig(-z)) + (T::one() - y) * sig(z))
                });
            drop(zd);
            zh.accumulate_grad_owned(gx);
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{mean_all, sigmoid, sum_all};
    use ndarray::IxDyn;

    #[test]
    fn matches_hand_values() {
        let p = Tensor::constant(ArrayD::from_elem(IxDyn(&[1]), 0.5f64));
        let y1 = ArrayD::from_elem(IxDyn(&[1]), 1.0f64);
        let y0 = ArrayD::from_elem(IxDyn(&[1]), 0.0f64);
        let w5 = bce_terms(&p, &y1, 5.0, 1e-7);
        assert!((w5.item() - 5.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let neg = bce_terms(&p, &y0, 5.0, 1e-7);
        assert!((neg.item() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn positive_weight_touches_positives_only() {
        let p = Tensor::constant(
            ArrayD::from_shape_vec(IxDyn(&[2]), vec![0.3f64, 0.7]).unwrap(),
        );
        let y = ArrayD::from_shape_vec(IxDyn(&[2]), vec![0.0f64, 0.0]).unwrap();
        let a = mean_all(&bce_terms(&p, &y, 1.0, 1e-7));
        let b = mean_all(&bce_terms(&p, &y, 40.0, 1e-7));
        assert!((a.item() - b.item()).abs() < 1e-15);
    }

    #[test]
    fn logit_form_matches_probability_form_in_range() {
        let zs = [-8.0f64, -2.0, -0.5, 0.0, 0.7, 3.0, 9.0];
        let ys = [1.0f64, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let labels = ArrayD::from_shape_vec(IxDyn(&[7]), ys.to_vec()).unwrap();
        let z = Tensor::param(ArrayD::from_shape_vec(IxDyn(&[7]), zs.to_vec()).unwrap());
        let via_logits = bce_logit_terms(&z, &labels, 40.0);
        let via_probs = bce_terms(&sigmoid(&z), &labels, 40.0, 1e-7);
        for (a, b) in via_logits.data().iter().zip(via_probs.data().iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // gradient at deep saturation stays finite and pulls the right way
        let z = Tensor::param(ArrayD::from_elem(IxDyn(&[1]), -500.0f64));
        let y1 = ArrayD::from_elem(IxDyn(&[1]), 1.0f64);
        sum_all(&bce_logit_terms(&z, &y1, 40.0)).backward();
        let g = z.grad().unwrap()[[0]];
        assert!((g + 40.0).abs() < 1e-9, "recovery gradient {g}");
    }

    #[test]
    fn gradient_flows_to_probs() {
        let p = Tensor::param(ArrayD::from_elem(IxDyn(&[3]), 0.4f64));
        let y = ArrayD::from_shape_vec(IxDyn(&[3]), vec![1.0f64, 0.0, 1.0]).unwrap();
        sum_all(&bce_terms(&p, &y, 2.0, 1e-7)).backward();
        let g = p.grad().unwrap();
        // positive label: -w/p = -5; negative label: 1/(1-p) = 1.666...
        assert!((g[[0]] + 5.0).abs() < 1e-12);
        assert!((g[[1]] - 1.0 / 0.6).abs() < 1e-12);
    }
}
