use ndarray::{ArrayD, Axis, IxDyn};

use super::should_record;
use crate::{Scalar, Tensor};

pub fn sum_all<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let total = a.data().sum();
    let out = ArrayD::from_elem(IxDyn(&[]), total);
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    let shape = a.shape();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| {
            let gv = *g.iter().next().expect("scalar grad");
            ah.accumulate_grad_owned(ArrayD::from_elem(IxDyn(&shape), gv));
        }),
    )
}

pub fn mean_all<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let n = T::of_usize(a.len());
    super::mul_scalar(&sum_all(a), T::one() / n)
}

/// Sum along one axis; the axis is removed from the output shape.
pub fn sum_axis<T: Scalar>(a: &Tensor<T>, axis: usize) -> Tensor<T> {
    let out = a.data().sum_axis(Axis(axis));
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    let shape = a.shape();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| {
            let expanded = g.clone().insert_axis(Axis(axis));
            let gfull = expanded
                .broadcast(IxDyn(&shape))
                .expect("grad broadcast")
                .to_owned();
            ah.accumulate_grad_owned(gfull);
        }),
    )
}

pub fn mean_axis<T: Scalar>(a: &Tensor<T>, axis: usize) -> Tensor<T> {
    let n = T::of_usize(a.shape()[axis]);
    super::mul_scalar(&sum_axis(a, axis), T::one() / n)
}

/// Max along one axis; gradient routes to the first maximal element of
/// each lane.
pub fn max_axis<T: Scalar>(a: &Tensor<T>, axis: usize) -> Tensor<T> {
    let data = a.data();
    let lane_len = data.shape()[axis];
    assert!(lane_len > 0, "max_axis over empty axis");
    let mut maxes = Vec::new();
    let mut arg = Vec::new();
    for lane in data.lanes(Axis(axis)) {
        let mut best = lane[0];
        let mut best_i = 0usize;
        for (i, &v) in lane.iter().enumerate().skip(1) {
            if v > best {
                best = v;
                best_i = i;
            }
        }
        maxes.push(best);
        arg.push(best_i);
    }
    let mut out_shape = data.shape().to_vec();
    out_shape.remove(axis);
    let out = ArrayD::from_shape_vec(IxDyn(&out_shape), maxes).expect("max shape");
    drop(data);
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    let shape = a.shape();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| {
            let mut gx = ArrayD::zeros(IxDyn(&shape));
            for ((mut lane, &gi), &idx) in gx
                .lanes_mut(Axis(axis))
                .into_iter()
                .zip(g.iter())
                .zip(arg.iter())
            {
                lane[idx] = gi;
            }
            ah.accumulate_grad_owned(gx);
        }),
    )
}

/// Elementwise sum of squared differences, reduced to a scalar. Convenience
/// used by tests and tiny regression fits.
pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &ArrayD<T>) -> Tensor<T> {
    let t = Tensor::constant(target.clone());
    let d = super::sub(pred, &t);
    let sq = super::mul(&d, &d);
    mean_all(&sq)
}
