use ndarray::{ArrayD, Axis, IxDyn, Slice};

use super::{reshaped, should_record};
use crate::{Scalar, Tensor};

pub fn reshape<T: Scalar>(a: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let out = reshaped(a.data().clone(), shape);
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    let orig = a.shape();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| {
            ah.accumulate_grad_owned(reshaped(g.clone(), &orig));
        }),
    )
}

pub fn permute<T: Scalar>(a: &Tensor<T>, axes: &[usize]) -> Tensor<T> {
    let out = a
        .data()
        .view()
        .permuted_axes(IxDyn(axes))
        .as_standard_layout()
        .into_owned();
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let mut inverse = vec![0usize; axes.len()];
    for (i, &ax) in axes.iter().enumerate() {
        inverse[ax] = i;
    }
    let ah = a.clone();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| {
            let gx = g
                .view()
                .permuted_axes(IxDyn(&inverse))
                .as_standard_layout()
                .into_owned();
            ah.accumulate_grad_owned(gx);
        }),
    )
}

pub fn concat<T: Scalar>(parts: &[Tensor<T>], axis: usize) -> Tensor<T> {
    assert!(!parts.is_empty(), "concat of zero tensors");
    let datas: Vec<_> = parts.iter().map(|p| p.data().clone()).collect();
    let views: Vec<_> = datas.iter().map(|d| d.view()).collect();
    let out = ndarray::concatenate(Axis(axis), &views).expect("concat shapes");
    let refs: Vec<&Tensor<T>> = parts.iter().collect();
    if !should_record(&refs) {
        return Tensor::constant(out);
    }
    let handles: Vec<Tensor<T>> = parts.to_vec();
    let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
    Tensor::from_op(
        out,
        parts.to_vec(),
        Box::new(move |g| {
            let mut off = 0usize;
            for (h, &sz) in handles.iter().zip(sizes.iter()) {
                let piece = g
                    .slice_axis(Axis(axis), Slice::from(off..off + sz))
                    .to_owned();
                h.accumulate_grad_owned(piece);
                off += sz;
            }
        }),
    )
}

pub fn slice_axis<T: Scalar>(a: &Tensor<T>, axis: usize, start: usize, len: usize) -> Tensor<T> {
    let out = a
        .data()
        .slice_axis(Axis(axis), Slice::from(start..start + len))
        .to_owned();
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
            gx.slice_axis_mut(Axis(axis), Slice::from(start..start + len))
                .assign(g);
            ah.accumulate_grad_owned(gx);
        }),
    )
}

/// Select one index along an axis, removing that axis.
pub fn index_axis<T: Scalar>(a: &Tensor<T>, axis: usize, index: usize) -> Tensor<T> {
    let sliced = slice_axis(a, axis, index, 1);
    let mut shape = a.shape();
    shape.remove(axis);
    reshape(&sliced, &shape)
}
