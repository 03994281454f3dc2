use ndarray::{ArrayD, Axis, IxDyn, Zip};

use super::{reshaped, should_record};
use crate::{Scalar, Tensor};

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let nd = a.len().max(b.len());
    let mut out = vec![0usize; nd];
    for i in 0..nd {
        let da = if i < nd - a.len() { 1 } else { a[i - (nd - a.len())] };
        let db = if i < nd - b.len() { 1 } else { b[i - (nd - b.len())] };
        assert!(
            da == db || da == 1 || db == 1,
            "shapes {a:?} and {b:?} are not broadcastable"
        );
        out[i] = da.max(db);
    }
    out
}

pub(crate) fn broadcast_zip<T: Scalar>(
    a: &ArrayD<T>,
    b: &ArrayD<T>,
    f: impl Fn(T, T) -> T,
) -> ArrayD<T> {
    let shape = broadcast_shape(a.shape(), b.shape());
    let av = a.broadcast(IxDyn(&shape)).expect("lhs broadcast");
    let bv = b.broadcast(IxDyn(&shape)).expect("rhs broadcast");
    Zip::from(&av).and(&bv).map_collect(|&x, &y| f(x, y))
}

/// Sum `g` down to `target` shape, undoing numpy-style broadcasting.
pub(crate) fn reduce_to_shape<T: Scalar>(g: &ArrayD<T>, target: &[usize]) -> ArrayD<T> {
    if g.shape() == target {
        return g.clone();
    }
    let gnd = g.ndim();
    let mut padded = vec![1usize; gnd - target.len()];
    padded.extend_from_slice(target);
    let mut cur = g.clone();
    for ax in 0..gnd {
        if padded[ax] == 1 && cur.shape()[ax] != 1 {
            cur = cur.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    reshaped(cur, target)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let out = broadcast_zip(&a.data(), &b.data(), |x, y| x + y);
    if !should_record(&[a, b]) {
        return Tensor::constant(out);
    }
    let (ah, bh) = (a.clone(), b.clone());
    let (asp, bsp) = (a.shape(), b.shape());
    Tensor::from_op(
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            ah.accumulate_grad_owned(reduce_to_shape(g, &asp));
            bh.accumulate_grad_owned(reduce_to_shape(g, &bsp));
        }),
    )
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let out = broadcast_zip(&a.data(), &b.data(), |x, y| x - y);
    if !should_record(&[a, b]) {
        return Tensor::constant(out);
    }
    let (ah, bh) = (a.clone(), b.clone());
    let (asp, bsp) = (a.shape(), b.shape());
    Tensor::from_op(
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            ah.accumulate_grad_owned(reduce_to_shape(g, &asp));
            bh.accumulate_grad_owned(reduce_to_shape(&g.mapv(|v| -v), &bsp));
        }),
    )
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let out = broadcast_zip(&a.data(), &b.data(), |x, y| x * y);
    if !should_record(&[a, b]) {
        return Tensor::constant(out);
    }
    let (ah, bh) = (a.clone(), b.clone());
    let (asp, bsp) = (a.shape(), b.shape());
    Tensor::from_op(
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let ga = broadcast_zip(g, &bh.data(), |gv, bv| gv * bv);
            ah.accumulate_grad_owned(reduce_to_shape(&ga, &asp));
            let gb = broadcast_zip(g, &ah.data(), |gv, av| gv * av);
            bh.accumulate_grad_owned(reduce_to_shape(&gb, &bsp));
        }),
    )
}

pub fn div<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let out = broadcast_zip(&a.data(), &b.data(), |x, y| x / y);
    if !should_record(&[a, b]) {
        return Tensor::constant(out);
    }
    let (ah, bh) = (a.clone(), b.clone());
    let (asp, bsp) = (a.shape(), b.shape());
    Tensor::from_op(
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let ga = broadcast_zip(g, &bh.data(), |gv, bv| gv / bv);
            ah.accumulate_grad_owned(reduce_to_shape(&ga, &asp));
            let num = broadcast_zip(g, &ah.data(), |gv, av| gv * av);
            let gb = broadcast_zip(&num, &bh.data(), |nv, bv| -nv / (bv * bv));
            bh.accumulate_grad_owned(reduce_to_shape(&gb, &bsp));
        }),
    )
}

pub fn neg<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    mul_scalar(a, -T::one())
}

pub fn add_scalar<T: Scalar>(a: &Tensor<T>, s: T) -> Tensor<T> {
    let out = a.data().mapv(|x| x + s);
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| ah.accumulate_grad(g)),
    )
}

pub fn mul_scalar<T: Scalar>(a: &Tensor<T>, s: T) -> Tensor<T> {
    let out = a.data().mapv(|x| x * s);
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| ah.accumulate_grad_owned(g.mapv(|v| v * s))),
    )
}

pub fn sqrt<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let out = a.data().mapv(T::sqrt);
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    let half = T::of_f64(0.5);
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| {
            let x = ah.data();
            let ga = Zip::from(g)
                .and(&*x)
                .map_collect(|&gv, &xv| gv * half / xv.sqrt());
            drop(x);
            ah.accumulate_grad_owned(ga);
        }),
    )
}

/// Elementwise clamp; gradient passes through where `lo <= x <= hi`.
pub fn clamp<T: Scalar>(a: &Tensor<T>, lo: T, hi: T) -> Tensor<T> {
    let out = a.data().mapv(|x| x.max(lo).min(hi));
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| {
            let x = ah.data();
            let ga = Zip::from(g).and(&*x).map_collect(|&gv, &xv| {
                if xv >= lo && xv <= hi {
                    gv
                } else {
                    T::zero()
                }
            });
            drop(x);
            ah.accumulate_grad_owned(ga);
        }),
    )
}
