use ndarray::{Array2, Array3, ArrayD, ArrayView2, Ix2, Ix3, IxDyn};

use super::{reshaped, should_record};
use crate::{Scalar, Tensor};

fn as2<T: Scalar>(a: &ArrayD<T>) -> ArrayView2<'_, T> {
    a.view().into_dimensionality::<Ix2>().expect("rank-2 tensor")
}

/// (m, k) x (k, n) -> (m, n)
pub fn matmul2<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let out = as2(&a.data()).dot(&as2(&b.data())).into_dyn();
    if !should_record(&[a, b]) {
        return Tensor::constant(out);
    }
    let (ah, bh) = (a.clone(), b.clone());
    Tensor::from_op(
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let g2 = as2(g);
            {
                let bd = bh.data();
                let ga = g2.dot(&as2(&bd).t()).into_dyn();
                drop(bd);
                ah.accumulate_grad_owned(ga);
            }
            {
                let ad = ah.data();
                let gb = as2(&ad).t().dot(&g2).into_dyn();
                drop(ad);
                bh.accumulate_grad_owned(gb);
            }
        }),
    )
}

/// Batched matmul: (B, m, k) x (B, k, n) -> (B, m, n)
pub fn bmm<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (ad, bd) = (a.data(), b.data());
    let a3 = ad.view().into_dimensionality::<Ix3>().expect("rank-3 lhs");
    let b3 = bd.view().into_dimensionality::<Ix3>().expect("rank-3 rhs");
    let (bs, m, k) = a3.dim();
    let (bs2, k2, n) = b3.dim();
    assert_eq!(bs, bs2, "bmm batch mismatch");
    assert_eq!(k, k2, "bmm inner dim mismatch");
    let mut out = Array3::<T>::zeros((bs, m, n));
    for i in 0..bs {
        out.index_axis_mut(ndarray::Axis(0), i)
            .assign(&a3.index_axis(ndarray::Axis(0), i).dot(&b3.index_axis(ndarray::Axis(0), i)));
    }
    drop(ad);
    drop(bd);
    let out = out.into_dyn();
    if !should_record(&[a, b]) {
        return Tensor::constant(out);
    }
    let (ah, bh) = (a.clone(), b.clone());
    Tensor::from_op(
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g| {
            let g3 = g.view().into_dimensionality::<Ix3>().expect("rank-3 grad");
            let (bs, m, _n) = g3.dim();
            let ad = ah.data();
            let bd = bh.data();
            let a3 = ad.view().into_dimensionality::<Ix3>().unwrap();
            let b3 = bd.view().into_dimensionality::<Ix3>().unwrap();
            let k = a3.dim().2;
            let n = b3.dim().2;
            let mut ga = Array3::<T>::zeros((bs, m, k));
            let mut gb = Array3::<T>::zeros((bs, k, n));
            for i in 0..bs {
                let gi = g3.index_axis(ndarray::Axis(0), i);
                ga.index_axis_mut(ndarray::Axis(0), i)
                    .assign(&gi.dot(&b3.index_axis(ndarray::Axis(0), i).t()));
                gb.index_axis_mut(ndarray::Axis(0), i)
                    .assign(&a3.index_axis(ndarray::Axis(0), i).t().dot(&gi));
            }
            drop(ad);
            drop(bd);
            ah.accumulate_grad_owned(ga.into_dyn());
            bh.accumulate_grad_owned(gb.into_dyn());
        }),
    )
}

/// Fused affine map: y = x . W^T + b, where x is (..., in), W is (out, in)
/// and b is (out). Leading axes of x are preserved.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Tensor<T> {
    let xshape = x.shape();
    let in_dim = *xshape.last().expect("linear input rank >= 1");
    let rows: usize = xshape[..xshape.len() - 1].iter().product();
    let (w_out, w_in) = {
        let wd = w.data();
        let w2 = as2(&wd);
        (w2.nrows(), w2.ncols())
    };
    assert_eq!(in_dim, w_in, "linear width mismatch");

    let x2d: Array2<T> = {
        let xd = x.data();
        reshaped(xd.clone(), &[rows, in_dim])
            .into_dimensionality::<Ix2>()
            .unwrap()
    };
    let mut y2 = {
        let wd = w.data();
        x2d.dot(&as2(&wd).t())
    };
    if let Some(bias) = b {
        let bd = bias.data();
        let b1 = bd.view().into_dimensionality::<ndarray::Ix1>().expect("bias rank 1");
        for mut row in y2.rows_mut() {
            row += &b1;
        }
    }
    let mut out_shape = xshape[..xshape.len() - 1].to_vec();
    out_shape.push(w_out);
    let out = reshaped(y2.into_dyn(), &out_shape);

    let mut inputs: Vec<&Tensor<T>> = vec![x, w];
    if let Some(bias) = b {
        inputs.push(bias);
    }
    if !should_record(&inputs) {
        return Tensor::constant(out);
    }
    let xh = x.clone();
    let wh = w.clone();
    let bh = b.cloned();
    let parents: Vec<Tensor<T>> = inputs.into_iter().cloned().collect();
    Tensor::from_op(
        out,
        parents,
        Box::new(move |g| {
            let g2: Array2<T> = reshaped(g.clone(), &[rows, w_out])
                .into_dimensionality::<Ix2>()
                .unwrap();
            {
                let wd = wh.data();
                let gx2 = g2.dot(&as2(&wd));
                drop(wd);
                xh.accumulate_grad_owned(reshaped(gx2.into_dyn(), &xh.shape()));
            }
            {
                let xd = xh.data();
                let x2d: Array2<T> = reshaped(xd.clone(), &[rows, in_dim])
                    .into_dimensionality::<Ix2>()
                    .unwrap();
                drop(xd);
                let gw = g2.t().dot(&x2d);
                wh.accumulate_grad_owned(gw.into_dyn());
            }
            if let Some(bias) = &bh {
                let gb = g2.sum_axis(ndarray::Axis(0));
                bias.accumulate_grad_owned(gb.into_dyn());
            }
        }),
    )
}

#[allow(unused)]
fn ixdyn(shape: &[usize]) -> IxDyn {
    IxDyn(shape)
}
