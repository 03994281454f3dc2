use ndarray::{ArrayD, IxDyn};

use super::{conv2d_out_dim, should_record};
use crate::{Scalar, Tensor};

/// Max pooling over (N, C, H, W); gradient routes to the argmax of each
/// window (first occurrence on ties).
pub fn max_pool2d<T: Scalar>(
    x: &Tensor<T>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor<T> {
    let sh = x.shape();
    assert_eq!(sh.len(), 4, "max_pool2d input rank 4");
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let ho = conv2d_out_dim(h, kernel, stride, padding);
    let wo = conv2d_out_dim(w, kernel, stride, padding);
    let data = x.data();
    let xs = data.as_slice().expect("standard layout");
    let mut out = vec![T::zero(); n * c * ho * wo];
    let mut arg = vec![0usize; n * c * ho * wo];
    for nc in 0..n * c {
        let chan = &xs[nc * h * w..(nc + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = T::neg_infinity();
                let mut best_i = 0usize;
                for ky in 0..kernel {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kernel {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let idx = iy as usize * w + ix as usize;
                        if chan[idx] > best {
                            best = chan[idx];
                            best_i = idx;
                        }
                    }
                }
                out[nc * ho * wo + oy * wo + ox] = best;
                arg[nc * ho * wo + oy * wo + ox] = best_i;
            }
        }
    }
    drop(data);
    let out = ArrayD::from_shape_vec(IxDyn(&[n, c, ho, wo]), out).unwrap();
    if !should_record(&[x]) {
        return Tensor::constant(out);
    }
    let xh = x.clone();
    Tensor::from_op(
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let gs = g.as_slice().expect("standard grad");
            let mut gx = vec![T::zero(); n * c * h * w];
            for nc in 0..n * c {
                for oi in 0..ho * wo {
                    let src = gs[nc * ho * wo + oi];
                    let dst = nc * h * w + arg[nc * ho * wo + oi];
                    gx[dst] = gx[dst] + src;
                }
            }
            xh.accumulate_grad_owned(ArrayD::from_shape_vec(IxDyn(&[n, c, h, w]), gx).unwrap());
        }),
    )
}

/// Average pooling with non-overlapping or strided windows; padding is not
/// supported (all uses here pool exact windows).
pub fn avg_pool2d<T: Scalar>(x: &Tensor<T>, kernel: usize, stride: usize) -> Tensor<T> {
    let sh = x.shape();
    assert_eq!(sh.len(), 4, "avg_pool2d input rank 4");
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let ho = (h - kernel) / stride + 1;
    let wo = (w - kernel) / stride + 1;
    let inv = T::one() / T::of_usize(kernel * kernel);
    let data = x.data();
    let xs = data.as_slice().expect("standard layout");
    let mut out = vec![T::zero(); n * c * ho * wo];
    for nc in 0..n * c {
        let chan = &xs[nc * h * w..(nc + 1) * h * w];
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = T::zero();
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        acc = acc + chan[(oy * stride + ky) * w + ox * stride + kx];
                    }
                }
                out[nc * ho * wo + oy * wo + ox] = acc * inv;
            }
        }
    }
    drop(data);
    let out = ArrayD::from_shape_vec(IxDyn(&[n, c, ho, wo]), out).unwrap();
    if !should_record(&[x]) {
        return Tensor::constant(out);
    }
    let xh = x.clone();
    Tensor::from_op(
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let gs = g.as_slice().expect("standard grad");
            let mut gx = vec![T::zero(); n * c * h * w];
            for nc in 0..n * c {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let gv = gs[nc * ho * wo + oy * wo + ox] * inv;
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                let di = nc * h * w + (oy * stride + ky) * w + ox * stride + kx;
                                gx[di] = gx[di] + gv;
                            }
                        }
                    }
                }
            }
            xh.accumulate_grad_owned(ArrayD::from_shape_vec(IxDyn(&[n, c, h, w]), gx).unwrap());
        }),
    )
}

fn adaptive_bounds(i: usize, input: usize, output: usize) -> (usize, usize) {
    let lo = i * input / output;
    let hi = ((i + 1) * input).div_ceil(output);
    (lo, hi)
}

/// Adaptive average pooling to an exact output size, with the floor/ceil
/// window convention.
pub fn adaptive_avg_pool2d<T: Scalar>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let sh = x.shape();
    assert_eq!(sh.len(), 4, "adaptive_avg_pool2d input rank 4");
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let data = x.data();
    let xs = data.as_slice().expect("standard layout");
    let mut out = vec![T::zero(); n * c * out_h * out_w];
    for nc in 0..n * c {
        let chan = &xs[nc * h * w..(nc + 1) * h * w];
        for oy in 0..out_h {
            let (y0, y1) = adaptive_bounds(oy, h, out_h);
            for ox in 0..out_w {
                let (x0, x1) = adaptive_bounds(ox, w, out_w);
                let mut acc = T::zero();
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        acc = acc + chan[iy * w + ix];
                    }
                }
                out[nc * out_h * out_w + oy * out_w + ox] =
                    acc / T::of_usize((y1 - y0) * (x1 - x0));
            }
        }
    }
    drop(data);
    let out = ArrayD::from_shape_vec(IxDyn(&[n, c, out_h, out_w]), out).unwrap();
    if !should_record(&[x]) {
        return Tensor::constant(out);
    }
    let xh = x.clone();
    Tensor::from_op(
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let gs = g.as_slice().expect("standard grad");
            let mut gx = vec![T::zero(); n * c * h * w];
            for nc in 0..n * c {
                for oy in 0..out_h {
                    let (y0, y1) = adaptive_bounds(oy, h, out_h);
                    for ox in 0..out_w {
                        let (x0, x1) = adaptive_bounds(ox, w, out_w);
                        let gv = gs[nc * out_h * out_w + oy * out_w + ox]
                            / T::of_usize((y1 - y0) * (x1 - x0));
                        for iy in y0..y1 {
                            for ix in x0..x1 {
                                let di = nc * h * w + iy * w + ix;
                                gx[di] = gx[di] + gv;
                            }
                        }
                    }
                }
            }
            xh.accumulate_grad_owned(ArrayD::from_shape_vec(IxDyn(&[n, c, h, w]), gx).unwrap());
        }),
    )
}

/// Mean over every axis after the channel axis: (N, C, ...) -> (N, C).
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let sh = x.shape();
    assert!(sh.len() >= 3, "global pool wants spatial axes");
    let (n, c) = (sh[0], sh[1]);
    let spatial: usize = sh[2..].iter().product();
    let inv = T::one() / T::of_usize(spatial);
    let data = x.data();
    let xs = data.as_slice().expect("standard layout");
    let mut out = vec![T::zero(); n * c];
    for (i, o) in out.iter_mut().enumerate() {
        let seg = &xs[i * spatial..(i + 1) * spatial];
        let mut acc = T::zero();
        for &v in seg {
            acc = acc + v;
        }
        *o = acc * inv;
    }
    drop(data);
    let out = ArrayD::from_shape_vec(IxDyn(&[n, c]), out).unwrap();
    if !should_record(&[x]) {
        return Tensor::constant(out);
    }
    let xh = x.clone();
    let full = sh.clone();
    Tensor::from_op(
        out,
        vec![x.clone()],
        Box::new(move |g| {
            let gs = g.as_slice().expect("standard grad");
            let mut gx = vec![T::zero(); n * c * spatial];
            for i in 0..n * c {
                let gv = gs[i] * inv;
                for v in gx[i * spatial..(i + 1) * spatial].iter_mut() {
                    *v = gv;
                }
            }
            xh.accumulate_grad_owned(ArrayD::from_shape_vec(IxDyn(&full), gx).unwrap());
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::sum_all;

    #[test]
    fn max_pool_picks_maxima() {
        let x = Tensor::param(
            ArrayD::from_shape_vec(
                IxDyn(&[1, 1, 4, 4]),
                vec![
                    1.0f64, 2.0, 0.0, 0.0, 3.0, 4.0, 0.0, 1.0, 0.0, 0.0, 9.0, 8.0, 0.0, 0.0, 7.0,
                    6.0,
                ],
            )
            .unwrap(),
        );
        let y = max_pool2d(&x, 2, 2, 0);
        assert_eq!(y.data().as_slice().unwrap(), &[4.0, 1.0, 0.0, 9.0]);
        sum_all(&y).backward();
        let g = x.grad().unwrap();
        assert_eq!(g[[0, 0, 1, 1]], 1.0);
        assert_eq!(g[[0, 0, 2, 2]], 1.0);
        assert_eq!(g[[0, 0, 0, 0]], 0.0);
    }

    #[test]
    fn adaptive_pool_uneven_windows() {
        // 7 -> 4 gives window sizes 2,2,2,1 starting at 0,1,3,5
        let x = Tensor::constant(ArrayD::from_shape_fn(IxDyn(&[1, 1, 7, 7]), |ix| {
            (ix[2] * 7 + ix[3]) as f64
        }));
        let y = adaptive_avg_pool2d(&x, 4, 4);
        assert_eq!(y.shape(), vec![1, 1, 4, 4]);
        let (lo, hi) = adaptive_bounds(3, 7, 4);
        assert_eq!((lo, hi), (5, 7));
    }

    #[test]
    fn global_pool_means() {
        let x = Tensor::param(ArrayD::from_shape_fn(IxDyn(&[2, 3, 2, 2]), |ix| {
            ix[0] as f64 + 1.0
        }));
        let y = global_avg_pool(&x);
        assert_eq!(y.shape(), vec![2, 3]);
        assert_eq!(y.data()[[0, 0]], 1.0);
        assert_eq!(y.data()[[1, 2]], 2.0);
        sum_all(&y).backward();
        assert!((x.grad().unwrap()[[0, 0, 0, 0]] - 0.25).abs() < 1e-12);
    }
}
