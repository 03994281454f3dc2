use ndarray::{ArrayD, IxDyn};

use super::should_record;
use crate::{Scalar, Tensor};

/// Batch normalization over channel axis 1 of an (N, C, ...) tensor.
///
/// In training mode the batch statistics normalize the input and the running
/// buffers are updated in place (unbiased variance, same convention as the
/// usual deep-learning stacks). In eval mode the running buffers normalize.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut ArrayD<T>,
    running_var: &mut ArrayD<T>,
    training: bool,
    momentum: T,
    eps: T,
) -> Tensor<T> {
    let sh = x.shape();
    assert!(sh.len() >= 2, "batch_norm input rank >= 2");
    let (n, c) = (sh[0], sh[1]);
    let s: usize = sh[2..].iter().product::<usize>().max(1);
    let m = n * s;
    let data = x.data();
    let xs = data.as_slice().expect("standard layout");

    let (mu, var): (Vec<T>, Vec<T>) = if training {
        let mut mu = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ni in 0..n {
            for ci in 0..c {
                let seg = &xs[(ni * c + ci) * s..(ni * c + ci + 1) * s];
                let mut acc = T::zero();
                for &v in seg {
                    acc = acc + v;
                }
                mu[ci] = mu[ci] + acc;
            }
        }
        let inv_m = T::one() / T::of_usize(m);
        for v in mu.iter_mut() {
            *v = *v * inv_m;
        }
        for ni in 0..n {
            for ci in 0..c {
                let seg = &xs[(ni * c + ci) * s..(ni * c + ci + 1) * s];
                let mut acc = T::zero();
                for &v in seg {
                    let d = v - mu[ci];
                    acc = acc + d * d;
                }
                var[ci] = var[ci] + acc;
            }
        }
        for v in var.iter_mut() {
            *v = *v * inv_m;
        }
        // update running buffers with unbiased variance
        let unbias = if m > 1 {
            T::of_usize(m) / T::of_usize(m - 1)
        } else {
            T::one()
        };
        let rm = running_mean.as_slice_mut().expect("running mean layout");
        let rv = running_var.as_slice_mut().expect("running var layout");
        for ci in 0..c {
            rm[ci] = (T::one() - momentum) * rm[ci] + momentum * mu[ci];
            rv[ci] = (T::one() - momentum) * rv[ci] + momentum * var[ci] * unbias;
        }
        (mu, var)
    } else {
        (
            running_mean.as_slice().expect("rm layout").to_vec(),
            running_var.as_slice().expect("rv layout").to_vec(),
        )
    };

    let gd = gamma.data();
    let bd = beta.data();
    let gs = gd.as_slice().expect("gamma layout");
    let bs = bd.as_slice().expect("beta layout");
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut out = vec![T::zero(); n * c * s];
    for ni in 0..n {
        for ci in 0..c {
            let seg = &xs[(ni * c + ci) * s..(ni * c + ci + 1) * s];
            let dst = &mut out[(ni * c + ci) * s..(ni * c + ci + 1) * s];
            let (mu_c, is_c, g_c, b_c) = (mu[ci], inv_std[ci], gs[ci], bs[ci]);
            for (d, &v) in dst.iter_mut().zip(seg.iter()) {
                *d = (v - mu_c) * is_c * g_c + b_c;
            }
        }
    }
    drop(data);
    drop(gd);
    drop(bd);
    let out = ArrayD::from_shape_vec(IxDyn(&sh), out).unwrap();
    if !should_record(&[x, gamma, beta]) {
        return Tensor::constant(out);
    }

    let xh = x.clone();
    let gh = gamma.clone();
    let bh = beta.clone();
    let shape = sh.clone();
    Tensor::from_op(
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g| {
            let gsl = g.as_slice().expect("grad layout");
            let xd = xh.data();
            let xs = xd.as_slice().unwrap();
            let gad = gh.data();
            let ga = gad.as_slice().unwrap();
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            for ni in 0..n {
                for ci in 0..c {
                    let base = (ni * c + ci) * s;
                    let (mu_c, is_c) = (mu[ci], inv_std[ci]);
                    let mut s_g = T::zero();
                    let mut s_gx = T::zero();
                    for i in 0..s {
                        let gv = gsl[base + i];
                        let xhat = (xs[base + i] - mu_c) * is_c;
                        s_g = s_g + gv;
                        s_gx = s_gx + gv * xhat;
                    }
                    dbeta[ci] = dbeta[ci] + s_g;
                    dgamma[ci] = dgamma[ci] + s_gx;
                }
            }
            if xh.on_grad_path() {
                let inv_m = T::one() / T::of_usize(m);
                let mut gx = vec![T::zero(); n * c * s];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * s;
                        let (mu_c, is_c, g_c) = (mu[ci], inv_std[ci], ga[ci]);
                        let (db_c, dg_c) = (dbeta[ci], dgamma[ci]);
                        for i in 0..s {
                            let gv = gsl[base + i];
                            let xhat = (xs[base + i] - mu_c) * is_c;
                            gx[base + i] = if training {
                                g_c * is_c * (gv - db_c * inv_m - xhat * dg_c * inv_m)
                            } else {
                                g_c * is_c * gv
                            };
                        }
                    }
                }
                drop(xd);
                drop(gad);
                xh.accumulate_grad_owned(ArrayD::from_shape_vec(IxDyn(&shape), gx).unwrap());
            }
            gh.accumulate_grad_owned(ArrayD::from_shape_vec(IxDyn(&[c]), dgamma).unwrap());
            bh.accumulate_grad_owned(ArrayD::from_shape_vec(IxDyn(&[c]), dbeta).unwrap());
        }),
    )
}

/// Layer normalization over the last axis.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Tensor<T> {
    let sh = x.shape();
    let l = *sh.last().expect("layer_norm rank >= 1");
    let rows = x.len() / l;
    let data = x.data();
    let xs = data.as_slice().expect("standard layout");
    let gd = gamma.data();
    let bd = beta.data();
    let gw = gd.as_slice().expect("gamma layout");
    let bw = bd.as_slice().expect("beta layout");

    let mut mu = vec![T::zero(); rows];
    let mut inv_std = vec![T::zero(); rows];
    let mut out = vec![T::zero(); rows * l];
    let inv_l = T::one() / T::of_usize(l);
    for r in 0..rows {
        let seg = &xs[r * l..(r + 1) * l];
        let mut acc = T::zero();
        for &v in seg {
            acc = acc + v;
        }
        let m = acc * inv_l;
        let mut vacc = T::zero();
        for &v in seg {
            let d = v - m;
            vacc = vacc + d * d;
        }
        let is = T::one() / (vacc * inv_l + eps).sqrt();
        mu[r] = m;
        inv_std[r] = is;
        let dst = &mut out[r * l..(r + 1) * l];
        for i in 0..l {
            dst[i] = (seg[i] - m) * is * gw[i] + bw[i];
        }
    }
    drop(data);
    drop(gd);
    drop(bd);
    let out = ArrayD::from_shape_vec(IxDyn(&sh), out).unwrap();
    if !should_record(&[x, gamma, beta]) {
        return Tensor::constant(out);
    }
    let xh = x.clone();
    let gh = gamma.clone();
    let bh = beta.clone();
    let shape = sh.clone();
    Tensor::from_op(
        out,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g| {
            let gsl = g.as_slice().expect("grad layout");
            let xd = xh.data();
            let xs = xd.as_slice().unwrap();
            let gad = gh.data();
            let ga = gad.as_slice().unwrap();
            let inv_l = T::one() / T::of_usize(l);
            let mut dgamma = vec![T::zero(); l];
            let mut dbeta = vec![T::zero(); l];
            let mut gx = vec![T::zero(); rows * l];
            for r in 0..rows {
                let (m, is) = (mu[r], inv_std[r]);
                let xseg = &xs[r * l..(r + 1) * l];
                let gseg = &gsl[r * l..(r + 1) * l];
                let mut s1 = T::zero();
                let mut s2 = T::zero();
                for i in 0..l {
                    let xhat = (xseg[i] - m) * is;
                    let dxhat = gseg[i] * ga[i];
                    s1 = s1 + dxhat;
                    s2 = s2 + dxhat * xhat;
                    dgamma[i] = dgamma[i] + gseg[i] * xhat;
                    dbeta[i] = dbeta[i] + gseg[i];
                }
                let dst = &mut gx[r * l..(r + 1) * l];
                for i in 0..l {
                    let xhat = (xseg[i] - m) * is;
                    let dxhat = gseg[i] * ga[i];
                    dst[i] = is * (dxhat - s1 * inv_l - xhat * s2 * inv_l);
                }
            }
            drop(xd);
            drop(gad);
            if xh.on_grad_path() {
                xh.accumulate_grad_owned(ArrayD::from_shape_vec(IxDyn(&shape), gx).unwrap());
            }
            gh.accumulate_grad_owned(ArrayD::from_shape_vec(IxDyn(&[l]), dgamma).unwrap());
            bh.accumulate_grad_owned(ArrayD::from_shape_vec(IxDyn(&[l]), dbeta).unwrap());
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::sum_all;

    #[test]
    fn batch_norm_normalizes_batch() {
        let x = Tensor::param(ArrayD::from_shape_fn(IxDyn(&[4, 2, 3, 3]), |ix| {
            (ix[0] * 9 + ix[2] * 3 + ix[3]) as f64 * 0.1 + ix[1] as f64
        }));
        let gamma = Tensor::param(ArrayD::from_elem(IxDyn(&[2]), 1.0f64));
        let beta = Tensor::param(ArrayD::from_elem(IxDyn(&[2]), 0.0f64));
        let mut rm = ArrayD::zeros(IxDyn(&[2]));
        let mut rv = ArrayD::from_elem(IxDyn(&[2]), 1.0f64);
        let y = batch_norm(&x, &gamma, &beta, &mut rm, &mut rv, true, 0.1, 1e-5);
        // per-channel mean ~0, var ~1
        let yd = y.data();
        for ci in 0..2 {
            let mut acc = 0.0;
            let mut count = 0.0;
            for ni in 0..4 {
                for yy in 0..3 {
                    for xx in 0..3 {
                        acc += yd[[ni, ci, yy, xx]];
                        count += 1.0;
                    }
                }
            }
            assert!((acc / count).abs() < 1e-10);
        }
        drop(yd);
        sum_all(&y).backward();
        assert!(x.grad().is_some());
        assert!(gamma.grad().is_some());
        // running mean moved toward batch mean
        assert!(rm[[1]] > 0.0);
    }

    #[test]
    fn layer_norm_rows() {
        let x = Tensor::param(
            ArrayD::from_shape_vec(IxDyn(&[2, 4]), vec![1.0f64, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, 4.0])
                .unwrap(),
        );
        let gamma = Tensor::param(ArrayD::from_elem(IxDyn(&[4]), 1.0f64));
        let beta = Tensor::param(ArrayD::from_elem(IxDyn(&[4]), 0.0f64));
        let y = layer_norm(&x, &gamma, &beta, 1e-5);
        let yd = y.data();
        for r in 0..2 {
            let mean: f64 = (0..4).map(|i| yd[[r, i]]).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-10);
        }
        drop(yd);
        sum_all(&y).backward();
        assert_eq!(x.grad().unwrap().shape(), &[2, 4]);
    }
}
