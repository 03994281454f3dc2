use ndarray::{ArrayD, ArrayView2, ArrayViewMut2, IxDyn};

use super::should_record;
use crate::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl Conv2dSpec {
    pub fn new(stride: usize, padding: usize) -> Self {
        Conv2dSpec {
            stride: (stride, stride),
            padding: (padding, padding),
            groups: 1,
        }
    }

    pub fn grouped(stride: usize, padding: usize, groups: usize) -> Self {
        Conv2dSpec {
            stride: (stride, stride),
            padding: (padding, padding),
            groups,
        }
    }
}

pub fn conv2d_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Cap on the transient patch-matrix size; batches are processed in chunks
/// of images whose columns concatenate into one GEMM of this many scalars.
const COL_BUDGET: usize = 16 << 20; // 16M scalars = 64 MB f32

fn chunk_len(k_dim: usize, p: usize, n: usize) -> usize {
    (COL_BUDGET / (k_dim * p).max(1)).clamp(1, n.max(1))
}

struct ConvDims {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

/// Unpack `count` images' worth of patches into one (K, count*P) matrix:
/// image i occupies columns [i*P, (i+1)*P).
#[allow(clippy::too_many_arguments)]
fn im2col_run<T: Scalar>(
    xs: &[T],
    first: usize,
    count: usize,
    group: usize,
    d: &ConvDims,
    spec: Conv2dSpec,
    col: &mut [T],
) {
    let g = spec.groups;
    let cg = d.cin / g;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let p = d.ho * d.wo;
    let run_p = count * p;
    col.fill(T::zero());
    for (slot, ni) in (first..first + count).enumerate() {
        let chans = &xs[(ni * d.cin + group * cg) * d.h * d.w
            ..(ni * d.cin + (group + 1) * cg) * d.h * d.w];
        for c in 0..cg {
            let chan = &chans[c * d.h * d.w..(c + 1) * d.h * d.w];
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let row = (c * d.kh + ky) * d.kw + kx;
                    let dst = &mut col[row * run_p + slot * p..row * run_p + (slot + 1) * p];
                    for oy in 0..d.ho {
                        let iy = (oy * sh + ky) as isize - ph as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        let ox_lo = pw.saturating_sub(kx).div_ceil(sw).min(d.wo);
                        let ox_hi = if d.w + pw > kx {
                            (((d.w + pw - kx - 1) / sw) + 1).min(d.wo)
                        } else {
                            0
                        };
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        let src_base = iy * d.w;
                        if sw == 1 {
                            let ix0 = ox_lo + kx - pw;
                            let len = ox_hi - ox_lo;
                            dst[oy * d.wo + ox_lo..oy * d.wo + ox_lo + len]
                                .copy_from_slice(&chan[src_base + ix0..src_base + ix0 + len]);
                        } else {
                            for ox in ox_lo..ox_hi {
                                dst[oy * d.wo + ox] = chan[src_base + ox * sw + kx - pw];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add a (K, count*P) column gradient back onto the images of one
/// chunk.
#[allow(clippy::too_many_arguments)]
fn col2im_run<T: Scalar>(
    col: &[T],
    first: usize,
    count: usize,
    group: usize,
    d: &ConvDims,
    spec: Conv2dSpec,
    gx: &mut [T],
) {
    let g = spec.groups;
    let cg = d.cin / g;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let p = d.ho * d.wo;
    let run_p = count * p;
    for (slot, ni) in (first..first + count).enumerate() {
        let chans = &mut gx[(ni * d.cin + group * cg) * d.h * d.w
            ..(ni * d.cin + (group + 1) * cg) * d.h * d.w];
        for c in 0..cg {
            let chan = &mut chans[c * d.h * d.w..(c + 1) * d.h * d.w];
            for ky in 0..d.kh {
                for kx in 0..d.kw {
                    let row = (c * d.kh + ky) * d.kw + kx;
                    let src = &col[row * run_p + slot * p..row * run_p + (slot + 1) * p];
                    for oy in 0..d.ho {
                        let iy = (oy * sh + ky) as isize - ph as isize;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        let ox_lo = pw.saturating_sub(kx).div_ceil(sw).min(d.wo);
                        let ox_hi = if d.w + pw > kx {
                            (((d.w + pw - kx - 1) / sw) + 1).min(d.wo)
                        } else {
                            0
                        };
                        for ox in ox_lo..ox_hi {
                            let ix = ox * sw + kx - pw;
                            chan[iy * d.w + ix] = chan[iy * d.w + ix] + src[oy * d.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn with_slice<T: Scalar, R>(a: &ArrayD<T>, f: impl FnOnce(&[T]) -> R) -> R {
    match a.as_slice() {
        Some(s) => f(s),
        None => {
            let owned = a.as_standard_layout().into_owned();
            f(owned.as_slice().expect("standard layout"))
        }
    }
}

/// Gather one chunk's output gradient into (cog, count*P) layout: the
/// stored layout is per-image (n, cout, P), so image columns interleave.
fn gather_gout<T: Scalar>(
    gs: &[T],
    first: usize,
    count: usize,
    group: usize,
    cout: usize,
    cog: usize,
    p: usize,
    buf: &mut [T],
) {
    let run_p = count * p;
    for (slot, ni) in (first..first + count).enumerate() {
        for co in 0..cog {
            let src = &gs[(ni * cout + group * cog + co) * p..(ni * cout + group * cog + co + 1) * p];
            buf[co * run_p + slot * p..co * run_p + (slot + 1) * p].copy_from_slice(src);
        }
    }
}

/// 2-D convolution over (N, Cin, H, W) with weight (Cout, Cin/groups, kh, kw).
///
/// Patch matrices are built across a chunk of images so each GEMM is large
/// even when individual feature maps are small.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    spec: Conv2dSpec,
) -> Tensor<T> {
    let (xsh, wsh) = (x.shape(), w.shape());
    assert_eq!(xsh.len(), 4, "conv2d input rank 4");
    assert_eq!(wsh.len(), 4, "conv2d weight rank 4");
    let d = ConvDims {
        n: xsh[0],
        cin: xsh[1],
        h: xsh[2],
        w: xsh[3],
        cout: wsh[0],
        kh: wsh[2],
        kw: wsh[3],
        ho: conv2d_out_dim(xsh[2], wsh[2], spec.stride.0, spec.padding.0),
        wo: conv2d_out_dim(xsh[3], wsh[3], spec.stride.1, spec.padding.1),
    };
    assert_eq!(d.cin, wsh[1] * spec.groups, "channel/groups mismatch");
    assert_eq!(d.cout % spec.groups, 0, "cout divisible by groups");
    let g = spec.groups;
    let (cg, cog) = (d.cin / g, d.cout / g);
    let k_dim = cg * d.kh * d.kw;
    let p = d.ho * d.wo;
    let chunk = chunk_len(k_dim, p, d.n);

    let mut out = vec![T::zero(); d.n * d.cout * p];
    {
        let xd = x.data();
        let wd = w.data();
        let bd = b.map(|bb| bb.data());
        with_slice(&xd, |xs| {
            with_slice(&wd, |ws| {
                let mut col = vec![T::zero(); k_dim * chunk * p];
                let mut block = vec![T::zero(); cog * chunk * p];
                let mut first = 0usize;
                while first < d.n {
                    let count = chunk.min(d.n - first);
                    let run_p = count * p;
                    for gi in 0..g {
                        im2col_run(xs, first, count, gi, &d, spec, &mut col[..k_dim * run_p]);
                        let w2 = ArrayView2::from_shape(
                            (cog, k_dim),
                            &ws[gi * cog * k_dim..(gi + 1) * cog * k_dim],
                        )
                        .unwrap();
                        let colv =
                            ArrayView2::from_shape((k_dim, run_p), &col[..k_dim * run_p]).unwrap();
                        let mut dstv =
                            ArrayViewMut2::from_shape((cog, run_p), &mut block[..cog * run_p])
                                .unwrap();
                        ndarray::linalg::general_mat_mul(T::one(), &w2, &colv, T::zero(), &mut dstv);
                        // scatter (cog, count*P) back to per-image layout
                        for (slot, ni) in (first..first + count).enumerate() {
                            for co in 0..cog {
                                let dst = &mut out[(ni * d.cout + gi * cog + co) * p
                                    ..(ni * d.cout + gi * cog + co + 1) * p];
                                dst.copy_from_slice(
                                    &block[co * run_p + slot * p..co * run_p + (slot + 1) * p],
                                );
                            }
                        }
                    }
                    first += count;
                }
                if let Some(bv) = &bd {
                    with_slice(bv, |bs| {
                        for ni in 0..d.n {
                            for c in 0..d.cout {
                                let dst = &mut out[(ni * d.cout + c) * p..(ni * d.cout + c + 1) * p];
                                let bias = bs[c];
                                for v in dst.iter_mut() {
                                    *v = *v + bias;
                                }
                            }
                        }
                    });
                }
            })
        });
    }
    let out = ArrayD::from_shape_vec(IxDyn(&[d.n, d.cout, d.ho, d.wo]), out).unwrap();

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
        Box::new(move |gout| {
            let gstd;
            let gs: &[T] = match gout.as_slice() {
                Some(s) => s,
                None => {
                    gstd = gout.as_standard_layout().into_owned();
                    gstd.as_slice().unwrap()
                }
            };
            if let Some(bias) = &bh {
                if bias.on_grad_path() {
                    let mut gb = vec![T::zero(); d.cout];
                    for ni in 0..d.n {
                        for c in 0..d.cout {
                            let seg = &gs[(ni * d.cout + c) * p..(ni * d.cout + c + 1) * p];
                            let mut acc = T::zero();
                            for &v in seg {
                                acc = acc + v;
                            }
                            gb[c] = gb[c] + acc;
                        }
                    }
                    bias.accumulate_grad_owned(
                        ArrayD::from_shape_vec(IxDyn(&[d.cout]), gb).unwrap(),
                    );
                }
            }
            let want_gw = wh.on_grad_path();
            let want_gx = xh.on_grad_path();
            if !want_gw && !want_gx {
                return;
            }
            let xd = xh.data();
            let wd = wh.data();
            with_slice(&xd, |xs| {
                with_slice(&wd, |ws| {
                    let mut gw = vec![T::zero(); d.cout * k_dim];
                    let mut gx = vec![T::zero(); d.n * d.cin * d.h * d.w];
                    let mut col = vec![T::zero(); k_dim * chunk * p];
                    let mut gbuf = vec![T::zero(); cog * chunk * p];
                    let mut first = 0usize;
                    while first < d.n {
                        let count = chunk.min(d.n - first);
                        let run_p = count * p;
                        for gi in 0..g {
                            gather_gout(gs, first, count, gi, d.cout, cog, p, &mut gbuf[..cog * run_p]);
                            let gview =
                                ArrayView2::from_shape((cog, run_p), &gbuf[..cog * run_p]).unwrap();
                            if want_gw {
                                im2col_run(xs, first, count, gi, &d, spec, &mut col[..k_dim * run_p]);
                                let colv =
                                    ArrayView2::from_shape((k_dim, run_p), &col[..k_dim * run_p])
                                        .unwrap();
                                let gw_seg = &mut gw[gi * cog * k_dim..(gi + 1) * cog * k_dim];
                                let mut gw_view =
                                    ArrayViewMut2::from_shape((cog, k_dim), gw_seg).unwrap();
                                ndarray::linalg::general_mat_mul(
                                    T::one(),
                                    &gview,
                                    &colv.t(),
                                    T::one(),
                                    &mut gw_view,
                                );
                            }
                            if want_gx {
                                let w2 = ArrayView2::from_shape(
                                    (cog, k_dim),
                                    &ws[gi * cog * k_dim..(gi + 1) * cog * k_dim],
                                )
                                .unwrap();
                                let mut gcol_view = ArrayViewMut2::from_shape(
                                    (k_dim, run_p),
                                    &mut col[..k_dim * run_p],
                                )
                                .unwrap();
                                ndarray::linalg::general_mat_mul(
                                    T::one(),
                                    &w2.t(),
                                    &gview,
                                    T::zero(),
                                    &mut gcol_view,
                                );
                                col2im_run(
                                    &col[..k_dim * run_p],
                                    first,
                                    count,
                                    gi,
                                    &d,
                                    spec,
                                    &mut gx,
                                );
                            }
                        }
                        first += count;
                    }
                    if want_gw {
                        wh.accumulate_grad_owned(
                            ArrayD::from_shape_vec(IxDyn(&[d.cout, cg, d.kh, d.kw]), gw).unwrap(),
                        );
                    }
                    if want_gx {
                        xh.accumulate_grad_owned(
                            ArrayD::from_shape_vec(IxDyn(&[d.n, d.cin, d.h, d.w]), gx).unwrap(),
                        );
                    }
                })
            });
        }),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct Conv3dSpec {
    pub stride: (usize, usize, usize),
    pub padding: (usize, usize, usize),
}

/// 3-D convolution over (N, Cin, T, H, W) with weight (Cout, Cin, kt, kh, kw).
/// Used by the video-style temporal blocks; those inputs are small feature
/// maps, so a per-image vol2col without grouping is enough.
pub fn conv3d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    spec: Conv3dSpec,
) -> Tensor<T> {
    let (xsh, wsh) = (x.shape(), w.shape());
    assert_eq!(xsh.len(), 5, "conv3d input rank 5");
    assert_eq!(wsh.len(), 5, "conv3d weight rank 5");
    let (n, cin, t, h, w_in) = (xsh[0], xsh[1], xsh[2], xsh[3], xsh[4]);
    let (cout, cin2, kt, kh, kw) = (wsh[0], wsh[1], wsh[2], wsh[3], wsh[4]);
    assert_eq!(cin, cin2, "conv3d channel mismatch");
    let to = conv2d_out_dim(t, kt, spec.stride.0, spec.padding.0);
    let ho = conv2d_out_dim(h, kh, spec.stride.1, spec.padding.1);
    let wo = conv2d_out_dim(w_in, kw, spec.stride.2, spec.padding.2);
    let k_dim = cin * kt * kh * kw;
    let p = to * ho * wo;

    let vol2col = move |chans: &[T], col: &mut [T]| {
        col.fill(T::zero());
        for c in 0..cin {
            let chan = &chans[c * t * h * w_in..(c + 1) * t * h * w_in];
            for kti in 0..kt {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let row = ((c * kt + kti) * kh + ky) * kw + kx;
                        let dst = &mut col[row * p..(row + 1) * p];
                        for ot in 0..to {
                            let it = (ot * spec.stride.0 + kti) as isize - spec.padding.0 as isize;
                            if it < 0 || it >= t as isize {
                                continue;
                            }
                            for oy in 0..ho {
                                let iy =
                                    (oy * spec.stride.1 + ky) as isize - spec.padding.1 as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for ox in 0..wo {
                                    let ix = (ox * spec.stride.2 + kx) as isize
                                        - spec.padding.2 as isize;
                                    if ix < 0 || ix >= w_in as isize {
                                        continue;
                                    }
                                    dst[(ot * ho + oy) * wo + ox] = chan
                                        [(it as usize * h + iy as usize) * w_in + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    };

    let mut out = vec![T::zero(); n * cout * p];
    {
        let xd = x.data();
        let wd = w.data();
        let bd = b.map(|bb| bb.data());
        with_slice(&xd, |xs| {
            with_slice(&wd, |ws| {
                let mut col = vec![T::zero(); k_dim * p];
                for ni in 0..n {
                    vol2col(
                        &xs[ni * cin * t * h * w_in..(ni + 1) * cin * t * h * w_in],
                        &mut col,
                    );
                    let w2 = ArrayView2::from_shape((cout, k_dim), ws).unwrap();
                    let colv = ArrayView2::from_shape((k_dim, p), &col[..]).unwrap();
                    let dst = &mut out[ni * cout * p..(ni + 1) * cout * p];
                    let mut dstv = ArrayViewMut2::from_shape((cout, p), dst).unwrap();
                    ndarray::linalg::general_mat_mul(T::one(), &w2, &colv, T::zero(), &mut dstv);
                    if let Some(bv) = &bd {
                        with_slice(bv, |bs| {
                            for c in 0..cout {
                                for v in dst[c * p..(c + 1) * p].iter_mut() {
                                    *v = *v + bs[c];
                                }
                            }
                        });
                    }
                }
            })
        });
    }
    let out = ArrayD::from_shape_vec(IxDyn(&[n, cout, to, ho, wo]), out).unwrap();

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
        Box::new(move |gout| {
            let gstd;
            let gs: &[T] = match gout.as_slice() {
                Some(s) => s,
                None => {
                    gstd = gout.as_standard_layout().into_owned();
                    gstd.as_slice().unwrap()
                }
            };
            if let Some(bias) = &bh {
                if bias.on_grad_path() {
                    let mut gb = vec![T::zero(); cout];
                    for ni in 0..n {
                        for c in 0..cout {
                            for &v in &gs[(ni * cout + c) * p..(ni * cout + c + 1) * p] {
                                gb[c] = gb[c] + v;
                            }
                        }
                    }
                    bias.accumulate_grad_owned(
                        ArrayD::from_shape_vec(IxDyn(&[cout]), gb).unwrap(),
                    );
                }
            }
            let want_gw = wh.on_grad_path();
            let want_gx = xh.on_grad_path();
            if !want_gw && !want_gx {
                return;
            }
            let xd = xh.data();
            let wd = wh.data();
            with_slice(&xd, |xs| {
                with_slice(&wd, |ws| {
                    let mut gw = vec![T::zero(); cout * k_dim];
                    let mut gx = vec![T::zero(); n * cin * t * h * w_in];
                    let mut col = vec![T::zero(); k_dim * p];
                    let mut gcol = vec![T::zero(); k_dim * p];
                    for ni in 0..n {
                        let gseg = &gs[ni * cout * p..(ni + 1) * cout * p];
                        let gview = ArrayView2::from_shape((cout, p), gseg).unwrap();
                        if want_gw {
                            vol2col(
                                &xs[ni * cin * t * h * w_in..(ni + 1) * cin * t * h * w_in],
                                &mut col,
                            );
                            let colv = ArrayView2::from_shape((k_dim, p), &col[..]).unwrap();
                            let mut gw_view =
                                ArrayViewMut2::from_shape((cout, k_dim), &mut gw[..]).unwrap();
                            ndarray::linalg::general_mat_mul(
                                T::one(),
                                &gview,
                                &colv.t(),
                                T::one(),
                                &mut gw_view,
                            );
                        }
                        if want_gx {
                            let w2 = ArrayView2::from_shape((cout, k_dim), ws).unwrap();
                            let mut gcol_view =
                                ArrayViewMut2::from_shape((k_dim, p), &mut gcol[..]).unwrap();
                            ndarray::linalg::general_mat_mul(
                                T::one(),
                                &w2.t(),
                                &gview,
                                T::zero(),
                                &mut gcol_view,
                            );
                            // mirror of vol2col with +=
                            let chans =
                                &mut gx[ni * cin * t * h * w_in..(ni + 1) * cin * t * h * w_in];
                            for c in 0..cin {
                                let chan = &mut chans[c * t * h * w_in..(c + 1) * t * h * w_in];
                                for kti in 0..kt {
                                    for ky in 0..kh {
                                        for kx in 0..kw {
                                            let row = ((c * kt + kti) * kh + ky) * kw + kx;
                                            let src = &gcol[row * p..(row + 1) * p];
                                            for ot in 0..to {
                                                let it = (ot * spec.stride.0 + kti) as isize
                                                    - spec.padding.0 as isize;
                                                if it < 0 || it >= t as isize {
                                                    continue;
                                                }
                                                for oy in 0..ho {
                                                    let iy = (oy * spec.stride.1 + ky) as isize
                                                        - spec.padding.1 as isize;
                                                    if iy < 0 || iy >= h as isize {
                                                        continue;
                                                    }
                                                    for ox in 0..wo {
                                                        let ix = (ox * spec.stride.2 + kx) as isize
                                                            - spec.padding.2 as isize;
                                                        if ix < 0 || ix >= w_in as isize {
                                                            continue;
                                                        }
                                                        let di = (it as usize * h + iy as usize)
                                                            * w_in
                                                            + ix as usize;
                                                        chan[di] = chan[di]
                                                            + src[(ot * ho + oy) * wo + ox];
                                                    }
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    if want_gw {
                        wh.accumulate_grad_owned(
                            ArrayD::from_shape_vec(IxDyn(&[cout, cin, kt, kh, kw]), gw).unwrap(),
                        );
                    }
                    if want_gx {
                        xh.accumulate_grad_owned(
                            ArrayD::from_shape_vec(IxDyn(&[n, cin, t, h, w_in]), gx).unwrap(),
                        );
                    }
                })
            });
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::sum_all;

    /// Direct convolution used as an oracle for the im2col path.
    fn conv2d_oracle(x: &ArrayD<f64>, w: &ArrayD<f64>, spec: Conv2dSpec) -> ArrayD<f64> {
        let (n, _cin, h, wi) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (cout, cg, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        let g = spec.groups;
        let cog = cout / g;
        let ho = conv2d_out_dim(h, kh, spec.stride.0, spec.padding.0);
        let wo = conv2d_out_dim(wi, kw, spec.stride.1, spec.padding.1);
        let mut out = ArrayD::zeros(IxDyn(&[n, cout, ho, wo]));
        for ni in 0..n {
            for co in 0..cout {
                let gi = co / cog;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..cg {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (oy * spec.stride.0 + ky) as isize
                                        - spec.padding.0 as isize;
                                    let ix = (ox * spec.stride.1 + kx) as isize
                                        - spec.padding.1 as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wi as isize {
                                        continue;
                                    }
                                    acc += x[[ni, gi * cg + ci, iy as usize, ix as usize]]
                                        * w[[co, ci, ky, kx]];
                                }
                            }
                        }
                        out[[ni, co, oy, ox]] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv2d_matches_direct_oracle() {
        let mut seed = 1u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for &(stride, pad, groups) in &[(1usize, 1usize, 1usize), (2, 1, 1), (1, 0, 2), (2, 2, 4)] {
            let cin = 4;
            let cout = 8;
            let x = ArrayD::from_shape_fn(IxDyn(&[3, cin, 9, 7]), |_| next());
            let w = ArrayD::from_shape_fn(IxDyn(&[cout, cin / groups, 3, 3]), |_| next());
            let spec = Conv2dSpec::grouped(stride, pad, groups);
            let got = conv2d(
                &Tensor::constant(x.clone()),
                &Tensor::constant(w.clone()),
                None,
                spec,
            );
            let want = conv2d_oracle(&x, &w, spec);
            let gd = got.data();
            assert_eq!(gd.shape(), want.shape());
            for (a, b) in gd.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-10, "stride {stride} pad {pad} groups {groups}");
            }
        }
    }

    #[test]
    fn conv2d_bias_and_grad_shapes() {
        let x = Tensor::param(ArrayD::from_elem(IxDyn(&[1, 2, 5, 5]), 0.5f64));
        let w = Tensor::param(ArrayD::from_elem(IxDyn(&[3, 2, 3, 3]), 0.1f64));
        let b = Tensor::param(ArrayD::from_elem(IxDyn(&[3]), 0.0f64));
        let y = conv2d(&x, &w, Some(&b), Conv2dSpec::new(1, 1));
        assert_eq!(y.shape(), vec![1, 3, 5, 5]);
        sum_all(&y).backward();
        assert_eq!(x.grad().unwrap().shape(), &[1, 2, 5, 5]);
        assert_eq!(w.grad().unwrap().shape(), &[3, 2, 3, 3]);
        assert_eq!(b.grad().unwrap().as_slice().unwrap(), &[25.0, 25.0, 25.0]);
    }

    #[test]
    fn conv3d_shapes() {
        let x = Tensor::param(ArrayD::from_elem(IxDyn(&[1, 2, 2, 4, 4]), 1.0f64));
        let w = Tensor::param(ArrayD::from_elem(IxDyn(&[3, 2, 3, 3, 3]), 0.5f64));
        let y = conv3d(
            &x,
            &w,
            None,
            Conv3dSpec {
                stride: (1, 1, 1),
                padding: (1, 1, 1),
            },
        );
        assert_eq!(y.shape(), vec![1, 3, 2, 4, 4]);
        sum_all(&y).backward();
        assert_eq!(x.grad().unwrap().shape(), &[1, 2, 2, 4, 4]);
    }
}
