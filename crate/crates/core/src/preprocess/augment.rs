use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use smokeynet_autograd::nn::init::seed_stream;
use smokeynet_autograd::Scalar;

use super::raster::Mask;
use super::ImageBuffer;

/// Per-transform enable probabilities and magnitudes. Geometric transforms
/// (flip, vertical crop) apply identically to every frame of a temporal
/// group and to the smoke mask; photometric ones touch frames only.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPolicy {
    pub hflip_prob: f64,
    pub vcrop_prob: f64,
    /// Fraction of image height the vertical crop may remove (re-resized).
    pub vcrop_max_frac: f64,
    pub color_jitter_prob: f64,
    pub color_jitter_mag: f64,
    pub brightness_prob: f64,
    pub brightness_mag: f64,
    pub contrast_prob: f64,
    pub contrast_mag: f64,
    pub blur_prob: f64,
    /// Gaussian blur radius in pixels (kernel half-width), at most 2.
    pub blur_max_radius: usize,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy {
            hflip_prob: 0.5,
            vcrop_prob: 0.5,
            vcrop_max_frac: 0.10,
            color_jitter_prob: 0.5,
            color_jitter_mag: 0.10,
            brightness_prob: 0.5,
            brightness_mag: 0.10,
            contrast_prob: 0.5,
            contrast_mag: 0.10,
            blur_prob: 0.5,
            blur_max_radius: 2,
        }
    }
}

impl AugmentationPolicy {
    /// All transforms disabled; output is bit-identical to input.
    pub fn identity() -> Self {
        AugmentationPolicy {
            hflip_prob: 0.0,
            vcrop_prob: 0.0,
            vcrop_max_frac: 0.0,
            color_jitter_prob: 0.0,
            color_jitter_mag: 0.0,
            brightness_prob: 0.0,
            brightness_mag: 0.0,
            contrast_prob: 0.0,
            contrast_mag: 0.0,
            blur_prob: 0.0,
            blur_max_radius: 0,
        }
    }
}

/// One sampled transform group, drawn up front so the rng stream layout
/// never depends on which transforms fire.
#[derive(Debug, Clone)]
struct SampledTransforms {
    hflip: bool,
    vcrop: Option<(usize, usize)>, // (y0, cropped height)
    color: Option<[f64; 3]>,
    brightness: Option<f64>,
    contrast: Option<f64>,
    blur_sigma: Option<f64>,
}

fn sample(policy: &AugmentationPolicy, height: usize, rng: &mut ChaCha20Rng) -> SampledTransforms {
    let hflip = rng.random::<f64>() < policy.hflip_prob;

    let vcrop_fire = rng.random::<f64>() < policy.vcrop_prob;
    let crop_u: f64 = rng.random();
    let off_u: f64 = rng.random();
    let vcrop = if vcrop_fire && policy.vcrop_max_frac > 0.0 {
        let frac = 1.0 - crop_u * policy.vcrop_max_frac;
        let ch = ((height as f64 * frac).round() as usize).clamp(1, height);
        let y0 = ((height - ch) as f64 * off_u).round() as usize;
        (ch < height).then_some((y0, ch))
    } else {
        None
    };

    let color_fire = rng.random::<f64>() < policy.color_jitter_prob;
    let cf = [
        1.0 + policy.color_jitter_mag * (2.0 * rng.random::<f64>() - 1.0),
        1.0 + policy.color_jitter_mag * (2.0 * rng.random::<f64>() - 1.0),
        1.0 + policy.color_jitter_mag * (2.0 * rng.random::<f64>() - 1.0),
    ];
    let color = color_fire.then_some(cf);

    let bright_fire = rng.random::<f64>() < policy.brightness_prob;
    let bd = policy.brightness_mag * (2.0 * rng.random::<f64>() - 1.0);
    let brightness = bright_fire.then_some(bd);

    let contrast_fire = rng.random::<f64>() < policy.contrast_prob;
    let cfac = 1.0 + policy.contrast_mag * (2.0 * rng.random::<f64>() - 1.0);
    let contrast = contrast_fire.then_some(cfac);

    let blur_fire = rng.random::<f64>() < policy.blur_prob;
    let sigma = 0.3 + 0.7 * rng.random::<f64>();
    let blur_sigma = (blur_fire && policy.blur_max_radius > 0).then_some(sigma);

    SampledTransforms {
        hflip,
        vcrop,
        color,
        brightness,
        contrast,
        blur_sigma,
    }
}

fn hflip_image<T: Scalar>(img: &ImageBuffer<T>) -> ImageBuffer<T> {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let mut out = ImageBuffer::zeros(c, h, w);
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                out.data[[ci, y, x]] = img.data[[ci, y, w - 1 - x]];
            }
        }
    }
    out
}

fn hflip_mask(mask: &Mask) -> Mask {
    let (h, w) = (mask.shape()[0], mask.shape()[1]);
    Array2::from_shape_fn((h, w), |(y, x)| mask[[y, w - 1 - x]])
}

fn vcrop_resize_image<T: Scalar>(img: &ImageBuffer<T>, y0: usize, ch: usize) -> ImageBuffer<T> {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let cropped = img.data.slice(ndarray::s![.., y0..y0 + ch, ..]).to_owned();
    // bilinear stretch back to the original height
    let mut out = ImageBuffer::zeros(c, h, w);
    let sy = ch as f64 / h as f64;
    for ci in 0..c {
        for oy in 0..h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (ch - 1) as f64);
            let yq = fy.floor() as usize;
            let y1 = (yq + 1).min(ch - 1);
            let wy = T::of_f64(fy - yq as f64);
            for x in 0..w {
                let a = cropped[[ci, yq, x]];
                let b = cropped[[ci, y1, x]];
                out.data[[ci, oy, x]] = a * (T::one() - wy) + b * wy;
            }
        }
    }
    out
}

fn vcrop_resize_mask(mask: &Mask, y0: usize, ch: usize) -> Mask {
    let (h, w) = (mask.shape()[0], mask.shape()[1]);
    // nearest neighbor keeps the mask binary
    let sy = ch as f64 / h as f64;
    Array2::from_shape_fn((h, w), |(oy, x)| {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (ch - 1) as f64);
        mask[[y0 + fy.round() as usize, x]]
    })
}

fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

fn blur_image<T: Scalar>(img: &ImageBuffer<T>, radius: usize, sigma: f64) -> ImageBuffer<T> {
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let kernel: Vec<T> = gaussian_kernel(radius, sigma)
        .into_iter()
        .map(T::of_f64)
        .collect();
    let r = radius as isize;
    let mut tmp = Array3::<T>::zeros((c, h, w));
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sx = (x as isize + ki as isize - r).clamp(0, w as isize - 1) as usize;
                    acc = acc + img.data[[ci, y, sx]] * kv;
                }
                tmp[[ci, y, x]] = acc;
            }
        }
    }
    let mut out = ImageBuffer::zeros(c, h, w);
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sy = (y as isize + ki as isize - r).clamp(0, h as isize - 1) as usize;
                    acc = acc + tmp[[ci, sy, x]] * kv;
                }
                out.data[[ci, y, x]] = acc;
            }
        }
    }
    out
}

fn clamp01<T: Scalar>(img: &mut ImageBuffer<T>) {
    img.data.mapv_inplace(|v| v.max(T::zero()).min(T::one()));
}

/// Apply one sampled transform group to every frame and the mask.
///
/// Deterministic given the seed; an identity policy returns bit-identical
/// clones. Output dimensions always equal input dimensions (the vertical
/// crop re-resizes).
pub fn augment_group<T: Scalar>(
    frames: &[ImageBuffer<T>],
    mask: &Mask,
    policy: &AugmentationPolicy,
    rng_seed: u64,
) -> (Vec<ImageBuffer<T>>, Mask) {
    assert!(!frames.is_empty(), "augment_group needs at least one frame");
    let (h, w) = (frames[0].height(), frames[0].width());
    for f in frames {
        assert_eq!(
            (f.height(), f.width()),
            (h, w),
            "all frames share dimensions"
        );
    }
    assert_eq!(mask.shape(), [h, w], "mask matches frame dimensions");

    let mut rng = seed_stream(rng_seed, "augment-group");
    let t = sample(policy, h, &mut rng);

    let mut out_frames: Vec<ImageBuffer<T>> = frames.to_vec();
    let mut out_mask = mask.clone();

    if t.hflip {
        out_frames = out_frames.iter().map(hflip_image).collect();
        out_mask = hflip_mask(&out_mask);
    }
    if let Some((y0, ch)) = t.vcrop {
        out_frames = out_frames
            .iter()
            .map(|f| vcrop_resize_image(f, y0, ch))
            .collect();
        out_mask = vcrop_resize_mask(&out_mask, y0, ch);
    }
    let photometric =
        t.color.is_some() || t.brightness.is_some() || t.contrast.is_some() || t.blur_sigma.is_some();
    if photometric {
        for f in out_frames.iter_mut() {
            if let Some(cf) = t.color {
                for ci in 0..f.channels() {
                    let factor = T::of_f64(cf[ci.min(2)]);
                    f.data
                        .slice_mut(ndarray::s![ci, .., ..])
                        .mapv_inplace(|v| v * factor);
                }
            }
            if let Some(delta) = t.brightness {
                let d = T::of_f64(delta);
                f.data.mapv_inplace(|v| v + d);
            }
            if let Some(factor) = t.contrast {
                let fr = T::of_f64(factor);
                let mean = f.data.sum() / T::of_usize(f.data.len());
                f.data.mapv_inplace(|v| mean + fr * (v - mean));
            }
            if let Some(sigma) = t.blur_sigma {
                *f = blur_image(f, policy.blur_max_radius.min(2), sigma);
            }
            clamp01(f);
        }
    }
    (out_frames, out_mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{tile_labels, TileGrid};

    fn test_frames(n: usize) -> (Vec<ImageBuffer<f32>>, Mask) {
        let frames = (0..n)
            .map(|i| {
                ImageBuffer::new(Array3::from_shape_fn((3, 144, 256), |(c, y, x)| {
                    (((c + 1) * (y * 256 + x) + i * 7919) % 255) as f32 / 255.0
                }))
            })
            .collect();
        let mut mask = Mask::zeros((144, 256));
        for y in 40..70 {
            for x in 100..160 {
                mask[[y, x]] = 1;
            }
        }
        (frames, mask)
    }

    #[test]
    fn identity_policy_is_bit_identical() {
        let (frames, mask) = test_frames(2);
        let (out, omask) = augment_group(&frames, &mask, &AugmentationPolicy::identity(), 99);
        assert_eq!(omask, mask);
        for (a, b) in frames.iter().zip(out.iter()) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn same_seed_is_deterministic() {
        let (frames, mask) = test_frames(2);
        let policy = AugmentationPolicy::default();
        let (a, am) = augment_group(&frames, &mask, &policy, 1234);
        let (b, bm) = augment_group(&frames, &mask, &policy, 1234);
        assert_eq!(am, bm);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.data, y.data);
        }
        let (c, _) = augment_group(&frames, &mask, &policy, 1235);
        assert!(a.iter().zip(c.iter()).any(|(x, y)| x.data != y.data));
    }

    #[test]
    fn flip_permutes_tile_labels_column_reversed() {
        let (frames, mask) = test_frames(1);
        let grid = TileGrid::new(144, 256, 32, 4).unwrap();
        let before = tile_labels(&mask, &grid, 10).unwrap();
        let policy = AugmentationPolicy {
            hflip_prob: 1.0,
            ..AugmentationPolicy::identity()
        };
        let (_, flipped_mask) = augment_group(&frames, &mask, &policy, 5);
        let after = tile_labels(&flipped_mask, &grid, 10).unwrap();
        assert_eq!(after, before.hflipped());
        assert!(before.any_positive());
    }

    #[test]
    fn geometric_transform_shared_across_group() {
        let (frames, mask) = test_frames(3);
        let policy = AugmentationPolicy {
            hflip_prob: 1.0,
            vcrop_prob: 1.0,
            vcrop_max_frac: 0.10,
            ..AugmentationPolicy::identity()
        };
        let (out, _) = augment_group(&frames, &mask, &policy, 42);
        // each frame underwent the same geometric map, so applying it to
        // frame 0 separately must agree with the group output
        let (solo, _) = augment_group(&frames[..1], &mask, &policy, 42);
        assert_eq!(solo[0].data, out[0].data);
        assert_eq!(out.len(), 3);
        for f in &out {
            assert_eq!((f.height(), f.width()), (144, 256));
        }
    }

    #[test]
    fn photometric_leaves_mask_untouched() {
        let (frames, mask) = test_frames(2);
        let policy = AugmentationPolicy {
            color_jitter_prob: 1.0,
            color_jitter_mag: 0.1,
            brightness_prob: 1.0,
            brightness_mag: 0.1,
            contrast_prob: 1.0,
            contrast_mag: 0.1,
            blur_prob: 1.0,
            blur_max_radius: 2,
            ..AugmentationPolicy::identity()
        };
        let (out, omask) = augment_group(&frames, &mask, &policy, 7);
        assert_eq!(omask, mask);
        assert!(out[0].data != frames[0].data);
        // pixel range stays in [0,1]
        for f in &out {
            assert!(f.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
