use ndarray::Array2;
use smokeynet_autograd::Scalar;

use super::{ImageBuffer, PreprocessError};

/// Stateful per-sequence background model producing a foreground channel in
/// [0, 1]. A Gaussian-mixture model can be plugged in behind this interface;
/// the shipped default is thresholded absolute frame differencing.
pub trait BackgroundSubtractor<T: Scalar> {
    /// Feed the next frame of the sequence and get its foreground mask.
    fn apply(&mut self, frame: &ImageBuffer<T>) -> Result<Array2<T>, PreprocessError>;

    /// Forget sequence state (switching cameras or fires).
    fn reset(&mut self);
}

/// Default subtractor: foreground = 1 where the mean absolute channel
/// difference against the previous frame exceeds the threshold. The first
/// frame of a sequence yields an all-zero mask.
pub struct FrameDiff<T: Scalar> {
    pub threshold: T,
    prev: Option<ImageBuffer<T>>,
}

impl<T: Scalar> FrameDiff<T> {
    pub fn new(threshold: f64) -> Self {
        FrameDiff {
            threshold: T::of_f64(threshold),
            prev: None,
        }
    }
}

impl<T: Scalar> Default for FrameDiff<T> {
    fn default() -> Self {
        Self::new(0.05)
    }
}

impl<T: Scalar> BackgroundSubtractor<T> for FrameDiff<T> {
    fn apply(&mut self, frame: &ImageBuffer<T>) -> Result<Array2<T>, PreprocessError> {
        let (h, w) = (frame.height(), frame.width());
        let out = match &self.prev {
            None => Array2::zeros((h, w)),
            Some(prev) => {
                if (prev.height(), prev.width(), prev.channels())
                    != (h, w, frame.channels())
                {
                    return Err(PreprocessError::DimensionMismatch {
                        expected: format!(
                            "{}x{}x{}",
                            prev.channels(),
                            prev.height(),
                            prev.width()
                        ),
                        got: format!("{}x{}x{}", frame.channels(), h, w),
                    });
                }
                let c = frame.channels();
                let inv_c = T::one() / T::of_usize(c);
                Array2::from_shape_fn((h, w), |(y, x)| {
                    let mut acc = T::zero();
                    for ci in 0..c {
                        acc = acc + (frame.data[[ci, y, x]] - prev.data[[ci, y, x]]).abs();
                    }
                    if acc * inv_c > self.threshold {
                        T::one()
                    } else {
                        T::zero()
                    }
                })
            }
        };
        self.prev = Some(frame.clone());
        Ok(out)
    }

    fn reset(&mut self) {
        self.prev = None;
    }
}

/// Foreground channel for a (previous, current) frame pair through a fresh
/// run of the subtractor's sequence state.
pub fn background_channel<T: Scalar, S: BackgroundSubtractor<T>>(
    prev: &ImageBuffer<T>,
    cur: &ImageBuffer<T>,
    subtractor: &mut S,
) -> Result<Array2<T>, PreprocessError> {
    subtractor.reset();
    subtractor.apply(prev)?;
    subtractor.apply(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn identical_frames_give_zero_foreground() {
        let img = ImageBuffer::new(Array3::from_elem((3, 8, 8), 0.4f32));
        let mut sub = FrameDiff::default();
        let fg = background_channel(&img, &img.clone(), &mut sub).unwrap();
        assert!(fg.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn moved_patch_lights_up_both_locations() {
        let mut a = ImageBuffer::<f32>::zeros(3, 64, 64);
        let mut b = ImageBuffer::<f32>::zeros(3, 64, 64);
        for c in 0..3 {
            for y in 10..30 {
                for x in 5..25 {
                    a.data[[c, y, x]] = 1.0;
                }
                for x in 35..55 {
                    b.data[[c, y, x]] = 1.0;
                }
            }
        }
        let mut sub = FrameDiff::default();
        let fg = background_channel(&a, &b, &mut sub).unwrap();
        assert_eq!(fg[[15, 10]], 1.0, "old location foreground");
        assert_eq!(fg[[15, 40]], 1.0, "new location foreground");
        assert_eq!(fg[[15, 30]], 0.0, "gap between patches stays background");
        assert_eq!(fg[[50, 50]], 0.0, "far corner stays background");
    }

    #[test]
    fn foreground_bounded_for_random_pairs() {
        let mk = |seed: u32| {
            ImageBuffer::new(Array3::from_shape_fn((3, 16, 16), |(c, y, x)| {
                ((c as u32 + 1)
                    .wrapping_mul(2654435761)
                    .wrapping_mul(y as u32 * 97 + x as u32 + seed)
                    % 1000) as f32
                    / 1000.0
            }))
        };
        let mut sub = FrameDiff::default();
        let fg = background_channel(&mk(1), &mk(2), &mut sub).unwrap();
        assert!(fg.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn dimension_mismatch_is_geometry_error() {
        let a = ImageBuffer::<f32>::zeros(3, 8, 8);
        let b = ImageBuffer::<f32>::zeros(3, 8, 10);
        let mut sub = FrameDiff::default();
        assert!(background_channel(&a, &b, &mut sub).is_err());
    }
}
