use crate::{Scalar, Tensor};

/// Plain stochastic gradient descent with classic L2 weight decay:
/// w <- w - lr * (g + wd * w), with optional global-norm gradient clipping.
pub struct Sgd<T: Scalar> {
    pub lr: T,
    pub weight_decay: T,
    /// Scale all gradients down when their global L2 norm exceeds this.
    pub clip_norm: Option<T>,
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(params: Vec<Tensor<T>>, lr: T, weight_decay: T) -> Self {
        Sgd {
            lr,
            weight_decay,
            clip_norm: None,
            params,
        }
    }

    pub fn with_clip(mut self, clip_norm: Option<T>) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    /// Apply one update from the currently accumulated gradients and clear
    /// them. Parameters without a gradient are left untouched.
    pub fn step(&self) {
        let scale = match self.clip_norm {
            Some(max_norm) => {
                let mut sq = T::zero();
                for p in &self.params {
                    if let Some(g) = p.grad() {
                        for &v in g.iter() {
                            sq = sq + v * v;
                        }
                    }
                }
                let norm = sq.sqrt();
                if norm > max_norm {
                    max_norm / norm
                } else {
                    T::one()
                }
            }
            None => T::one(),
        };
        for p in &self.params {
            let Some(mut g) = p.grad() else { continue };
            if scale != T::one() {
                g.mapv_inplace(|v| v * scale);
            }
            let updated = {
                let w = p.data();
                let mut d = g;
                if self.weight_decay != T::zero() {
                    d.zip_mut_with(&w, |dv, &wv| *dv = *dv + self.weight_decay * wv);
                }
                let mut w_new = w.clone();
                w_new.zip_mut_with(&d, |wv, &dv| *wv = *wv - self.lr * dv);
                w_new
            };
            p.set_data(updated);
            p.zero_grad();
        }
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn zero_lr_leaves_weights_unchanged() {
        let w = Tensor::param(ArrayD::from_elem(IxDyn(&[3]), 2.0f64));
        let before = w.data().clone();
        let opt = Sgd::new(vec![w.clone()], 0.0, 0.0);
        ops::sum_all(&ops::mul(&w, &w)).backward();
        opt.step();
        assert_eq!(*w.data(), before);
        assert!(w.grad().is_none());
    }

    #[test]
    fn descends_a_quadratic() {
        let w = Tensor::param(ArrayD::from_elem(IxDyn(&[1]), 4.0f64));
        let opt = Sgd::new(vec![w.clone()], 0.1, 0.0);
        for _ in 0..50 {
            let loss = ops::sum_all(&ops::mul(&w, &w));
            loss.backward();
            opt.step();
        }
        assert!(w.data()[[0]].abs() < 0.01);
    }

    #[test]
    fn weight_decay_shrinks_without_gradient_signal() {
        let w = Tensor::param(ArrayD::from_elem(IxDyn(&[1]), 1.0f64));
        let opt = Sgd::new(vec![w.clone()], 0.5, 0.1);
        // constant loss w.r.t. w gives zero grad; decay still applies once a
        // grad entry exists
        let zero = Tensor::constant(ArrayD::zeros(IxDyn(&[1])));
        ops::sum_all(&ops::mul(&w, &zero)).backward();
        opt.step();
        assert!((w.data()[[0]] - 0.95).abs() < 1e-12);
    }
}
