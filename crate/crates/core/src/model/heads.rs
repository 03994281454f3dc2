use rand_chacha::ChaCha20Rng;
use smokeynet_autograd::nn::{join, Ctx, Dropout, Linear, Module};
use smokeynet_autograd::{ops, Scalar, Tensor};

/// Three fully-connected layers with ReLU between them and a single-logit
/// output: widths 256, 64, 1. The same topology serves image and tile heads,
/// differing only in input width.
pub struct Head<T: Scalar> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub fc3: Linear<T>,
    pub drop: Dropout,
}

pub const HEAD_HIDDEN: [usize; 2] = [256, 64];

impl<T: Scalar> Head<T> {
    pub fn new(in_dim: usize, dropout: f64, rng: &mut ChaCha20Rng) -> Self {
        Head {
            fc1: Linear::new(in_dim, HEAD_HIDDEN[0], true, rng),
            fc2: Linear::new(HEAD_HIDDEN[0], HEAD_HIDDEN[1], true, rng),
            fc3: Linear::new(HEAD_HIDDEN[1], 1, true, rng),
            drop: Dropout::new(dropout),
        }
    }

    /// (..., in_dim) -> (...) logits; the trailing singleton is squeezed.
    pub fn forward(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Tensor<T> {
        let h = ops::relu(&self.fc1.forward(x));
        let h = self.drop.forward(&h, ctx);
        let h = ops::relu(&self.fc2.forward(&h));
        let h = self.drop.forward(&h, ctx);
        let out = self.fc3.forward(&h);
        let mut shape = out.shape();
        assert_eq!(shape.pop(), Some(1));
        ops::reshape(&out, &shape)
    }

    /// Closed-form parameter count for this head topology.
    pub fn expected_params(in_dim: usize) -> usize {
        in_dim * HEAD_HIDDEN[0]
            + HEAD_HIDDEN[0]
            + HEAD_HIDDEN[0] * HEAD_HIDDEN[1]
            + HEAD_HIDDEN[1]
            + HEAD_HIDDEN[1]
            + 1
    }
}

impl<T: Scalar> Module<T> for Head<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        self.fc1.visit_params(&join(prefix, "fc1"), f);
        self.fc2.visit_params(&join(prefix, "fc2"), f);
        self.fc3.visit_params(&join(prefix, "fc3"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smokeynet_autograd::nn::{init::seed_stream, param_count};
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn head_param_count_is_closed_form() {
        let mut rng = seed_stream(1, "head");
        let head = Head::<f32>::new(512, 0.0, &mut rng);
        assert_eq!(param_count(&head), 147_841);
        assert_eq!(Head::<f32>::expected_params(512), 147_841);
    }

    #[test]
    fn head_squeezes_trailing_dim() {
        let mut rng = seed_stream(2, "head2");
        let head = Head::<f64>::new(8, 0.0, &mut rng);
        let x = Tensor::constant(ArrayD::from_elem(IxDyn(&[3, 5, 8]), 0.1f64));
        let y = head.forward(&x, &mut Ctx::eval());
        assert_eq!(y.shape(), vec![3, 5]);
    }

    #[test]
    fn disjoint_modules_add_counts() {
        let mut rng = seed_stream(3, "head3");
        let a = Head::<f32>::new(64, 0.0, &mut rng);
        let b = Head::<f32>::new(128, 0.0, &mut rng);
        let total = param_count(&a) + param_count(&b);
        assert_eq!(
            total,
            Head::<f32>::expected_params(64) + Head::<f32>::expected_params(128)
        );
    }
}
