use ndarray::IxDyn;
use rand_chacha::ChaCha20Rng;

use super::{init, join, Module};
use crate::ops;
use crate::{Scalar, Tensor};

/// Single-layer LSTM. Input (B, S, In) -> final hidden state (B, H).
///
/// Gate layout follows the usual i, f, g, o packing of the stacked weight
/// matrices.
pub struct Lstm<T: Scalar> {
    pub w_ih: Tensor<T>,
    pub w_hh: Tensor<T>,
    pub b_ih: Tensor<T>,
    pub b_hh: Tensor<T>,
    pub hidden: usize,
}

impl<T: Scalar> Lstm<T> {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha20Rng) -> Self {
        Lstm {
            w_ih: Tensor::param(init::linear_uniform(&[4 * hidden, input], hidden, rng)),
            w_hh: Tensor::param(init::linear_uniform(&[4 * hidden, hidden], hidden, rng)),
            b_ih: Tensor::param(init::linear_uniform(&[4 * hidden], hidden, rng)),
            b_hh: Tensor::param(init::linear_uniform(&[4 * hidden], hidden, rng)),
            hidden,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let shape = x.shape();
        assert_eq!(shape.len(), 3, "lstm input (B, S, In)");
        let (b, steps) = (shape[0], shape[1]);
        let h0 = ndarray::ArrayD::zeros(IxDyn(&[b, self.hidden]));
        let mut h = Tensor::constant(h0.clone());
        let mut c = Tensor::constant(h0);
        for t in 0..steps {
            let xt = ops::index_axis(x, 1, t);
            let gates = ops::add(
                &ops::linear(&xt, &self.w_ih, Some(&self.b_ih)),
                &ops::linear(&h, &self.w_hh, Some(&self.b_hh)),
            );
            let i = ops::sigmoid(&ops::slice_axis(&gates, 1, 0, self.hidden));
            let f = ops::sigmoid(&ops::slice_axis(&gates, 1, self.hidden, self.hidden));
            let g = ops::tanh(&ops::slice_axis(&gates, 1, 2 * self.hidden, self.hidden));
            let o = ops::sigmoid(&ops::slice_axis(&gates, 1, 3 * self.hidden, self.hidden));
            c = ops::add(&ops::mul(&f, &c), &ops::mul(&i, &g));
            h = ops::mul(&o, &ops::tanh(&c));
        }
        h
    }
}

impl<T: Scalar> Module<T> for Lstm<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&join(prefix, "w_ih"), &self.w_ih);
        f(&join(prefix, "w_hh"), &self.w_hh);
        f(&join(prefix, "b_ih"), &self.b_ih);
        f(&join(prefix, "b_hh"), &self.b_hh);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init::seed_stream;
    use ndarray::ArrayD;

    #[test]
    fn lstm_shapes_and_grads() {
        let mut rng = seed_stream(11, "lstm-test");
        let lstm = Lstm::<f64>::new(6, 5, &mut rng);
        let x = Tensor::param(ArrayD::from_elem(IxDyn(&[3, 2, 6]), 0.3f64));
        let h = lstm.forward(&x);
        assert_eq!(h.shape(), vec![3, 5]);
        ops::sum_all(&h).backward();
        assert!(lstm.w_ih.grad().is_some());
        assert!(lstm.w_hh.grad().is_some());
        assert_eq!(x.grad().unwrap().shape(), &[3, 2, 6]);
    }

    #[test]
    fn longer_sequence_changes_state() {
        let mut rng = seed_stream(12, "lstm-test2");
        let lstm = Lstm::<f64>::new(4, 4, &mut rng);
        let x2 = Tensor::constant(ArrayD::from_elem(IxDyn(&[1, 2, 4]), 0.5f64));
        let x3 = Tensor::constant(ArrayD::from_elem(IxDyn(&[1, 3, 4]), 0.5f64));
        let h2 = lstm.forward(&x2);
        let h3 = lstm.forward(&x3);
        let d2 = h2.data();
        let d3 = h3.data();
        assert!(d2.iter().zip(d3.iter()).any(|(a, b)| (a - b).abs() > 1e-9));
    }
}
