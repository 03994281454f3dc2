use std::cell::RefCell;

use ndarray::ArrayD;
use rand_chacha::ChaCha20Rng;

use super::{init, join, Ctx, Module};
use crate::ops::{self, Conv2dSpec, Conv3dSpec};
use crate::{Scalar, Tensor};

pub struct Linear<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, bias: bool, rng: &mut ChaCha20Rng) -> Self {
        let weight = Tensor::param(init::linear_uniform(&[out_dim, in_dim], in_dim, rng));
        let bias = bias.then(|| Tensor::param(init::linear_uniform(&[out_dim], in_dim, rng)));
        Linear { weight, bias }
    }

    /// All-zero affine map; used by fusion layers that tests probe with
    /// constructed weights.
    pub fn zeroed(in_dim: usize, out_dim: usize, bias: bool) -> Self {
        Linear {
            weight: Tensor::param(init::zeros(&[out_dim, in_dim])),
            bias: bias.then(|| Tensor::param(init::zeros(&[out_dim]))),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        ops::linear(x, &self.weight, self.bias.as_ref())
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

impl<T: Scalar> Module<T> for Linear<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

pub struct Conv2dLayer<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub spec: Conv2dSpec,
}

impl<T: Scalar> Conv2dLayer<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        let fan_out = cout * kernel * kernel / groups;
        let weight = Tensor::param(init::kaiming_normal(
            &[cout, cin / groups, kernel, kernel],
            fan_out,
            rng,
        ));
        let bias = bias.then(|| Tensor::param(init::zeros(&[cout])));
        Conv2dLayer {
            weight,
            bias,
            spec: Conv2dSpec::grouped(stride, padding, groups),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        ops::conv2d(x, &self.weight, self.bias.as_ref(), self.spec)
    }
}

impl<T: Scalar> Module<T> for Conv2dLayer<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

pub struct Conv3dLayer<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub spec: Conv3dSpec,
}

impl<T: Scalar> Conv3dLayer<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: (usize, usize, usize),
        stride: (usize, usize, usize),
        padding: (usize, usize, usize),
        bias: bool,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        let fan_out = cout * kernel.0 * kernel.1 * kernel.2;
        let weight = Tensor::param(init::kaiming_normal(
            &[cout, cin, kernel.0, kernel.1, kernel.2],
            fan_out,
            rng,
        ));
        let bias = bias.then(|| Tensor::param(init::zeros(&[cout])));
        Conv3dLayer {
            weight,
            bias,
            spec: Conv3dSpec { stride, padding },
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        ops::conv3d(x, &self.weight, self.bias.as_ref(), self.spec)
    }
}

impl<T: Scalar> Module<T> for Conv3dLayer<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

pub struct BatchNorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: RefCell<ArrayD<T>>,
    pub running_var: RefCell<ArrayD<T>>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::param(init::ones(&[channels])),
            beta: Tensor::param(init::zeros(&[channels])),
            running_mean: RefCell::new(init::zeros(&[channels])),
            running_var: RefCell::new(init::ones(&[channels])),
            momentum: T::of_f64(0.1),
            eps: T::of_f64(1e-5),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let mut rm = self.running_mean.borrow_mut();
        let mut rv = self.running_var.borrow_mut();
        ops::batch_norm(
            x,
            &self.gamma,
            &self.beta,
            &mut rm,
            &mut rv,
            train,
            self.momentum,
            self.eps,
        )
    }
}

impl<T: Scalar> Module<T> for BatchNorm<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_buffers(&self, prefix: &str, f: &mut dyn FnMut(&str, &RefCell<ArrayD<T>>)) {
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }
}

pub struct LayerNormLayer<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub eps: T,
}

impl<T: Scalar> LayerNormLayer<T> {
    pub fn new(dim: usize) -> Self {
        LayerNormLayer {
            gamma: Tensor::param(init::ones(&[dim])),
            beta: Tensor::param(init::zeros(&[dim])),
            eps: T::of_f64(1e-6),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        ops::layer_norm(x, &self.gamma, &self.beta, self.eps)
    }
}

impl<T: Scalar> Module<T> for LayerNormLayer<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }
}

pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        Dropout { p }
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>, ctx: &mut Ctx) -> Tensor<T> {
        if !ctx.train || self.p == 0.0 {
            return x.clone();
        }
        ops::dropout(x, self.p, &mut ctx.rng)
    }
}
