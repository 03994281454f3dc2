use ndarray::{ArrayD, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::should_record;
use crate::{Scalar, Tensor};

fn unary<T: Scalar>(
    a: &Tensor<T>,
    f: impl Fn(T) -> T,
    df: impl Fn(T) -> T + 'static,
) -> Tensor<T> {
    let out = a.data().mapv(&f);
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| {
            let x = ah.data();
            let ga = Zip::from(g).and(&*x).map_collect(|&gv, &xv| gv * df(xv));
            drop(x);
            ah.accumulate_grad_owned(ga);
        }),
    )
}

pub fn relu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    unary(
        a,
        |x| if x > T::zero() { x } else { T::zero() },
        |x| if x > T::zero() { T::one() } else { T::zero() },
    )
}

fn sigmoid_val<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    unary(a, sigmoid_val, |x| {
        let s = sigmoid_val(x);
        s * (T::one() - s)
    })
}

pub fn tanh<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    unary(a, T::tanh, |x| {
        let t = x.tanh();
        T::one() - t * t
    })
}

/// GELU with the tanh approximation used by transformer stacks.
pub fn gelu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let c = T::of_f64(0.7978845608028654); // sqrt(2/pi)
    let k = T::of_f64(0.044715);
    let half = T::of_f64(0.5);
    unary(
        a,
        move |x| {
            let u = c * (x + k * x * x * x);
            half * x * (T::one() + u.tanh())
        },
        move |x| {
            let u = c * (x + k * x * x * x);
            let t = u.tanh();
            let sech2 = T::one() - t * t;
            let du = c * (T::one() + T::of_f64(3.0) * k * x * x);
            half * (T::one() + t) + half * x * sech2 * du
        },
    )
}

/// x * sigmoid(x) (SiLU / swish).
pub fn silu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    unary(
        a,
        |x| x * sigmoid_val(x),
        |x| {
            let s = sigmoid_val(x);
            s * (T::one() + x * (T::one() - s))
        },
    )
}

pub fn hardsigmoid<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let three = T::of_f64(3.0);
    let six = T::of_f64(6.0);
    unary(
        a,
        move |x| ((x + three).max(T::zero()).min(six)) / six,
        move |x| {
            if x > -three && x < three {
                T::one() / six
            } else {
                T::zero()
            }
        },
    )
}

pub fn hardswish<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let three = T::of_f64(3.0);
    let six = T::of_f64(6.0);
    unary(
        a,
        move |x| x * ((x + three).max(T::zero()).min(six)) / six,
        move |x| {
            if x <= -three {
                T::zero()
            } else if x >= three {
                T::one()
            } else {
                (x + x + three) / six
            }
        },
    )
}

/// Softmax along the last axis.
pub fn softmax_last<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let data = a.data();
    let last = data.ndim() - 1;
    let mut out = data.clone();
    drop(data);
    for mut lane in out.lanes_mut(Axis(last)).into_iter() {
        let mut max = lane[0];
        for &v in lane.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = T::zero();
        for v in lane.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in lane.iter_mut() {
            *v = *v / sum;
        }
    }
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    let y = out.clone();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| {
            // dx = y * (g - sum(g * y, last))
            let mut gx = Zip::from(g).and(&y).map_collect(|&gv, &yv| gv * yv);
            let dots = gx.sum_axis(Axis(last)).insert_axis(Axis(last));
            let dots_b = dots.broadcast(y.raw_dim()).expect("softmax grad bcast");
            Zip::from(&mut gx)
                .and(g)
                .and(&y)
                .and(&dots_b)
                .for_each(|o, &gv, &yv, &dv| *o = yv * (gv - dv));
            ah.accumulate_grad_owned(gx);
        }),
    )
}

/// Inverted dropout: keeps are scaled by 1/(1-p) so evaluation is identity.
pub fn dropout<T: Scalar>(a: &Tensor<T>, p: f64, rng: &mut ChaCha20Rng) -> Tensor<T> {
    assert!((0.0..1.0).contains(&p), "dropout probability in [0,1)");
    if p == 0.0 {
        return a.clone();
    }
    let keep = 1.0 - p;
    let scale = T::of_f64(1.0 / keep);
    let mask: ArrayD<T> = a.data().mapv(|_| {
        if rng.random::<f64>() < keep {
            scale
        } else {
            T::zero()
        }
    });
    let out = Zip::from(&*a.data()).and(&mask).map_collect(|&x, &m| x * m);
    if !should_record(&[a]) {
        return Tensor::constant(out);
    }
    let ah = a.clone();
    Tensor::from_op(
        out,
        vec![a.clone()],
        Box::new(move |g| {
            let gx = Zip::from(g).and(&mask).map_collect(|&gv, &m| gv * m);
            ah.accumulate_grad_owned(gx);
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::sum_all;
    use ndarray::IxDyn;

    #[test]
    fn sigmoid_threshold_duality() {
        // logistic(z) > 0.5 exactly when z > 0
        for &z in &[-3.0f64, -1e-12, 0.0, 1e-12, 2.5] {
            let p = sigmoid_val(z);
            assert_eq!(p > 0.5, z > 0.0, "z = {z}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::constant(
            ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![1.0f64, 2.0, 3.0, -1.0, 0.0, 1.0])
                .unwrap(),
        );
        let y = softmax_last(&x);
        let d = y.data();
        for row in d.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_masks_gradient() {
        let x = Tensor::param(
            ArrayD::from_shape_vec(IxDyn(&[3]), vec![-1.0f64, 0.5, 2.0]).unwrap(),
        );
        sum_all(&relu(&x)).backward();
        assert_eq!(x.grad().unwrap().as_slice().unwrap(), &[0.0, 1.0, 1.0]);
    }
}
