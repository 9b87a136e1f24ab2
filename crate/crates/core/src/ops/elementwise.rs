use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Sigmoid,
    LeakyRelu(f64),
    Gelu,
}

pub(crate) fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn gelu_scalar<T: Scalar>(v: T) -> T {
    T::lit(0.5) * v * (T::one() + (v * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn gelu_derivative<T: Scalar>(v: T) -> T {
    let cdf = T::lit(0.5) * (T::one() + (v * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(v * v) * T::lit(0.5)).exp() * T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    cdf + v * pdf
}

pub fn activation<T: Scalar>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Sigmoid => x.map(sigmoid_scalar),
        Activation::LeakyRelu(slope) => {
            let s = T::lit(slope);
            x.map(|v| if v >= T::zero() { v } else { s * v })
        }
        Activation::Gelu => x.map(gelu_scalar),
    }
}

/// Vector-Jacobian product of [`activation`]; `output` is the forward result.
pub(crate) fn activation_backward<T: Scalar>(
    kind: Activation,
    input: &Tensor<T>,
    output: &Tensor<T>,
    grad_out: &[T],
) -> Tensor<T> {
    let mut dx = Tensor::zeros(input.shape());
    let d = dx.data_mut();
    match kind {
        Activation::Sigmoid => {
            for ((o, &y), &g) in d.iter_mut().zip(output.data()).zip(grad_out) {
                *o = g * y * (T::one() - y);
            }
        }
        Activation::LeakyRelu(slope) => {
            let s = T::lit(slope);
            for ((o, &v), &g) in d.iter_mut().zip(input.data()).zip(grad_out) {
                *o = if v >= T::zero() { g } else { s * g };
            }
        }
        Activation::Gelu => {
            for ((o, &v), &g) in d.iter_mut().zip(input.data()).zip(grad_out) {
                *o = g * gelu_derivative(v);
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64, kind: Activation) -> f64 {
        activation(&Tensor::scalar(v), kind).data()[0]
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        assert_eq!(one(0.0, Activation::Sigmoid), 0.5);
    }

    #[test]
    fn leaky_relu_negative_slope() {
        assert!((one(-2.0, Activation::LeakyRelu(0.01)) + 0.02).abs() < 1e-15);
        assert_eq!(one(3.0, Activation::LeakyRelu(0.01)), 3.0);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        // 1/(1+e^40) ≈ 4.248e-18
        assert!((one(40.0, Activation::Sigmoid) - 1.0).abs() <= 1e-12);
        assert!(one(-40.0, Activation::Sigmoid).abs() <= 1e-12);
        assert!(one(-40.0, Activation::Sigmoid) > 0.0);
        assert_eq!(one(-1000.0, Activation::Sigmoid), 0.0);
        assert!(activation(&Tensor::<f32>::scalar(-100.0), Activation::Sigmoid).data()[0].is_finite());
    }

    #[test]
    fn gelu_reference_points() {
        // Φ(1) = 0.8413447460685429
        assert!((one(1.0, Activation::Gelu) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert_eq!(one(0.0, Activation::Gelu), 0.0);
    }
}
