use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative at input `x` given the already computed output `y`.
    #[inline]
    fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

pub fn activation<T: Scalar>(kind: Activation, x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| kind.apply(v))
}

/// Cotangent of the activation input; `x` is the forward input.
pub fn activation_vjp<T: Scalar>(kind: Activation, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    dy.expect_dims(x.dims())?;
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&xi, &g)| g * kind.derivative(xi, kind.apply(xi)))
        .collect();
    Tensor::new(x.dims(), data)
}

/// Same as [`activation_vjp`] but reusing the forward output `y`.
pub(crate) fn activation_vjp_from_output<T: Scalar>(kind: Activation, y: &[T], dy: &mut [T]) {
    for (g, &yi) in dy.iter_mut().zip(y) {
        // relu: y > 0 iff x > 0
        *g = *g * kind.derivative(yi, yi);
    }
}
