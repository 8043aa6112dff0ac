use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Mish,
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "mish" => Ok(Activation::Mish),
            _ => Err(format!("unknown activation {s:?} (relu|sigmoid|mish)")),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Mish => mish(x),
        }
    }

    /// d/dx evaluated at the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Mish => {
                let t = softplus(x).tanh();
                t + x * (1.0 - t * t) * sigmoid(x)
            }
        }
    }
}

pub fn activation(input: &Tensor, kind: Activation) -> Result<Tensor> {
    input.map(|x| kind.apply(x)).checked_output("activation")
}

pub fn activation_backward(input: &Tensor, kind: Activation, upstream: &Tensor) -> Result<Tensor> {
    input.zip_map(upstream, |x, g| g * kind.derivative(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(Activation::Relu.apply(-1.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(mish(0.0), 0.0);
        assert!((mish(20.0) - 20.0).abs() < 1e-6);
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!(mish(-1000.0).is_finite());
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(1000.0) <= 1.0);
    }

    #[test]
    fn mish_reference_values() {
        // x * tanh(ln(1 + e^x)) evaluated independently
        for &x in &[-3.0f64, -0.5, 0.7, 2.5] {
            let want = x * ((1.0 + x.exp()).ln()).tanh();
            assert!((mish(x) - want).abs() < 1e-14, "x={x}");
        }
    }
}
