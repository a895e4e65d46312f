//! Hidden-unit activations and their first derivatives.
//!
//! The analytic Maxwell residual and the analytic gradients both
//! differentiate through the activation, so every member implements an exact
//! closed-form derivative. `relu` makes the residual discontinuous at its
//! kink; it is still pointwise zero off the (measure-zero) kink set, with
//! `relu'(0) = 0` by convention.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// 1/sqrt(2π), for the standard normal density used by `gelu`.
const FRAC_1_SQRT_2PI: f64 = 0.3989422804014326779399460599343818684;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Cos,
    Relu,
    Silu,
    Gelu,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 6] = [
        Activation::Tanh,
        Activation::Cos,
        Activation::Relu,
        Activation::Silu,
        Activation::Gelu,
        Activation::Sigmoid,
    ];

    #[inline]
    pub fn value(self, u: f64) -> f64 {
        match self {
            Activation::Tanh => u.tanh(),
            Activation::Cos => u.cos(),
            Activation::Relu => u.max(0.0),
            Activation::Silu => u * sigmoid(u),
            Activation::Gelu => u * normal_cdf(u),
            Activation::Sigmoid => sigmoid(u),
        }
    }

    /// σ(u) and σ'(u) together; the pair shares subexpressions.
    #[inline]
    pub fn value_and_deriv(self, u: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let a = u.tanh();
                (a, 1.0 - a * a)
            }
            Activation::Cos => (u.cos(), -u.sin()),
            Activation::Relu => {
                if u > 0.0 {
                    (u, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Activation::Silu => {
                let s = sigmoid(u);
                (u * s, s * (1.0 + u * (1.0 - s)))
            }
            Activation::Gelu => {
                let phi = normal_cdf(u);
                let density = (-0.5 * u * u).exp() * FRAC_1_SQRT_2PI;
                (u * phi, phi + u * density)
            }
            Activation::Sigmoid => {
                let s = sigmoid(u);
                (s, s * (1.0 - s))
            }
        }
    }

    #[inline]
    pub fn deriv(self, u: f64) -> f64 {
        self.value_and_deriv(u).1
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Cos => "cos",
            Activation::Relu => "relu",
            Activation::Silu => "silu",
            Activation::Gelu => "gelu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "cos" => Ok(Activation::Cos),
            "relu" => Ok(Activation::Relu),
            "silu" => Ok(Activation::Silu),
            "gelu" => Ok(Activation::Gelu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(format!(
                "unknown activation '{other}' (expected tanh|cos|relu|silu|gelu|sigmoid)"
            )),
        }
    }
}

#[inline]
fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Standard normal CDF via erf; exact to f64 so gradient checks with 1e-5
/// steps are not polluted by approximation error.
#[inline]
fn normal_cdf(u: f64) -> f64 {
    0.5 * (1.0 + libm::erf(u * std::f64::consts::FRAC_1_SQRT_2))
}
