//! Exponential dispersion families with canonical link.
//!
//! A family is described by its cumulant generator `b(θ)`; the conditional
//! mean is `b'(θ)` and the variance function `b''(θ)`. Both shipped families
//! have unit dispersion `a(φ) = 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// Natural-parameter cap for the Poisson family, where `e^θ` is still finite.
pub const POISSON_THETA_CAP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Poisson,
    #[serde(alias = "binomial")]
    Bernoulli,
}

/// `b(θ)`, `b'(θ)`, `b''(θ)` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cumulant {
    pub b: f64,
    pub mean: f64,
    pub variance: f64,
}

fn sigmoid(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + (-theta).exp())
    } else {
        let e = theta.exp();
        e / (1.0 + e)
    }
}

fn softplus(theta: f64) -> f64 {
    if theta > 0.0 {
        theta + (-theta).exp().ln_1p()
    } else {
        theta.exp().ln_1p()
    }
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::Bernoulli => "bernoulli",
        }
    }

    /// `a(φ)`.
    pub fn dispersion(self) -> f64 {
        1.0
    }

    pub fn cumulant(self, theta: f64) -> Result<Cumulant> {
        self.check_theta(theta)?;
        Ok(match self {
            Family::Poisson => {
                let e = theta.exp();
                Cumulant {
                    b: e,
                    mean: e,
                    variance: e,
                }
            }
            Family::Bernoulli => {
                let s = sigmoid(theta);
                Cumulant {
                    b: softplus(theta),
                    mean: s,
                    variance: self.variance(theta),
                }
            }
        })
    }

    pub(crate) fn check_theta(self, theta: f64) -> Result<()> {
        if !theta.is_finite() || (self == Family::Poisson && theta > POISSON_THETA_CAP) {
            return Err(Error::Overflow {
                theta,
                cap: POISSON_THETA_CAP,
            });
        }
        Ok(())
    }

    /// `b(θ)` without the overflow check.
    #[inline]
    pub fn b(self, theta: f64) -> f64 {
        match self {
            Family::Poisson => theta.exp(),
            Family::Bernoulli => softplus(theta),
        }
    }

    /// `b(θ + d) - b(θ)`, accurate for small `d`.
    #[inline]
    pub fn b_increment(self, theta: f64, d: f64) -> f64 {
        if d.abs() > 1.0 {
            return self.b(theta + d) - self.b(theta);
        }
        match self {
            Family::Poisson => theta.exp() * d.exp_m1(),
            Family::Bernoulli => (sigmoid(theta) * d.exp_m1()).ln_1p(),
        }
    }

    /// `b'(θ)`, the conditional mean.
    #[inline]
    pub fn mean(self, theta: f64) -> f64 {
        match self {
            Family::Poisson => theta.exp(),
            Family::Bernoulli => sigmoid(theta),
        }
    }

    /// `b''(θ)`, the variance function.
    #[inline]
    pub fn variance(self, theta: f64) -> f64 {
        match self {
            Family::Poisson => theta.exp(),
            Family::Bernoulli => {
                let e = (-theta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    /// Inverse of `b'`: the natural parameter with the given mean.
    pub fn link(self, mean: f64) -> f64 {
        match self {
            Family::Poisson => mean.ln(),
            Family::Bernoulli => (mean / (1.0 - mean)).ln(),
        }
    }

    /// Clamps a sample mean into the interior of the mean space.
    pub fn clamp_mean(self, mean: f64, n: usize) -> f64 {
        let n = n as f64;
        match self {
            Family::Poisson => mean.max(1.0 / (n + 1.0)),
            Family::Bernoulli => mean.clamp(1.0 / (n + 1.0), n / (n + 1.0)),
        }
    }

    pub fn in_support(self, y: f64) -> bool {
        match self {
            Family::Poisson => y >= 0.0 && y.is_finite() && y.fract() == 0.0,
            Family::Bernoulli => y == 0.0 || y == 1.0,
        }
    }

    pub fn check_response(self, y: &[f64]) -> Result<()> {
        match y.iter().find(|&&v| !self.in_support(v)) {
            Some(&value) => Err(Error::Domain {
                family: self.name(),
                value,
            }),
            None => Ok(()),
        }
    }

    /// Squared Pearson residual `(y - b'(θ))^2 / (b''(θ) a(φ))`.
    pub fn pearson_sq(self, y: f64, theta: f64) -> Result<f64> {
        if !self.in_support(y) {
            return Err(Error::Domain {
                family: self.name(),
                value: y,
            });
        }
        self.check_theta(theta)?;
        Ok(self.pearson_sq_unchecked(y, theta))
    }

    #[inline]
    pub(crate) fn pearson_sq_unchecked(self, y: f64, theta: f64) -> f64 {
        let r = y - self.mean(theta);
        r * r / (self.variance(theta) * self.dispersion())
    }

    /// Log-likelihood kernel `Σ (y θ - b(θ)) / a(φ)`, without `c(y; φ)`.
    pub fn loglik_kernel(self, y: &[f64], theta: &[f64]) -> Result<f64> {
        if y.len() != theta.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                found: theta.len(),
            });
        }
        self.check_response(y)?;
        for &t in theta {
            self.check_theta(t)?;
        }
        Ok(self.loglik_unchecked(y, theta))
    }

    #[inline]
    pub(crate) fn loglik_unchecked(self, y: &[f64], theta: &[f64]) -> f64 {
        y.iter()
            .zip(theta)
            .map(|(&yi, &t)| yi * t - self.b(t))
            .sum::<f64>()
            / self.dispersion()
    }

    /// Draws a response with natural parameter `θ` by inverting the
    /// conditional CDF at `lower` (with `upper = 1 - lower`).
    pub fn quantile(self, theta: f64, lower: f64, upper: f64) -> f64 {
        match self {
            Family::Poisson => special::poisson_quantile(theta.exp(), lower, upper) as f64,
            Family::Bernoulli => {
                // Y = 1 iff U > 1 - σ(θ)
                if upper < sigmoid(theta) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" => Ok(Family::Poisson),
            "binomial" | "bernoulli" | "logistic" => Ok(Family::Bernoulli),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }
}
