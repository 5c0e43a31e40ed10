//! One-parameter exponential families with closed-form KL divergences.
//!
//! All logarithms are natural logarithms.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp applied to empirical means that fall on (or outside) the boundary of
/// an open mean domain, so that divergences stay finite in early rounds.
pub const MEAN_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    Bernoulli,
    /// Gaussian arms sharing one known standard deviation.
    Gaussian {
        sigma: f64,
    },
    Poisson,
}

impl FamilyKind {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(FamilyKind::Gaussian { sigma })
        } else {
            Err(Error::InvalidFamily(format!(
                "gaussian sigma must be positive and finite, got {sigma}"
            )))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilyKind::Bernoulli => "bernoulli",
            FamilyKind::Gaussian { .. } => "gaussian",
            FamilyKind::Poisson => "poisson",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FamilyKind::Gaussian { sigma } => FamilyKind::gaussian(sigma).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn is_valid_mean(&self, mean: f64) -> bool {
        match self {
            FamilyKind::Bernoulli => mean > 0.0 && mean < 1.0,
            FamilyKind::Gaussian { .. } => mean.is_finite(),
            FamilyKind::Poisson => mean > 0.0 && mean.is_finite(),
        }
    }

    pub fn check_mean(&self, mean: f64) -> Result<f64> {
        if self.is_valid_mean(mean) {
            Ok(mean)
        } else {
            Err(Error::MeanDomain {
                family: self.name(),
                mean,
            })
        }
    }

    /// Map an empirical mean into the open mean domain.
    pub fn clamp_mean(&self, mean: f64) -> f64 {
        match self {
            FamilyKind::Bernoulli => mean.clamp(MEAN_CLAMP, 1.0 - MEAN_CLAMP),
            FamilyKind::Gaussian { .. } => mean,
            FamilyKind::Poisson => mean.max(MEAN_CLAMP),
        }
    }

    /// Variance of the member with mean `mean`; `d(mu, .)` has derivative
    /// `(lambda - mu) / variance(lambda)`.
    pub(crate) fn variance(&self, mean: f64) -> f64 {
        match *self {
            FamilyKind::Gaussian { sigma } => sigma * sigma,
            FamilyKind::Bernoulli => mean * (1.0 - mean),
            FamilyKind::Poisson => mean,
        }
    }

    /// Closed-form divergence `d(mu, lambda)` without domain checks.
    ///
    /// Callers inside the crate only pass means that were validated or
    /// clamped; pooled means are convex combinations of such values.
    pub(crate) fn kl_unchecked(&self, mu: f64, lambda: f64) -> f64 {
        if mu == lambda {
            return 0.0;
        }
        let value = match *self {
            FamilyKind::Gaussian { sigma } => (mu - lambda).powi(2) / (2.0 * sigma * sigma),
            FamilyKind::Bernoulli => mu * (mu / lambda).ln() + (1.0 - mu) * ((1.0 - mu) / (1.0 - lambda)).ln(),
            FamilyKind::Poisson => lambda - mu + mu * (mu / lambda).ln(),
        };
        // Rounding can push values within a few ulps below zero.
        value.max(0.0)
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::Gaussian { sigma } => write!(f, "gaussian(sigma={sigma})"),
            other => f.write_str(other.name()),
        }
    }
}

/// KL divergence `d(mu, lambda)` between two members of `kind`.
pub fn kl_div(kind: FamilyKind, mu: f64, lambda: f64) -> Result<f64> {
    kind.validate()?;
    kind.check_mean(mu)?;
    kind.check_mean(lambda)?;
    Ok(kind.kl_unchecked(mu, lambda))
}

/// Bernoulli KL `kl(x, y)` on the closed interval, with `kl(0,0) = kl(1,1) = 0`
/// and `+inf` when `y` is on the boundary and `x` differs.
pub fn binary_kl(x: f64, y: f64) -> f64 {
    if x == y {
        return 0.0;
    }
    if y <= 0.0 || y >= 1.0 {
        return f64::INFINITY;
    }
    let mut value = 0.0;
    if x > 0.0 {
        value += x * (x / y).ln();
    }
    if x < 1.0 {
        value += (1.0 - x) * ((1.0 - x) / (1.0 - y)).ln();
    }
    value.max(0.0)
}

/// One arm: a family together with its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub kind: FamilyKind,
    pub mean: f64,
}

impl ArmModel {
    pub fn new(kind: FamilyKind, mean: f64) -> Result<Self> {
        kind.validate()?;
        kind.check_mean(mean)?;
        Ok(ArmModel { kind, mean })
    }
}

/// Draw one reward from `model`.
pub fn sample<R: Rng + ?Sized>(model: &ArmModel, rng: &mut R) -> f64 {
    match model.kind {
        FamilyKind::Bernoulli => {
            // inverse CDF
            if rng.random::<f64>() < model.mean {
                1.0
            } else {
                0.0
            }
        }
        FamilyKind::Gaussian { sigma } => Normal::new(model.mean, sigma)
            .expect("validated gaussian parameters")
            .sample(rng),
        FamilyKind::Poisson => Poisson::new(model.mean).expect("validated poisson mean").sample(rng),
    }
}
