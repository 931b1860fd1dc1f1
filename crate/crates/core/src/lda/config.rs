use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total Dirichlet mass of the default community prior: alpha = 50 / K.
pub const DEFAULT_ALPHA_MASS: f64 = 50.0;
pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_ITERATIONS: usize = 2000;
pub const DEFAULT_BURN_IN: usize = 1000;

/// Dirichlet prior on community assignment vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Alpha {
    /// Symmetric `50 / K`, resolved against the configured K.
    Default,
    Symmetric(f64),
    Vector(Vec<f64>),
}

/// Dirichlet prior on activity pattern profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Prior {
    Symmetric(f64),
    Vector(Vec<f64>),
}

impl Prior {
    pub fn resolve(&self, len: usize) -> Result<Vec<f64>> {
        let v = match self {
            Prior::Symmetric(x) => vec![*x; len],
            Prior::Vector(v) if v.len() == len => v.clone(),
            Prior::Vector(v) => {
                return Err(Error::validation(format!(
                    "prior vector has length {}, expected {len}",
                    v.len()
                )))
            }
        };
        check_positive(&v)?;
        Ok(v)
    }
}

fn check_positive(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(())
    } else {
        Err(Error::validation("prior entries must be finite and > 0"))
    }
}

/// How the posterior-mean W and H are formed from the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Average of the smoothed count ratios over every post-burn-in sweep.
    PosteriorMean,
    /// Smoothed count ratios of the final sweep only.
    LastSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: Alpha,
    pub beta: Prior,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl LdaConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        LdaConfig {
            k,
            alpha: Alpha::Default,
            beta: Prior::Symmetric(DEFAULT_BETA),
            iterations: DEFAULT_ITERATIONS,
            burn_in: DEFAULT_BURN_IN,
            seed,
            estimator: Estimator::PosteriorMean,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Alpha::Symmetric(alpha);
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Prior::Symmetric(beta);
        self
    }

    pub fn with_sweeps(mut self, iterations: usize, burn_in: usize) -> Self {
        self.iterations = iterations;
        self.burn_in = burn_in;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::validation("K must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::validation("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::validation(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        self.alpha_vector()?;
        if let Prior::Symmetric(b) = self.beta {
            check_positive(&[b])?;
        }
        Ok(())
    }

    pub fn alpha_vector(&self) -> Result<Vec<f64>> {
        match &self.alpha {
            Alpha::Default => Prior::Symmetric(DEFAULT_ALPHA_MASS / self.k as f64).resolve(self.k),
            Alpha::Symmetric(a) => Prior::Symmetric(*a).resolve(self.k),
            Alpha::Vector(v) => Prior::Vector(v.clone()).resolve(self.k),
        }
    }

    pub fn beta_vector(&self, n_locations: usize) -> Result<Vec<f64>> {
        self.beta.resolve(n_locations)
    }

    /// Number of sweeps entering the estimate.
    pub fn retained_sweeps(&self) -> usize {
        match self.estimator {
            Estimator::PosteriorMean => self.iterations - self.burn_in,
            Estimator::LastSweep => 1,
        }
    }
}
