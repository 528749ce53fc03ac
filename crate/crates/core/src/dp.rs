//! Differential-privacy primitives: a seeded noise stream, the Laplace and
//! exponential mechanisms, and budget bookkeeping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Derive an independent 64-bit seed from a parent seed and a stage label.
///
/// Adding a new labeled stage never shifts the stream of an existing one.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(label.as_bytes()).finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Deterministic source of privacy noise.
///
/// A disabled source models the `epsilon -> infinity` limit: Laplace draws
/// are exactly zero and the exponential mechanism returns the arg-max.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    seed: u64,
    rng: ChaCha20Rng,
    draws: u64,
    disabled: bool,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha20Rng::seed_from_u64(seed), draws: 0, disabled: false }
    }

    /// Noise-free source for tests and limit-case checks.
    pub fn disabled() -> Self {
        Self { disabled: true, ..Self::new(0) }
    }

    pub fn is_disabled(&self) -> bool {
        self.disabled
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of uniform draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Child source for a labeled stage; inherits the disabled flag.
    pub fn derive(&self, label: &str) -> NoiseSource {
        let mut child = NoiseSource::new(derive_seed(self.seed, label));
        child.disabled = self.disabled;
        child
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// One draw from Laplace(0, scale) by inverting the CDF of a single
    /// uniform draw.
    pub fn laplace(&mut self, scale: f64) -> Result<f64> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!("laplace scale must be positive, got {scale}")));
        }
        if self.disabled {
            return Ok(0.0);
        }
        let u = self.uniform() - 0.5;
        Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
    }

    /// Exponential mechanism: sample index `i` with probability proportional
    /// to `exp(eps_share * scores[i] / (2 * sensitivity))`.
    ///
    /// The maximum score is subtracted before exponentiation, so any finite
    /// scores are safe.
    pub fn exp_mechanism_select(&mut self, scores: &[f64], eps_share: f64, sensitivity: f64) -> Result<usize> {
        if scores.is_empty() {
            return Err(Error::InvalidParameter("exponential mechanism needs at least one score".into()));
        }
        if !(sensitivity > 0.0) || !(eps_share > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "exponential mechanism needs positive epsilon and sensitivity, got {eps_share} and {sensitivity}"
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite score {bad}")));
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.disabled {
            return Ok(scores.iter().position(|&s| s == max).unwrap());
        }
        let coeff = eps_share / (2.0 * sensitivity);
        let weights: Vec<f64> = scores.iter().map(|&s| (coeff * (s - max)).exp()).collect();
        let total: f64 = weights.iter().sum();
        let target = self.uniform() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return Ok(i);
            }
        }
        // rounding left target at the very top of the range
        Ok(weights.iter().rposition(|&w| w > 0.0).unwrap())
    }
}

/// Total budget and its four-way split.
///
/// `eps1` pays for noisy partition costs, `eps2` for region densities,
/// `eps3` for query selection and `eps4` for measuring the selected query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub iterations: usize,
}

impl PrivacyBudget {
    /// Equal split, `epsilon / 4` per part.
    pub fn split(epsilon: f64, iterations: usize) -> Result<Self> {
        Self::with_weights(epsilon, [1.0, 1.0, 1.0, 1.0], iterations)
    }

    /// Split proportionally to non-negative weights.
    pub fn with_weights(epsilon: f64, weights: [f64; 4], iterations: usize) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w > 0.0)) || !total.is_finite() {
            return Err(Error::InvalidParameter(format!("budget weights must be positive, got {weights:?}")));
        }
        let part = |w: f64| epsilon * w / total;
        Ok(Self {
            epsilon,
            eps1: part(weights[0]),
            eps2: part(weights[1]),
            eps3: part(weights[2]),
            eps4: part(weights[3]),
            iterations,
        })
    }

    /// Per-iteration share for query selection, `eps3 / T`.
    pub fn selection_share(&self) -> f64 {
        self.eps3 / self.iterations as f64
    }

    /// Per-iteration share for measurement, `eps4 / T`.
    pub fn measurement_share(&self) -> f64 {
        self.eps4 / self.iterations as f64
    }

    /// Laplace scale of the measurement noise, `T / eps4`.
    pub fn measurement_scale(&self) -> f64 {
        self.iterations as f64 / self.eps4
    }
}

/// Equal four-way split of `epsilon` for a run of `iterations` rounds.
pub fn split_budget(epsilon: f64, iterations: usize) -> Result<PrivacyBudget> {
    PrivacyBudget::split(epsilon, iterations)
}

/// Running ledger of privacy spend under sequential composition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetAccountant {
    limit: f64,
    charges: Vec<(String, f64)>,
}

impl BudgetAccountant {
    pub fn new(limit: f64) -> Self {
        Self { limit, charges: Vec::new() }
    }

    pub fn limit(&self) -> f64 {
        self.limit
    }

    /// Record a spend; fails if the total would exceed the limit.
    pub fn charge(&mut self, label: &str, epsilon: f64) -> Result<()> {
        let after = self.spent() + epsilon;
        if after > self.limit * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "privacy budget exceeded by '{label}': {after} > {}",
                self.limit
            )));
        }
        self.charges.push((label.to_string(), epsilon));
        Ok(())
    }

    pub fn spent(&self) -> f64 {
        self.charges.iter().map(|(_, e)| e).sum()
    }

    pub fn remaining(&self) -> f64 {
        (self.limit - self.spent()).max(0.0)
    }

    pub fn charges(&self) -> &[(String, f64)] {
        &self.charges
    }
}
