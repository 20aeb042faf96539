use serde::{Deserialize, Serialize};

use crate::error::{IsnnError, Result};

/// Training objective family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Label-consistent: illegal inputs keep true labels, their CE is pushed up.
    Lc,
    /// Label-inconsistent: illegal inputs are trained toward deranged labels.
    Li,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Lc => "lc",
            Method::Li => "li",
        })
    }
}

/// How the balance weight lambda is chosen per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    Fixed,
    /// lambda_t = detach(L1) / (|L2 or L3| + 1e-8), recomputed per batch.
    Ratio,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub lambda: f64,
    pub lambda_mode: LambdaMode,
    pub epsilon: i64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Cap on the negated illegal CE term, in units of ln(C).
    pub l2_cap_gamma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Lc,
            lambda: 1.0,
            lambda_mode: LambdaMode::Fixed,
            epsilon: 8,
            epochs: 15,
            batch_size: 128,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            l2_cap_gamma: 2.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return Err(IsnnError::InvalidArgument(format!(
                "batch_size must be even and positive, got {}",
                self.batch_size
            )));
        }
        if !(0..=16).contains(&self.epsilon) {
            return Err(IsnnError::EpsilonOutOfRange(self.epsilon));
        }
        if self.lambda < 0.0 || self.l2_cap_gamma <= 0.0 {
            return Err(IsnnError::InvalidArgument(
                "lambda must be >= 0 and l2_cap_gamma > 0".into(),
            ));
        }
        Ok(())
    }
}
