use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ep::{fit_posterior, EpConfig, FitDiagnostics};
use crate::error::{Error, Result};
use crate::model::{Dataset, Feedback, FeedbackLog, GroundTruth, Hyperparameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserModel {
    /// Knows every coefficient up to Gaussian noise with standard deviation `omega`.
    ValueOracle { w_true: Vec<f64>, omega: f64 },
    /// Knows which coefficients are non-zero, answering correctly with
    /// probability `pi`.
    RelevanceOracle { gamma_true: Vec<bool>, pi: f64 },
    /// Answers from inclusion probabilities learned on held-out data:
    /// relevant above `pi`, not relevant below `1 - pi`, uncertain otherwise.
    DataDrivenRelevance { inclusion_probs: Vec<f64>, pi: f64 },
}

/// A simulated expert. Each feature's answer comes from its own seeded
/// random stream, so the answer does not depend on when it is asked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedUser {
    pub model: UserModel,
    pub seed: u64,
}

impl SimulatedUser {
    pub fn value_oracle(truth: &GroundTruth, omega: f64, seed: u64) -> Self {
        Self {
            model: UserModel::ValueOracle {
                w_true: truth.w.clone(),
                omega,
            },
            seed,
        }
    }

    pub fn relevance_oracle(truth: &GroundTruth, pi: f64, seed: u64) -> Self {
        Self {
            model: UserModel::RelevanceOracle {
                gamma_true: truth.gamma.clone(),
                pi,
            },
            seed,
        }
    }

    pub fn m(&self) -> usize {
        match &self.model {
            UserModel::ValueOracle { w_true, .. } => w_true.len(),
            UserModel::RelevanceOracle { gamma_true, .. } => gamma_true.len(),
            UserModel::DataDrivenRelevance { inclusion_probs, .. } => inclusion_probs.len(),
        }
    }

    fn stream(&self, j: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(j as u64);
        rng
    }

    /// The user's answer about feature `j`.
    pub fn answer(&self, j: usize) -> Result<Feedback> {
        if j >= self.m() {
            return Err(Error::FeatureIndex { index: j, m: self.m() });
        }
        Ok(match &self.model {
            UserModel::ValueOracle { w_true, omega } => {
                let z: f64 = self.stream(j).sample(StandardNormal);
                Feedback::value(j, w_true[j] + omega * z)
            }
            UserModel::RelevanceOracle { gamma_true, pi } => {
                let correct = self.stream(j).gen::<f64>() < *pi;
                Feedback::relevance(j, gamma_true[j] == correct)
            }
            UserModel::DataDrivenRelevance { inclusion_probs, pi } => {
                let p = inclusion_probs[j];
                if p > *pi {
                    Feedback::relevance(j, true)
                } else if p < 1.0 - pi {
                    Feedback::relevance(j, false)
                } else {
                    Feedback::uncertain(j)
                }
            }
        })
    }
}

/// Fits the model on `user_data` alone and keeps its inclusion probabilities
/// as the simulated expert's knowledge. The answer threshold is `h.pi`.
pub fn build_data_driven_user(
    user_data: &Dataset,
    h: &Hyperparameters,
    cfg: &EpConfig,
) -> Result<(SimulatedUser, FitDiagnostics)> {
    if user_data.n() == 0 {
        return Err(Error::InvalidDataset("user data partition is empty".into()));
    }
    let fit = fit_posterior(user_data, &FeedbackLog::new(), h, cfg)?;
    let user = SimulatedUser {
        model: UserModel::DataDrivenRelevance {
            inclusion_probs: fit.posterior.rho_bar().iter().copied().collect(),
            pi: h.pi,
        },
        seed: 0,
    };
    Ok((user, fit.diagnostics))
}
