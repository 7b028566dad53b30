//! How many expert answers are worth how many extra training rows.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::strategy::{mean_curve, run_strategy, RunSetup, Strategy};
use super::{mse, SimulatedUser};
use crate::ep::{fit_posterior, EpConfig};
use crate::error::{Error, Result};
use crate::model::{Dataset, FeedbackLog, Hyperparameters, QueryKind};

/// One replicate: a training set, a pool of extra rows from the same
/// distribution, a test set and a simulated expert.
#[derive(Debug, Clone, Copy)]
pub struct SampleInstance<'a> {
    pub train: &'a Dataset,
    pub pool: &'a Dataset,
    pub test: &'a Dataset,
    pub user: &'a SimulatedUser,
    pub relevant: &'a [bool],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSettings {
    pub h: Hyperparameters,
    pub cfg: EpConfig,
    pub kind: QueryKind,
    /// Largest number of answers or added rows considered.
    pub cap: usize,
    /// Target levels as fractions of the mean feedback-free test MSE.
    pub level_fractions: Vec<f64>,
    pub seed: u64,
}

/// Rounds needed to reach a level, or more than the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Crossing {
    Reached(usize),
    #[serde(with = "beyond")]
    Beyond(usize),
}

mod beyond {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(cap: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!(">{cap}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let s = String::deserialize(d)?;
        s.strip_prefix('>')
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| serde::de::Error::custom(format!("expected \">cap\", got {s:?}")))
    }
}

impl fmt::Display for Crossing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Crossing::Reached(k) => write!(f, "{k}"),
            Crossing::Beyond(cap) => write!(f, ">{cap}"),
        }
    }
}

/// First index at which `curve` is at or below `level`.
pub fn first_crossing(curve: &[f64], level: f64) -> Crossing {
    match curve.iter().position(|&v| v <= level) {
        Some(k) => Crossing::Reached(k),
        None => Crossing::Beyond(curve.len().saturating_sub(1)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub level: f64,
    pub random_feedback: Crossing,
    pub sequential_feedback: Crossing,
    pub added_samples: Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTable {
    pub baseline_mse: f64,
    pub rows: Vec<SampleRow>,
    pub random_feedback_curve: Vec<f64>,
    pub sequential_feedback_curve: Vec<f64>,
    pub added_samples_curve: Vec<f64>,
}

/// Test MSE after adding the first `k` rows of a random permutation of the
/// pool to the training set, for `k = 0..=cap`.
pub fn added_samples_curve(
    train: &Dataset,
    pool: &Dataset,
    test: &Dataset,
    h: &Hyperparameters,
    cfg: &EpConfig,
    cap: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if pool.n() < cap {
        return Err(Error::InvalidDataset(format!(
            "pool has {} rows, {cap} needed",
            pool.n()
        )));
    }
    let mut order: Vec<usize> = (0..pool.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let log = FeedbackLog::new();
    (0..=cap)
        .map(|k| {
            let grown = train.concat_rows(&pool.select_rows(&order[..k]))?;
            let fit = fit_posterior(&grown, &log, h, cfg)?;
            mse(&fit.posterior, test)
        })
        .collect()
}

/// Averages the three curves over the instances, then reads off how many
/// answers or rows each method needs to reach every level.
pub fn feedbacks_vs_samples(instances: &[SampleInstance<'_>], settings: &SampleSettings) -> Result<SampleTable> {
    if instances.is_empty() {
        return Err(Error::InvalidConfig {
            field: "instances",
            reason: "no replicates".into(),
        });
    }
    let mut random = Vec::new();
    let mut sequential = Vec::new();
    let mut samples = Vec::new();
    for (r, inst) in instances.iter().enumerate() {
        let rounds = settings.cap.min(inst.train.m());
        let setup = RunSetup {
            train: inst.train,
            test: Some(inst.test),
            user: inst.user,
            relevant: inst.relevant,
            h: &settings.h,
            cfg: &settings.cfg,
            kind: settings.kind,
            warm_start: false,
        };
        let seed = settings.seed.wrapping_add(r as u64);
        random.push(run_strategy(Strategy::Random, &setup, rounds, seed)?.test_mse);
        sequential.push(run_strategy(Strategy::Sequential, &setup, rounds, seed)?.test_mse);
        samples.push(added_samples_curve(
            inst.train,
            inst.pool,
            inst.test,
            &settings.h,
            &settings.cfg,
            settings.cap,
            seed,
        )?);
    }
    let random = mean_curve(random.iter().map(Vec::as_slice));
    let sequential = mean_curve(sequential.iter().map(Vec::as_slice));
    let samples = mean_curve(samples.iter().map(Vec::as_slice));
    let baseline = samples[0];
    let rows = settings
        .level_fractions
        .iter()
        .map(|&frac| {
            let level = frac * baseline;
            SampleRow {
                level,
                random_feedback: first_crossing(&random, level),
                sequential_feedback: first_crossing(&sequential, level),
                added_samples: first_crossing(&samples, level),
            }
        })
        .collect();
    Ok(SampleTable {
        baseline_mse: baseline,
        rows,
        random_feedback_curve: random,
        sequential_feedback_curve: sequential,
        added_samples_curve: samples,
    })
}
