use std::path::Path;

use serde::{Deserialize, Serialize};

use super::samples::SampleTable;
use super::strategy::{MeanCurves, StrategyRunResult};
use super::synthetic::SyntheticSpec;
use crate::ep::EpConfig;
use crate::error::Result;
use crate::model::Hyperparameters;
use crate::serial::Versioned;

/// One run together with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub crate_version: String,
    pub spec: SyntheticSpec,
    pub hyperparameters: Hyperparameters,
    pub ep_config: EpConfig,
    /// Standard deviation of simulated value answers, or the correctness
    /// probability of simulated relevance answers.
    pub user_noise: f64,
    pub user_seed: u64,
    pub rounds: usize,
    pub result: StrategyRunResult,
}

impl RunRecord {
    pub fn new(
        spec: SyntheticSpec,
        hyperparameters: Hyperparameters,
        ep_config: EpConfig,
        user_noise: f64,
        user_seed: u64,
        rounds: usize,
        result: StrategyRunResult,
    ) -> Self {
        Self {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            spec,
            hyperparameters,
            ep_config,
            user_noise,
            user_seed,
            rounds,
            result,
        }
    }
}

impl Versioned for RunRecord {
    const FORMAT: &'static str = "elicit.run_record";
    const VERSION: u32 = 1;
}

/// Long-format CSV: `strategy,round,test_mse,train_mse,relevant_found`.
pub fn write_curves_csv(path: &Path, curves: &[MeanCurves]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "round", "test_mse", "train_mse", "relevant_found"])
        .map_err(csv_err)?;
    for c in curves {
        for t in 0..c.test_mse.len() {
            w.write_record([
                c.strategy.name().to_string(),
                t.to_string(),
                c.test_mse[t].to_string(),
                c.train_mse[t].to_string(),
                c.relevant_found[t].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(path, w)
}

/// `level,random_feedback,sequential_feedback,added_samples`; unreached
/// levels are written as `>cap`.
pub fn write_sample_table_csv(path: &Path, table: &SampleTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["level", "random_feedback", "sequential_feedback", "added_samples"])
        .map_err(csv_err)?;
    for row in &table.rows {
        w.write_record([
            row.level.to_string(),
            row.random_feedback.to_string(),
            row.sequential_feedback.to_string(),
            row.added_samples.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(path, w)
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    crate::serial::write_atomic(path, &bytes)
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}
