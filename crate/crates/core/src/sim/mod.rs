//! Simulated-expert experiments.
//!
//! A run fits the model, asks a simulated expert about one feature per
//! round according to a [`Strategy`], refits, and records the test error.

mod replay;
mod report;
mod samples;
mod strategy;
mod synthetic;
mod user;

pub use replay::{replay, ElicitationState, PosteriorSummary, SessionArchive, TranscriptEntry};
pub use report::{write_curves_csv, write_sample_table_csv, RunRecord};
pub use samples::{
    added_samples_curve, feedbacks_vs_samples, first_crossing, Crossing, SampleInstance, SampleRow,
    SampleSettings, SampleTable,
};
pub use strategy::{mean_curve, relevant_from_inclusion, run_strategy, MeanCurves, RunSetup, Strategy, StrategyRunResult};
pub use synthetic::{generate_synthetic, generate_with_pool, sample_rows, SyntheticProblem, SyntheticSpec};
pub use user::{build_data_driven_user, SimulatedUser, UserModel};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::posterior::PosteriorApprox;

/// Mean squared error of the posterior-mean predictions on `data`.
pub fn mse(post: &PosteriorApprox, data: &Dataset) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::InvalidDataset("cannot score an empty dataset".into()));
    }
    if data.m() != post.m() {
        return Err(Error::Shape(format!(
            "dataset has {} features, posterior has {}",
            data.m(),
            post.m()
        )));
    }
    let resid = data.y() - post.predict(data);
    Ok(resid.norm_squared() / data.n() as f64)
}
