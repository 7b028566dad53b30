use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mse, SimulatedUser};
use crate::ep::{fit_posterior, refit_after, EpConfig, Fit};
use crate::error::{Error, Result};
use crate::model::{Dataset, Feedback, FeedbackLog, Hyperparameters, QueryKind};
use crate::query::{nonsequential_ranking, select_next_query};
use crate::serial::Versioned;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniformly random order.
    Random,
    /// Greedy expected information gain, recomputed after every answer.
    Sequential,
    /// Order fixed by the expected gains of the feedback-free posterior.
    NonSequential,
    /// Truly relevant features first (random order), then the rest.
    OracleFirst,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Random,
        Strategy::Sequential,
        Strategy::NonSequential,
        Strategy::OracleFirst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Sequential => "sequential",
            Strategy::NonSequential => "non_sequential",
            Strategy::OracleFirst => "oracle_first",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s || st.name().replace('_', "-") == s)
            .ok_or_else(|| Error::InvalidConfig {
                field: "strategy",
                reason: format!("unknown strategy {s:?}"),
            })
    }
}

/// Everything a strategy run needs apart from the strategy itself.
#[derive(Debug, Clone, Copy)]
pub struct RunSetup<'a> {
    pub train: &'a Dataset,
    /// Held-out data for the reported error curve; the training set is used
    /// when absent.
    pub test: Option<&'a Dataset>,
    pub user: &'a SimulatedUser,
    /// Ground-truth relevance, for the oracle ordering and for counting
    /// relevant features found.
    pub relevant: &'a [bool],
    pub h: &'a Hyperparameters,
    pub cfg: &'a EpConfig,
    pub kind: QueryKind,
    /// Continue each refit from the previous sites instead of the prior.
    pub warm_start: bool,
}

/// Curves of one run; index `t` is the state after `t` answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRunResult {
    pub strategy: Strategy,
    pub kind: QueryKind,
    pub seed: u64,
    pub test_mse: Vec<f64>,
    pub train_mse: Vec<f64>,
    pub relevant_found: Vec<usize>,
    pub queries: Vec<usize>,
    pub answers: Vec<Feedback>,
    /// Wall-clock seconds spent choosing each query.
    pub selection_seconds: Vec<f64>,
    pub fit_sweeps: Vec<usize>,
    pub all_converged: bool,
}

impl Versioned for StrategyRunResult {
    const FORMAT: &'static str = "elicit.strategy_run";
    const VERSION: u32 = 1;
}

/// Runs `rounds` query/answer rounds (capped at the number of features).
pub fn run_strategy(
    strategy: Strategy,
    setup: &RunSetup<'_>,
    rounds: usize,
    seed: u64,
) -> Result<StrategyRunResult> {
    let data = setup.train;
    let m = data.m();
    if setup.relevant.len() != m || setup.user.m() != m {
        return Err(Error::Shape(format!(
            "run setup disagrees on the number of features (data {m}, truth {}, user {})",
            setup.relevant.len(),
            setup.user.m()
        )));
    }
    let rounds = rounds.min(m);
    let eval = setup.test.unwrap_or(data);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut log = FeedbackLog::new();
    let mut fit = fit_posterior(data, &log, setup.h, setup.cfg)?;
    let mut out = StrategyRunResult {
        strategy,
        kind: setup.kind,
        seed,
        test_mse: vec![mse(&fit.posterior, eval)?],
        train_mse: vec![mse(&fit.posterior, data)?],
        relevant_found: vec![0],
        queries: Vec::with_capacity(rounds),
        answers: Vec::with_capacity(rounds),
        selection_seconds: Vec::with_capacity(rounds),
        fit_sweeps: vec![fit.diagnostics.sweeps],
        all_converged: fit.diagnostics.converged,
    };

    let fixed_order: Vec<usize> = match strategy {
        Strategy::Random => {
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut rng);
            order
        }
        Strategy::OracleFirst => {
            let (mut hits, mut rest): (Vec<usize>, Vec<usize>) =
                (0..m).partition(|&j| setup.relevant[j]);
            hits.shuffle(&mut rng);
            rest.shuffle(&mut rng);
            hits.extend(rest);
            hits
        }
        Strategy::NonSequential => {
            let started = Instant::now();
            let ranking = nonsequential_ranking(&fit.posterior, data, setup.h, setup.cfg, setup.kind)?;
            tracing::debug!(seconds = started.elapsed().as_secs_f64(), "non-sequential ranking");
            ranking
        }
        Strategy::Sequential => Vec::new(),
    };

    let mut found = 0;
    for round in 0..rounds {
        let started = Instant::now();
        let j = match strategy {
            Strategy::Sequential => {
                select_next_query(&fit.posterior, data, &log, setup.h, setup.cfg, setup.kind)?.selected
            }
            _ => fixed_order[round],
        };
        out.selection_seconds.push(started.elapsed().as_secs_f64());

        let answer = setup.user.answer(j)?;
        log.push(answer.clone(), m)?;
        fit = if setup.warm_start {
            refit_after(data, &log, setup.h, setup.cfg, &fit, &answer)?
        } else {
            fit_posterior(data, &log, setup.h, setup.cfg)?
        };
        record(&mut out, &fit, data, eval)?;
        if setup.relevant[j] {
            found += 1;
        }
        out.relevant_found.push(found);
        out.queries.push(j);
        out.answers.push(answer);
    }
    Ok(out)
}

fn record(out: &mut StrategyRunResult, fit: &Fit, data: &Dataset, eval: &Dataset) -> Result<()> {
    out.test_mse.push(mse(&fit.posterior, eval)?);
    out.train_mse.push(mse(&fit.posterior, data)?);
    out.fit_sweeps.push(fit.diagnostics.sweeps);
    out.all_converged &= fit.diagnostics.converged;
    Ok(())
}

/// Features treated as relevant by the oracle ordering when no ground truth
/// exists: inclusion probability above `threshold` (0.7 for review data).
pub fn relevant_from_inclusion(inclusion_probs: &[f64], threshold: f64) -> Vec<bool> {
    inclusion_probs.iter().map(|&p| p > threshold).collect()
}

/// Pointwise mean of equally long curves.
pub fn mean_curve<'a>(curves: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for c in curves {
        if sum.is_empty() {
            sum = vec![0.0; c.len()];
        }
        for (s, v) in sum.iter_mut().zip(c) {
            *s += v;
        }
        count += 1;
    }
    if count > 0 {
        sum.iter_mut().for_each(|s| *s /= count as f64);
    }
    sum
}

/// Mean test-MSE and relevant-found curves of a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurves {
    pub strategy: Strategy,
    pub runs: usize,
    pub test_mse: Vec<f64>,
    pub train_mse: Vec<f64>,
    pub relevant_found: Vec<f64>,
}

impl MeanCurves {
    /// All runs must share the strategy and length.
    pub fn from_runs(runs: &[StrategyRunResult]) -> Result<Self> {
        let first = runs.first().ok_or_else(|| Error::InvalidConfig {
            field: "runs",
            reason: "no runs to aggregate".into(),
        })?;
        if runs
            .iter()
            .any(|r| r.strategy != first.strategy || r.test_mse.len() != first.test_mse.len())
        {
            return Err(Error::Shape("runs differ in strategy or length".into()));
        }
        let found: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| r.relevant_found.iter().map(|&k| k as f64).collect())
            .collect();
        Ok(Self {
            strategy: first.strategy,
            runs: runs.len(),
            test_mse: mean_curve(runs.iter().map(|r| r.test_mse.as_slice())),
            train_mse: mean_curve(runs.iter().map(|r| r.train_mse.as_slice())),
            relevant_found: mean_curve(found.iter().map(Vec::as_slice)),
        })
    }
}
