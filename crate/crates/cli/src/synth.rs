use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use elicit_core::ep::{fit_posterior, EpConfig};
use elicit_core::model::{Dataset, FeedbackLog, Hyperparameters, QueryKind};
use elicit_core::serial::{self, Versioned};
use elicit_core::sim::{
    build_data_driven_user, generate_synthetic, relevant_from_inclusion, run_strategy, write_curves_csv,
    MeanCurves, RunRecord, RunSetup, SimulatedUser, Strategy, StrategyRunResult,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{kind_name, synthetic_base, KindArg, ModelArgs, RunArgs, SpecArgs, StrategyArg};
use crate::output::{ensure_dir, save, write_csv};

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Feature counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [30, 100])]
    pub m_grid: Vec<usize>,
    /// Training-set sizes to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [10])]
    pub n_grid: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [KindArg::Value, KindArg::Relevance])]
    pub kinds: Vec<KindArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [StrategyArg::Random, StrategyArg::Sequential])]
    pub strategies: Vec<StrategyArg>,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Training rows of the synthetic problem.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Features of the synthetic problem.
    #[arg(long, default_value_t = 30)]
    pub m: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [KindArg::Value, KindArg::Relevance])]
    pub kinds: Vec<KindArg>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_values_t = [StrategyArg::Random, StrategyArg::Sequential, StrategyArg::NonSequential, StrategyArg::OracleFirst]
    )]
    pub strategies: Vec<StrategyArg>,
    /// Training dataset file. Together with `--test` and `--user-data` this
    /// replaces the synthetic problem with a simulated expert fitted on the
    /// user-data partition.
    #[arg(long, requires_all = ["test", "user_data"])]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub user_data: Option<PathBuf>,
    /// Inclusion probability above which a feature counts as relevant for
    /// the oracle ordering on real data.
    #[arg(long, default_value_t = 0.7)]
    pub relevant_threshold: f64,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Result file of one run on a user-supplied dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataRunRecord {
    pub crate_version: String,
    pub train: PathBuf,
    pub test: PathBuf,
    pub user_data: PathBuf,
    pub hyperparameters: Hyperparameters,
    pub ep_config: EpConfig,
    pub relevant_threshold: f64,
    pub rounds: usize,
    pub result: StrategyRunResult,
}

impl Versioned for DataRunRecord {
    const FORMAT: &'static str = "elicit.data_run_record";
    const VERSION: u32 = 1;
}

fn user_seed(run_seed: u64) -> u64 {
    run_seed ^ 0xa5a5_a5a5_a5a5_a5a5
}

/// Runs every strategy on `runs` synthetic replicates of size (m, n).
fn synthetic_cell(
    spec_args: &SpecArgs,
    model: &ModelArgs,
    run: &RunArgs,
    m: usize,
    n: usize,
    kind: QueryKind,
    strategies: &[Strategy],
    run_dir: &Path,
) -> Result<Vec<MeanCurves>> {
    anyhow::ensure!(run.runs > 0, "--runs must be positive");
    let cfg = model.ep_config()?;
    let h = model.hyperparameters(synthetic_base(&spec_args.spec(m, n, 0)?))?;
    let records: Vec<Vec<RunRecord>> = (0..run.runs)
        .into_par_iter()
        .map(|r| {
            let seed = run.seed.wrapping_add(r as u64);
            let spec = spec_args.spec(m, n, seed)?;
            let problem = generate_synthetic(&spec);
            let (user, noise) = match kind {
                QueryKind::Value => (SimulatedUser::value_oracle(&problem.truth, run.user_omega, user_seed(seed)), run.user_omega),
                QueryKind::Relevance => (SimulatedUser::relevance_oracle(&problem.truth, run.user_pi, user_seed(seed)), run.user_pi),
            };
            let setup = RunSetup {
                train: &problem.train,
                test: Some(&problem.test),
                user: &user,
                relevant: &problem.truth.gamma,
                h: &h,
                cfg: &cfg,
                kind,
                warm_start: run.warm_start,
            };
            strategies
                .iter()
                .map(|&s| {
                    let result = run_strategy(s, &setup, run.rounds, seed)?;
                    Ok(RunRecord::new(spec, h, cfg, noise, user_seed(seed), run.rounds, result))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    if !run.no_run_files {
        for (r, per_run) in records.iter().enumerate() {
            for rec in per_run {
                let name = format!("run{r:03}_{}.json", rec.result.strategy.name());
                save(rec, &run_dir.join(name))?;
            }
        }
    }
    strategies
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let runs: Vec<StrategyRunResult> = records.iter().map(|rs| rs[i].result.clone()).collect();
            Ok(MeanCurves::from_runs(&runs)?)
        })
        .collect()
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    ensure_dir(&a.run.out)?;
    let strategies: Vec<Strategy> = a.strategies.iter().map(|&s| s.into()).collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for &m in &a.m_grid {
        for &n in &a.n_grid {
            for &k in &a.kinds {
                let kind: QueryKind = k.into();
                let dir = a.run.out.join("runs").join(format!("m{m}_n{n}_{}", kind_name(kind)));
                let curves = synthetic_cell(&a.spec, &a.model, &a.run, m, n, kind, &strategies, &dir)?;
                for c in &curves {
                    tracing::info!(
                        m, n, kind = kind_name(kind), strategy = c.strategy.name(),
                        baseline = c.test_mse[0], last = c.test_mse[c.test_mse.len() - 1],
                        "cell done"
                    );
                    for t in 0..c.test_mse.len() {
                        rows.push(vec![
                            m.to_string(),
                            n.to_string(),
                            kind_name(kind).to_string(),
                            c.strategy.name().to_string(),
                            t.to_string(),
                            c.test_mse[t].to_string(),
                            c.train_mse[t].to_string(),
                            c.relevant_found[t].to_string(),
                        ]);
                    }
                }
            }
        }
    }
    let path = a.run.out.join("sweep.csv");
    write_csv(
        &path,
        &["m", "n", "kind", "strategy", "round", "test_mse", "train_mse", "relevant_found"],
        rows,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    ensure_dir(&a.run.out)?;
    let strategies: Vec<Strategy> = a.strategies.iter().map(|&s| s.into()).collect();
    for &k in &a.kinds {
        let kind: QueryKind = k.into();
        let dir = a.run.out.join("runs").join(kind_name(kind));
        let curves = match &a.train {
            Some(train) => data_driven(a, train, kind, &strategies, &dir)?,
            None => synthetic_cell(&a.spec, &a.model, &a.run, a.m, a.n, kind, &strategies, &dir)?,
        };
        let path = a.run.out.join(format!("curves_{}.csv", kind_name(kind)));
        write_curves_csv(&path, &curves)?;
        print_summary(kind, &curves);
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    serial::load(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn data_driven(
    a: &CompareArgs,
    train_path: &Path,
    kind: QueryKind,
    strategies: &[Strategy],
    dir: &Path,
) -> Result<Vec<MeanCurves>> {
    anyhow::ensure!(
        kind == QueryKind::Relevance,
        "a data-driven expert only answers relevance queries; pass --kinds relevance"
    );
    anyhow::ensure!(a.run.runs > 0, "--runs must be positive");
    let test_path = a.test.as_deref().expect("clap enforces --test");
    let user_path = a.user_data.as_deref().expect("clap enforces --user-data");
    let train = load_dataset(train_path)?;
    let test = load_dataset(test_path)?;
    let user_data = load_dataset(user_path)?;
    let h = a.model.hyperparameters(Hyperparameters::review_data())?;
    let cfg = a.model.ep_config()?;

    let (user, diag) = build_data_driven_user(&user_data, &h, &cfg)?;
    if !diag.converged {
        tracing::warn!(sweeps = diag.sweeps, "fit on the user-data partition did not converge");
    }
    let full = train.concat_rows(&user_data)?;
    let full_fit = fit_posterior(&full, &FeedbackLog::new(), &h, &cfg)?;
    let inclusion: Vec<f64> = full_fit.posterior.rho_bar().iter().copied().collect();
    let relevant = relevant_from_inclusion(&inclusion, a.relevant_threshold);
    let setup = RunSetup {
        train: &train,
        test: Some(&test),
        user: &user,
        relevant: &relevant,
        h: &h,
        cfg: &cfg,
        kind,
        warm_start: a.run.warm_start,
    };
    let results: Vec<Vec<StrategyRunResult>> = (0..a.run.runs)
        .into_par_iter()
        .map(|r| {
            let seed = a.run.seed.wrapping_add(r as u64);
            strategies
                .iter()
                .map(|&s| Ok(run_strategy(s, &setup, a.run.rounds, seed)?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    if !a.run.no_run_files {
        for (r, per_run) in results.iter().enumerate() {
            for result in per_run {
                let rec = DataRunRecord {
                    crate_version: env!("CARGO_PKG_VERSION").to_string(),
                    train: train_path.to_path_buf(),
                    test: test_path.to_path_buf(),
                    user_data: user_path.to_path_buf(),
                    hyperparameters: h,
                    ep_config: cfg,
                    relevant_threshold: a.relevant_threshold,
                    rounds: a.run.rounds,
                    result: result.clone(),
                };
                save(&rec, &dir.join(format!("run{r:03}_{}.json", result.strategy.name())))?;
            }
        }
    }
    (0..strategies.len())
        .map(|i| {
            let runs: Vec<StrategyRunResult> = results.iter().map(|rs| rs[i].clone()).collect();
            Ok(MeanCurves::from_runs(&runs)?)
        })
        .collect()
}

fn print_summary(kind: QueryKind, curves: &[MeanCurves]) {
    let Some(len) = curves.first().map(|c| c.test_mse.len()) else {
        return;
    };
    let marks: Vec<usize> = (0..len).step_by(10).chain([len - 1]).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    println!("{} feedback, mean test MSE", kind_name(kind));
    print!("{:<16}", "round");
    for t in &marks {
        print!("{t:>10}");
    }
    println!();
    for c in curves {
        print!("{:<16}", c.strategy.name());
        for &t in &marks {
            print!("{:>10.4}", c.test_mse[t]);
        }
        println!();
    }
}
