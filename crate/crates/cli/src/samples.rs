use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use elicit_core::model::QueryKind;
use elicit_core::serial::Versioned;
use elicit_core::sim::{
    feedbacks_vs_samples, generate_with_pool, write_sample_table_csv, SampleInstance, SampleSettings,
    SampleTable, SimulatedUser, SyntheticSpec,
};
use serde::{Deserialize, Serialize};

use crate::args::{synthetic_base, KindArg, ModelArgs, SpecArgs};
use crate::output::{ensure_dir, save, write_csv};

#[derive(Debug, Args)]
pub struct SamplesArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 30)]
    pub m: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Value)]
    pub kind: KindArg,
    /// Largest number of answers or added rows considered.
    #[arg(long, default_value_t = 30)]
    pub cap: usize,
    /// Rows in the pool of extra training data; defaults to the cap.
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Target levels as fractions of the feedback-free test MSE.
    #[arg(long, value_delimiter = ',', default_values_t = [0.95, 0.9, 0.85, 0.8, 0.75, 0.7])]
    pub levels: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub user_omega: f64,
    #[arg(long, default_value_t = 0.95)]
    pub user_pi: f64,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplesRecord {
    pub crate_version: String,
    /// Spec of replicate 0; replicate `r` uses seed `spec.seed + r`.
    pub spec: SyntheticSpec,
    pub runs: usize,
    pub pool_size: usize,
    pub user_noise: f64,
    pub settings: SampleSettings,
    pub table: SampleTable,
}

impl Versioned for SamplesRecord {
    const FORMAT: &'static str = "elicit.samples_table";
    const VERSION: u32 = 1;
}

pub fn run(a: &SamplesArgs) -> Result<()> {
    anyhow::ensure!(a.runs > 0, "--runs must be positive");
    ensure_dir(&a.out)?;
    let kind: QueryKind = a.kind.into();
    let pool_size = a.pool_size.unwrap_or(a.cap);
    let base = a.spec.spec(a.m, a.n, a.seed)?;
    let settings = SampleSettings {
        h: a.model.hyperparameters(synthetic_base(&base))?,
        cfg: a.model.ep_config()?,
        kind,
        cap: a.cap,
        level_fractions: a.levels.clone(),
        seed: a.seed,
    };
    let noise = match kind {
        QueryKind::Value => a.user_omega,
        QueryKind::Relevance => a.user_pi,
    };
    let replicates: Vec<_> = (0..a.runs)
        .map(|r| {
            let spec = SyntheticSpec { seed: a.seed.wrapping_add(r as u64), ..base };
            let (problem, pool) = generate_with_pool(&spec, pool_size);
            let user_seed = spec.seed ^ 0xa5a5_a5a5_a5a5_a5a5;
            let user = match kind {
                QueryKind::Value => SimulatedUser::value_oracle(&problem.truth, noise, user_seed),
                QueryKind::Relevance => SimulatedUser::relevance_oracle(&problem.truth, noise, user_seed),
            };
            (problem, pool, user)
        })
        .collect();
    let instances: Vec<SampleInstance<'_>> = replicates
        .iter()
        .map(|(problem, pool, user)| SampleInstance {
            train: &problem.train,
            pool,
            test: &problem.test,
            user,
            relevant: &problem.truth.gamma,
        })
        .collect();
    let table = feedbacks_vs_samples(&instances, &settings)?;

    write_sample_table_csv(&a.out.join("samples_table.csv"), &table)?;
    let curve_rows = (0..table.added_samples_curve.len()).map(|t| {
        let at = |c: &[f64]| c.get(t).map(f64::to_string).unwrap_or_default();
        vec![
            t.to_string(),
            at(&table.random_feedback_curve),
            at(&table.sequential_feedback_curve),
            at(&table.added_samples_curve),
        ]
    });
    write_csv(
        &a.out.join("samples_curves.csv"),
        &["round", "random_feedback", "sequential_feedback", "added_samples"],
        curve_rows,
    )?;
    let record = SamplesRecord {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        spec: base,
        runs: a.runs,
        pool_size,
        user_noise: noise,
        settings,
        table,
    };
    save(&record, &a.out.join("samples_table.json"))?;

    println!("baseline test MSE {:.4}", record.table.baseline_mse);
    println!("{:>10} {:>10} {:>10} {:>10}", "level", "random", "sequential", "samples");
    for row in &record.table.rows {
        println!(
            "{:>10.4} {:>10} {:>10} {:>10}",
            row.level,
            row.random_feedback.to_string(),
            row.sequential_feedback.to_string(),
            row.added_samples.to_string()
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}
