use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use elicit_core::ingest::{load_matrix, partition_and_normalize, read_corpus, vectorize_corpus, CountRule, MatrixFormat};

use crate::output::{ensure_dir, save};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    /// Header row of feature names plus the target column.
    DenseCsv,
    /// `row,col,value` entries; `col` is a feature index or `y`.
    SparseTriplet,
    /// `text,rating` reviews, turned into word counts.
    Corpus,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CountRuleArg {
    DocumentFrequency,
    TotalCount,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::DenseCsv)]
    pub format: InputFormat,
    /// Target column of a dense CSV.
    #[arg(long, default_value = "y")]
    pub target: String,
    /// Vocabulary threshold for corpora.
    #[arg(long, default_value_t = 100)]
    pub min_count: usize,
    #[arg(long, value_enum, default_value_t = CountRuleArg::DocumentFrequency)]
    pub count_rule: CountRuleArg,
    /// Split into training, test and user-data partitions of the given
    /// sizes (the rest goes to user data) and normalise the covariates.
    #[arg(long, num_args = 2, value_names = ["N_TRAIN", "N_TEST"])]
    pub split: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset file, or a directory when `--split` is given.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(a: &IngestArgs) -> Result<()> {
    let data = match a.format {
        InputFormat::DenseCsv => load_matrix(&a.input, MatrixFormat::DenseCsv, &a.target)?,
        InputFormat::SparseTriplet => load_matrix(&a.input, MatrixFormat::SparseTriplet, &a.target)?,
        InputFormat::Corpus => {
            let rule = match a.count_rule {
                CountRuleArg::DocumentFrequency => CountRule::DocumentFrequency,
                CountRuleArg::TotalCount => CountRule::TotalCount,
            };
            vectorize_corpus(&read_corpus(&a.input)?, a.min_count, rule)?
        }
    };
    println!("loaded {} rows x {} features", data.n(), data.m());
    match a.split.as_deref() {
        None => {
            save(&data, &a.out)?;
            println!("wrote {}", a.out.display());
        }
        Some(&[n_train, n_test]) => {
            let parts = partition_and_normalize(&data, n_train, n_test, a.seed)?;
            ensure_dir(&a.out)?;
            save(&parts.train, &a.out.join("train.json"))?;
            save(&parts.test, &a.out.join("test.json"))?;
            save(&parts.user_pool, &a.out.join("user.json"))?;
            save(&parts.norm, &a.out.join("norm.json"))?;
            println!(
                "wrote train ({}), test ({}), user ({}) to {}",
                parts.train.n(),
                parts.test.n(),
                parts.user_pool.n(),
                a.out.display()
            );
        }
        Some(_) => unreachable!("clap takes exactly two split values"),
    }
    Ok(())
}
