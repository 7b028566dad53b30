use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use elicit_core::ep::EpConfig;
use elicit_core::model::{Hyperparameters, NoiseMode, QueryKind};
use elicit_core::serial;
use elicit_core::sim::{Strategy, SyntheticSpec};

/// Synthetic data settings other than the problem size.
#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    /// Non-zero coefficients.
    #[arg(long, default_value_t = 10)]
    pub m_star: usize,
    /// Variance of the non-zero coefficients.
    #[arg(long, default_value_t = 1.0)]
    pub psi2: f64,
    /// Noise variance of the targets.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 1000)]
    pub test_size: usize,
}

impl SpecArgs {
    pub fn spec(&self, m: usize, n: usize, seed: u64) -> Result<SyntheticSpec> {
        anyhow::ensure!(self.m_star <= m, "--m-star {} exceeds m = {m}", self.m_star);
        anyhow::ensure!(
            self.psi2 > 0.0 && self.sigma2 > 0.0,
            "--psi2 and --sigma2 must be positive"
        );
        Ok(SyntheticSpec {
            n,
            m,
            m_star: self.m_star,
            psi2: self.psi2,
            sigma2: self.sigma2,
            test_size: self.test_size,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NoiseArg {
    Fixed,
    Learned,
}

/// Model constants and fitting knobs. Unset flags keep the defaults of the
/// experiment (or of `--hyperparameters` when given).
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Hyperparameter file to start from.
    #[arg(long)]
    pub hyperparameters: Option<PathBuf>,
    /// Slab variance of the prior.
    #[arg(long)]
    pub prior_psi2: Option<f64>,
    /// Prior inclusion probability.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub alpha_sigma: Option<f64>,
    #[arg(long)]
    pub beta_sigma: Option<f64>,
    /// Noise variance of value answers.
    #[arg(long)]
    pub omega2: Option<f64>,
    /// Probability that a relevance answer is correct.
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    /// Known noise variance when `--noise fixed`.
    #[arg(long)]
    pub noise_sigma2: Option<f64>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub site_variance_guard: Option<f64>,
}

impl ModelArgs {
    pub fn hyperparameters(&self, base: Hyperparameters) -> Result<Hyperparameters> {
        let mut h = match &self.hyperparameters {
            Some(path) => serial::load(path)?,
            None => base,
        };
        if let Some(v) = self.prior_psi2 {
            h.psi2 = v;
        }
        if let Some(v) = self.rho {
            h.rho = v;
        }
        if let Some(v) = self.alpha_sigma {
            h.alpha_sigma = v;
        }
        if let Some(v) = self.beta_sigma {
            h.beta_sigma = v;
        }
        if let Some(v) = self.omega2 {
            h.omega2 = v;
        }
        if let Some(v) = self.pi {
            h.pi = v;
        }
        let current_sigma2 = match h.noise {
            NoiseMode::Fixed { sigma2 } => sigma2,
            NoiseMode::Learned => 1.0,
        };
        match (self.noise, self.noise_sigma2) {
            (Some(NoiseArg::Learned), _) => h.noise = NoiseMode::Learned,
            (Some(NoiseArg::Fixed), s) => {
                h.noise = NoiseMode::Fixed { sigma2: s.unwrap_or(current_sigma2) }
            }
            (None, Some(s)) => h.noise = NoiseMode::Fixed { sigma2: s },
            (None, None) => {}
        }
        Ok(h.validate()?)
    }

    pub fn ep_config(&self) -> Result<EpConfig> {
        let mut cfg = EpConfig::default();
        if let Some(v) = self.damping {
            cfg.damping = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.site_variance_guard {
            cfg.min_site_variance_guard = v;
        }
        Ok(cfg.validate()?)
    }
}

/// Synthetic defaults: the data-generating slab and noise variances.
pub fn synthetic_base(spec: &SyntheticSpec) -> Hyperparameters {
    let mut h = Hyperparameters::synthetic(spec.m, spec.m_star);
    h.psi2 = spec.psi2;
    h.noise = NoiseMode::Fixed { sigma2: spec.sigma2 };
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Value,
    Relevance,
}

impl From<KindArg> for QueryKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Value => QueryKind::Value,
            KindArg::Relevance => QueryKind::Relevance,
        }
    }
}

pub fn kind_name(kind: QueryKind) -> &'static str {
    match kind {
        QueryKind::Value => "value",
        QueryKind::Relevance => "relevance",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Random,
    Sequential,
    NonSequential,
    OracleFirst,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Sequential => Strategy::Sequential,
            StrategyArg::NonSequential => Strategy::NonSequential,
            StrategyArg::OracleFirst => Strategy::OracleFirst,
        }
    }
}

/// Repetition and output settings shared by the harness commands.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Independent replicates; replicate `r` uses seed `seed + r`.
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    /// Feedback rounds per run, capped at the number of features.
    #[arg(long, default_value_t = 30)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Standard deviation of simulated value answers.
    #[arg(long, default_value_t = 0.1)]
    pub user_omega: f64,
    /// Probability that a simulated relevance answer is correct.
    #[arg(long, default_value_t = 0.95)]
    pub user_pi: f64,
    /// Continue each refit from the previous sites.
    #[arg(long)]
    pub warm_start: bool,
    /// Skip the per-run result files and write only the aggregates.
    #[arg(long)]
    pub no_run_files: bool,
}
