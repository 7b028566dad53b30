//! Brute-force reference computations for small problems.
//!
//! [`exact_posterior`] enumerates every inclusion configuration and mixes the
//! conjugate Gaussian posteriors exactly; [`mc_expected_info_gain`] estimates
//! the expected information gain of a query by sampling feedback and
//! recomputing posteriors through routes independent of the closed forms in
//! [`crate::query`]. Both are exponential or sampling-bound and meant for
//! tests and calibration runs only.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ep::{apply_relevance_feedback_site, fit_posterior_warm, EpConfig};
use crate::error::{Error, Result};
use crate::model::{Dataset, Feedback, FeedbackKind, FeedbackLog, Hyperparameters, NoiseMode, QueryKind};
use crate::posterior::PosteriorApprox;

pub const MAX_EXACT_FEATURES: usize = 15;
pub const MIN_MC_DRAWS: usize = 100;

/// Exact spike-and-slab posterior as a mixture over all `2^m` configurations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactPosterior {
    pub component_weights: Vec<f64>,
    /// Posterior mean of every configuration (zero on inactive coordinates).
    pub component_means: Vec<Vec<f64>>,
    /// Posterior covariance restricted to the active coordinates, row-major.
    pub component_covs: Vec<Vec<f64>>,
    pub marginal_mean: Vec<f64>,
    /// Row-major `m x m`.
    pub marginal_cov: Vec<f64>,
    pub inclusion_probs: Vec<f64>,
}

impl ExactPosterior {
    pub fn marginal_var(&self, j: usize) -> f64 {
        let m = self.marginal_mean.len();
        self.marginal_cov[j * m + j]
    }
}

fn active_set(mask: usize, m: usize) -> Vec<usize> {
    (0..m).filter(|j| mask >> j & 1 == 1).collect()
}

/// Enumerates all inclusion configurations. Requires fixed noise and at most
/// [`MAX_EXACT_FEATURES`] features.
pub fn exact_posterior(data: &Dataset, log: &FeedbackLog, h: &Hyperparameters) -> Result<ExactPosterior> {
    let m = data.m();
    if m > MAX_EXACT_FEATURES {
        return Err(Error::OracleRefused(format!(
            "{m} features exceeds the enumeration limit of {MAX_EXACT_FEATURES}"
        )));
    }
    let sigma2 = match h.noise {
        NoiseMode::Fixed { sigma2 } => sigma2,
        NoiseMode::Learned => {
            return Err(Error::OracleRefused(
                "exact enumeration needs a fixed noise variance".into(),
            ))
        }
    };
    let noise_precision = 1.0 / sigma2;
    let xtx = data.x().tr_mul(data.x()) * noise_precision;
    let xty = data.x().tr_mul(data.y()) * noise_precision;

    let mut value_prec = vec![0.0; m];
    let mut value_shift = vec![0.0; m];
    let mut relevance: Vec<Option<bool>> = vec![None; m];
    for fb in log.entries() {
        match fb.kind {
            FeedbackKind::Value { value } => {
                value_prec[fb.feature] = 1.0 / h.omega2;
                value_shift[fb.feature] = value / h.omega2;
            }
            FeedbackKind::Relevance { relevant } => relevance[fb.feature] = Some(relevant == 1),
            FeedbackKind::Uncertain => {}
        }
    }

    let configs = 1usize << m;
    let mut log_weights = Vec::with_capacity(configs);
    let mut means = Vec::with_capacity(configs);
    let mut covs = Vec::with_capacity(configs);
    for mask in 0..configs {
        let active = active_set(mask, m);
        let k = active.len();
        // Terms of the marginal likelihood that depend on the configuration.
        let mut log_z = k as f64 * h.rho.ln() + (m - k) as f64 * (1.0 - h.rho).ln();
        for (j, r) in relevance.iter().enumerate() {
            if let Some(relevant) = *r {
                let included = mask >> j & 1 == 1;
                let p = if included == relevant { h.pi } else { 1.0 - h.pi };
                log_z += p.ln();
            }
        }
        let mut mean = vec![0.0; m];
        let mut cov = vec![0.0; k * k];
        if k > 0 {
            let precision = DMatrix::from_fn(k, k, |a, b| {
                let (ja, jb) = (active[a], active[b]);
                let mut v = xtx[(ja, jb)];
                if a == b {
                    v += 1.0 / h.psi2 + value_prec[ja];
                }
                v
            });
            let shift = DVector::from_fn(k, |a, _| xty[active[a]] + value_shift[active[a]]);
            let chol = precision
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("exact component".into()))?;
            let mu = chol.solve(&shift);
            let sigma = chol.inverse();
            let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            log_z += 0.5 * shift.dot(&mu) - 0.5 * log_det - 0.5 * k as f64 * h.psi2.ln();
            for (a, &ja) in active.iter().enumerate() {
                mean[ja] = mu[a];
                for b in 0..k {
                    cov[a * k + b] = sigma[(a, b)];
                }
            }
        }
        // The -f^2 / (2 omega^2) part of each value-feedback likelihood is the
        // same for every configuration and is dropped.
        log_weights.push(log_z);
        means.push(mean);
        covs.push(cov);
    }

    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut marginal_mean = vec![0.0; m];
    let mut second = vec![0.0; m * m];
    let mut inclusion = vec![0.0; m];
    for (mask, w) in weights.iter().enumerate() {
        let active = active_set(mask, m);
        let k = active.len();
        let mean = &means[mask];
        for j in 0..m {
            marginal_mean[j] += w * mean[j];
            if mask >> j & 1 == 1 {
                inclusion[j] += w;
            }
        }
        for a in 0..m {
            for b in 0..m {
                second[a * m + b] += w * mean[a] * mean[b];
            }
        }
        for (ia, &ja) in active.iter().enumerate() {
            for (ib, &jb) in active.iter().enumerate() {
                second[ja * m + jb] += w * covs[mask][ia * k + ib];
            }
        }
    }
    let marginal_cov = (0..m * m)
        .map(|idx| second[idx] - marginal_mean[idx / m] * marginal_mean[idx % m])
        .collect();
    Ok(ExactPosterior {
        component_weights: weights,
        component_means: means,
        component_covs: covs,
        marginal_mean,
        marginal_cov,
        inclusion_probs: inclusion,
    })
}

/// How the post-feedback posterior is recomputed for every sampled answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum McRoute {
    /// Keep every other site frozen. Value feedback: dense inversion of the
    /// updated precision. Relevance feedback: install the site, refresh the
    /// prior site at `j`, and reassemble in full.
    FrozenSites,
    /// Refit the approximation to convergence with the feedback appended.
    Refit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub draws: usize,
    pub seed: u64,
    pub route: McRoute,
}

/// Summed KL divergence between the training-set predictives of `new` and
/// `old`, from dense matrix products.
pub fn summed_predictive_kl(new: &PosteriorApprox, old: &PosteriorApprox, data: &Dataset) -> f64 {
    let x = data.x();
    let mean_new = x * new.m_bar();
    let mean_old = x * old.m_bar();
    let var_new = (x * new.sigma_bar()).component_mul(x).column_sum();
    let var_old = (x * old.sigma_bar()).component_mul(x).column_sum();
    (0..data.n())
        .map(|i| {
            let vn = var_new[i] + new.residual_variance();
            let vo = var_old[i] + old.residual_variance();
            let dm = mean_new[i] - mean_old[i];
            0.5 * ((vo / vn).ln() + (vn + dm * dm) / vo - 1.0)
        })
        .sum()
}

/// Monte-Carlo estimate of the expected information gain of querying `j`.
///
/// Feedback is drawn from its posterior predictive under `base`; for each
/// draw the post-feedback posterior is recomputed along `settings.route` and
/// the training-set KL is averaged.
#[allow(clippy::too_many_arguments)]
pub fn mc_expected_info_gain(
    data: &Dataset,
    log: &FeedbackLog,
    h: &Hyperparameters,
    cfg: &EpConfig,
    base: &PosteriorApprox,
    j: usize,
    kind: QueryKind,
    settings: McSettings,
) -> Result<f64> {
    if settings.draws < MIN_MC_DRAWS {
        return Err(Error::OracleRefused(format!(
            "{} draws is below the minimum of {MIN_MC_DRAWS}",
            settings.draws
        )));
    }
    if j >= base.m() {
        return Err(Error::FeatureIndex { index: j, m: base.m() });
    }
    let var_j = base.sigma_bar()[(j, j)];
    if var_j <= 0.0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    match (kind, settings.route) {
        (QueryKind::Value, McRoute::FrozenSites) => {
            frozen_value_gain(data, h, base, j, settings.draws, &mut rng)
        }
        (QueryKind::Value, McRoute::Refit) => {
            let sd = (var_j + h.omega2).sqrt();
            let mut total = 0.0;
            for _ in 0..settings.draws {
                let z: f64 = rng.sample(StandardNormal);
                let f = base.m_bar()[j] + sd * z;
                let next = log.append(Feedback::value(j, f), data.m())?;
                let fit = fit_posterior_warm(data, &next, h, cfg, base.sites())?;
                total += summed_predictive_kl(&fit.posterior, base, data);
            }
            Ok(total / settings.draws as f64)
        }
        (QueryKind::Relevance, route) => {
            let rho = base.rho_bar()[j];
            let p_relevant = h.pi * rho + (1.0 - h.pi) * (1.0 - rho);
            let mut counts = [0usize; 2];
            for _ in 0..settings.draws {
                counts[rng.gen_bool(p_relevant.clamp(0.0, 1.0)) as usize] += 1;
            }
            let mut total = 0.0;
            for (answer, &count) in counts.iter().enumerate() {
                if count == 0 {
                    continue;
                }
                let relevant = answer == 1;
                let updated = match route {
                    McRoute::FrozenSites => {
                        let undamped = EpConfig { damping: 1.0, ..*cfg };
                        apply_relevance_feedback_site(base, data, j, relevant, h, &undamped)?
                    }
                    McRoute::Refit => {
                        let next = log.append(Feedback::relevance(j, relevant), data.m())?;
                        fit_posterior_warm(data, &next, h, cfg, base.sites())?.posterior
                    }
                };
                total += count as f64 * summed_predictive_kl(&updated, base, data);
            }
            Ok(total / settings.draws as f64)
        }
    }
}

fn frozen_value_gain(
    data: &Dataset,
    h: &Hyperparameters,
    base: &PosteriorApprox,
    j: usize,
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let x = data.x();
    let precision = base
        .sigma_bar()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("base covariance".into()))?
        .inverse();
    let shift = &precision * base.m_bar();
    let mut updated = precision.clone();
    updated[(j, j)] += 1.0 / h.omega2;
    let sigma_new = updated
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("updated precision".into()))?
        .inverse();
    let s2 = base.residual_variance();
    let var_old = (x * base.sigma_bar()).component_mul(x).column_sum();
    let var_new = (x * &sigma_new).component_mul(x).column_sum();
    let mean_old = x * base.m_bar();
    // mean_new(f) = sigma_new (shift + f/omega2 e_j) is affine in f.
    let mean_at_zero = x * (&sigma_new * &shift);
    let slope = x * sigma_new.column(j) / h.omega2;

    let sd = (base.sigma_bar()[(j, j)] + h.omega2).sqrt();
    let mut total = 0.0;
    for _ in 0..draws {
        let z: f64 = rng.sample(StandardNormal);
        let f = base.m_bar()[j] + sd * z;
        let mut kl = 0.0;
        for i in 0..data.n() {
            let vn = var_new[i] + s2;
            let vo = var_old[i] + s2;
            let dm = mean_at_zero[i] + slope[i] * f - mean_old[i];
            kl += 0.5 * ((vo / vn).ln() + (vn + dm * dm) / vo - 1.0);
        }
        total += kl;
    }
    Ok(total / draws as f64)
}
