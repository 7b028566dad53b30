//! Choosing the next feature to ask the expert about.
//!
//! Each candidate is scored by the expected KL divergence between the
//! training-set predictive distributions after and before its feedback. The
//! post-feedback posterior is never refitted here: a value answer adds an
//! exact Gaussian site, a relevance answer adds the exact Bernoulli site plus
//! one scalar refresh of the prior site, and either way the covariance moves
//! by a rank-one update along `e_j`. With `B = X Sigma` computed once per
//! round, every candidate then costs `O(n)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ep::{hypothetical_prior_site, EpConfig};
use crate::error::{Error, Result};
use crate::model::{logit, Dataset, FeedbackLog, Hyperparameters, QueryKind};
use crate::posterior::{relevance_site, PosteriorApprox};

/// Gains above `-GAIN_CLIP` but below zero are rounding artefacts.
pub const GAIN_CLIP: f64 = 1e-9;

/// Gains within this relative distance of each other count as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Position of the largest gain; near-ties go to the earliest position.
fn argmax(gains: &[f64], alive: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in alive {
        match best {
            None => best = Some(i),
            Some(b) => {
                if gains[i] - gains[b] > TIE_TOLERANCE * gains[b].abs() {
                    best = Some(i);
                }
            }
        }
    }
    best
}

/// Expected gains of every candidate and the chosen query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRanking {
    pub kind: QueryKind,
    /// Candidate feature indices, ascending.
    pub candidates: Vec<usize>,
    /// Expected information gain per entry of `candidates`.
    pub gains: Vec<f64>,
    pub selected: usize,
    /// Hypothetical relevance branches dropped because the rank-one
    /// precondition failed.
    pub skipped_branches: usize,
}

impl QueryRanking {
    pub fn gain_of(&self, feature: usize) -> Option<f64> {
        self.candidates
            .iter()
            .position(|&c| c == feature)
            .map(|i| self.gains[i])
    }
}

fn check_index(j: usize, m: usize) -> Result<()> {
    if j >= m {
        Err(Error::FeatureIndex { index: j, m })
    } else {
        Ok(())
    }
}

/// Predictive of a value answer: `N(m_j, Sigma_jj + omega2)`.
pub fn predictive_feedback_value(post: &PosteriorApprox, j: usize, h: &Hyperparameters) -> Result<(f64, f64)> {
    check_index(j, post.m())?;
    Ok((post.m_bar()[j], post.sigma_bar()[(j, j)] + h.omega2))
}

/// Probability that a relevance answer is "relevant".
pub fn predictive_feedback_relevance(post: &PosteriorApprox, j: usize, h: &Hyperparameters) -> Result<f64> {
    check_index(j, post.m())?;
    let rho = post.rho_bar()[j];
    Ok(h.pi * rho + (1.0 - h.pi) * (1.0 - rho))
}

/// `KL(N(mean_new, var_new) || N(mean_old, var_old))`.
pub fn kl_predictive(mean_new: f64, var_new: f64, mean_old: f64, var_old: f64) -> Result<f64> {
    if !(var_new > 0.0 && var_old > 0.0) {
        return Err(Error::NonFinite(format!(
            "KL needs positive variances, got {var_new} and {var_old}"
        )));
    }
    Ok(kl_unchecked(mean_new, var_new, mean_old, var_old))
}

#[inline]
fn kl_unchecked(mean_new: f64, var_new: f64, mean_old: f64, var_old: f64) -> f64 {
    let d = mean_new - mean_old;
    0.5 * ((var_old / var_new).ln() + (var_new + d * d) / var_old - 1.0)
}

/// Adds precision `t` and precision-adjusted mean `h_nat` at coordinate `j`:
/// `Sigma_new = (Sigma^-1 + t e e^T)^-1`, `m_new = Sigma_new (Sigma^-1 m + h_nat e)`,
/// via the matrix inversion lemma.
pub fn rank_one_posterior(
    sigma: &DMatrix<f64>,
    mean: &DVector<f64>,
    j: usize,
    t: f64,
    h_nat: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_index(j, mean.len())?;
    let s_jj = sigma[(j, j)];
    let denom = 1.0 + t * s_jj;
    if denom <= 0.0 {
        return Err(Error::RankOnePrecondition(denom));
    }
    let col = sigma.column(j).into_owned();
    let new_sigma = if t == 0.0 {
        sigma.clone()
    } else {
        sigma - (&col * col.transpose()) * (t / denom)
    };
    let new_mean = mean + &col * ((h_nat - t * mean[j]) / denom);
    Ok((new_sigma, new_mean))
}

/// Quantities shared by every candidate of one round.
struct RoundContext<'a> {
    post: &'a PosteriorApprox,
    /// `X Sigma`, `n x m`.
    x_sigma: DMatrix<f64>,
    /// Current predictive variances of the training rows.
    var_old: DVector<f64>,
}

impl<'a> RoundContext<'a> {
    fn new(post: &'a PosteriorApprox, data: &Dataset) -> Result<Self> {
        if data.m() != post.m() {
            return Err(Error::Shape(format!(
                "dataset has {} features, posterior {}",
                data.m(),
                post.m()
            )));
        }
        let x = data.x();
        let x_sigma = x * post.sigma_bar();
        let s2 = post.residual_variance();
        let var_old = x_sigma.component_mul(x).column_sum().add_scalar(s2);
        Ok(Self {
            post,
            x_sigma,
            var_old,
        })
    }

    /// Summed KL after adding `t`/`h_nat` at `j`. `None` when the update
    /// would not keep the covariance positive definite.
    fn rank_one_gain(&self, j: usize, t: f64, h_nat: f64) -> Option<f64> {
        let s_jj = self.post.sigma_bar()[(j, j)];
        let denom = 1.0 + t * s_jj;
        if denom <= 0.0 {
            return None;
        }
        let shift = (h_nat - t * self.post.m_bar()[j]) / denom;
        let u = self.x_sigma.column(j);
        let mut total = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            let v_old = self.var_old[i];
            let v_new = v_old - t * ui * ui / denom;
            if v_new <= 0.0 {
                return None;
            }
            total += kl_unchecked(ui * shift, v_new, 0.0, v_old);
        }
        Some(total)
    }

    fn value_gain(&self, j: usize, h: &Hyperparameters) -> f64 {
        let s_jj = self.post.sigma_bar()[(j, j)];
        if s_jj <= 0.0 {
            return 0.0;
        }
        let t = 1.0 / h.omega2;
        let denom = 1.0 + t * s_jj;
        // E_f[(x^T m_f - x^T m)^2] = (t / denom * x^T Sigma e_j)^2 (Sigma_jj + omega2)
        let spread = (t / denom).powi(2) * (s_jj + h.omega2);
        let u = self.x_sigma.column(j);
        let mut total = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            let v_old = self.var_old[i];
            let v_new = v_old - t * ui * ui / denom;
            let mean_sq = spread * ui * ui;
            total += 0.5 * ((v_old / v_new).ln() + (v_new + mean_sq) / v_old - 1.0);
        }
        clip(total)
    }

    /// Returns the gain and the number of skipped branches.
    fn relevance_gain(&self, j: usize, h: &Hyperparameters, cfg: &EpConfig) -> Result<(f64, usize)> {
        let post = self.post;
        let sites = post.sites();
        let s_jj = post.sigma_bar()[(j, j)];
        if s_jj <= 0.0 {
            return Ok((0.0, 0));
        }
        let rho = post.rho_bar()[j];
        let p_relevant = h.pi * rho + (1.0 - h.pi) * (1.0 - rho);
        let mut gain = 0.0;
        let mut skipped = 0;
        for (relevant, weight) in [(true, p_relevant), (false, 1.0 - p_relevant)] {
            let cavity_logit =
                logit(h.rho) + sites.relevance_rho[j] + relevance_site(relevant, h.pi);
            let target = hypothetical_prior_site(
                sites,
                j,
                post.m_bar()[j],
                s_jj,
                cavity_logit,
                h,
                cfg.min_site_variance_guard,
            )?;
            let Some((tau, mu)) = target else {
                continue;
            };
            let t = tau - sites.prior_tau[j];
            let h_nat = mu - sites.prior_mu[j];
            match self.rank_one_gain(j, t, h_nat) {
                Some(g) => gain += weight * g,
                None => {
                    tracing::debug!(feature = j, relevant, "rank-one precondition failed");
                    skipped += 1;
                }
            }
        }
        Ok((clip(gain), skipped))
    }
}

fn clip(gain: f64) -> f64 {
    if gain < 0.0 && gain >= -GAIN_CLIP {
        0.0
    } else {
        gain
    }
}

/// Expected information gain of a value answer about `j`. Depends only on
/// variances, never on a hypothetical answer.
pub fn expected_gain_value_feedback(
    post: &PosteriorApprox,
    data: &Dataset,
    j: usize,
    h: &Hyperparameters,
) -> Result<f64> {
    check_index(j, post.m())?;
    Ok(RoundContext::new(post, data)?.value_gain(j, h))
}

/// Expected information gain of a relevance answer about `j`, averaged over
/// both answers with their predictive probabilities.
pub fn expected_gain_relevance_feedback(
    post: &PosteriorApprox,
    data: &Dataset,
    j: usize,
    h: &Hyperparameters,
    cfg: &EpConfig,
) -> Result<f64> {
    check_index(j, post.m())?;
    Ok(RoundContext::new(post, data)?.relevance_gain(j, h, cfg)?.0)
}

fn all_gains(
    post: &PosteriorApprox,
    data: &Dataset,
    candidates: &[usize],
    h: &Hyperparameters,
    cfg: &EpConfig,
    kind: QueryKind,
) -> Result<(Vec<f64>, usize)> {
    let ctx = RoundContext::new(post, data)?;
    let scored: Vec<(f64, usize)> = candidates
        .par_iter()
        .map(|&j| match kind {
            QueryKind::Value => Ok((ctx.value_gain(j, h), 0)),
            QueryKind::Relevance => ctx.relevance_gain(j, h, cfg),
        })
        .collect::<Result<_>>()?;
    let skipped = scored.iter().map(|s| s.1).sum();
    Ok((scored.into_iter().map(|s| s.0).collect(), skipped))
}

/// Scores every unqueried feature and picks the best, ties going to the
/// smallest index.
pub fn select_next_query(
    post: &PosteriorApprox,
    data: &Dataset,
    log: &FeedbackLog,
    h: &Hyperparameters,
    cfg: &EpConfig,
    kind: QueryKind,
) -> Result<QueryRanking> {
    let candidates = log.candidates(post.m());
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let (gains, skipped_branches) = all_gains(post, data, &candidates, h, cfg, kind)?;
    let best = argmax(&gains, 0..gains.len()).expect("candidates are not empty");
    Ok(QueryRanking {
        kind,
        selected: candidates[best],
        candidates,
        gains,
        skipped_branches,
    })
}

/// Orders all features once by their gain under `post`, descending, ties by
/// index. Each position is the [`select_next_query`] choice among the
/// features not yet placed.
pub fn nonsequential_ranking(
    post: &PosteriorApprox,
    data: &Dataset,
    h: &Hyperparameters,
    cfg: &EpConfig,
    kind: QueryKind,
) -> Result<Vec<usize>> {
    let candidates: Vec<usize> = (0..post.m()).collect();
    let (gains, _) = all_gains(post, data, &candidates, h, cfg, kind)?;
    let mut placed = vec![false; gains.len()];
    let mut order = Vec::with_capacity(gains.len());
    while let Some(i) = argmax(&gains, (0..gains.len()).filter(|&i| !placed[i])) {
        placed[i] = true;
        order.push(candidates[i]);
    }
    Ok(order)
}
