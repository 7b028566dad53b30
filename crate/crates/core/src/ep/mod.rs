//! Fitting the posterior approximation.
//!
//! Prior sites `p(w_j | gamma_j)` are refined by parallel expectation
//! propagation; the likelihood and noise-precision sites by variational Bayes.
//! Feedback sites are exact and installed directly. One sweep is
//!
//! 1. compute every scalar cavity from the current marginals,
//! 2. moment-match against the spike-and-slab factor,
//! 3. blend new and old site parameters with the damping factor and
//!    reassemble once,
//! 4. (learned noise only) refresh the Gamma and Gaussian likelihood sites.
//!
//! Sweeps repeat until the posterior means and inclusion probabilities stop
//! moving.

mod tilted;

pub use tilted::{spike_slab_tilted_moments, TiltedMoments};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Design, GaussianSites, Marginals};
use crate::model::{logit, Dataset, Feedback, FeedbackKind, FeedbackLog, Hyperparameters, NoiseMode};
use crate::posterior::{relevance_site, PosteriorApprox, SiteParams};

/// Cavity precisions below this fraction of the marginal precision count as
/// non-positive; the coordinate is skipped for the sweep.
const CAVITY_RELATIVE_FLOOR: f64 = 1e-10;
const MAX_DAMPING_HALVINGS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpConfig {
    /// Weight on the newly computed site parameters, in (0, 1].
    pub damping: f64,
    pub max_iters: usize,
    /// Convergence threshold on the largest change of `m_bar` and `rho_bar`.
    pub tol: f64,
    /// Smallest implied site variance.
    pub min_site_variance_guard: f64,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            damping: 0.8,
            max_iters: 1000,
            tol: 1e-6,
            min_site_variance_guard: 1e-10,
        }
    }
}

impl EpConfig {
    pub fn validate(self) -> Result<Self> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "damping",
                reason: format!("must lie in (0, 1], got {}", self.damping),
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig {
                field: "tol",
                reason: format!("must be > 0, got {}", self.tol),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig {
                field: "max_iters",
                reason: "must be positive".into(),
            });
        }
        if !(self.min_site_variance_guard > 0.0) {
            return Err(Error::InvalidConfig {
                field: "min_site_variance_guard",
                reason: "must be > 0".into(),
            });
        }
        Ok(self)
    }
}

/// Per-fit record of how the iteration went.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub sweeps: usize,
    pub converged: bool,
    pub final_delta_mean: f64,
    pub final_delta_rho: f64,
    /// Number of times damping had to be halved to keep the covariance PD.
    pub pd_retries: usize,
    /// Coordinates skipped because of a non-positive cavity variance, summed
    /// over sweeps.
    pub skipped_updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub posterior: PosteriorApprox,
    pub diagnostics: FitDiagnostics,
}

/// Undamped EP target for one prior site.
#[derive(Debug, Clone, Copy)]
struct SiteTarget {
    tau: f64,
    mu: f64,
    rho: f64,
}

/// Moment-matched prior site at `j` given the marginal `N(mean, var)` of
/// `w_j`. `None` when the cavity variance is not positive.
fn prior_site_target(
    sites: &SiteParams,
    j: usize,
    mean: f64,
    var: f64,
    cavity_logit: f64,
    h: &Hyperparameters,
    guard: f64,
) -> Result<Option<SiteTarget>> {
    let marginal_precision = 1.0 / var;
    let cavity_precision = marginal_precision - sites.prior_tau[j];
    if cavity_precision <= CAVITY_RELATIVE_FLOOR * marginal_precision {
        return Ok(None);
    }
    let cavity_var = 1.0 / cavity_precision;
    let cavity_shift = mean * marginal_precision - sites.prior_mu[j];
    let cavity_mean = cavity_shift * cavity_var;
    let t = spike_slab_tilted_moments(cavity_mean, cavity_var, cavity_logit, h.psi2)?;

    let max_tau = 1.0 / guard;
    let tau = if t.var > 0.0 {
        (1.0 / t.var - cavity_precision).min(max_tau)
    } else {
        max_tau
    };
    // Place the new marginal mean at the tilted mean.
    let mu = t.mean * (cavity_precision + tau) - cavity_shift;
    Ok(Some(SiteTarget {
        tau,
        mu,
        rho: t.z_ratio_log,
    }))
}

fn blend(sites: &SiteParams, targets: &[(usize, SiteTarget)], damping: f64) -> SiteParams {
    let mut next = sites.clone();
    for &(j, t) in targets {
        next.prior_tau[j] = damping * t.tau + (1.0 - damping) * sites.prior_tau[j];
        next.prior_mu[j] = damping * t.mu + (1.0 - damping) * sites.prior_mu[j];
        next.prior_rho[j] = damping * t.rho + (1.0 - damping) * sites.prior_rho[j];
    }
    next
}

fn gaussian_marginals(design: &Design<'_>, sites: &SiteParams) -> Result<Marginals> {
    let (diag, shift) = sites.gaussian();
    linalg::marginals(
        design,
        &GaussianSites {
            scale: sites.likelihood_scale,
            diag: &diag,
            shift: &shift,
        },
    )
}

struct SweepOutcome {
    sites: SiteParams,
    marginals: Marginals,
    retries: usize,
    skipped: usize,
}

/// One parallel EP pass over the prior sites of `coords`, with damping
/// halving on loss of definiteness.
fn prior_sweep(
    design: &Design<'_>,
    sites: &SiteParams,
    marg: &Marginals,
    coords: &[usize],
    h: &Hyperparameters,
    cfg: &EpConfig,
    damping: f64,
) -> Result<SweepOutcome> {
    let mut targets = Vec::with_capacity(coords.len());
    let mut skipped = 0;
    for &j in coords {
        let cavity_logit = inclusion_cavity_logit(sites, j, h);
        match prior_site_target(sites, j, marg.mean[j], marg.var[j], cavity_logit, h, cfg.min_site_variance_guard)? {
            Some(t) => targets.push((j, t)),
            None => skipped += 1,
        }
    }
    let mut delta = damping;
    for retries in 0..=MAX_DAMPING_HALVINGS {
        let candidate = blend(sites, &targets, delta);
        match gaussian_marginals(design, &candidate) {
            Ok(marginals) => {
                return Ok(SweepOutcome {
                    sites: candidate,
                    marginals,
                    retries,
                    skipped,
                })
            }
            Err(Error::NotPositiveDefinite(_)) => delta *= 0.5,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NotPositiveDefinite(format!(
        "prior-site update still indefinite after {MAX_DAMPING_HALVINGS} damping halvings"
    )))
}

/// Variational update of the Gamma and Gaussian likelihood sites.
fn likelihood_vb_sites(
    design: &Design<'_>,
    sites: &SiteParams,
    marg: &Marginals,
    h: &Hyperparameters,
) -> Result<SiteParams> {
    let data = design.data;
    let n = data.n() as f64;
    let residual = data.y() - data.x() * &marg.mean;
    let alpha_tilde = 0.5 * n;
    let beta_tilde = -0.5 * (residual.norm_squared() + marg.trace_xsx);
    let alpha_bar = h.alpha_sigma + alpha_tilde;
    let beta_bar = h.beta_sigma - beta_tilde;
    if !(beta_bar > 0.0 && beta_bar.is_finite()) {
        return Err(Error::NonFinite(format!(
            "noise-precision rate {beta_bar} is not positive"
        )));
    }
    let scale = alpha_bar / beta_bar;
    let mut next = sites.clone();
    next.likelihood_alpha = alpha_tilde;
    next.likelihood_beta = beta_tilde;
    next.likelihood_scale = scale;
    next.likelihood_mu = design.xty() * scale;
    Ok(next)
}

/// One parallel EP update of every prior site, followed by reassembly.
pub fn update_prior_sites(
    post: &PosteriorApprox,
    data: &Dataset,
    h: &Hyperparameters,
    cfg: &EpConfig,
) -> Result<PosteriorApprox> {
    let design = Design::new(data);
    let marg = Marginals {
        mean: post.m_bar().clone(),
        var: post.sigma_bar().diagonal(),
        trace_xsx: 0.0,
    };
    let coords: Vec<usize> = (0..post.m()).collect();
    let out = prior_sweep(&design, post.sites(), &marg, &coords, h, cfg, cfg.damping)?;
    PosteriorApprox::assemble_with(out.sites, &design, h)
}

/// Variational update of the likelihood and noise sites. A no-op when the
/// noise variance is fixed.
pub fn update_likelihood_vb(
    post: &PosteriorApprox,
    data: &Dataset,
    h: &Hyperparameters,
) -> Result<PosteriorApprox> {
    if let NoiseMode::Fixed { .. } = h.noise {
        return Ok(post.clone());
    }
    let design = Design::new(data);
    let sigma = post.sigma_bar();
    let trace_xsx = if data.n() == 0 {
        0.0
    } else {
        design.xtx().component_mul(sigma).sum()
    };
    let marg = Marginals {
        mean: post.m_bar().clone(),
        var: sigma.diagonal(),
        trace_xsx,
    };
    let sites = likelihood_vb_sites(&design, post.sites(), &marg, h)?;
    PosteriorApprox::assemble_with(sites, &design, h)
}

/// Undamped EP refresh of the prior site at `j` against the current
/// approximation, retrying with damping on loss of definiteness.
fn refresh_prior_site(
    post: PosteriorApprox,
    design: &Design<'_>,
    j: usize,
    h: &Hyperparameters,
    cfg: &EpConfig,
) -> Result<PosteriorApprox> {
    let marg = Marginals {
        mean: post.m_bar().clone(),
        var: post.sigma_bar().diagonal(),
        trace_xsx: 0.0,
    };
    let out = prior_sweep(design, post.sites(), &marg, &[j], h, cfg, 1.0)?;
    PosteriorApprox::assemble_with(out.sites, design, h)
}

fn check_index(j: usize, m: usize) -> Result<()> {
    if j >= m {
        Err(Error::FeatureIndex { index: j, m })
    } else {
        Ok(())
    }
}

/// Installs the exact relevance site at `j`, then refreshes the prior site at
/// `j` so the changed inclusion cavity reaches `w_j`.
pub fn apply_relevance_feedback_site(
    post: &PosteriorApprox,
    data: &Dataset,
    j: usize,
    relevant: bool,
    h: &Hyperparameters,
    cfg: &EpConfig,
) -> Result<PosteriorApprox> {
    check_index(j, post.m())?;
    if post.sites().relevance_rho[j] != 0.0 {
        return Err(Error::DuplicateFeedback {
            kind: "relevance",
            index: j,
        });
    }
    let design = Design::new(data);
    let mut sites = post.sites().clone();
    sites.relevance_rho[j] = relevance_site(relevant, h.pi);
    let installed = PosteriorApprox::assemble_with(sites, &design, h)?;
    refresh_prior_site(installed, &design, j, h, cfg)
}

/// Installs the exact Gaussian value site at `j`, then refreshes the prior
/// site at `j`.
pub fn apply_value_feedback_site(
    post: &PosteriorApprox,
    data: &Dataset,
    j: usize,
    value: f64,
    h: &Hyperparameters,
    cfg: &EpConfig,
) -> Result<PosteriorApprox> {
    check_index(j, post.m())?;
    if post.sites().value_tau[j] != 0.0 {
        return Err(Error::DuplicateFeedback {
            kind: "value",
            index: j,
        });
    }
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("value feedback {value}")));
    }
    let design = Design::new(data);
    let mut sites = post.sites().clone();
    sites.value_tau[j] += 1.0 / h.omega2;
    sites.value_mu[j] += value / h.omega2;
    let installed = PosteriorApprox::assemble_with(sites, &design, h)?;
    refresh_prior_site(installed, &design, j, h, cfg)
}

/// Fits the approximation from the prior, with every feedback in `log`.
pub fn fit_posterior(
    data: &Dataset,
    log: &FeedbackLog,
    h: &Hyperparameters,
    cfg: &EpConfig,
) -> Result<Fit> {
    fit_from_sites(data, log, h, cfg, SiteParams::initial(data, h))
}

/// Fits starting from previously converged sites. Feedback sites are
/// reinstalled from `log`; the remaining sites act as the starting point.
pub fn fit_posterior_warm(
    data: &Dataset,
    log: &FeedbackLog,
    h: &Hyperparameters,
    cfg: &EpConfig,
    start: &SiteParams,
) -> Result<Fit> {
    if start.m() != data.m() {
        return Err(Error::Shape(format!(
            "warm-start sites for {} features, dataset has {}",
            start.m(),
            data.m()
        )));
    }
    fit_from_sites(data, log, h, cfg, start.clone())
}

/// Refit after `answer` was appended to `log`: warm-started from `previous`,
/// or unchanged when the answer carries no information.
pub fn refit_after(
    data: &Dataset,
    log: &FeedbackLog,
    h: &Hyperparameters,
    cfg: &EpConfig,
    previous: &Fit,
    answer: &Feedback,
) -> Result<Fit> {
    if let FeedbackKind::Uncertain = answer.kind {
        return Ok(previous.clone());
    }
    fit_posterior_warm(data, log, h, cfg, previous.posterior.sites())
}

fn fit_from_sites(
    data: &Dataset,
    log: &FeedbackLog,
    h: &Hyperparameters,
    cfg: &EpConfig,
    mut sites: SiteParams,
) -> Result<Fit> {
    cfg.validate()?;
    h.validate()?;
    if let Some(fb) = log.entries().iter().find(|fb| fb.feature >= data.m()) {
        return Err(Error::FeatureIndex {
            index: fb.feature,
            m: data.m(),
        });
    }
    sites.install_feedback(log, h);
    let design = Design::new(data);
    let learned = matches!(h.noise, NoiseMode::Learned);
    let coords: Vec<usize> = (0..data.m()).collect();

    let mut marg = gaussian_marginals(&design, &sites)?;
    let mut rho = sites.inclusion(h);
    let mut diag = FitDiagnostics {
        sweeps: 0,
        converged: false,
        final_delta_mean: f64::INFINITY,
        final_delta_rho: f64::INFINITY,
        pd_retries: 0,
        skipped_updates: 0,
    };

    for sweep in 1..=cfg.max_iters {
        let out = prior_sweep(&design, &sites, &marg, &coords, h, cfg, cfg.damping)?;
        diag.pd_retries += out.retries;
        diag.skipped_updates += out.skipped;
        sites = out.sites;
        let mut next = out.marginals;
        if learned {
            sites = likelihood_vb_sites(&design, &sites, &next, h)?;
            next = gaussian_marginals(&design, &sites)?;
        }
        let next_rho = sites.inclusion(h);
        diag.final_delta_mean = max_abs_diff(&next.mean, &marg.mean);
        diag.final_delta_rho = max_abs_diff(&next_rho, &rho);
        diag.sweeps = sweep;
        marg = next;
        rho = next_rho;
        if diag.final_delta_mean < cfg.tol && diag.final_delta_rho < cfg.tol {
            diag.converged = true;
            break;
        }
    }
    if !diag.converged {
        tracing::debug!(
            sweeps = diag.sweeps,
            delta_mean = diag.final_delta_mean,
            delta_rho = diag.final_delta_rho,
            "EP did not converge"
        );
    }
    let posterior = PosteriorApprox::assemble_with(sites, &design, h)?;
    Ok(Fit {
        posterior,
        diagnostics: diag,
    })
}

fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Gaussian posterior predictive `N(x^T m_bar, x^T Sigma_bar x + s^2)`.
pub fn posterior_predictive(post: &PosteriorApprox, x: &[f64]) -> Result<(f64, f64)> {
    if x.len() != post.m() {
        return Err(Error::Shape(format!(
            "input has {} features, posterior has {}",
            x.len(),
            post.m()
        )));
    }
    let x = DVector::from_column_slice(x);
    let mean = x.dot(post.m_bar());
    let var = (post.sigma_bar() * &x).dot(&x) + post.residual_variance();
    Ok((mean, var))
}

/// Inclusion-logit cavity for `j`: the prior plus any relevance evidence.
pub(crate) fn inclusion_cavity_logit(sites: &SiteParams, j: usize, h: &Hyperparameters) -> f64 {
    logit(h.rho) + sites.relevance_rho[j]
}

/// Undamped prior-site target at `j` given its marginal, for callers that
/// evaluate hypothetical sites without reassembling.
pub(crate) fn hypothetical_prior_site(
    sites: &SiteParams,
    j: usize,
    mean: f64,
    var: f64,
    cavity_logit: f64,
    h: &Hyperparameters,
    guard: f64,
) -> Result<Option<(f64, f64)>> {
    Ok(prior_site_target(sites, j, mean, var, cavity_logit, h, guard)?.map(|t| (t.tau, t.mu)))
}
