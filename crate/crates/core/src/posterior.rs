//! The factorised posterior approximation `q(w) q(sigma^-2) q(gamma)` and the
//! site parameters it is assembled from.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Design, GaussianSites};
use crate::model::{sigmoid, Dataset, FeedbackKind, FeedbackLog, Hyperparameters, NoiseMode};
use crate::serial::{self, Versioned};

/// Natural parameters of every site approximation.
///
/// Gaussian sites are stored as (precision, precision-adjusted mean) and
/// Bernoulli sites as logits. The Gaussian likelihood site is always
/// `E[sigma^-2] X^T X`, so only the scale `E[sigma^-2]` is stored for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteParams {
    /// `E[sigma^-2]` multiplying `X^T X` in the likelihood site precision.
    pub likelihood_scale: f64,
    #[serde(with = "serial::vector")]
    pub likelihood_mu: DVector<f64>,
    pub likelihood_alpha: f64,
    pub likelihood_beta: f64,
    #[serde(with = "serial::vector")]
    pub prior_mu: DVector<f64>,
    #[serde(with = "serial::vector")]
    pub prior_tau: DVector<f64>,
    #[serde(with = "serial::vector")]
    pub prior_rho: DVector<f64>,
    #[serde(with = "serial::vector")]
    pub relevance_rho: DVector<f64>,
    #[serde(with = "serial::vector")]
    pub value_mu: DVector<f64>,
    #[serde(with = "serial::vector")]
    pub value_tau: DVector<f64>,
}

impl SiteParams {
    /// Sites reproducing the prior: each prior site carries the moment-matched
    /// variance `rho * psi2`, the likelihood site uses the prior mean of the
    /// noise precision, and no feedback is present.
    pub fn initial(data: &Dataset, h: &Hyperparameters) -> Self {
        let m = data.m();
        let scale = match h.noise {
            NoiseMode::Fixed { sigma2 } => 1.0 / sigma2,
            NoiseMode::Learned => h.alpha_sigma / h.beta_sigma,
        };
        Self {
            likelihood_scale: scale,
            likelihood_mu: data.x().tr_mul(data.y()) * scale,
            likelihood_alpha: 0.0,
            likelihood_beta: 0.0,
            prior_mu: DVector::zeros(m),
            prior_tau: DVector::from_element(m, 1.0 / (h.rho * h.psi2)),
            prior_rho: DVector::zeros(m),
            relevance_rho: DVector::zeros(m),
            value_mu: DVector::zeros(m),
            value_tau: DVector::zeros(m),
        }
    }

    pub fn m(&self) -> usize {
        self.prior_tau.len()
    }

    /// Installs the exact feedback sites recorded in `log`.
    pub fn install_feedback(&mut self, log: &FeedbackLog, h: &Hyperparameters) {
        for fb in log.entries() {
            let j = fb.feature;
            match fb.kind {
                FeedbackKind::Value { value } => {
                    self.value_tau[j] = 1.0 / h.omega2;
                    self.value_mu[j] = value / h.omega2;
                }
                FeedbackKind::Relevance { relevant } => {
                    self.relevance_rho[j] = relevance_site(relevant == 1, h.pi);
                }
                FeedbackKind::Uncertain => {}
            }
        }
    }

    pub(crate) fn gaussian(&self) -> (DVector<f64>, DVector<f64>) {
        (
            &self.prior_tau + &self.value_tau,
            &self.likelihood_mu + &self.prior_mu + &self.value_mu,
        )
    }

    pub(crate) fn inclusion(&self, h: &Hyperparameters) -> DVector<f64> {
        let base = h.logit_rho();
        DVector::from_fn(self.m(), |j, _| {
            sigmoid(self.prior_rho[j] + base + self.relevance_rho[j])
        })
    }
}

/// Exact site for relevance feedback: the logit of the likelihood ratio
/// `pi / (1 - pi)`, signed by the answer.
pub fn relevance_site(relevant: bool, pi: f64) -> f64 {
    let l = (pi / (1.0 - pi)).ln();
    if relevant {
        l
    } else {
        -l
    }
}

/// Assembled posterior approximation together with its sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorApprox {
    #[serde(with = "serial::vector")]
    m_bar: DVector<f64>,
    #[serde(with = "serial::matrix")]
    sigma_bar: DMatrix<f64>,
    #[serde(with = "serial::vector")]
    rho_bar: DVector<f64>,
    alpha_bar: f64,
    beta_bar: f64,
    residual_variance: f64,
    sites: SiteParams,
}

impl PosteriorApprox {
    /// Reassembles the full approximation from `sites`.
    pub fn assemble(sites: SiteParams, data: &Dataset, h: &Hyperparameters) -> Result<Self> {
        let design = Design::new(data);
        Self::assemble_with(sites, &design, h)
    }

    pub(crate) fn assemble_with(sites: SiteParams, design: &Design<'_>, h: &Hyperparameters) -> Result<Self> {
        if sites.m() != design.data.m() {
            return Err(Error::Shape(format!(
                "sites for {} features, dataset has {}",
                sites.m(),
                design.data.m()
            )));
        }
        let (diag, shift) = sites.gaussian();
        let (m_bar, sigma_bar) = linalg::full(
            design,
            &GaussianSites {
                scale: sites.likelihood_scale,
                diag: &diag,
                shift: &shift,
            },
        )?;
        let rho_bar = sites.inclusion(h);
        let alpha_bar = h.alpha_sigma + sites.likelihood_alpha;
        let beta_bar = h.beta_sigma - sites.likelihood_beta;
        let residual_variance = match h.noise {
            NoiseMode::Fixed { sigma2 } => sigma2,
            NoiseMode::Learned => beta_bar / alpha_bar,
        };
        Ok(Self {
            m_bar,
            sigma_bar,
            rho_bar,
            alpha_bar,
            beta_bar,
            residual_variance,
            sites,
        })
    }

    /// The prior-only approximation with the likelihood site installed.
    pub fn initial(data: &Dataset, h: &Hyperparameters) -> Result<Self> {
        Self::assemble(SiteParams::initial(data, h), data, h)
    }

    pub fn m_bar(&self) -> &DVector<f64> {
        &self.m_bar
    }

    pub fn sigma_bar(&self) -> &DMatrix<f64> {
        &self.sigma_bar
    }

    pub fn rho_bar(&self) -> &DVector<f64> {
        &self.rho_bar
    }

    pub fn alpha_bar(&self) -> f64 {
        self.alpha_bar
    }

    pub fn beta_bar(&self) -> f64 {
        self.beta_bar
    }

    /// Point estimate of the residual variance used in predictions.
    pub fn residual_variance(&self) -> f64 {
        self.residual_variance
    }

    pub fn sites(&self) -> &SiteParams {
        &self.sites
    }

    pub fn into_sites(self) -> SiteParams {
        self.sites
    }

    pub fn m(&self) -> usize {
        self.m_bar.len()
    }

    /// Predictions `X m_bar` for every row of `data`.
    pub fn predict(&self, data: &Dataset) -> DVector<f64> {
        data.x() * &self.m_bar
    }
}

impl Versioned for PosteriorApprox {
    const FORMAT: &'static str = "elicit.posterior";
    const VERSION: u32 = 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Feedback;

    fn toy() -> (Dataset, Hyperparameters) {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 1.0, 0.2, 0.1]);
        let y = DVector::from_vec(vec![1.0, 0.0, 0.5]);
        let mut h = Hyperparameters::synthetic(2, 1);
        h.rho = 0.4;
        (Dataset::with_default_names(x, y).unwrap(), h)
    }

    #[test]
    fn assembly_identity() {
        let (data, h) = toy();
        let mut sites = SiteParams::initial(&data, &h);
        sites.prior_tau[0] = 2.5;
        sites.prior_mu[1] = 0.3;
        sites.prior_rho[0] = 0.7;
        sites.install_feedback(
            &FeedbackLog::new()
                .append(Feedback::value(1, 0.4), 2)
                .unwrap()
                .append(Feedback::relevance(0, false), 2)
                .unwrap(),
            &h,
        );
        let post = PosteriorApprox::assemble(sites.clone(), &data, &h).unwrap();

        let mut precision = data.x().tr_mul(data.x()) * sites.likelihood_scale;
        for j in 0..2 {
            precision[(j, j)] += sites.prior_tau[j] + sites.value_tau[j];
        }
        let sigma = precision.try_inverse().unwrap();
        let mean = &sigma * (&sites.likelihood_mu + &sites.prior_mu + &sites.value_mu);
        assert!((&sigma - post.sigma_bar()).amax() < 1e-10);
        assert!((&mean - post.m_bar()).amax() < 1e-10);
        let expect = sigmoid(0.7 + h.logit_rho() - (0.95f64 / 0.05).ln());
        assert!((post.rho_bar()[0] - expect).abs() < 1e-12);
        assert!((post.rho_bar()[1] - h.rho).abs() < 1e-12);
    }

    #[test]
    fn prior_only_has_prior_moments() {
        let x = DMatrix::zeros(0, 3);
        let data = Dataset::with_default_names(x, DVector::zeros(0)).unwrap();
        let mut h = Hyperparameters::synthetic(3, 1);
        h.psi2 = 2.0;
        let post = PosteriorApprox::initial(&data, &h).unwrap();
        for j in 0..3 {
            assert!((post.sigma_bar()[(j, j)] - h.rho * h.psi2).abs() < 1e-12);
            assert_eq!(post.m_bar()[j], 0.0);
            assert!((post.rho_bar()[j] - h.rho).abs() < 1e-12);
        }
    }

    #[test]
    fn relevance_site_sign() {
        assert!((relevance_site(true, 0.9) - 2.197_224_577_336_219_6).abs() < 1e-12);
        assert!((relevance_site(false, 0.9) + 2.197_224_577_336_219_6).abs() < 1e-12);
        assert_eq!(relevance_site(true, 0.5), 0.0);
    }
}
