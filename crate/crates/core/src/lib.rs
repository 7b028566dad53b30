//! Sequential expert-knowledge elicitation for sparse linear regression.
//!
//! The model is a linear regression with a spike-and-slab prior on every
//! coefficient. An expert can tell us either the value of a coefficient
//! (Gaussian feedback) or whether it is relevant at all (noisy binary
//! feedback). The engine
//!
//! * fits a factorised approximation of the posterior ([`ep`]),
//! * scores every unqueried feature by the expected information gain its
//!   answer would bring to the training-set predictions ([`query`]),
//! * folds each answer back in as an exact likelihood site and repeats.
//!
//! [`sim`] reproduces the simulated-expert experiments, [`ingest`] builds
//! datasets from CSV and text, and [`oracle`] holds brute-force references
//! used by the test suites.
//!
//! ```
//! use elicit_core::prelude::*;
//!
//! let spec = SyntheticSpec { n: 10, m: 12, m_star: 4, psi2: 1.0, sigma2: 1.0, test_size: 100, seed: 3 };
//! let problem = generate_synthetic(&spec);
//! let h = Hyperparameters::synthetic(12, 4);
//! let fit = fit_posterior(&problem.train, &FeedbackLog::new(), &h, &EpConfig::default())?;
//! let ranking = select_next_query(&fit.posterior, &problem.train, &FeedbackLog::new(), &h,
//!                                 &EpConfig::default(), QueryKind::Value)?;
//! assert!(ranking.selected < 12);
//! # Ok::<(), elicit_core::Error>(())
//! ```

pub mod ep;
mod error;
pub mod ingest;
mod linalg;
pub mod model;
pub mod oracle;
pub mod posterior;
pub mod query;
pub mod serial;
pub mod sim;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::ep::{
        fit_posterior, fit_posterior_warm, posterior_predictive, EpConfig, Fit, FitDiagnostics,
    };
    pub use crate::error::{Error, Result};
    pub use crate::model::{
        Dataset, Feedback, FeedbackKind, FeedbackLog, GroundTruth, Hyperparameters, NoiseMode,
        QueryKind,
    };
    pub use crate::posterior::{PosteriorApprox, SiteParams};
    pub use crate::query::{nonsequential_ranking, select_next_query, QueryRanking};
    pub use crate::sim::{generate_synthetic, mse, SyntheticProblem, SyntheticSpec};
}
