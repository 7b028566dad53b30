//! Domain types shared by the whole engine: the regression problem, the fixed
//! model constants, and the expert's answers.

use std::collections::{BTreeSet, HashSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serial::{self, Versioned};

/// An `n x m` regression problem with named features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    #[serde(with = "serial::matrix")]
    x: DMatrix<f64>,
    #[serde(with = "serial::vector")]
    y: DVector<f64>,
    feature_names: Vec<String>,
}

#[derive(Deserialize)]
struct RawDataset {
    #[serde(with = "serial::matrix")]
    x: DMatrix<f64>,
    #[serde(with = "serial::vector")]
    y: DVector<f64>,
    feature_names: Vec<String>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = Error;

    fn try_from(raw: RawDataset) -> Result<Self> {
        // An empty row list carries no column count.
        let x = if raw.x.nrows() == 0 {
            DMatrix::zeros(0, raw.feature_names.len())
        } else {
            raw.x
        };
        Dataset::new(x, raw.y, raw.feature_names)
    }
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, feature_names: Vec<String>) -> Result<Self> {
        let ds = Self {
            x,
            y,
            feature_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Same as [`Dataset::new`] with features named `x0, x1, ...`.
    pub fn with_default_names(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, names)
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.x.nrows() {
            return Err(Error::InvalidDataset(format!(
                "X has {} rows but y has length {}",
                self.x.nrows(),
                self.y.len()
            )));
        }
        if self.feature_names.len() != self.x.ncols() {
            return Err(Error::InvalidDataset(format!(
                "X has {} columns but {} feature names were given",
                self.x.ncols(),
                self.feature_names.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.feature_names.len());
        for name in &self.feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate feature name `{name}`"
                )));
            }
        }
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        Ok(())
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of features.
    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// Rows selected by `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(rows.len(), self.m(), |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]);
        Dataset {
            x,
            y,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Stacks the rows of `other` below `self`.
    pub fn concat_rows(&self, other: &Dataset) -> Result<Dataset> {
        if other.feature_names != self.feature_names {
            return Err(Error::Shape("datasets have different features".into()));
        }
        let n = self.n() + other.n();
        let x = DMatrix::from_fn(n, self.m(), |i, j| {
            if i < self.n() {
                self.x[(i, j)]
            } else {
                other.x[(i - self.n(), j)]
            }
        });
        let y = DVector::from_fn(n, |i, _| {
            if i < self.n() {
                self.y[i]
            } else {
                other.y[i - self.n()]
            }
        });
        Ok(Dataset {
            x,
            y,
            feature_names: self.feature_names.clone(),
        })
    }
}

impl Versioned for Dataset {
    const FORMAT: &'static str = "elicit.dataset";
    const VERSION: u32 = 1;
}

/// How the residual noise variance is treated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NoiseMode {
    /// Known noise variance; the Gamma prior on the noise precision is unused.
    Fixed { sigma2: f64 },
    /// Noise precision with a Gamma(alpha_sigma, beta_sigma) prior, fitted by VB.
    Learned,
}

/// Fixed model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Slab variance.
    pub psi2: f64,
    /// Prior inclusion probability.
    pub rho: f64,
    /// Gamma shape of the noise-precision prior.
    pub alpha_sigma: f64,
    /// Gamma rate of the noise-precision prior.
    pub beta_sigma: f64,
    /// Noise variance of value feedback.
    pub omega2: f64,
    /// Probability that relevance feedback is correct.
    pub pi: f64,
    pub noise: NoiseMode,
}

impl Hyperparameters {
    /// Synthetic-data defaults: the data-generating values with known noise.
    /// `rho = m_star / m`, kept inside `[1e-6, 1 - 1e-6]`.
    pub fn synthetic(m: usize, m_star: usize) -> Self {
        Self {
            psi2: 1.0,
            rho: (m_star as f64 / m.max(1) as f64).clamp(1e-6, 1.0 - 1e-6),
            alpha_sigma: 1.0,
            beta_sigma: 1.0,
            omega2: 0.01,
            pi: 0.95,
            noise: NoiseMode::Fixed { sigma2: 1.0 },
        }
    }

    /// Defaults used for normalised bag-of-words review data.
    pub fn review_data() -> Self {
        Self {
            psi2: 0.01,
            rho: 0.3,
            alpha_sigma: 1.0,
            beta_sigma: 1.0,
            omega2: 0.01,
            pi: 0.9,
            noise: NoiseMode::Learned,
        }
    }

    /// Checks every range constraint, naming the first offending field.
    pub fn validate(self) -> Result<Self> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Error {
            Error::InvalidHyperparameter {
                field,
                reason: reason.into(),
            }
        }
        let positive = |field: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(bad(field, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("psi2", self.psi2)?;
        positive("alpha_sigma", self.alpha_sigma)?;
        positive("beta_sigma", self.beta_sigma)?;
        positive("omega2", self.omega2)?;
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(bad("rho", format!("must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.pi > 0.5 && self.pi < 1.0) {
            return Err(bad(
                "pi",
                format!("must lie in (0.5, 1), got {}", self.pi),
            ));
        }
        if let NoiseMode::Fixed { sigma2 } = self.noise {
            positive("sigma2", sigma2)?;
        }
        Ok(self)
    }

    pub fn logit_rho(&self) -> f64 {
        logit(self.rho)
    }
}

impl Versioned for Hyperparameters {
    const FORMAT: &'static str = "elicit.hyperparameters";
    const VERSION: u32 = 1;
}

/// Which kind of question the expert is asked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Value,
    Relevance,
}

/// The payload of one answer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackKind {
    /// The expert's estimate of the coefficient value.
    Value { value: f64 },
    /// 1 for relevant, 0 for not relevant.
    Relevance { relevant: u8 },
    /// The expert declined to answer.
    Uncertain,
}

/// One answer about one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub feature: usize,
    #[serde(flatten)]
    pub kind: FeedbackKind,
}

impl Feedback {
    pub fn value(feature: usize, value: f64) -> Self {
        Self {
            feature,
            kind: FeedbackKind::Value { value },
        }
    }

    pub fn relevance(feature: usize, relevant: bool) -> Self {
        Self {
            feature,
            kind: FeedbackKind::Relevance {
                relevant: relevant as u8,
            },
        }
    }

    pub fn uncertain(feature: usize) -> Self {
        Self {
            feature,
            kind: FeedbackKind::Uncertain,
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.feature >= m {
            return Err(Error::FeatureIndex {
                index: self.feature,
                m,
            });
        }
        match self.kind {
            FeedbackKind::Value { value } if !value.is_finite() => Err(Error::InvalidFeedback(
                format!("value feedback must be finite, got {value}"),
            )),
            FeedbackKind::Relevance { relevant } if relevant > 1 => Err(Error::InvalidFeedback(
                format!("relevance feedback must be 0 or 1, got {relevant}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Ordered record of the answers given so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLog {
    entries: Vec<Feedback>,
    queried: BTreeSet<usize>,
}

impl FeedbackLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Feedback] {
        &self.entries
    }

    pub fn queried(&self) -> &BTreeSet<usize> {
        &self.queried
    }

    pub fn is_queried(&self, feature: usize) -> bool {
        self.queried.contains(&feature)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns a new log with `fb` appended. Uncertain answers still retire
    /// the feature from future queries.
    pub fn append(&self, fb: Feedback, m: usize) -> Result<FeedbackLog> {
        let mut next = self.clone();
        next.push(fb, m)?;
        Ok(next)
    }

    pub fn push(&mut self, fb: Feedback, m: usize) -> Result<()> {
        fb.validate(m)?;
        let same_kind = |e: &Feedback| {
            e.feature == fb.feature
                && std::mem::discriminant(&e.kind) == std::mem::discriminant(&fb.kind)
        };
        match fb.kind {
            FeedbackKind::Value { .. } if self.entries.iter().any(same_kind) => {
                return Err(Error::DuplicateFeedback {
                    kind: "value",
                    index: fb.feature,
                })
            }
            FeedbackKind::Relevance { .. } if self.entries.iter().any(same_kind) => {
                return Err(Error::DuplicateFeedback {
                    kind: "relevance",
                    index: fb.feature,
                })
            }
            _ => {}
        }
        self.entries.push(fb);
        self.queried.insert(fb.feature);
        Ok(())
    }

    /// Features not yet queried, ascending.
    pub fn candidates(&self, m: usize) -> Vec<usize> {
        (0..m).filter(|j| !self.queried.contains(j)).collect()
    }
}

impl Versioned for FeedbackLog {
    const FORMAT: &'static str = "elicit.feedback_log";
    const VERSION: u32 = 1;
}

/// Data-generating coefficients of a synthetic problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub w: Vec<f64>,
    pub gamma: Vec<bool>,
    pub m_star: usize,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
