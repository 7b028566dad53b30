//! Session archives and their deterministic replay.

use serde::{Deserialize, Serialize};

use super::mse;
use crate::ep::{fit_posterior, refit_after, EpConfig, Fit};
use crate::error::{Error, Result};
use crate::model::{Dataset, Feedback, FeedbackLog, Hyperparameters, QueryKind};
use crate::posterior::PosteriorApprox;
use crate::serial::Versioned;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// Session revision after this answer was applied.
    pub revision: u64,
    /// Feature the engine proposed when the answer came in.
    pub proposed: Option<usize>,
    pub feedback: Feedback,
}

/// Per-step posterior summary kept in an archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub m_bar: Vec<f64>,
    pub rho_bar: Vec<f64>,
}

impl PosteriorSummary {
    pub fn of(post: &PosteriorApprox) -> Self {
        Self {
            m_bar: post.m_bar().iter().copied().collect(),
            rho_bar: post.rho_bar().iter().copied().collect(),
        }
    }
}

/// Everything needed to reproduce an elicitation session offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionArchive {
    pub session_id: String,
    pub dataset: Dataset,
    pub holdout: Option<Dataset>,
    pub hyperparameters: Hyperparameters,
    pub ep_config: EpConfig,
    pub query_kind: QueryKind,
    pub transcript: Vec<TranscriptEntry>,
    /// Error after `t` answers, on the holdout if present, else on the
    /// training data.
    pub mse_history: Vec<f64>,
    /// Posterior after `t` answers.
    pub posteriors: Vec<PosteriorSummary>,
}

impl Versioned for SessionArchive {
    const FORMAT: &'static str = "elicit.session_archive";
    const VERSION: u32 = 1;
}

/// The state an elicitation session carries between answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationState {
    pub log: FeedbackLog,
    pub fit: Fit,
    pub mse_history: Vec<f64>,
    pub posteriors: Vec<PosteriorSummary>,
}

impl ElicitationState {
    pub fn start(data: &Dataset, holdout: Option<&Dataset>, h: &Hyperparameters, cfg: &EpConfig) -> Result<Self> {
        let log = FeedbackLog::new();
        let fit = fit_posterior(data, &log, h, cfg)?;
        let err = mse(&fit.posterior, holdout.unwrap_or(data))?;
        Ok(Self {
            posteriors: vec![PosteriorSummary::of(&fit.posterior)],
            log,
            fit,
            mse_history: vec![err],
        })
    }

    /// Appends `answer` and refits from the current sites. On error the
    /// state is left untouched.
    pub fn apply(
        &mut self,
        data: &Dataset,
        holdout: Option<&Dataset>,
        h: &Hyperparameters,
        cfg: &EpConfig,
        answer: Feedback,
    ) -> Result<()> {
        let log = self.log.append(answer.clone(), data.m())?;
        let fit = refit_after(data, &log, h, cfg, &self.fit, &answer)?;
        let err = mse(&fit.posterior, holdout.unwrap_or(data))?;
        self.posteriors.push(PosteriorSummary::of(&fit.posterior));
        self.mse_history.push(err);
        self.log = log;
        self.fit = fit;
        Ok(())
    }
}

/// Re-runs the archived transcript from scratch.
pub fn replay(archive: &SessionArchive) -> Result<ElicitationState> {
    let h = archive.hyperparameters.validate()?;
    let cfg = archive.ep_config.validate()?;
    let data = &archive.dataset;
    let holdout = archive.holdout.as_ref();
    if let Some(ho) = holdout {
        if ho.m() != data.m() {
            return Err(Error::Shape(format!(
                "holdout has {} features, dataset has {}",
                ho.m(),
                data.m()
            )));
        }
    }
    let mut state = ElicitationState::start(data, holdout, &h, &cfg)?;
    for entry in &archive.transcript {
        state.apply(data, holdout, &h, &cfg, entry.feedback.clone())?;
    }
    Ok(state)
}
