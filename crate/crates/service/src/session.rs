use elicit_core::ep::{EpConfig, Fit, FitDiagnostics};
use elicit_core::model::{Dataset, Feedback, FeedbackKind, FeedbackLog, Hyperparameters, QueryKind};
use elicit_core::posterior::{PosteriorApprox, SiteParams};
use elicit_core::query::select_next_query;
use elicit_core::serial::Versioned;
use elicit_core::sim::{ElicitationState, PosteriorSummary, SessionArchive, TranscriptEntry};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Body of `POST /sessions`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset: Dataset,
    #[serde(default)]
    pub holdout: Option<Dataset>,
    /// Falls back to the server default.
    #[serde(default)]
    pub hyperparameters: Option<Hyperparameters>,
    #[serde(default)]
    pub ep_config: Option<EpConfig>,
    pub feedback_kind: QueryKind,
}

/// Body of `POST /sessions/{id}/feedback`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitFeedback {
    /// The revision the answer was given against.
    pub revision: u64,
    pub feedback: Feedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateGain {
    pub feature: usize,
    pub gain: f64,
}

/// The question the expert is expected to answer next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub feature: usize,
    pub feature_name: String,
    pub kind: QueryKind,
    /// Gains of every candidate at the time of ranking.
    pub gains: Vec<CandidateGain>,
    pub skipped_branches: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Pending,
    Complete,
}

/// Response of `GET /sessions/{id}/query`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryView {
    pub session_id: String,
    pub revision: u64,
    pub status: QueryStatus,
    pub feature: Option<usize>,
    pub feature_name: Option<String>,
    pub kind: QueryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<CandidateGain>>,
}

/// Response of an accepted submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub accepted: Feedback,
    pub revision: u64,
    /// Holdout error after the answer, when the session has a holdout.
    pub mse: Option<f64>,
    pub next: QueryView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureState {
    pub index: usize,
    pub name: String,
    pub mean: f64,
    pub inclusion: f64,
    pub queried: bool,
}

/// Response of `GET /sessions/{id}/state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub session_id: String,
    pub revision: u64,
    pub kind: QueryKind,
    pub status: QueryStatus,
    pub features: Vec<FeatureState>,
    pub mse_history: Vec<f64>,
    /// `holdout` or `training`.
    pub mse_on: String,
    pub feedback: Vec<Feedback>,
    pub diagnostics: FitDiagnostics,
}

/// One live session.
#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    revision: u64,
    dataset: Dataset,
    holdout: Option<Dataset>,
    h: Hyperparameters,
    cfg: EpConfig,
    kind: QueryKind,
    transcript: Vec<TranscriptEntry>,
    state: ElicitationState,
    pending: Option<PendingQuery>,
}

/// On-disk form of a [`Session`]. The posterior is stored as its site
/// parameters and reassembled on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub revision: u64,
    pub dataset: Dataset,
    pub holdout: Option<Dataset>,
    pub hyperparameters: Hyperparameters,
    pub ep_config: EpConfig,
    pub kind: QueryKind,
    pub transcript: Vec<TranscriptEntry>,
    pub log: FeedbackLog,
    pub sites: SiteParams,
    pub diagnostics: FitDiagnostics,
    pub mse_history: Vec<f64>,
    pub posteriors: Vec<PosteriorSummary>,
    pub pending: Option<PendingQuery>,
}

impl Versioned for SessionRecord {
    const FORMAT: &'static str = "elicit.session";
    const VERSION: u32 = 1;
}

impl Session {
    /// Fits the baseline posterior and ranks the first query.
    pub fn create(id: String, req: CreateSession, default_h: &Hyperparameters) -> Result<Self, ServiceError> {
        let h = req
            .hyperparameters
            .unwrap_or(*default_h)
            .validate()
            .map_err(ServiceError::from_core)?;
        let cfg = req
            .ep_config
            .unwrap_or_default()
            .validate()
            .map_err(ServiceError::from_core)?;
        let dataset = req.dataset;
        dataset.validate().map_err(ServiceError::from_core)?;
        if let Some(ho) = &req.holdout {
            ho.validate().map_err(ServiceError::from_core)?;
            if ho.m() != dataset.m() {
                return Err(ServiceError::from_core(elicit_core::Error::Shape(format!(
                    "holdout has {} features, dataset has {}",
                    ho.m(),
                    dataset.m()
                ))));
            }
        }
        let state = ElicitationState::start(&dataset, req.holdout.as_ref(), &h, &cfg)
            .map_err(ServiceError::from_core)?;
        let mut session = Self {
            id,
            revision: 0,
            dataset,
            holdout: req.holdout,
            h,
            cfg,
            kind: req.feedback_kind,
            transcript: Vec::new(),
            state,
            pending: None,
        };
        session.pending = session.rank()?;
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn pending(&self) -> Option<&PendingQuery> {
        self.pending.as_ref()
    }

    pub fn posterior(&self) -> &PosteriorApprox {
        &self.state.fit.posterior
    }

    fn rank(&self) -> Result<Option<PendingQuery>, ServiceError> {
        let m = self.dataset.m();
        if self.state.log.candidates(m).is_empty() {
            return Ok(None);
        }
        let ranking = select_next_query(
            &self.state.fit.posterior,
            &self.dataset,
            &self.state.log,
            &self.h,
            &self.cfg,
            self.kind,
        )
        .map_err(ServiceError::from_core)?;
        Ok(Some(PendingQuery {
            feature: ranking.selected,
            feature_name: self.dataset.feature_names()[ranking.selected].clone(),
            kind: self.kind,
            gains: ranking
                .candidates
                .iter()
                .zip(&ranking.gains)
                .map(|(&feature, &gain)| CandidateGain { feature, gain })
                .collect(),
            skipped_branches: ranking.skipped_branches,
        }))
    }

    /// Returns the session after `req` was applied; `self` is not touched.
    pub fn submit(&self, req: &SubmitFeedback) -> Result<Self, ServiceError> {
        if req.revision != self.revision {
            return Err(ServiceError::Conflict {
                submitted: req.revision,
                current: self.revision,
            });
        }
        let Some(pending) = &self.pending else {
            return Err(ServiceError::Rejected(
                "session is complete, every feature has been queried".into(),
            ));
        };
        let fb = req.feedback;
        if fb.feature != pending.feature {
            return Err(ServiceError::Rejected(format!(
                "pending query is feature {}, answer is for feature {}",
                pending.feature, fb.feature
            )));
        }
        let matches = matches!(
            (fb.kind, pending.kind),
            (FeedbackKind::Value { .. }, QueryKind::Value)
                | (FeedbackKind::Relevance { .. }, QueryKind::Relevance)
                | (FeedbackKind::Uncertain, _)
        );
        if !matches {
            return Err(ServiceError::Rejected(format!(
                "pending query asks for {:?} feedback",
                pending.kind
            )));
        }
        fb.validate(self.dataset.m()).map_err(ServiceError::from_core)?;

        let mut next = self.clone();
        next.state
            .apply(&self.dataset, self.holdout.as_ref(), &self.h, &self.cfg, fb)
            .map_err(ServiceError::from_core)?;
        next.revision += 1;
        next.transcript.push(TranscriptEntry {
            revision: next.revision,
            proposed: Some(pending.feature),
            feedback: fb,
        });
        next.pending = next.rank()?;
        Ok(next)
    }

    pub fn query_view(&self, with_gains: bool) -> QueryView {
        QueryView {
            session_id: self.id.clone(),
            revision: self.revision,
            status: self.status(),
            feature: self.pending.as_ref().map(|p| p.feature),
            feature_name: self.pending.as_ref().map(|p| p.feature_name.clone()),
            kind: self.kind,
            gains: with_gains
                .then(|| self.pending.as_ref().map(|p| p.gains.clone()))
                .flatten(),
        }
    }

    pub fn outcome(&self, accepted: Feedback) -> SubmitOutcome {
        SubmitOutcome {
            accepted,
            revision: self.revision,
            mse: self
                .holdout
                .as_ref()
                .and_then(|_| self.state.mse_history.last().copied()),
            next: self.query_view(false),
        }
    }

    fn status(&self) -> QueryStatus {
        if self.pending.is_some() {
            QueryStatus::Pending
        } else {
            QueryStatus::Complete
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        let post = &self.state.fit.posterior;
        let features = self
            .dataset
            .feature_names()
            .iter()
            .enumerate()
            .map(|(j, name)| FeatureState {
                index: j,
                name: name.clone(),
                mean: post.m_bar()[j],
                inclusion: post.rho_bar()[j],
                queried: self.state.log.is_queried(j),
            })
            .collect();
        StateSnapshot {
            session_id: self.id.clone(),
            revision: self.revision,
            kind: self.kind,
            status: self.status(),
            features,
            mse_history: self.state.mse_history.clone(),
            mse_on: if self.holdout.is_some() { "holdout" } else { "training" }.into(),
            feedback: self.state.log.entries().to_vec(),
            diagnostics: self.state.fit.diagnostics,
        }
    }

    pub fn archive(&self) -> SessionArchive {
        SessionArchive {
            session_id: self.id.clone(),
            dataset: self.dataset.clone(),
            holdout: self.holdout.clone(),
            hyperparameters: self.h,
            ep_config: self.cfg,
            query_kind: self.kind,
            transcript: self.transcript.clone(),
            mse_history: self.state.mse_history.clone(),
            posteriors: self.state.posteriors.clone(),
        }
    }

    pub fn to_record(&self) -> SessionRecord {
        SessionRecord {
            id: self.id.clone(),
            revision: self.revision,
            dataset: self.dataset.clone(),
            holdout: self.holdout.clone(),
            hyperparameters: self.h,
            ep_config: self.cfg,
            kind: self.kind,
            transcript: self.transcript.clone(),
            log: self.state.log.clone(),
            sites: self.state.fit.posterior.sites().clone(),
            diagnostics: self.state.fit.diagnostics,
            mse_history: self.state.mse_history.clone(),
            posteriors: self.state.posteriors.clone(),
            pending: self.pending.clone(),
        }
    }

    pub fn from_record(rec: SessionRecord) -> Result<Self, ServiceError> {
        let posterior = PosteriorApprox::assemble(rec.sites, &rec.dataset, &rec.hyperparameters)
            .map_err(ServiceError::Storage)?;
        Ok(Self {
            id: rec.id,
            revision: rec.revision,
            dataset: rec.dataset,
            holdout: rec.holdout,
            h: rec.hyperparameters,
            cfg: rec.ep_config,
            kind: rec.kind,
            transcript: rec.transcript,
            state: ElicitationState {
                log: rec.log,
                fit: Fit {
                    posterior,
                    diagnostics: rec.diagnostics,
                },
                mse_history: rec.mse_history,
                posteriors: rec.posteriors,
            },
            pending: rec.pending,
        })
    }
}
