use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use elicit_core::model::Hyperparameters;
use elicit_core::serial;
use elicit_core::sim::SessionArchive;

use crate::error::ServiceError;
use crate::session::{
    CreateSession, QueryView, Session, SessionRecord, StateSnapshot, SubmitFeedback, SubmitOutcome,
};

type Slot = Arc<Mutex<Session>>;

/// Sessions backed by one JSON file each under a data directory.
///
/// Each session sits behind its own mutex, so transitions on one session
/// are serialised while different sessions proceed in parallel. A
/// transition is computed on a copy, written to disk, and only then made
/// visible; a failed write leaves the in-memory session untouched.
pub struct SessionStore {
    dir: PathBuf,
    default_h: Hyperparameters,
    sessions: Mutex<HashMap<String, Slot>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>, default_h: Hyperparameters) -> Result<Self, ServiceError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| ServiceError::Storage(e.into()))?;
        let default_h = default_h.validate().map_err(ServiceError::Invalid)?;
        Ok(Self {
            dir,
            default_h,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn default_hyperparameters(&self) -> &Hyperparameters {
        &self.default_h
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn persist(&self, session: &Session) -> Result<(), ServiceError> {
        serial::save(&session.to_record(), self.path(session.id())).map_err(ServiceError::Storage)
    }

    fn slot(&self, id: &str) -> Result<Slot, ServiceError> {
        // Ids are generated by `create`; anything else cannot name a file of ours.
        let well_formed = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        if !well_formed {
            return Err(ServiceError::NotFound(id.to_string()));
        }
        let mut map = lock(&self.sessions);
        if let Some(slot) = map.get(id) {
            return Ok(slot.clone());
        }
        let path = self.path(id);
        if !path.exists() {
            return Err(ServiceError::NotFound(id.to_string()));
        }
        let record: SessionRecord = serial::load(&path).map_err(ServiceError::Storage)?;
        let slot = Arc::new(Mutex::new(Session::from_record(record)?));
        map.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    pub fn create(&self, req: CreateSession) -> Result<QueryView, ServiceError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::create(id.clone(), req, &self.default_h)?;
        self.persist(&session)?;
        let view = session.query_view(false);
        lock(&self.sessions).insert(id, Arc::new(Mutex::new(session)));
        tracing::info!(session = %view.session_id, "session created");
        Ok(view)
    }

    pub fn next_query(&self, id: &str, with_gains: bool) -> Result<QueryView, ServiceError> {
        let slot = self.slot(id)?;
        let session = lock(&slot);
        Ok(session.query_view(with_gains))
    }

    pub fn submit(&self, id: &str, req: &SubmitFeedback) -> Result<SubmitOutcome, ServiceError> {
        let slot = self.slot(id)?;
        let mut session = lock(&slot);
        let next = session.submit(req)?;
        self.persist(&next)?;
        *session = next;
        tracing::debug!(session = id, revision = session.revision(), "feedback accepted");
        Ok(session.outcome(req.feedback))
    }

    pub fn state(&self, id: &str) -> Result<StateSnapshot, ServiceError> {
        let slot = self.slot(id)?;
        let session = lock(&slot);
        Ok(session.snapshot())
    }

    pub fn export(&self, id: &str) -> Result<SessionArchive, ServiceError> {
        let slot = self.slot(id)?;
        let session = lock(&slot);
        Ok(session.archive())
    }
}

// A panic while holding a session lock happens before the commit step, so
// the guarded value is still a consistent session.
fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}
