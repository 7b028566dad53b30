//! HTTP session service for interactive elicitation.
//!
//! A session holds a dataset, the current posterior and the query the
//! expert is expected to answer next. Every accepted answer bumps the
//! session revision, and a submission must name the revision it answers,
//! so a stale client gets a conflict instead of silently overwriting state.
//!
//! Sessions are stored one JSON file per session in the data directory and
//! loaded lazily, so a restarted server picks up where it left off.
//!
//! | method | path | body |
//! |---|---|---|
//! | `POST` | `/sessions` | [`CreateSession`] |
//! | `GET` | `/sessions/{id}/query` | optional `?gains=true` |
//! | `POST` | `/sessions/{id}/feedback` | [`SubmitFeedback`] |
//! | `GET` | `/sessions/{id}/state` | |
//! | `GET` | `/sessions/{id}/export` | |
//! | `GET` | `/healthz` | |

mod config;
mod error;
mod http;
mod session;
mod store;

pub use config::{serve, ServeArgs};
pub use error::ServiceError;
pub use http::router;
pub use session::{
    CandidateGain, CreateSession, FeatureState, PendingQuery, QueryStatus, QueryView, Session,
    SessionRecord, StateSnapshot, SubmitFeedback, SubmitOutcome,
};
pub use store::SessionStore;
