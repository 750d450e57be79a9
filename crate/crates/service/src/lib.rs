//! Challenge-issuing HTTP service.
//!
//! Each challenge lives behind an opaque single-use token: the client
//! fetches the asset, submits one answer and learns only whether it passed.
//! Every state change is appended to a JSON-lines audit log, which is also
//! how the token table survives a restart.
//!
//! | Route | Purpose |
//! |---|---|
//! | `POST /v1/challenge` | issue `{kind, params}` → `{token, asset_url, expires_in}` |
//! | `GET /v1/asset/{token}` | asset bytes with their media type |
//! | `POST /v1/answer` | `{token, answer}` → `{passed, attempts_remaining}` |
//! | `GET /v1/stats?window=SECONDS` | counts folded from the audit log |
//! | `/demo` | static browser client |

pub mod audit;
pub mod clock;
pub mod config;
pub mod http;
pub mod selfcheck;
pub mod service;

use std::path::Path;

use thiserror::Error;

pub use audit::{fold_stats, read_events, AuditEvent, AuditLog, EventKind, Stats, Window};
pub use clock::{ManualTime, SystemTime, TimeSource};
pub use config::{ServiceConfig, ENV_OVERRIDES};
pub use http::{router, serve, AnswerRequest, IssueParams, IssueRequest, KindName};
pub use selfcheck::{scan_response, SelfCheckReport};
pub use service::{
    Asset, ChallengeKind, ChallengePools, ChallengeService, ChallengeToken, Issued, StoredAnswer, SubmitOutcome,
    TokenState,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown token")]
    UnknownToken,
    #[error("token expired")]
    ExpiredToken,
    #[error("no attempts left for this token")]
    NoAttemptsLeft,
    #[error("challenge pool unavailable: {0}")]
    PoolUnavailable(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("audit log {path}: {message}")]
    Audit { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl ServiceError {
    pub(crate) fn audit(path: &Path, e: std::io::Error) -> Self {
        Self::Audit { path: path.display().to_string(), message: e.to_string() }
    }
}
