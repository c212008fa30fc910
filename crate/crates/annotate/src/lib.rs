//! Blind, randomized human-evaluation sessions over scenario outputs.
//!
//! A [`Session`] pools hypotheses from several system runs, shuffles them
//! with a seeded rng and hides the system behind opaque item keys. The
//! [`SessionStore`] persists sessions as append-only logs and the
//! [`server`] module exposes them over HTTP.

use std::path::{Path, PathBuf};

use cascade_eval::agreement::AgreementError;
use cascade_eval::corpus::CorpusError;
use cascade_eval::scenarios::{load_run_dir, ScenarioError, ScenarioName};

pub mod server;
pub mod session;
pub mod store;

pub use session::{Ack, FinalizedExport, NextItem, PresentationItem, RatingRecord, Session, SystemRun};
pub use store::SessionStore;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("unknown item key {0:?}")]
    UnknownItem(String),
    #[error("{field} must be an integer in 1..=5, got {value}")]
    OutOfRange { field: &'static str, value: i64 },
    #[error("rater {rater:?} already rated {item_key:?} with different values")]
    Duplicate { rater: String, item_key: String },
    #[error("session {0:?} is finalized")]
    SessionFinalized(String),
    #[error("session {0:?} is not finalized yet")]
    NotFinalized(String),
    #[error("runs do not cover the same items: {0}")]
    CoverageMismatch(String),
    #[error("session {0:?} already exists")]
    SessionExists(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("corrupt session log {path}:{line}: {message}")]
    CorruptLog { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Agreement(#[from] AgreementError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Load scenario run directories as labelled systems.
///
/// Named scenarios are labelled A, B or C; custom runs take the directory name.
pub fn runs_from_dirs<P: AsRef<Path>>(dirs: &[P]) -> Result<Vec<SystemRun>, AnnotateError> {
    dirs.iter()
        .map(|d| {
            let d = d.as_ref();
            let run = load_run_dir(d)?;
            let label = match run.snapshot.scenario {
                ScenarioName::Custom | ScenarioName::PunctImpact => d
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| d.display().to_string()),
                s => s.as_str().to_string(),
            };
            Ok(SystemRun {
                label,
                hypotheses: run.hypotheses(),
            })
        })
        .collect()
}
