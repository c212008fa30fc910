//! Session registry with an append-only log per session.
//!
//! Each session lives in `<dir>/<id>.jsonl`: a `created` record holding
//! the full session, then one `rating` record per stored rating and a
//! final `finalized` record. A rating is acknowledged only after its line
//! is synced, and [`SessionStore::open`] replays every log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use cascade_eval::agreement::LIKERT_LEVELS;
use cascade_eval::corpus::EvalItem;

use crate::session::{Ack, FinalizedExport, NextItem, RatingRecord, Session, SessionState, SystemRun};
use crate::AnnotateError;

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum LogEvent {
    Created { session: Session },
    Rating { record: RatingRecord },
    Finalized,
}

struct Slot {
    session: RwLock<Session>,
    // one writer per log file
    log: Option<Mutex<File>>,
}

impl Slot {
    fn append(&self, event: &LogEvent) -> Result<(), AnnotateError> {
        if let Some(log) = &self.log {
            let mut line = serde_json::to_vec(event).expect("log events serialize");
            line.push(b'\n');
            let mut f = log.lock().expect("log lock");
            f.write_all(&line)?;
            f.sync_data()?;
        }
        Ok(())
    }
}

pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn replay(path: &Path) -> Result<Session, AnnotateError> {
    let corrupt = |line: usize, msg: String| AnnotateError::CorruptLog {
        path: path.to_path_buf(),
        line,
        message: msg,
    };
    let mut session: Option<Session> = None;
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: LogEvent = match serde_json::from_str(&line) {
            Ok(e) => e,
            // a torn final line is a write that was never acknowledged
            Err(_) if !line.ends_with('}') => break,
            Err(e) => return Err(corrupt(i + 1, e.to_string())),
        };
        match (event, session.as_mut()) {
            (LogEvent::Created { session: mut s }, None) => {
                s.reindex();
                session = Some(s);
            }
            (LogEvent::Rating { record }, Some(s)) => s.restore_rating(record),
            (LogEvent::Finalized, Some(s)) => s.mark_finalized(),
            _ => return Err(corrupt(i + 1, "unexpected event order".into())),
        }
    }
    session.ok_or_else(|| corrupt(0, "log has no session".into()))
}

impl SessionStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            sessions: RwLock::default(),
        }
    }

    /// Open `dir`, replaying every session log found there.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, AnnotateError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let session = replay(&path)?;
            let log = OpenOptions::new().append(true).open(&path)?;
            sessions.insert(
                session.id.clone(),
                Arc::new(Slot {
                    session: RwLock::new(session),
                    log: Some(Mutex::new(log)),
                }),
            );
        }
        Ok(Self {
            dir: Some(dir),
            sessions: RwLock::new(sessions),
        })
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, AnnotateError> {
        self.sessions
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| AnnotateError::UnknownSession(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("store lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Create and persist a session; a random id is chosen when none is given.
    pub fn create(
        &self,
        id: Option<&str>,
        runs: &[SystemRun],
        manifest: &[EvalItem],
        seed: u64,
    ) -> Result<(String, usize), AnnotateError> {
        let id = match id {
            Some(id) if valid_id(id) => id.to_string(),
            Some(id) => return Err(AnnotateError::InvalidRequest(format!("invalid session id {id:?}"))),
            None => hex::encode(rand::random::<[u8; 8]>()),
        };
        let session = Session::create(&id, runs, manifest, seed)?;
        let n = session.len();
        let mut sessions = self.sessions.write().expect("store lock");
        if sessions.contains_key(&id) {
            return Err(AnnotateError::SessionExists(id));
        }
        let log = match &self.dir {
            Some(dir) => {
                let path = dir.join(format!("{id}.jsonl"));
                let f = OpenOptions::new().append(true).create_new(true).open(&path).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::AlreadyExists {
                        AnnotateError::SessionExists(id.clone())
                    } else {
                        e.into()
                    }
                })?;
                Some(Mutex::new(f))
            }
            None => None,
        };
        let slot = Slot {
            session: RwLock::new(session),
            log,
        };
        {
            let s = slot.session.read().expect("session lock");
            slot.append(&LogEvent::Created { session: s.clone() })?;
        }
        sessions.insert(id.clone(), Arc::new(slot));
        Ok((id, n))
    }

    pub fn next_item(&self, id: &str, rater: &str) -> Result<NextItem, AnnotateError> {
        if rater.trim().is_empty() {
            return Err(AnnotateError::InvalidRequest("rater id must not be empty".into()));
        }
        self.slot(id)?.session.read().expect("session lock").next_item(rater)
    }

    pub fn submit(
        &self,
        id: &str,
        rater: &str,
        item_key: &str,
        fluency: i64,
        adequacy: i64,
    ) -> Result<Ack, AnnotateError> {
        let slot = self.slot(id)?;
        let mut session = slot.session.write().expect("session lock");
        if session.state == SessionState::Finalized {
            return Err(AnnotateError::SessionFinalized(id.to_string()));
        }
        let mut values = [0u8; 2];
        for (slot_v, (field, v)) in values.iter_mut().zip([("fluency", fluency), ("adequacy", adequacy)]) {
            if !(1..=i64::from(LIKERT_LEVELS)).contains(&v) {
                return Err(AnnotateError::OutOfRange { field, value: v });
            }
            *slot_v = v as u8;
        }
        let record = RatingRecord {
            session_id: id.to_string(),
            rater: rater.to_string(),
            item_key: item_key.to_string(),
            fluency: values[0],
            adequacy: values[1],
            timestamp_ms: now_ms(),
        };
        let ack = session.check_rating(&record)?;
        if ack == Ack::Stored {
            slot.append(&LogEvent::Rating { record: record.clone() })?;
            session.submit_rating(record)?;
        }
        Ok(ack)
    }

    pub fn finalize(&self, id: &str) -> Result<FinalizedExport, AnnotateError> {
        let slot = self.slot(id)?;
        let mut session = slot.session.write().expect("session lock");
        if session.state == SessionState::Finalized {
            return Err(AnnotateError::SessionFinalized(id.to_string()));
        }
        let export = session.export()?;
        slot.append(&LogEvent::Finalized)?;
        session.mark_finalized();
        Ok(export)
    }

    /// The unblinded export; only available after finalize.
    pub fn export(&self, id: &str) -> Result<FinalizedExport, AnnotateError> {
        let slot = self.slot(id)?;
        let session = slot.session.read().expect("session lock");
        if session.state != SessionState::Finalized {
            return Err(AnnotateError::NotFinalized(id.to_string()));
        }
        session.export()
    }
}
