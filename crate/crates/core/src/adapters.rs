//! Pipeline stages behind one interface.
//!
//! A stage maps `(id, text)` pairs to `(id, text)` pairs. Its backing is
//! either the identity, a fixture file, the builtin restorer, an
//! in-process [`TextStage`] or an external process speaking the
//! line-delimited JSON stage protocol:
//!
//! ```text
//! runner -> child   {"protocol":1,"stage":"translate"}
//! runner -> child   {"id":"s1","text":"..."}            one per line, flushed
//! child  -> runner  {"id":"s1","text":"..."}            any order
//! child  -> runner  {"id":"s2","error":"..."}
//! ```
//!
//! The runner closes the child's stdin after the last request. Responses
//! are matched by id, so a child may batch and answer out of order.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fsutil::{atomic_write, read_json_lines};
use crate::restore::{BoundaryModel, RestoreError};
use crate::textcore::normalize;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StageError {
    #[error("no fixture entry for item {0:?}")]
    MissingFixture(String),
    #[error("stage process exited with {}{}", fmt_code(*.code), fmt_stderr(.stderr))]
    ProcessExit { code: Option<i32>, stderr: String },
    #[error("timed out waiting for item {0:?}")]
    Timeout(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("stage reported an error for item {id:?}: {message}")]
    Remote { id: String, message: String },
    #[error("duplicate input id {0:?}")]
    DuplicateId(String),
    #[error("unsupported stage configuration: {0}")]
    Unsupported(String),
    #[error("cannot start stage process {program:?}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Restore(#[from] RestoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_code(code: Option<i32>) -> String {
    code.map_or_else(|| "a signal".to_string(), |c| format!("code {c}"))
}

fn fmt_stderr(stderr: &str) -> String {
    let s = stderr.trim();
    if s.is_empty() {
        String::new()
    } else {
        format!(": {s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Asr,
    Restore,
    Translate,
}

impl StageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Asr => "asr",
            StageKind::Restore => "restore",
            StageKind::Translate => "translate",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "asr" => Ok(StageKind::Asr),
            "restore" => Ok(StageKind::Restore),
            "translate" => Ok(StageKind::Translate),
            _ => Err(format!("unknown stage kind {s:?}")),
        }
    }
}

/// An in-process stage, e.g. a rule-based translator used in tests.
pub trait TextStage: Send + Sync {
    /// Stable description used in cache keys and run snapshots.
    fn identity(&self) -> String;
    fn process(&self, id: &str, text: &str) -> Result<String, String>;
}

/// `id -> text` table loaded from a line-delimited `{"id","text"}` file.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub source: String,
    entries: HashMap<String, String>,
    digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdText {
    pub id: String,
    pub text: String,
}

impl Fixture {
    pub fn from_entries<I: IntoIterator<Item = (String, String)>>(source: &str, entries: I) -> Self {
        let mut entries: Vec<(String, String)> = entries.into_iter().collect();
        entries.sort();
        let mut h = Sha256::new();
        for (id, text) in &entries {
            h.update(id.as_bytes());
            h.update([0]);
            h.update(text.as_bytes());
            h.update([0]);
        }
        Self {
            source: source.to_string(),
            entries: entries.into_iter().collect(),
            digest: hex::encode(h.finalize()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StageError> {
        let path = path.as_ref();
        let rows: Vec<IdText> = read_json_lines(path)?;
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.id.clone()) {
                return Err(StageError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self::from_entries(
            &path.display().to_string(),
            rows.into_iter().map(|r| (r.id, r.text)),
        ))
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone)]
pub enum Backing {
    Identity,
    Fixture(Arc<Fixture>),
    /// The builtin restorer; only valid for restore stages.
    Builtin {
        model: Arc<BoundaryModel>,
        preserve_spaces: bool,
    },
    InProcess(Arc<dyn TextStage>),
    ExternalProcess {
        program: String,
        args: Vec<String>,
        timeout: Duration,
    },
}

impl fmt::Debug for Backing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

impl Backing {
    /// Identity string: what produced the output, for caches and snapshots.
    pub fn describe(&self) -> String {
        match self {
            Backing::Identity => "identity".into(),
            Backing::Fixture(f) => format!("fixture:{}#{}", f.source, &f.digest[..16]),
            Backing::Builtin {
                model,
                preserve_spaces,
            } => format!(
                "builtin-restorer:{}:preserve_spaces={}",
                &model.checksum()[..16],
                preserve_spaces
            ),
            Backing::InProcess(s) => format!("in-process:{}", s.identity()),
            Backing::ExternalProcess { program, args, .. } => {
                let mut s = format!("external:{program}");
                for a in args {
                    s.push(' ');
                    s.push_str(a);
                }
                s
            }
        }
    }

    fn cache_identity(&self) -> String {
        match self {
            Backing::Fixture(f) => format!("fixture:{}", f.digest),
            Backing::Builtin {
                model,
                preserve_spaces,
            } => format!("builtin:{}:{}", model.checksum(), preserve_spaces),
            other => other.describe(),
        }
    }
}

/// Content-addressed store of stage outputs, in memory and optionally on disk.
#[derive(Debug, Default)]
pub struct ContentCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, String>>,
}

impl ContentCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            memory: Mutex::default(),
        })
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(&key[..2]).join(key))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(v) = self.memory.lock().expect("cache lock").get(key) {
            return Some(v.clone());
        }
        let text = std::fs::read_to_string(self.path_for(key)?).ok()?;
        self.memory
            .lock()
            .expect("cache lock")
            .insert(key.to_string(), text.clone());
        Some(text)
    }

    pub fn put(&self, key: &str, value: &str) -> std::io::Result<()> {
        if let Some(p) = self.path_for(key) {
            std::fs::create_dir_all(p.parent().expect("has parent"))?;
            atomic_write(&p, value.as_bytes())?;
        }
        self.memory
            .lock()
            .expect("cache lock")
            .insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.memory.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct StageAdapter {
    pub kind: StageKind,
    pub backing: Backing,
    cache: Option<Arc<ContentCache>>,
    backend_items: AtomicUsize,
}

impl fmt::Debug for StageAdapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StageAdapter")
            .field("kind", &self.kind)
            .field("backing", &self.backing)
            .field("cached", &self.cache.is_some())
            .finish()
    }
}

impl Clone for StageAdapter {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            backing: self.backing.clone(),
            cache: self.cache.clone(),
            backend_items: AtomicUsize::new(0),
        }
    }
}

#[derive(Deserialize)]
struct Response {
    id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

impl StageAdapter {
    pub fn new(kind: StageKind, backing: Backing) -> Self {
        Self {
            kind,
            backing,
            cache: None,
            backend_items: AtomicUsize::new(0),
        }
    }

    pub fn identity(kind: StageKind) -> Self {
        Self::new(kind, Backing::Identity)
    }

    pub fn fixture(kind: StageKind, fixture: Fixture) -> Self {
        Self::new(kind, Backing::Fixture(Arc::new(fixture)))
    }

    pub fn builtin_restorer(model: Arc<BoundaryModel>, preserve_spaces: bool) -> Self {
        Self::new(
            StageKind::Restore,
            Backing::Builtin {
                model,
                preserve_spaces,
            },
        )
    }

    pub fn in_process(kind: StageKind, stage: Arc<dyn TextStage>) -> Self {
        Self::new(kind, Backing::InProcess(stage))
    }

    pub fn external(kind: StageKind, program: &str, args: &[&str], timeout: Duration) -> Self {
        Self::new(
            kind,
            Backing::ExternalProcess {
                program: program.to_string(),
                args: args.iter().map(|a| a.to_string()).collect(),
                timeout,
            },
        )
    }

    pub fn with_cache(mut self, cache: Arc<ContentCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Same backing with the builtin restorer's space handling set; no-op otherwise.
    pub fn with_preserve_spaces(mut self, preserve: bool) -> Self {
        if let Backing::Builtin {
            preserve_spaces, ..
        } = &mut self.backing
        {
            *preserve_spaces = preserve;
        }
        self
    }

    pub fn describe(&self) -> String {
        self.backing.describe()
    }

    /// Items this adapter has handed to its backing (cache hits excluded).
    pub fn backend_calls(&self) -> usize {
        self.backend_items.load(Ordering::Relaxed)
    }

    fn cache_key(&self, id: &str, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.kind.as_str().as_bytes());
        h.update([0]);
        h.update(self.backing.cache_identity().as_bytes());
        h.update([0]);
        // fixture output depends on the id, not on the text
        if matches!(self.backing, Backing::Fixture(_)) {
            h.update(id.as_bytes());
        }
        h.update([0]);
        h.update(normalize(text).as_str().as_bytes());
        hex::encode(h.finalize())
    }

    fn check_supported(&self) -> Result<(), StageError> {
        match (&self.backing, self.kind) {
            (Backing::Identity | Backing::Builtin { .. }, StageKind::Asr) => Err(StageError::Unsupported(
                "asr stages need a fixture, in-process or external backing".into(),
            )),
            (Backing::Builtin { .. }, StageKind::Translate) => Err(StageError::Unsupported(
                "the builtin restorer cannot back a translate stage".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Exactly one normalized output per input, in input order.
    pub fn run_stage(&self, inputs: &[(String, String)]) -> Result<Vec<(String, String)>, StageError> {
        self.check_supported()?;
        let mut ids = HashSet::with_capacity(inputs.len());
        for (id, _) in inputs {
            if !ids.insert(id.as_str()) {
                return Err(StageError::DuplicateId(id.clone()));
            }
        }
        let keys: Vec<Option<String>> = inputs
            .iter()
            .map(|(id, text)| self.cache.as_ref().map(|_| self.cache_key(id, text)))
            .collect();
        let mut outputs: Vec<Option<String>> = keys
            .iter()
            .map(|k| match (k, &self.cache) {
                (Some(k), Some(c)) => c.get(k),
                _ => None,
            })
            .collect();
        let pending: Vec<usize> = (0..inputs.len()).filter(|&i| outputs[i].is_none()).collect();
        if !pending.is_empty() {
            let batch: Vec<&(String, String)> = pending.iter().map(|&i| &inputs[i]).collect();
            self.backend_items.fetch_add(batch.len(), Ordering::Relaxed);
            let produced = self.run_backing(&batch)?;
            for (&i, text) in pending.iter().zip(produced) {
                let text = normalize(&text).into_string();
                if let (Some(k), Some(c)) = (&keys[i], &self.cache) {
                    c.put(k, &text)?;
                }
                outputs[i] = Some(text);
            }
        }
        Ok(inputs
            .iter()
            .zip(outputs)
            .map(|((id, _), out)| (id.clone(), out.expect("every item resolved")))
            .collect())
    }

    fn run_backing(&self, batch: &[&(String, String)]) -> Result<Vec<String>, StageError> {
        match &self.backing {
            Backing::Identity => Ok(batch.iter().map(|(_, t)| t.clone()).collect()),
            Backing::Fixture(f) => batch
                .iter()
                .map(|(id, _)| {
                    f.get(id)
                        .map(str::to_string)
                        .ok_or_else(|| StageError::MissingFixture(id.clone()))
                })
                .collect(),
            Backing::Builtin {
                model,
                preserve_spaces,
            } => batch
                .par_iter()
                .map(|(_, t)| {
                    model
                        .restore(&normalize(t), *preserve_spaces)
                        .map(|r| r.into_string())
                        .map_err(StageError::from)
                })
                .collect(),
            Backing::InProcess(stage) => batch
                .par_iter()
                .map(|(id, t)| {
                    stage.process(id, t).map_err(|message| StageError::Remote {
                        id: id.clone(),
                        message,
                    })
                })
                .collect(),
            Backing::ExternalProcess {
                program,
                args,
                timeout,
            } => {
                let mut answers = run_external(program, args, *timeout, self.kind, batch)?;
                Ok(batch
                    .iter()
                    .map(|(id, _)| answers.remove(id).expect("all ids answered"))
                    .collect())
            }
        }
    }
}

struct KillOnDrop(Child);

impl Drop for KillOnDrop {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn run_external(
    program: &str,
    args: &[String],
    timeout: Duration,
    kind: StageKind,
    batch: &[&(String, String)],
) -> Result<HashMap<String, String>, StageError> {
    let child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| StageError::Spawn {
            program: program.to_string(),
            source,
        })?;
    let mut child = KillOnDrop(child);
    let mut stdin = child.0.stdin.take().expect("piped stdin");
    let stdout = child.0.stdout.take().expect("piped stdout");
    let mut stderr = child.0.stderr.take().expect("piped stderr");

    let mut lines = Vec::with_capacity(batch.len() + 1);
    lines.push(serde_json::json!({"protocol": PROTOCOL_VERSION, "stage": kind.as_str()}).to_string());
    for (id, text) in batch {
        lines.push(serde_json::json!({"id": id, "text": text}).to_string());
    }
    // A child that exits early closes its stdin; the reader side reports that.
    let writer = thread::spawn(move || {
        for line in lines {
            if writeln!(stdin, "{line}").and_then(|_| stdin.flush()).is_err() {
                break;
            }
        }
    });
    let stderr_reader = thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let (tx, rx) = mpsc::channel::<std::io::Result<String>>();
    thread::spawn(move || {
        for line in BufReader::new(stdout).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });

    let mut pending: Vec<&str> = batch.iter().map(|(id, _)| id.as_str()).collect();
    let mut waiting: HashSet<&str> = pending.iter().copied().collect();
    let mut answers = HashMap::with_capacity(batch.len());
    while !waiting.is_empty() {
        let line = match rx.recv_timeout(timeout) {
            Ok(line) => line?,
            Err(RecvTimeoutError::Timeout) => {
                pending.retain(|id| waiting.contains(id));
                return Err(StageError::Timeout(pending[0].to_string()));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = child.0.wait()?;
                let stderr = stderr_reader.join().unwrap_or_default();
                if !status.success() {
                    return Err(StageError::ProcessExit {
                        code: status.code(),
                        stderr,
                    });
                }
                return Err(StageError::ProtocolViolation(format!(
                    "stage closed its output with {} responses outstanding",
                    waiting.len()
                )));
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let resp: Response = serde_json::from_str(&line)
            .map_err(|e| StageError::ProtocolViolation(format!("unreadable response {line:?}: {e}")))?;
        if !waiting.remove(resp.id.as_str()) {
            return Err(StageError::ProtocolViolation(format!(
                "response for unknown or already answered id {:?}",
                resp.id
            )));
        }
        match (resp.text, resp.error) {
            (_, Some(message)) => return Err(StageError::Remote { id: resp.id, message }),
            (Some(text), None) => {
                answers.insert(resp.id, text);
            }
            (None, None) => {
                return Err(StageError::ProtocolViolation(format!(
                    "response for {:?} has neither text nor error",
                    resp.id
                )))
            }
        }
    }
    let _ = writer.join();
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(status) = child.0.try_wait()? {
            if !status.success() {
                return Err(StageError::ProcessExit {
                    code: status.code(),
                    stderr: stderr_reader.join().unwrap_or_default(),
                });
            }
            break;
        }
        if Instant::now() >= deadline {
            // answered everything but never exited; the drop guard kills it
            break;
        }
        thread::sleep(Duration::from_millis(5));
    }
    Ok(answers)
}

/// Parse a backing from `identity`, `fixture:<path>`, `builtin:<model path>`
/// or `external:<program> [args...]`.
pub fn parse_backing(spec: &str, timeout: Duration) -> Result<Backing, StageError> {
    if spec == "identity" {
        return Ok(Backing::Identity);
    }
    let (scheme, rest) = spec
        .split_once(':')
        .ok_or_else(|| StageError::Unsupported(format!("unknown stage backing {spec:?}")))?;
    match scheme {
        "fixture" => Ok(Backing::Fixture(Arc::new(Fixture::load(rest)?))),
        "builtin" => Ok(Backing::Builtin {
            model: Arc::new(BoundaryModel::load(rest)?),
            preserve_spaces: true,
        }),
        "external" => {
            let mut parts = rest.split_whitespace();
            let program = parts
                .next()
                .ok_or_else(|| StageError::Unsupported("external backing needs a program".into()))?;
            Ok(Backing::ExternalProcess {
                program: program.to_string(),
                args: parts.map(str::to_string).collect(),
                timeout,
            })
        }
        _ => Err(StageError::Unsupported(format!("unknown stage backing {spec:?}"))),
    }
}
