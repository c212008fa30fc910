//! Evaluation manifests, corpus filters and restoration-pair building.
//!
//! A manifest is UTF-8, one JSON object per line:
//!
//! ```text
//! {"id":"s001-spk1","ref_transcript":"म घर जान्छु।","ref_translations":["I go home."],
//!  "sentence_type":"statement","audio_path":"clips/s001-spk1.wav","duration_s":2.4,"speaker_id":"spk1"}
//! ```
//!
//! Fields outside that vocabulary are kept and written back unchanged.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::sentence_chrf_pp;
use crate::restore::RestorePair;
use crate::textcore::{degrade, is_numeral, normalize, DegradeMode, NormalizedText, PunctClass};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate id {id:?} on lines {first_line} and {line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        line: usize,
    },
    #[error("line {line}: unknown sentence type {value:?}")]
    UnknownType { line: usize, value: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("no similarity score for record {0:?}")]
    MissingSimilarity(String),
    #[error("record {0:?} needs both translation and reference for the chrF++ cutoff")]
    MissingChrfInputs(String),
    #[error("invalid filter spec: {0}")]
    InvalidFilter(String),
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceType {
    Statement,
    Question,
    Command,
    Complex,
    NamedEntity,
}

impl SentenceType {
    pub const ALL: [SentenceType; 5] = [
        SentenceType::Statement,
        SentenceType::Question,
        SentenceType::Command,
        SentenceType::Complex,
        SentenceType::NamedEntity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SentenceType::Statement => "statement",
            SentenceType::Question => "question",
            SentenceType::Command => "command",
            SentenceType::Complex => "complex",
            SentenceType::NamedEntity => "named_entity",
        }
    }

    /// Display label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            SentenceType::Statement => "Statements",
            SentenceType::Question => "Questions",
            SentenceType::Command => "Commands",
            SentenceType::Complex => "Complex",
            SentenceType::NamedEntity => "Named Entities",
        }
    }
}

impl fmt::Display for SentenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown sentence type {0:?}")]
pub struct UnknownSentenceType(pub String);

impl FromStr for SentenceType {
    type Err = UnknownSentenceType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SentenceType::ALL
            .into_iter()
            .find(|t| t.as_str() == s || t.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownSentenceType(s.to_string()))
    }
}

/// One test sentence (one clip when audio is attached).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalItem {
    pub id: String,
    pub ref_transcript: NormalizedText,
    pub ref_translations: Vec<String>,
    pub sentence_type: SentenceType,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<String>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct RawItem {
    id: String,
    ref_transcript: String,
    ref_translations: Vec<String>,
    sentence_type: String,
    #[serde(default)]
    audio_path: Option<String>,
    #[serde(default)]
    duration_s: Option<f64>,
    #[serde(default)]
    speaker_id: Option<String>,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
}

impl EvalItem {
    fn from_raw(raw: RawItem, line: usize) -> Result<Self, CorpusError> {
        let invalid = |message: &str| CorpusError::Invalid {
            line,
            message: message.to_string(),
        };
        let sentence_type = raw
            .sentence_type
            .parse()
            .map_err(|_| CorpusError::UnknownType {
                line,
                value: raw.sentence_type.clone(),
            })?;
        if raw.id.trim().is_empty() {
            return Err(invalid("empty id"));
        }
        if raw.ref_translations.is_empty() {
            return Err(invalid("ref_translations must not be empty"));
        }
        if let Some(d) = raw.duration_s {
            if !(d > 0.0) {
                return Err(invalid("duration_s must be > 0"));
            }
        }
        Ok(EvalItem {
            id: raw.id,
            ref_transcript: normalize(&raw.ref_transcript),
            ref_translations: raw
                .ref_translations
                .iter()
                .map(|t| normalize(t).into_string())
                .collect(),
            sentence_type,
            audio_path: raw.audio_path,
            duration_s: raw.duration_s,
            speaker_id: raw.speaker_id,
            extra: raw.extra,
        })
    }
}

/// Parse a manifest from any reader. Blank lines are skipped but counted.
pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Vec<EvalItem>, CorpusError> {
    let mut items = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let item = EvalItem::from_raw(raw, line_no)?;
        if let Some(&first_line) = seen.get(&item.id) {
            return Err(CorpusError::DuplicateId {
                id: item.id,
                first_line,
                line: line_no,
            });
        }
        seen.insert(item.id.clone(), line_no);
        items.push(item);
    }
    Ok(items)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<EvalItem>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    parse_manifest(BufReader::new(file))
}

/// Serialize items one per line, unknown fields included.
pub fn write_manifest<W: Write>(items: &[EvalItem], mut out: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Exact count per sentence type; every type is present, zero if unused.
pub fn type_stats(items: &[EvalItem]) -> BTreeMap<SentenceType, usize> {
    let mut counts: BTreeMap<SentenceType, usize> =
        SentenceType::ALL.into_iter().map(|t| (t, 0)).collect();
    for item in items {
        *counts.entry(item.sentence_type).or_default() += 1;
    }
    counts
}

/// Thresholds for corpus filtering. Each `None` disables its predicate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(default)]
    pub drop_numerals: bool,
    /// Records strictly longer than this are dropped.
    #[serde(default)]
    pub max_duration_s: Option<f64>,
    /// Records must score strictly above this similarity to be kept.
    #[serde(default)]
    pub min_similarity: Option<f64>,
    /// Records scoring below this chrF++ are dropped.
    #[serde(default)]
    pub chrf_cutoff: Option<f64>,
}

impl FilterSpec {
    /// Numeral removal, 5 s duration cap, similarity above 0.80, chrF++ ≥ 50.
    pub fn standard_defaults() -> Self {
        Self {
            drop_numerals: true,
            max_duration_s: Some(5.0),
            min_similarity: Some(0.80),
            chrf_cutoff: Some(50.0),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if let Some(d) = self.max_duration_s {
            if !(d > 0.0) {
                return Err(CorpusError::InvalidFilter("max_duration_s must be > 0".into()));
            }
        }
        if let Some(s) = self.min_similarity {
            if !(0.0..=1.0).contains(&s) {
                return Err(CorpusError::InvalidFilter("min_similarity must be in [0, 1]".into()));
            }
        }
        if let Some(c) = self.chrf_cutoff {
            if !(0.0..=100.0).contains(&c) {
                return Err(CorpusError::InvalidFilter("chrf_cutoff must be in [0, 100]".into()));
            }
        }
        Ok(())
    }
}

/// A speech or parallel-text record subject to filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub id: String,
    /// Source-side text checked for numerals.
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    /// Synthetic or round-trip translation scored by the chrF++ cutoff.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl From<&EvalItem> for FilterRecord {
    fn from(item: &EvalItem) -> Self {
        FilterRecord {
            id: item.id.clone(),
            text: item.ref_transcript.as_str().to_string(),
            duration_s: item.duration_s,
            translation: None,
            reference: item.ref_translations.first().cloned(),
            extra: serde_json::Map::new(),
        }
    }
}

/// Predicates are checked in this order; the first failure is the reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Numeral,
    Duration,
    Similarity,
    ChrfCutoff,
}

/// One line of a filter report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub id: String,
    pub kept: bool,
    pub reason: Option<DropReason>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<FilterRecord>,
    pub dropped: Vec<(FilterRecord, DropReason)>,
    /// One decision per input record, in input order.
    pub decisions: Vec<FilterDecision>,
}

fn drop_reason(
    r: &FilterRecord,
    spec: &FilterSpec,
    sims: Option<&HashMap<String, f64>>,
) -> Result<Option<DropReason>, CorpusError> {
    if spec.drop_numerals && r.text.chars().any(is_numeral) {
        return Ok(Some(DropReason::Numeral));
    }
    if let (Some(max), Some(d)) = (spec.max_duration_s, r.duration_s) {
        if d > max {
            return Ok(Some(DropReason::Duration));
        }
    }
    if let Some(min) = spec.min_similarity {
        let sim = sims
            .and_then(|m| m.get(&r.id))
            .ok_or_else(|| CorpusError::MissingSimilarity(r.id.clone()))?;
        if *sim <= min {
            return Ok(Some(DropReason::Similarity));
        }
    }
    if let Some(cutoff) = spec.chrf_cutoff {
        let (Some(hyp), Some(reference)) = (&r.translation, &r.reference) else {
            return Err(CorpusError::MissingChrfInputs(r.id.clone()));
        };
        let score = sentence_chrf_pp(hyp, &[reference]).unwrap_or(0.0);
        if score < cutoff {
            return Ok(Some(DropReason::ChrfCutoff));
        }
    }
    Ok(None)
}

/// Partition records into kept and dropped. Similarity scores are supplied
/// precomputed, keyed by record id.
pub fn apply_filters(
    records: &[FilterRecord],
    spec: &FilterSpec,
    sim_scores: Option<&HashMap<String, f64>>,
) -> Result<FilterOutcome, CorpusError> {
    spec.validate()?;
    let reasons: Vec<Option<DropReason>> = records
        .par_iter()
        .map(|r| drop_reason(r, spec, sim_scores))
        .collect::<Result<_, _>>()?;
    let mut out = FilterOutcome::default();
    for (r, reason) in records.iter().zip(reasons) {
        out.decisions.push(FilterDecision {
            id: r.id.clone(),
            kept: reason.is_none(),
            reason,
        });
        match reason {
            None => out.kept.push(r.clone()),
            Some(why) => out.dropped.push((r.clone(), why)),
        }
    }
    Ok(out)
}

/// One pair per sentence per requested mode, sentence-major.
pub fn build_restore_pairs(
    sentences: &[NormalizedText],
    modes: &[DegradeMode],
    pc: &PunctClass,
) -> Vec<RestorePair> {
    let mut modes = modes.to_vec();
    modes.sort();
    modes.dedup();
    sentences
        .iter()
        .flat_map(|s| {
            modes.iter().map(move |&mode| RestorePair {
                input: degrade(s, mode, pc),
                target: s.clone(),
                mode,
            })
        })
        .collect()
}
