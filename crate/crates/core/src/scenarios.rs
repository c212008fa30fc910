//! Scenario runs: stage adapters chained into a cascade, with full traces.
//!
//! * A: ASR → translate
//! * B: ASR → fuse spaces → restore (spaces re-inserted) → translate
//! * C: ASR → restore (existing spaces kept) → translate

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{Fixture, IdText, StageAdapter, StageError, StageKind};
use crate::corpus::EvalItem;
use crate::fsutil::{atomic_write, read_json_lines, write_json_lines};
use crate::textcore::{degrade, fuse_words, normalize, strip_punctuation, DegradeMode, PunctClass};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("stage {index} ({kind}) failed{}: {source}", .item.as_ref().map(|i| format!(" on item {i:?}")).unwrap_or_default())]
    Stage {
        index: usize,
        kind: StageKind,
        item: Option<String>,
        #[source]
        source: StageError,
    },
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("trace for item {item:?} is inconsistent at stage {stage}")]
    InconsistentTrace { item: String, stage: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioName {
    A,
    B,
    C,
    #[serde(rename = "punct-impact")]
    PunctImpact,
    #[serde(rename = "custom")]
    Custom,
}

impl ScenarioName {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::A => "A",
            ScenarioName::B => "B",
            ScenarioName::C => "C",
            ScenarioName::PunctImpact => "punct-impact",
            ScenarioName::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(ScenarioName::A),
            "B" | "b" => Ok(ScenarioName::B),
            "C" | "c" => Ok(ScenarioName::C),
            "punct-impact" => Ok(ScenarioName::PunctImpact),
            "custom" => Ok(ScenarioName::Custom),
            _ => Err(format!("unknown scenario {s:?} (expected A, B, C or custom)")),
        }
    }
}

/// Transformation applied to a stage's input before the adapter sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Preprocess {
    #[default]
    None,
    FuseSpaces,
    StripPunct,
}

impl Preprocess {
    pub fn apply(self, text: &str, pc: &PunctClass) -> String {
        match self {
            Preprocess::None => text.to_string(),
            Preprocess::FuseSpaces => fuse_words(&normalize(text)).into_string(),
            Preprocess::StripPunct => strip_punctuation(&normalize(text), pc).into_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioStage {
    pub adapter: StageAdapter,
    pub preprocess: Preprocess,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    pub stages: Vec<ScenarioStage>,
    pub punct: PunctClass,
}

fn expect_kind(a: &StageAdapter, kind: StageKind) -> Result<(), ScenarioError> {
    if a.kind == kind {
        Ok(())
    } else {
        Err(ScenarioError::InvalidConfig(format!(
            "expected a {kind} stage, got {}",
            a.kind
        )))
    }
}

impl ScenarioConfig {
    pub fn a(asr: StageAdapter, translate: StageAdapter) -> Result<Self, ScenarioError> {
        expect_kind(&asr, StageKind::Asr)?;
        expect_kind(&translate, StageKind::Translate)?;
        Ok(Self {
            name: ScenarioName::A,
            stages: vec![plain(asr), plain(translate)],
            punct: PunctClass::default(),
        })
    }

    /// The restorer re-inserts spaces, so a builtin one runs with `preserve_spaces = false`.
    pub fn b(asr: StageAdapter, restore: StageAdapter, translate: StageAdapter) -> Result<Self, ScenarioError> {
        expect_kind(&asr, StageKind::Asr)?;
        expect_kind(&restore, StageKind::Restore)?;
        expect_kind(&translate, StageKind::Translate)?;
        Ok(Self {
            name: ScenarioName::B,
            stages: vec![
                plain(asr),
                ScenarioStage {
                    adapter: restore.with_preserve_spaces(false),
                    preprocess: Preprocess::FuseSpaces,
                },
                plain(translate),
            ],
            punct: PunctClass::default(),
        })
    }

    pub fn c(asr: StageAdapter, restore: StageAdapter, translate: StageAdapter) -> Result<Self, ScenarioError> {
        expect_kind(&asr, StageKind::Asr)?;
        expect_kind(&restore, StageKind::Restore)?;
        expect_kind(&translate, StageKind::Translate)?;
        Ok(Self {
            name: ScenarioName::C,
            stages: vec![plain(asr), plain(restore.with_preserve_spaces(true)), plain(translate)],
            punct: PunctClass::default(),
        })
    }

    /// Any non-empty chain whose stage kinds never go backwards.
    pub fn custom(stages: Vec<ScenarioStage>) -> Result<Self, ScenarioError> {
        if stages.is_empty() {
            return Err(ScenarioError::InvalidConfig("no stages".into()));
        }
        if stages.windows(2).any(|w| w[0].adapter.kind > w[1].adapter.kind) {
            return Err(ScenarioError::InvalidConfig(
                "stages must run in asr, restore, translate order".into(),
            ));
        }
        Ok(Self {
            name: ScenarioName::Custom,
            stages,
            punct: PunctClass::default(),
        })
    }

    pub fn with_punct(mut self, punct: PunctClass) -> Self {
        self.punct = punct;
        self
    }

    pub fn snapshot(&self, n_items: usize) -> RunSnapshot {
        RunSnapshot {
            scenario: self.name,
            punct: self.punct.marks().collect(),
            stages: self
                .stages
                .iter()
                .map(|s| StageSnapshot {
                    kind: s.adapter.kind,
                    backing: s.adapter.describe(),
                    preprocessing: s.preprocess,
                })
                .collect(),
            n_items,
        }
    }
}

fn plain(adapter: StageAdapter) -> ScenarioStage {
    ScenarioStage {
        adapter,
        preprocess: Preprocess::None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: StageKind,
    pub preprocessing: Preprocess,
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTrace {
    pub item_id: String,
    /// What the first stage was fed before its preprocessing.
    pub source: String,
    pub stages: Vec<StageRecord>,
    pub hypothesis: String,
}

impl StageTrace {
    /// Replays each stage's preprocessing on the previous output.
    pub fn check(&self, pc: &PunctClass) -> Result<(), ScenarioError> {
        let bad = |stage| ScenarioError::InconsistentTrace {
            item: self.item_id.clone(),
            stage,
        };
        let mut prev = self.source.as_str();
        for (i, s) in self.stages.iter().enumerate() {
            if s.preprocessing.apply(prev, pc) != s.input {
                return Err(bad(i));
            }
            prev = &s.output;
        }
        if prev != self.hypothesis {
            return Err(bad(self.stages.len()));
        }
        Ok(())
    }
}

/// The ASR stage is fed the audio path (or the id when there is none);
/// chains without ASR start from the reference transcript.
fn initial_input(cfg: &ScenarioConfig, item: &EvalItem) -> String {
    match cfg.stages.first().map(|s| s.adapter.kind) {
        Some(StageKind::Asr) => item.audio_path.clone().unwrap_or_else(|| item.id.clone()),
        _ => item.ref_transcript.as_str().to_string(),
    }
}

fn stage_item(e: &StageError) -> Option<String> {
    match e {
        StageError::MissingFixture(id) | StageError::Timeout(id) | StageError::DuplicateId(id) => Some(id.clone()),
        StageError::Remote { id, .. } => Some(id.clone()),
        _ => None,
    }
}

pub fn run_scenario(cfg: &ScenarioConfig, items: &[EvalItem]) -> Result<Vec<StageTrace>, ScenarioError> {
    let mut traces: Vec<StageTrace> = items
        .iter()
        .map(|it| {
            let source = initial_input(cfg, it);
            StageTrace {
                item_id: it.id.clone(),
                hypothesis: source.clone(),
                source,
                stages: Vec::with_capacity(cfg.stages.len()),
            }
        })
        .collect();
    if items.is_empty() {
        return Ok(traces);
    }
    for (index, stage) in cfg.stages.iter().enumerate() {
        let inputs: Vec<(String, String)> = traces
            .iter()
            .map(|t| (t.item_id.clone(), stage.preprocess.apply(&t.hypothesis, &cfg.punct)))
            .collect();
        let outputs = stage
            .adapter
            .run_stage(&inputs)
            .map_err(|source| ScenarioError::Stage {
                index,
                kind: stage.adapter.kind,
                item: stage_item(&source),
                source,
            })?;
        for ((t, (_, input)), (_, output)) in traces.iter_mut().zip(inputs).zip(outputs) {
            t.stages.push(StageRecord {
                stage: stage.adapter.kind,
                preprocessing: stage.preprocess,
                input,
                output: output.clone(),
            });
            t.hypothesis = output;
        }
    }
    Ok(traces)
}

/// Translations of each item from its punctuated and its stripped transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PunctImpact {
    pub punctuated: Vec<IdText>,
    pub unpunctuated: Vec<IdText>,
}

pub fn run_punct_impact(
    items: &[EvalItem],
    translate: &StageAdapter,
    pc: &PunctClass,
) -> Result<PunctImpact, ScenarioError> {
    let wrap = |source| ScenarioError::Stage {
        index: 0,
        kind: translate.kind,
        item: stage_item(&source),
        source,
    };
    let with: Vec<(String, String)> = items
        .iter()
        .map(|i| (i.id.clone(), i.ref_transcript.as_str().to_string()))
        .collect();
    let without: Vec<(String, String)> = items
        .iter()
        .map(|i| (i.id.clone(), strip_punctuation(&i.ref_transcript, pc).into_string()))
        .collect();
    let to_rows = |v: Vec<(String, String)>| v.into_iter().map(|(id, text)| IdText { id, text }).collect();
    Ok(PunctImpact {
        punctuated: to_rows(translate.run_stage(&with).map_err(wrap)?),
        unpunctuated: to_rows(translate.run_stage(&without).map_err(wrap)?),
    })
}

/// Character substitution noise for emulating recognition errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub rate: f64,
    pub seed: u64,
}

impl Default for Noise {
    fn default() -> Self {
        Self { rate: 0.0, seed: 0 }
    }
}

/// Substitute characters at `noise.rate`, drawing replacements from the
/// texts' own alphabet (never the character being replaced). Spaces are
/// left alone.
pub fn add_noise(texts: &[String], noise: Noise) -> Result<Vec<String>, ScenarioError> {
    if !(0.0..=1.0).contains(&noise.rate) {
        return Err(ScenarioError::InvalidConfig(format!(
            "noise rate {} outside [0, 1]",
            noise.rate
        )));
    }
    let mut alphabet: Vec<char> = texts.iter().flat_map(|t| t.chars()).filter(|c| *c != ' ').collect();
    alphabet.sort_unstable();
    alphabet.dedup();
    if noise.rate == 0.0 || alphabet.len() < 2 {
        return Ok(texts.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    Ok(texts
        .iter()
        .map(|text| {
            let noisy: String = text
                .chars()
                .map(|c| {
                    if c == ' ' || !rng.gen_bool(noise.rate) {
                        return c;
                    }
                    let mut k = rng.gen_range(0..alphabet.len() - 1);
                    if alphabet[k] >= c {
                        k += 1;
                    }
                    alphabet[k]
                })
                .collect();
            normalize(&noisy).into_string()
        })
        .collect())
}

/// Simulated ASR output: degraded references, optionally with substitution noise.
pub fn synthetic_asr_fixture(
    items: &[EvalItem],
    mode: DegradeMode,
    pc: &PunctClass,
    noise: Noise,
) -> Result<Fixture, ScenarioError> {
    let degraded: Vec<String> = items
        .iter()
        .map(|i| degrade(&i.ref_transcript, mode, pc).into_string())
        .collect();
    let noisy = add_noise(&degraded, noise)?;
    Ok(Fixture::from_entries(
        "synthetic-asr",
        items.iter().map(|i| i.id.clone()).zip(noisy),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSnapshot {
    pub kind: StageKind,
    pub backing: String,
    pub preprocessing: Preprocess,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub scenario: ScenarioName,
    pub punct: Vec<char>,
    pub stages: Vec<StageSnapshot>,
    pub n_items: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub snapshot: RunSnapshot,
    pub traces: Vec<StageTrace>,
}

impl RunRecord {
    pub fn hypotheses(&self) -> Vec<IdText> {
        self.traces
            .iter()
            .map(|t| IdText {
                id: t.item_id.clone(),
                text: t.hypothesis.clone(),
            })
            .collect()
    }
}

pub const CONFIG_FILE: &str = "config.json";
pub const TRACES_FILE: &str = "traces.jsonl";
pub const HYPOTHESES_FILE: &str = "hypotheses.jsonl";

/// Writes `config.json`, `traces.jsonl` and `hypotheses.jsonl` into `dir`.
pub fn write_run_dir(dir: impl AsRef<Path>, run: &RunRecord) -> Result<(), ScenarioError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    let cfg_path = dir.join(CONFIG_FILE);
    let mut cfg = serde_json::to_vec_pretty(&run.snapshot).expect("snapshot serializes");
    cfg.push(b'\n');
    atomic_write(&cfg_path, &cfg).map_err(|e| ScenarioError::io(&cfg_path, e))?;
    let p = dir.join(TRACES_FILE);
    write_json_lines(&p, &run.traces).map_err(|e| ScenarioError::io(&p, e))?;
    let p = dir.join(HYPOTHESES_FILE);
    write_json_lines(&p, &run.hypotheses()).map_err(|e| ScenarioError::io(&p, e))?;
    Ok(())
}

pub fn load_run_dir(dir: impl AsRef<Path>) -> Result<RunRecord, ScenarioError> {
    let dir = dir.as_ref();
    let cfg_path = dir.join(CONFIG_FILE);
    let bytes = std::fs::read(&cfg_path).map_err(|e| ScenarioError::io(&cfg_path, e))?;
    let snapshot: RunSnapshot = serde_json::from_slice(&bytes)
        .map_err(|e| ScenarioError::io(&cfg_path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    let p = dir.join(TRACES_FILE);
    let traces = read_json_lines(&p).map_err(|e| ScenarioError::io(&p, e))?;
    Ok(RunRecord { snapshot, traces })
}
