//! Self-contained scoring kernels: WER, CER, corpus BLEU, chrF++ and an
//! exact-match-only METEOR.
//!
//! All inputs are normalized on entry. Corpus-level scores aggregate count
//! structures, so item order never changes a result.

mod bleu;
mod chrf;
mod edit;
mod meteor;
mod tokenize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu, bleu_with, sentence_bleu, BleuStats};
pub use chrf::{chrf_pp, chrf_pp_with, sentence_chrf_pp, ChrfStats};
pub use edit::{cer, corpus_cer, corpus_wer, levenshtein, wer, EditCounts};
pub use meteor::{corpus_meteor, meteor_exact, MeteorAlignment};
pub use tokenize::tokenize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("hypothesis or reference is empty")]
    EmptyInput,
    #[error("{hyps} hypotheses but {refs} reference sets")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("reference set for item {0} is empty")]
    EmptyReferenceSet(usize),
    #[error("invalid metric configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown metric {0:?}; valid metrics: wer, cer, bleu, chrf, meteor")]
    UnknownMetric(String),
}

/// Metric names accepted by the corpus scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Wer,
    Cer,
    Bleu,
    #[serde(rename = "chrf++")]
    ChrfPp,
    #[serde(rename = "meteor-exact")]
    MeteorExact,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Wer,
        Metric::Cer,
        Metric::Bleu,
        Metric::ChrfPp,
        Metric::MeteorExact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Wer => "wer",
            Metric::Cer => "cer",
            Metric::Bleu => "bleu",
            Metric::ChrfPp => "chrf++",
            Metric::MeteorExact => "meteor-exact",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wer" => Ok(Metric::Wer),
            "cer" => Ok(Metric::Cer),
            "bleu" => Ok(Metric::Bleu),
            "chrf" | "chrf++" | "chrfpp" => Ok(Metric::ChrfPp),
            "meteor" | "meteor-exact" => Ok(Metric::MeteorExact),
            _ => Err(MetricError::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub bleu_max_order: usize,
    pub chrf_char_order: usize,
    pub chrf_word_order: usize,
    pub chrf_beta: f64,
    /// Recall weight in the METEOR harmonic mean.
    pub meteor_recall_weight: f64,
    /// Precision weight in the METEOR harmonic mean.
    pub meteor_precision_weight: f64,
    pub meteor_gamma: f64,
    pub meteor_exponent: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            bleu_max_order: 4,
            chrf_char_order: 6,
            chrf_word_order: 2,
            chrf_beta: 2.0,
            meteor_recall_weight: 9.0,
            meteor_precision_weight: 1.0,
            meteor_gamma: 0.5,
            meteor_exponent: 3.0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.bleu_max_order == 0 || self.chrf_char_order == 0 || self.chrf_word_order == 0 {
            return Err(MetricError::InvalidConfig("n-gram orders must be >= 1".into()));
        }
        if !(self.chrf_beta > 0.0) {
            return Err(MetricError::InvalidConfig("chrF beta must be > 0".into()));
        }
        if !(self.meteor_recall_weight > 0.0 && self.meteor_precision_weight > 0.0) {
            return Err(MetricError::InvalidConfig("METEOR weights must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-metric breakdown carried alongside a corpus score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScoreDetails {
    Edit(EditCounts),
    Bleu(BleuStats),
    Chrf(ChrfStats),
    Meteor { sentence_scores: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub metric: Metric,
    /// Percentage. BLEU, chrF++ and METEOR lie in [0, 100]; WER/CER may exceed 100.
    pub value: f64,
    pub n_items: usize,
    pub details: ScoreDetails,
}

/// Score a corpus with any metric. `refs[i]` is the reference set of item `i`;
/// WER and CER use the first reference of each set.
pub fn score_corpus<H, R>(
    metric: Metric,
    hyps: &[H],
    refs: &[Vec<R>],
    cfg: &MetricConfig,
) -> Result<CorpusScore, MetricError>
where
    H: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    cfg.validate()?;
    check_shapes(hyps.len(), refs)?;
    match metric {
        Metric::Wer | Metric::Cer => {
            let firsts: Vec<&str> = refs.iter().map(|r| r[0].as_ref()).collect();
            if metric == Metric::Wer {
                corpus_wer(hyps, &firsts)
            } else {
                corpus_cer(hyps, &firsts)
            }
        }
        Metric::Bleu => bleu_with(hyps, refs, cfg),
        Metric::ChrfPp => chrf_pp_with(hyps, refs, cfg),
        Metric::MeteorExact => corpus_meteor(hyps, refs, cfg),
    }
}

pub(crate) fn check_shapes<R>(n_hyps: usize, refs: &[Vec<R>]) -> Result<(), MetricError> {
    if n_hyps != refs.len() || n_hyps == 0 {
        return Err(MetricError::LengthMismatch {
            hyps: n_hyps,
            refs: refs.len(),
        });
    }
    if let Some(i) = refs.iter().position(|r| r.is_empty()) {
        return Err(MetricError::EmptyReferenceSet(i));
    }
    Ok(())
}

/// Generalized F-score; 0 when both precision and recall are 0.
pub(crate) fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom > 0.0 {
        (1.0 + b2) * precision * recall / denom
    } else {
        0.0
    }
}
