use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CorpusScore, Metric, MetricError, ScoreDetails};
use crate::textcore::normalize;

/// Edit operations summed over a corpus; merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub edits: usize,
    pub ref_len: usize,
}

impl EditCounts {
    pub fn merge(self, other: Self) -> Self {
        Self {
            edits: self.edits + other.edits,
            ref_len: self.ref_len + other.ref_len,
        }
    }

    /// Edit rate as a percentage.
    pub fn rate(&self) -> Result<f64, MetricError> {
        if self.ref_len == 0 {
            return Err(MetricError::EmptyReference);
        }
        Ok(100.0 * self.edits as f64 / self.ref_len as f64)
    }
}

/// Unit-cost Levenshtein distance between two sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut row = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            row[j + 1] = sub.min(prev[j + 1] + 1).min(row[j] + 1);
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

fn word_counts(hyp: &str, reference: &str) -> EditCounts {
    let hyp = normalize(hyp);
    let reference = normalize(reference);
    let h: Vec<&str> = hyp.words().collect();
    let r: Vec<&str> = reference.words().collect();
    EditCounts {
        edits: levenshtein(&h, &r),
        ref_len: r.len(),
    }
}

fn char_counts(hyp: &str, reference: &str) -> EditCounts {
    let h: Vec<char> = normalize(hyp).as_str().chars().collect();
    let r: Vec<char> = normalize(reference).as_str().chars().collect();
    EditCounts {
        edits: levenshtein(&h, &r),
        ref_len: r.len(),
    }
}

/// Word error rate in percent.
pub fn wer(hyp: &str, reference: &str) -> Result<f64, MetricError> {
    word_counts(hyp, reference).rate()
}

/// Character error rate in percent; spaces count as characters.
pub fn cer(hyp: &str, reference: &str) -> Result<f64, MetricError> {
    char_counts(hyp, reference).rate()
}

fn corpus_rate<H, R>(
    metric: Metric,
    hyps: &[H],
    refs: &[R],
    counts: fn(&str, &str) -> EditCounts,
) -> Result<CorpusScore, MetricError>
where
    H: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    if hyps.len() != refs.len() || hyps.is_empty() {
        return Err(MetricError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    let per_item: Vec<EditCounts> = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| counts(h.as_ref(), r.as_ref()))
        .collect();
    if per_item.iter().any(|c| c.ref_len == 0) {
        return Err(MetricError::EmptyReference);
    }
    let total = per_item
        .into_iter()
        .fold(EditCounts::default(), EditCounts::merge);
    Ok(CorpusScore {
        metric,
        value: total.rate()?,
        n_items: hyps.len(),
        details: ScoreDetails::Edit(total),
    })
}

/// Micro-averaged WER: total word edits over total reference words.
pub fn corpus_wer<H, R>(hyps: &[H], refs: &[R]) -> Result<CorpusScore, MetricError>
where
    H: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    corpus_rate(Metric::Wer, hyps, refs, word_counts)
}

/// Micro-averaged CER.
pub fn corpus_cer<H, R>(hyps: &[H], refs: &[R]) -> Result<CorpusScore, MetricError>
where
    H: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    corpus_rate(Metric::Cer, hyps, refs, char_counts)
}
