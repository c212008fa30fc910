use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_shapes, tokenize, CorpusScore, Metric, MetricConfig, MetricError, ScoreDetails};

/// Clipped n-gram matches and totals per order plus length statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    fn zero(max_order: usize) -> Self {
        Self {
            matches: vec![0; max_order],
            totals: vec![0; max_order],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        }
    }

    /// Unsmoothed score. Orders with no hypothesis n-grams anywhere in the
    /// corpus are left out of the geometric mean; any other order with zero
    /// matches makes the score 0.
    pub fn score(&self) -> f64 {
        let mut log_sum = 0.0;
        let mut orders = 0usize;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if t == 0 {
                break;
            }
            if m == 0 {
                return 0.0;
            }
            log_sum += (m as f64 / t as f64).ln();
            orders += 1;
        }
        if orders == 0 {
            return 0.0;
        }
        100.0 * self.brevity_penalty() * (log_sum / orders as f64).exp()
    }

    /// Add-one smoothing on orders >= 2.
    pub fn smoothed_score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.first().copied().unwrap_or(0) == 0 {
            return 0.0;
        }
        let n = self.matches.len();
        let log_sum: f64 = self
            .matches
            .iter()
            .zip(&self.totals)
            .enumerate()
            .map(|(i, (&m, &t))| {
                if i == 0 {
                    (m as f64 / t as f64).ln()
                } else {
                    ((m + 1) as f64 / (t + 1) as f64).ln()
                }
            })
            .sum();
        100.0 * self.brevity_penalty() * (log_sum / n as f64).exp()
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn sentence_stats(hyp: &str, refs: &[&str], max_order: usize) -> BleuStats {
    let hyp_tokens = tokenize(hyp);
    let ref_tokens: Vec<Vec<String>> = refs.iter().map(|r| tokenize(r)).collect();
    let mut stats = BleuStats::zero(max_order);
    stats.hyp_len = hyp_tokens.len() as u64;
    // closest reference length, shorter one on ties
    stats.ref_len = ref_tokens
        .iter()
        .map(|r| r.len() as u64)
        .min_by_key(|&len| (len.abs_diff(stats.hyp_len), len))
        .unwrap_or(0);
    for n in 1..=max_order {
        let hyp_counts = ngram_counts(&hyp_tokens, n);
        let mut max_ref: HashMap<&[String], u64> = HashMap::new();
        for r in &ref_tokens {
            for (gram, c) in ngram_counts(r, n) {
                let e = max_ref.entry(gram).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let matches: u64 = hyp_counts
            .iter()
            .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        stats.matches[n - 1] = matches;
        stats.totals[n - 1] = hyp_counts.values().sum();
    }
    stats
}

/// Corpus BLEU with the default configuration.
pub fn bleu<H, R>(hyps: &[H], refs: &[Vec<R>]) -> Result<CorpusScore, MetricError>
where
    H: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    bleu_with(hyps, refs, &MetricConfig::default())
}

pub fn bleu_with<H, R>(
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
    let max_order = cfg.bleu_max_order;
    let per_item: Vec<BleuStats> = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, rs)| {
            let rs: Vec<&str> = rs.iter().map(AsRef::as_ref).collect();
            sentence_stats(h.as_ref(), &rs, max_order)
        })
        .collect();
    let total = per_item
        .iter()
        .fold(BleuStats::zero(max_order), |acc, s| acc.merge(s));
    Ok(CorpusScore {
        metric: Metric::Bleu,
        value: total.score(),
        n_items: hyps.len(),
        details: ScoreDetails::Bleu(total),
    })
}

/// Sentence-level BLEU with add-one smoothing for orders >= 2.
pub fn sentence_bleu<R: AsRef<str>>(hyp: &str, refs: &[R]) -> Result<f64, MetricError> {
    if refs.is_empty() {
        return Err(MetricError::EmptyReferenceSet(0));
    }
    let rs: Vec<&str> = refs.iter().map(AsRef::as_ref).collect();
    Ok(sentence_stats(hyp, &rs, MetricConfig::default().bleu_max_order).smoothed_score())
}
