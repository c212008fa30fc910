use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_shapes, f_beta, tokenize, CorpusScore, Metric, MetricConfig, MetricError, ScoreDetails,
};
use crate::textcore::normalize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderCounts {
    pub hyp: u64,
    pub reference: u64,
    pub matches: u64,
}

/// Character orders `1..=char_order` followed by word orders `1..=word_order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChrfStats {
    pub char_orders: Vec<OrderCounts>,
    pub word_orders: Vec<OrderCounts>,
    pub beta: f64,
}

impl ChrfStats {
    fn zero(cfg: &MetricConfig) -> Self {
        Self {
            char_orders: vec![OrderCounts::default(); cfg.chrf_char_order],
            word_orders: vec![OrderCounts::default(); cfg.chrf_word_order],
            beta: cfg.chrf_beta,
        }
    }

    pub fn merge(mut self, other: &Self) -> Self {
        let pairs = self
            .char_orders
            .iter_mut()
            .zip(&other.char_orders)
            .chain(self.word_orders.iter_mut().zip(&other.word_orders));
        for (a, b) in pairs {
            a.hyp += b.hyp;
            a.reference += b.reference;
            a.matches += b.matches;
        }
        self
    }

    /// Mean F-beta over the orders where both sides have n-grams, ×100.
    pub fn score(&self) -> f64 {
        let mut sum = 0.0;
        let mut effective = 0usize;
        for c in self.char_orders.iter().chain(&self.word_orders) {
            if c.hyp > 0 && c.reference > 0 {
                let p = c.matches as f64 / c.hyp as f64;
                let r = c.matches as f64 / c.reference as f64;
                sum += f_beta(p, r, self.beta);
                effective += 1;
            }
        }
        if effective == 0 {
            0.0
        } else {
            100.0 * sum / effective as f64
        }
    }
}

fn counts<T: Hash + Eq + Clone>(units: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut out = HashMap::new();
    if units.len() >= n {
        for g in units.windows(n) {
            *out.entry(g).or_insert(0) += 1;
        }
    }
    out
}

fn order_counts<T: Hash + Eq + Clone>(hyp: &[T], reference: &[T], n: usize) -> OrderCounts {
    let h = counts(hyp, n);
    let r = counts(reference, n);
    let matches = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    OrderCounts {
        hyp: h.values().sum(),
        reference: r.values().sum(),
        matches,
    }
}

fn pair_stats(hyp: &str, reference: &str, cfg: &MetricConfig) -> ChrfStats {
    let hyp_chars: Vec<char> = normalize(hyp)
        .as_str()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    let ref_chars: Vec<char> = normalize(reference)
        .as_str()
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    let hyp_words = tokenize(hyp);
    let ref_words = tokenize(reference);
    ChrfStats {
        char_orders: (1..=cfg.chrf_char_order)
            .map(|n| order_counts(&hyp_chars, &ref_chars, n))
            .collect(),
        word_orders: (1..=cfg.chrf_word_order)
            .map(|n| order_counts(&hyp_words, &ref_words, n))
            .collect(),
        beta: cfg.chrf_beta,
    }
}

/// Statistics against the best-scoring reference (first one on ties).
fn item_stats(hyp: &str, refs: &[&str], cfg: &MetricConfig) -> ChrfStats {
    let mut best: Option<(f64, ChrfStats)> = None;
    for r in refs {
        let stats = pair_stats(hyp, r, cfg);
        let s = stats.score();
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, stats));
        }
    }
    best.map(|(_, s)| s).unwrap_or_else(|| ChrfStats::zero(cfg))
}

/// Corpus chrF++ with the default configuration.
pub fn chrf_pp<H, R>(hyps: &[H], refs: &[Vec<R>]) -> Result<CorpusScore, MetricError>
where
    H: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    chrf_pp_with(hyps, refs, &MetricConfig::default())
}

pub fn chrf_pp_with<H, R>(
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
    let per_item: Vec<ChrfStats> = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, rs)| {
            let rs: Vec<&str> = rs.iter().map(AsRef::as_ref).collect();
            item_stats(h.as_ref(), &rs, cfg)
        })
        .collect();
    let total = per_item
        .iter()
        .fold(ChrfStats::zero(cfg), |acc, s| acc.merge(s));
    Ok(CorpusScore {
        metric: Metric::ChrfPp,
        value: total.score(),
        n_items: hyps.len(),
        details: ScoreDetails::Chrf(total),
    })
}

pub fn sentence_chrf_pp<R: AsRef<str>>(hyp: &str, refs: &[R]) -> Result<f64, MetricError> {
    if refs.is_empty() {
        return Err(MetricError::EmptyReferenceSet(0));
    }
    let rs: Vec<&str> = refs.iter().map(AsRef::as_ref).collect();
    Ok(item_stats(hyp, &rs, &MetricConfig::default()).score())
}
