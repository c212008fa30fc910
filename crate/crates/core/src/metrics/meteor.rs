use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_shapes, tokenize, CorpusScore, Metric, MetricConfig, MetricError, ScoreDetails};
use crate::textcore::normalize;

/// Exact-match unigram alignment between one hypothesis and one reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeteorAlignment {
    pub hyp_len: usize,
    pub ref_len: usize,
    pub matches: usize,
    pub chunks: usize,
}

impl MeteorAlignment {
    /// Greedy left-to-right: each hypothesis token takes the first unused
    /// reference token with the same surface form.
    pub fn align(hyp: &[String], reference: &[String]) -> Self {
        let mut used = vec![false; reference.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (i, tok) in hyp.iter().enumerate() {
            if let Some(j) = (0..reference.len()).find(|&j| !used[j] && reference[j] == *tok) {
                used[j] = true;
                pairs.push((i, j));
            }
        }
        let mut chunks = 0;
        let mut prev: Option<(usize, usize)> = None;
        for &(i, j) in &pairs {
            let continues = matches!(prev, Some((pi, pj)) if pi + 1 == i && pj + 1 == j);
            if !continues {
                chunks += 1;
            }
            prev = Some((i, j));
        }
        Self {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            matches: pairs.len(),
            chunks,
        }
    }

    /// Score in [0, 100].
    pub fn score(&self, cfg: &MetricConfig) -> f64 {
        if self.matches == 0 {
            return 0.0;
        }
        let p = self.matches as f64 / self.hyp_len as f64;
        let r = self.matches as f64 / self.ref_len as f64;
        let (wr, wp) = (cfg.meteor_recall_weight, cfg.meteor_precision_weight);
        let f_mean = (wr + wp) * p * r / (wr * p + wp * r);
        let frag = self.chunks as f64 / self.matches as f64;
        let penalty = cfg.meteor_gamma * frag.powf(cfg.meteor_exponent);
        100.0 * f_mean * (1.0 - penalty)
    }
}

fn meteor_tokens(text: &str) -> Vec<String> {
    tokenize(normalize(text).as_str().to_lowercase().as_str())
}

fn sentence_score(hyp: &str, reference: &str, cfg: &MetricConfig) -> Result<f64, MetricError> {
    let h = meteor_tokens(hyp);
    let r = meteor_tokens(reference);
    if h.is_empty() || r.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(MeteorAlignment::align(&h, &r).score(cfg))
}

/// METEOR with exact surface matching only (no stems, synonyms or paraphrases).
pub fn meteor_exact(hyp: &str, reference: &str) -> Result<f64, MetricError> {
    sentence_score(hyp, reference, &MetricConfig::default())
}

/// Mean over items of the best score against any reference.
/// An empty hypothesis scores 0 here instead of failing the whole corpus.
pub fn corpus_meteor<H, R>(
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
    let scores: Vec<f64> = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, rs)| {
            let mut best = 0.0f64;
            for r in rs {
                match sentence_score(h.as_ref(), r.as_ref(), cfg) {
                    Ok(s) => best = best.max(s),
                    Err(MetricError::EmptyInput) if meteor_tokens(r.as_ref()).is_empty() => {
                        return Err(MetricError::EmptyReference)
                    }
                    Err(MetricError::EmptyInput) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(best)
        })
        .collect::<Result<_, _>>()?;
    let mut sorted = scores.clone();
    // order-free summation
    sorted.sort_by(f64::total_cmp);
    let value = sorted.iter().sum::<f64>() / scores.len() as f64;
    Ok(CorpusScore {
        metric: Metric::MeteorExact,
        value,
        n_items: scores.len(),
        details: ScoreDetails::Meteor {
            sentence_scores: scores,
        },
    })
}
