//! Statistical punctuation and segmentation restorer.
//!
//! The model works on the *skeleton* of a text: its code points with all
//! whitespace and punctuation removed. Every gap between skeleton code
//! points (plus the two ends) carries a [`Decision`], the exact run of
//! spaces and marks found there in the reference. Training counts
//! decisions per `(left, right)` context for every context width from
//! `order` down to 1; restoration takes the smoothed argmax at the widest
//! context seen in training, with ties going to "insert nothing".

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fsutil::atomic_write;
use crate::textcore::{degrade, fuse_words, normalize, strip_punctuation, DegradeMode, NormalizedText, PunctClass};

const LEFT_PAD: char = '\u{2}';
const RIGHT_PAD: char = '\u{3}';

const MAGIC: &str = "CASCADE-BOUNDARY-MODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RestoreError {
    #[error("no training pairs")]
    EmptyInput,
    #[error("pair {index}: {reason}")]
    InvalidPair { index: usize, reason: String },
    #[error("invalid restorer configuration: {0}")]
    InvalidConfig(String),
    #[error("model has no trained contexts")]
    EmptyModel,
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("texts have different skeletons: {0:?} vs {1:?}")]
    SkeletonMismatch(String, String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Degraded input and its fully punctuated, segmented target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestorePair {
    pub input: NormalizedText,
    pub target: NormalizedText,
    pub mode: DegradeMode,
}

impl RestorePair {
    pub fn is_consistent(&self, pc: &PunctClass) -> bool {
        degrade(&self.target, self.mode, pc) == self.input
    }
}

/// What goes into one gap: nothing, a space, one or more marks, or marks
/// with a space. Stored as the literal inserted string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Decision(String);

impl Decision {
    pub fn none() -> Self {
        Decision(String::new())
    }

    pub fn space() -> Self {
        Decision(" ".into())
    }

    pub fn punct(marks: &str) -> Self {
        Decision(marks.into())
    }

    pub fn punct_space(marks: &str) -> Self {
        Decision(format!("{marks} "))
    }

    pub fn is_none(&self) -> bool {
        self.0.is_empty()
    }

    pub fn has_space(&self) -> bool {
        self.0.contains(' ')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("<none>")
        } else {
            write!(f, "{:?}", self.0)
        }
    }
}

/// A text split into skeleton code points and the gap contents around them.
/// `gaps.len() == skeleton.len() + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmented {
    pub skeleton: Vec<char>,
    pub gaps: Vec<String>,
}

impl Segmented {
    pub fn parse(t: &str, pc: &PunctClass) -> Self {
        let mut skeleton = Vec::new();
        let mut gaps = vec![String::new()];
        for c in t.chars() {
            if c.is_whitespace() || pc.contains(c) {
                gaps.last_mut().expect("non-empty").push(if c.is_whitespace() { ' ' } else { c });
            } else {
                skeleton.push(c);
                gaps.push(String::new());
            }
        }
        Self { skeleton, gaps }
    }

    pub fn render(&self) -> NormalizedText {
        let mut out = String::new();
        for (i, gap) in self.gaps.iter().enumerate() {
            out.push_str(gap);
            if let Some(&c) = self.skeleton.get(i) {
                out.push(c);
            }
        }
        normalize(&out)
    }

    fn padded(&self, order: usize) -> Vec<char> {
        let mut p = Vec::with_capacity(self.skeleton.len() + 2 * order);
        p.extend(std::iter::repeat_n(LEFT_PAD, order));
        p.extend(&self.skeleton);
        p.extend(std::iter::repeat_n(RIGHT_PAD, order));
        p
    }
}

fn context(padded: &[char], order: usize, gap: usize, width: usize) -> (String, String) {
    let at = order + gap;
    (
        padded[at - width..at].iter().collect(),
        padded[at..at + width].iter().collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContextKey {
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Context width in code points on each side.
    pub order: usize,
    pub smoothing_alpha: f64,
    pub punct: PunctClass,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            order: 3,
            smoothing_alpha: 0.1,
            punct: PunctClass::default(),
        }
    }
}

/// Context → decision count table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct BoundaryModel {
    order: usize,
    smoothing_alpha: f64,
    punct: PunctClass,
    decisions: BTreeSet<Decision>,
    counts: BTreeMap<ContextKey, BTreeMap<Decision, u64>>,
}

#[derive(Serialize, Deserialize)]
struct ContextRepr {
    left: String,
    right: String,
    counts: Vec<(usize, u64)>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    order: usize,
    smoothing_alpha: f64,
    punct: PunctClass,
    decisions: Vec<Decision>,
    contexts: Vec<ContextRepr>,
}

impl From<BoundaryModel> for ModelRepr {
    fn from(m: BoundaryModel) -> Self {
        let decisions: Vec<Decision> = m.decisions.into_iter().collect();
        let index: BTreeMap<&Decision, usize> =
            decisions.iter().enumerate().map(|(i, d)| (d, i)).collect();
        let contexts = m
            .counts
            .iter()
            .map(|(k, c)| ContextRepr {
                left: k.left.clone(),
                right: k.right.clone(),
                counts: c.iter().map(|(d, &n)| (index[d], n)).collect(),
            })
            .collect();
        ModelRepr {
            order: m.order,
            smoothing_alpha: m.smoothing_alpha,
            punct: m.punct,
            decisions,
            contexts,
        }
    }
}

impl TryFrom<ModelRepr> for BoundaryModel {
    type Error = String;

    fn try_from(r: ModelRepr) -> Result<Self, Self::Error> {
        if r.order == 0 {
            return Err("order must be >= 1".into());
        }
        if !(r.smoothing_alpha > 0.0) || !r.smoothing_alpha.is_finite() {
            return Err("smoothing_alpha must be > 0".into());
        }
        let mut counts = BTreeMap::new();
        for c in r.contexts {
            let mut table = BTreeMap::new();
            for (i, n) in c.counts {
                let d = r
                    .decisions
                    .get(i)
                    .ok_or_else(|| format!("decision index {i} out of range"))?;
                table.insert(d.clone(), n);
            }
            counts.insert(
                ContextKey {
                    left: c.left,
                    right: c.right,
                },
                table,
            );
        }
        Ok(BoundaryModel {
            order: r.order,
            smoothing_alpha: r.smoothing_alpha,
            punct: r.punct,
            decisions: r.decisions.into_iter().collect(),
            counts,
        })
    }
}

/// Skeleton and gap decisions of a reference, checked against its degraded input.
fn reference_segments(pair: &RestorePair, pc: &PunctClass, index: usize) -> Result<Segmented, RestoreError> {
    if !pair.is_consistent(pc) {
        return Err(RestoreError::InvalidPair {
            index,
            reason: format!(
                "degrading target {:?} ({}) does not give input {:?}",
                pair.target.as_str(),
                pair.mode,
                pair.input.as_str()
            ),
        });
    }
    let seg = Segmented::parse(pair.target.as_str(), pc);
    let fused = fuse_words(&strip_punctuation(&pair.target, pc));
    if fused.as_str().chars().ne(seg.skeleton.iter().copied()) {
        return Err(RestoreError::InvalidPair {
            index,
            reason: "removing boundaries recomposes code points; skeleton is ambiguous".into(),
        });
    }
    Ok(seg)
}

/// Count decisions for every gap of every target.
pub fn train(pairs: &[RestorePair], cfg: &TrainConfig) -> Result<BoundaryModel, RestoreError> {
    if pairs.is_empty() {
        return Err(RestoreError::EmptyInput);
    }
    if cfg.order == 0 {
        return Err(RestoreError::InvalidConfig("order must be >= 1".into()));
    }
    if !(cfg.smoothing_alpha > 0.0) || !cfg.smoothing_alpha.is_finite() {
        return Err(RestoreError::InvalidConfig("smoothing_alpha must be > 0".into()));
    }
    let mut model = BoundaryModel {
        order: cfg.order,
        smoothing_alpha: cfg.smoothing_alpha,
        punct: cfg.punct.clone(),
        decisions: BTreeSet::from([Decision::none()]),
        counts: BTreeMap::new(),
    };
    for (index, pair) in pairs.iter().enumerate() {
        let seg = reference_segments(pair, &cfg.punct, index)?;
        let padded = seg.padded(cfg.order);
        for (gap, content) in seg.gaps.iter().enumerate() {
            let decision = Decision(content.clone());
            model.decisions.insert(decision.clone());
            for width in 1..=cfg.order {
                let (left, right) = context(&padded, cfg.order, gap, width);
                *model
                    .counts
                    .entry(ContextKey { left, right })
                    .or_default()
                    .entry(decision.clone())
                    .or_insert(0) += 1;
            }
        }
    }
    Ok(model)
}

impl BoundaryModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing_alpha(&self) -> f64 {
        self.smoothing_alpha
    }

    pub fn punct(&self) -> &PunctClass {
        &self.punct
    }

    pub fn decisions(&self) -> impl Iterator<Item = &Decision> {
        self.decisions.iter()
    }

    pub fn n_contexts(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self, key: &ContextKey) -> Option<&BTreeMap<Decision, u64>> {
        self.counts.get(key)
    }

    /// Smoothed distribution over the decision inventory at `key`.
    pub fn distribution(&self, key: &ContextKey) -> Vec<(Decision, f64)> {
        let table = self.counts.get(key);
        let total: u64 = table.map_or(0, |t| t.values().sum());
        let denom = total as f64 + self.smoothing_alpha * self.decisions.len() as f64;
        self.decisions
            .iter()
            .map(|d| {
                let c = table.and_then(|t| t.get(d)).copied().unwrap_or(0);
                (d.clone(), (c as f64 + self.smoothing_alpha) / denom)
            })
            .collect()
    }

    /// Argmax of the smoothed distribution; ties go to `None`, then to the
    /// lexicographically smallest decision.
    fn argmax(&self, table: &BTreeMap<Decision, u64>) -> Decision {
        let mut best = Decision::none();
        let mut best_score = table.get(&best).copied().unwrap_or(0) as f64 + self.smoothing_alpha;
        for d in &self.decisions {
            let score = table.get(d).copied().unwrap_or(0) as f64 + self.smoothing_alpha;
            if score > best_score {
                best = d.clone();
                best_score = score;
            }
        }
        best
    }

    /// Decision at `gap` of `seg`, backing off from the widest context seen in training.
    pub fn predict(&self, seg: &Segmented, gap: usize) -> Decision {
        let padded = seg.padded(self.order);
        self.predict_padded(&padded, gap)
    }

    fn predict_padded(&self, padded: &[char], gap: usize) -> Decision {
        for width in (1..=self.order).rev() {
            let (left, right) = context(padded, self.order, gap, width);
            if let Some(table) = self.counts.get(&ContextKey { left, right }) {
                return self.argmax(table);
            }
        }
        Decision::none()
    }

    /// Insert spaces and punctuation into `t`.
    ///
    /// Gaps that already hold a punctuation mark are left untouched. With
    /// `preserve_spaces`, existing spaces stay and predicted marks go in
    /// front of them; otherwise existing spaces are dropped and every
    /// unpunctuated gap takes the model's decision.
    pub fn restore(&self, t: &NormalizedText, preserve_spaces: bool) -> Result<NormalizedText, RestoreError> {
        if self.counts.is_empty() {
            return Err(RestoreError::EmptyModel);
        }
        let mut seg = Segmented::parse(t.as_str(), &self.punct);
        let padded = seg.padded(self.order);
        for gap in 0..seg.gaps.len() {
            let existing = &seg.gaps[gap];
            if existing.chars().any(|c| self.punct.contains(c)) {
                continue;
            }
            let decision = self.predict_padded(&padded, gap);
            let had_space = !existing.is_empty();
            seg.gaps[gap] = if preserve_spaces && had_space && !decision.has_space() {
                format!("{} ", decision.as_str())
            } else {
                decision.0
            };
        }
        Ok(seg.render())
    }

    /// Hex SHA-256 of the serialized model body.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.body()))
    }

    fn body(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("model serializes")
    }

    /// Versioned, checksummed text container.
    pub fn to_bytes(&self) -> Vec<u8> {
        let body = self.body();
        let mut out = format!(
            "{MAGIC} {MODEL_FORMAT_VERSION} {}\n",
            hex::encode(Sha256::digest(&body))
        )
        .into_bytes();
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RestoreError> {
        let corrupt = |m: String| RestoreError::CorruptModel(m);
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("truncated header".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| corrupt("header is not UTF-8".into()))?;
        let body = &bytes[nl + 1..];
        let parts: Vec<&str> = header.split(' ').collect();
        let [magic, version, checksum] = parts[..] else {
            return Err(corrupt(format!("malformed header {header:?}")));
        };
        if magic != MAGIC {
            return Err(corrupt("not a boundary model file".into()));
        }
        let version: u32 = version
            .parse()
            .map_err(|_| corrupt(format!("unreadable version {version:?}")))?;
        if version != MODEL_FORMAT_VERSION {
            return Err(corrupt(format!(
                "unsupported version {version} (this build reads version {MODEL_FORMAT_VERSION})"
            )));
        }
        if hex::encode(Sha256::digest(body)) != checksum {
            return Err(corrupt("checksum mismatch".into()));
        }
        serde_json::from_slice(body).map_err(|e| corrupt(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RestoreError> {
        atomic_write(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RestoreError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Gap-level agreement between a restored text and its reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl BoundaryCounts {
    pub fn merge(self, o: Self) -> Self {
        Self {
            true_positive: self.true_positive + o.true_positive,
            false_positive: self.false_positive + o.false_positive,
            false_negative: self.false_negative + o.false_negative,
        }
    }

    /// F1 over non-empty gap decisions; 1.0 when neither side inserts anything.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.true_positive + self.false_positive + self.false_negative;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.true_positive as f64 / denom as f64
        }
    }
}

/// Compare the gap decisions of two texts sharing one skeleton.
pub fn boundary_counts(
    hyp: &NormalizedText,
    gold: &NormalizedText,
    pc: &PunctClass,
) -> Result<BoundaryCounts, RestoreError> {
    let h = Segmented::parse(hyp.as_str(), pc);
    let g = Segmented::parse(gold.as_str(), pc);
    if h.skeleton != g.skeleton {
        return Err(RestoreError::SkeletonMismatch(
            h.skeleton.iter().collect(),
            g.skeleton.iter().collect(),
        ));
    }
    let mut c = BoundaryCounts::default();
    for (hg, gg) in h.gaps.iter().zip(&g.gaps) {
        match (hg.is_empty(), gg.is_empty(), hg == gg) {
            (false, false, true) => c.true_positive += 1,
            (_, _, true) => {}
            (h_empty, g_empty, false) => {
                if !h_empty {
                    c.false_positive += 1;
                }
                if !g_empty {
                    c.false_negative += 1;
                }
            }
        }
    }
    Ok(c)
}
