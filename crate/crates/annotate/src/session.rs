//! Blind rating sessions.
//!
//! Outputs of several systems for the same items are interleaved in a
//! seeded random order and presented under opaque keys. Which system
//! produced an output stays server-side until the session is finalized.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cascade_eval::adapters::IdText;
use cascade_eval::agreement::{agreement_report, AgreementReport, DistanceMetric, SystemRating, LIKERT_LEVELS};
use cascade_eval::corpus::{EvalItem, SentenceType};

use crate::AnnotateError;

/// One system's outputs, keyed by item id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemRun {
    pub label: String,
    pub hypotheses: Vec<IdText>,
}

/// Where a presented output came from. Never sent to raters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindEntry {
    pub system: String,
    pub item_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionItem {
    pub item_key: String,
    pub source_text: String,
    pub reference_text: String,
    pub hypothesis_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Open,
    Finalized,
}

/// What a rater sees for one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentationItem {
    pub item_key: String,
    pub source_text: String,
    pub reference_text: String,
    pub hypothesis_text: String,
    /// Zero-based position in the session order.
    pub position: usize,
    pub total: usize,
    /// Items this rater has already rated.
    pub rated: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum NextItem {
    Item(PresentationItem),
    Done { rated: usize, total: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub session_id: String,
    pub rater: String,
    pub item_key: String,
    pub fluency: u8,
    pub adequacy: u8,
    /// Milliseconds since the Unix epoch, set by the server.
    pub timestamp_ms: u64,
}

impl RatingRecord {
    fn same_judgement(&self, other: &Self) -> bool {
        self.fluency == other.fluency && self.adequacy == other.adequacy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ack {
    Stored,
    /// An identical rating was already on record; nothing new was written.
    Unchanged,
}

/// One unblinded rating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRow {
    pub item_key: String,
    #[serde(flatten)]
    pub rating: SystemRating,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizedExport {
    pub session_id: String,
    pub rows: Vec<ExportRow>,
    pub report: AgreementReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub seed: u64,
    pub items: Vec<SessionItem>,
    pub blind_map: HashMap<String, BlindEntry>,
    pub sentence_types: HashMap<String, SentenceType>,
    pub state: SessionState,
    #[serde(skip)]
    ratings: BTreeMap<(String, String), RatingRecord>,
    #[serde(skip)]
    key_index: HashMap<String, usize>,
}

fn coverage(run: &SystemRun) -> BTreeSet<&str> {
    run.hypotheses.iter().map(|h| h.id.as_str()).collect()
}

impl Session {
    /// Interleave `runs` in a seeded random order under opaque random keys.
    pub fn create(id: &str, runs: &[SystemRun], manifest: &[EvalItem], seed: u64) -> Result<Self, AnnotateError> {
        let first = runs
            .first()
            .ok_or_else(|| AnnotateError::CoverageMismatch("no system runs given".into()))?;
        let mut labels = BTreeSet::new();
        for run in runs {
            if !labels.insert(run.label.as_str()) {
                return Err(AnnotateError::CoverageMismatch(format!("system {:?} given twice", run.label)));
            }
            if run.hypotheses.len() != coverage(run).len() {
                return Err(AnnotateError::CoverageMismatch(format!("system {:?} repeats an item id", run.label)));
            }
        }
        let ids = coverage(first);
        for run in &runs[1..] {
            if coverage(run) != ids {
                return Err(AnnotateError::CoverageMismatch(format!(
                    "systems {:?} and {:?} cover different items",
                    first.label, run.label
                )));
            }
        }
        let by_id: HashMap<&str, &EvalItem> = manifest.iter().map(|i| (i.id.as_str(), i)).collect();
        if let Some(missing) = ids.iter().find(|id| !by_id.contains_key(**id)) {
            return Err(AnnotateError::CoverageMismatch(format!("item {missing:?} is not in the manifest")));
        }

        // canonical order first, so the shuffle depends only on content and seed
        let mut pairs: Vec<(&str, &IdText)> = runs
            .iter()
            .flat_map(|r| r.hypotheses.iter().map(move |h| (r.label.as_str(), h)))
            .collect();
        pairs.sort_by(|a, b| (a.0, &a.1.id).cmp(&(b.0, &b.1.id)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pairs.shuffle(&mut rng);

        let mut items = Vec::with_capacity(pairs.len());
        let mut blind_map = HashMap::with_capacity(pairs.len());
        for (system, hyp) in pairs {
            let key = loop {
                let mut bytes = [0u8; 16];
                rng.fill_bytes(&mut bytes);
                let k = hex::encode(bytes);
                if !blind_map.contains_key(&k) {
                    break k;
                }
            };
            let item = by_id[hyp.id.as_str()];
            blind_map.insert(
                key.clone(),
                BlindEntry {
                    system: system.to_string(),
                    item_id: hyp.id.clone(),
                },
            );
            items.push(SessionItem {
                item_key: key,
                source_text: item.ref_transcript.as_str().to_string(),
                reference_text: item.ref_translations[0].clone(),
                hypothesis_text: hyp.text.clone(),
            });
        }
        let sentence_types = ids
            .iter()
            .map(|id| (id.to_string(), by_id[id].sentence_type))
            .collect();
        let mut s = Self {
            id: id.to_string(),
            seed,
            items,
            blind_map,
            sentence_types,
            state: SessionState::Open,
            ratings: BTreeMap::new(),
            key_index: HashMap::new(),
        };
        s.reindex();
        Ok(s)
    }

    /// Rebuild lookup tables after deserialization.
    pub(crate) fn reindex(&mut self) {
        self.key_index = self
            .items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.item_key.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_ratings(&self) -> usize {
        self.ratings.len()
    }

    fn ensure_open(&self) -> Result<(), AnnotateError> {
        match self.state {
            SessionState::Open => Ok(()),
            SessionState::Finalized => Err(AnnotateError::SessionFinalized(self.id.clone())),
        }
    }

    /// The first item in session order this rater has not rated yet.
    pub fn next_item(&self, rater: &str) -> Result<NextItem, AnnotateError> {
        self.ensure_open()?;
        let rated = self.ratings.range((rater.to_string(), String::new())..).take_while(|((r, _), _)| r == rater).count();
        let next = self
            .items
            .iter()
            .position(|it| !self.ratings.contains_key(&(rater.to_string(), it.item_key.clone())));
        Ok(match next {
            Some(position) => {
                let it = &self.items[position];
                NextItem::Item(PresentationItem {
                    item_key: it.item_key.clone(),
                    source_text: it.source_text.clone(),
                    reference_text: it.reference_text.clone(),
                    hypothesis_text: it.hypothesis_text.clone(),
                    position,
                    total: self.items.len(),
                    rated,
                })
            }
            None => NextItem::Done {
                rated,
                total: self.items.len(),
            },
        })
    }

    /// Validate a rating without recording it.
    pub fn check_rating(&self, rec: &RatingRecord) -> Result<Ack, AnnotateError> {
        self.ensure_open()?;
        if rec.rater.trim().is_empty() {
            return Err(AnnotateError::InvalidRequest("rater id must not be empty".into()));
        }
        for (field, v) in [("fluency", rec.fluency), ("adequacy", rec.adequacy)] {
            if !(1..=LIKERT_LEVELS).contains(&v) {
                return Err(AnnotateError::OutOfRange {
                    field,
                    value: i64::from(v),
                });
            }
        }
        if !self.key_index.contains_key(&rec.item_key) {
            return Err(AnnotateError::UnknownItem(rec.item_key.clone()));
        }
        match self.ratings.get(&(rec.rater.clone(), rec.item_key.clone())) {
            Some(prev) if prev.same_judgement(rec) => Ok(Ack::Unchanged),
            Some(_) => Err(AnnotateError::Duplicate {
                rater: rec.rater.clone(),
                item_key: rec.item_key.clone(),
            }),
            None => Ok(Ack::Stored),
        }
    }

    pub fn submit_rating(&mut self, rec: RatingRecord) -> Result<Ack, AnnotateError> {
        let ack = self.check_rating(&rec)?;
        if ack == Ack::Stored {
            self.ratings.insert((rec.rater.clone(), rec.item_key.clone()), rec);
        }
        Ok(ack)
    }

    /// Ratings joined with their true systems, in (rater, key) order.
    pub fn unblinded(&self) -> Vec<ExportRow> {
        self.ratings
            .values()
            .map(|r| {
                let entry = &self.blind_map[&r.item_key];
                ExportRow {
                    item_key: r.item_key.clone(),
                    rating: SystemRating {
                        system: entry.system.clone(),
                        item_id: entry.item_id.clone(),
                        rater: r.rater.clone(),
                        sentence_type: self.sentence_types.get(&entry.item_id).copied(),
                        fluency: r.fluency,
                        adequacy: r.adequacy,
                    },
                    timestamp_ms: r.timestamp_ms,
                }
            })
            .collect()
    }

    /// Export plus agreement statistics; does not change state.
    pub fn export(&self) -> Result<FinalizedExport, AnnotateError> {
        let rows = self.unblinded();
        let records: Vec<SystemRating> = rows.iter().map(|r| r.rating.clone()).collect();
        let report = agreement_report(&records, DistanceMetric::Ordinal)?;
        Ok(FinalizedExport {
            session_id: self.id.clone(),
            rows,
            report,
        })
    }

    pub fn finalize(&mut self) -> Result<FinalizedExport, AnnotateError> {
        self.ensure_open()?;
        let export = self.export()?;
        self.state = SessionState::Finalized;
        Ok(export)
    }

    pub(crate) fn mark_finalized(&mut self) {
        self.state = SessionState::Finalized;
    }

    pub(crate) fn restore_rating(&mut self, rec: RatingRecord) {
        self.ratings.insert((rec.rater.clone(), rec.item_key.clone()), rec);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cascade_eval::normalize;

    fn manifest(n: usize) -> Vec<EvalItem> {
        (0..n)
            .map(|i| EvalItem {
                id: format!("item{i}"),
                ref_transcript: normalize(&format!("वाक्य {i}।")),
                ref_translations: vec![format!("sentence {i}.")],
                sentence_type: SentenceType::ALL[i % 5],
                audio_path: None,
                duration_s: None,
                speaker_id: None,
                extra: Default::default(),
            })
            .collect()
    }

    fn runs(labels: &[&str], n: usize) -> Vec<SystemRun> {
        labels
            .iter()
            .map(|l| SystemRun {
                label: l.to_string(),
                hypotheses: (0..n)
                    .map(|i| IdText {
                        id: format!("item{i}"),
                        text: format!("output {i} v{}", l.len()),
                    })
                    .collect(),
            })
            .collect()
    }

    fn rec(s: &Session, rater: &str, key: &str, f: u8, a: u8) -> RatingRecord {
        RatingRecord {
            session_id: s.id.clone(),
            rater: rater.into(),
            item_key: key.into(),
            fluency: f,
            adequacy: a,
            timestamp_ms: 0,
        }
    }

    #[test]
    fn three_systems_by_three_hundred() {
        let s = Session::create("s", &runs(&["A", "B", "C"], 300), &manifest(300), 1).unwrap();
        assert_eq!(s.len(), 900);
        let keys: BTreeSet<&str> = s.items.iter().map(|i| i.item_key.as_str()).collect();
        assert_eq!(keys.len(), 900);
    }

    #[test]
    fn seed_determines_order() {
        let a = Session::create("s", &runs(&["A", "B"], 20), &manifest(20), 9).unwrap();
        let b = Session::create("s", &runs(&["B", "A"], 20), &manifest(20), 9).unwrap();
        let c = Session::create("s", &runs(&["A", "B"], 20), &manifest(20), 10).unwrap();
        assert_eq!(a.items, b.items);
        assert_ne!(a.items, c.items);
    }

    #[test]
    fn coverage_mismatch() {
        let mut r = runs(&["A", "B"], 5);
        r[1].hypotheses.pop();
        assert!(matches!(
            Session::create("s", &r, &manifest(5), 1),
            Err(AnnotateError::CoverageMismatch(_))
        ));
        assert!(Session::create("s", &runs(&["A"], 6), &manifest(5), 1).is_err());
        assert!(Session::create("s", &[], &manifest(5), 1).is_err());
    }

    #[test]
    fn rating_flow() {
        let mut s = Session::create("s", &runs(&["A", "B"], 2), &manifest(2), 3).unwrap();
        let NextItem::Item(first) = s.next_item("r1").unwrap() else { panic!() };
        assert_eq!(first.position, 0);
        let key = first.item_key.clone();
        assert!(matches!(
            s.submit_rating(rec(&s, "r1", &key, 6, 3)),
            Err(AnnotateError::OutOfRange { field: "fluency", value: 6 })
        ));
        assert_eq!(s.submit_rating(rec(&s, "r1", &key, 4, 3)).unwrap(), Ack::Stored);
        assert_eq!(s.submit_rating(rec(&s, "r1", &key, 4, 3)).unwrap(), Ack::Unchanged);
        assert_eq!(s.n_ratings(), 1);
        assert!(matches!(
            s.submit_rating(rec(&s, "r1", &key, 5, 3)),
            Err(AnnotateError::Duplicate { .. })
        ));
        let NextItem::Item(second) = s.next_item("r1").unwrap() else { panic!() };
        assert_eq!((second.position, second.rated), (1, 1));
        let NextItem::Item(fresh) = s.next_item("r2").unwrap() else { panic!() };
        assert_eq!(fresh.position, 0);
        assert!(matches!(
            s.submit_rating(rec(&s, "r1", "nope", 3, 3)),
            Err(AnnotateError::UnknownItem(_))
        ));
    }

    #[test]
    fn walkthrough_then_finalize() {
        let mut s = Session::create("s", &runs(&["A", "B", "C"], 4), &manifest(4), 5).unwrap();
        for rater in ["r1", "r2", "r3"] {
            while let NextItem::Item(it) = s.next_item(rater).unwrap() {
                let v = 1 + (it.position % 5) as u8;
                s.submit_rating(rec(&s, rater, &it.item_key, v, v)).unwrap();
            }
            assert_eq!(s.next_item(rater).unwrap(), NextItem::Done { rated: 12, total: 12 });
        }
        let out = s.finalize().unwrap();
        assert_eq!(out.rows.len(), 36);
        let alpha = out.report.overall_fluency_alpha.alpha.unwrap();
        assert_eq!(alpha, 1.0);
        assert!(matches!(s.next_item("r1"), Err(AnnotateError::SessionFinalized(_))));
        let key = s.items[0].item_key.clone();
        assert!(matches!(
            s.submit_rating(rec(&s, "r4", &key, 3, 3)),
            Err(AnnotateError::SessionFinalized(_))
        ));
    }
}
