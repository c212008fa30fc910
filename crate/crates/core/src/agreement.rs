//! Krippendorff's alpha over Likert ratings and per-system rating means.
//!
//! Alpha uses the coincidence-matrix formulation, so missing cells are
//! simply absent from their unit; nothing is imputed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SentenceType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgreementError {
    #[error("need at least 2 levels, got {0}")]
    TooFewLevels(u8),
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("rating {value} for rater {rater:?} item {item:?} outside 1..={levels}")]
    OutOfRange {
        rater: String,
        item: String,
        value: u8,
        levels: u8,
    },
    #[error("no item has two or more ratings")]
    InsufficientData,
    #[error("all pairable values are identical; expected disagreement is zero and alpha is undefined")]
    DegenerateData,
    #[error("no rating records")]
    EmptyInput,
    #[error("rater {rater:?} rated item {item:?} twice")]
    DuplicateRating { rater: String, item: String },
    #[error("unknown distance metric {0:?} (expected ordinal or nominal)")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Ordinal,
    Nominal,
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::Ordinal => "ordinal",
            DistanceMetric::Nominal => "nominal",
        })
    }
}

impl FromStr for DistanceMetric {
    type Err = AgreementError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ordinal" => Ok(DistanceMetric::Ordinal),
            "nominal" => Ok(DistanceMetric::Nominal),
            other => Err(AgreementError::UnknownMetric(other.to_string())),
        }
    }
}

/// Raters × items grid of optional ratings in `1..=levels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    raters: Vec<String>,
    items: Vec<String>,
    /// `cells[r][i]` is rater `r`'s rating of item `i`.
    cells: Vec<Vec<Option<u8>>>,
    levels: u8,
}

impl RatingMatrix {
    pub fn new(
        raters: Vec<String>,
        items: Vec<String>,
        cells: Vec<Vec<Option<u8>>>,
        levels: u8,
    ) -> Result<Self, AgreementError> {
        if levels < 2 {
            return Err(AgreementError::TooFewLevels(levels));
        }
        if cells.len() != raters.len() {
            return Err(AgreementError::Shape(format!(
                "{} raters but {} rows",
                raters.len(),
                cells.len()
            )));
        }
        for (r, row) in cells.iter().enumerate() {
            if row.len() != items.len() {
                return Err(AgreementError::Shape(format!(
                    "row {} has {} cells for {} items",
                    r,
                    row.len(),
                    items.len()
                )));
            }
            for (i, cell) in row.iter().enumerate() {
                if let Some(v) = *cell {
                    if v == 0 || v > levels {
                        return Err(AgreementError::OutOfRange {
                            rater: raters[r].clone(),
                            item: items[i].clone(),
                            value: v,
                            levels,
                        });
                    }
                }
            }
        }
        Ok(Self {
            raters,
            items,
            cells,
            levels,
        })
    }

    /// Build from `(rater, item, value)` triples; raters and items are sorted.
    pub fn from_triples<'a, I>(triples: I, levels: u8) -> Result<Self, AgreementError>
    where
        I: IntoIterator<Item = (&'a str, &'a str, u8)>,
    {
        let triples: Vec<_> = triples.into_iter().collect();
        let raters: Vec<String> = triples
            .iter()
            .map(|t| t.0)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(String::from)
            .collect();
        let items: Vec<String> = triples
            .iter()
            .map(|t| t.1)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(String::from)
            .collect();
        let r_index: BTreeMap<&str, usize> =
            raters.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let i_index: BTreeMap<&str, usize> =
            items.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let mut cells = vec![vec![None; items.len()]; raters.len()];
        for (rater, item, v) in triples {
            let cell = &mut cells[r_index[rater]][i_index[item]];
            if cell.is_some() {
                return Err(AgreementError::DuplicateRating {
                    rater: rater.to_string(),
                    item: item.to_string(),
                });
            }
            *cell = Some(v);
        }
        Self::new(raters, items, cells, levels)
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn levels(&self) -> u8 {
        self.levels
    }

    pub fn cell(&self, rater: usize, item: usize) -> Option<u8> {
        self.cells[rater][item]
    }

    /// Values recorded for item `i`, in rater order.
    pub fn unit_values(&self, item: usize) -> Vec<u8> {
        self.cells.iter().filter_map(|row| row[item]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub metric: DistanceMetric,
    /// Number of values in units with at least two ratings.
    pub n_pairable: usize,
}

/// Krippendorff's alpha, `1 - D_o / D_e`.
pub fn krippendorff_alpha(
    m: &RatingMatrix,
    metric: DistanceMetric,
) -> Result<AlphaEstimate, AgreementError> {
    let levels = m.levels as usize;
    let mut coincidence = vec![vec![0.0f64; levels]; levels];
    let mut n_pairable = 0usize;
    for item in 0..m.items.len() {
        let values = m.unit_values(item);
        let mu = values.len();
        if mu < 2 {
            continue;
        }
        n_pairable += mu;
        let weight = 1.0 / (mu - 1) as f64;
        for (a, &va) in values.iter().enumerate() {
            for (b, &vb) in values.iter().enumerate() {
                if a != b {
                    coincidence[va as usize - 1][vb as usize - 1] += weight;
                }
            }
        }
    }
    if n_pairable == 0 {
        return Err(AgreementError::InsufficientData);
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let delta = distance_table(&marginals, metric);
    let n = n_pairable as f64;
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..levels {
        for k in 0..levels {
            observed += coincidence[c][k] * delta[c][k];
            expected += marginals[c] * marginals[k] * delta[c][k];
        }
    }
    if expected == 0.0 {
        return Err(AgreementError::DegenerateData);
    }
    Ok(AlphaEstimate {
        alpha: 1.0 - (n - 1.0) * observed / expected,
        metric,
        n_pairable,
    })
}

/// Squared distances between levels; ordinal distances depend on the marginals.
fn distance_table(marginals: &[f64], metric: DistanceMetric) -> Vec<Vec<f64>> {
    let l = marginals.len();
    let mut delta = vec![vec![0.0; l]; l];
    for c in 0..l {
        for k in 0..l {
            if c == k {
                continue;
            }
            delta[c][k] = match metric {
                DistanceMetric::Nominal => 1.0,
                DistanceMetric::Ordinal => {
                    let (lo, hi) = (c.min(k), c.max(k));
                    let span: f64 = marginals[lo..=hi].iter().sum();
                    let d = span - (marginals[c] + marginals[k]) / 2.0;
                    d * d
                }
            };
        }
    }
    delta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Fluency,
    Adequacy,
}

/// One rater's unblinded judgement of one system output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemRating {
    pub system: String,
    pub item_id: String,
    pub rater: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_type: Option<SentenceType>,
    pub fluency: u8,
    pub adequacy: u8,
}

impl SystemRating {
    pub fn value(&self, dim: Dimension) -> u8 {
        match dim {
            Dimension::Fluency => self.fluency,
            Dimension::Adequacy => self.adequacy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionMeans {
    pub fluency: f64,
    pub adequacy: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub per_system: BTreeMap<String, DimensionMeans>,
    /// Keyed by system, then sentence type; only records with a type tag count.
    pub per_type: BTreeMap<String, BTreeMap<SentenceType, DimensionMeans>>,
}

#[derive(Default)]
struct Sums {
    fluency: u64,
    adequacy: u64,
    n: usize,
}

impl Sums {
    fn add(&mut self, r: &SystemRating) {
        self.fluency += u64::from(r.fluency);
        self.adequacy += u64::from(r.adequacy);
        self.n += 1;
    }

    fn means(&self) -> DimensionMeans {
        DimensionMeans {
            fluency: self.fluency as f64 / self.n as f64,
            adequacy: self.adequacy as f64 / self.n as f64,
            n: self.n,
        }
    }
}

pub const LIKERT_LEVELS: u8 = 5;

fn check_range(r: &SystemRating) -> Result<(), AgreementError> {
    for v in [r.fluency, r.adequacy] {
        if !(1..=LIKERT_LEVELS).contains(&v) {
            return Err(AgreementError::OutOfRange {
                rater: r.rater.clone(),
                item: r.item_id.clone(),
                value: v,
                levels: LIKERT_LEVELS,
            });
        }
    }
    Ok(())
}

/// Arithmetic means per system (averaged across raters and items), plus
/// per-sentence-type means where records carry a type.
pub fn aggregate_ratings(records: &[SystemRating]) -> Result<RatingSummary, AgreementError> {
    if records.is_empty() {
        return Err(AgreementError::EmptyInput);
    }
    let mut systems: BTreeMap<&str, Sums> = BTreeMap::new();
    let mut types: BTreeMap<&str, BTreeMap<SentenceType, Sums>> = BTreeMap::new();
    for r in records {
        check_range(r)?;
        systems.entry(&r.system).or_default().add(r);
        if let Some(t) = r.sentence_type {
            types.entry(&r.system).or_default().entry(t).or_default().add(r);
        }
    }
    Ok(RatingSummary {
        per_system: systems
            .into_iter()
            .map(|(k, s)| (k.to_string(), s.means()))
            .collect(),
        per_type: types
            .into_iter()
            .map(|(k, m)| (k.to_string(), m.into_iter().map(|(t, s)| (t, s.means())).collect()))
            .collect(),
    })
}

/// Rater × (system, item) matrix for one dimension, optionally restricted to one system.
pub fn rating_matrix(
    records: &[SystemRating],
    dim: Dimension,
    system: Option<&str>,
) -> Result<RatingMatrix, AgreementError> {
    let units: Vec<(String, &SystemRating)> = records
        .iter()
        .filter(|r| system.is_none_or(|s| r.system == s))
        .map(|r| (format!("{}\u{1F}{}", r.system, r.item_id), r))
        .collect();
    RatingMatrix::from_triples(
        units
            .iter()
            .map(|(unit, r)| (r.rater.as_str(), unit.as_str(), r.value(dim))),
        LIKERT_LEVELS,
    )
}

/// Alpha for one dimension, `None` paired with the reason when undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionAlpha {
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undefined_reason: Option<String>,
    pub n_pairable: usize,
}

impl DimensionAlpha {
    fn from_result(r: Result<AlphaEstimate, AgreementError>) -> Result<Self, AgreementError> {
        match r {
            Ok(a) => Ok(Self {
                alpha: Some(a.alpha),
                undefined_reason: None,
                n_pairable: a.n_pairable,
            }),
            Err(e @ (AgreementError::DegenerateData | AgreementError::InsufficientData)) => {
                Ok(Self {
                    alpha: None,
                    undefined_reason: Some(e.to_string()),
                    n_pairable: 0,
                })
            }
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemAgreement {
    pub means: DimensionMeans,
    pub fluency_alpha: DimensionAlpha,
    pub adequacy_alpha: DimensionAlpha,
}

/// Means and alpha per system plus pooled alpha across all systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub metric: DistanceMetric,
    pub per_system: BTreeMap<String, SystemAgreement>,
    pub per_type: BTreeMap<String, BTreeMap<SentenceType, DimensionMeans>>,
    pub overall_fluency_alpha: DimensionAlpha,
    pub overall_adequacy_alpha: DimensionAlpha,
}

pub fn agreement_report(
    records: &[SystemRating],
    metric: DistanceMetric,
) -> Result<AgreementReport, AgreementError> {
    let summary = aggregate_ratings(records)?;
    let alpha = |dim, system: Option<&str>| -> Result<DimensionAlpha, AgreementError> {
        let m = rating_matrix(records, dim, system)?;
        DimensionAlpha::from_result(krippendorff_alpha(&m, metric))
    };
    let mut per_system = BTreeMap::new();
    for (system, means) in &summary.per_system {
        per_system.insert(
            system.clone(),
            SystemAgreement {
                means: *means,
                fluency_alpha: alpha(Dimension::Fluency, Some(system))?,
                adequacy_alpha: alpha(Dimension::Adequacy, Some(system))?,
            },
        );
    }
    Ok(AgreementReport {
        metric,
        per_system,
        per_type: summary.per_type,
        overall_fluency_alpha: alpha(Dimension::Fluency, None)?,
        overall_adequacy_alpha: alpha(Dimension::Adequacy, None)?,
    })
}
