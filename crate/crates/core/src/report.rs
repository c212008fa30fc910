//! Score tables and condition deltas.
//!
//! Values stay at full precision until rendering, which rounds half-to-even
//! in decimal. Deltas are always recomputed from the two operands.
//!
//! Every table is written three ways: `<name>.records` (one JSON object per
//! line, operands only), `<name>.csv` and `<name>.md`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rust_decimal::prelude::FromPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::agreement::{AgreementReport, DimensionAlpha, SystemRating};
use crate::corpus::SentenceType;
use crate::fsutil::{atomic_write, to_json_lines};
use crate::metrics::{CorpusScore, Metric};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("baseline is zero; relative change undefined")]
    ZeroBaseline,
    #[error("no baseline scenario A among {0:?}")]
    MissingBaseline(Vec<String>),
    #[error("unknown or missing sentence type {0:?}")]
    UnknownType(String),
    #[error("value {0} cannot be rendered")]
    NotRenderable(f64),
    #[error("scenario {scenario:?} has no {metric} score")]
    MissingMetric { scenario: String, metric: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The decimal a float prints as (shortest round-trip form).
pub fn to_decimal(x: f64) -> Result<Decimal, ReportError> {
    if !x.is_finite() {
        return Err(ReportError::NotRenderable(x));
    }
    Decimal::from_str(&x.to_string())
        .ok()
        .or_else(|| Decimal::from_f64(x))
        .ok_or(ReportError::NotRenderable(x))
}

fn round(d: Decimal, places: u32) -> Decimal {
    let r = d.round_dp_with_strategy(places, RoundingStrategy::MidpointNearestEven);
    if r.is_zero() {
        // no "-0.00"
        Decimal::ZERO
    } else {
        r
    }
}

fn fixed(d: Decimal, places: u32) -> String {
    format!("{:.*}", places as usize, round(d, places))
}

fn signed(d: Decimal, places: u32) -> String {
    let r = round(d, places);
    if r > Decimal::ZERO {
        format!("+{:.*}", places as usize, r)
    } else {
        format!("{:.*}", places as usize, r)
    }
}

pub fn render_fixed(x: f64, places: u32) -> Result<String, ReportError> {
    Ok(fixed(to_decimal(x)?, places))
}

pub fn render_signed(x: f64, places: u32) -> Result<String, ReportError> {
    Ok(signed(to_decimal(x)?, places))
}

/// A baseline/treated pair; delta and relative change derive from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub baseline: f64,
    pub treated: f64,
}

impl Delta {
    pub fn new(baseline: f64, treated: f64) -> Self {
        Self { baseline, treated }
    }

    /// `treated - baseline`, exact in decimal.
    pub fn delta(&self) -> Result<Decimal, ReportError> {
        Ok(to_decimal(self.treated)? - to_decimal(self.baseline)?)
    }

    /// `delta / baseline` in percent.
    pub fn relative_pct(&self) -> Result<Decimal, ReportError> {
        let base = to_decimal(self.baseline)?;
        if base.is_zero() {
            return Err(ReportError::ZeroBaseline);
        }
        Ok(self.delta()? / base * Decimal::ONE_HUNDRED)
    }

    /// `-5.91 (-20.35%)`; the parenthesised part is dropped for a zero baseline.
    pub fn render(&self) -> Result<String, ReportError> {
        let d = signed(self.delta()?, 2);
        match self.relative_pct() {
            Ok(r) => Ok(format!("{d} ({}%)", signed(r, 2))),
            Err(ReportError::ZeroBaseline) => Ok(d),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub text: String,
    pub bold: bool,
}

impl Cell {
    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            bold: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub records: Vec<serde_json::Value>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory csv");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.text.as_str())).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 input")
    }

    pub fn to_markdown(&self) -> String {
        let esc = |s: &str| s.replace('|', "\\|");
        let mut out = String::new();
        out.push_str(&format!("| {} |\n", self.columns.iter().map(|c| esc(c)).collect::<Vec<_>>().join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(self.columns.len())));
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| if c.bold { format!("**{}**", esc(&c.text)) } else { esc(&c.text) })
                .collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
        out
    }

    pub fn to_records(&self) -> Vec<u8> {
        to_json_lines(&self.records).expect("json values serialize")
    }

    /// Writes `<dir>/<name>.{records,csv,md}` atomically; returns the paths.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ReportError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let outputs = [
            ("records", self.to_records()),
            ("csv", self.to_csv().into_bytes()),
            ("md", self.to_markdown().into_bytes()),
        ];
        let mut paths = Vec::new();
        for (ext, bytes) in outputs {
            let path = dir.join(format!("{}.{ext}", self.name));
            atomic_write(&path, &bytes).map_err(|source| ReportError::Io {
                path: path.clone(),
                source,
            })?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// One line of a delta table, e.g. a test set's BLEU with and without punctuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub label: String,
    pub metric: String,
    pub baseline: f64,
    pub treated: f64,
}

/// Columns: label, metric, baseline, treated, delta, relative_pct.
pub fn delta_table(name: &str, rows: &[DeltaRow]) -> Result<Table, ReportError> {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let d = Delta::new(r.baseline, r.treated);
        let rel = match d.relative_pct() {
            Ok(x) => signed(x, 2),
            Err(ReportError::ZeroBaseline) => "—".to_string(),
            Err(e) => return Err(e),
        };
        out.push(vec![
            Cell::plain(&r.label),
            Cell::plain(&r.metric),
            Cell::plain(render_fixed(r.baseline, 2)?),
            Cell::plain(render_fixed(r.treated, 2)?),
            Cell::plain(signed(d.delta()?, 2)),
            Cell::plain(rel),
        ]);
    }
    Ok(Table {
        name: name.to_string(),
        columns: ["label", "metric", "baseline", "treated", "delta", "relative_pct"]
            .map(String::from)
            .to_vec(),
        rows: out,
        records: rows.iter().map(|r| serde_json::to_value(r).expect("row serializes")).collect(),
    })
}

/// A, B, C first, anything else after in lexicographic order.
fn scenario_rank(label: &str) -> (usize, &str) {
    match label {
        "A" => (0, label),
        "B" => (1, label),
        "C" => (2, label),
        _ => (3, label),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScores {
    pub scenario: String,
    pub bleu: f64,
    pub chrf_pp: f64,
}

impl ScenarioScores {
    pub fn from_scores(scenario: &str, scores: &[CorpusScore]) -> Result<Self, ReportError> {
        let get = |m: Metric| {
            scores
                .iter()
                .find(|s| s.metric == m)
                .map(|s| s.value)
                .ok_or_else(|| ReportError::MissingMetric {
                    scenario: scenario.to_string(),
                    metric: m.name(),
                })
        };
        Ok(Self {
            scenario: scenario.to_string(),
            bleu: get(Metric::Bleu)?,
            chrf_pp: get(Metric::ChrfPp)?,
        })
    }
}

/// Columns: scenario, BLEU, chrF++, ΔBLEU (against scenario A).
pub fn scenario_table(runs: &[ScenarioScores]) -> Result<Table, ReportError> {
    let mut runs: Vec<&ScenarioScores> = runs.iter().collect();
    runs.sort_by(|a, b| scenario_rank(&a.scenario).cmp(&scenario_rank(&b.scenario)));
    let base = runs
        .iter()
        .find(|r| r.scenario == "A")
        .ok_or_else(|| ReportError::MissingBaseline(runs.iter().map(|r| r.scenario.clone()).collect()))?;
    let mut rows = Vec::with_capacity(runs.len());
    for r in &runs {
        let delta = if r.scenario == "A" {
            "—".to_string()
        } else {
            signed(Delta::new(base.bleu, r.bleu).delta()?, 2)
        };
        rows.push(vec![
            Cell::plain(&r.scenario),
            Cell::plain(render_fixed(r.bleu, 2)?),
            Cell::plain(render_fixed(r.chrf_pp, 2)?),
            Cell::plain(delta),
        ]);
    }
    Ok(Table {
        name: "scenarios".into(),
        columns: ["scenario", "BLEU", "chrF++", "ΔBLEU"].map(String::from).to_vec(),
        rows,
        records: runs.iter().map(|r| serde_json::to_value(r).expect("row serializes")).collect(),
    })
}

/// One observation for a per-sentence-type table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedScore {
    pub scenario: String,
    pub sentence_type: String,
    pub measure: String,
    pub value: f64,
}

/// Row order of the type breakdown.
pub const TYPE_ROW_ORDER: [SentenceType; 5] = [
    SentenceType::Statement,
    SentenceType::Command,
    SentenceType::Question,
    SentenceType::NamedEntity,
    SentenceType::Complex,
];

/// Fluency and adequacy observations from ratings; each record needs a type.
pub fn typed_scores(records: &[SystemRating]) -> Result<Vec<TypedScore>, ReportError> {
    let mut out = Vec::with_capacity(records.len() * 2);
    for r in records {
        let t = r
            .sentence_type
            .ok_or_else(|| ReportError::UnknownType(format!("<none> on item {}", r.item_id)))?;
        for (measure, v) in [("Adequacy", r.adequacy), ("Fluency", r.fluency)] {
            out.push(TypedScore {
                scenario: r.system.clone(),
                sentence_type: t.as_str().to_string(),
                measure: measure.to_string(),
                value: f64::from(v),
            });
        }
    }
    Ok(out)
}

/// Per-type, per-measure means with one column per scenario.
///
/// The row maximum is bolded; values that tie at the displayed precision
/// are all bolded.
pub fn type_breakdown(scores: &[TypedScore], places: u32) -> Result<Table, ReportError> {
    let mut groups: BTreeMap<(usize, &str), BTreeMap<(usize, &str), (f64, usize)>> = BTreeMap::new();
    let mut scenarios: Vec<&str> = Vec::new();
    for s in scores {
        let t = SentenceType::from_str(&s.sentence_type).map_err(|_| ReportError::UnknownType(s.sentence_type.clone()))?;
        let row = TYPE_ROW_ORDER.iter().position(|x| *x == t).expect("all types ordered");
        let acc = groups
            .entry((row, s.measure.as_str()))
            .or_default()
            .entry(scenario_rank(&s.scenario))
            .or_insert((0.0, 0));
        acc.0 += s.value;
        acc.1 += 1;
        if !scenarios.contains(&s.scenario.as_str()) {
            scenarios.push(&s.scenario);
        }
    }
    scenarios.sort_by_key(|s| scenario_rank(s));
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for ((row, measure), cells) in &groups {
        let t = TYPE_ROW_ORDER[*row];
        let mut means: Vec<Option<(Decimal, f64, usize)>> = Vec::with_capacity(scenarios.len());
        for sc in &scenarios {
            means.push(match cells.get(&scenario_rank(sc)) {
                Some(&(sum, n)) => {
                    let m = sum / n as f64;
                    Some((round(to_decimal(m)?, places), m, n))
                }
                None => None,
            });
        }
        let best = means.iter().flatten().map(|m| m.0).max();
        let mut line = vec![Cell::plain(t.label()), Cell::plain(*measure)];
        for (sc, m) in scenarios.iter().zip(&means) {
            match m {
                Some((shown, mean, n)) => {
                    let bold = Some(*shown) == best;
                    line.push(Cell {
                        text: fixed(*shown, places),
                        bold,
                    });
                    records.push(json!({
                        "sentence_type": t.as_str(),
                        "measure": measure,
                        "scenario": sc,
                        "mean": mean,
                        "n": n,
                        "row_max": bold,
                    }));
                }
                None => line.push(Cell::plain("—")),
            }
        }
        rows.push(line);
    }
    let mut columns = vec!["sentence_type".to_string(), "measure".to_string()];
    columns.extend(scenarios.iter().map(|s| s.to_string()));
    Ok(Table {
        name: "types".into(),
        columns,
        rows,
        records,
    })
}

fn alpha_cell(a: &DimensionAlpha) -> Result<String, ReportError> {
    match a.alpha {
        Some(x) => render_fixed(x, 3),
        None => Ok("—".into()),
    }
}

/// Columns: scenario, fluency, alpha_fluency, adequacy, alpha_adequacy.
pub fn human_eval_table(report: &AgreementReport) -> Result<Table, ReportError> {
    let mut systems: Vec<(&String, _)> = report.per_system.iter().collect();
    systems.sort_by(|a, b| scenario_rank(a.0).cmp(&scenario_rank(b.0)));
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (name, s) in systems {
        rows.push(vec![
            Cell::plain(name.as_str()),
            Cell::plain(render_fixed(s.means.fluency, 3)?),
            Cell::plain(alpha_cell(&s.fluency_alpha)?),
            Cell::plain(render_fixed(s.means.adequacy, 3)?),
            Cell::plain(alpha_cell(&s.adequacy_alpha)?),
        ]);
        records.push(json!({
            "scenario": name,
            "fluency": s.means.fluency,
            "alpha_fluency": s.fluency_alpha.alpha,
            "adequacy": s.means.adequacy,
            "alpha_adequacy": s.adequacy_alpha.alpha,
            "n": s.means.n,
        }));
    }
    Ok(Table {
        name: "human_eval".into(),
        columns: ["scenario", "fluency", "alpha_fluency", "adequacy", "alpha_adequacy"]
            .map(String::from)
            .to_vec(),
        rows,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    #[test]
    fn published_deltas() {
        let a = Delta::new(29.04, 23.13);
        assert_eq!(a.delta().unwrap(), d("-5.91"));
        assert_eq!(a.render().unwrap(), "-5.91 (-20.35%)");
        assert_eq!(Delta::new(39.66, 28.40).render().unwrap(), "-11.26 (-28.39%)");
        assert_eq!(Delta::new(31.48, 36.38).render().unwrap(), "+4.90 (+15.57%)");
    }

    #[test]
    fn zero_baseline() {
        let z = Delta::new(0.0, 1.5);
        assert!(matches!(z.relative_pct(), Err(ReportError::ZeroBaseline)));
        assert_eq!(z.render().unwrap(), "+1.50");
        assert_eq!(Delta::new(3.0, 3.0).render().unwrap(), "0.00 (0.00%)");
    }

    #[test]
    fn half_even() {
        assert_eq!(render_fixed(0.125, 2).unwrap(), "0.12");
        assert_eq!(render_fixed(0.135, 2).unwrap(), "0.14");
        assert_eq!(render_fixed(-0.001, 2).unwrap(), "0.00");
        assert_eq!(render_signed(2.5, 0).unwrap(), "+2");
        assert!(render_fixed(f64::NAN, 2).is_err());
    }

    fn table8() -> Vec<ScenarioScores> {
        [("C", 36.38, 54.56), ("A", 31.48, 51.84), ("B", 32.77, 51.05)]
            .map(|(s, b, c)| ScenarioScores {
                scenario: s.into(),
                bleu: b,
                chrf_pp: c,
            })
            .to_vec()
    }

    #[test]
    fn scenario_table_published_values() {
        let t = scenario_table(&table8()).unwrap();
        let deltas: Vec<&str> = t.rows.iter().map(|r| r[3].text.as_str()).collect();
        assert_eq!(deltas, ["—", "+1.29", "+4.90"]);
        let mut rev = table8();
        rev.reverse();
        assert_eq!(scenario_table(&rev).unwrap(), t);
        assert!(matches!(
            scenario_table(&table8()[..1]),
            Err(ReportError::MissingBaseline(_))
        ));
        let only_a = scenario_table(&table8()[1..2]).unwrap();
        assert!(only_a.rows.iter().all(|r| r[3].text == "—"));
    }

    #[test]
    fn table_formats() {
        let t = scenario_table(&table8()).unwrap();
        assert_eq!(
            t.to_csv(),
            "scenario,BLEU,chrF++,ΔBLEU\nA,31.48,51.84,—\nB,32.77,51.05,+1.29\nC,36.38,54.56,+4.90\n"
        );
        let md = t.to_markdown();
        assert!(md.starts_with("| scenario | BLEU | chrF++ | ΔBLEU |\n|---|---|---|---|\n"));
        let dir = tempfile::tempdir().unwrap();
        let paths = t.write(dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(dir.path().join("scenarios.records").exists());
    }

    #[test]
    fn breakdown_bolds_max_and_ties() {
        let mut scores = Vec::new();
        for (sc, v) in [("A", 3.269), ("B", 3.887), ("C", 3.269)] {
            scores.push(TypedScore {
                scenario: sc.into(),
                sentence_type: "named_entity".into(),
                measure: "Adequacy".into(),
                value: v,
            });
        }
        let t = type_breakdown(&scores, 3).unwrap();
        assert_eq!(t.rows[0][0].text, "Named Entities");
        let bold: Vec<bool> = t.rows[0][2..].iter().map(|c| c.bold).collect();
        assert_eq!(bold, [false, true, false]);

        for s in &mut scores {
            s.value = 3.5;
        }
        let t = type_breakdown(&scores, 3).unwrap();
        assert!(t.rows[0][2..].iter().all(|c| c.bold));

        scores[0].sentence_type = "exclamation".into();
        assert!(matches!(type_breakdown(&scores, 3), Err(ReportError::UnknownType(_))));
    }
}
