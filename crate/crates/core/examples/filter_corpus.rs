//! Corpus filtering with the numeral, duration, similarity and chrF++ predicates.

use std::collections::HashMap;

use cascade_eval::corpus::{apply_filters, FilterRecord, FilterSpec};

fn record(id: &str, text: &str, dur: f64, translation: &str, reference: &str) -> FilterRecord {
    FilterRecord {
        id: id.into(),
        text: text.into(),
        duration_s: Some(dur),
        translation: Some(translation.into()),
        reference: Some(reference.into()),
        extra: Default::default(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let records = vec![
        record("keep", "म घर जान्छु।", 3.2, "I go home.", "I go home."),
        record("digit", "म ५ बजे आउँछु।", 2.0, "I come at 5.", "I come at 5."),
        record("long", "म घर जान्छु।", 5.01, "I go home.", "I go home."),
        record("unlike", "म घर जान्छु।", 1.0, "I go home.", "I go home."),
        record("badmt", "म घर जान्छु।", 1.0, "banana", "I go home."),
    ];
    let sims: HashMap<String, f64> = records
        .iter()
        .map(|r| (r.id.clone(), if r.id == "unlike" { 0.80 } else { 0.93 }))
        .collect();
    let out = apply_filters(&records, &FilterSpec::standard_defaults(), Some(&sims))?;
    for d in &out.decisions {
        println!("{:<7} kept={:<5} reason={:?}", d.id, d.kept, d.reason);
    }
    Ok(())
}
