//! How much does translation lose when the transcript has no punctuation?
//! Translates references with and without punctuation and tabulates the drop.

use std::sync::Arc;

use cascade_eval::adapters::{StageAdapter, StageKind, TextStage};
use cascade_eval::corpus::{EvalItem, SentenceType};
use cascade_eval::metrics::{bleu, chrf_pp};
use cascade_eval::report::{delta_table, DeltaRow};
use cascade_eval::scenarios::run_punct_impact;
use cascade_eval::{normalize, PunctClass};

/// Translates clause by clause, but only when the clause ends in a danda;
/// unpunctuated text comes back untranslated.
struct ClauseTranslator;

impl TextStage for ClauseTranslator {
    fn identity(&self) -> String {
        "clause-translator".into()
    }

    fn process(&self, _id: &str, text: &str) -> Result<String, String> {
        let table = [("म घर जान्छु", "I go home."), ("ऊ स्कुल जान्छ", "He goes to school."), ("आज पानी पर्यो", "It rained today.")];
        Ok(text
            .split_inclusive('।')
            .map(|c| match c.trim().strip_suffix('।') {
                Some(body) => table.iter().find(|(np, _)| *np == body.trim()).map_or(body, |(_, en)| en).to_string(),
                None => c.trim().to_string(),
            })
            .collect::<Vec<_>>()
            .join(" "))
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let items: Vec<EvalItem> = [
        ("म घर जान्छु। ऊ स्कुल जान्छ।", "I go home. He goes to school."),
        ("आज पानी पर्यो। म घर जान्छु।", "It rained today. I go home."),
    ]
    .iter()
    .enumerate()
    .map(|(i, (src, tgt))| EvalItem {
        id: format!("s{i}"),
        ref_transcript: normalize(src),
        ref_translations: vec![tgt.to_string()],
        sentence_type: SentenceType::Statement,
        audio_path: None,
        duration_s: None,
        speaker_id: None,
        extra: Default::default(),
    })
    .collect();
    let mt = StageAdapter::in_process(StageKind::Translate, Arc::new(ClauseTranslator));
    let r = run_punct_impact(&items, &mt, &PunctClass::default())?;
    let refs: Vec<Vec<String>> = items.iter().map(|i| i.ref_translations.clone()).collect();
    let text = |v: &[cascade_eval::adapters::IdText]| v.iter().map(|x| x.text.clone()).collect::<Vec<_>>();
    let (with, without) = (text(&r.punctuated), text(&r.unpunctuated));
    let rows = vec![
        DeltaRow { label: "toy".into(), metric: "BLEU".into(), baseline: bleu(&with, &refs)?.value, treated: bleu(&without, &refs)?.value },
        DeltaRow { label: "toy".into(), metric: "chrF++".into(), baseline: chrf_pp(&with, &refs)?.value, treated: chrf_pp(&without, &refs)?.value },
    ];
    print!("{}", delta_table("impact", &rows)?.to_markdown());
    Ok(())
}
