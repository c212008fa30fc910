//! A blind rating session end to end, without the HTTP layer.
//!
//! Pass `--serve` to expose the same store on 127.0.0.1:8787 instead.

use std::sync::Arc;

use cascade_annotate::{NextItem, SessionStore, SystemRun};
use cascade_eval::adapters::IdText;
use cascade_eval::corpus::{EvalItem, SentenceType};
use cascade_eval::normalize;
use cascade_eval::report::human_eval_table;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let manifest: Vec<EvalItem> = ["म घर जान्छु।", "के तिमी आउँछौ?", "ढोका बन्द गर।"]
        .iter()
        .zip([SentenceType::Statement, SentenceType::Question, SentenceType::Command])
        .enumerate()
        .map(|(i, (src, t))| EvalItem {
            id: format!("s{i}"),
            ref_transcript: normalize(src),
            ref_translations: vec![["I go home.", "Will you come?", "Close the door."][i].into()],
            sentence_type: t,
            audio_path: None,
            duration_s: None,
            speaker_id: None,
            extra: Default::default(),
        })
        .collect();
    let run = |label: &str, outs: [&str; 3]| SystemRun {
        label: label.into(),
        hypotheses: outs.iter().enumerate().map(|(i, t)| IdText { id: format!("s{i}"), text: t.to_string() }).collect(),
    };
    let runs = vec![
        run("A", ["i go home", "you come", "door close"]),
        run("C", ["I go home.", "Will you come?", "Close the door."]),
    ];
    let store = SessionStore::in_memory();
    let (id, n) = store.create(Some("demo"), &runs, &manifest, 42)?;
    println!("session {id}: {n} items");

    if std::env::args().any(|a| a == "--serve") {
        let rt = tokio::runtime::Runtime::new()?;
        return Ok(rt.block_on(cascade_annotate::server::serve(
            "127.0.0.1:8787".parse()?,
            Arc::new(store),
            None,
        ))?);
    }

    // two raters who prefer punctuated output and mostly agree
    for rater in ["ann", "bob"] {
        while let NextItem::Item(it) = store.next_item(&id, rater)? {
            let good = it.hypothesis_text.ends_with(['.', '?']);
            let adequacy = if good { 4 } else { 1 } + (it.hypothesis_text.len() % 2) as i64;
            let fluency = if rater == "bob" && it.position == 0 { adequacy + 1 } else { adequacy };
            println!("{rater} #{} {:<16} fluency {fluency} adequacy {adequacy}", it.position, it.hypothesis_text);
            store.submit(&id, rater, &it.item_key, fluency, adequacy)?;
        }
    }
    let export = store.finalize(&id)?;
    println!("\n{}", human_eval_table(&export.report)?.to_markdown());
    Ok(())
}
