//! Scenarios A, B and C over a toy corpus: simulated ASR output without
//! punctuation, the builtin restorer, and a word-for-word translator that
//! only forms sentences at a danda.

use std::sync::Arc;

use cascade_eval::adapters::{StageAdapter, StageKind, TextStage};
use cascade_eval::corpus::{build_restore_pairs, EvalItem, SentenceType};
use cascade_eval::metrics::{bleu, chrf_pp};
use cascade_eval::report::{scenario_table, ScenarioScores};
use cascade_eval::restore::{train, TrainConfig};
use cascade_eval::scenarios::{
    run_scenario, synthetic_asr_fixture, write_run_dir, Noise, RunRecord, ScenarioConfig,
};
use cascade_eval::{normalize, DegradeMode, PunctClass};

const CORPUS: &[(&str, &str)] = &[
    ("म घर जान्छु। ऊ स्कुल जान्छ।", "I go home . He goes school ."),
    ("हामी भात खान्छौं। आज पानी पर्यो।", "We eat rice . Today rain fell ."),
    ("ऊ घर जान्छ। म स्कुल जान्छु।", "He goes home . I go school ."),
];

struct Toy;

impl TextStage for Toy {
    fn identity(&self) -> String {
        "toy-dictionary".into()
    }

    fn process(&self, _id: &str, text: &str) -> Result<String, String> {
        const DICT: &[(&str, &str)] = &[
            ("म", "i"), ("घर", "home"), ("जान्छु", "go"), ("ऊ", "he"), ("स्कुल", "school"),
            ("जान्छ", "goes"), ("हामी", "we"), ("भात", "rice"), ("खान्छौं", "eat"),
            ("आज", "today"), ("पानी", "rain"), ("पर्यो", "fell"),
        ];
        let word = |w: &str| DICT.iter().find(|(n, _)| *n == w).map_or(w, |(_, e)| *e).to_string();
        let mut out = Vec::new();
        for (i, clause) in text.split('।').enumerate() {
            let words: Vec<String> = clause.split_whitespace().map(word).collect();
            if words.is_empty() {
                continue;
            }
            let s = words.join(" ");
            // a clause is a sentence only if a danda closed it
            let closed = text.split('।').count() > i + 1;
            out.push(if closed {
                let mut c = s.chars();
                let first = c.next().unwrap().to_uppercase().collect::<String>();
                format!("{first}{} .", c.as_str())
            } else {
                s
            });
        }
        Ok(out.join(" "))
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pc = PunctClass::default();
    let items: Vec<EvalItem> = CORPUS
        .iter()
        .enumerate()
        .map(|(i, (src, tgt))| EvalItem {
            id: format!("utt{i}"),
            ref_transcript: normalize(src),
            ref_translations: vec![tgt.to_string()],
            sentence_type: SentenceType::Statement,
            audio_path: None,
            duration_s: None,
            speaker_id: None,
            extra: Default::default(),
        })
        .collect();
    let sentences: Vec<_> = items.iter().map(|i| i.ref_transcript.clone()).collect();
    let model = Arc::new(train(&build_restore_pairs(&sentences, &DegradeMode::ALL, &pc), &TrainConfig::default())?);

    let asr = || -> Result<StageAdapter, Box<dyn std::error::Error>> {
        let fx = synthetic_asr_fixture(&items, DegradeMode::PunctOnly, &pc, Noise::default())?;
        Ok(StageAdapter::fixture(StageKind::Asr, fx))
    };
    let mt = || StageAdapter::in_process(StageKind::Translate, Arc::new(Toy));
    let restorer = || StageAdapter::builtin_restorer(model.clone(), true);
    let configs = [
        ("A", ScenarioConfig::a(asr()?, mt())?),
        ("B", ScenarioConfig::b(asr()?, restorer(), mt())?),
        ("C", ScenarioConfig::c(asr()?, restorer(), mt())?),
    ];

    let root = std::env::temp_dir().join("cascade-scenarios");
    let refs: Vec<Vec<String>> = items.iter().map(|i| i.ref_translations.clone()).collect();
    let mut scores = Vec::new();
    for (name, cfg) in &configs {
        let traces = run_scenario(cfg, &items)?;
        println!("{name}: {}", traces[0].hypothesis);
        let hyps: Vec<&str> = traces.iter().map(|t| t.hypothesis.as_str()).collect();
        scores.push(ScenarioScores {
            scenario: name.to_string(),
            bleu: bleu(&hyps, &refs)?.value,
            chrf_pp: chrf_pp(&hyps, &refs)?.value,
        });
        write_run_dir(root.join(name), &RunRecord { snapshot: cfg.snapshot(items.len()), traces })?;
    }
    println!("\n{}", scenario_table(&scores)?.to_markdown());
    println!("run directories under {}", root.display());
    Ok(())
}
