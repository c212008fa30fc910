//! End-to-end acceptance checks, one printed PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p cascade-eval --test acceptance -- --nocapture`.

mod common;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cascade_eval::adapters::{ContentCache, Fixture, StageAdapter, StageKind};
use cascade_eval::agreement::{krippendorff_alpha, AgreementError, DistanceMetric, RatingMatrix};
use cascade_eval::corpus::{apply_filters, build_restore_pairs, DropReason, FilterRecord, FilterSpec};
use cascade_eval::fsutil::to_json_lines;
use cascade_eval::metrics::{bleu, chrf_pp, corpus_cer, corpus_meteor, corpus_wer, MetricConfig};
use cascade_eval::report::Delta;
use cascade_eval::restore::{boundary_counts, train, BoundaryCounts, TrainConfig};
use cascade_eval::scenarios::{run_scenario, synthetic_asr_fixture, Noise, Preprocess, ScenarioConfig, StageTrace};
use cascade_eval::textcore::{degrade, fuse_words, normalize, strip_punctuation, DegradeMode, PunctClass};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let cfg = MetricConfig::default();
    let cases = 250;
    let mut worst = 0.0f64;
    for case in 0..cases {
        let n = rng.gen_range(1..=4);
        let hyps: Vec<String> = (0..n).map(|_| common::random_text(&mut rng, 8)).collect();
        let refs: Vec<Vec<String>> = (0..n)
            .map(|_| {
                let k = rng.gen_range(1..=2);
                (0..k).map(|_| common::random_nonempty(&mut rng, 8)).collect()
            })
            .collect();
        let firsts: Vec<String> = refs.iter().map(|r| r[0].clone()).collect();
        let pairs = [
            ("wer", corpus_wer(&hyps, &firsts).map(|s| s.value), common::to_f64(common::wer(&hyps, &firsts))),
            ("cer", corpus_cer(&hyps, &firsts).map(|s| s.value), common::to_f64(common::cer(&hyps, &firsts))),
            ("bleu", bleu(&hyps, &refs).map(|s| s.value), common::bleu(&hyps, &refs)),
            ("chrf++", chrf_pp(&hyps, &refs).map(|s| s.value), common::to_f64(common::chrf(&hyps, &refs))),
            (
                "meteor-exact",
                corpus_meteor(&hyps, &refs, &cfg).map(|s| s.value),
                common::to_f64(common::meteor(&hyps, &refs)),
            ),
        ];
        for (name, got, want) in pairs {
            let got = got.map_err(|e| format!("case {case} {name}: {e}"))?;
            let diff = (got - want).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-9, || {
                format!("case {case} {name}: {got} vs oracle {want}; hyps {hyps:?} refs {refs:?}")
            })?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{cases} cases x 5 metrics, max |diff| {worst:.1e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn delta_arithmetic() -> Outcome {
    let expect_delta = [
        (29.04, 23.13, "-5.91"),
        (28.48, 24.12, "-4.36"),
        (39.66, 28.40, "-11.26"),
        (31.48, 32.77, "+1.29"),
        (31.48, 36.38, "+4.90"),
    ];
    for (b, t, want) in expect_delta {
        let got = Delta::new(b, t).render().map_err(|e| e.to_string())?;
        ensure(got.starts_with(&format!("{want} (")), || format!("({b}, {t}) rendered {got}, want {want}"))?;
    }
    for (b, t, want) in [(29.04, 23.13, "-5.91 (-20.35%)"), (39.66, 28.40, "-11.26 (-28.39%)")] {
        let got = Delta::new(b, t).render().map_err(|e| e.to_string())?;
        ensure(got == want, || format!("({b}, {t}) rendered {got}, want {want}"))?;
    }
    Ok("punctuation-impact and scenario deltas exact; relative drops 20.35% and 28.39%".into())
}

/// Mixed Devanagari, Latin, combining marks, odd whitespace and punctuation.
fn fuzz_string(rng: &mut ChaCha8Rng) -> String {
    const POOL: &[&str] = &[
        "क", "ख", "न", "र", "ि", "ु", "्", "ं", "़", "ा", "ॉ", "\u{0915}\u{093C}", "\u{0958}", "।", "॥", "?", ",", ".",
        "!", ";", ":", "'", "\"", " ", "  ", "\t", "\n", "\u{00A0}", "\u{3000}", "\u{200D}", "\u{200C}", "e",
        "\u{0301}", "é", "A", "५", "7", "-", "(", "…", "→",
    ];
    let n = rng.gen_range(0..24);
    (0..n).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect()
}

fn perturbation_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pc = PunctClass::default();
    for i in 0..1000 {
        let raw = fuzz_string(&mut rng);
        let t = normalize(&raw);
        let fail = |what: &str| format!("string {i} {raw:?}: {what}");
        ensure(normalize(t.as_str()) == t, || fail("normalize not idempotent"))?;
        let s = strip_punctuation(&t, &pc);
        ensure(strip_punctuation(&s, &pc) == s, || fail("strip not idempotent"))?;
        let f = fuse_words(&t);
        ensure(fuse_words(&f) == f, || fail("fuse not idempotent"))?;
        ensure(strip_punctuation(&f, &pc) == fuse_words(&s), || fail("strip and fuse do not commute"))?;
        ensure(degrade(&t, DegradeMode::Fused, &pc) == fuse_words(&s), || fail("degrade(fused) mismatch"))?;
        ensure(!s.as_str().chars().any(|c| pc.contains(c)), || fail("mark survived strip"))?;
        ensure(!f.as_str().chars().any(char::is_whitespace), || fail("whitespace survived fuse"))?;
    }
    Ok("1000 fuzzed strings: idempotence, commutation, completeness all hold".into())
}

/// Words end in one of न/म/ल and never contain them elsewhere. A word ending
/// in ल takes a comma; the sentence ends in a danda.
fn rule_sentence(rng: &mut ChaCha8Rng) -> String {
    const INNER: &[char] = &['क', 'ख', 'ग', 'घ', 'च', 'छ', 'ज', 'ट', 'ठ', 'ड', 'त', 'द'];
    const END: &[char] = &['न', 'म', 'ल'];
    let words = rng.gen_range(2..=7);
    let mut out = String::new();
    for w in 0..words {
        let len = rng.gen_range(1..=4);
        let mut word: String = (0..len).map(|_| INNER[rng.gen_range(0..INNER.len())]).collect();
        let end = END[rng.gen_range(0..END.len())];
        word.push(end);
        out.push_str(&word);
        if w + 1 == words {
            out.push('।');
        } else if end == 'ल' {
            out.push_str(", ");
        } else {
            out.push(' ');
        }
    }
    out
}

fn restorer_f1() -> Result<(f64, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pc = PunctClass::default();
    let train_set: Vec<_> = (0..400).map(|_| normalize(&rule_sentence(&mut rng))).collect();
    let held_out: Vec<_> = (0..200).map(|_| normalize(&rule_sentence(&mut rng))).collect();
    let pairs = build_restore_pairs(&train_set, &DegradeMode::ALL, &pc);
    let model = train(&pairs, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let mut total = BoundaryCounts::default();
    for gold in &held_out {
        for (mode, preserve) in [(DegradeMode::Fused, false), (DegradeMode::PunctOnly, true)] {
            let input = degrade(gold, mode, &pc);
            let restored = model.restore(&input, preserve).map_err(|e| e.to_string())?;
            total = total.merge(boundary_counts(&restored, gold, &pc).map_err(|e| e.to_string())?);
        }
    }
    Ok((total.f1(), held_out.len()))
}

fn restorer_correctness() -> Outcome {
    let start = Instant::now();
    let (f1, n) = restorer_f1()?;
    ensure(f1 == 1.0, || format!("held-out boundary F1 {f1}"))?;

    let items = common::danda_corpus();
    let pc = PunctClass::default();
    let asr_fixture = synthetic_asr_fixture(&items, DegradeMode::PunctOnly, &pc, Noise::default()).map_err(|e| e.to_string())?;
    let transcripts: Vec<_> = items.iter().map(|i| i.ref_transcript.clone()).collect();
    let model = train(&build_restore_pairs(&transcripts, &DegradeMode::ALL, &pc), &TrainConfig::default())
        .map_err(|e| e.to_string())?;
    let asr = StageAdapter::fixture(StageKind::Asr, asr_fixture);
    let mt = StageAdapter::in_process(StageKind::Translate, common::dictionary_translator());
    let restore = StageAdapter::builtin_restorer(Arc::new(model), true);
    let refs: Vec<Vec<String>> = items.iter().map(|i| i.ref_translations.clone()).collect();
    let score = |cfg: ScenarioConfig| -> Result<f64, String> {
        let traces = run_scenario(&cfg, &items).map_err(|e| e.to_string())?;
        let hyps: Vec<String> = traces.into_iter().map(|t| t.hypothesis).collect();
        Ok(bleu(&hyps, &refs).map_err(|e| e.to_string())?.value)
    };
    let a = score(ScenarioConfig::a(asr.clone(), mt.clone()).map_err(|e| e.to_string())?)?;
    let c = score(ScenarioConfig::c(asr, restore, mt).map_err(|e| e.to_string())?)?;
    let delta = Delta::new(a, c).delta().map_err(|e| e.to_string())?;
    ensure(c > a, || format!("Scenario C BLEU {c:.2} not above A {a:.2}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "held-out F1 1.0 on {n} sentences; danda fixture BLEU A {a:.2}, C {c:.2}, delta {delta:+.2}; {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn differs_only_at_restore_input(b: &StageTrace, c: &StageTrace) -> bool {
    let mut b = b.clone();
    if b.stages.len() != 3 || c.stages.len() != 3 || b.stages[1].preprocessing != Preprocess::FuseSpaces {
        return false;
    }
    if b.stages[1].input == c.stages[1].input && b.stages[0].output.contains(' ') {
        return false;
    }
    b.stages[1].input = c.stages[1].input.clone();
    b.stages[1].preprocessing = c.stages[1].preprocessing;
    &b == c
}

fn scenario_machinery() -> Outcome {
    let items = common::danda_corpus();
    let pc = PunctClass::default();
    let asr = StageAdapter::fixture(
        StageKind::Asr,
        synthetic_asr_fixture(&items, DegradeMode::PunctOnly, &pc, Noise::default()).map_err(|e| e.to_string())?,
    );
    let restored = Fixture::from_entries(
        "restore-fixture",
        items.iter().map(|i| (i.id.clone(), i.ref_transcript.as_str().to_string())),
    );
    let restore = StageAdapter::fixture(StageKind::Restore, restored);
    let mt = StageAdapter::identity(StageKind::Translate);
    let b = run_scenario(&ScenarioConfig::b(asr.clone(), restore.clone(), mt.clone()).map_err(|e| e.to_string())?, &items)
        .map_err(|e| e.to_string())?;
    let c = run_scenario(&ScenarioConfig::c(asr.clone(), restore, mt).map_err(|e| e.to_string())?, &items)
        .map_err(|e| e.to_string())?;
    for (tb, tc) in b.iter().zip(&c) {
        ensure(differs_only_at_restore_input(tb, tc), || format!("item {}: B and C differ beyond restore input", tb.item_id))?;
        tb.check(&pc).map_err(|e| e.to_string())?;
        tc.check(&pc).map_err(|e| e.to_string())?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache = Arc::new(ContentCache::on_disk(dir.path()).map_err(|e| e.to_string())?);
    let echo = StageAdapter::external(StageKind::Translate, "sh", &["-c", "tail -n +2 | tac"], Duration::from_secs(30))
        .with_cache(cache);
    let cfg = ScenarioConfig::a(asr.clone(), echo).map_err(|e| e.to_string())?;
    let first = run_scenario(&cfg, &items).map_err(|e| e.to_string())?;
    let calls = cfg.stages[1].adapter.backend_calls();
    let second = run_scenario(&cfg, &items).map_err(|e| e.to_string())?;
    let bytes = |t: &[StageTrace]| to_json_lines(t).expect("traces serialize");
    ensure(bytes(&first) == bytes(&second), || "cached rerun not byte-identical".into())?;
    ensure(cfg.stages[1].adapter.backend_calls() == calls, || "cached rerun reached the external process".into())?;

    let plain = StageAdapter::external(StageKind::Translate, "sh", &["-c", "tail -n +2 | tac"], Duration::from_secs(30));
    let inputs: Vec<(String, String)> = items.iter().map(|i| (i.id.clone(), i.ref_transcript.as_str().to_string())).collect();
    let echoed = plain.run_stage(&inputs).map_err(|e| e.to_string())?;
    ensure(echoed == inputs, || "echo adapter did not restore input order".into())?;
    Ok(format!(
        "{} items: B/C differ only at restore input; cached rerun byte-identical with 0 new external calls; reversed echo matched by id",
        items.len()
    ))
}

fn krippendorff() -> Outcome {
    let perfect = RatingMatrix::new(
        vec!["r1".into(), "r2".into(), "r3".into()],
        (0..6).map(|i| format!("i{i}")).collect(),
        vec![(0..6).map(|i| Some(1 + i % 5)).collect(); 3],
        5,
    )
    .map_err(|e| e.to_string())?;
    for metric in [DistanceMetric::Ordinal, DistanceMetric::Nominal] {
        let a = krippendorff_alpha(&perfect, metric).map_err(|e| e.to_string())?.alpha;
        ensure(a == 1.0, || format!("perfect agreement gave {a}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut compared = 0;
    let mut worst = 0.0f64;
    while compared < 50 {
        let raters = rng.gen_range(2..=4);
        let items = rng.gen_range(2..=8);
        let cells: Vec<Vec<Option<u8>>> = (0..raters)
            .map(|_| (0..items).map(|_| (!rng.gen_bool(0.15)).then(|| rng.gen_range(1..=5))).collect())
            .collect();
        let m = RatingMatrix::new(
            (0..raters).map(|r| format!("r{r}")).collect(),
            (0..items).map(|i| format!("i{i}")).collect(),
            cells.clone(),
            5,
        )
        .map_err(|e| e.to_string())?;
        for (metric, ordinal) in [(DistanceMetric::Ordinal, true), (DistanceMetric::Nominal, false)] {
            let got = krippendorff_alpha(&m, metric);
            match (got, common::alpha(&cells, 5, ordinal)) {
                (Ok(a), Some(want)) => {
                    worst = worst.max((a.alpha - want).abs());
                    ensure((a.alpha - want).abs() <= 1e-9, || format!("{cells:?}: {} vs oracle {want}", a.alpha))?;
                }
                (Err(AgreementError::InsufficientData | AgreementError::DegenerateData), None) => {}
                (got, want) => return Err(format!("{cells:?}: {got:?} vs oracle {want:?}")),
            }
        }
        compared += 1;
    }

    let single = RatingMatrix::new(vec!["r1".into()], vec!["a".into(), "b".into()], vec![vec![Some(1), Some(4)]], 5)
        .map_err(|e| e.to_string())?;
    let r = krippendorff_alpha(&single, DistanceMetric::Ordinal);
    ensure(matches!(r, Err(AgreementError::InsufficientData)), || format!("single rater gave {r:?}"))?;
    let flat = RatingMatrix::new(
        vec!["r1".into(), "r2".into()],
        vec!["a".into(), "b".into()],
        vec![vec![Some(3), Some(3)]; 2],
        5,
    )
    .map_err(|e| e.to_string())?;
    let r = krippendorff_alpha(&flat, DistanceMetric::Ordinal);
    ensure(matches!(r, Err(AgreementError::DegenerateData)), || format!("zero variance gave {r:?}"))?;
    Ok(format!(
        "perfect = 1.0 exactly; 50 random matrices x 2 metrics, max |diff| {worst:.1e}; single rater and zero variance rejected"
    ))
}

fn record(id: &str, text: &str, duration: Option<f64>) -> FilterRecord {
    FilterRecord {
        id: id.into(),
        text: text.into(),
        duration_s: duration,
        translation: None,
        reference: None,
        extra: Default::default(),
    }
}

fn corpus_filters() -> Outcome {
    let mut records: Vec<FilterRecord> = ('\u{0966}'..='\u{096F}')
        .map(|d| record(&format!("digit-{}", d as u32), &format!("कक्षा {d} मा"), Some(2.0)))
        .collect();
    records.push(record("plain", "कक्षा मा", Some(2.0)));
    let spec = FilterSpec {
        drop_numerals: true,
        ..FilterSpec::default()
    };
    let out = apply_filters(&records, &spec, None).map_err(|e| e.to_string())?;
    ensure(out.dropped.len() == 10 && out.dropped.iter().all(|(_, r)| *r == DropReason::Numeral), || {
        format!("{} numeral records dropped", out.dropped.len())
    })?;
    ensure(out.kept.len() == 1 && out.kept[0].id == "plain", || "digit-free record not kept".into())?;

    let spec = FilterSpec {
        max_duration_s: Some(5.0),
        ..FilterSpec::default()
    };
    let out = apply_filters(&[record("five", "क", Some(5.0)), record("over", "क", Some(5.01))], &spec, None)
        .map_err(|e| e.to_string())?;
    ensure(out.decisions[0].kept && !out.decisions[1].kept, || format!("duration decisions {:?}", out.decisions))?;

    let spec = FilterSpec {
        min_similarity: Some(0.80),
        ..FilterSpec::default()
    };
    let sims: HashMap<String, f64> = [("at".to_string(), 0.80), ("above".to_string(), 0.801)].into();
    let out = apply_filters(&[record("at", "क", None), record("above", "क", None)], &spec, Some(&sims))
        .map_err(|e| e.to_string())?;
    ensure(!out.decisions[0].kept && out.decisions[1].kept, || format!("similarity decisions {:?}", out.decisions))?;
    Ok("U+0966..U+096F dropped; 5.0 s kept, 5.01 s dropped; similarity 0.80 dropped, 0.801 kept".into())
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("metric oracle equivalence", metric_oracles),
        ("delta arithmetic", delta_arithmetic),
        ("perturbation properties", perturbation_properties),
        ("restorer correctness", restorer_correctness),
        ("scenario machinery", scenario_machinery),
        ("krippendorff alpha", krippendorff),
        ("corpus filters", corpus_filters),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                println!("FAIL  {name}: {detail}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
