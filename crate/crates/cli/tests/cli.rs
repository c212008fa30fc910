use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(path: &Path, body: &str) -> String {
    std::fs::write(path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn report_delta_renders_table_six_operands() {
    let o = cascade(&["report", "delta", "--baseline", "29.04", "--treated", "23.13"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "-5.91 (-20.35%)\n");

    let o = cascade(&["report", "delta", "--baseline", "39.66", "--treated", "28.40", "--format", "csv"]);
    assert_eq!(stdout(&o), "label,metric,baseline,treated,delta,relative_pct\n-,BLEU,39.66,28.40,-11.26,-28.39\n");
}

#[test]
fn usage_errors_exit_two() {
    let o = cascade(&["score", "--metric", "rouge", "--hyp", "h", "--ref", "r"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wer, cer, bleu, chrf, meteor"), "{}", stderr(&o));

    let o = cascade(&["pipeline", "run", "--scenario", "D", "--manifest", "m", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("A, B, C, custom"), "{}", stderr(&o));

    let o = cascade(&["score", "--metric", "bleu", "--hyp", "/no/such/file", "--ref", "/no/such/file"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--hyp"), "{}", stderr(&o));

    assert_eq!(cascade(&["score", "--help"]).status.code(), Some(0));
}

#[test]
fn score_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(&dir.path().join("x.txt"), "the cat sat on the mat\na dog .\n");
    let o = cascade(&["score", "--metric", "bleu", "--hyp", &f, "--ref", &f]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "100.00\n");

    let many = |jobs: &str| {
        let o = cascade(&[
            "score", "--metric", "wer", "--metric", "chrf", "--metric", "meteor", "--hyp", &f, "--ref", &f, "--jobs",
            jobs, "--format", "records",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o)
    };
    assert_eq!(many("1"), many("4"));
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.toml"), "format = \"csv\"\n[report.delta]\nbaseline = 29.04\ntreated = 23.13\n");
    let o = cascade(&["report", "delta", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).ends_with("-,BLEU,29.04,23.13,-5.91,-20.35\n"), "{}", stdout(&o));
    // explicit flags win
    let o = cascade(&["report", "delta", "--config", &cfg, "--treated", "24.12", "--baseline", "28.48", "--format", "md"]);
    assert!(stdout(&o).contains("| -4.36 | -15.31 |"), "{}", stdout(&o));
}

fn manifest(dir: &Path) -> String {
    let sentences = [
        ("आज म ठूलो घर जान्छु। तिमी सानो किताब पढ्छौ।", "Today I go to a big house. You read a small book."),
        ("म धेरै तातो चिया खान्छु। तिमी घर जान्छौ।", "I drink very hot tea. You go home."),
        ("आज घर ठूलो छ। किताब सानो छ।", "Today the house is big. The book is small."),
    ];
    let mut body = String::new();
    for (i, (src, tgt)) in sentences.iter().enumerate() {
        let rec = json!({
            "id": format!("u{i}"),
            "ref_transcript": src,
            "ref_translations": [tgt],
            "sentence_type": "statement",
        });
        body.push_str(&rec.to_string());
        body.push('\n');
    }
    write(&dir.join("manifest.jsonl"), &body)
}

#[test]
fn missing_fixture_names_item_and_stage() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path());
    let fx = write(&dir.path().join("mt.jsonl"), "{\"id\":\"u0\",\"text\":\"x\"}\n{\"id\":\"u2\",\"text\":\"y\"}\n");
    let out = dir.path().join("run");
    let o = cascade(&[
        "pipeline", "run", "--scenario", "A", "--manifest", &m, "--out", out.to_str().unwrap(), "--asr",
        "synthetic:punct-only", "--translate", &format!("fixture:{fx}"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("\"u1\"") && err.contains("translate"), "{err}");
    assert!(err.starts_with("error: scenarios:"), "{err}");
}

#[test]
fn restore_and_scenarios_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let m = manifest(d);
    // restorer trained on the manifest's own transcripts
    let text: Vec<String> = std::fs::read_to_string(&m)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["ref_transcript"].as_str().unwrap().to_string())
        .collect();
    let sents = write(&d.join("sents.txt"), &(text.join("\n") + "\n"));
    let pairs = d.join("pairs.jsonl");
    let model = d.join("restorer.model");
    let p = pairs.to_str().unwrap();
    let mp = model.to_str().unwrap();
    let o = cascade(&["build-restore-data", "--input", &sents, "--output", p]);
    assert_eq!(stdout(&o), "6 pairs from 3 sentences\n", "{}", stderr(&o));
    let o = cascade(&["restore", "train", "--pairs", p, "--model", mp]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = cascade(&["restore", "eval", "--model", mp, "--pairs", p]);
    assert!(stdout(&o).starts_with("boundary F1 1.0000"), "{}", stdout(&o));

    let stripped = d.join("stripped.txt");
    let o = cascade(&["perturb", "--input", &sents, "--mode", "punct-only", "--output", stripped.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = cascade(&["restore", "apply", "--model", mp, "--input", stripped.to_str().unwrap(), "--preserve-spaces"]);
    assert_eq!(stdout(&o), text.join("\n") + "\n");

    // the transcript is the "translation": scores measure restoration alone
    let mut runs = Vec::new();
    for sc in ["A", "B", "C"] {
        let out = d.join(format!("run-{sc}"));
        let mut args = vec![
            "pipeline", "run", "--scenario", sc, "--manifest", &m, "--out", out.to_str().unwrap(), "--asr",
            "synthetic:punct-only", "--translate", "identity",
        ];
        let restore = format!("builtin:{mp}");
        if sc != "A" {
            args.extend(["--restore", &restore]);
        }
        let o = cascade(&args);
        assert_eq!(o.status.code(), Some(0), "{sc}: {}", stderr(&o));
        for f in ["config.json", "traces.jsonl", "hypotheses.jsonl"] {
            assert!(out.join(f).exists());
        }
        runs.push(out);
    }
    let mf = d.join("m2.jsonl");
    let body: String = text
        .iter()
        .enumerate()
        .map(|(i, t)| {
            json!({"id": format!("u{i}"), "ref_transcript": t, "ref_translations": [t], "sentence_type": "statement"})
                .to_string()
                + "\n"
        })
        .collect();
    write(&mf, &body);
    let mut args = vec!["report", "scenarios", "--manifest", mf.to_str().unwrap(), "--format", "csv"];
    for r in &runs {
        args.extend(["--run", r.to_str().unwrap()]);
    }
    let o = cascade(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scenario,BLEU,chrF++,ΔBLEU");
    assert!(lines[2].starts_with("B,100.00,100.00,+"), "{csv}");
    assert!(lines[3].starts_with("C,100.00,100.00,+"), "{csv}");
    assert!(lines[1].starts_with("A,") && lines[1].ends_with(",—"), "{csv}");
}

#[test]
fn alpha_and_types_from_ratings() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::new();
    for item in 0..6 {
        for rater in ["r1", "r2"] {
            for (sys, bump) in [("A", 0), ("C", 1)] {
                let v = 1 + (item + bump) % 4;
                let t = ["statement", "question"][item % 2];
                body.push_str(
                    &json!({"system": sys, "item_id": format!("i{item}"), "rater": rater, "sentence_type": t,
                            "fluency": v, "adequacy": v})
                    .to_string(),
                );
                body.push('\n');
            }
        }
    }
    let r = write(&dir.path().join("ratings.jsonl"), &body);
    let o = cascade(&["alpha", "--ratings", &r, "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.starts_with("scenario,fluency,alpha_fluency,adequacy,alpha_adequacy\n"), "{csv}");
    // A rates 1,2,3,4,1,2 and C one step higher modulo 4
    assert!(csv.contains("A,2.167,1.000,2.167,1.000\nC,2.500,1.000,2.500,1.000"), "{csv}");

    let out = dir.path().join("tables");
    let o = cascade(&["report", "types", "--ratings", &r, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for ext in ["records", "csv", "md"] {
        assert!(out.join(format!("types.{ext}")).exists());
    }
}
