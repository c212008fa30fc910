use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use cascade_annotate::{runs_from_dirs, SessionStore};
use cascade_eval::adapters::{parse_backing, Backing, ContentCache, StageAdapter, StageKind};
use cascade_eval::agreement::{agreement_report, SystemRating};
use cascade_eval::corpus::{apply_filters, build_restore_pairs, load_manifest, EvalItem, FilterRecord, FilterSpec};
use cascade_eval::fsutil::{atomic_write, read_json_lines, write_json_lines};
use cascade_eval::metrics::{score_corpus, CorpusScore, Metric, MetricConfig};
use cascade_eval::report::{
    delta_table, human_eval_table, render_fixed, scenario_table, type_breakdown, typed_scores, Cell, Delta, DeltaRow,
    ScenarioScores, Table,
};
use cascade_eval::restore::{boundary_counts, train, BoundaryCounts, BoundaryModel, RestorePair, TrainConfig};
use cascade_eval::scenarios::{
    add_noise, run_punct_impact, run_scenario, synthetic_asr_fixture, write_run_dir, Noise, Preprocess, RunRecord,
    ScenarioConfig, ScenarioStage,
};
use cascade_eval::textcore::{degrade, fuse_words};
use cascade_eval::{normalize, DegradeMode, PunctClass};

use crate::{
    need, AlphaArgs, AnnotateCmd, BuildRestoreArgs, Cli, CliError, Cmd, Ctx, FilterArgs, Format, ImpactArgs,
    PerturbArgs, PerturbMode, PipelineCmd, ReportCmd, RestoreCmd, RunArgs, ScenarioArg, ScoreArgs,
};

pub(crate) fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let fmt = cli.format;
    match &cli.cmd {
        Cmd::Score(a) => score(a, fmt, out),
        Cmd::Perturb(a) => perturb(a, cli.seed, out),
        Cmd::Filter(a) => filter(a, fmt, out),
        Cmd::BuildRestoreData(a) => build_restore_data(a, out),
        Cmd::Restore(c) => restore(c, out),
        Cmd::Pipeline(PipelineCmd::Run(a)) => pipeline_run(a, cli.seed, fmt, out),
        Cmd::Impact(a) => impact(a, fmt, out),
        Cmd::Report(c) => report(c, fmt, out),
        Cmd::Alpha(a) => alpha(a, fmt, out),
        Cmd::Annotate(c) => annotate(c, cli.seed, fmt, out),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_lines(path: Option<&Path>, lines: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let mut body = lines.join("\n");
    if !lines.is_empty() {
        body.push('\n');
    }
    match path {
        Some(p) => atomic_write(p, body.as_bytes()).map_err(io_err(p)),
        None => out.write_all(body.as_bytes()).map_err(|e| CliError::Runtime(format!("stdout: {e}"))),
    }
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_json_lines(path).map_err(io_err(path))
}

fn punct_class(spec: Option<&str>) -> Result<PunctClass, CliError> {
    match spec {
        None => Ok(PunctClass::default()),
        Some(s) => PunctClass::parse(s).map_err(|e| CliError::Usage(format!("--punct: {e}"))),
    }
}

fn emit(table: &Table, fmt: Option<Format>, dir: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(io_err(d))?;
        table.write(d).ctx("report")?;
    }
    let body = match fmt.unwrap_or(Format::Md) {
        Format::Records => String::from_utf8(table.to_records()).expect("records are UTF-8"),
        Format::Csv => table.to_csv(),
        Format::Md => table.to_markdown(),
    };
    out.write_all(body.as_bytes()).map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<(), CliError> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

fn scores_table(scores: &[CorpusScore]) -> Result<Table, CliError> {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for s in scores {
        rows.push(vec![
            Cell::plain(s.metric.name()),
            Cell::plain(render_fixed(s.value, 2).ctx("report")?),
            Cell::plain(s.n_items.to_string()),
        ]);
        records.push(json!({"metric": s.metric, "value": s.value, "n_items": s.n_items}));
    }
    Ok(Table {
        name: "scores".into(),
        columns: ["metric", "value", "n_items"].map(String::from).to_vec(),
        rows,
        records,
    })
}

fn score(a: &ScoreArgs, fmt: Option<Format>, out: &mut dyn Write) -> Result<(), CliError> {
    need("--hyp", &a.hyp)?;
    for r in &a.refs {
        need("--ref", r)?;
    }
    let hyps = read_lines(&a.hyp)?;
    let mut files = Vec::new();
    for r in &a.refs {
        let lines = read_lines(r)?;
        if lines.len() != hyps.len() {
            return Err(CliError::Runtime(format!(
                "score: {} has {} lines but {} has {}",
                r.display(),
                lines.len(),
                a.hyp.display(),
                hyps.len()
            )));
        }
        files.push(lines);
    }
    let refs: Vec<Vec<&str>> = (0..hyps.len())
        .map(|i| files.iter().map(|f| f[i].as_str()).collect())
        .collect();
    let cfg = MetricConfig::default();
    let scores = a
        .metric
        .iter()
        .map(|m| score_corpus(*m, &hyps, &refs, &cfg))
        .collect::<Result<Vec<_>, _>>()
        .ctx("metrics")?;
    if fmt.is_none() && a.out.is_none() {
        for s in &scores {
            let v = render_fixed(s.value, 2).ctx("report")?;
            if scores.len() == 1 {
                say(out, v)?;
            } else {
                say(out, format!("{}\t{v}", s.metric))?;
            }
        }
        return Ok(());
    }
    emit(&scores_table(&scores)?, fmt, a.out.as_deref(), out)
}

fn perturb(a: &PerturbArgs, seed: u64, out: &mut dyn Write) -> Result<(), CliError> {
    need("--input", &a.input)?;
    let pc = punct_class(a.punct.as_deref())?;
    let texts: Vec<String> = read_lines(&a.input)?
        .iter()
        .map(|l| {
            let t = normalize(l);
            match a.mode {
                PerturbMode::PunctOnly => degrade(&t, DegradeMode::PunctOnly, &pc),
                PerturbMode::Fused => degrade(&t, DegradeMode::Fused, &pc),
                PerturbMode::FuseSpaces => fuse_words(&t),
            }
            .into_string()
        })
        .collect();
    let texts = add_noise(&texts, Noise { rate: a.noise, seed }).map_err(|e| CliError::Usage(format!("--noise: {e}")))?;
    write_lines(a.output.as_deref(), &texts, out)
}

#[derive(Deserialize)]
struct SimilarityRow {
    id: String,
    similarity: f64,
}

fn filter(a: &FilterArgs, fmt: Option<Format>, out: &mut dyn Write) -> Result<(), CliError> {
    need("--input", &a.input)?;
    if let Some(p) = &a.similarity {
        need("--similarity", p)?;
    }
    let mut spec = if a.standard_defaults { FilterSpec::standard_defaults() } else { FilterSpec::default() };
    spec.drop_numerals |= a.drop_numerals;
    spec.max_duration_s = a.max_duration.or(spec.max_duration_s);
    spec.min_similarity = a.min_similarity.or(spec.min_similarity);
    spec.chrf_cutoff = a.chrf_cutoff.or(spec.chrf_cutoff);
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let records: Vec<FilterRecord> = read_records(&a.input)?;
    let sims = match &a.similarity {
        Some(p) => Some(
            read_records::<SimilarityRow>(p)?
                .into_iter()
                .map(|r| (r.id, r.similarity))
                .collect::<HashMap<_, _>>(),
        ),
        None => None,
    };
    let outcome = apply_filters(&records, &spec, sims.as_ref()).ctx("corpus")?;
    write_json_lines(&a.output, &outcome.kept).map_err(io_err(&a.output))?;
    write_json_lines(&a.report, &outcome.decisions).map_err(io_err(&a.report))?;

    let mut counts: Vec<(String, usize)> = vec![("kept".into(), outcome.kept.len())];
    for (_, reason) in &outcome.dropped {
        let name = serde_json::to_value(reason).expect("reason serializes").as_str().unwrap_or("").to_string();
        match counts.iter_mut().find(|(n, _)| *n == name) {
            Some(c) => c.1 += 1,
            None => counts.push((name, 1)),
        }
    }
    let table = Table {
        name: "filter".into(),
        columns: vec!["outcome".into(), "count".into()],
        rows: counts.iter().map(|(n, c)| vec![Cell::plain(n), Cell::plain(c.to_string())]).collect(),
        records: counts.iter().map(|(n, c)| json!({"outcome": n, "count": c})).collect(),
    };
    emit(&table, fmt, None, out)
}

fn build_restore_data(a: &BuildRestoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    need("--input", &a.input)?;
    let pc = punct_class(a.punct.as_deref())?;
    let sentences: Vec<_> = read_lines(&a.input)?
        .iter()
        .map(|l| normalize(l))
        .filter(|t| !t.is_empty())
        .collect();
    let modes = if a.mode.is_empty() { DegradeMode::ALL.to_vec() } else { a.mode.clone() };
    let pairs = build_restore_pairs(&sentences, &modes, &pc);
    write_json_lines(&a.output, &pairs).map_err(io_err(&a.output))?;
    say(out, format!("{} pairs from {} sentences", pairs.len(), sentences.len()))
}

fn restore(c: &RestoreCmd, out: &mut dyn Write) -> Result<(), CliError> {
    match c {
        RestoreCmd::Train { pairs, model, order, smoothing, punct } => {
            need("--pairs", pairs)?;
            let cfg = TrainConfig {
                order: *order,
                smoothing_alpha: *smoothing,
                punct: punct_class(punct.as_deref())?,
            };
            let data: Vec<RestorePair> = read_records(pairs)?;
            let m = train(&data, &cfg).ctx("restore")?;
            m.save(model).ctx("restore")?;
            say(out, format!("{} contexts, checksum {}", m.n_contexts(), m.checksum()))
        }
        RestoreCmd::Apply { model, input, output, preserve_spaces } => {
            need("--model", model)?;
            need("--input", input)?;
            let m = BoundaryModel::load(model).ctx("restore")?;
            let restored = read_lines(input)?
                .iter()
                .map(|l| m.restore(&normalize(l), *preserve_spaces).map(|t| t.into_string()))
                .collect::<Result<Vec<_>, _>>()
                .ctx("restore")?;
            write_lines(output.as_deref(), &restored, out)
        }
        RestoreCmd::Eval { model, pairs } => {
            need("--model", model)?;
            need("--pairs", pairs)?;
            let m = BoundaryModel::load(model).ctx("restore")?;
            let data: Vec<RestorePair> = read_records(pairs)?;
            let mut total = BoundaryCounts::default();
            for p in &data {
                let hyp = m.restore(&p.input, p.mode == DegradeMode::PunctOnly).ctx("restore")?;
                total = total.merge(boundary_counts(&hyp, &p.target, m.punct()).ctx("restore")?);
            }
            say(
                out,
                format!(
                    "boundary F1 {:.4} (tp {}, fp {}, fn {})",
                    total.f1(),
                    total.true_positive,
                    total.false_positive,
                    total.false_negative
                ),
            )
        }
    }
}

/// Builds stage adapters from backing specs, sharing one cache.
struct StageFactory<'a> {
    items: &'a [EvalItem],
    pc: &'a PunctClass,
    timeout: Duration,
    cache: Option<Arc<ContentCache>>,
    noise: Noise,
}

impl StageFactory<'_> {
    fn new<'a>(
        items: &'a [EvalItem],
        pc: &'a PunctClass,
        timeout: u64,
        cache: Option<&Path>,
        noise: Noise,
    ) -> Result<StageFactory<'a>, CliError> {
        let cache = match cache {
            Some(d) => Some(Arc::new(ContentCache::on_disk(d).map_err(io_err(d))?)),
            None => None,
        };
        Ok(StageFactory {
            items,
            pc,
            timeout: Duration::from_secs(timeout),
            cache,
            noise,
        })
    }

    fn make(&self, flag: &str, kind: StageKind, spec: &str) -> Result<StageAdapter, CliError> {
        let usage = |msg: String| CliError::Usage(format!("{flag} {spec:?}: {msg}"));
        let (scheme, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let backing = match scheme {
            "synthetic" if kind == StageKind::Asr => {
                let mode: DegradeMode = rest.parse().map_err(|e| usage(format!("{e}")))?;
                let fx = synthetic_asr_fixture(self.items, mode, self.pc, self.noise)
                    .map_err(|e| usage(e.to_string()))?;
                Backing::Fixture(Arc::new(fx))
            }
            "fixture" | "builtin" => {
                need(flag, Path::new(rest))?;
                parse_backing(spec, self.timeout).ctx("adapters")?
            }
            "identity" | "external" => parse_backing(spec, self.timeout).map_err(|e| usage(e.to_string()))?,
            _ => return Err(usage("expected identity, fixture:, builtin:, external: or synthetic:".into())),
        };
        let adapter = StageAdapter::new(kind, backing);
        Ok(match &self.cache {
            Some(c) => adapter.with_cache(c.clone()),
            None => adapter,
        })
    }
}

fn parse_stage(f: &StageFactory, spec: &str) -> Result<ScenarioStage, CliError> {
    let usage = |msg: &str| CliError::Usage(format!("--stage {spec:?}: {msg}"));
    let (head, backing) = spec.split_once('=').ok_or_else(|| usage("expected KIND[+PREPROCESS]=BACKING"))?;
    let (kind, pre) = head.split_once('+').unwrap_or((head, "none"));
    let kind: StageKind = kind.parse().map_err(|_| usage("kind must be asr, restore or translate"))?;
    let preprocess: Preprocess = serde_json::from_value(json!(pre))
        .map_err(|_| usage("preprocess must be none, fuse-spaces or strip-punct"))?;
    Ok(ScenarioStage {
        adapter: f.make("--stage", kind, backing)?,
        preprocess,
    })
}

fn required<'a>(v: &'a Option<String>, flag: &str, scenario: &str) -> Result<&'a str, CliError> {
    v.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required for scenario {scenario}")))
}

fn references(items: &[EvalItem]) -> Option<Vec<Vec<&str>>> {
    let refs: Vec<Vec<&str>> = items
        .iter()
        .map(|i| i.ref_translations.iter().map(String::as_str).collect())
        .collect();
    refs.iter().all(|r| !r.is_empty()).then_some(refs)
}

fn pipeline_run(a: &RunArgs, seed: u64, fmt: Option<Format>, out: &mut dyn Write) -> Result<(), CliError> {
    need("--manifest", &a.manifest)?;
    let pc = punct_class(a.punct.as_deref())?;
    let items = load_manifest(&a.manifest).ctx("corpus")?;
    let f = StageFactory::new(&items, &pc, a.timeout, a.cache.as_deref(), Noise { rate: a.noise, seed })?;
    let named = match a.scenario {
        ScenarioArg::A => "A",
        ScenarioArg::B => "B",
        ScenarioArg::C => "C",
        ScenarioArg::Custom => "custom",
    };
    if a.scenario == ScenarioArg::Custom {
        if a.asr.is_some() || a.restore.is_some() || a.translate.is_some() {
            return Err(CliError::Usage("custom scenarios take --stage, not --asr/--restore/--translate".into()));
        }
    } else if !a.stage.is_empty() {
        return Err(CliError::Usage(format!("--stage only applies to custom scenarios, not {named}")));
    }
    let cfg = match a.scenario {
        ScenarioArg::A => ScenarioConfig::a(
            f.make("--asr", StageKind::Asr, required(&a.asr, "--asr", named)?)?,
            f.make("--translate", StageKind::Translate, required(&a.translate, "--translate", named)?)?,
        ),
        ScenarioArg::B | ScenarioArg::C => {
            let asr = f.make("--asr", StageKind::Asr, required(&a.asr, "--asr", named)?)?;
            let restore = f.make("--restore", StageKind::Restore, required(&a.restore, "--restore", named)?)?;
            let translate = f.make("--translate", StageKind::Translate, required(&a.translate, "--translate", named)?)?;
            if a.scenario == ScenarioArg::B {
                ScenarioConfig::b(asr, restore, translate)
            } else {
                ScenarioConfig::c(asr, restore, translate)
            }
        }
        ScenarioArg::Custom => {
            if a.stage.is_empty() {
                return Err(CliError::Usage("custom scenarios need at least one --stage".into()));
            }
            let stages = a.stage.iter().map(|s| parse_stage(&f, s)).collect::<Result<Vec<_>, _>>()?;
            ScenarioConfig::custom(stages)
        }
    }
    .map_err(|e| CliError::Usage(e.to_string()))?
    .with_punct(pc.clone());

    let traces = run_scenario(&cfg, &items).ctx("scenarios")?;
    let record = RunRecord {
        snapshot: cfg.snapshot(items.len()),
        traces,
    };
    write_run_dir(&a.out, &record).ctx("scenarios")?;

    let Some(refs) = references(&items) else {
        return say(out, format!("wrote {} traces to {}", record.traces.len(), a.out.display()));
    };
    let hyps: Vec<&str> = record.traces.iter().map(|t| t.hypothesis.as_str()).collect();
    let cfg_m = MetricConfig::default();
    let scores = [Metric::Bleu, Metric::ChrfPp]
        .iter()
        .map(|m| score_corpus(*m, &hyps, &refs, &cfg_m))
        .collect::<Result<Vec<_>, _>>()
        .ctx("metrics")?;
    let mut table = scores_table(&scores)?;
    table.name = "run".into();
    emit(&table, fmt, None, out)
}

fn impact(a: &ImpactArgs, fmt: Option<Format>, out: &mut dyn Write) -> Result<(), CliError> {
    need("--manifest", &a.manifest)?;
    let pc = punct_class(a.punct.as_deref())?;
    let items = load_manifest(&a.manifest).ctx("corpus")?;
    let f = StageFactory::new(&items, &pc, a.timeout, a.cache.as_deref(), Noise::default())?;
    let translate = f.make("--translate", StageKind::Translate, &a.translate)?;
    let result = run_punct_impact(&items, &translate, &pc).ctx("scenarios")?;
    let refs = references(&items)
        .ok_or_else(|| CliError::Runtime("corpus: every item needs a reference translation".into()))?;
    let cfg = MetricConfig::default();
    let mut rows = Vec::new();
    for (metric, label) in [(Metric::Bleu, "BLEU"), (Metric::ChrfPp, "chrF++")] {
        let score = |v: &[cascade_eval::adapters::IdText]| {
            let hyps: Vec<&str> = v.iter().map(|r| r.text.as_str()).collect();
            score_corpus(metric, &hyps, &refs, &cfg).map(|s| s.value)
        };
        rows.push(DeltaRow {
            label: a.label.clone(),
            metric: label.into(),
            baseline: score(&result.punctuated).ctx("metrics")?,
            treated: score(&result.unpunctuated).ctx("metrics")?,
        });
    }
    if let Some(d) = &a.out {
        std::fs::create_dir_all(d).map_err(io_err(d))?;
        for (name, rows) in [("punctuated", &result.punctuated), ("unpunctuated", &result.unpunctuated)] {
            let p = d.join(format!("{name}.jsonl"));
            write_json_lines(&p, rows).map_err(io_err(&p))?;
        }
    }
    emit(&delta_table("impact", &rows).ctx("report")?, fmt, a.out.as_deref(), out)
}

fn report(c: &ReportCmd, fmt: Option<Format>, out: &mut dyn Write) -> Result<(), CliError> {
    match c {
        ReportCmd::Delta { baseline, treated, label, metric, out: dir } => {
            if fmt.is_none() && dir.is_none() {
                return say(out, Delta::new(*baseline, *treated).render().ctx("report")?);
            }
            let row = DeltaRow {
                label: label.clone(),
                metric: metric.clone(),
                baseline: *baseline,
                treated: *treated,
            };
            emit(&delta_table("delta", &[row]).ctx("report")?, fmt, dir.as_deref(), out)
        }
        ReportCmd::Scenarios { run, manifest, out: dir } => {
            for r in run {
                need("--run", r)?;
            }
            need("--manifest", manifest)?;
            let items = load_manifest(manifest).ctx("corpus")?;
            let by_id: HashMap<&str, &EvalItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
            let systems = runs_from_dirs(run).ctx("scenarios")?;
            let cfg = MetricConfig::default();
            let mut scores = Vec::new();
            for s in &systems {
                let mut hyps = Vec::new();
                let mut refs = Vec::new();
                for h in &s.hypotheses {
                    let item = by_id.get(h.id.as_str()).ok_or_else(|| {
                        CliError::Runtime(format!("report: run {} has item {:?} not in the manifest", s.label, h.id))
                    })?;
                    hyps.push(h.text.as_str());
                    refs.push(item.ref_translations.clone());
                }
                let corpus = [Metric::Bleu, Metric::ChrfPp]
                    .iter()
                    .map(|m| score_corpus(*m, &hyps, &refs, &cfg))
                    .collect::<Result<Vec<_>, _>>()
                    .ctx("metrics")?;
                scores.push(ScenarioScores::from_scores(&s.label, &corpus).ctx("report")?);
            }
            emit(&scenario_table(&scores).ctx("report")?, fmt, dir.as_deref(), out)
        }
        ReportCmd::Types { ratings, places, out: dir } => {
            need("--ratings", ratings)?;
            let records: Vec<SystemRating> = read_records(ratings)?;
            let scores = typed_scores(&records).ctx("report")?;
            emit(&type_breakdown(&scores, *places).ctx("report")?, fmt, dir.as_deref(), out)
        }
    }
}

fn alpha(a: &AlphaArgs, fmt: Option<Format>, out: &mut dyn Write) -> Result<(), CliError> {
    need("--ratings", &a.ratings)?;
    let records: Vec<SystemRating> = read_records(&a.ratings)?;
    let rep = agreement_report(&records, a.metric).ctx("agreement")?;
    emit(&human_eval_table(&rep).ctx("report")?, fmt, a.out.as_deref(), out)
}

fn annotate(c: &AnnotateCmd, seed: u64, fmt: Option<Format>, out: &mut dyn Write) -> Result<(), CliError> {
    match c {
        AnnotateCmd::Serve { store, addr, ui } => {
            if let Some(u) = ui {
                need("--ui", u)?;
            }
            let store = Arc::new(SessionStore::open(store).ctx("annotate")?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(format!("runtime: {e}")))?;
            eprintln!("listening on http://{addr}");
            rt.block_on(cascade_annotate::server::serve(*addr, store, ui.clone()))
                .ctx("annotate")
        }
        AnnotateCmd::Create { store, run, manifest, id } => {
            for r in run {
                need("--run", r)?;
            }
            need("--manifest", manifest)?;
            let runs = runs_from_dirs(run).ctx("annotate")?;
            let items = load_manifest(manifest).ctx("corpus")?;
            let store = SessionStore::open(store).ctx("annotate")?;
            let (id, n) = store.create(id.as_deref(), &runs, &items, seed).ctx("annotate")?;
            say(out, format!("session {id}: {n} items"))
        }
        AnnotateCmd::Export { store, session, out: path } => {
            need("--store", store)?;
            let store = SessionStore::open(store).ctx("annotate")?;
            let export = store.export(session).ctx("annotate")?;
            write_json_lines(path, &export.rows).map_err(io_err(path))?;
            emit(&human_eval_table(&export.report).ctx("report")?, fmt, None, out)
        }
    }
}
