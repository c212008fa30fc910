//! Argument parsing and dispatch for the `cascade` binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use cascade_eval::agreement::DistanceMetric;
use cascade_eval::metrics::Metric;
use cascade_eval::DegradeMode;

mod commands;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Attach the originating module to a library error.
pub(crate) trait Ctx<T> {
    fn ctx(self, module: &str) -> Result<T, CliError>;
}

impl<T, E: fmt::Display> Ctx<T> for Result<T, E> {
    fn ctx(self, module: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime(format!("{module}: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Records,
    Csv,
    Md,
}

#[derive(Debug, Parser)]
#[command(name = "cascade", version, about = "Evaluation toolkit for cascaded speech translation")]
pub struct Cli {
    /// Output format for tables (plain text when omitted)
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for scoring and stage fan-out [default: available parallelism]
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,
    /// Seed for every random choice (noise, session shuffles)
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML file supplying defaults for any flag; explicit flags win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Score hypotheses against one or more reference files
    Score(ScoreArgs),
    /// Strip punctuation and/or spaces from text, optionally adding noise
    Perturb(PerturbArgs),
    /// Apply numeral, duration, similarity and chrF++ filters to records
    Filter(FilterArgs),
    /// Build (degraded, original) restoration training pairs
    BuildRestoreData(BuildRestoreArgs),
    /// Train or apply the punctuation and segmentation restorer
    #[command(subcommand)]
    Restore(RestoreCmd),
    /// Run cascade scenarios
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Translate transcripts with and without punctuation and compare
    Impact(ImpactArgs),
    /// Render delta, scenario and sentence-type tables
    #[command(subcommand)]
    Report(ReportCmd),
    /// Krippendorff's alpha and mean ratings from rating records
    Alpha(AlphaArgs),
    /// Blind human-evaluation sessions
    #[command(subcommand)]
    Annotate(AnnotateCmd),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Metric to compute; repeatable (wer, cer, bleu, chrf, meteor)
    #[arg(long, required = true)]
    pub metric: Vec<Metric>,
    /// Hypotheses, one per line
    #[arg(long)]
    pub hyp: PathBuf,
    /// References, one per line; repeat for multiple references
    #[arg(long = "ref", required = true)]
    pub refs: Vec<PathBuf>,
    /// Also write scores.{records,csv,md} here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PerturbMode {
    /// Remove punctuation, keep spaces
    PunctOnly,
    /// Remove punctuation and spaces
    Fused,
    /// Remove spaces only
    FuseSpaces,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output file [default: stdout]
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: PerturbMode,
    /// Character substitution rate in [0, 1]
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Punctuation marks to strip [default: । ॥ , ? ! . ; : ' "]
    #[arg(long)]
    pub punct: Option<String>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Records, one JSON object per line ({id, text, duration_s?, translation?, reference?})
    #[arg(long)]
    pub input: PathBuf,
    /// Kept records
    #[arg(long)]
    pub output: PathBuf,
    /// Per-record decisions ({id, kept, reason})
    #[arg(long)]
    pub report: PathBuf,
    /// Precomputed similarity scores ({id, similarity} per line)
    #[arg(long)]
    pub similarity: Option<PathBuf>,
    /// Start from numerals + 5 s + similarity > 0.80 + chrF++ >= 50
    #[arg(long)]
    pub standard_defaults: bool,
    #[arg(long)]
    pub drop_numerals: bool,
    #[arg(long)]
    pub max_duration: Option<f64>,
    #[arg(long)]
    pub min_similarity: Option<f64>,
    #[arg(long)]
    pub chrf_cutoff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BuildRestoreArgs {
    /// Punctuated sentences, one per line
    #[arg(long)]
    pub input: PathBuf,
    /// Pairs, one JSON object per line
    #[arg(long)]
    pub output: PathBuf,
    /// Degradation mode; repeatable [default: punct-only and fused]
    #[arg(long)]
    pub mode: Vec<DegradeMode>,
    #[arg(long)]
    pub punct: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum RestoreCmd {
    /// Train a model from restoration pairs
    Train {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Context width in characters on each side of a gap
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 0.1)]
        smoothing: f64,
        #[arg(long)]
        punct: Option<String>,
    },
    /// Restore punctuation (and spaces) in text, one item per line
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Keep existing spaces and only insert punctuation
        #[arg(long)]
        preserve_spaces: bool,
    },
    /// Boundary F1 of a model on held-out pairs
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    #[value(name = "A", alias = "a")]
    A,
    #[value(name = "B", alias = "b")]
    B,
    #[value(name = "C", alias = "c")]
    C,
    Custom,
}

#[derive(Debug, Subcommand)]
pub enum PipelineCmd {
    /// Run one scenario over a manifest and write its run directory
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioArg,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run directory to create
    #[arg(long)]
    pub out: PathBuf,
    /// ASR backing: fixture:PATH, external:CMD or synthetic:punct-only|fused
    #[arg(long)]
    pub asr: Option<String>,
    /// Restore backing: identity, fixture:PATH, builtin:MODEL or external:CMD
    #[arg(long)]
    pub restore: Option<String>,
    /// Translate backing: identity, fixture:PATH or external:CMD
    #[arg(long)]
    pub translate: Option<String>,
    /// Custom chain stage as KIND[+PREPROCESS]=BACKING; repeatable, in order
    #[arg(long)]
    pub stage: Vec<String>,
    /// Cache stage outputs in this directory
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Per-response timeout for external stages, in seconds
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    /// Substitution noise for synthetic ASR
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub punct: Option<String>,
}

#[derive(Debug, Args)]
pub struct ImpactArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Translate backing: identity, fixture:PATH or external:CMD
    #[arg(long)]
    pub translate: String,
    /// Row label for the test set
    #[arg(long, default_value = "test")]
    pub label: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long)]
    pub punct: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    /// Absolute and relative change between two scores
    Delta {
        #[arg(long, allow_negative_numbers = true)]
        baseline: f64,
        #[arg(long, allow_negative_numbers = true)]
        treated: f64,
        #[arg(long, default_value = "-")]
        label: String,
        #[arg(long, default_value = "BLEU")]
        metric: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// BLEU, chrF++ and ΔBLEU per scenario run directory
    Scenarios {
        /// Run directory; repeatable
        #[arg(long, required = true)]
        run: Vec<PathBuf>,
        /// Manifest holding the references
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean adequacy and fluency per sentence type and scenario
    Types {
        /// Rating records, one JSON object per line
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value_t = 3)]
        places: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    /// Rating records ({system, item_id, rater, fluency, adequacy, sentence_type?})
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long, default_value = "ordinal")]
    pub metric: DistanceMetric,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCmd {
    /// Serve the annotation API (and optionally the UI bundle)
    Serve {
        /// Directory holding session logs
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8787")]
        addr: SocketAddr,
        /// Static UI bundle to serve at /
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Create a session from run directories without starting the server
    Create {
        #[arg(long)]
        store: PathBuf,
        /// Run directory; repeatable
        #[arg(long, required = true)]
        run: Vec<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        id: Option<String>,
    },
    /// Write the unblinded ratings of a finalized session
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        session: String,
        /// Rating records output
        #[arg(long)]
        out: PathBuf,
    },
}

/// Leading subcommand words, skipping global flags given before them.
fn command_path(argv: &[String]) -> Vec<String> {
    let mut path = Vec::new();
    let mut it = argv.iter().skip(1);
    while let Some(tok) = it.next() {
        if matches!(tok.as_str(), "--format" | "--jobs" | "--seed" | "--config") {
            it.next();
        } else if tok.starts_with('-') {
            if path.is_empty() {
                continue;
            }
            break;
        } else {
            path.push(tok.clone());
        }
    }
    path
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(tok) = it.next() {
        if tok == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = tok.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn flag_tokens(key: &str, v: &toml::Value, out: &mut Vec<(String, Vec<String>)>) -> Result<(), CliError> {
    let flag = format!("--{}", key.replace('_', "-"));
    let scalar = |v: &toml::Value| match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        other => Err(CliError::Usage(format!("config key {key:?}: unsupported value {other}"))),
    };
    let toks = match v {
        toml::Value::Boolean(true) => vec![flag.clone()],
        toml::Value::Boolean(false) => vec![],
        toml::Value::Array(xs) => xs
            .iter()
            .map(|x| scalar(x).map(|s| [flag.clone(), s]))
            .collect::<Result<Vec<_>, _>>()?
            .concat(),
        v => vec![flag.clone(), scalar(v)?],
    };
    out.push((flag, toks));
    Ok(())
}

/// Append config-file flags the user did not give explicitly.
///
/// Top-level keys apply to every command; a table named after the
/// command path (`[score]`, `[pipeline.run]`) applies to that command.
fn merge_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
    let root: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (k, v) in &root {
        if !v.is_table() {
            flag_tokens(k, v, &mut pairs)?;
        }
    }
    let mut table = &root;
    for word in command_path(&argv) {
        match table.get(&word).and_then(|v| v.as_table()) {
            Some(t) => {
                table = t;
                for (k, v) in t {
                    if !v.is_table() {
                        flag_tokens(k, v, &mut pairs)?;
                    }
                }
            }
            None => break,
        }
    }
    let given = |flag: &str| {
        argv.iter()
            .any(|a| a == flag || a.strip_prefix(flag).is_some_and(|r| r.starts_with('=')))
    };
    let mut out = argv.clone();
    for (flag, toks) in pairs {
        if flag != "--config" && !given(&flag) {
            out.extend(toks);
        }
    }
    Ok(out)
}

/// Parse `argv` (including the program name), honouring `--config`.
pub fn parse(argv: Vec<String>) -> Result<Cli, clap::Error> {
    let cmd = Cli::command();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(e) => return Err(cmd.clone().error(clap::error::ErrorKind::ValueValidation, e.to_string())),
    };
    let matches = cmd.try_get_matches_from(argv)?;
    Cli::from_arg_matches(&matches)
}

/// Run a parsed command, writing results to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        pool = pool.num_threads(n as usize);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    // the pool may run work on other threads, so collect output first
    let mut buf = Vec::new();
    let result = pool.install(|| commands::dispatch(&cli, &mut buf));
    out.write_all(&buf)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Runtime(format!("stdout: {e}")))?;
    result
}

/// Full entry point: parse, execute, report. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = args.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let cli = match parse(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Usage error unless `path` exists.
pub(crate) fn need(flag: &str, path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag} {}: no such file or directory", path.display())))
    }
}
