//! Command-line front end: `score`, `simulate`, `report`.
//!
//! Exit codes: 0 success, 1 I/O failure while writing, 2 invalid input or
//! scenario, 3 embeddings could not be resolved.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::embeddings::Embedder;
use crate::error::Error;
use crate::exec::Exec;
use crate::report::{compare, read_final_histogram, read_metrics_csv};
use crate::reward::Scheme;
use crate::rollout::parse_rollout_jsonl_ordered;
use crate::scoring::{score_batch, write_scored_jsonl, ScoreError};
use crate::simulator::{write_histogram_csv, write_metrics_csv, EnvConfig, Environment, MetricsRecord};
use crate::svg::render_training_svg;

pub const EXIT_IO: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_EMBEDDING: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "evolrl", version, about = "Majority + novelty rewards, GRPO losses and a collapse simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Evolrl,
    MajorityOnly,
    Both,
}

impl SchemeArg {
    fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeArg::Evolrl => vec![Scheme::EvolRl],
            SchemeArg::MajorityOnly => vec![Scheme::MajorityOnly],
            SchemeArg::Both => vec![Scheme::EvolRl, Scheme::MajorityOnly],
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score rollout JSONL: label, normalized novelty, reward and advantage per line.
    Score(ScoreArgs),
    /// Run the toy training loop from a scenario file and write metrics CSV.
    Simulate(SimulateArgs),
    /// Compare two metrics CSVs (final values and area under curve).
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Rollout JSONL file.
    pub input: PathBuf,
    /// Output JSONL (stdout when omitted).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// `inline`, `file:<path>` or `lexical:<dim>:<seed>`.
    #[arg(long, default_value = "inline")]
    pub embedder: String,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "evolrl")]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 1e-8)]
    pub zscore_eps: f64,
}

/// Overrides applied on top of a scenario file.
#[derive(Debug, Args, Default)]
pub struct SimOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub eps_low: Option<f64>,
    #[arg(long)]
    pub eps_high: Option<f64>,
    #[arg(long)]
    pub lambda_ent: Option<f64>,
    #[arg(long)]
    pub kl_coeff: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eval_trials: Option<usize>,
}

impl SimOverrides {
    fn apply(&self, cfg: &mut EnvConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.eps_low {
            cfg.optim.eps_low = v;
        }
        if let Some(v) = self.eps_high {
            cfg.optim.eps_high = v;
        }
        if let Some(v) = self.lambda_ent {
            cfg.optim.lambda_ent = v;
        }
        if let Some(v) = self.kl_coeff {
            cfg.optim.kl_coeff = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.optim.learning_rate = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.eval_trials {
            cfg.eval_trials = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    /// Metrics CSV path. With `--scheme both` the arms go to
    /// `<stem>.evolrl.csv` and `<stem>.majority.csv`.
    #[arg(short, long)]
    pub out: PathBuf,
    /// Optional SVG with pass@1, length and entropy panels.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Defaults to the scenario's scheme.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[command(flatten)]
    pub overrides: SimOverrides,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Histogram sidecar for A (default: `<a stem>.hist.csv` if it exists).
    #[arg(long)]
    pub hist_a: Option<PathBuf>,
    #[arg(long)]
    pub hist_b: Option<PathBuf>,
    /// Write the JSON summary here instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }

    fn input(e: impl std::fmt::Display) -> Self {
        CliError::new(EXIT_INPUT, e.to_string())
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::new(EXIT_IO, format!("{}: {e}", path.display()))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn open_input(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, write: impl FnOnce(&mut dyn Write) -> crate::Result<()>) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Parse arguments and run; returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Score(args) => cmd_score(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

pub fn cmd_score(args: &ScoreArgs) -> CliResult<()> {
    let scheme = match args.scheme {
        SchemeArg::Evolrl => Scheme::EvolRl,
        SchemeArg::MajorityOnly => Scheme::MajorityOnly,
        SchemeArg::Both => return Err(CliError::input("score takes a single scheme")),
    };
    if !(0.0..=1.0).contains(&args.alpha) {
        return Err(CliError::input(format!("alpha must lie in [0,1], got {}", args.alpha)));
    }
    let embedder: Embedder = args.embedder.parse().map_err(CliError::input)?;
    let (groups, order) = parse_rollout_jsonl_ordered(open_input(&args.input)?)
        .map_err(|e| CliError::input(format!("{}: {e}", args.input.display())))?;

    let scored =
        score_batch(&groups, &embedder, scheme, args.alpha, args.zscore_eps, Exec::default()).map_err(|e| match e {
            ScoreError::Embedding { .. } => CliError::new(EXIT_EMBEDDING, e.to_string()),
            ScoreError::Other(inner) => CliError::input(inner),
        })?;
    let in_order: Vec<_> = order.iter().map(|&(g, i)| &scored[g][i]).collect();

    match &args.out {
        Some(path) => write_file(path, |w| write_scored_jsonl(w, &in_order)),
        None => {
            let stdout = std::io::stdout();
            write_scored_jsonl(stdout.lock(), &in_order).map_err(|e| CliError::new(EXIT_IO, e.to_string()))
        }
    }
}

/// Provenance written next to simulation outputs. Timestamps live here and
/// nowhere else so primary outputs stay byte-reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<String>,
}

/// SHA-256 of the canonical JSON serialization of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = match path.extension() {
        Some(ext) if ext == "csv" => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut s = stem.into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Output CSV path for one arm of a run.
pub fn arm_csv_path(out: &Path, scheme: Scheme, both: bool) -> PathBuf {
    match (both, scheme) {
        (false, _) => out.to_path_buf(),
        (true, Scheme::EvolRl) => with_suffix(out, ".evolrl.csv"),
        (true, Scheme::MajorityOnly) => with_suffix(out, ".majority.csv"),
    }
}

/// Histogram sidecar next to a metrics CSV.
pub fn histogram_path(csv: &Path) -> PathBuf {
    with_suffix(csv, ".hist.csv")
}

pub fn manifest_path(out: &Path) -> PathBuf {
    with_suffix(out, ".manifest.json")
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let started = now_ms();
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| CliError::input(format!("{}: {e}", args.scenario.display())))?;
    let mut base: EnvConfig =
        serde_json::from_str(&text).map_err(|e| CliError::input(Error::Scenario(e.to_string())))?;
    args.overrides.apply(&mut base);

    let selection = args.scheme.unwrap_or(match base.scheme {
        Scheme::EvolRl => SchemeArg::Evolrl,
        Scheme::MajorityOnly => SchemeArg::MajorityOnly,
    });
    let both = selection == SchemeArg::Both;

    let mut configs = Vec::new();
    for scheme in selection.schemes() {
        let mut cfg = base.clone();
        cfg.scheme = scheme;
        cfg.validate().map_err(CliError::input)?;
        configs.push(cfg);
    }

    let mut runs: Vec<(Scheme, Vec<MetricsRecord>)> = Vec::new();
    let mut outputs = Vec::new();
    for cfg in &configs {
        let env = Environment::new(cfg.clone()).map_err(CliError::input)?;
        let run = env.run(Exec::default()).map_err(|e| CliError::new(EXIT_INPUT, format!("simulation failed: {e}")))?;
        let csv = arm_csv_path(&args.out, cfg.scheme, both);
        write_file(&csv, |w| write_metrics_csv(w, &run.metrics))?;
        let hist = histogram_path(&csv);
        write_file(&hist, |w| write_histogram_csv(w, &run.metrics))?;
        outputs.push(csv.display().to_string());
        outputs.push(hist.display().to_string());
        runs.push((cfg.scheme, run.metrics));
    }

    if let Some(svg_path) = &args.svg {
        let labels: Vec<String> = runs.iter().map(|(s, _)| s.to_string()).collect();
        let series: Vec<(&str, &[MetricsRecord])> =
            runs.iter().zip(&labels).map(|((_, m), l)| (l.as_str(), m.as_slice())).collect();
        let svg = render_training_svg(&series);
        write_file(svg_path, |w| Ok(w.write_all(svg.as_bytes())?))?;
        outputs.push(svg_path.display().to_string());
    }

    let manifest = RunManifest {
        command: "simulate".into(),
        config_hash: config_hash(&configs),
        seed: base.seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        outputs,
    };
    let mpath = manifest_path(&args.out);
    write_file(&mpath, |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest).map_err(std::io::Error::from)?;
        Ok(writeln!(w)?)
    })
}

fn load_histogram(explicit: &Option<PathBuf>, csv: &Path) -> CliResult<Option<Vec<f64>>> {
    let path = match explicit {
        Some(p) => p.clone(),
        None => {
            let p = histogram_path(csv);
            if !p.exists() {
                return Ok(None);
            }
            p
        }
    };
    read_final_histogram(open_input(&path)?).map(Some).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let load =
        |p: &Path| read_metrics_csv(open_input(p)?).map_err(|e| CliError::input(format!("{}: {e}", p.display())));
    let a = load(&args.a)?;
    let b = load(&args.b)?;
    let ha = load_histogram(&args.hist_a, &args.a)?;
    let hb = load_histogram(&args.hist_b, &args.b)?;
    let label = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let report = compare((&label(&args.a), &a, ha.as_deref()), (&label(&args.b), &b, hb.as_deref()));
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(path) => write_file(path, |w| Ok(writeln!(w, "{json}")?)),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}
