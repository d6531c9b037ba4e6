//! The `routegen` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//!
//! A `--config` file holds `key = value` pairs named after long flags, either
//! at the top level (applied to every subcommand that has the flag) or under
//! a `[train]`-style table for one subcommand. Flags on the command line win.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use crate::board::BoardError;
use crate::checkpoint::{self, CheckpointError, TrainingMeta};
use crate::data::{load_corpus, split_corpus, synth_corpus, write_corpus, Corpus, DataError, SplitSpec};
use crate::generation::{
    generate_batch, summarize, validate_against, write_candidates, GenConfig, GenError, KMode, RuleSet,
    ValidationReport, DEFAULT_MIN_HOLDS, DEFAULT_NEAR_DUPLICATE_DISTANCE, DEFAULT_REACH_LIMIT,
};
use crate::nn::NnError;
use crate::render::{render_ascii, render_svg, RenderStyle};
use crate::service::{self, ApiSession, LoadedModel, ServerConfig};
use crate::vae::{train_with, write_loss_csv, Architecture, TrainConfig, VaeError, VaeModel, LATENT_DIM};

pub const SEED_ENV: &str = "ROUTEGEN_SEED";

#[derive(Debug, Parser)]
#[command(name = "routegen", version, about = "Train a route VAE, then generate, check and draw MoonBoard problems")]
struct Cli {
    /// Optional key = value file supplying flag defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a corpus file.
    Train(TrainArgs),
    /// Sample candidate problems from a trained model.
    Generate(GenerateArgs),
    /// Check problems against the route rules.
    Validate(ValidateArgs),
    /// Draw one problem as ASCII or SVG.
    Render(RenderArgs),
    /// Write a synthetic corpus of plausible problems.
    Synth(SynthArgs),
    /// Serve the HTTP API used by the board studio.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct RuleArgs {
    /// Minimum holds in a valid problem [source: reference setup]
    #[arg(long, default_value_t = DEFAULT_MIN_HOLDS)]
    min_holds: usize,
    /// Longest hand move, in grid cells [source: tool default]
    #[arg(long, default_value_t = DEFAULT_REACH_LIMIT)]
    reach: f64,
    /// Hamming distance at or below which a problem counts as a near duplicate [source: tool default]
    #[arg(long, default_value_t = DEFAULT_NEAR_DUPLICATE_DISTANCE)]
    near_duplicate: usize,
}

impl RuleArgs {
    fn rules(&self) -> RuleSet {
        RuleSet { min_holds: self.min_holds, reach_limit: self.reach, near_duplicate_distance: self.near_duplicate }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus file, one JSON problem per line
    #[arg(long)]
    corpus: PathBuf,
    /// Training epochs [source: reference setup]
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    /// Mini-batch size, clamped to the training set size [source: reference setup]
    #[arg(long, default_value_t = 512)]
    batch: usize,
    /// Latent dimensions [source: reference setup]
    #[arg(long, default_value_t = LATENT_DIM)]
    latent: usize,
    /// Adam learning rate [source: Adam's usual default]
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Seed for initialisation, splitting, shuffling and noise [source: tool default]
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Held-out fraction for the test loss [source: tool default]
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    /// Train on the whole corpus without a held-out set
    #[arg(long)]
    no_split: bool,
    /// Checkpoint path; a JSON sidecar is written next to it
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss CSV [default: <out>.loss.csv]
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    model: PathBuf,
    /// Candidates to sample [source: reference setup]
    #[arg(long, default_value_t = 50)]
    count: usize,
    /// Sampling seed [source: tool default]
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Holds per candidate; by default the decoder's expected count
    #[arg(long)]
    k: Option<usize>,
    /// Corpus for duplicate checks
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    rules: RuleArgs,
    /// Output file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Problems to check, in corpus format
    #[arg(long)]
    problems: PathBuf,
    /// Corpus for duplicate checks
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    rules: RuleArgs,
    /// Output file, one `{name, report}` object per line [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Corpus-format file holding the problem
    #[arg(long)]
    problem: PathBuf,
    /// Zero-based line index of the problem
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Write SVG here instead of printing ASCII
    #[arg(long)]
    svg: Option<PathBuf>,
    /// SVG cell size in pixels [source: tool default]
    #[arg(long, default_value_t = 32.0)]
    cell_size: f64,
    /// Omit row and column labels from the SVG
    #[arg(long)]
    no_labels: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Problems to generate [source: tool default]
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Generator seed [source: tool default]
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    seed: u64,
    /// Output file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Checkpoint to serve; model endpoints answer 503 without one
    #[arg(long)]
    model: Option<PathBuf>,
    /// Corpus for duplicate checks
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    rules: RuleArgs,
    /// Address to bind [source: tool default]
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Port to listen on [source: tool default]
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Single origin allowed by CORS [default: any]
    #[arg(long)]
    allow_origin: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidFraction(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<BoardError> for CliError {
    fn from(e: BoardError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<VaeError> for CliError {
    fn from(e: VaeError) -> Self {
        match e {
            VaeError::NonFiniteLoss { .. }
            | VaeError::NonFiniteLatent(_)
            | VaeError::Nn(NnError::NonFiniteGradient { .. }) => CliError::Numeric(e.to_string()),
            VaeError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Model(v) => v.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Runs one invocation with the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs one invocation, writing normal output to `out` and diagnostics to `err`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let result = parse(args).and_then(|cli| match cli {
        Ok(cli) => execute(cli.command, out, err),
        Err(text) => {
            let _ = write!(out, "{text}");
            Ok(())
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

/// Parses arguments after merging any config file. `Ok(Err(text))` carries
/// help or version output.
fn parse(mut args: Vec<OsString>) -> Result<Result<Cli, String>, CliError> {
    let command = Cli::command().mut_subcommands(|s| s.args_override_self(true));
    if let Some((path, insert_at, sub)) = locate_config(&args, &command) {
        let extra = config_args(&path, &command, &sub)?;
        args.splice(insert_at..insert_at, extra);
    }
    match command.try_get_matches_from(args) {
        Ok(m) => Cli::from_arg_matches(&m).map(Ok).map_err(|e| CliError::Usage(e.to_string())),
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            Ok(Err(e.render().to_string()))
        }
        Err(e) => Err(CliError::Usage(e.render().to_string().trim_end().trim_start_matches("error: ").to_owned())),
    }
}

/// Finds `--config` and the subcommand token. Returns the config path, the
/// index just after the subcommand and the subcommand name.
fn locate_config(args: &[OsString], command: &clap::Command) -> Option<(PathBuf, usize, String)> {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if sub.is_none() && command.find_subcommand(a.as_ref()).is_some() {
            sub = Some((i + 1, a.into_owned()));
        }
        i += 1;
    }
    let (at, name) = sub?;
    Some((config?, at, name))
}

fn config_args(path: &Path, command: &clap::Command, sub: &str) -> Result<Vec<OsString>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let table: toml::Table =
        text.parse().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let target = command.find_subcommand(sub).expect("subcommand located by name");
    let has_flag = |c: &clap::Command, key: &str| c.get_arguments().any(|a| a.get_long() == Some(key));
    let mut out = Vec::new();
    let mut push = |key: &str, value: &toml::Value| -> Result<(), CliError> {
        let arg = target.get_arguments().find(|a| a.get_long() == Some(key)).expect("checked by caller");
        let takes_value = !matches!(arg.get_action(), ArgAction::SetTrue | ArgAction::SetFalse);
        let text = match value {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) if !takes_value => {
                if *b {
                    out.push(OsString::from(format!("--{key}")));
                }
                return Ok(());
            }
            toml::Value::Boolean(b) => b.to_string(),
            _ => return Err(CliError::Usage(format!("{}: unsupported value for {key}", path.display()))),
        };
        if !takes_value {
            return Err(CliError::Usage(format!("{}: {key} expects true or false", path.display())));
        }
        out.push(OsString::from(format!("--{key}")));
        out.push(OsString::from(text));
        Ok(())
    };
    for (key, value) in &table {
        if let toml::Value::Table(inner) = value {
            if command.find_subcommand(key).is_none() {
                return Err(CliError::Usage(format!("{}: unknown section [{key}]", path.display())));
            }
            if key != sub {
                continue;
            }
            for (k, v) in inner {
                if !has_flag(target, k) {
                    return Err(CliError::Usage(format!("{}: [{key}] has no option {k}", path.display())));
                }
                push(k, v)?;
            }
        } else if has_flag(target, key) {
            push(key, value)?;
        } else if !command.get_subcommands().any(|c| has_flag(c, key)) {
            return Err(CliError::Usage(format!("{}: unknown option {key}", path.display())));
        }
    }
    Ok(out)
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Train(a) => train_cmd(a, out, err),
        Command::Generate(a) => generate_cmd(a, out, err),
        Command::Validate(a) => validate_cmd(a, out, err),
        Command::Render(a) => render_cmd(a, out),
        Command::Synth(a) => synth_cmd(a, out),
        Command::Serve(a) => serve_cmd(a),
    }
}

/// Runs `write` against the named file, or `stdout` when no path is given.
fn with_output(
    path: Option<&Path>,
    stdout: &mut dyn Write,
    write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut file = BufWriter::new(File::create(p).map_err(io_error(p))?);
            write(&mut file).and_then(|()| file.flush()).map_err(io_error(p))
        }
        None => write(stdout).map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn optional_corpus(path: Option<&Path>) -> Result<Option<Corpus>, CliError> {
    Ok(path.map(load_corpus).transpose()?)
}

fn default_loss_log(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if a.latent == 0 {
        return Err(CliError::Usage("--latent must be at least 1".into()));
    }
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(CliError::Usage("--lr must be a positive number".into()));
    }
    let corpus = load_corpus(&a.corpus)?;
    let (train_set, test_set) = if a.no_split {
        (corpus, None)
    } else {
        let (train, test) = split_corpus(&corpus, SplitSpec::new(a.test_fraction, a.seed)?)?;
        (train, Some(test))
    };

    let mut cfg = TrainConfig { epochs: a.epochs, batch_size: a.batch, seed: a.seed, ..Default::default() };
    cfg.adam.learning_rate = a.lr;
    let mut model = VaeModel::new(Architecture::with_latent(a.latent), a.seed);
    let every = (a.epochs / 20).max(1);
    let report = train_with(&mut model, &train_set, &cfg, |epoch, loss| {
        if epoch % every == 0 || epoch == 1 {
            log::info!("epoch {epoch}/{}: loss {:.4}", a.epochs, loss.total);
        }
    })?;
    for w in &report.warnings {
        let _ = writeln!(err, "warning: {w}");
    }

    let test_loss = test_set.as_ref().map(|t| {
        let vectors: Vec<_> = t.iter().map(|p| p.to_vector()).collect();
        model.evaluate(&vectors, &cfg.weights, a.seed)
    });
    let final_loss = report.history.last().copied();
    let meta = TrainingMeta {
        train_config: Some(TrainConfig { batch_size: report.batch_size, ..cfg }),
        corpus_source: Some(train_set.source.clone()),
        final_train_loss: final_loss,
        test_loss,
    };
    let sidecar = checkpoint::save(&model, &a.out, &meta)?;
    let log_path = a.loss_log.unwrap_or_else(|| default_loss_log(&a.out));
    with_output(Some(&log_path), out, |w| write_loss_csv(&report.history, w))?;

    let total = |l: Option<crate::vae::LossBreakdown>| l.map_or("n/a".to_owned(), |l| format!("{:.4}", l.total));
    writeln!(
        out,
        "trained {} epochs on {} problems; train loss {}, test loss {}\ncheckpoint {} (sha256 {})\nloss log {}",
        a.epochs,
        train_set.len(),
        total(final_loss),
        total(test_loss),
        a.out.display(),
        sidecar.checkpoint_sha256,
        log_path.display()
    )
    .map_err(|e| CliError::Data(e.to_string()))
}

fn generate_cmd(a: GenerateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let (model, _) = checkpoint::load(&a.model)?;
    let corpus = optional_corpus(a.corpus.as_deref())?;
    let cfg = GenConfig {
        count: a.count,
        seed: a.seed,
        k_mode: a.k.map_or(KMode::ExpectedCount, KMode::Fixed),
        rules: a.rules.rules(),
    };
    let candidates = generate_batch(&model, corpus.as_ref(), &cfg)?;
    with_output(a.out.as_deref(), out, |w| write_candidates(&candidates, w))?;
    let reports: Vec<&ValidationReport> = candidates.iter().map(|c| &c.report).collect();
    write_summary(err, &summarize(&reports));
    Ok(())
}

fn write_summary(err: &mut dyn Write, s: &crate::generation::BatchSummary) {
    let _ = writeln!(
        err,
        "{} candidates: {} valid, {} below min holds, {} without finish, {} without start, {} unreachable, {} duplicates",
        s.total,
        s.valid,
        s.total - s.min_holds_pass,
        s.finish_fail,
        s.start_fail,
        s.reachable_fail,
        s.duplicates
    );
}

#[derive(Serialize)]
struct ReportLine<'a> {
    name: &'a str,
    report: &'a ValidationReport,
}

fn validate_cmd(a: ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let problems = load_corpus(&a.problems)?;
    let corpus = optional_corpus(a.corpus.as_deref())?;
    let rules = a.rules.rules();
    let reports: Vec<ValidationReport> =
        problems.iter().map(|p| validate_against(p, &rules, corpus.as_ref())).collect();
    with_output(a.out.as_deref(), out, |w| {
        for (p, report) in problems.iter().zip(&reports) {
            serde_json::to_writer(&mut *w, &ReportLine { name: p.name(), report })?;
            w.write_all(b"\n")?;
        }
        w.flush()
    })?;
    write_summary(err, &summarize(&reports.iter().collect::<Vec<_>>()));
    Ok(())
}

fn render_cmd(a: RenderArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.cell_size > 0.0 && a.cell_size.is_finite()) {
        return Err(CliError::Usage("--cell-size must be a positive number".into()));
    }
    let corpus = load_corpus(&a.problem)?;
    let problem = corpus.problems.get(a.index).ok_or_else(|| {
        CliError::Data(format!("{}: no problem at index {} ({} problems)", a.problem.display(), a.index, corpus.len()))
    })?;
    match &a.svg {
        Some(path) => {
            let style = RenderStyle { cell_size: a.cell_size, labels: !a.no_labels, ..Default::default() };
            with_output(Some(path), out, |w| w.write_all(render_svg(problem, &style).as_bytes()))
        }
        None => with_output(None, out, |w| w.write_all(render_ascii(problem).as_bytes())),
    }
}

fn synth_cmd(a: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let corpus = synth_corpus(a.seed, a.count);
    with_output(a.out.as_deref(), out, |w| write_corpus(&corpus, w))
}

fn serve_cmd(a: ServeArgs) -> Result<(), CliError> {
    let model = a
        .model
        .as_deref()
        .map(|p| checkpoint::load(p).map(|(model, sidecar)| LoadedModel { model, sidecar }))
        .transpose()?;
    let session = ApiSession { model, corpus: optional_corpus(a.corpus.as_deref())?, rules: a.rules.rules() };
    let config = ServerConfig { bind: a.bind, port: a.port, allowed_origin: a.allow_origin };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    runtime
        .block_on(service::serve(session, &config))
        .map_err(|e| CliError::Data(format!("{}:{}: {e}", config.bind, config.port)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_with(std::iter::once("routegen").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_defaults_with_sources() {
        let (code, out, _) = run_capture(&["train", "--help"]);
        assert_eq!(code, 0);
        for needle in ["[default: 2000]", "[default: 512]", "[default: 16]", "source: reference setup"] {
            assert!(out.contains(needle), "{needle} missing from:\n{out}");
        }
        let (_, out, _) = run_capture(&["generate", "--help"]);
        assert!(out.contains("[default: 6]") && out.contains("[default: 50]"));
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run_capture(&[]).0, 1);
        assert_eq!(run_capture(&["fly"]).0, 1);
        assert_eq!(run_capture(&["train", "--epochs", "x"]).0, 1);
        let (code, _, err) = run_capture(&["render"]);
        assert_eq!(code, 1);
        assert!(err.contains("--problem"));
    }

    #[test]
    fn missing_input_exits_2() {
        let (code, _, err) = run_capture(&["validate", "--problems", "/nonexistent/x.jsonl"]);
        assert_eq!(code, 2);
        assert!(err.contains("/nonexistent/x.jsonl"));
    }

    #[test]
    fn config_file_supplies_defaults_and_flags_override() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("routegen.toml");
        std::fs::write(&cfg, "seed = 4\nmin-holds = 7\n[synth]\ncount = 3\n").unwrap();
        let cfg = cfg.to_str().unwrap();

        let (code, from_file, _) = run_capture(&["--config", cfg, "synth"]);
        assert_eq!(code, 0);
        assert_eq!(from_file.lines().count(), 3);
        let (_, direct, _) = run_capture(&["synth", "--count", "3", "--seed", "4"]);
        assert_eq!(from_file, direct);

        let (_, overridden, _) = run_capture(&["synth", "--config", cfg, "--count", "5"]);
        assert_eq!(overridden.lines().count(), 5);
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("bad.toml");
        std::fs::write(&cfg, "colour = 3\n").unwrap();
        let (code, _, err) = run_capture(&["--config", cfg.to_str().unwrap(), "synth"]);
        assert_eq!(code, 1);
        assert!(err.contains("colour"));
    }
}
