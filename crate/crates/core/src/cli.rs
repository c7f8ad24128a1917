//! `apes-eval` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::builder::RangedU64ValueParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attnloss::{random_instance, DEFAULT_FD_STEP};
use crate::corpus::{read_corpus, read_jsonl, read_summaries, LoadedCorpus};
use crate::decode::{
    beam_search, exhaustive_search, full_width, DecodeResult, PenaltyConfig, StepModel, ToyModel,
    EXHAUSTIVE_LIMIT,
};
use crate::error::{Error, Result};
use crate::qgen::{generate_questions, ClozeQuestion};
use crate::reader::{ReaderChoice, DEFAULT_WINDOW};
use crate::report::{evaluate, fixed6};
use crate::stats::{correlation_matrix, level_aggregate, load_grouping, ScoreTable};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "APES_EVAL_THREADS";

/// Gradient checks fail above this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "apes-eval", version, about = "Summary evaluation with ROUGE and cloze-question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate cloze questions from reference highlights
    Qgen(QgenArgs),
    /// Score system summaries with ROUGE and APES
    Evaluate(EvaluateArgs),
    /// Decode a toy step model with beam search and print the score breakdown
    Decode(DecodeArgs),
    /// Compare analytic and finite-difference gradients of the entity-attention loss
    Gradcheck(GradcheckArgs),
    /// Pearson correlation matrix of metric columns
    Correlate(CorrelateArgs),
}

#[derive(Debug, Args)]
struct QgenArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Questions JSONL; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReaderKind {
    Oracle,
    Lexical,
    External,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Reference corpus JSONL
    #[arg(long, visible_alias = "corpus")]
    refs: PathBuf,
    /// System summaries JSONL: {"doc_id": ..., "summary": ...}
    #[arg(long)]
    sys: PathBuf,
    /// Questions JSONL; generated from the references when omitted
    #[arg(long)]
    questions: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lexical")]
    reader: ReaderKind,
    /// Shell command for --reader external
    #[arg(long)]
    reader_cmd: Option<String>,
    /// Context window of the lexical reader
    #[arg(long, default_value_t = DEFAULT_WINDOW, value_parser = RangedU64ValueParser::<usize>::new().range(1..))]
    window: usize,
    /// Report JSON; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Width {
    Full,
    Fixed(usize),
}

fn parse_width(s: &str) -> std::result::Result<Width, String> {
    if s == "full" {
        return Ok(Width::Full);
    }
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(Width::Fixed(n)),
        _ => Err(format!("expected a positive integer or \"full\", got {s:?}")),
    }
}

#[derive(Debug, Args)]
struct DecodeArgs {
    /// Toy model JSON
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Beam width: a positive integer or "full"
    #[arg(long, default_value = "4", value_parser = parse_width)]
    width: Width,
    #[arg(long, default_value_t = 10, value_parser = RangedU64ValueParser::<usize>::new().range(1..))]
    max_len: usize,
    #[arg(long)]
    block_trigrams: bool,
    /// Enumerate every sequence instead of beam search
    #[arg(long)]
    exhaustive: bool,
    /// Comma-separated per-source saliency; overrides the model's
    #[arg(long, value_delimiter = ',')]
    saliency: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50, value_parser = RangedU64ValueParser::<usize>::new().range(1..))]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    step: f64,
}

#[derive(Debug, Args)]
struct CorrelateArgs {
    /// CSV: unit id column, then one column per metric
    #[arg(long)]
    scores: PathBuf,
    /// CSV with header unit,system; correlations are then computed on system means
    #[arg(long)]
    grouping: Option<PathBuf>,
    /// Matrix CSV; printed before the pair report when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything a command prints, buffered per stream.
#[derive(Default)]
struct Output {
    stdout: Vec<u8>,
    stderr: Vec<u8>,
}

impl Output {
    fn warn(&mut self, message: &str) {
        let _ = writeln!(self.stderr, "warning: {message}");
    }

    fn emit(&mut self, out: Option<&Path>, content: &str) -> Result<()> {
        match out {
            Some(path) => fs::write(path, content).map_err(|e| Error::io(path, e)),
            None => self
                .stdout
                .write_all(content.as_bytes())
                .map_err(|e| Error::io("<stdout>", e)),
        }
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.stdout, "{text}").map_err(|e| Error::io("<stdout>", e))
    }
}

fn load_corpus(path: &Path, out: &mut Output) -> Result<LoadedCorpus> {
    let loaded = read_corpus(path)?;
    if !loaded.heuristic_docs.is_empty() {
        out.warn(&format!(
            "no entity annotations for {} document(s) ({}); using the capitalization heuristic",
            loaded.heuristic_docs.len(),
            loaded.heuristic_docs.join(", ")
        ));
    }
    Ok(loaded)
}

fn questions_jsonl(questions: &[ClozeQuestion]) -> Result<String> {
    let mut s = String::new();
    for q in questions {
        s.push_str(&serde_json::to_string(q)?);
        s.push('\n');
    }
    Ok(s)
}

fn cmd_qgen(args: &QgenArgs, out: &mut Output) -> Result<()> {
    let loaded = load_corpus(&args.corpus, out)?;
    let questions: Vec<ClozeQuestion> = loaded
        .corpus
        .documents()
        .iter()
        .flat_map(generate_questions)
        .collect();
    out.emit(args.out.as_deref(), &questions_jsonl(&questions)?)
}

fn reader_choice(args: &EvaluateArgs) -> Result<ReaderChoice> {
    match (args.reader, &args.reader_cmd) {
        (ReaderKind::Oracle, _) => Ok(ReaderChoice::Oracle),
        (ReaderKind::Lexical, _) => Ok(ReaderChoice::Lexical {
            window: args.window,
        }),
        (ReaderKind::External, Some(cmd)) => Ok(ReaderChoice::External { command: cmd.clone() }),
        (ReaderKind::External, None) => Err(Error::InvalidArgument(
            "--reader external requires --reader-cmd".into(),
        )),
    }
}

fn cmd_evaluate(args: &EvaluateArgs, out: &mut Output) -> Result<()> {
    let reader = reader_choice(args)?;
    let corpus = load_corpus(&args.refs, out)?.corpus;
    let summaries = read_summaries(&args.sys)?;
    let questions: Vec<ClozeQuestion> = match &args.questions {
        Some(path) => read_jsonl(path)?,
        None => corpus.documents().iter().flat_map(generate_questions).collect(),
    };
    let ev = evaluate(&corpus, &summaries, &questions, &reader)?;
    for w in &ev.warnings {
        out.warn(w);
    }
    out.emit(args.out.as_deref(), &ev.report.to_json()?)
}

fn decode_config(args: &DecodeArgs, model: &ToyModel) -> Result<PenaltyConfig> {
    let saliency = args
        .saliency
        .clone()
        .or_else(|| model.saliency().map(<[f64]>::to_vec));
    let beam_width = match args.width {
        Width::Fixed(n) => n,
        Width::Full => {
            let space = full_width(model.vocab_size(), args.max_len);
            if space as u128 > EXHAUSTIVE_LIMIT {
                return Err(Error::SearchSpaceTooLarge(space as u128));
            }
            space
        }
    };
    Ok(PenaltyConfig {
        alpha: args.alpha,
        beta: args.beta,
        gamma: args.gamma,
        beam_width,
        max_len: args.max_len,
        block_repeated_trigrams: args.block_trigrams,
        saliency,
    })
}

fn render_decode(model: &ToyModel, result: &DecodeResult) -> Vec<String> {
    let b = &result.breakdown;
    vec![
        format!("sequence: {}", model.render(&result.tokens)),
        format!("finished: {}", result.finished),
        format!("score: {}", fixed6(result.score)),
        format!("logp: {}", fixed6(b.logp)),
        format!("lp: {}", fixed6(b.lp)),
        format!("cp: {}", fixed6(b.cp)),
        format!("ep: {}", fixed6(b.ep)),
    ]
}

fn cmd_decode(args: &DecodeArgs, out: &mut Output) -> Result<()> {
    let model = ToyModel::load(&args.model)?;
    let cfg = decode_config(args, &model)?;
    let result = if args.exhaustive {
        exhaustive_search(&model, &cfg)?
    } else {
        beam_search(&model, &cfg)?
    };
    if !result.finished {
        out.warn("no hypothesis finished within --max-len; showing the best partial one");
    }
    for line in render_decode(&model, &result) {
        out.line(&line)?;
    }
    Ok(())
}

/// Largest relative error over `trials` seeded random instances.
pub fn gradcheck(seed: u64, trials: usize, step: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        worst = worst.max(random_instance(&mut rng).check(step)?);
    }
    Ok(worst)
}

fn cmd_gradcheck(args: &GradcheckArgs, out: &mut Output) -> Result<()> {
    let worst = gradcheck(args.seed, args.trials, args.step)?;
    out.line(&format!("trials: {}", args.trials))?;
    out.line(&format!("max_relative_error: {worst:.6e}"))?;
    if worst > GRADCHECK_TOLERANCE {
        return Err(Error::Invariant(format!(
            "max relative error {worst:.6e} exceeds {GRADCHECK_TOLERANCE:e}"
        )));
    }
    Ok(())
}

fn cmd_correlate(args: &CorrelateArgs, out: &mut Output) -> Result<()> {
    let mut table = ScoreTable::read(&args.scores)?;
    if let Some(path) = &args.grouping {
        table = level_aggregate(&table, &load_grouping(path)?)?;
    }
    let matrix = correlation_matrix(&table)?;
    let mut csv = Vec::new();
    matrix.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv).expect("csv output is utf-8");
    out.emit(args.out.as_deref(), &csv)?;
    for (a, b, r) in matrix.pairs() {
        out.line(&format!("pearson({a}, {b}) = {}", fixed6(r)))?;
    }
    Ok(())
}

fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::InvalidArgument(format!("{THREADS_ENV}: {e}"))),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn dispatch(cli: &Cli, out: &mut Output) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Qgen(a) => cmd_qgen(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Decode(a) => cmd_decode(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::Correlate(a) => cmd_correlate(a, out),
    })
}

/// Run the command line and return the process exit code: 0 on success,
/// 1 for usage and input errors, 2 for invariant violations.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    let mut out = Output::default();
    let code = match dispatch(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(out.stderr, "error: {e}");
            e.exit_code()
        }
    };
    let _ = stdout.write_all(&out.stdout).and_then(|_| stdout.flush());
    let _ = stderr.write_all(&out.stderr).and_then(|_| stderr.flush());
    code
}
