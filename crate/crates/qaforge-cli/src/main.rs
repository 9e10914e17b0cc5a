//! Command-line front end over the qaforge library: ingest a corpus,
//! synthesize examples, inspect datasets, run a candidate model, and
//! judge its predictions, all under one layered configuration.
//!
//! Configuration resolves in order: built-in defaults, then the TOML
//! file named by `--config`, then `QAFORGE_*` environment variables,
//! then flags. The fully resolved configuration is echoed to the output
//! directory before any stage runs, and re-running from that echo with
//! `--mock` reproduces the outputs byte for byte.
//!
//! Exit codes: 0 success, 1 fatal configuration problem, 2 runtime
//! failure (including interruption), 3 input validation failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qaforge::agents::{
    AgentBackend, AgentError, AgentRole, Agents, HttpBackend, HttpBackendConfig, MockBackend,
    MockScript, PromptLibrary, Task2Class,
};
use qaforge::corpus::{
    load_documents, CorpusFormat, Document, Domain, IngestOptions, Language, MalformedPolicy,
};
use qaforge::dataset::{
    assign_splits, compute_stats, read_examples, render_stats_text, sample_for_manual_review,
    write_atomic, write_attrition, write_examples, SplitRatios,
};
use qaforge::eval::{
    judge_predictions, read_predictions, render_eval_text, report_outcome, run_candidate,
    write_judgments, write_predictions, EvalOptions, EvalReport,
};
use qaforge::pipeline::{funnel, run, CancelToken, Label, RunOptions, SynthesisConfig};
use qaforge::{fixtures, Error, Result};

const EXIT_HELP: &str = "Environment:
  QAFORGE_SEED     overrides the seed (as --seed)
  QAFORGE_WORKERS  overrides the worker count (as --workers)
  QAFORGE_OUT      overrides the output directory (as --out)
  QAFORGE_MOCK     1/true forces --mock, 0/false clears a config-file mock
  Backend auth tokens are read from the variable named by backend.auth_env.

Exit codes:
  0  success
  1  fatal configuration problem (bad config, missing backend auth)
  2  runtime failure or interruption
  3  input validation failure (malformed records, id mismatches)";

#[derive(Debug, Parser)]
#[command(
    name = "qaforge",
    version,
    about = "Synthesize and evaluate long-context QA benchmarks with LLM agents",
    after_help = EXIT_HELP
)]
struct Cli {
    /// TOML configuration file; environment and flags override it.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Replace every agent backend with the deterministic offline mock.
    #[arg(long, global = true)]
    mock: bool,

    /// JSON rule script layered over the mock simulator.
    #[arg(long, global = true, value_name = "PATH")]
    mock_script: Option<PathBuf>,

    /// Seed for synthesis, sampling, splits, and the mock backend.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-document and per-prediction fan-out.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory; every file a run writes lands under it.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read raw documents into the normalized corpus format.
    Ingest(IngestArgs),
    /// Run the full synthesis flow over a corpus.
    Synthesize(SynthesizeArgs),
    /// Tabulate an example file by language, label, domain, and length.
    Stats(StatsArgs),
    /// Draw a seeded sample of examples as a review sheet.
    SampleReview(SampleReviewArgs),
    /// Run the candidate model over every example.
    Predict(PredictArgs),
    /// Judge predictions against their examples and report accuracy.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// A directory of .txt files or a JSON-lines file, per --format.
    #[arg(long)]
    input: PathBuf,

    #[arg(long, value_enum)]
    format: IngestFormatArg,

    /// Language for documents that do not declare one.
    #[arg(long, value_enum, default_value = "en")]
    language: LanguageArg,

    /// Domain for documents that do not declare one.
    #[arg(long, value_enum, default_value = "other")]
    domain: DomainArg,

    /// Skip malformed records with a note instead of failing.
    #[arg(long)]
    skip_malformed: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IngestFormatArg {
    /// Directory of .txt files with optional .meta.json sidecars.
    TextDir,
    /// One JSON object per line: id, text, optional language and domain.
    Jsonl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LanguageArg {
    En,
    Zh,
}

impl From<LanguageArg> for Language {
    fn from(value: LanguageArg) -> Language {
        match value {
            LanguageArg::En => Language::En,
            LanguageArg::Zh => Language::Zh,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DomainArg {
    Law,
    Books,
    Other,
}

impl From<DomainArg> for Domain {
    fn from(value: DomainArg) -> Domain {
        match value {
            DomainArg::Law => Domain::Law,
            DomainArg::Books => Domain::Books,
            DomainArg::Other => Domain::Other,
        }
    }
}

#[derive(Debug, Args)]
struct SynthesizeArgs {
    /// Corpus file written by `ingest` (one document per line).
    #[arg(long, conflicts_with = "fixture_docs")]
    corpus: Option<PathBuf>,

    /// Synthesize from the bundled bilingual fixture corpus instead.
    #[arg(long, value_name = "DOCS")]
    fixture_docs: Option<usize>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Example file to tabulate.
    #[arg(long)]
    examples: PathBuf,

    /// Also assign train/development/test splits and break counts out.
    #[arg(long)]
    splits: bool,
}

#[derive(Debug, Args)]
struct SampleReviewArgs {
    #[arg(long)]
    examples: PathBuf,

    /// Examples to sample.
    #[arg(long, default_value_t = 10)]
    count: usize,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    examples: PathBuf,

    /// Candidate model name recorded on every prediction.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    examples: PathBuf,

    /// Predictions to judge; omitted, the candidate model runs first.
    #[arg(long)]
    predictions: Option<PathBuf>,

    /// Candidate model name when predictions are generated here.
    #[arg(long)]
    model: Option<String>,

    /// Which task sections the report includes.
    #[arg(long, value_enum, default_value = "all")]
    task: TaskFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskFilter {
    All,
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

/// On-disk and echoed configuration. Every field is optional so a file
/// can state only what it changes; the echo states everything.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    mock: Option<bool>,
    /// Convenience alias for synthesis.seed; the flag wins over both.
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixture_docs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mock_script: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidate_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    synthesis: Option<SynthesisConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    backend: Option<HttpBackendConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eval: Option<EvalOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    splits: Option<SplitRatios>,
}

/// Configuration after layering, validated and ready to run.
#[derive(Debug)]
struct Resolved {
    mock: bool,
    workers: usize,
    out: PathBuf,
    corpus: Option<PathBuf>,
    fixture_docs: Option<usize>,
    mock_script: Option<PathBuf>,
    candidate_model: Option<String>,
    synthesis: SynthesisConfig,
    backend: Option<HttpBackendConfig>,
    eval: EvalOptions,
    splits: SplitRatios,
}

impl Resolved {
    fn echo(&self) -> FileConfig {
        FileConfig {
            mock: Some(self.mock),
            seed: None,
            workers: Some(self.workers),
            out: Some(self.out.clone()),
            corpus: self.corpus.clone(),
            fixture_docs: self.fixture_docs,
            mock_script: self.mock_script.clone(),
            candidate_model: self.candidate_model.clone(),
            synthesis: Some(self.synthesis.clone()),
            backend: self.backend.clone(),
            eval: Some(self.eval.clone()),
            splits: Some(self.splits),
        }
    }

    fn run_options(&self, cancel: &CancelToken) -> RunOptions {
        RunOptions {
            workers: self.workers,
            cancel: cancel.clone(),
        }
    }
}

fn load_file_config(path: &Path) -> Result<FileConfig> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read config {}: {e}", path.display())]))?;
    toml::from_str(&raw)
        .map_err(|e| Error::Config(vec![format!("config {}: {e}", path.display())]))
}

fn env_string(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

/// Layer defaults, file, environment, and flags into one configuration,
/// collecting every problem instead of stopping at the first.
fn resolve(cli: &Cli) -> Result<Resolved> {
    let file = match &cli.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    let mut problems = Vec::new();

    let mut synthesis = file.synthesis.unwrap_or_default();
    if let Some(seed) = file.seed {
        synthesis.seed = seed;
    }
    if let Some(raw) = env_string("QAFORGE_SEED") {
        match raw.parse() {
            Ok(seed) => synthesis.seed = seed,
            Err(_) => problems.push(format!("QAFORGE_SEED must be an unsigned integer, got {raw:?}")),
        }
    }
    if let Some(seed) = cli.seed {
        synthesis.seed = seed;
    }

    let mut workers = file.workers.unwrap_or_else(|| RunOptions::default().workers);
    if let Some(raw) = env_string("QAFORGE_WORKERS") {
        match raw.parse() {
            Ok(n) => workers = n,
            Err(_) => problems.push(format!("QAFORGE_WORKERS must be an unsigned integer, got {raw:?}")),
        }
    }
    if let Some(n) = cli.workers {
        workers = n;
    }
    if workers == 0 {
        problems.push("workers must be at least 1".to_string());
    }

    let mut mock = file.mock.unwrap_or(false);
    if let Some(raw) = env_string("QAFORGE_MOCK") {
        match raw.as_str() {
            "1" | "true" => mock = true,
            "0" | "false" => mock = false,
            other => problems.push(format!("QAFORGE_MOCK must be 1/true or 0/false, got {other:?}")),
        }
    }
    if cli.mock {
        mock = true;
    }

    let mut out = file.out.unwrap_or_else(|| PathBuf::from("qaforge-out"));
    if let Some(raw) = env_string("QAFORGE_OUT") {
        out = PathBuf::from(raw);
    }
    if let Some(path) = &cli.out {
        out = path.clone();
    }

    if let Some(0) = file.fixture_docs {
        problems.push("fixture_docs must be at least 1".to_string());
    }
    if let Err(Error::Config(more)) = synthesis.validate() {
        problems.extend(more);
    }
    let splits = file.splits.unwrap_or_default();
    if let Err(err) = splits.validate() {
        problems.push(err.to_string());
    }

    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    Ok(Resolved {
        mock,
        workers,
        out,
        corpus: file.corpus,
        fixture_docs: file.fixture_docs,
        mock_script: cli.mock_script.clone().or(file.mock_script),
        candidate_model: file.candidate_model,
        synthesis,
        backend: file.backend,
        eval: file.eval.unwrap_or_default(),
        splits,
    })
}

/// Create the output directory and echo the resolved configuration into
/// it. Runs before any stage so even a failed run records its intent.
fn prepare_out(resolved: &Resolved) -> Result<()> {
    std::fs::create_dir_all(&resolved.out).map_err(|e| io_error(&resolved.out, e))?;
    let rendered = toml::to_string_pretty(&resolved.echo())
        .map_err(|e| Error::Config(vec![format!("cannot render resolved config: {e}")]))?;
    write_atomic(&resolved.out.join("resolved-config.toml"), rendered.as_bytes())
}

enum BackendHandle {
    Mock(MockBackend),
    Http(HttpBackend),
}

impl BackendHandle {
    fn as_dyn(&self) -> &dyn AgentBackend {
        match self {
            BackendHandle::Mock(backend) => backend,
            BackendHandle::Http(backend) => backend,
        }
    }
}

/// Build the one backend a command's roles share. Without `--mock` a
/// `[backend]` section is required, and a missing auth token fails fast
/// with one line naming each role that needed it.
fn build_backend(resolved: &Resolved, roles: &[AgentRole]) -> Result<BackendHandle> {
    if resolved.mock {
        let seed = resolved.synthesis.seed;
        let backend = match &resolved.mock_script {
            Some(path) => MockBackend::from_script(MockScript::from_path(path)?, seed),
            None => MockBackend::simulated(seed),
        };
        return Ok(BackendHandle::Mock(backend));
    }
    let Some(config) = &resolved.backend else {
        return Err(Error::Config(vec![
            "this command calls agent backends: add a [backend] section or pass --mock".to_string(),
        ]));
    };
    match HttpBackend::new(config.clone()) {
        Ok(backend) => Ok(BackendHandle::Http(backend)),
        Err(Error::Agent(AgentError::MissingAuth(var))) => Err(Error::Config(
            roles
                .iter()
                .map(|role| format!("role {role}: auth token variable {var} is unset or empty"))
                .collect(),
        )),
        Err(other) => Err(other),
    }
}

const SYNTHESIS_ROLES: [AgentRole; 9] = [
    AgentRole::QualityScorer,
    AgentRole::TopicSelector,
    AgentRole::QaGenerator,
    AgentRole::QaJudge,
    AgentRole::QuestionRewriter,
    AgentRole::GoldWriter,
    AgentRole::ReviewAnswerer,
    AgentRole::ConsistencyJudge,
    AgentRole::CommonSenseJudge,
];

const JUDGE_ROLES: [AgentRole; 3] = [
    AgentRole::Task1JudgeAnswerable,
    AgentRole::Task1JudgeUnanswerable,
    AgentRole::Task2Judge,
];

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid_data(path: &Path, message: impl ToString) -> Error {
    io_error(
        path,
        std::io::Error::new(std::io::ErrorKind::InvalidData, message.to_string()),
    )
}

fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let raw = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut documents = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let document: Document = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        documents.push(document);
    }
    Ok(documents)
}

fn write_documents(documents: &[Document], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for document in documents {
        serde_json::to_writer(&mut out, document).map_err(|e| invalid_data(path, e))?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

fn write_json_pretty<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| invalid_data(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Drop a marker file recording that cancellation cut the run short, so
/// downstream consumers never mistake partial output for a full run.
fn mark_partial(out: &Path) -> Result<()> {
    write_atomic(
        &out.join("PARTIAL"),
        b"interrupted before completion; files cover only the items processed\n",
    )
}

fn cmd_ingest(resolved: &Resolved, args: &IngestArgs) -> Result<()> {
    let format = match args.format {
        IngestFormatArg::TextDir => CorpusFormat::PlainTextDir,
        IngestFormatArg::Jsonl => CorpusFormat::JsonLines,
    };
    let options = IngestOptions {
        default_language: args.language.into(),
        default_domain: args.domain.into(),
        on_malformed: if args.skip_malformed {
            MalformedPolicy::Skip
        } else {
            MalformedPolicy::Fatal
        },
    };
    let outcome = load_documents(&args.input, format, &options)?;
    let path = resolved.out.join("documents.jsonl");
    write_documents(&outcome.documents, &path)?;
    for note in &outcome.skipped {
        println!("skipped: {note}");
    }
    for note in &outcome.truncated {
        println!("truncated: {note}");
    }
    println!(
        "ingested {} documents ({} skipped) -> {}",
        outcome.documents.len(),
        outcome.skipped.len(),
        path.display()
    );
    Ok(())
}

fn cmd_synthesize(resolved: &Resolved, cancel: &CancelToken) -> Result<()> {
    let corpus = match (resolved.fixture_docs, resolved.corpus.as_ref()) {
        (Some(0), _) => {
            return Err(Error::Config(vec!["--fixture-docs must be at least 1".to_string()]))
        }
        (Some(docs), _) => fixtures::sample_corpus(docs, resolved.synthesis.seed),
        (None, Some(path)) => read_documents(path)?,
        (None, None) => {
            return Err(Error::Config(vec![
                "synthesize needs --corpus, --fixture-docs, or a corpus path in the config".to_string(),
            ]))
        }
    };
    let backend = build_backend(resolved, &SYNTHESIS_ROLES)?;
    let prompts = PromptLibrary::bundled();
    let options = resolved.run_options(cancel);
    let outcome = run(&corpus, &resolved.synthesis, &prompts, backend.as_dyn(), &options)?;

    let examples_path = resolved.out.join("examples.jsonl");
    write_examples(&outcome.examples, &examples_path)?;
    write_attrition(&outcome.attrition, &resolved.out.join("attrition.json"))?;

    let report = funnel(&outcome.attrition)?;
    println!("funnel:");
    for (counts, stage) in outcome.attrition.stages.iter().zip(&report.stages) {
        println!(
            "  {:<20} {:>6} in  {:>6} kept  retention {:.4}",
            counts.stage.name(),
            counts.input,
            counts.kept,
            stage.retention
        );
    }
    println!("  overall retention {:.4}", report.overall);

    let mut labels = [0usize; 3];
    for example in &outcome.examples {
        match example.label {
            Label::Answerable => labels[0] += 1,
            Label::LackOfEvidence => labels[1] += 1,
            Label::Misleading => labels[2] += 1,
        }
    }
    println!(
        "kept {} examples (answerable {}, lack_of_evidence {}, misleading {}) -> {}",
        outcome.examples.len(),
        labels[0],
        labels[1],
        labels[2],
        examples_path.display()
    );

    if outcome.interrupted {
        mark_partial(&resolved.out)?;
        eprintln!("interrupted: partial outputs marked in {}", resolved.out.display());
        return Err(Error::Interrupted);
    }
    Ok(())
}

fn cmd_stats(resolved: &Resolved, args: &StatsArgs) -> Result<()> {
    let examples = read_examples(&args.examples)?;
    let split = if args.splits {
        Some(assign_splits(&examples, resolved.splits, resolved.synthesis.seed)?)
    } else {
        None
    };
    let report = compute_stats(&examples, split.as_ref());
    let text = render_stats_text(&report);
    print!("{text}");
    write_atomic(&resolved.out.join("stats.txt"), text.as_bytes())?;
    write_json_pretty(&report, &resolved.out.join("stats.json"))?;
    Ok(())
}

fn cmd_sample_review(resolved: &Resolved, args: &SampleReviewArgs) -> Result<()> {
    let examples = read_examples(&args.examples)?;
    let sheet = sample_for_manual_review(&examples, args.count, resolved.synthesis.seed)?;
    let path = resolved.out.join("review-sample.tsv");
    write_atomic(&path, sheet.as_bytes())?;
    println!(
        "sampled {} of {} examples -> {}",
        args.count,
        examples.len(),
        path.display()
    );
    Ok(())
}

fn candidate_model(resolved: &Resolved) -> String {
    resolved
        .candidate_model
        .clone()
        .unwrap_or_else(|| resolved.synthesis.bindings.for_role(AgentRole::Candidate).model)
}

fn cmd_predict(resolved: &Resolved, args: &PredictArgs, cancel: &CancelToken) -> Result<()> {
    let examples = read_examples(&args.examples)?;
    let backend = build_backend(resolved, &[AgentRole::Candidate])?;
    let prompts = PromptLibrary::bundled();
    let agents = Agents::new(
        backend.as_dyn(),
        &prompts,
        &resolved.synthesis.bindings,
        &resolved.synthesis.refusal,
    );
    let model = candidate_model(resolved);
    let options = resolved.run_options(cancel);
    let outcome = run_candidate(&examples, &agents, &model, &resolved.eval, &options);

    let path = resolved.out.join("predictions.jsonl");
    write_predictions(&outcome.predictions, &path)?;
    let flagged = outcome.predictions.iter().filter(|p| p.flag.is_some()).count();
    println!(
        "wrote {} predictions for model {model} ({flagged} flagged) -> {}",
        outcome.predictions.len(),
        path.display()
    );
    if outcome.interrupted {
        mark_partial(&resolved.out)?;
        eprintln!("interrupted: partial outputs marked in {}", resolved.out.display());
        return Err(Error::Interrupted);
    }
    Ok(())
}

/// Render the report under the task filter. Task 1 keeps the accuracy
/// tables and drops the class breakdown; task 2 keeps only the class
/// breakdown.
fn render_filtered(report: &EvalReport, task: TaskFilter) -> (String, serde_json::Value) {
    match task {
        TaskFilter::All => (
            render_eval_text(report),
            serde_json::to_value(report).expect("report serializes"),
        ),
        TaskFilter::One => {
            let mut gated = report.clone();
            gated.task2 = None;
            (
                render_eval_text(&gated),
                serde_json::to_value(&gated).expect("report serializes"),
            )
        }
        TaskFilter::Two => match &report.task2 {
            Some(task2) => {
                let mut text = format!(
                    "task 2 classes over {} judged unanswerable predictions\n",
                    task2.total()
                );
                let width = Task2Class::ALL
                    .iter()
                    .map(|class| class.name().len())
                    .max()
                    .unwrap_or(0);
                for class in Task2Class::ALL {
                    text.push_str(&format!(
                        "  {:<width$}  {:6.2}%  ({})\n",
                        class.name(),
                        task2.percent(class),
                        task2.count(class),
                    ));
                }
                (text, serde_json::json!({ "task2": task2 }))
            }
            None => (
                "no task 2 judgments\n".to_string(),
                serde_json::json!({ "task2": null }),
            ),
        },
    }
}

fn cmd_evaluate(resolved: &Resolved, args: &EvaluateArgs, cancel: &CancelToken) -> Result<()> {
    let examples = read_examples(&args.examples)?;
    let options = resolved.run_options(cancel);

    let predictions = match &args.predictions {
        Some(path) => read_predictions(path)?,
        None => {
            let backend = build_backend(resolved, &[AgentRole::Candidate])?;
            let prompts = PromptLibrary::bundled();
            let agents = Agents::new(
                backend.as_dyn(),
                &prompts,
                &resolved.synthesis.bindings,
                &resolved.synthesis.refusal,
            );
            let model = candidate_model(resolved);
            let outcome = run_candidate(&examples, &agents, &model, &resolved.eval, &options);
            write_predictions(&outcome.predictions, &resolved.out.join("predictions.jsonl"))?;
            if outcome.interrupted {
                mark_partial(&resolved.out)?;
                eprintln!("interrupted: partial outputs marked in {}", resolved.out.display());
                return Err(Error::Interrupted);
            }
            outcome.predictions
        }
    };

    let backend = build_backend(resolved, &JUDGE_ROLES)?;
    let prompts = PromptLibrary::bundled();
    let agents = Agents::new(
        backend.as_dyn(),
        &prompts,
        &resolved.synthesis.bindings,
        &resolved.synthesis.refusal,
    );
    let outcome = judge_predictions(&examples, &predictions, &agents, &resolved.eval, &options)?;

    let judgments_path = resolved.out.join("judgments.jsonl");
    write_judgments(&outcome.judgments, &judgments_path)?;
    println!("wrote {} judgments -> {}", outcome.judgments.len(), judgments_path.display());
    for (reason, count) in outcome.exclusion_counts() {
        println!("excluded {}: {count}", reason.name());
    }
    if outcome.interrupted {
        mark_partial(&resolved.out)?;
        eprintln!(
            "interrupted: judgments are partial, report skipped; marked in {}",
            resolved.out.display()
        );
        return Err(Error::Interrupted);
    }

    let report = report_outcome(&outcome, &examples)?;
    let (text, json) = render_filtered(&report, args.task);
    print!("{text}");
    write_atomic(&resolved.out.join("report.txt"), text.as_bytes())?;
    write_json_pretty(&json, &resolved.out.join("report.json"))?;
    Ok(())
}

fn dispatch(cli: &Cli, cancel: &CancelToken) -> Result<()> {
    let mut resolved = resolve(cli)?;
    // Subcommand flags that shape the run land in the resolved config
    // too, so the echo alone can reproduce it.
    match &cli.command {
        Command::Synthesize(args) => {
            if let Some(docs) = args.fixture_docs {
                resolved.fixture_docs = Some(docs);
                resolved.corpus = None;
            }
            if let Some(path) = &args.corpus {
                resolved.corpus = Some(path.clone());
                resolved.fixture_docs = None;
            }
        }
        Command::Predict(args) => {
            if let Some(model) = &args.model {
                resolved.candidate_model = Some(model.clone());
            }
        }
        Command::Evaluate(args) => {
            if let Some(model) = &args.model {
                resolved.candidate_model = Some(model.clone());
            }
        }
        _ => {}
    }
    prepare_out(&resolved)?;
    match &cli.command {
        Command::Ingest(args) => cmd_ingest(&resolved, args),
        Command::Synthesize(_) => cmd_synthesize(&resolved, cancel),
        Command::Stats(args) => cmd_stats(&resolved, args),
        Command::SampleReview(args) => cmd_sample_review(&resolved, args),
        Command::Predict(args) => cmd_predict(&resolved, args, cancel),
        Command::Evaluate(args) => cmd_evaluate(&resolved, args, cancel),
    }
}

fn exit_for(error: &Error) -> u8 {
    match error {
        Error::Config(_) | Error::UnboundRole(_) | Error::TemplatePlaceholder { .. } => 1,
        Error::Agent(AgentError::MissingAuth(_)) => 1,
        Error::MalformedRecord { .. }
        | Error::IdMismatch(_)
        | Error::UnknownExample(_)
        | Error::InvalidDocument { .. }
        | Error::NotEnoughFragments { .. }
        | Error::TokenCountOutOfRange(_)
        | Error::SplitRatios(_)
        | Error::TooFewDocuments { .. }
        | Error::SampleTooLarge { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let cancel = CancelToken::new();
    {
        let token = cancel.clone();
        if let Err(err) = ctrlc::set_handler(move || token.cancel()) {
            log::warn!("no interrupt handler: {err}");
        }
    }

    match dispatch(&cli, &cancel) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_for(&error))
        }
    }
}
