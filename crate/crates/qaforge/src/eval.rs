//! Candidate evaluation: run a model over benchmark examples, judge its
//! predictions, and aggregate accuracy reports.
//!
//! Two judged tasks. Task 1 grades every prediction 0 or 1: on answerable
//! examples the judge checks that the prediction carries the gold
//! information, on unanswerable ones that the prediction recognizes the
//! question cannot be answered. Task 2 applies only to unanswerable
//! examples and sorts predictions into three classes: `incorrect` (the
//! model answered anyway), `direct_refusal` (it declined without
//! explanation), and `reasoned` (it declined and said why the premise
//! fails). The two verdicts are coupled: a prediction classed `incorrect`
//! scored 0 on Task 1, any other class scored 1. [`EvalJudgment`] only
//! constructs when that coupling holds.
//!
//! Predictions that never reached the model (transport failure, context
//! over the candidate's window) carry a [`PredictionFlag`] and score 0 by
//! default; judge replies that cannot be parsed are excluded from both
//! numerator and denominator by default. Both policies are configurable
//! through [`EvalOptions`], and everything excluded is counted in the
//! outcome rather than silently dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{Agents, Task2Class, VerdictError};
use crate::corpus::{count_tokens, Language, LengthBucket};
use crate::dataset::{read_jsonl, write_jsonl};
use crate::error::{Error, Result};
use crate::pipeline::{par_map, BenchmarkExample, Label, RunOptions};

/// Why a prediction was produced without consulting the candidate model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionFlag {
    /// The backend call failed after retries.
    TransportFailed,
    /// The context exceeds the candidate's configured token window.
    ContextOverflow,
}

impl PredictionFlag {
    pub fn name(self) -> &'static str {
        match self {
            PredictionFlag::TransportFailed => "transport_failed",
            PredictionFlag::ContextOverflow => "context_overflow",
        }
    }
}

/// One model's answer to one example. Flagged predictions have an empty
/// answer and never reached the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: String,
    pub model: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<PredictionFlag>,
}

/// What to do with flagged predictions when judging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FlaggedPolicy {
    /// Score 0 on Task 1 and leave the prediction out of Task 2 tallies.
    #[default]
    ScoreZero,
    /// Leave the prediction out of every tally.
    Skip,
}

/// What to do when a judge reply cannot be parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorPolicy {
    /// Leave the prediction out of numerator and denominator alike.
    #[default]
    Exclude,
    /// Score 0, classing unanswerable predictions `incorrect`.
    ScoreZero,
}

/// Evaluation policy knobs. The defaults score flagged predictions 0 and
/// exclude unparseable judge verdicts entirely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub flagged: FlaggedPolicy,
    pub parse_errors: ParseErrorPolicy,
    /// Candidate context window in tokens; contexts over it are flagged
    /// `context_overflow` without calling the model. `None` means no cap.
    pub candidate_window_tokens: Option<usize>,
}

/// Judged scores for one prediction, coupling enforced by construction:
/// `task2_class` is carried only for unanswerable examples, `incorrect`
/// pairs with a Task 1 score of 0 and the other classes with 1. Flagged
/// predictions score 0 with no Task 2 class. The verbatim judge replies
/// ride along for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalJudgment {
    example_id: String,
    task1_score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task2_class: Option<Task2Class>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flag: Option<PredictionFlag>,
    task1_reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task2_reply: Option<String>,
}

impl EvalJudgment {
    /// Judgment for an answerable example: Task 1 only.
    pub fn answerable(
        example_id: impl Into<String>,
        task1_score: u8,
        task1_reply: impl Into<String>,
    ) -> std::result::Result<Self, String> {
        if task1_score > 1 {
            return Err(format!("task1 score {task1_score} is not 0 or 1"));
        }
        Ok(EvalJudgment {
            example_id: example_id.into(),
            task1_score,
            task2_class: None,
            flag: None,
            task1_reply: task1_reply.into(),
            task2_reply: None,
        })
    }

    /// Judgment for an unanswerable example: both tasks, which must agree.
    pub fn unanswerable(
        example_id: impl Into<String>,
        task1_score: u8,
        task2_class: Task2Class,
        task1_reply: impl Into<String>,
        task2_reply: impl Into<String>,
    ) -> std::result::Result<Self, String> {
        if task1_score > 1 {
            return Err(format!("task1 score {task1_score} is not 0 or 1"));
        }
        let coupled = (task2_class != Task2Class::Incorrect) == (task1_score == 1);
        if !coupled {
            return Err(format!(
                "task1 score {task1_score} conflicts with task2 class {}",
                task2_class.name()
            ));
        }
        Ok(EvalJudgment {
            example_id: example_id.into(),
            task1_score,
            task2_class: Some(task2_class),
            flag: None,
            task1_reply: task1_reply.into(),
            task2_reply: Some(task2_reply.into()),
        })
    }

    /// Zero-scored judgment for a flagged prediction. Carries no Task 2
    /// class: flagged predictions stay out of Task 2 denominators.
    pub fn flagged(example_id: impl Into<String>, flag: PredictionFlag) -> Self {
        EvalJudgment {
            example_id: example_id.into(),
            task1_score: 0,
            task2_class: None,
            flag: Some(flag),
            task1_reply: String::new(),
            task2_reply: None,
        }
    }

    pub fn example_id(&self) -> &str {
        &self.example_id
    }

    pub fn task1_score(&self) -> u8 {
        self.task1_score
    }

    pub fn task2_class(&self) -> Option<Task2Class> {
        self.task2_class
    }

    pub fn flag(&self) -> Option<PredictionFlag> {
        self.flag
    }

    pub fn task1_reply(&self) -> &str {
        &self.task1_reply
    }

    pub fn task2_reply(&self) -> Option<&str> {
        self.task2_reply.as_deref()
    }

    /// Internal-consistency check, used when judgments come back off disk.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.task1_score > 1 {
            return Err(format!("task1 score {} is not 0 or 1", self.task1_score));
        }
        if self.flag.is_some() {
            if self.task1_score != 0 || self.task2_class.is_some() {
                return Err("flagged judgment must score 0 with no task2 class".into());
            }
            return Ok(());
        }
        if let Some(class) = self.task2_class {
            let coupled = (class != Task2Class::Incorrect) == (self.task1_score == 1);
            if !coupled {
                return Err(format!(
                    "task1 score {} conflicts with task2 class {}",
                    self.task1_score,
                    class.name()
                ));
            }
        }
        Ok(())
    }
}

/// Why a prediction produced no judgment (or a counted-only one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// A judge reply could not be parsed (default policy excludes it).
    JudgeParseError,
    /// A judge call failed at the backend after retries.
    JudgeBackendError,
    /// Task 1 and Task 2 verdicts contradicted the coupling rule.
    InconsistentVerdicts,
    /// A flagged prediction under the `Skip` policy.
    SkippedFlagged,
}

impl ExclusionReason {
    pub fn name(self) -> &'static str {
        match self {
            ExclusionReason::JudgeParseError => "judge_parse_error",
            ExclusionReason::JudgeBackendError => "judge_backend_error",
            ExclusionReason::InconsistentVerdicts => "inconsistent_verdicts",
            ExclusionReason::SkippedFlagged => "skipped_flagged",
        }
    }
}

/// One prediction left out of scoring, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub example_id: String,
    pub reason: ExclusionReason,
}

/// Everything judging produced: scorable judgments plus an account of
/// every prediction that was excluded instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgingOutcome {
    /// One judgment per scored prediction, ordered by example id.
    pub judgments: Vec<EvalJudgment>,
    /// Counted-but-unscored predictions, ordered by example id.
    pub excluded: Vec<Exclusion>,
    /// True when cancellation left some predictions unjudged.
    pub interrupted: bool,
}

impl JudgingOutcome {
    /// Exclusion tallies by reason.
    pub fn exclusion_counts(&self) -> BTreeMap<ExclusionReason, usize> {
        let mut counts = BTreeMap::new();
        for exclusion in &self.excluded {
            *counts.entry(exclusion.reason).or_insert(0) += 1;
        }
        counts
    }
}

/// Candidate-run outcome: predictions in example-id order, plus whether
/// cancellation cut the run short.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictOutcome {
    pub predictions: Vec<Prediction>,
    pub interrupted: bool,
}

/// Run the candidate model over every example, one prediction each.
///
/// Backend failures never abort the run: they become empty-answer
/// predictions flagged `transport_failed`. Contexts over
/// `options.candidate_window_tokens` are flagged `context_overflow`
/// without a model call. Output order is by example id regardless of
/// completion order.
pub fn run_candidate(
    examples: &[BenchmarkExample],
    agents: &Agents<'_>,
    model: &str,
    options: &EvalOptions,
    run: &RunOptions,
) -> PredictOutcome {
    let mut ordered: Vec<&BenchmarkExample> = examples.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let results = par_map(&ordered, run.workers, &run.cancel, |_, example| {
        if let Some(window) = options.candidate_window_tokens {
            if count_tokens(&example.context) > window {
                return Prediction {
                    example_id: example.id.clone(),
                    model: model.to_string(),
                    answer: String::new(),
                    flag: Some(PredictionFlag::ContextOverflow),
                };
            }
        }
        match agents.candidate_answer(&example.context, &example.question) {
            Ok(answer) => Prediction {
                example_id: example.id.clone(),
                model: model.to_string(),
                answer,
                flag: None,
            },
            Err(_) => Prediction {
                example_id: example.id.clone(),
                model: model.to_string(),
                answer: String::new(),
                flag: Some(PredictionFlag::TransportFailed),
            },
        }
    });

    let mut predictions = Vec::with_capacity(results.len());
    let mut interrupted = false;
    for slot in results {
        match slot {
            Some(prediction) => predictions.push(prediction),
            None => interrupted = true,
        }
    }
    PredictOutcome {
        predictions,
        interrupted,
    }
}

/// Judge one prediction per example, enforcing the verdict coupling.
///
/// The prediction set must match the example set exactly; any missing,
/// unknown, or duplicated prediction ids fail with a message listing
/// every one. Flagged predictions and unparseable judge replies follow
/// the policies in `options`; judge backend failures and coupling
/// violations are always excluded and counted.
pub fn judge_predictions(
    examples: &[BenchmarkExample],
    predictions: &[Prediction],
    agents: &Agents<'_>,
    options: &EvalOptions,
    run: &RunOptions,
) -> Result<JudgingOutcome> {
    let by_id: BTreeMap<&str, &BenchmarkExample> =
        examples.iter().map(|e| (e.id.as_str(), e)).collect();
    check_prediction_ids(&by_id, predictions)?;

    let mut pairs: Vec<(&BenchmarkExample, &Prediction)> = predictions
        .iter()
        .map(|p| (by_id[p.example_id.as_str()], p))
        .collect();
    pairs.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let results = par_map(&pairs, run.workers, &run.cancel, |_, (example, prediction)| {
        judge_one(example, prediction, agents, options)
    });

    let mut judgments = Vec::new();
    let mut excluded = Vec::new();
    let mut interrupted = false;
    for slot in results {
        match slot {
            Some(Judged::Scored(judgment)) => judgments.push(judgment),
            Some(Judged::Excluded(exclusion)) => excluded.push(exclusion),
            None => interrupted = true,
        }
    }
    Ok(JudgingOutcome {
        judgments,
        excluded,
        interrupted,
    })
}

fn check_prediction_ids(
    by_id: &BTreeMap<&str, &BenchmarkExample>,
    predictions: &[Prediction],
) -> Result<()> {
    let mut problems = Vec::new();
    let mut seen = BTreeSet::new();
    for prediction in predictions {
        let id = prediction.example_id.as_str();
        if !seen.insert(id) {
            problems.push(format!("duplicate prediction for example {id}"));
        }
        if !by_id.contains_key(id) {
            problems.push(format!("prediction for unknown example {id}"));
        }
    }
    for id in by_id.keys() {
        if !seen.contains(id) {
            problems.push(format!("no prediction for example {id}"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        problems.sort();
        Err(Error::IdMismatch(problems.join("; ")))
    }
}

enum Judged {
    Scored(EvalJudgment),
    Excluded(Exclusion),
}

fn judge_one(
    example: &BenchmarkExample,
    prediction: &Prediction,
    agents: &Agents<'_>,
    options: &EvalOptions,
) -> Judged {
    let id = example.id.as_str();
    if let Some(flag) = prediction.flag {
        return match options.flagged {
            FlaggedPolicy::ScoreZero => Judged::Scored(EvalJudgment::flagged(id, flag)),
            FlaggedPolicy::Skip => Judged::Excluded(Exclusion {
                example_id: id.to_string(),
                reason: ExclusionReason::SkippedFlagged,
            }),
        };
    }

    let answerable = example.label == Label::Answerable;
    let task1 = agents.task1_score_with_reply(
        answerable,
        &example.question,
        &example.answer,
        &prediction.answer,
    );
    let (score, task1_reply) = match task1 {
        Ok(pair) => pair,
        Err(err) => return verdict_failure(example, err, options),
    };

    if answerable {
        // Score just came out of the 0/1 parse, so construction cannot fail.
        return Judged::Scored(
            EvalJudgment::answerable(id, score, task1_reply).expect("score is 0 or 1"),
        );
    }

    let task2 =
        agents.task2_class_with_reply(&example.question, &example.answer, &prediction.answer);
    let (class, task2_reply) = match task2 {
        Ok(pair) => pair,
        Err(err) => return verdict_failure(example, err, options),
    };
    match EvalJudgment::unanswerable(id, score, class, task1_reply, task2_reply) {
        Ok(judgment) => Judged::Scored(judgment),
        Err(_) => Judged::Excluded(Exclusion {
            example_id: id.to_string(),
            reason: ExclusionReason::InconsistentVerdicts,
        }),
    }
}

fn verdict_failure(example: &BenchmarkExample, err: VerdictError, options: &EvalOptions) -> Judged {
    let id = example.id.as_str();
    match err {
        VerdictError::Backend(_) => Judged::Excluded(Exclusion {
            example_id: id.to_string(),
            reason: ExclusionReason::JudgeBackendError,
        }),
        VerdictError::Parse(reply) => match options.parse_errors {
            ParseErrorPolicy::Exclude => Judged::Excluded(Exclusion {
                example_id: id.to_string(),
                reason: ExclusionReason::JudgeParseError,
            }),
            ParseErrorPolicy::ScoreZero => {
                let judgment = if example.label == Label::Answerable {
                    EvalJudgment::answerable(id, 0, reply).expect("zero score is valid")
                } else {
                    EvalJudgment::unanswerable(id, 0, Task2Class::Incorrect, reply, String::new())
                        .expect("zero score couples with incorrect")
                };
                Judged::Scored(judgment)
            }
        },
    }
}

/// Numerator and denominator of one accuracy cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub correct: usize,
    pub total: usize,
}

impl Cell {
    pub fn accuracy(&self) -> f64 {
        debug_assert!(self.total > 0, "cells with zero denominator are absent");
        self.correct as f64 / self.total as f64
    }

    pub fn percent(&self) -> f64 {
        self.accuracy() * 100.0
    }
}

/// Task 2 class counts over the judged unanswerable predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task2Breakdown {
    pub incorrect: usize,
    pub direct_refusal: usize,
    pub reasoned: usize,
}

impl Task2Breakdown {
    pub fn total(&self) -> usize {
        self.incorrect + self.direct_refusal + self.reasoned
    }

    pub fn count(&self, class: Task2Class) -> usize {
        match class {
            Task2Class::Incorrect => self.incorrect,
            Task2Class::DirectRefusal => self.direct_refusal,
            Task2Class::Reasoned => self.reasoned,
        }
    }

    pub fn percent(&self, class: Task2Class) -> f64 {
        debug_assert!(self.total() > 0, "breakdown with zero total is absent");
        self.count(class) as f64 / self.total() as f64 * 100.0
    }
}

/// Aggregated accuracy tables. Only cells with at least one judgment
/// appear; a missing cell means no data, not zero accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Task 1 accuracy over every judgment.
    pub overall: Cell,
    /// Task 1 accuracy by language and label.
    pub by_language_label: BTreeMap<Language, BTreeMap<Label, Cell>>,
    /// Task 1 accuracy by label and context length bucket.
    pub by_label_bucket: BTreeMap<Label, BTreeMap<LengthBucket, Cell>>,
    /// Task 2 class breakdown; absent when nothing was Task 2 judged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task2: Option<Task2Breakdown>,
    /// Exclusion tallies carried over from judging, empty for reports
    /// aggregated straight from judgments.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub excluded: BTreeMap<ExclusionReason, usize>,
}

/// Fold judgments into an [`EvalReport`].
///
/// Every judgment must reference a known example. Each one lands in
/// exactly one language-and-label cell and one label-and-bucket cell;
/// Task 2 counts come from the unflagged unanswerable judgments.
pub fn aggregate(judgments: &[EvalJudgment], examples: &[BenchmarkExample]) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &BenchmarkExample> =
        examples.iter().map(|e| (e.id.as_str(), e)).collect();

    let mut overall = Cell {
        correct: 0,
        total: 0,
    };
    let mut by_language_label: BTreeMap<Language, BTreeMap<Label, Cell>> = BTreeMap::new();
    let mut by_label_bucket: BTreeMap<Label, BTreeMap<LengthBucket, Cell>> = BTreeMap::new();
    let mut task2 = Task2Breakdown {
        incorrect: 0,
        direct_refusal: 0,
        reasoned: 0,
    };

    for judgment in judgments {
        let example = by_id
            .get(judgment.example_id())
            .ok_or_else(|| Error::UnknownExample(judgment.example_id().to_string()))?;
        debug_assert!(judgment.validate().is_ok());
        let correct = usize::from(judgment.task1_score());

        overall.correct += correct;
        overall.total += 1;
        let cell = by_language_label
            .entry(example.language)
            .or_default()
            .entry(example.label)
            .or_insert(Cell {
                correct: 0,
                total: 0,
            });
        cell.correct += correct;
        cell.total += 1;
        let cell = by_label_bucket
            .entry(example.label)
            .or_default()
            .entry(example.length_bucket)
            .or_insert(Cell {
                correct: 0,
                total: 0,
            });
        cell.correct += correct;
        cell.total += 1;

        if let Some(class) = judgment.task2_class() {
            match class {
                Task2Class::Incorrect => task2.incorrect += 1,
                Task2Class::DirectRefusal => task2.direct_refusal += 1,
                Task2Class::Reasoned => task2.reasoned += 1,
            }
        }
    }

    Ok(EvalReport {
        overall,
        by_language_label,
        by_label_bucket,
        task2: (task2.total() > 0).then_some(task2),
        excluded: BTreeMap::new(),
    })
}

/// [`aggregate`], plus the outcome's exclusion tallies in the report.
pub fn report_outcome(outcome: &JudgingOutcome, examples: &[BenchmarkExample]) -> Result<EvalReport> {
    let mut report = aggregate(&outcome.judgments, examples)?;
    report.excluded = outcome.exclusion_counts();
    Ok(report)
}

/// Render a report as aligned text.
pub fn render_eval_text(report: &EvalReport) -> String {
    let mut out = String::new();
    if report.overall.total == 0 {
        out.push_str("no judgments\n");
    } else {
        out.push_str(&format!(
            "overall accuracy {:6.2}%  ({}/{})\n",
            report.overall.percent(),
            report.overall.correct,
            report.overall.total
        ));
    }

    if !report.by_language_label.is_empty() {
        out.push_str("\naccuracy by language and label\n");
        let rows: Vec<(String, Cell)> = report
            .by_language_label
            .iter()
            .flat_map(|(language, cells)| {
                cells
                    .iter()
                    .map(move |(label, cell)| (format!("{language} {}", label.name()), *cell))
            })
            .collect();
        push_cell_rows(&mut out, &rows);
    }

    if !report.by_label_bucket.is_empty() {
        out.push_str("\naccuracy by label and length bucket\n");
        let rows: Vec<(String, Cell)> = report
            .by_label_bucket
            .iter()
            .flat_map(|(label, cells)| {
                cells
                    .iter()
                    .map(move |(bucket, cell)| (format!("{} {bucket}", label.name()), *cell))
            })
            .collect();
        push_cell_rows(&mut out, &rows);
    }

    if let Some(task2) = &report.task2 {
        out.push_str(&format!(
            "\ntask 2 classes over {} judged unanswerable predictions\n",
            task2.total()
        ));
        let width = Task2Class::ALL
            .iter()
            .map(|c| c.name().len())
            .max()
            .unwrap_or(0);
        for class in Task2Class::ALL {
            out.push_str(&format!(
                "  {:<width$}  {:6.2}%  ({})\n",
                class.name(),
                task2.percent(class),
                task2.count(class),
            ));
        }
    }

    if !report.excluded.is_empty() {
        out.push_str("\nexcluded from scoring\n");
        let width = report
            .excluded
            .keys()
            .map(|r| r.name().len())
            .max()
            .unwrap_or(0);
        for (reason, count) in &report.excluded {
            out.push_str(&format!("  {:<width$}  {count}\n", reason.name()));
        }
    }
    out
}

fn push_cell_rows(out: &mut String, rows: &[(String, Cell)]) {
    let width = rows.iter().map(|(name, _)| name.len()).max().unwrap_or(0);
    for (name, cell) in rows {
        out.push_str(&format!(
            "  {name:<width$}  {:6.2}%  ({}/{})\n",
            cell.percent(),
            cell.correct,
            cell.total
        ));
    }
}

/// Write predictions as JSON lines, atomically.
pub fn write_predictions(predictions: &[Prediction], path: &Path) -> Result<usize> {
    write_jsonl(predictions, path)
}

/// Read predictions back from JSON lines.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    read_jsonl(path)
}

/// Write judgments as JSON lines, atomically.
pub fn write_judgments(judgments: &[EvalJudgment], path: &Path) -> Result<usize> {
    write_jsonl(judgments, path)
}

/// Read judgments back from JSON lines, re-checking the scoring coupling
/// on every record.
pub fn read_judgments(path: &Path) -> Result<Vec<EvalJudgment>> {
    let judgments: Vec<EvalJudgment> = read_jsonl(path)?;
    for (index, judgment) in judgments.iter().enumerate() {
        judgment.validate().map_err(|reason| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: index + 1,
            reason: format!("judgment for {}: {reason}", judgment.example_id()),
        })?;
    }
    Ok(judgments)
}
