//! Synthesis orchestration: documents in, labeled benchmark examples out,
//! every discard accounted for.
//!
//! [`run`] drives the full flow per document: segment, score fragment
//! quality, tag topics, generate a QA tuple, judge it, assign each
//! surviving tuple one of the three labels, construct the example for that
//! label, then pass it through a retrieval-backed review. Items never fail
//! the run; they drop out with a [`DropReason`] and land in the
//! [`AttritionReport`], whose four stages chain (each stage's input is the
//! previous stage's kept count) and conserve (input = kept + drops).
//!
//! Labels and what they promise:
//!
//! * `answerable`: context is the source document, evidence occurs in it.
//! * `lack_of_evidence`: every occurrence of the evidence is deleted from
//!   the context (whole sentences at a time), so the context is strictly
//!   shorter than the source.
//! * `misleading`: context is byte-identical to the source; the question
//!   was rewritten around a false premise and differs from the original.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    AgentBackend, Agents, GoldError, JudgeFailReason, JudgeVerdict, NegativeReason,
    PromptLibrary, QATuple, QaGenError, RefusalMarkers, ReviewAnswer, RewriteError,
    RewriteStrategy, RoleBindings, ScoreError,
};
use crate::corpus::{
    count_tokens, length_bucket, segment, segment_all, Document, Domain, Fragment, Language,
    LengthBucket, SegmentConfig,
};
use crate::error::{Error, Result};
use crate::retrieval::{build_index, top_n};
use crate::text::{contains_normalized, expand_to_sentence, find_normalized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Answerable,
    LackOfEvidence,
    Misleading,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Answerable, Label::LackOfEvidence, Label::Misleading];

    pub fn name(self) -> &'static str {
        match self {
            Label::Answerable => "answerable",
            Label::LackOfEvidence => "lack_of_evidence",
            Label::Misleading => "misleading",
        }
    }

    pub fn is_unanswerable(self) -> bool {
        self != Label::Answerable
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The four funnel stages, in flow order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Preparation,
    QaGeneration,
    NegativeGeneration,
    Review,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Preparation,
        Stage::QaGeneration,
        Stage::NegativeGeneration,
        Stage::Review,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preparation => "preparation",
            Stage::QaGeneration => "qa_generation",
            Stage::NegativeGeneration => "negative_generation",
            Stage::Review => "review",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Closed taxonomy: every discarded item carries exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    // preparation
    LowQuality,
    QualityParseError,
    QualityBackendError,
    NoTopic,
    TopicBackendError,
    // qa_generation
    MalformedQa,
    EvidenceNotFound,
    QaBackendError,
    JudgeIncompleteAnswer,
    JudgePoorlyOrganized,
    JudgeOther,
    JudgeParseError,
    JudgeBackendError,
    // negative_generation
    RewriteNoop,
    RewriteBackendError,
    GoldMissingRefusal,
    GoldBackendError,
    EvidenceAbsentAtDeletion,
    EmptyContext,
    // review
    ConflictingAnswer,
    AnswerConflict,
    CommonSense,
    ReviewError,
}

impl DropReason {
    pub const ALL: [DropReason; 23] = [
        DropReason::LowQuality,
        DropReason::QualityParseError,
        DropReason::QualityBackendError,
        DropReason::NoTopic,
        DropReason::TopicBackendError,
        DropReason::MalformedQa,
        DropReason::EvidenceNotFound,
        DropReason::QaBackendError,
        DropReason::JudgeIncompleteAnswer,
        DropReason::JudgePoorlyOrganized,
        DropReason::JudgeOther,
        DropReason::JudgeParseError,
        DropReason::JudgeBackendError,
        DropReason::RewriteNoop,
        DropReason::RewriteBackendError,
        DropReason::GoldMissingRefusal,
        DropReason::GoldBackendError,
        DropReason::EvidenceAbsentAtDeletion,
        DropReason::EmptyContext,
        DropReason::ConflictingAnswer,
        DropReason::AnswerConflict,
        DropReason::CommonSense,
        DropReason::ReviewError,
    ];

    pub fn stage(self) -> Stage {
        use DropReason::*;
        match self {
            LowQuality | QualityParseError | QualityBackendError | NoTopic
            | TopicBackendError => Stage::Preparation,
            MalformedQa | EvidenceNotFound | QaBackendError | JudgeIncompleteAnswer
            | JudgePoorlyOrganized | JudgeOther | JudgeParseError | JudgeBackendError => {
                Stage::QaGeneration
            }
            RewriteNoop | RewriteBackendError | GoldMissingRefusal | GoldBackendError
            | EvidenceAbsentAtDeletion | EmptyContext => Stage::NegativeGeneration,
            ConflictingAnswer | AnswerConflict | CommonSense | ReviewError => Stage::Review,
        }
    }

    /// Operational failures are reported but excluded from quality
    /// retention percentages.
    pub fn is_operational(self) -> bool {
        self == DropReason::ReviewError
    }

    pub fn name(self) -> &'static str {
        use DropReason::*;
        match self {
            LowQuality => "low_quality",
            QualityParseError => "quality_parse_error",
            QualityBackendError => "quality_backend_error",
            NoTopic => "no_topic",
            TopicBackendError => "topic_backend_error",
            MalformedQa => "malformed_qa",
            EvidenceNotFound => "evidence_not_found",
            QaBackendError => "qa_backend_error",
            JudgeIncompleteAnswer => "judge_incomplete_answer",
            JudgePoorlyOrganized => "judge_poorly_organized",
            JudgeOther => "judge_other",
            JudgeParseError => "judge_parse_error",
            JudgeBackendError => "judge_backend_error",
            RewriteNoop => "rewrite_noop",
            RewriteBackendError => "rewrite_backend_error",
            GoldMissingRefusal => "gold_missing_refusal",
            GoldBackendError => "gold_backend_error",
            EvidenceAbsentAtDeletion => "evidence_absent_at_deletion",
            EmptyContext => "empty_context",
            ConflictingAnswer => "conflicting_answer",
            AnswerConflict => "answer_conflict",
            CommonSense => "common_sense",
            ReviewError => "review_error",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where an example came from and what was changed to make it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub doc_id: String,
    pub fragment_index: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub strategy: Option<RewriteStrategy>,
    /// Original evidence sentence, whitespace-normalized.
    pub evidence: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub original_question: Option<String>,
}

/// One benchmark record. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkExample {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answer: String,
    pub label: Label,
    pub language: Language,
    pub domain: Domain,
    pub length_bucket: LengthBucket,
    pub provenance: Provenance,
}

/// Post-hoc scan of the per-label promises, working only from the example
/// and its source document text (independent of construction internals).
pub fn check_example(example: &BenchmarkExample, source_text: &str) -> std::result::Result<(), String> {
    let evidence_present = contains_normalized(&example.context, &example.provenance.evidence);
    match example.label {
        Label::Answerable => {
            if !evidence_present {
                return Err(format!("{}: evidence missing from answerable context", example.id));
            }
        }
        Label::LackOfEvidence => {
            if evidence_present {
                return Err(format!("{}: evidence still present after deletion", example.id));
            }
            if example.context.len() >= source_text.len() {
                return Err(format!("{}: deleted context is not shorter", example.id));
            }
        }
        Label::Misleading => {
            if example.context != source_text {
                return Err(format!("{}: misleading context differs from source", example.id));
            }
            match &example.provenance.original_question {
                Some(original) if original != &example.question => {}
                Some(_) => {
                    return Err(format!("{}: rewritten question equals original", example.id))
                }
                None => return Err(format!("{}: misleading example lacks original question", example.id)),
            }
        }
    }
    Ok(())
}

/// Target proportions over the three labels; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelMix {
    pub answerable: f64,
    pub lack_of_evidence: f64,
    pub misleading: f64,
}

impl Default for LabelMix {
    fn default() -> Self {
        LabelMix {
            answerable: 1.0 / 3.0,
            lack_of_evidence: 1.0 / 3.0,
            misleading: 1.0 / 3.0,
        }
    }
}

impl LabelMix {
    pub fn proportion(&self, label: Label) -> f64 {
        match label {
            Label::Answerable => self.answerable,
            Label::LackOfEvidence => self.lack_of_evidence,
            Label::Misleading => self.misleading,
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let parts = [
            ("answerable", self.answerable),
            ("lack_of_evidence", self.lack_of_evidence),
            ("misleading", self.misleading),
        ];
        for (name, value) in parts {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                out.push(format!("label_mix.{name} must be in [0, 1], got {value}"));
            }
        }
        let sum: f64 = parts.iter().map(|(_, v)| v).sum();
        if (sum - 1.0).abs() > 1e-9 {
            out.push(format!("label_mix proportions must sum to 1, got {sum}"));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Admissible fragments selected per document. One QA tuple is
    /// attempted per fragment, so this is also the per-article example
    /// target.
    pub fragments_per_document: usize,
    /// Fragments scoring at or below this are dropped (keep means
    /// score > threshold).
    pub quality_threshold: u8,
    pub label_mix: LabelMix,
    /// Passages retrieved for the review conflict check.
    pub review_top_n: usize,
    pub seed: u64,
    pub segments: SegmentConfig,
    pub bindings: RoleBindings,
    pub refusal: RefusalMarkers,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            fragments_per_document: 1,
            quality_threshold: 3,
            label_mix: LabelMix::default(),
            review_top_n: 5,
            seed: 0,
            segments: SegmentConfig::default(),
            bindings: RoleBindings::default(),
            refusal: RefusalMarkers::default(),
        }
    }
}

impl SynthesisConfig {
    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.fragments_per_document == 0 {
            problems.push("fragments_per_document must be at least 1".to_string());
        }
        if !(1..=5).contains(&self.quality_threshold) {
            problems.push(format!(
                "quality_threshold must be in [1, 5], got {}",
                self.quality_threshold
            ));
        }
        if self.review_top_n == 0 {
            problems.push("review_top_n must be at least 1".to_string());
        }
        problems.extend(self.label_mix.problems());
        if let Err(message) = self.segments.validate() {
            problems.push(message);
        }
        if let Err(message) = self.refusal.validate() {
            problems.push(message);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// One stage of the funnel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub stage: Stage,
    pub input: usize,
    pub kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl StageCounts {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    fn operational_drops(&self) -> usize {
        self.dropped
            .iter()
            .filter(|(reason, _)| reason.is_operational())
            .map(|(_, count)| *count)
            .sum()
    }
}

/// All four stages, in flow order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttritionReport {
    pub stages: Vec<StageCounts>,
}

impl AttritionReport {
    /// Build from the initial fragment count and one reason per discard;
    /// conservation and chaining hold by construction.
    pub fn from_drops(initial_input: usize, drops: &[DropReason]) -> AttritionReport {
        let mut stages = Vec::with_capacity(Stage::ALL.len());
        let mut input = initial_input;
        for stage in Stage::ALL {
            let mut dropped: BTreeMap<DropReason, usize> = BTreeMap::new();
            for reason in drops.iter().filter(|r| r.stage() == stage) {
                *dropped.entry(*reason).or_default() += 1;
            }
            let dropped_total: usize = dropped.values().sum();
            let kept = input
                .checked_sub(dropped_total)
                .expect("drops cannot exceed stage input");
            stages.push(StageCounts {
                stage,
                input,
                kept,
                dropped,
            });
            input = kept;
        }
        AttritionReport { stages }
    }

    pub fn stage(&self, stage: Stage) -> &StageCounts {
        self.stages
            .iter()
            .find(|s| s.stage == stage)
            .expect("report holds all stages")
    }

    pub fn validate(&self) -> Result<()> {
        let expected: Vec<Stage> = Stage::ALL.to_vec();
        let actual: Vec<Stage> = self.stages.iter().map(|s| s.stage).collect();
        if actual != expected {
            return Err(Error::Attrition(format!(
                "stages must be exactly {expected:?} in order, got {actual:?}"
            )));
        }
        for counts in &self.stages {
            if counts.input != counts.kept + counts.dropped_total() {
                return Err(Error::Attrition(format!(
                    "{}: input {} != kept {} + dropped {}",
                    counts.stage,
                    counts.input,
                    counts.kept,
                    counts.dropped_total()
                )));
            }
            for reason in counts.dropped.keys() {
                if reason.stage() != counts.stage {
                    return Err(Error::Attrition(format!(
                        "{}: reason {} belongs to stage {}",
                        counts.stage,
                        reason,
                        reason.stage()
                    )));
                }
            }
        }
        for pair in self.stages.windows(2) {
            if pair[1].input != pair[0].kept {
                return Err(Error::Attrition(format!(
                    "{} input {} does not chain from {} kept {}",
                    pair[1].stage, pair[1].input, pair[0].stage, pair[0].kept
                )));
            }
        }
        Ok(())
    }
}

/// Retention for one stage. `zero_input` flags the 1.0 placeholder used
/// when nothing entered the stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRetention {
    pub stage: Stage,
    pub retention: f64,
    pub zero_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelReport {
    pub stages: Vec<StageRetention>,
    /// Final kept over initial input, operational drops excluded.
    pub overall: f64,
    pub overall_zero_input: bool,
}

/// Per-stage retention percentages. Operational drops (`review_error`) are
/// excluded from both numerator-side inputs and the overall figure: a
/// transport failure says nothing about data quality.
pub fn funnel(report: &AttritionReport) -> Result<FunnelReport> {
    report.validate()?;
    let mut stages = Vec::with_capacity(report.stages.len());
    let mut operational_total = 0usize;
    for counts in &report.stages {
        let operational = counts.operational_drops();
        operational_total += operational;
        let effective_input = counts.input - operational;
        let (retention, zero_input) = if effective_input == 0 {
            (1.0, true)
        } else {
            (counts.kept as f64 / effective_input as f64, false)
        };
        stages.push(StageRetention {
            stage: counts.stage,
            retention,
            zero_input,
        });
    }
    let initial = report.stages[0].input - operational_total;
    let final_kept = report.stages.last().expect("four stages").kept;
    let (overall, overall_zero_input) = if initial == 0 {
        (1.0, true)
    } else {
        (final_kept as f64 / initial as f64, false)
    };
    Ok(FunnelReport {
        stages,
        overall,
        overall_zero_input,
    })
}

/// Delete every whitespace-normalized occurrence of `evidence` from the
/// text, widening each deletion to full sentence boundaries, and rescan
/// until none remain. Fails if nothing was found to delete or the result
/// has no tokens left.
pub fn make_lack_of_evidence(
    document_text: &str,
    evidence: &str,
) -> std::result::Result<String, DropReason> {
    let mut context = document_text.to_string();
    let mut removed = false;
    while let Some(&span) = find_normalized(&context, evidence).first() {
        let (lo, hi) = expand_to_sentence(&context, span);
        debug_assert!(lo <= span.0 && hi >= span.1 && hi > lo);
        context.replace_range(lo..hi, "");
        removed = true;
    }
    if !removed {
        return Err(DropReason::EvidenceAbsentAtDeletion);
    }
    if count_tokens(&context) == 0 {
        return Err(DropReason::EmptyContext);
    }
    debug_assert!(context.len() < document_text.len());
    debug_assert!(!contains_normalized(&context, evidence));
    Ok(context)
}

/// Deterministic greedy quota assignment: tuple k+1 gets the label with
/// the largest deficit against `mix`, ties broken by a seeded label
/// order fixed once per run. Zero-proportion labels are never assigned.
fn allocate_labels(count: usize, mix: &LabelMix, seed: u64) -> Vec<Label> {
    let mut order = Label::ALL.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assigned: BTreeMap<Label, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(count);
    for k in 1..=count {
        let mut best: Option<(Label, f64)> = None;
        for &label in &order {
            let proportion = mix.proportion(label);
            if proportion == 0.0 {
                continue;
            }
            let deficit =
                proportion * k as f64 - *assigned.get(&label).unwrap_or(&0) as f64;
            if best.is_none_or(|(_, d)| deficit > d) {
                best = Some((label, deficit));
            }
        }
        let (label, _) = best.expect("label_mix has at least one positive proportion");
        *assigned.entry(label).or_default() += 1;
        out.push(label);
    }
    out
}

/// Cooperative cancellation flag shared with signal handlers.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        CancelToken::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub cancel: CancelToken,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
                .min(8),
            cancel: CancelToken::new(),
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    /// Kept examples, ordered by (doc id, fragment index).
    pub examples: Vec<BenchmarkExample>,
    pub attrition: AttritionReport,
    /// True when cancellation stopped the run before all items were
    /// processed; the report then covers only processed items.
    pub interrupted: bool,
}

/// Parallel map preserving input order. Returns `None` for items never
/// claimed because of cancellation; started items always finish.
pub(crate) fn par_map<T, R, F>(
    items: &[T],
    workers: usize,
    cancel: &CancelToken,
    f: F,
) -> Vec<Option<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    if items.is_empty() {
        return Vec::new();
    }
    let results: Vec<Mutex<Option<R>>> = (0..items.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let threads = workers.clamp(1, items.len());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                if cancel.is_cancelled() {
                    break;
                }
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= items.len() {
                    break;
                }
                let value = f(index, &items[index]);
                *results[index].lock().unwrap() = Some(value);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap())
        .collect()
}

struct Candidate {
    doc_index: usize,
    fragment: Fragment,
    tuple: QATuple,
}

struct Assignment {
    candidate: Candidate,
    label: Label,
    strategy: Option<RewriteStrategy>,
}

enum ItemOutcome {
    Kept(BenchmarkExample),
    Dropped(DropReason),
}

/// Run the full synthesis flow over a corpus.
///
/// Only setup problems (invalid config, empty corpus, strict-mode segment
/// shortfall) return errors; per-item failures become drop reasons in the
/// attrition report.
pub fn run(
    corpus: &[Document],
    config: &SynthesisConfig,
    prompts: &PromptLibrary,
    backend: &dyn AgentBackend,
    options: &RunOptions,
) -> Result<RunOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config(vec!["corpus must not be empty".to_string()]));
    }
    let agents = Agents::new(backend, prompts, &config.bindings, &config.refusal);

    // Phase A, parallel per document: segment and carry each fragment
    // through scoring, topics, QA generation, and the QA judge.
    type DocYield = Result<(Vec<(Fragment, QATuple)>, Vec<DropReason>, usize)>;
    let per_doc: Vec<Option<DocYield>> =
        par_map(corpus, options.workers, &options.cancel, |_, doc| {
            let fragments = segment(doc, config.fragments_per_document, &config.segments)?;
            let entered = fragments.len();
            let mut drops = Vec::new();
            let mut tuples = Vec::new();
            for fragment in fragments {
                match prepare_and_generate(&agents, &fragment, config) {
                    Ok(tuple) => tuples.push((fragment, tuple)),
                    Err(reason) => drops.push(reason),
                }
            }
            Ok((tuples, drops, entered))
        });

    let mut interrupted = per_doc.iter().any(Option::is_none);
    let mut total_fragments = 0usize;
    let mut drops: Vec<DropReason> = Vec::new();
    let mut candidates: Vec<Candidate> = Vec::new();
    for (doc_index, result) in per_doc.into_iter().enumerate() {
        let Some(result) = result else { continue };
        let (tuples, doc_drops, entered) = result?;
        total_fragments += entered;
        drops.extend(doc_drops);
        for (fragment, tuple) in tuples {
            candidates.push(Candidate {
                doc_index,
                fragment,
                tuple,
            });
        }
    }
    candidates.sort_by(|a, b| {
        (&corpus[a.doc_index].id, a.fragment.index)
            .cmp(&(&corpus[b.doc_index].id, b.fragment.index))
    });

    // Sequential: route each surviving tuple to a label, and rotate
    // rewrite strategies across the misleading ones.
    let labels = allocate_labels(candidates.len(), &config.label_mix, config.seed);
    let mut misleading_seen = 0usize;
    let assignments: Vec<Assignment> = candidates
        .into_iter()
        .zip(labels)
        .map(|(candidate, label)| {
            let strategy = (label == Label::Misleading).then(|| {
                let strategies = RewriteStrategy::ALL;
                let pick = strategies[(config.seed as usize + misleading_seen) % strategies.len()];
                misleading_seen += 1;
                pick
            });
            Assignment {
                candidate,
                label,
                strategy,
            }
        })
        .collect();

    // Phase B, parallel per example: build the labeled example and review it.
    let reviewed: Vec<Option<ItemOutcome>> =
        par_map(&assignments, options.workers, &options.cancel, |_, item| {
            build_and_review(corpus, &agents, config, item)
        });

    let unprocessed = reviewed.iter().filter(|r| r.is_none()).count();
    interrupted = interrupted || unprocessed > 0;
    let mut examples = Vec::new();
    for outcome in reviewed.into_iter().flatten() {
        match outcome {
            ItemOutcome::Kept(example) => examples.push(example),
            ItemOutcome::Dropped(reason) => drops.push(reason),
        }
    }
    examples.sort_by(|a, b| {
        (&a.provenance.doc_id, a.provenance.fragment_index)
            .cmp(&(&b.provenance.doc_id, b.provenance.fragment_index))
    });

    // Items Phase B never claimed passed the first two stages but reached
    // neither of the last two; count them out of the funnel entirely so
    // conservation and chaining still hold.
    let attrition = AttritionReport::from_drops(total_fragments - unprocessed, &drops);
    debug_assert!(attrition.validate().is_ok());
    Ok(RunOutcome {
        examples,
        attrition,
        interrupted,
    })
}

/// Preparation and QA-generation stages for one fragment.
fn prepare_and_generate(
    agents: &Agents,
    fragment: &Fragment,
    config: &SynthesisConfig,
) -> std::result::Result<QATuple, DropReason> {
    let score = match agents.score_quality(fragment) {
        Ok(score) => score,
        Err(ScoreError::Backend(_)) => return Err(DropReason::QualityBackendError),
        Err(ScoreError::Unparseable(_) | ScoreError::OutOfRange(_)) => {
            return Err(DropReason::QualityParseError)
        }
    };
    if score <= config.quality_threshold {
        return Err(DropReason::LowQuality);
    }
    let topics = agents
        .select_topics(fragment)
        .map_err(|_| DropReason::TopicBackendError)?;
    if topics.is_empty() {
        return Err(DropReason::NoTopic);
    }
    let tuple = match agents.generate_qa(fragment, &topics) {
        Ok(tuple) => tuple,
        Err(QaGenError::Backend(_)) => return Err(DropReason::QaBackendError),
        Err(QaGenError::Malformed(_)) => return Err(DropReason::MalformedQa),
        Err(QaGenError::EvidenceNotFound) => return Err(DropReason::EvidenceNotFound),
    };
    match agents.judge_qa_quality(&tuple, fragment) {
        Ok(JudgeVerdict::Pass) => Ok(tuple),
        Ok(JudgeVerdict::Fail(reason)) => Err(match reason {
            JudgeFailReason::IncompleteAnswer => DropReason::JudgeIncompleteAnswer,
            JudgeFailReason::PoorlyOrganized => DropReason::JudgePoorlyOrganized,
            JudgeFailReason::Other => DropReason::JudgeOther,
            JudgeFailReason::ParseError => DropReason::JudgeParseError,
        }),
        Err(_) => Err(DropReason::JudgeBackendError),
    }
}

/// Negative-generation and review stages for one assigned tuple.
fn build_and_review(
    corpus: &[Document],
    agents: &Agents,
    config: &SynthesisConfig,
    item: &Assignment,
) -> ItemOutcome {
    let doc = &corpus[item.candidate.doc_index];
    let tuple = &item.candidate.tuple;
    let fragment = &item.candidate.fragment;

    let built: std::result::Result<(String, String, String, Option<String>), DropReason> =
        match item.label {
            Label::Answerable => Ok((
                doc.text.clone(),
                tuple.question.clone(),
                tuple.answer.clone(),
                None,
            )),
            Label::LackOfEvidence => make_lack_of_evidence(&doc.text, &tuple.evidence)
                .and_then(|context| {
                    let gold = write_gold(
                        agents,
                        tuple,
                        NegativeReason::LackOfEvidence,
                        None,
                        doc.language,
                    )?;
                    Ok((context, tuple.question.clone(), gold, None))
                }),
            Label::Misleading => {
                let strategy = item.strategy.expect("misleading items carry a strategy");
                match agents.rewrite_question(tuple, strategy, fragment) {
                    Ok(rewritten) => write_gold(
                        agents,
                        tuple,
                        NegativeReason::Misleading,
                        Some(&rewritten),
                        doc.language,
                    )
                    .map(|gold| {
                        (
                            doc.text.clone(),
                            rewritten,
                            gold,
                            Some(tuple.question.clone()),
                        )
                    }),
                    Err(RewriteError::Noop) => Err(DropReason::RewriteNoop),
                    Err(RewriteError::Backend(_)) => Err(DropReason::RewriteBackendError),
                }
            }
        };
    let (context, question, answer, original_question) = match built {
        Ok(parts) => parts,
        Err(reason) => return ItemOutcome::Dropped(reason),
    };

    let Ok(bucket) = length_bucket(count_tokens(&context)) else {
        return ItemOutcome::Dropped(DropReason::EmptyContext);
    };
    let example = BenchmarkExample {
        id: format!("{}#f{}#{}", doc.id, fragment.index, item.label),
        context,
        question,
        answer,
        label: item.label,
        language: doc.language,
        domain: doc.domain,
        length_bucket: bucket,
        provenance: Provenance {
            doc_id: doc.id.clone(),
            fragment_index: fragment.index,
            strategy: item.strategy,
            evidence: tuple.evidence.clone(),
            original_question,
        },
    };
    match review(&example, agents, config) {
        None => ItemOutcome::Kept(example),
        Some(reason) => ItemOutcome::Dropped(reason),
    }
}

fn write_gold(
    agents: &Agents,
    tuple: &QATuple,
    reason: NegativeReason,
    rewritten: Option<&str>,
    language: Language,
) -> std::result::Result<String, DropReason> {
    match agents.write_unanswerable_gold(tuple, reason, rewritten, language) {
        Ok(gold) => Ok(gold),
        Err(GoldError::MissingRefusal) => Err(DropReason::GoldMissingRefusal),
        Err(GoldError::Backend(_)) => Err(DropReason::GoldBackendError),
    }
}

/// Retrieval-backed review. Returns the drop reason, or `None` to keep.
///
/// The reviewer answers the question from the top passages of the
/// candidate's own context. A found answer sinks a negative candidate
/// outright; for answerable candidates it must not contradict the gold.
/// Last, a no-context judge call discards questions answerable from
/// general knowledge alone.
fn review(
    example: &BenchmarkExample,
    agents: &Agents,
    config: &SynthesisConfig,
) -> Option<DropReason> {
    let fragments = segment_all(&example.provenance.doc_id, &example.context, &config.segments);
    let passages = if fragments.is_empty() {
        String::new()
    } else {
        let index = build_index(&fragments).expect("non-empty fragment list");
        top_n(&index, &example.question, config.review_top_n)
            .iter()
            .map(|(fragment_ref, _)| fragments[fragment_ref.index].text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    };
    let review_answer = match agents.review_answer(&example.question, &passages) {
        Ok(answer) => answer,
        Err(_) => return Some(DropReason::ReviewError),
    };
    match (example.label, review_answer) {
        (Label::Answerable, ReviewAnswer::Answer(text)) => {
            match agents.judge_consistency(&example.question, &example.answer, &text) {
                Ok(true) => {}
                Ok(false) => return Some(DropReason::AnswerConflict),
                Err(_) => return Some(DropReason::ReviewError),
            }
        }
        (Label::Answerable, ReviewAnswer::NoAnswer) => {}
        (_, ReviewAnswer::Answer(_)) => return Some(DropReason::ConflictingAnswer),
        (_, ReviewAnswer::NoAnswer) => {}
    }
    match agents.judge_common_sense(&example.question) {
        Ok(true) => Some(DropReason::CommonSense),
        Ok(false) => None,
        Err(_) => Some(DropReason::ReviewError),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{MockBackend, MockReply, MockRule};

    fn report(quads: [(usize, usize, &[(DropReason, usize)]); 4]) -> AttritionReport {
        let stages = Stage::ALL
            .iter()
            .zip(quads)
            .map(|(&stage, (input, kept, dropped))| StageCounts {
                stage,
                input,
                kept,
                dropped: dropped.iter().copied().collect(),
            })
            .collect();
        AttritionReport { stages }
    }

    #[test]
    fn funnel_retentions_on_the_reference_fixture() {
        let report = report([
            (100, 100, &[]),
            (100, 94, &[(DropReason::JudgeOther, 6)]),
            (94, 94, &[]),
            (94, 74, &[(DropReason::ConflictingAnswer, 20)]),
        ]);
        let funnel = funnel(&report).unwrap();
        let retentions: Vec<f64> = funnel.stages.iter().map(|s| s.retention).collect();
        assert!((retentions[0] - 1.0).abs() < 1e-9);
        assert!((retentions[1] - 0.94).abs() < 1e-9);
        assert!((retentions[2] - 1.0).abs() < 1e-9);
        assert!((retentions[3] - 74.0 / 94.0).abs() < 1e-9);
        assert!((funnel.overall - 0.74).abs() < 1e-9);
        assert!(funnel.stages.iter().all(|s| !s.zero_input));
    }

    #[test]
    fn funnel_flags_zero_input_stages() {
        let report = report([
            (3, 0, &[(DropReason::LowQuality, 3)]),
            (0, 0, &[]),
            (0, 0, &[]),
            (0, 0, &[]),
        ]);
        let funnel = funnel(&report).unwrap();
        assert!(!funnel.stages[0].zero_input);
        assert!((funnel.stages[0].retention - 0.0).abs() < 1e-9);
        assert!(funnel.stages[1].zero_input);
        assert!((funnel.stages[1].retention - 1.0).abs() < 1e-9);
        assert!((funnel.overall - 0.0).abs() < 1e-9);
    }

    #[test]
    fn funnel_rejects_conservation_violations() {
        let bad = report([(100, 95, &[(DropReason::LowQuality, 4)]), (95, 95, &[]), (95, 95, &[]), (95, 95, &[])]);
        assert!(matches!(funnel(&bad), Err(Error::Attrition(_))));

        let unchained = report([(100, 90, &[(DropReason::LowQuality, 10)]), (89, 89, &[]), (89, 89, &[]), (89, 89, &[])]);
        assert!(matches!(funnel(&unchained), Err(Error::Attrition(_))));

        let wrong_stage = report([
            (10, 9, &[(DropReason::ConflictingAnswer, 1)]),
            (9, 9, &[]),
            (9, 9, &[]),
            (9, 9, &[]),
        ]);
        assert!(matches!(funnel(&wrong_stage), Err(Error::Attrition(_))));
    }

    #[test]
    fn funnel_excludes_operational_drops_from_retention() {
        let report = report([
            (94, 94, &[]),
            (94, 94, &[]),
            (94, 94, &[]),
            (94, 70, &[(DropReason::ConflictingAnswer, 20), (DropReason::ReviewError, 4)]),
        ]);
        let funnel = funnel(&report).unwrap();
        assert!((funnel.stages[3].retention - 70.0 / 90.0).abs() < 1e-9);
        assert!((funnel.overall - 70.0 / 90.0).abs() < 1e-9);
    }

    #[test]
    fn every_drop_reason_maps_into_its_stage() {
        for reason in DropReason::ALL {
            let stage = reason.stage();
            assert!(Stage::ALL.contains(&stage), "{reason} has no stage");
        }
        // Closed taxonomy: the serialized name round-trips.
        for reason in DropReason::ALL {
            let json = serde_json::to_string(&reason).unwrap();
            assert_eq!(json, format!("\"{}\"", reason.name()));
            let back: DropReason = serde_json::from_str(&json).unwrap();
            assert_eq!(back, reason);
        }
    }

    #[test]
    fn label_allocation_honors_the_mix() {
        let thirds = allocate_labels(99, &LabelMix::default(), 7);
        for label in Label::ALL {
            assert_eq!(thirds.iter().filter(|&&l| l == label).count(), 33, "{label}");
        }

        let skew = LabelMix {
            answerable: 0.5,
            lack_of_evidence: 0.25,
            misleading: 0.25,
        };
        let assigned = allocate_labels(8, &skew, 1);
        assert_eq!(assigned.iter().filter(|&&l| l == Label::Answerable).count(), 4);
        assert_eq!(assigned.iter().filter(|&&l| l == Label::LackOfEvidence).count(), 2);
        assert_eq!(assigned.iter().filter(|&&l| l == Label::Misleading).count(), 2);

        let all_answerable = allocate_labels(
            5,
            &LabelMix {
                answerable: 1.0,
                lack_of_evidence: 0.0,
                misleading: 0.0,
            },
            9,
        );
        assert!(all_answerable.iter().all(|&l| l == Label::Answerable));

        assert_eq!(allocate_labels(50, &LabelMix::default(), 3), allocate_labels(50, &LabelMix::default(), 3));
    }

    #[test]
    fn evidence_deletion_removes_every_occurrence() {
        let text = "The fort fell in 1371. Later chronicles repeat the claim. \
                    Some state the fort fell in 1371. Nothing else is known.";
        let deleted = make_lack_of_evidence(text, "the fort fell in 1371").unwrap();
        assert!(!contains_normalized(&deleted, "the fort fell in 1371"));
        assert!(deleted.contains("Later chronicles repeat the claim."));
        assert!(deleted.contains("Nothing else is known."));
        assert!(deleted.len() < text.len());
    }

    #[test]
    fn evidence_deletion_spans_whitespace_differences() {
        let text = "Alpha beta gamma. The treaty   was\nsigned in May. Delta epsilon.";
        let deleted = make_lack_of_evidence(text, "The treaty was signed in May.").unwrap();
        assert!(!contains_normalized(&deleted, "The treaty was signed in May."));
        assert!(deleted.contains("Alpha beta gamma."));
        assert!(deleted.contains("Delta epsilon."));
    }

    #[test]
    fn evidence_deletion_failure_modes() {
        assert_eq!(
            make_lack_of_evidence("Some text here.", "absent phrase"),
            Err(DropReason::EvidenceAbsentAtDeletion)
        );
        assert_eq!(
            make_lack_of_evidence("Only this sentence exists.", "Only this sentence exists."),
            Err(DropReason::EmptyContext)
        );
    }

    fn sample_doc(id: &str, topic_sets: &[(&str, &str)]) -> Document {
        // One paragraph per entry; each holds a long distinctive sentence
        // (the evidence the simulator picks) plus filler sentences.
        let mut text = String::new();
        for (i, (subject, detail)) in topic_sets.iter().enumerate() {
            if i > 0 {
                text.push_str("\n\n");
            }
            text.push_str(&format!(
                "Short opening line. The {subject} {detail} according to the recovered registry \
                 volume eleven. Minor closing remark follows here."
            ));
        }
        Document::new(id.to_string(), Language::En, Domain::Other, text).unwrap()
    }

    fn tiny_corpus() -> Vec<Document> {
        vec![
            sample_doc(
                "doc-a",
                &[
                    ("harbor ledger", "was sealed by the port commission in March 1911"),
                    ("quarry census", "listed forty-two active pits across the valley"),
                    ("railway charter", "granted exclusive freight rights for thirty years"),
                ],
            ),
            sample_doc(
                "doc-b",
                &[
                    ("granary audit", "recorded nine hundred sacks of winter barley"),
                    ("customs tariff", "doubled the duty on imported dye that autumn"),
                    ("bridge survey", "condemned the eastern span after the flood season"),
                ],
            ),
            sample_doc(
                "doc-c",
                &[
                    ("observatory log", "noted an eclipse visible from the southern ridge"),
                    ("militia roster", "named one hundred and twelve reserve volunteers"),
                    ("printing contract", "assigned the gazette to the Harlan brothers"),
                ],
            ),
        ]
    }

    fn tiny_config() -> SynthesisConfig {
        SynthesisConfig {
            fragments_per_document: 3,
            segments: SegmentConfig {
                min_tokens: 8,
                max_tokens: 32,
                strict: false,
            },
            ..SynthesisConfig::default()
        }
    }

    #[test]
    fn simulated_run_keeps_examples_and_conserves_counts() {
        let corpus = tiny_corpus();
        let config = tiny_config();
        let prompts = PromptLibrary::bundled();
        let backend = MockBackend::simulated(17);
        let outcome = run(&corpus, &config, &prompts, &backend, &RunOptions::default()).unwrap();

        assert!(!outcome.interrupted);
        outcome.attrition.validate().unwrap();
        assert_eq!(outcome.attrition.stage(Stage::Preparation).input, 9);
        let review = outcome.attrition.stage(Stage::Review);
        assert_eq!(review.kept, outcome.examples.len());
        assert!(!outcome.examples.is_empty());

        // Every emitted example honors its label's promises.
        for example in &outcome.examples {
            let doc = corpus
                .iter()
                .find(|d| d.id == example.provenance.doc_id)
                .unwrap();
            check_example(example, &doc.text).unwrap();
            if example.label.is_unanswerable() {
                assert!(
                    config.refusal.matches(example.language, &example.answer),
                    "{}: gold lacks refusal marker: {}",
                    example.id,
                    example.answer
                );
            }
        }

        // Output ordering and id uniqueness.
        let keys: Vec<_> = outcome
            .examples
            .iter()
            .map(|e| (e.provenance.doc_id.clone(), e.provenance.fragment_index))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let mut ids: Vec<_> = outcome.examples.iter().map(|e| &e.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), outcome.examples.len());
    }

    #[test]
    fn simulated_run_is_deterministic() {
        let corpus = tiny_corpus();
        let config = tiny_config();
        let prompts = PromptLibrary::bundled();
        let first = run(
            &corpus,
            &config,
            &prompts,
            &MockBackend::simulated(17),
            &RunOptions { workers: 4, cancel: CancelToken::new() },
        )
        .unwrap();
        let second = run(
            &corpus,
            &config,
            &prompts,
            &MockBackend::simulated(17),
            &RunOptions { workers: 1, cancel: CancelToken::new() },
        )
        .unwrap();
        let first_json = serde_json::to_string(&first.examples).unwrap();
        let second_json = serde_json::to_string(&second.examples).unwrap();
        assert_eq!(first_json, second_json);
        assert_eq!(first.attrition, second.attrition);
    }

    #[test]
    fn scripted_judge_failures_land_in_qa_generation() {
        let corpus = tiny_corpus();
        let config = tiny_config();
        let prompts = PromptLibrary::bundled();
        let mut backend = MockBackend::simulated(17);
        // "quarry census" appears in exactly one fragment of doc-a.
        backend.add_rule(MockRule {
            role: Some(crate::agents::AgentRole::QaJudge),
            contains: Some("quarry census".into()),
            reply: MockReply::Text("VERDICT: fail REASON: incomplete_answer".into()),
        });
        let outcome = run(&corpus, &config, &prompts, &backend, &RunOptions::default()).unwrap();
        let qa = outcome.attrition.stage(Stage::QaGeneration);
        assert_eq!(qa.dropped.get(&DropReason::JudgeIncompleteAnswer), Some(&1));
        assert_eq!(qa.kept, qa.input - 1);
    }

    #[test]
    fn empty_corpus_is_fatal() {
        let err = run(
            &[],
            &tiny_config(),
            &PromptLibrary::bundled(),
            &MockBackend::simulated(0),
            &RunOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn invalid_config_reports_every_problem() {
        let config = SynthesisConfig {
            fragments_per_document: 0,
            quality_threshold: 9,
            review_top_n: 0,
            label_mix: LabelMix {
                answerable: 0.9,
                lack_of_evidence: 0.3,
                misleading: 0.3,
            },
            ..SynthesisConfig::default()
        };
        match config.validate().unwrap_err() {
            Error::Config(problems) => {
                assert!(problems.len() >= 4, "collected {problems:?}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cancelled_run_reports_interruption() {
        let corpus = tiny_corpus();
        let config = tiny_config();
        let prompts = PromptLibrary::bundled();
        let backend = MockBackend::simulated(3);
        let options = RunOptions {
            workers: 2,
            cancel: CancelToken::new(),
        };
        options.cancel.cancel();
        let outcome = run(&corpus, &config, &prompts, &backend, &options).unwrap();
        assert!(outcome.interrupted);
        assert!(outcome.examples.is_empty());
        assert_eq!(outcome.attrition.stage(Stage::Preparation).input, 0);
        outcome.attrition.validate().unwrap();
    }
}
