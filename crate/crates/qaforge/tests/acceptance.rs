//! Release gate: nine independently verifiable checks over the whole
//! toolkit. Each test prints exactly one `[check N/9] PASS` line with the
//! numbers it verified; a failure panics with the check's number and what
//! went wrong. Oracles here are written from scratch on purpose — the
//! scans, the BM25 arithmetic, and the hand counts deliberately avoid the
//! library code paths they are checking.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qaforge::agents::{AgentRole, MockBackend, PromptLibrary, RewriteStrategy, Task2Class};
use qaforge::corpus::{count_tokens, length_bucket, Domain, Fragment, Language, LengthBucket};
use qaforge::dataset::{
    compute_stats, read_attrition, read_examples, render_stats_text, write_attrition,
    write_examples,
};
use qaforge::eval::{
    judge_predictions, read_judgments, report_outcome, EvalJudgment, EvalOptions, Prediction,
    write_judgments,
};
use qaforge::fixtures;
use qaforge::pipeline::{
    funnel, make_lack_of_evidence, run, AttritionReport, BenchmarkExample, DropReason, Label,
    LabelMix, Provenance, RunOptions, Stage,
};
use qaforge::retrieval::{build_index, top_n};

fn pass(check: usize, detail: &str) {
    println!("[check {check}/9] PASS {detail}");
}

/// Whitespace collapse written from scratch for the oracle scans.
fn squash(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Substring check under collapsed whitespace, independent of the
/// library's matcher.
fn oracle_contains(haystack: &str, needle: &str) -> bool {
    squash(haystack).contains(&squash(needle))
}

/// Post-hoc label scan working only from the example and its source text.
fn oracle_scan(example: &BenchmarkExample, source_text: &str) -> Result<(), String> {
    let evidence_found = oracle_contains(&example.context, &example.provenance.evidence);
    match example.label {
        Label::Answerable => {
            if !evidence_found {
                return Err(format!("{}: evidence missing", example.id));
            }
        }
        Label::LackOfEvidence => {
            if evidence_found {
                return Err(format!("{}: evidence still present", example.id));
            }
            if example.context.len() >= source_text.len() {
                return Err(format!("{}: context not shorter than source", example.id));
            }
        }
        Label::Misleading => {
            if example.context != source_text {
                return Err(format!("{}: context altered", example.id));
            }
            let original = example
                .provenance
                .original_question
                .as_deref()
                .ok_or_else(|| format!("{}: no original question", example.id))?;
            if original == example.question {
                return Err(format!("{}: question not rewritten", example.id));
            }
        }
    }
    Ok(())
}

#[test]
fn check_1_mock_end_to_end_synthesis() {
    let started = Instant::now();
    let corpus = fixtures::sample_corpus(20, 7);
    let config = fixtures::sample_config();
    let prompts = PromptLibrary::bundled();
    let backend = MockBackend::simulated(7);

    let outcome = run(&corpus, &config, &prompts, &backend, &RunOptions::default())
        .expect("check 1: mock synthesis failed");
    assert!(!outcome.interrupted, "check 1: run was interrupted");
    outcome.attrition.validate().expect("check 1: attrition inconsistent");

    let mut label_counts: BTreeMap<Label, usize> = BTreeMap::new();
    let mut languages: BTreeSet<Language> = BTreeSet::new();
    for example in &outcome.examples {
        *label_counts.entry(example.label).or_default() += 1;
        languages.insert(example.language);
    }
    assert_eq!(
        label_counts.len(),
        3,
        "check 1: expected all three labels, got {label_counts:?}"
    );
    assert_eq!(
        languages.len(),
        2,
        "check 1: expected both languages, got {languages:?}"
    );
    assert_eq!(outcome.examples.len(), 100, "check 1: kept-count drifted");

    let sources: HashMap<&str, &str> = corpus
        .iter()
        .map(|doc| (doc.id.as_str(), doc.text.as_str()))
        .collect();
    let mut scanned = 0usize;
    for example in &outcome.examples {
        let source = sources[example.provenance.doc_id.as_str()];
        oracle_scan(example, source).expect("check 1: label invariant violated");
        scanned += 1;
    }
    assert_eq!(scanned, outcome.examples.len());

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "check 1: runtime {elapsed:?} exceeds 30 s"
    );
    pass(
        1,
        &format!(
            "mock end-to-end synthesis: 20 docs -> {} examples ({}), \
             both languages, 100% of {} label scans clean, {:.2?}",
            outcome.examples.len(),
            label_counts
                .iter()
                .map(|(label, count)| format!("{} {count}", label.name()))
                .collect::<Vec<_>>()
                .join(", "),
            scanned,
            elapsed
        ),
    );
}

#[test]
fn check_2_funnel_conservation() {
    // 20 fixture documents, five paragraphs each: 100 candidate tuples.
    // Six are scripted to fail QA judgment and 21 of the survivors to fall
    // at review, so the stage arithmetic is forced to 100 -> 94 -> 73.
    const QA_FAILS: [usize; 6] = [3, 17, 30, 44, 58, 71];
    const REVIEW_FAILS: [usize; 21] = [
        0, 1, 2, 5, 8, 11, 14, 20, 25, 33, 40, 47, 52, 60, 65, 70, 80, 85, 90, 95, 99,
    ];
    assert!(QA_FAILS.iter().all(|k| !REVIEW_FAILS.contains(k)));

    let corpus = fixtures::sample_corpus(20, 7);
    let mut config = fixtures::sample_config();
    // Scripted drops key on the subject phrase inside the generated
    // question, which negative rewrites would erase; an answerable-only
    // mix keeps every question's subject intact through review.
    config.label_mix = LabelMix {
        answerable: 1.0,
        lack_of_evidence: 0.0,
        misleading: 0.0,
    };

    let mut backend = MockBackend::simulated(7);
    for k in QA_FAILS {
        let subject = fixtures::paragraph_subject(k / 5, k % 5);
        backend.reply(
            AgentRole::QaJudge,
            &subject,
            "VERDICT: fail REASON: incomplete_answer",
        );
    }
    for k in REVIEW_FAILS {
        let subject = fixtures::paragraph_subject(k / 5, k % 5);
        backend.reply(AgentRole::CommonSenseJudge, &subject, "VERDICT: common_sense");
    }

    let prompts = PromptLibrary::bundled();
    let outcome = run(&corpus, &config, &prompts, &backend, &RunOptions::default())
        .expect("check 2: scripted synthesis failed");
    let report = &outcome.attrition;
    report.validate().expect("check 2: attrition inconsistent");

    for stage in &report.stages {
        assert_eq!(
            stage.input,
            stage.kept + stage.dropped_total(),
            "check 2: conservation broken at {}",
            stage.stage
        );
    }
    for pair in report.stages.windows(2) {
        assert_eq!(
            pair[1].input, pair[0].kept,
            "check 2: stages do not chain at {}",
            pair[1].stage
        );
    }

    assert_eq!(report.stage(Stage::Preparation).input, 100);
    assert_eq!(report.stage(Stage::Preparation).kept, 100);
    assert_eq!(report.stage(Stage::QaGeneration).kept, 94);
    assert_eq!(
        report.stage(Stage::QaGeneration).dropped,
        BTreeMap::from([(DropReason::JudgeIncompleteAnswer, 6)])
    );
    assert_eq!(report.stage(Stage::NegativeGeneration).kept, 94);
    assert_eq!(report.stage(Stage::Review).kept, 73);
    assert_eq!(
        report.stage(Stage::Review).dropped,
        BTreeMap::from([(DropReason::CommonSense, 21)])
    );
    assert_eq!(outcome.examples.len(), 73);

    let funnel_report = funnel(report).expect("check 2: funnel failed");
    let expected = [1.0, 94.0 / 100.0, 1.0, 73.0 / 94.0];
    for (stage, want) in funnel_report.stages.iter().zip(expected) {
        assert!(
            (stage.retention - want).abs() < 1e-9,
            "check 2: {} retention {} != {want}",
            stage.stage,
            stage.retention
        );
    }
    assert!((funnel_report.overall - 0.73).abs() < 1e-9);

    pass(
        2,
        &format!(
            "funnel conservation: 100 -> 94 -> 94 -> 73; retentions \
             1.0 / {:.9} / 1.0 / {:.9}, all within 1e-9 of exact ratios",
            94.0 / 100.0,
            73.0 / 94.0
        ),
    );
}

#[test]
fn check_3_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    let mut stats_texts = Vec::new();

    for round in 0..2 {
        let corpus = fixtures::sample_corpus(20, 7);
        let config = fixtures::sample_config();
        let prompts = PromptLibrary::bundled();
        let backend = MockBackend::simulated(7);
        let outcome = run(&corpus, &config, &prompts, &backend, &RunOptions::default())
            .expect("check 3: synthesis failed");

        let examples_path = dir.path().join(format!("examples-{round}.jsonl"));
        let attrition_path = dir.path().join(format!("attrition-{round}.json"));
        write_examples(&outcome.examples, &examples_path).unwrap();
        write_attrition(&outcome.attrition, &attrition_path).unwrap();
        files.push((
            std::fs::read(&examples_path).unwrap(),
            std::fs::read(&attrition_path).unwrap(),
        ));
        stats_texts.push(render_stats_text(&compute_stats(&outcome.examples, None)));
    }

    assert_eq!(
        files[0].0, files[1].0,
        "check 3: example files differ between identical runs"
    );
    assert_eq!(
        files[0].1, files[1].1,
        "check 3: attrition files differ between identical runs"
    );
    assert_eq!(
        stats_texts[0], stats_texts[1],
        "check 3: stats output differs between identical runs"
    );
    pass(
        3,
        &format!(
            "determinism: two identically seeded mock runs wrote byte-identical \
             example files ({} bytes), attrition files ({} bytes), and stats output",
            files[0].0.len(),
            files[0].1.len()
        ),
    );
}

#[test]
fn check_4_retrieval_oracle_equivalence() {
    const VOCAB: [&str; 24] = [
        "harbor", "ledger", "beacon", "quay", "granite", "anchor", "ferry", "lantern",
        "mooring", "breakwater", "cargo", "tide", "salt", "rope", "keel", "mast", "chart",
        "compass", "dock", "buoy", "pier", "hull", "sail", "wharf",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let texts: Vec<String> = (0..50)
        .map(|i| {
            let words: Vec<&str> = (0..6 + i % 9)
                .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
                .collect();
            words.join(" ")
        })
        .collect();
    let fragments: Vec<Fragment> = texts
        .iter()
        .enumerate()
        .map(|(index, text)| Fragment {
            doc_id: "oracle".into(),
            index,
            span: (0, text.len()),
            text: text.clone(),
            quality_score: None,
            topics: BTreeSet::new(),
        })
        .collect();
    let query = "harbor ledger beacon quay";

    // Brute-force BM25 written from the textbook formula: split on
    // whitespace, lowercase, score each fragment independently.
    let (k1, b) = (1.2_f64, 0.75_f64);
    let term_lists: Vec<Vec<String>> = texts
        .iter()
        .map(|t| t.split_whitespace().map(str::to_lowercase).collect())
        .collect();
    let corpus_size = texts.len() as f64;
    let avg_len =
        term_lists.iter().map(Vec::len).sum::<usize>() as f64 / corpus_size;
    let mut query_terms: Vec<String> = Vec::new();
    for term in query.split_whitespace().map(str::to_lowercase) {
        if !query_terms.contains(&term) {
            query_terms.push(term);
        }
    }
    let expected: Vec<f64> = term_lists
        .iter()
        .map(|terms| {
            let mut score = 0.0;
            for q in &query_terms {
                let tf = terms.iter().filter(|t| *t == q).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = term_lists
                    .iter()
                    .filter(|list| list.iter().any(|t| t == q))
                    .count() as f64;
                let idf = ((corpus_size - df + 0.5) / (df + 0.5) + 1.0).ln();
                let norm = 1.0 - b + b * terms.len() as f64 / avg_len;
                score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
            score
        })
        .collect();
    let mut expected_order: Vec<usize> = (0..texts.len()).collect();
    expected_order.sort_by(|&a, &z| expected[z].total_cmp(&expected[a]).then(a.cmp(&z)));

    let index = build_index(&fragments).unwrap();
    let ranked = top_n(&index, query, fragments.len());
    assert_eq!(ranked.len(), 50, "check 4: expected the full ranking");

    let got_order: Vec<usize> = ranked.iter().map(|r| r.0.index).collect();
    assert_eq!(got_order, expected_order, "check 4: ranking order diverged");
    let mut worst = 0.0_f64;
    for (reference, score) in &ranked {
        let delta = (score - expected[reference.index]).abs();
        worst = worst.max(delta);
        assert!(
            delta < 1e-9,
            "check 4: fragment {} scored {score}, oracle {}",
            reference.index,
            expected[reference.index]
        );
    }
    pass(
        4,
        &format!(
            "retrieval oracle equivalence: 50-fragment ranking identical to \
             brute force, worst score delta {worst:.2e}"
        ),
    );
}

#[test]
fn check_5_evidence_deletion_oracle() {
    const EN_WORDS: [&str; 12] = [
        "archive", "brigade", "canal", "dockyard", "estate", "foundry", "granary",
        "harvest", "infirmary", "junction", "kiln", "lighthouse",
    ];
    const ZH_CHARS: [&str; 12] = [
        "档", "案", "运", "河", "船", "坞", "粮", "仓", "灯", "塔", "窑", "炉",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0usize;
    let mut multi_occurrence = 0usize;
    let mut cjk_cases = 0usize;

    for case in 0..1_000 {
        let zh = case % 2 == 1;
        let sentence = |rng: &mut ChaCha8Rng| -> String {
            if zh {
                let body: String = (0..rng.gen_range(4..10))
                    .map(|_| ZH_CHARS[rng.gen_range(0..ZH_CHARS.len())])
                    .collect::<Vec<_>>()
                    .join("");
                format!("另册记有{body}。")
            } else {
                let body: Vec<&str> = (0..rng.gen_range(3..8))
                    .map(|_| EN_WORDS[rng.gen_range(0..EN_WORDS.len())])
                    .collect();
                format!("Side notes mention the {}.", body.join(" "))
            }
        };
        let evidence = if zh {
            let body: String = (0..rng.gen_range(5..11))
                .map(|_| ZH_CHARS[rng.gen_range(0..ZH_CHARS.len())])
                .collect::<Vec<_>>()
                .join("");
            format!("正卷载明{body}之事。")
        } else {
            let body: Vec<&str> = (0..rng.gen_range(4..9))
                .map(|_| EN_WORDS[rng.gen_range(0..EN_WORDS.len())])
                .collect();
            format!("The register shows the {} entry.", body.join(" "))
        };

        let mut sentences: Vec<String> = (0..rng.gen_range(2..7))
            .map(|_| sentence(&mut rng))
            .collect();
        sentences.push(if zh {
            "卷首例言始终保留。".to_string()
        } else {
            "A guard line always remains in place.".to_string()
        });
        let copies = 1 + case % 3;
        if copies > 1 {
            multi_occurrence += 1;
        }
        if zh {
            cjk_cases += 1;
        }
        for copy in 0..copies {
            let at = rng.gen_range(0..=sentences.len());
            // Every third inserted copy gets doubled spacing, which only a
            // whitespace-normalizing deletion can still find.
            if !zh && copy % 3 == 1 {
                sentences.insert(at, evidence.replace(' ', "  "));
            } else {
                sentences.insert(at, evidence.clone());
            }
        }
        let document = sentences.join(if zh { "" } else { " " });

        let context = make_lack_of_evidence(&document, &evidence)
            .unwrap_or_else(|reason| panic!("check 5: case {case} dropped: {reason}"));
        assert!(
            !oracle_contains(&context, &evidence),
            "check 5: case {case} still contains its evidence"
        );
        assert!(
            context.len() < document.len(),
            "check 5: case {case} did not shrink"
        );
        assert!(count_tokens(&context) > 0, "check 5: case {case} emptied");
        checked += 1;
    }

    assert_eq!(checked, 1_000);
    pass(
        5,
        &format!(
            "evidence-deletion oracle: 1000 generated pairs scanned clean \
             ({multi_occurrence} multi-occurrence, {cjk_cases} CJK), every \
             output strictly shorter"
        ),
    );
}

fn stats_example(
    id: &str,
    doc: &str,
    language: Language,
    domain: Domain,
    label: Label,
    bucket: LengthBucket,
) -> BenchmarkExample {
    BenchmarkExample {
        id: id.into(),
        context: "context body".into(),
        question: "question text".into(),
        answer: "answer text".into(),
        label,
        language,
        domain,
        length_bucket: bucket,
        provenance: Provenance {
            doc_id: doc.into(),
            fragment_index: 0,
            strategy: None,
            evidence: "evidence".into(),
            original_question: if label == Label::Misleading {
                Some("original".into())
            } else {
                None
            },
        },
    }
}

#[test]
fn check_6_stats_exactness() {
    use Domain::{Books, Law, Other};
    use Label::{Answerable, LackOfEvidence, Misleading};
    use Language::{En, Zh};
    use LengthBucket::{B0to16k, B16to32k, B32to64k, B64to128k};

    let examples = vec![
        stats_example("e01", "doc-a", En, Law, Answerable, B0to16k),
        stats_example("e02", "doc-a", En, Law, Answerable, B0to16k),
        stats_example("e03", "doc-a", En, Law, Answerable, B0to16k),
        stats_example("e04", "doc-b", En, Books, Answerable, B0to16k),
        stats_example("e05", "doc-b", En, Books, Answerable, B16to32k),
        stats_example("e06", "doc-c", Zh, Other, LackOfEvidence, B16to32k),
        stats_example("e07", "doc-c", Zh, Other, LackOfEvidence, B16to32k),
        stats_example("e08", "doc-c", Zh, Other, LackOfEvidence, B16to32k),
        stats_example("e09", "doc-d", Zh, Law, LackOfEvidence, B32to64k),
        stats_example("e10", "doc-d", Zh, Law, Misleading, B32to64k),
        stats_example("e11", "doc-e", En, Other, Misleading, B64to128k),
        stats_example("e12", "doc-e", En, Other, Misleading, B64to128k),
    ];
    let report = compute_stats(&examples, None);

    // Hand counts: 12 examples over 5 documents.
    assert_eq!(report.total.examples, 12);
    assert_eq!(report.total.articles, 5);
    assert_eq!(report.by_language[&En].examples, 7);
    assert_eq!(report.by_language[&En].articles, 3);
    assert_eq!(report.by_language[&Zh].examples, 5);
    assert_eq!(report.by_language[&Zh].articles, 2);
    assert_eq!(report.labels[&Answerable], 5);
    assert_eq!(report.labels[&LackOfEvidence], 4);
    assert_eq!(report.labels[&Misleading], 3);
    assert_eq!(report.domains[&Law], 5);
    assert_eq!(report.domains[&Books], 2);
    assert_eq!(report.domains[&Other], 5);
    assert_eq!(report.length_buckets[&B0to16k], 4);
    assert_eq!(report.length_buckets[&B16to32k], 4);
    assert_eq!(report.length_buckets[&B32to64k], 2);
    assert_eq!(report.length_buckets[&B64to128k], 2);

    // Published benchmark files are optional; when supplied, their train
    // totals are reported against the reference 19100 examples / 11379
    // articles without gating this check.
    match std::env::var_os("QAFORGE_PUBLISHED_TRAIN") {
        Some(path) => match read_examples(Path::new(&path)) {
            Ok(published) => {
                let published_stats = compute_stats(&published, None);
                println!(
                    "[check 6/9] info: published train file reads {} examples / \
                     {} articles (reference: 19100 / 11379)",
                    published_stats.total.examples, published_stats.total.articles
                );
            }
            Err(error) => println!(
                "[check 6/9] info: could not read QAFORGE_PUBLISHED_TRAIN: {error}"
            ),
        },
        None => println!(
            "[check 6/9] info: no published train file supplied; set \
             QAFORGE_PUBLISHED_TRAIN to report its totals"
        ),
    }

    pass(
        6,
        "stats exactness: 12-example fixture matches hand counts \
         (12 examples / 5 articles; en 7/3, zh 5/2; labels 5/4/3; \
         domains 5/2/5; buckets 4/4/2/2)",
    );
}

fn eval_example(id: &str, label: Label, language: Language) -> BenchmarkExample {
    BenchmarkExample {
        id: id.into(),
        context: format!("The {id} file holds one plain statement."),
        question: format!("What does the passage state about the {id} file?"),
        answer: format!("gold answer for {id}"),
        label,
        language,
        domain: Domain::Other,
        length_bucket: LengthBucket::B0to16k,
        provenance: Provenance {
            doc_id: format!("doc-{id}"),
            fragment_index: 0,
            strategy: None,
            evidence: format!("The {id} file holds one plain statement."),
            original_question: if label == Label::Misleading {
                Some(format!("What did the {id} file state originally?"))
            } else {
                None
            },
        },
    }
}

#[test]
fn check_7_eval_arithmetic() {
    let examples = vec![
        eval_example("e0", Label::Answerable, Language::En),
        eval_example("e1", Label::Answerable, Language::En),
        eval_example("e2", Label::Answerable, Language::En),
        eval_example("e3", Label::Answerable, Language::En),
        eval_example("e4", Label::LackOfEvidence, Language::Zh),
        eval_example("e5", Label::LackOfEvidence, Language::Zh),
        eval_example("e6", Label::LackOfEvidence, Language::Zh),
        eval_example("e7", Label::Misleading, Language::En),
        eval_example("e8", Label::Misleading, Language::En),
        eval_example("e9", Label::Misleading, Language::En),
    ];
    let predictions: Vec<Prediction> = examples
        .iter()
        .map(|example| Prediction {
            example_id: example.id.clone(),
            model: "scripted-candidate".into(),
            answer: format!("reply-{} text", example.id),
            flag: None,
        })
        .collect();

    // Scripted judge: three of four answerable replies pass Task 1, three
    // of six unanswerable replies are recognized, and the recognized ones
    // split two direct refusals against one reasoned answer.
    let mut backend = MockBackend::strict(0);
    for id in ["e0", "e1", "e2"] {
        backend.reply(AgentRole::Task1JudgeAnswerable, &format!("reply-{id}"), "SCORE: 1");
    }
    backend.reply(AgentRole::Task1JudgeAnswerable, "reply-e3", "SCORE: 0");
    for id in ["e4", "e5", "e6"] {
        backend.reply(AgentRole::Task1JudgeUnanswerable, &format!("reply-{id}"), "SCORE: 1");
    }
    for id in ["e7", "e8", "e9"] {
        backend.reply(AgentRole::Task1JudgeUnanswerable, &format!("reply-{id}"), "SCORE: 0");
    }
    backend.reply(AgentRole::Task2Judge, "reply-e4", "CLASS: direct_refusal");
    backend.reply(AgentRole::Task2Judge, "reply-e5", "CLASS: direct_refusal");
    backend.reply(AgentRole::Task2Judge, "reply-e6", "CLASS: reasoned");
    for id in ["e7", "e8", "e9"] {
        backend.reply(AgentRole::Task2Judge, &format!("reply-{id}"), "CLASS: incorrect");
    }

    let prompts = PromptLibrary::bundled();
    let bindings = Default::default();
    let refusal = Default::default();
    let agents = qaforge::agents::Agents::new(&backend, &prompts, &bindings, &refusal);
    let outcome = judge_predictions(
        &examples,
        &predictions,
        &agents,
        &EvalOptions::default(),
        &RunOptions::default(),
    )
    .expect("check 7: judging failed");
    assert!(outcome.excluded.is_empty(), "check 7: unexpected exclusions");
    assert_eq!(outcome.judgments.len(), 10);

    for judgment in &outcome.judgments {
        if let Some(class) = judgment.task2_class() {
            assert_eq!(
                class != Task2Class::Incorrect,
                judgment.task1_score() == 1,
                "check 7: verdict coupling broken for {}",
                judgment.example_id()
            );
        }
    }

    let report = report_outcome(&outcome, &examples).expect("check 7: aggregation failed");
    assert_eq!(report.overall.correct, 6);
    assert_eq!(report.overall.total, 10);
    assert_eq!(
        format!("{:.2}", report.overall.percent()),
        "60.00",
        "check 7: overall accuracy is not 60.00%"
    );

    let task2 = report.task2.as_ref().expect("check 7: missing class breakdown");
    assert_eq!(task2.incorrect, 3);
    assert_eq!(task2.direct_refusal, 2);
    assert_eq!(task2.reasoned, 1);
    let triple_sum = task2.percent(Task2Class::Incorrect)
        + task2.percent(Task2Class::DirectRefusal)
        + task2.percent(Task2Class::Reasoned);
    assert!(
        (triple_sum - 100.0).abs() <= 0.01,
        "check 7: class percentages sum to {triple_sum}"
    );

    pass(
        7,
        &format!(
            "eval arithmetic: scripted judge over 10 examples gives 60.00% \
             (6/10); class split 3/2/1 sums to {triple_sum:.2}%; verdict \
             coupling holds for all judgments"
        ),
    );
}

#[test]
fn check_8_bucketing_partition() {
    let intervals: [(usize, usize, LengthBucket); 4] = [
        (1, 16_384, LengthBucket::B0to16k),
        (16_385, 32_768, LengthBucket::B16to32k),
        (32_769, 65_536, LengthBucket::B32to64k),
        (65_537, 131_072, LengthBucket::B64to128k),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut hit: BTreeMap<LengthBucket, usize> = BTreeMap::new();
    let mut samples: Vec<usize> = (0..10_000).map(|_| rng.gen_range(1..=131_072)).collect();
    // Force every boundary into the sample set.
    samples.extend([1, 16_384, 16_385, 32_768, 32_769, 65_536, 65_537, 131_072]);

    for count in &samples {
        let bucket = length_bucket(*count).unwrap();
        let homes: Vec<LengthBucket> = intervals
            .iter()
            .filter(|(lo, hi, _)| count >= lo && count <= hi)
            .map(|(_, _, b)| *b)
            .collect();
        assert_eq!(
            homes.len(),
            1,
            "check 8: count {count} falls in {} intervals",
            homes.len()
        );
        assert_eq!(homes[0], bucket, "check 8: count {count} bucketed wrong");
        *hit.entry(bucket).or_default() += 1;
    }
    assert_eq!(hit.len(), 4, "check 8: a bucket was never hit");
    assert!(length_bucket(0).is_err(), "check 8: zero must be rejected");
    assert!(
        length_bucket(131_073).is_err(),
        "check 8: out-of-range count must be rejected"
    );

    pass(
        8,
        &format!(
            "bucketing partition: {} sampled counts each landed in exactly \
             one bucket, boundaries close on the lower side",
            samples.len()
        ),
    );
}

#[test]
fn check_9_persistence_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let zh_run = |rng: &mut ChaCha8Rng, len: usize| -> String {
        const CHARS: [char; 10] = ['档', '案', '记', '事', '运', '河', '灯', '塔', '，', '。'];
        (0..len).map(|_| CHARS[rng.gen_range(0..CHARS.len())]).collect()
    };
    let wild = |rng: &mut ChaCha8Rng| -> String {
        let run_len = rng.gen_range(2..12);
        format!(
            "line \"quoted\" and\nbroken\twith {} plus backslash \\ end",
            zh_run(rng, run_len)
        )
    };

    let labels = [Label::Answerable, Label::LackOfEvidence, Label::Misleading];
    let strategies = [
        None,
        Some(RewriteStrategy::EntitySubstitution),
        Some(RewriteStrategy::ImpossibleCondition),
        Some(RewriteStrategy::OtherFalseAssumption),
    ];
    let examples: Vec<BenchmarkExample> = (0..250)
        .map(|i| {
            let label = labels[i % 3];
            let long = i % 50 == 0;
            let context = if long {
                // Long-context record: roughly 60k tokens of repeated text.
                format!("Opening line.\n\n{}", "steady ledger entry words here. ".repeat(12_000))
            } else {
                wild(&mut rng)
            };
            BenchmarkExample {
                id: format!("rt-{i:03}"),
                context,
                question: wild(&mut rng),
                answer: wild(&mut rng),
                label,
                language: if i % 2 == 0 { Language::En } else { Language::Zh },
                domain: [Domain::Law, Domain::Books, Domain::Other][i % 3],
                length_bucket: LengthBucket::ALL[i % 4],
                provenance: Provenance {
                    doc_id: format!("doc-{}", i / 5),
                    fragment_index: i % 5,
                    strategy: if label == Label::Misleading {
                        strategies[1 + i % 3].clone()
                    } else {
                        None
                    },
                    evidence: wild(&mut rng),
                    original_question: if label == Label::Misleading {
                        Some(wild(&mut rng))
                    } else {
                        None
                    },
                },
            }
        })
        .collect();

    let dir = tempfile::tempdir().unwrap();
    let examples_path = dir.path().join("round-trip.jsonl");
    write_examples(&examples, &examples_path).unwrap();
    let examples_back = read_examples(&examples_path).unwrap();
    assert_eq!(examples_back, examples, "check 9: examples changed on disk");

    let drops: Vec<DropReason> = (0..40)
        .map(|i| DropReason::ALL[i % DropReason::ALL.len()])
        .collect();
    let attrition = AttritionReport::from_drops(120, &drops);
    let attrition_path = dir.path().join("attrition.json");
    write_attrition(&attrition, &attrition_path).unwrap();
    assert_eq!(
        read_attrition(&attrition_path).unwrap(),
        attrition,
        "check 9: attrition changed on disk"
    );

    let judgments: Vec<EvalJudgment> = examples
        .iter()
        .take(60)
        .enumerate()
        .map(|(i, example)| {
            let correct = i % 3 != 0;
            if example.label.is_unanswerable() {
                let class = if !correct {
                    Task2Class::Incorrect
                } else if i % 2 == 0 {
                    Task2Class::DirectRefusal
                } else {
                    Task2Class::Reasoned
                };
                EvalJudgment::unanswerable(
                    &example.id,
                    u8::from(correct),
                    class,
                    format!("task1 {}", wild(&mut rng)),
                    format!("task2 {}", wild(&mut rng)),
                )
                .unwrap()
            } else {
                EvalJudgment::answerable(&example.id, u8::from(correct), wild(&mut rng)).unwrap()
            }
        })
        .collect();
    let judgments_path = dir.path().join("judgments.jsonl");
    write_judgments(&judgments, &judgments_path).unwrap();
    assert_eq!(
        read_judgments(&judgments_path).unwrap(),
        judgments,
        "check 9: judgments changed on disk"
    );

    pass(
        9,
        &format!(
            "persistence round-trip: {} examples (CJK, quotes, newlines, \
             long contexts), attrition report, and {} judgments all read \
             back identical",
            examples.len(),
            judgments.len()
        ),
    );
}
