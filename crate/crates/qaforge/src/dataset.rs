//! Persistence, splitting, statistics, and the manual-review export.
//!
//! Files are UTF-8 line-delimited JSON records written atomically (temp
//! file in the target directory, then rename), one example or one
//! attrition stage per line. Splitting groups examples by source document
//! so no article's text leaks across train, development, and test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{Domain, Language, LengthBucket};
use crate::error::{Error, Result};
use crate::pipeline::{AttritionReport, BenchmarkExample, Label, StageCounts};
use crate::text::excerpt_around;

/// Write `bytes` to `path` through a temp file in the same directory so
/// readers never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut temp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .map_err(|e| Error::io(path, e))?;
    temp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    temp.flush().map_err(|e| Error::io(path, e))?;
    temp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<usize> {
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| {
            Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })?;
        out.push(b'\n');
    }
    write_atomic(path, &out)?;
    Ok(records.len())
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Write examples one record per line; returns the record count.
pub fn write_examples(examples: &[BenchmarkExample], path: &Path) -> Result<usize> {
    write_jsonl(examples, path)
}

/// Read a benchmark file; malformed lines name their line number.
pub fn read_examples(path: &Path) -> Result<Vec<BenchmarkExample>> {
    read_jsonl(path)
}

/// Write the attrition report as one record per stage.
pub fn write_attrition(report: &AttritionReport, path: &Path) -> Result<usize> {
    write_jsonl(&report.stages, path)
}

/// Read an attrition report back and re-validate its invariants.
pub fn read_attrition(path: &Path) -> Result<AttritionReport> {
    let stages: Vec<StageCounts> = read_jsonl(path)?;
    let report = AttritionReport { stages };
    report.validate()?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Development,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Development, SplitName::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Development => "development",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Split proportions; defaults echo a roughly 76/7/17 distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub development: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.76,
            development: 0.07,
            test: 0.17,
        }
    }
}

impl SplitRatios {
    fn get(&self, split: SplitName) -> f64 {
        match split {
            SplitName::Train => self.train,
            SplitName::Development => self.development,
            SplitName::Test => self.test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.development, self.test];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|p| !(0.0..=1.0).contains(p) || !p.is_finite())
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(Error::SplitRatios(sum));
        }
        Ok(())
    }

    fn positive_count(&self) -> usize {
        SplitName::ALL.iter().filter(|s| self.get(**s) > 0.0).count()
    }
}

/// A partition of examples into splits, by whole source documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub by_example: BTreeMap<String, SplitName>,
    pub by_document: BTreeMap<String, SplitName>,
}

impl DatasetSplit {
    pub fn of(&self, example_id: &str) -> Option<SplitName> {
        self.by_example.get(example_id).copied()
    }
}

/// Assign whole documents to splits: sort the distinct document ids,
/// shuffle them with the seed, size each split by largest-remainder
/// rounding of the ratios over the document count, then fill the splits
/// in order from the shuffled sequence.
pub fn assign_splits(
    examples: &[BenchmarkExample],
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit> {
    ratios.validate()?;
    let mut doc_ids: Vec<&str> = examples
        .iter()
        .map(|e| e.provenance.doc_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let needed = ratios.positive_count();
    if doc_ids.len() < needed {
        return Err(Error::TooFewDocuments {
            needed,
            got: doc_ids.len(),
        });
    }

    use rand::seq::SliceRandom;
    doc_ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = doc_ids.len();
    let mut quotas: Vec<(SplitName, usize, f64)> = SplitName::ALL
        .iter()
        .map(|&split| {
            let exact = ratios.get(split) * total as f64;
            (split, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|(_, q, _)| q).sum();
    // Hand out the remainder to the largest fractional parts, earlier
    // splits first on ties.
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &slot in order.iter().take(total - assigned) {
        quotas[slot].1 += 1;
    }

    let mut by_document = BTreeMap::new();
    let mut cursor = 0usize;
    for (split, quota, _) in quotas {
        for doc_id in &doc_ids[cursor..cursor + quota] {
            by_document.insert((*doc_id).to_string(), split);
        }
        cursor += quota;
    }
    let by_example = examples
        .iter()
        .map(|e| {
            let split = by_document[e.provenance.doc_id.as_str()];
            (e.id.clone(), split)
        })
        .collect();
    Ok(DatasetSplit {
        by_example,
        by_document,
    })
}

/// Examples and distinct source articles in a group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub examples: usize,
    pub articles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total: GroupCounts,
    pub by_language: BTreeMap<Language, GroupCounts>,
    /// Present only when a split assignment was provided.
    pub by_split_language: BTreeMap<SplitName, BTreeMap<Language, GroupCounts>>,
    pub labels: BTreeMap<Label, usize>,
    pub domains: BTreeMap<Domain, usize>,
    pub length_buckets: BTreeMap<LengthBucket, usize>,
}

fn group_counts<'a>(examples: impl Iterator<Item = &'a BenchmarkExample>) -> GroupCounts {
    let mut count = 0usize;
    let mut articles = BTreeSet::new();
    for example in examples {
        count += 1;
        articles.insert(example.provenance.doc_id.as_str());
    }
    GroupCounts {
        examples: count,
        articles: articles.len(),
    }
}

/// Exact counts over a set of examples, optionally broken down by split.
pub fn compute_stats(examples: &[BenchmarkExample], split: Option<&DatasetSplit>) -> StatsReport {
    let total = group_counts(examples.iter());
    assert!(total.articles <= total.examples);

    let mut by_language = BTreeMap::new();
    for language in [Language::En, Language::Zh] {
        let counts = group_counts(examples.iter().filter(|e| e.language == language));
        if counts.examples > 0 {
            by_language.insert(language, counts);
        }
    }

    let mut by_split_language = BTreeMap::new();
    if let Some(split) = split {
        for name in SplitName::ALL {
            let mut languages = BTreeMap::new();
            for language in [Language::En, Language::Zh] {
                let counts = group_counts(examples.iter().filter(|e| {
                    e.language == language && split.of(&e.id) == Some(name)
                }));
                if counts.examples > 0 {
                    languages.insert(language, counts);
                }
            }
            if !languages.is_empty() {
                by_split_language.insert(name, languages);
            }
        }
    }

    let mut labels = BTreeMap::new();
    let mut domains = BTreeMap::new();
    let mut length_buckets = BTreeMap::new();
    for example in examples {
        *labels.entry(example.label).or_default() += 1;
        *domains.entry(example.domain).or_default() += 1;
        *length_buckets.entry(example.length_bucket).or_default() += 1;
    }

    StatsReport {
        total,
        by_language,
        by_split_language,
        labels,
        domains,
        length_buckets,
    }
}

/// Aligned-text rendering for terminals and logs.
pub fn render_stats_text(report: &StatsReport) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(format!(
        "total            {:>8} examples  {:>8} articles",
        report.total.examples, report.total.articles
    ));
    for (language, counts) in &report.by_language {
        line(format!(
            "language {:<8}{:>8} examples  {:>8} articles",
            language.to_string(),
            counts.examples,
            counts.articles
        ));
    }
    for (split, languages) in &report.by_split_language {
        for (language, counts) in languages {
            line(format!(
                "{:<8} {:<8}{:>8} examples  {:>8} articles",
                split.to_string(),
                language.to_string(),
                counts.examples,
                counts.articles
            ));
        }
    }
    for (label, count) in &report.labels {
        line(format!("label    {:<17}{:>8}", label.to_string(), count));
    }
    for (domain, count) in &report.domains {
        line(format!("domain   {:<17}{:>8}", domain.to_string(), count));
    }
    for (bucket, count) in &report.length_buckets {
        line(format!("bucket   {:<17}{:>8}", bucket.to_string(), count));
    }
    out
}

const REVIEW_SHEET_HEADER: &str =
    "id\tlabel\tlanguage\texcerpt\tquestion\tanswer\tquestion_ok\tanswer_ok";

fn escape_tsv(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for ch in field.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

/// Seeded uniform sample without replacement, rendered as a tab-separated
/// sheet with blank verdict columns for annotators. Rows follow dataset
/// order.
pub fn sample_for_manual_review(
    examples: &[BenchmarkExample],
    k: usize,
    seed: u64,
) -> Result<String> {
    if k > examples.len() {
        return Err(Error::SampleTooLarge {
            k,
            available: examples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, examples.len(), k).into_vec();
    picked.sort_unstable();

    let mut sheet = String::from(REVIEW_SHEET_HEADER);
    sheet.push('\n');
    for index in picked {
        let example = &examples[index];
        let excerpt = excerpt_around(&example.context, &example.provenance.evidence, 160);
        sheet.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t\t\n",
            escape_tsv(&example.id),
            example.label,
            example.language,
            escape_tsv(&excerpt),
            escape_tsv(&example.question),
            escape_tsv(&example.answer),
        ));
    }
    Ok(sheet)
}
