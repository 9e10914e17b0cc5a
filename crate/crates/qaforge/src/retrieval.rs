//! BM25 retrieval over a document's fragments.
//!
//! The review stage asks which passages of a candidate context could answer
//! a question; this module builds an immutable lexical index over the
//! context's fragments and scores them with BM25. Token segmentation is the
//! one `corpus::count_tokens` uses, with terms lowercased for matching.
//!
//! Scoring is deterministic to the bit: contributions accumulate term by
//! term in query appearance order, so neither build order nor map iteration
//! order can perturb a score.

use std::collections::{HashMap, HashSet};

use crate::corpus::{tokenize, Fragment, FragmentRef};
use crate::error::{Error, Result};

/// Okapi BM25 parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Immutable BM25 index over a fragment list.
#[derive(Debug, Clone)]
pub struct LexicalIndex {
    refs: Vec<FragmentRef>,
    lengths: Vec<usize>,
    avg_len: f64,
    postings: HashMap<String, Vec<(usize, u32)>>,
    params: Bm25Params,
}

impl LexicalIndex {
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn average_length(&self) -> f64 {
        self.avg_len
    }

    /// Number of fragments containing `term` (after lowercasing).
    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings
            .get(&term.to_lowercase())
            .map_or(0, |p| p.len())
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }
}

fn terms_of(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .map(|s| text[s.start..s.end].to_lowercase())
        .collect()
}

/// Build an index with default parameters.
pub fn build_index(fragments: &[Fragment]) -> Result<LexicalIndex> {
    build_index_with(fragments, Bm25Params::default())
}

/// Build an index with explicit parameters. The fragment list must be
/// non-empty; per-fragment scores do not depend on list order.
pub fn build_index_with(fragments: &[Fragment], params: Bm25Params) -> Result<LexicalIndex> {
    if fragments.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let mut refs = Vec::with_capacity(fragments.len());
    let mut lengths = Vec::with_capacity(fragments.len());
    let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
    let mut total_len = 0usize;
    for (slot, frag) in fragments.iter().enumerate() {
        refs.push(frag.reference());
        let terms = terms_of(&frag.text);
        total_len += terms.len();
        lengths.push(terms.len());
        let mut tf: HashMap<String, u32> = HashMap::new();
        for term in terms {
            *tf.entry(term).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push((slot, count));
        }
    }
    let avg_len = total_len as f64 / fragments.len() as f64;
    Ok(LexicalIndex {
        refs,
        lengths,
        avg_len,
        postings,
        params,
    })
}

/// Rank fragments against `query`, best first.
///
/// Returns `min(n, corpus size)` entries with non-increasing scores, ties
/// broken by lower fragment index. A query with no indexed terms (or no
/// terms at all) returns an empty list; otherwise zero-score fragments are
/// eligible, so `n` = corpus size ranks every fragment.
pub fn top_n(index: &LexicalIndex, query: &str, n: usize) -> Vec<(FragmentRef, f64)> {
    assert!(n > 0, "top_n requires n > 0");
    let mut seen = HashSet::new();
    let mut query_terms = Vec::new();
    for term in terms_of(query) {
        if seen.insert(term.clone()) {
            query_terms.push(term);
        }
    }

    let corpus = index.refs.len() as f64;
    let Bm25Params { k1, b } = index.params;
    let mut scores = vec![0f64; index.refs.len()];
    let mut matched = false;
    for term in &query_terms {
        let Some(posting) = index.postings.get(term) else {
            continue;
        };
        matched = true;
        let df = posting.len() as f64;
        let idf = ((corpus - df + 0.5) / (df + 0.5) + 1.0).ln();
        for &(slot, tf) in posting {
            let tf = tf as f64;
            let norm = 1.0 - b + b * index.lengths[slot] as f64 / index.avg_len;
            scores[slot] += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
        }
    }
    if !matched {
        return Vec::new();
    }

    let mut order: Vec<usize> = (0..index.refs.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(index.refs[a].index.cmp(&index.refs[b].index))
            .then(index.refs[a].doc_id.cmp(&index.refs[b].doc_id))
    });
    order
        .into_iter()
        .take(n)
        .map(|slot| (index.refs[slot].clone(), scores[slot]))
        .collect()
}
