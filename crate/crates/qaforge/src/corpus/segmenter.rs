//! Paragraph-based document segmentation.
//!
//! Documents split on blank lines into paragraphs, which pack greedily into
//! fragments of `min_tokens..=max_tokens`. A paragraph too large for one
//! fragment falls back to sentence pieces, and a single oversize sentence to
//! fixed token windows. Only the final fragment of a document may come up
//! short of `min_tokens`.

use std::collections::BTreeSet;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::tokenizer::{count_tokens, tokenize};
use super::{Document, Fragment};
use crate::error::{Error, Result};

/// Fragment sizing bounds and selection strictness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    /// Fragments are closed once they reach at least this many tokens.
    pub min_tokens: usize,
    /// No fragment exceeds this many tokens.
    pub max_tokens: usize,
    /// When true, asking for more fragments than a document yields is an
    /// error instead of returning fewer.
    pub strict: bool,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            min_tokens: 512,
            max_tokens: 2048,
            strict: false,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.min_tokens == 0 {
            return Err("segment min_tokens must be at least 1".into());
        }
        if self.max_tokens < self.min_tokens {
            return Err(format!(
                "segment max_tokens ({}) must be >= min_tokens ({})",
                self.max_tokens, self.min_tokens
            ));
        }
        Ok(())
    }
}

/// Segment a document and keep the `n` most lexically diverse fragments.
///
/// Diversity is the distinct-token ratio; ties prefer the earlier fragment.
/// The kept fragments are re-indexed `0..k` in document order. Returns
/// `min(n, available)` fragments, or `NotEnoughFragments` in strict mode.
pub fn segment(doc: &Document, n: usize, config: &SegmentConfig) -> Result<Vec<Fragment>> {
    assert!(n > 0, "segment requires n > 0");
    let mut fragments = segment_all(&doc.id, &doc.text, config);
    if fragments.len() < n && config.strict {
        return Err(Error::NotEnoughFragments {
            doc_id: doc.id.clone(),
            wanted: n,
            available: fragments.len(),
        });
    }
    if fragments.len() > n {
        let mut ranked: Vec<(usize, f64)> = fragments
            .iter()
            .map(|f| (f.index, distinct_token_ratio(&f.text)))
            .collect();
        // Highest ratio first; equal ratios keep the earlier fragment.
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let keep: BTreeSet<usize> = ranked[..n].iter().map(|r| r.0).collect();
        fragments.retain(|f| keep.contains(&f.index));
        for (i, f) in fragments.iter_mut().enumerate() {
            f.index = i;
        }
    }
    Ok(fragments)
}

/// Segment arbitrary text into every packed fragment, without selection.
///
/// Used both for documents and for re-segmenting a candidate context during
/// review; whitespace-only text yields no fragments.
pub fn segment_all(doc_id: &str, text: &str, config: &SegmentConfig) -> Vec<Fragment> {
    let mut units: Vec<(usize, usize)> = Vec::new();
    for para in split_paragraphs(text) {
        let slice = &text[para.0..para.1];
        if count_tokens(slice) <= config.max_tokens {
            units.push(para);
        } else {
            for sent in split_sentences(slice) {
                let abs = (para.0 + sent.0, para.0 + sent.1);
                let sent_slice = &text[abs.0..abs.1];
                if count_tokens(sent_slice) <= config.max_tokens {
                    units.push(abs);
                } else {
                    for chunk in token_windows(sent_slice, config.max_tokens) {
                        units.push((abs.0 + chunk.0, abs.0 + chunk.1));
                    }
                }
            }
        }
    }

    let mut fragments = Vec::new();
    let mut open: Option<(usize, usize, usize)> = None; // (start, end, tokens)
    for unit in units {
        let unit_tokens = count_tokens(&text[unit.0..unit.1]);
        match open {
            None => open = Some((unit.0, unit.1, unit_tokens)),
            Some((start, end, tokens)) => {
                if tokens + unit_tokens <= config.max_tokens {
                    open = Some((start, unit.1, tokens + unit_tokens));
                } else if tokens >= config.min_tokens {
                    push_fragment(&mut fragments, doc_id, text, start, end);
                    open = Some((unit.0, unit.1, unit_tokens));
                } else {
                    // Too small to close, too full to take the whole unit:
                    // take a token-bounded head of the unit instead.
                    let room = config.max_tokens - tokens;
                    let spans = tokenize(&text[unit.0..unit.1]);
                    let cut = unit.0 + spans[room - 1].end;
                    push_fragment(&mut fragments, doc_id, text, start, cut);
                    let rest_start = unit.0 + spans[room].start;
                    let rest_tokens = count_tokens(&text[rest_start..unit.1]);
                    if rest_tokens <= config.max_tokens {
                        open = Some((rest_start, unit.1, rest_tokens));
                    } else {
                        let mut tail = None;
                        for chunk in token_windows(&text[rest_start..unit.1], config.max_tokens) {
                            if let Some((s, e, _)) = tail {
                                push_fragment(&mut fragments, doc_id, text, s, e);
                            }
                            let abs = (rest_start + chunk.0, rest_start + chunk.1);
                            tail = Some((abs.0, abs.1, count_tokens(&text[abs.0..abs.1])));
                        }
                        open = tail;
                    }
                }
            }
        }
    }
    if let Some((start, end, _)) = open {
        push_fragment(&mut fragments, doc_id, text, start, end);
    }
    fragments
}

fn push_fragment(out: &mut Vec<Fragment>, doc_id: &str, text: &str, start: usize, end: usize) {
    let index = out.len();
    out.push(Fragment {
        doc_id: doc_id.to_string(),
        index,
        span: (start, end),
        text: text[start..end].to_string(),
        quality_score: None,
        topics: BTreeSet::new(),
    });
}

fn distinct_token_ratio(text: &str) -> f64 {
    let spans = tokenize(text);
    if spans.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&str> = spans.iter().map(|s| &text[s.start..s.end]).collect();
    distinct.len() as f64 / spans.len() as f64
}

/// Byte spans of blank-line-separated paragraphs, trimmed of edge whitespace.
pub(crate) fn split_paragraphs(text: &str) -> Vec<(usize, usize)> {
    let mut paras = Vec::new();
    let mut cursor = 0;
    let mut para_start: Option<usize> = None;
    for line in text.split_inclusive('\n') {
        let start = cursor;
        cursor += line.len();
        if line.trim().is_empty() {
            if let Some(s) = para_start.take() {
                paras.push(trim_span(text, s, start));
            }
        } else if para_start.is_none() {
            para_start = Some(start);
        }
    }
    if let Some(s) = para_start {
        paras.push(trim_span(text, s, text.len()));
    }
    paras.retain(|(s, e)| e > s);
    paras
}

fn trim_span(text: &str, start: usize, end: usize) -> (usize, usize) {
    let slice = &text[start..end];
    let trimmed = slice.trim_start();
    let new_start = start + (slice.len() - trimmed.len());
    let trimmed = trimmed.trim_end();
    (new_start, new_start + trimmed.len())
}

const TERMINATORS: [char; 6] = ['.', '!', '?', '。', '！', '？'];

/// Byte spans of sentences within a paragraph. A sentence runs through its
/// terminator run; text without terminators is one sentence.
pub(crate) fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let mut sents = Vec::new();
    let mut start: Option<usize> = None;
    let mut after_terminator = false;
    for (off, c) in text.char_indices() {
        if start.is_none() && !c.is_whitespace() {
            start = Some(off);
        }
        if TERMINATORS.contains(&c) {
            after_terminator = true;
        } else if after_terminator {
            if let Some(s) = start.take() {
                sents.push((s, off));
            }
            after_terminator = false;
            if !c.is_whitespace() {
                start = Some(off);
            }
        }
    }
    if let Some(s) = start {
        sents.push(trim_span(text, s, text.len()));
    }
    sents.retain(|(s, e)| e > s);
    sents
}

/// Consecutive windows of at most `max_tokens` tokens, spanning from the
/// first token's start to the last token's end.
fn token_windows(text: &str, max_tokens: usize) -> Vec<(usize, usize)> {
    let spans = tokenize(text);
    let mut windows = Vec::new();
    let mut i = 0;
    while i < spans.len() {
        let j = (i + max_tokens).min(spans.len());
        windows.push((spans[i].start, spans[j - 1].end));
        i = j;
    }
    windows
}
