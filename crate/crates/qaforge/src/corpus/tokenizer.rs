//! Language-agnostic token counting.
//!
//! A token is either a maximal run of non-whitespace, non-CJK characters or
//! a single CJK character. This counts "hello world" as 2 and "你好" as 2,
//! which approximates how subword tokenizers treat the two scripts closely
//! enough for length bucketing and fragment sizing.

/// A token's byte span within the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

pub(crate) fn is_cjk(c: char) -> bool {
    // U+3000 is ideographic space; whitespace wins over the CJK punctuation
    // block it lives in.
    if c.is_whitespace() {
        return false;
    }
    matches!(c,
        '\u{3000}'..='\u{303F}'
        | '\u{3040}'..='\u{30FF}'
        | '\u{3400}'..='\u{4DBF}'
        | '\u{4E00}'..='\u{9FFF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{FF00}'..='\u{FFEF}'
        | '\u{AC00}'..='\u{D7AF}'
        | '\u{20000}'..='\u{2FFFF}')
}

/// Split text into token spans.
pub fn tokenize(text: &str) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    for (off, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(start) = run_start.take() {
                spans.push(TokenSpan { start, end: off });
            }
        } else if is_cjk(c) {
            if let Some(start) = run_start.take() {
                spans.push(TokenSpan { start, end: off });
            }
            spans.push(TokenSpan {
                start: off,
                end: off + c.len_utf8(),
            });
        } else if run_start.is_none() {
            run_start = Some(off);
        }
    }
    if let Some(start) = run_start {
        spans.push(TokenSpan {
            start,
            end: text.len(),
        });
    }
    spans
}

/// Count tokens without materializing spans.
pub fn count_tokens(text: &str) -> usize {
    let mut count = 0usize;
    let mut in_run = false;
    for c in text.chars() {
        if c.is_whitespace() {
            if in_run {
                count += 1;
                in_run = false;
            }
        } else if is_cjk(c) {
            if in_run {
                count += 1;
                in_run = false;
            }
            count += 1;
        } else {
            in_run = true;
        }
    }
    if in_run {
        count += 1;
    }
    count
}
