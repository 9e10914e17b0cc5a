//! Whitespace-normalized matching and sentence boundaries.
//!
//! Evidence strings are compared against contexts case-sensitively after
//! collapsing every whitespace run to a single space. The helpers here locate
//! those matches back in the *original* text so spans can be deleted or
//! excerpted byte-exactly.

/// Collapse whitespace runs to single spaces and trim the ends.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// True when the normalized `needle` occurs in the normalized `haystack`.
pub fn contains_normalized(haystack: &str, needle: &str) -> bool {
    let needle = normalize_ws(needle);
    if needle.is_empty() {
        return false;
    }
    normalize_ws(haystack).contains(&needle)
}

/// Byte spans in the original text where the whitespace-normalized needle
/// occurs. Matches are non-overlapping, left to right.
pub fn find_normalized(haystack: &str, needle: &str) -> Vec<(usize, usize)> {
    let needle = normalize_ws(needle);
    if needle.is_empty() {
        return Vec::new();
    }

    // Build the normalized haystack together with byte maps back to the
    // original: for each normalized byte, the start of the original char that
    // produced it and the end of that char.
    let mut norm = String::with_capacity(haystack.len());
    let mut starts = Vec::with_capacity(haystack.len());
    let mut ends = Vec::with_capacity(haystack.len());
    let mut pending_space: Option<(usize, usize)> = None;
    for (off, ch) in haystack.char_indices() {
        if ch.is_whitespace() {
            let end = off + ch.len_utf8();
            pending_space = Some(match pending_space {
                Some((s, _)) => (s, end),
                None => (off, end),
            });
        } else {
            if let Some((s, e)) = pending_space.take() {
                if !norm.is_empty() {
                    norm.push(' ');
                    starts.push(s);
                    ends.push(e);
                }
            }
            let end = off + ch.len_utf8();
            for _ in 0..ch.len_utf8() {
                starts.push(off);
                ends.push(end);
            }
            norm.push(ch);
        }
    }

    let mut spans = Vec::new();
    let mut from = 0;
    while let Some(pos) = norm[from..].find(&needle) {
        let begin = from + pos;
        let end = begin + needle.len();
        spans.push((starts[begin], ends[end - 1]));
        from = end;
    }
    spans
}

/// Sentence terminators recognized for both English and CJK prose.
fn is_terminator(ch: char) -> bool {
    matches!(ch, '.' | '!' | '?' | '。' | '！' | '？')
}

/// Expand a byte span to the enclosing sentence(s).
///
/// The left edge moves back to just after the previous terminator (plus the
/// whitespace that follows it); the right edge moves forward through the next
/// terminator run. Neither edge crosses a blank-line paragraph break.
pub fn expand_to_sentence(textv: &str, span: (usize, usize)) -> (usize, usize) {
    let (mut lo, mut hi) = span;

    // Left: scan back for a terminator or a paragraph break.
    {
        let mut boundary = 0;
        let mut iter = textv[..lo].char_indices().rev().peekable();
        let mut newlines = 0usize;
        while let Some((off, ch)) = iter.next() {
            if ch == '\n' {
                newlines += 1;
                if newlines >= 2 {
                    boundary = off + 1;
                    break;
                }
            } else if !ch.is_whitespace() {
                newlines = 0;
                if is_terminator(ch) {
                    boundary = off + ch.len_utf8();
                    break;
                }
            }
        }
        // Skip whitespace following the boundary, without crossing into span.
        let mut b = boundary;
        while b < lo {
            let ch = textv[b..].chars().next().unwrap();
            if ch.is_whitespace() {
                b += ch.len_utf8();
            } else {
                break;
            }
        }
        lo = b;
    }

    // Right: scan forward to the end of the next terminator run or paragraph
    // break. A span already ending in a terminator is complete; only a
    // continuing terminator run or closing quote extends it.
    {
        let mut end = textv.len();
        let mut seen_terminator = textv[..hi]
            .chars()
            .next_back()
            .is_some_and(is_terminator);
        if seen_terminator {
            end = hi;
        }
        let mut pending_newline: Option<usize> = None;
        for (rel, ch) in textv[hi..].char_indices() {
            let off = hi + rel;
            if is_terminator(ch) {
                seen_terminator = true;
                pending_newline = None;
                end = off + ch.len_utf8();
                continue;
            }
            if seen_terminator {
                // Absorb a closing quote or bracket right after the run.
                if matches!(ch, '"' | '\'' | '”' | '’' | '」' | '』' | '）' | ')') {
                    end = off + ch.len_utf8();
                    continue;
                }
                break;
            }
            if ch == '\n' {
                if pending_newline.is_some() {
                    // Blank line: the unterminated sentence ends before it.
                    break;
                }
                pending_newline = Some(off);
                end = off;
            } else if ch.is_whitespace() {
                // Does not cancel a pending newline.
            } else {
                pending_newline = None;
                end = textv.len();
            }
        }
        hi = end.max(hi);
    }

    (lo, hi)
}

/// A short window of `context` around the first normalized occurrence of
/// `anchor`, or the head of the context when the anchor is absent.
pub fn excerpt_around(context: &str, anchor: &str, radius: usize) -> String {
    let span = find_normalized(context, anchor).into_iter().next();
    let (lo, hi) = match span {
        Some((s, e)) => (s.saturating_sub(radius), (e + radius).min(context.len())),
        None => (0, (2 * radius).min(context.len())),
    };
    let lo = floor_char_boundary(context, lo);
    let hi = ceil_char_boundary(context, hi);
    let mut out = String::new();
    if lo > 0 {
        out.push('…');
    }
    out.push_str(&context[lo..hi]);
    if hi < context.len() {
        out.push('…');
    }
    out
}

fn floor_char_boundary(s: &str, mut i: usize) -> usize {
    while i > 0 && !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

fn ceil_char_boundary(s: &str, mut i: usize) -> usize {
    while i < s.len() && !s.is_char_boundary(i) {
        i += 1;
    }
    i
}
