//! Loading corpora from disk.
//!
//! Two layouts are supported: a directory of UTF-8 `.txt` files with optional
//! `<name>.meta.json` sidecars, and a single file of line-delimited JSON
//! records. Both yield deterministic document ids (filename stem or record
//! id) in a stable order.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::segmenter::split_paragraphs;
use super::tokenizer::{count_tokens, tokenize};
use super::{Document, Domain, Language, MAX_DOCUMENT_TOKENS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// Directory of `.txt` files, metadata in `<stem>.meta.json` sidecars.
    PlainTextDir,
    /// One JSON object per line: `{id, text, language?, domain?}`.
    JsonLines,
}

/// What to do with a record that cannot be ingested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MalformedPolicy {
    #[default]
    Fatal,
    Skip,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub default_language: Language,
    pub default_domain: Domain,
    pub on_malformed: MalformedPolicy,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            default_language: Language::En,
            default_domain: Domain::Other,
            on_malformed: MalformedPolicy::Fatal,
        }
    }
}

#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub documents: Vec<Document>,
    /// Human-readable descriptions of records skipped under
    /// `MalformedPolicy::Skip`, each naming its file or line.
    pub skipped: Vec<String>,
    /// Ids of documents cut back to the token cap.
    pub truncated: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SidecarMeta {
    language: Option<Language>,
    domain: Option<Domain>,
}

#[derive(Debug, Deserialize)]
struct RecordLine {
    id: String,
    text: String,
    language: Option<Language>,
    domain: Option<Domain>,
}

/// Load a corpus from `path` in the given layout.
///
/// Documents over the token cap are truncated at the last paragraph boundary
/// that fits, with a warning; ids and order are deterministic across runs.
pub fn load_documents(
    path: &Path,
    format: CorpusFormat,
    options: &IngestOptions,
) -> Result<IngestOutcome> {
    match format {
        CorpusFormat::PlainTextDir => load_plain_text_dir(path, options),
        CorpusFormat::JsonLines => load_json_lines(path, options),
    }
}

fn load_plain_text_dir(dir: &Path, options: &IngestOptions) -> Result<IngestOutcome> {
    let mut outcome = IngestOutcome::default();
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    files.sort();

    for file in files {
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = match fs::read_to_string(&file) {
            Ok(t) => t,
            Err(e) => {
                let reason = format!("{}: unreadable: {e}", file.display());
                match options.on_malformed {
                    MalformedPolicy::Fatal => return Err(Error::io(&file, e)),
                    MalformedPolicy::Skip => {
                        outcome.skipped.push(reason);
                        continue;
                    }
                }
            }
        };
        let meta = match read_sidecar(&file) {
            Ok(m) => m,
            Err(reason) => match options.on_malformed {
                MalformedPolicy::Fatal => {
                    return Err(Error::InvalidDocument { id, reason });
                }
                MalformedPolicy::Skip => {
                    outcome.skipped.push(format!("{id}: {reason}"));
                    continue;
                }
            },
        };
        let language = meta.language.unwrap_or(options.default_language);
        let domain = meta.domain.unwrap_or(options.default_domain);
        admit(&mut outcome, options, id, language, domain, text, || {
            format!("{}", file.display())
        })?;
    }
    Ok(outcome)
}

fn read_sidecar(doc_path: &Path) -> std::result::Result<SidecarMeta, String> {
    let sidecar = doc_path.with_extension("meta.json");
    if !sidecar.exists() {
        return Ok(SidecarMeta::default());
    }
    let raw = fs::read_to_string(&sidecar)
        .map_err(|e| format!("sidecar {}: {e}", sidecar.display()))?;
    serde_json::from_str(&raw).map_err(|e| format!("sidecar {}: {e}", sidecar.display()))
}

fn load_json_lines(path: &Path, options: &IngestOptions) -> Result<IngestOutcome> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut outcome = IngestOutcome::default();
    for (lineno, line) in raw.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: RecordLine = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                match options.on_malformed {
                    MalformedPolicy::Fatal => {
                        return Err(Error::MalformedRecord {
                            path: path.to_path_buf(),
                            line: lineno,
                            reason: e.to_string(),
                        });
                    }
                    MalformedPolicy::Skip => {
                        outcome.skipped.push(format!("line {lineno}: {e}"));
                        continue;
                    }
                }
            }
        };
        let language = record.language.unwrap_or(options.default_language);
        let domain = record.domain.unwrap_or(options.default_domain);
        admit(
            &mut outcome,
            options,
            record.id,
            language,
            domain,
            record.text,
            || format!("{} line {lineno}", path.display()),
        )?;
    }
    Ok(outcome)
}

/// Validate, truncate if over the cap, and append one document.
fn admit(
    outcome: &mut IngestOutcome,
    options: &IngestOptions,
    id: String,
    language: Language,
    domain: Domain,
    text: String,
    locate: impl Fn() -> String,
) -> Result<()> {
    let text = match truncate_to_cap(&id, text) {
        Truncation::Unchanged(t) => t,
        Truncation::Cut(t) => {
            outcome.truncated.push(id.clone());
            t
        }
    };
    match Document::new(id, language, domain, text) {
        Ok(doc) => {
            outcome.documents.push(doc);
            Ok(())
        }
        Err(e) => match options.on_malformed {
            MalformedPolicy::Fatal => Err(e),
            MalformedPolicy::Skip => {
                outcome.skipped.push(format!("{}: {e}", locate()));
                Ok(())
            }
        },
    }
}

enum Truncation {
    Unchanged(String),
    Cut(String),
}

fn truncate_to_cap(id: &str, text: String) -> Truncation {
    let total = count_tokens(&text);
    if total <= MAX_DOCUMENT_TOKENS {
        return Truncation::Unchanged(text);
    }
    // Largest paragraph-boundary prefix under the cap; a single paragraph
    // bigger than the cap falls back to a token boundary.
    let mut cut = 0usize;
    let mut used = 0usize;
    for (start, end) in split_paragraphs(&text) {
        let t = count_tokens(&text[start..end]);
        if used + t > MAX_DOCUMENT_TOKENS {
            break;
        }
        used += t;
        cut = end;
    }
    if cut == 0 {
        let spans = tokenize(&text);
        cut = spans[MAX_DOCUMENT_TOKENS - 1].end;
    }
    log::warn!(
        "document {id}: {total} tokens exceeds the {MAX_DOCUMENT_TOKENS} cap, truncated"
    );
    Truncation::Cut(text[..cut].to_string())
}
