//! Documents, fragments, token counting, and length buckets.

mod ingest;
mod segmenter;
mod tokenizer;

pub use ingest::{load_documents, CorpusFormat, IngestOptions, IngestOutcome, MalformedPolicy};
pub use segmenter::{segment, segment_all, SegmentConfig};
pub use tokenizer::{count_tokens, tokenize};

pub(crate) use segmenter::split_sentences;
pub(crate) use tokenizer::is_cjk;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Language of a document or example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::En => "en",
            Language::Zh => "zh",
        })
    }
}

/// Source domain of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Law,
    Books,
    Other,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Law => "law",
            Domain::Books => "books",
            Domain::Other => "other",
        })
    }
}

/// A raw long text with its metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub language: Language,
    pub domain: Domain,
    pub text: String,
    pub token_count: usize,
}

impl Document {
    /// Build a document, computing its token count. The text must be
    /// non-empty.
    pub fn new(
        id: impl Into<String>,
        language: Language,
        domain: Domain,
        text: impl Into<String>,
    ) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        let token_count = count_tokens(&text);
        if token_count == 0 {
            return Err(Error::InvalidDocument {
                id,
                reason: "text is empty or whitespace-only".into(),
            });
        }
        Ok(Document {
            id,
            language,
            domain,
            text,
            token_count,
        })
    }
}

/// Identifies a fragment by its document and ordinal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FragmentRef {
    pub doc_id: String,
    pub index: usize,
}

impl fmt::Display for FragmentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#f{}", self.doc_id, self.index)
    }
}

/// A contiguous segment of a document.
///
/// `text` is always byte-identical to `document.text[span.0..span.1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub doc_id: String,
    pub index: usize,
    pub span: (usize, usize),
    pub text: String,
    pub quality_score: Option<u8>,
    pub topics: BTreeSet<TopicCategory>,
}

impl Fragment {
    pub fn reference(&self) -> FragmentRef {
        FragmentRef {
            doc_id: self.doc_id.clone(),
            index: self.index,
        }
    }

    pub fn token_count(&self) -> usize {
        count_tokens(&self.text)
    }
}

/// The seven entity categories a topic-selection agent may assign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicCategory {
    Time,
    Numeric,
    Location,
    Person,
    Organization,
    Event,
    Object,
}

impl TopicCategory {
    pub const ALL: [TopicCategory; 7] = [
        TopicCategory::Time,
        TopicCategory::Numeric,
        TopicCategory::Location,
        TopicCategory::Person,
        TopicCategory::Organization,
        TopicCategory::Event,
        TopicCategory::Object,
    ];

    /// Tolerant label lookup: matches the canonical name plus common variants.
    pub fn parse_label(label: &str) -> Option<TopicCategory> {
        match label.trim().to_ascii_lowercase().as_str() {
            "time" | "date" => Some(TopicCategory::Time),
            "numeric" | "number" | "numerical" | "numerical values" | "numeric value" => {
                Some(TopicCategory::Numeric)
            }
            "location" | "place" | "locations" => Some(TopicCategory::Location),
            "person" | "persons" | "people" => Some(TopicCategory::Person),
            "organization" | "organisations" | "organizations" | "organisation" => {
                Some(TopicCategory::Organization)
            }
            "event" | "events" => Some(TopicCategory::Event),
            "object" | "objects" => Some(TopicCategory::Object),
            _ => None,
        }
    }
}

impl fmt::Display for TopicCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopicCategory::Time => "time",
            TopicCategory::Numeric => "numeric",
            TopicCategory::Location => "location",
            TopicCategory::Person => "person",
            TopicCategory::Organization => "organization",
            TopicCategory::Event => "event",
            TopicCategory::Object => "object",
        })
    }
}

/// One of the four token-count intervals used for reporting.
///
/// The intervals are half-open on the left: `(0, 16K]`, `(16K, 32K]`,
/// `(32K, 64K]`, `(64K, 128K]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthBucket {
    #[serde(rename = "0-16k")]
    B0to16k,
    #[serde(rename = "16-32k")]
    B16to32k,
    #[serde(rename = "32-64k")]
    B32to64k,
    #[serde(rename = "64-128k")]
    B64to128k,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 4] = [
        LengthBucket::B0to16k,
        LengthBucket::B16to32k,
        LengthBucket::B32to64k,
        LengthBucket::B64to128k,
    ];
}

impl fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LengthBucket::B0to16k => "0-16k",
            LengthBucket::B16to32k => "16-32k",
            LengthBucket::B32to64k => "32-64k",
            LengthBucket::B64to128k => "64-128k",
        })
    }
}

/// Maximum token count a document may have after ingest.
pub const MAX_DOCUMENT_TOKENS: usize = 131_072;

/// Assign a token count to its length bucket.
///
/// Boundary counts belong to the lower bucket (`16384` is still `0-16k`).
pub fn length_bucket(token_count: usize) -> Result<LengthBucket> {
    if token_count == 0 || token_count > MAX_DOCUMENT_TOKENS {
        return Err(Error::TokenCountOutOfRange(token_count as u64));
    }
    Ok(if token_count <= 16_384 {
        LengthBucket::B0to16k
    } else if token_count <= 32_768 {
        LengthBucket::B16to32k
    } else if token_count <= 65_536 {
        LengthBucket::B32to64k
    } else {
        LengthBucket::B64to128k
    })
}
