//! qaforge synthesizes question-answering benchmarks over long documents and
//! evaluates candidate models on them.
//!
//! The toolkit covers both halves of the workflow:
//!
//! * **Synthesis** — segment long documents into fragments, have LLM agents
//!   score, tag, and turn them into `(question, answer, evidence)` tuples, then
//!   derive three kinds of examples per tuple: `answerable` (evidence present
//!   in the context), `lack_of_evidence` (the evidence is deleted from the
//!   context), and `misleading` (the question is rewritten around a false
//!   premise while the context stays untouched). A retrieval-backed review
//!   stage filters out candidates whose answer survives elsewhere in the text
//!   or that need no context at all, and every drop is accounted for in an
//!   attrition report.
//! * **Evaluation** — run a candidate model over a benchmark file, judge each
//!   prediction with an LLM judge (binary answer consistency, plus a
//!   three-way refusal/reasoning class for unanswerable questions), and
//!   aggregate accuracy breakdowns by language, label, and context length.
//!
//! Every agent role sits behind the [`agents::AgentBackend`] trait; the
//! bundled [`agents::MockBackend`] makes the entire pipeline runnable and
//! byte-for-byte reproducible with zero network access.

pub mod agents;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod pipeline;
pub mod retrieval;
pub mod text;

pub use error::{Error, Result};
