//! The guide's chapters, compiled so that every code block in `book/`
//! runs as a doc-test. Each module's documentation is one chapter; the
//! book and the tests cannot drift apart because they are the same
//! files.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}

#[doc = include_str!("../../../book/src/retrieval.md")]
pub mod retrieval {}

#[doc = include_str!("../../../book/src/agents.md")]
pub mod agents {}

#[doc = include_str!("../../../book/src/synthesis.md")]
pub mod synthesis {}

#[doc = include_str!("../../../book/src/datasets.md")]
pub mod datasets {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
