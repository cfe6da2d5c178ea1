//! Parsed evidence corpus: pages of sentences, tables and lists, plus the
//! claim records that point into them.

mod census;
mod id;
mod store;
mod table;

pub use census::{corpus_census, CensusReport, PairCount};
pub use id::{ElementId, ElementKind};
pub use store::{
    ingest_claims, ingest_corpus, ClaimRecord, Element, ElementContext, Label, ListBlock,
    ListItem, Page, PageRecord, PageStore,
};
pub use table::{expand_spans, Cell, ExpandedTable, PlacedCell, Table, TableKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid element id {input:?}: {reason}")]
    IdParse { input: String, reason: String },
    #[error("line {line}: {message}")]
    Ingest { line: usize, message: String },
    #[error("duplicate page_id {0:?}")]
    DuplicatePage(String),
    #[error("table structure: {0}")]
    Structure(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    NotFound(#[from] NotFound),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NotFound {
    #[error("unknown page {0:?}")]
    Page(String),
    #[error("index out of range in {0}")]
    Index(String),
    #[error("{0} does not match the stored cell's header flag")]
    KindMismatch(String),
}
