use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::id::{ElementId, ElementKind};
use super::table::{expand_spans, ExpandedTable, Table};
use super::{CorpusError, NotFound};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListItem {
    pub text: String,
    #[serde(default)]
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListBlock {
    #[serde(default)]
    pub subheaders: Vec<String>,
    pub items: Vec<ListItem>,
}

/// One line of the corpus JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageRecord {
    pub page_id: String,
    #[serde(default)]
    pub sentences: Vec<String>,
    #[serde(default)]
    pub tables: Vec<Table>,
    #[serde(default)]
    pub lists: Vec<ListBlock>,
}

#[derive(Debug, Clone)]
pub struct Page {
    pub page_id: String,
    pub sentences: Vec<String>,
    pub tables: Vec<Table>,
    pub grids: Vec<ExpandedTable>,
    pub lists: Vec<ListBlock>,
}

impl Page {
    pub fn from_record(record: PageRecord) -> Result<Self, CorpusError> {
        if record.page_id.is_empty() {
            return Err(CorpusError::Schema("empty page_id".into()));
        }
        let grids = record
            .tables
            .iter()
            .enumerate()
            .map(|(t, table)| {
                expand_spans(table).map_err(|e| {
                    CorpusError::Structure(format!("page {:?} table {t}: {e}", record.page_id))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            page_id: record.page_id,
            sentences: record.sentences,
            tables: record.tables,
            grids,
            lists: record.lists,
        })
    }

    /// Every addressable element of the page in canonical order: sentences,
    /// then per table its caption followed by cells in row-major order of
    /// their anchors, then list items.
    pub fn element_ids(&self) -> Vec<ElementId> {
        let p = self.page_id.as_str();
        let mut out: Vec<ElementId> = (0..self.sentences.len())
            .map(|s| ElementId::sentence(p, s))
            .collect();
        for (t, (table, grid)) in self.tables.iter().zip(&self.grids).enumerate() {
            if table.caption.is_some() {
                out.push(ElementId::table_caption(p, t));
            }
            for placed in grid.cells() {
                out.push(if placed.cell.is_header {
                    ElementId::header_cell(p, t, placed.row, placed.col)
                } else {
                    ElementId::cell(p, t, placed.row, placed.col)
                });
            }
        }
        for (l, list) in self.lists.iter().enumerate() {
            out.extend((0..list.items.len()).map(|i| ElementId::item(p, l, i)));
        }
        out
    }
}

/// Where a resolved element sits inside its page.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementContext {
    Sentence,
    Caption { table: usize },
    Cell { table: usize, row: usize, col: usize, is_header: bool },
    Item { list: usize, item: usize, depth: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct Element<'a> {
    pub page: &'a Page,
    pub text: &'a str,
    pub context: ElementContext,
}

/// Immutable, ordered collection of parsed pages.
#[derive(Debug, Default, Clone)]
pub struct PageStore {
    pages: Vec<Page>,
    by_id: HashMap<String, usize>,
}

impl PageStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pages(pages: impl IntoIterator<Item = Page>) -> Result<Self, CorpusError> {
        let mut store = Self::new();
        for page in pages {
            store.insert(page)?;
        }
        Ok(store)
    }

    fn insert(&mut self, page: Page) -> Result<(), CorpusError> {
        if self.by_id.contains_key(&page.page_id) {
            return Err(CorpusError::DuplicatePage(page.page_id));
        }
        self.by_id.insert(page.page_id.clone(), self.pages.len());
        self.pages.push(page);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn pages(&self) -> &[Page] {
        &self.pages
    }

    pub fn page(&self, page_id: &str) -> Option<&Page> {
        self.by_id.get(page_id).map(|&i| &self.pages[i])
    }

    pub fn contains(&self, page_id: &str) -> bool {
        self.by_id.contains_key(page_id)
    }

    pub fn element_ids(&self) -> impl Iterator<Item = ElementId> + '_ {
        self.pages.iter().flat_map(Page::element_ids)
    }

    /// Look an element up by id. The id kind must agree with the stored
    /// cell's header flag.
    pub fn resolve(&self, id: &ElementId) -> Result<Element<'_>, NotFound> {
        let page = self
            .page(id.page())
            .ok_or_else(|| NotFound::Page(id.page().to_string()))?;
        let idx = id.indices();
        let out_of_range = || NotFound::Index(id.to_string());
        let (text, context) = match id.kind() {
            ElementKind::Sentence => {
                let s = page.sentences.get(idx[0]).ok_or_else(out_of_range)?;
                (s.as_str(), ElementContext::Sentence)
            }
            ElementKind::TableCaption => {
                let caption = page
                    .tables
                    .get(idx[0])
                    .and_then(|t| t.caption.as_deref())
                    .ok_or_else(out_of_range)?;
                (caption, ElementContext::Caption { table: idx[0] })
            }
            ElementKind::Cell | ElementKind::HeaderCell => {
                let (t, r, c) = (idx[0], idx[1], idx[2]);
                let placed = page
                    .grids
                    .get(t)
                    .and_then(|g| g.get(r, c))
                    .ok_or_else(out_of_range)?;
                let wants_header = id.kind() == ElementKind::HeaderCell;
                if placed.cell.is_header != wants_header {
                    return Err(NotFound::KindMismatch(id.to_string()));
                }
                (
                    placed.cell.text.as_str(),
                    ElementContext::Cell {
                        table: t,
                        row: r,
                        col: c,
                        is_header: placed.cell.is_header,
                    },
                )
            }
            ElementKind::Item => {
                let item = page
                    .lists
                    .get(idx[0])
                    .and_then(|l| l.items.get(idx[1]))
                    .ok_or_else(out_of_range)?;
                (
                    item.text.as_str(),
                    ElementContext::Item {
                        list: idx[0],
                        item: idx[1],
                        depth: item.depth,
                    },
                )
            }
        };
        Ok(Element {
            page,
            text,
            context,
        })
    }
}

/// Read the corpus JSON-lines format. Blank lines are skipped.
pub fn ingest_corpus<R: BufRead>(reader: R) -> Result<PageStore, CorpusError> {
    let mut store = PageStore::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| CorpusError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PageRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Ingest {
                line: line_no,
                message: e.to_string(),
            })?;
        let page = Page::from_record(record).map_err(|e| CorpusError::Ingest {
            line: line_no,
            message: e.to_string(),
        })?;
        store.insert(page).map_err(|e| CorpusError::Ingest {
            line: line_no,
            message: e.to_string(),
        })?;
    }
    Ok(store)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "SUPPORTS")]
    Supports,
    #[serde(rename = "REFUTES")]
    Refutes,
    #[serde(rename = "NOT ENOUGH INFO")]
    NotEnoughInfo,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Supports, Label::Refutes, Label::NotEnoughInfo];

    pub fn index(self) -> usize {
        match self {
            Label::Supports => 0,
            Label::Refutes => 1,
            Label::NotEnoughInfo => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Supports => "SUPPORTS",
            Label::Refutes => "REFUTES",
            Label::NotEnoughInfo => "NOT ENOUGH INFO",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    #[serde(rename = "id")]
    pub claim_id: u64,
    pub claim: String,
    pub label: Label,
    #[serde(rename = "evidence", default)]
    pub evidence_sets: Vec<Vec<ElementId>>,
}

impl ClaimRecord {
    /// Union of all gold evidence sets, first-seen order.
    pub fn evidence_union(&self) -> Vec<ElementId> {
        let mut out: Vec<ElementId> = Vec::new();
        for id in self.evidence_sets.iter().flatten() {
            if !out.contains(id) {
                out.push(id.clone());
            }
        }
        out
    }

    /// Pages referenced by any gold evidence item.
    pub fn gold_pages(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for id in self.evidence_sets.iter().flatten() {
            if !out.iter().any(|p| p == id.page()) {
                out.push(id.page().to_string());
            }
        }
        out
    }
}

/// Read claims JSON-lines; every evidence id must resolve in `store`.
pub fn ingest_claims<R: BufRead>(
    reader: R,
    store: &PageStore,
) -> Result<Vec<ClaimRecord>, CorpusError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| CorpusError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ClaimRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Ingest {
                line: line_no,
                message: e.to_string(),
            })?;
        for id in record.evidence_sets.iter().flatten() {
            store.resolve(id).map_err(|e| CorpusError::Ingest {
                line: line_no,
                message: format!("claim {}: {e}", record.claim_id),
            })?;
        }
        out.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::table::Cell;

    fn page_json() -> &'static str {
        r#"{"page_id": "A", "sentences": ["first", "second"], "tables": [{"caption": "Cap", "kind": "general", "rows": [[{"text": "h", "row_span": 1, "col_span": 1, "is_header": true}, {"text": "x", "row_span": 1, "col_span": 1, "is_header": false}]]}], "lists": [{"subheaders": [], "items": [{"text": "it", "depth": 0}]}]}"#
    }

    #[test]
    fn empty_stream() {
        let store = ingest_corpus("".as_bytes()).unwrap();
        assert!(store.is_empty());
    }

    #[test]
    fn enumeration_order() {
        let store = ingest_corpus(page_json().as_bytes()).unwrap();
        let ids: Vec<String> = store.element_ids().map(|i| i.to_string()).collect();
        assert_eq!(
            ids,
            [
                "A_sentence_0",
                "A_sentence_1",
                "A_table_caption_0",
                "A_header_cell_0_0_0",
                "A_cell_0_0_1",
                "A_item_0_0"
            ]
        );
        let again = ingest_corpus(page_json().as_bytes()).unwrap();
        assert!(store.element_ids().eq(again.element_ids()));
    }

    #[test]
    fn duplicate_page_rejected() {
        let input = format!("{}\n{}\n", page_json(), page_json());
        match ingest_corpus(input.as_bytes()) {
            Err(CorpusError::Ingest { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_violation_reports_line() {
        let input = format!("{}\n{{\"sentences\": []}}\n", page_json());
        match ingest_corpus(input.as_bytes()) {
            Err(CorpusError::Ingest { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resolve_variants() {
        let store = ingest_corpus(page_json().as_bytes()).unwrap();
        let el = store.resolve(&ElementId::sentence("A", 0)).unwrap();
        assert_eq!(el.text, "first");

        let empty = PageStore::new();
        assert_eq!(
            empty.resolve(&ElementId::parse("Nowhere_sentence_0").unwrap()).unwrap_err(),
            NotFound::Page("Nowhere".into())
        );
        assert!(matches!(
            store.resolve(&ElementId::cell("A", 0, 0, 7)),
            Err(NotFound::Index(_))
        ));
        assert!(matches!(
            store.resolve(&ElementId::cell("A", 0, 0, 0)),
            Err(NotFound::KindMismatch(_))
        ));
        let el = store.resolve(&ElementId::item("A", 0, 0)).unwrap();
        assert_eq!(el.text, "it");
    }

    #[test]
    fn claims_ingest_validates_ids() {
        let store = ingest_corpus(page_json().as_bytes()).unwrap();
        let good = r#"{"id": 1, "claim": "c", "label": "SUPPORTS", "evidence": [["A_sentence_0", "A_cell_0_0_1"]]}"#;
        let claims = ingest_claims(good.as_bytes(), &store).unwrap();
        assert_eq!(claims[0].label, Label::Supports);
        assert_eq!(claims[0].evidence_sets[0].len(), 2);

        let bad = r#"{"id": 2, "claim": "c", "label": "NOT ENOUGH INFO", "evidence": [["A_sentence_9"]]}"#;
        assert!(matches!(
            ingest_claims(bad.as_bytes(), &store),
            Err(CorpusError::Ingest { line: 1, .. })
        ));
    }

    #[test]
    fn spanned_cells_enumerate_once() {
        let table = Table {
            caption: None,
            kind: None,
            rows: vec![
                vec![Cell::new("a").spans(2, 1), Cell::new("b")],
                vec![Cell::new("c")],
            ],
        };
        let page = Page::from_record(PageRecord {
            page_id: "P".into(),
            sentences: vec![],
            tables: vec![table],
            lists: vec![],
        })
        .unwrap();
        let ids: Vec<String> = page.element_ids().iter().map(|i| i.to_string()).collect();
        assert_eq!(ids, ["P_cell_0_0_0", "P_cell_0_0_1", "P_cell_0_1_1"]);
    }
}
