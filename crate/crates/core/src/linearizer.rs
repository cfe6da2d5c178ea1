//! Per-element linearization: every sentence, caption, table cell and list
//! item becomes one contextualized natural-language sequence.
//!
//! Templates, with bracketed parts dropped when the context is missing:
//!
//! | element                | template                                                       |
//! |------------------------|----------------------------------------------------------------|
//! | infobox header         | `{TABLE} has {CELL}[ in {SUBHEADER}].`                         |
//! | infobox value          | `{ROW_HEADER} of {TABLE}[ in {SUBHEADER}] is {CELL}.`          |
//! | general header         | `{TABLE} has {CELL}[ in {COLUMN_HEADER}].`                     |
//! | general value          | `{TABLE} has {FIRST_COL_HEADER} {ROW_HEADER} in {COLUMN_HEADER} of {CELL}.` |
//! | list item              | `[{SUBHEADERS} for ]{TITLE} includes {ITEM}.`                  |
//! | sentence / caption     | `{TITLE} : {TEXT}`                                             |

use crate::corpus::{
    ElementContext, ElementId, ExpandedTable, NotFound, Page, PageStore, Table, TableKind,
};

/// Stand-in text for empty cells so they stay addressable.
pub const EMPTY_CELL: &str = "(empty)";

/// Header context of one grid position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Headers {
    /// Text of the cell in column 0 of the same row.
    pub row_header: Option<String>,
    /// Nearest header strictly above, same column.
    pub column_header: Option<String>,
    /// Nearest header strictly above in column 0.
    pub first_column_header: Option<String>,
}

/// Declared kind when present, otherwise: infobox iff the table has exactly
/// two columns and every data row (a row with any non-header cell) starts
/// with a header cell.
pub fn classify_table(table: &Table) -> TableKind {
    if let Some(kind) = table.kind {
        return kind;
    }
    match crate::corpus::expand_spans(table) {
        Ok(grid) => classify_grid(&grid),
        Err(_) => TableKind::General,
    }
}

fn classify_grid(grid: &ExpandedTable) -> TableKind {
    if grid.n_cols() != 2 {
        return TableKind::General;
    }
    let mut data_rows = 0;
    for r in 0..grid.n_rows() {
        let all_header = (0..grid.n_cols()).all(|c| grid.get(r, c).unwrap().cell.is_header);
        if all_header {
            continue;
        }
        data_rows += 1;
        if !grid.get(r, 0).unwrap().cell.is_header {
            return TableKind::General;
        }
    }
    if data_rows == 0 {
        TableKind::General
    } else {
        TableKind::Infobox
    }
}

fn non_empty(text: &str) -> Option<String> {
    let t = text.trim();
    (!t.is_empty()).then(|| t.to_string())
}

/// Nearest header above `row` in `col`, skipping positions covered by the
/// cell at (`row`, `col`) itself.
fn header_above(grid: &ExpandedTable, row: usize, col: usize) -> Option<String> {
    let own = grid.slot(row, col)?;
    (0..row).rev().find_map(|rr| {
        let slot = grid.slot(rr, col)?;
        if slot == own {
            return None;
        }
        let placed = grid.get(rr, col)?;
        if placed.cell.is_header {
            non_empty(&placed.cell.text)
        } else {
            None
        }
    })
}

/// Row, column and first-column headers for an expanded-grid position.
pub fn resolve_headers(
    grid: &ExpandedTable,
    row: usize,
    col: usize,
) -> Result<Headers, crate::corpus::CorpusError> {
    if grid.get(row, col).is_none() {
        return Err(crate::corpus::CorpusError::Structure(format!(
            "position ({row}, {col}) outside a {}x{} grid",
            grid.n_rows(),
            grid.n_cols()
        )));
    }
    Ok(Headers {
        row_header: grid.get(row, 0).and_then(|p| non_empty(&p.cell.text)),
        column_header: header_above(grid, row, col),
        first_column_header: header_above(grid, row, 0),
    })
}

fn is_section_row(grid: &ExpandedTable, row: usize) -> bool {
    let Some(first) = grid.slot(row, 0) else {
        return false;
    };
    (1..grid.n_cols()).all(|c| grid.slot(row, c) == Some(first))
        && grid.get(row, 0).is_some_and(|p| p.cell.is_header)
}

/// Nearest row above `row` that is a single header cell spanning the full
/// width. A section row has no section of its own.
fn section_header_above(grid: &ExpandedTable, row: usize) -> Option<String> {
    if is_section_row(grid, row) {
        return None;
    }
    (0..row)
        .rev()
        .find(|&rr| is_section_row(grid, rr))
        .and_then(|rr| non_empty(&grid.get(rr, 0)?.cell.text))
}

fn table_name(page: &Page, table: &Table) -> String {
    table
        .caption
        .as_deref()
        .and_then(non_empty)
        .unwrap_or_else(|| page.page_id.clone())
}

fn finish(mut s: String) -> String {
    if !s.ends_with('.') {
        s.push('.');
    }
    s
}

fn with_in(base: String, sub: Option<&str>) -> String {
    match sub {
        Some(s) => format!("{base} in {s}"),
        None => base,
    }
}

/// Render one element as its contextualized sequence.
pub fn linearize(store: &PageStore, id: &ElementId) -> Result<String, NotFound> {
    let element = store.resolve(id)?;
    let page = element.page;
    let title = page.page_id.as_str();
    let text = non_empty(element.text).unwrap_or_else(|| EMPTY_CELL.to_string());

    let out = match element.context {
        ElementContext::Sentence | ElementContext::Caption { .. } => format!("{title} : {text}"),
        ElementContext::Item { list, .. } => {
            let subheaders: Vec<&str> = page.lists[list]
                .subheaders
                .iter()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .collect();
            if subheaders.is_empty() {
                finish(format!("{title} includes {text}"))
            } else {
                finish(format!(
                    "{} for {title} includes {text}",
                    subheaders.join(", ")
                ))
            }
        }
        ElementContext::Cell {
            table,
            row,
            col,
            is_header,
        } => {
            let tab = &page.tables[table];
            let grid = &page.grids[table];
            let name = table_name(page, tab);
            let headers = resolve_headers(grid, row, col)
                .map_err(|_| NotFound::Index(id.to_string()))?;
            match (classify_table(tab), is_header) {
                (TableKind::Infobox, true) => {
                    let sub = section_header_above(grid, row);
                    finish(with_in(format!("{name} has {text}"), sub.as_deref()))
                }
                (TableKind::Infobox, false) => {
                    let sub = section_header_above(grid, row);
                    match headers.row_header.filter(|_| col > 0) {
                        Some(rh) => finish(format!(
                            "{} is {text}",
                            with_in(format!("{rh} of {name}"), sub.as_deref())
                        )),
                        // a value cell with no attribute label degrades to the header shape
                        None => finish(with_in(format!("{name} has {text}"), sub.as_deref())),
                    }
                }
                (TableKind::General, true) => finish(with_in(
                    format!("{name} has {text}"),
                    headers.column_header.as_deref(),
                )),
                (TableKind::General, false) => {
                    let mut phrase = format!("{name} has");
                    let mut has_context = false;
                    if col > 0 {
                        for part in [&headers.first_column_header, &headers.row_header]
                            .into_iter()
                            .flatten()
                        {
                            phrase.push(' ');
                            phrase.push_str(part);
                            has_context = true;
                        }
                    }
                    if let Some(ch) = &headers.column_header {
                        phrase.push_str(" in ");
                        phrase.push_str(ch);
                        has_context = true;
                    }
                    if has_context {
                        phrase.push_str(" of ");
                    } else {
                        phrase.push(' ');
                    }
                    phrase.push_str(&text);
                    finish(phrase)
                }
            }
        }
    };
    Ok(out)
}

/// All `(id, sequence)` pairs of a page in canonical order.
pub fn linearize_page(store: &PageStore, page: &Page) -> Vec<(ElementId, String)> {
    page.element_ids()
        .into_iter()
        .map(|id| {
            let text = linearize(store, &id).expect("enumerated ids always resolve");
            (id, text)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{expand_spans, Cell, ListBlock, ListItem, PageRecord};

    fn page(id: &str, tables: Vec<Table>, lists: Vec<ListBlock>) -> Page {
        Page::from_record(PageRecord {
            page_id: id.into(),
            sentences: vec!["A sentence.".into()],
            tables,
            lists,
        })
        .unwrap()
    }

    #[test]
    fn declared_kind_passes_through() {
        let t = Table {
            caption: None,
            kind: Some(TableKind::Infobox),
            rows: vec![vec![Cell::new("a"), Cell::new("b"), Cell::new("c")]],
        };
        assert_eq!(classify_table(&t), TableKind::Infobox);
    }

    #[test]
    fn heuristic_infobox() {
        let t = Table {
            caption: None,
            kind: None,
            rows: vec![
                vec![Cell::header("Section").spans(1, 2)],
                vec![Cell::header("Born"), Cell::new("1990")],
                vec![Cell::header("Height"), Cell::new("1.80 m")],
            ],
        };
        assert_eq!(classify_table(&t), TableKind::Infobox);
    }

    #[test]
    fn heuristic_general() {
        let t = Table {
            caption: None,
            kind: None,
            rows: vec![
                vec![Cell::header("Rank"), Cell::header("Player"), Cell::header("Country")],
                vec![Cell::new("1"), Cell::new("X"), Cell::new("Y")],
            ],
        };
        assert_eq!(classify_table(&t), TableKind::General);
        // two columns but a data row without a leading header
        let t = Table {
            caption: None,
            kind: None,
            rows: vec![vec![Cell::new("a"), Cell::new("b")]],
        };
        assert_eq!(classify_table(&t), TableKind::General);
    }

    #[test]
    fn header_row_has_no_column_header() {
        let t = Table {
            caption: None,
            kind: None,
            rows: vec![
                vec![Cell::header("Rank"), Cell::header("Player")],
                vec![Cell::new("9"), Cell::new("Florentyna Parker")],
            ],
        };
        let grid = expand_spans(&t).unwrap();
        let h = resolve_headers(&grid, 0, 1).unwrap();
        assert_eq!(h.column_header, None);
        let h = resolve_headers(&grid, 1, 1).unwrap();
        assert_eq!(h.column_header.as_deref(), Some("Player"));
        assert_eq!(h.first_column_header.as_deref(), Some("Rank"));
        assert_eq!(h.row_header.as_deref(), Some("9"));
        assert!(resolve_headers(&grid, 2, 0).is_err());
    }

    #[test]
    fn empty_cell_placeholder() {
        let t = Table {
            caption: Some("Results".into()),
            kind: Some(TableKind::General),
            rows: vec![
                vec![Cell::header("Year"), Cell::header("Title")],
                vec![Cell::new("2001"), Cell::new("")],
            ],
        };
        let store = crate::corpus::PageStore::from_pages([page("P", vec![t], vec![])]).unwrap();
        let s = linearize(&store, &ElementId::cell("P", 0, 1, 1)).unwrap();
        assert_eq!(s, "Results has Year 2001 in Title of (empty).");
    }

    #[test]
    fn sentence_and_caption() {
        let t = Table {
            caption: Some("Career statistics".into()),
            kind: None,
            rows: vec![vec![Cell::new("x")]],
        };
        let store = crate::corpus::PageStore::from_pages([page("P", vec![t], vec![])]).unwrap();
        assert_eq!(
            linearize(&store, &ElementId::sentence("P", 0)).unwrap(),
            "P : A sentence."
        );
        assert_eq!(
            linearize(&store, &ElementId::table_caption("P", 0)).unwrap(),
            "P : Career statistics"
        );
        assert!(linearize(&store, &ElementId::sentence("Q", 0)).is_err());
    }

    #[test]
    fn list_items_with_several_subheaders() {
        let list = ListBlock {
            subheaders: vec!["Club".into(), "Honours".into()],
            items: vec![ListItem {
                text: "League: 1990".into(),
                depth: 1,
            }],
        };
        let store = crate::corpus::PageStore::from_pages([page("P", vec![], vec![list])]).unwrap();
        assert_eq!(
            linearize(&store, &ElementId::item("P", 0, 0)).unwrap(),
            "Club, Honours for P includes League: 1990."
        );
    }
}
