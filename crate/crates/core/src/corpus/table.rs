use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Infobox,
    General,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub text: String,
    #[serde(default = "one")]
    pub row_span: usize,
    #[serde(default = "one")]
    pub col_span: usize,
    #[serde(default)]
    pub is_header: bool,
}

fn one() -> usize {
    1
}

impl Cell {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            row_span: 1,
            col_span: 1,
            is_header: false,
        }
    }

    pub fn header(text: impl Into<String>) -> Self {
        Self {
            is_header: true,
            ..Self::new(text)
        }
    }

    pub fn spans(mut self, row_span: usize, col_span: usize) -> Self {
        self.row_span = row_span;
        self.col_span = col_span;
        self
    }
}

/// A table as written in the corpus: rows of cells in source order, spans
/// not yet expanded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    #[serde(default)]
    pub caption: Option<String>,
    #[serde(default)]
    pub kind: Option<TableKind>,
    pub rows: Vec<Vec<Cell>>,
}

/// A cell placed on the expanded grid at its top-left anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedCell {
    pub cell: Cell,
    pub row: usize,
    pub col: usize,
}

/// The span-expanded view of a table: every logical position references
/// exactly one placed cell, and spanned cells are shared across the
/// positions they cover.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedTable {
    n_rows: usize,
    n_cols: usize,
    slots: Vec<usize>,
    cells: Vec<PlacedCell>,
}

impl ExpandedTable {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<&PlacedCell> {
        if row >= self.n_rows || col >= self.n_cols {
            return None;
        }
        Some(&self.cells[self.slots[row * self.n_cols + col]])
    }

    /// Index of the placed cell covering a position.
    pub fn slot(&self, row: usize, col: usize) -> Option<usize> {
        (row < self.n_rows && col < self.n_cols).then(|| self.slots[row * self.n_cols + col])
    }

    /// Placed cells in row-major order of their anchors.
    pub fn cells(&self) -> &[PlacedCell] {
        &self.cells
    }

    pub fn is_anchor(&self, row: usize, col: usize) -> bool {
        self.get(row, col)
            .is_some_and(|p| p.row == row && p.col == col)
    }
}

/// Lay a table's cells onto a rectangular grid, honouring row and column
/// spans the way HTML tables do: each cell takes the next free column in
/// its row, skipping positions claimed by row spans from above.
pub fn expand_spans(table: &Table) -> Result<ExpandedTable, CorpusError> {
    let n_rows = table.rows.len();
    // occupancy[r] holds the placed-cell index per column, grown on demand
    let mut occupancy: Vec<Vec<Option<usize>>> = vec![Vec::new(); n_rows];
    let mut cells = Vec::new();

    for (r, row) in table.rows.iter().enumerate() {
        let mut c = 0;
        for cell in row {
            if cell.row_span == 0 || cell.col_span == 0 {
                return Err(CorpusError::Structure(format!(
                    "cell {:?} at source row {r} has a zero span",
                    cell.text
                )));
            }
            while occupancy[r].get(c).copied().flatten().is_some() {
                c += 1;
            }
            if r + cell.row_span > n_rows {
                return Err(CorpusError::Structure(format!(
                    "cell {:?} at row {r} spans {} rows past the table end",
                    cell.text, cell.row_span
                )));
            }
            let idx = cells.len();
            cells.push(PlacedCell {
                cell: cell.clone(),
                row: r,
                col: c,
            });
            for rr in r..r + cell.row_span {
                let line = &mut occupancy[rr];
                if line.len() < c + cell.col_span {
                    line.resize(c + cell.col_span, None);
                }
                for slot in &mut line[c..c + cell.col_span] {
                    if slot.is_some() {
                        return Err(CorpusError::Structure(format!(
                            "cell {:?} overlaps another cell at row {rr}",
                            cell.text
                        )));
                    }
                    *slot = Some(idx);
                }
            }
            c += cell.col_span;
        }
    }

    let n_cols = occupancy.first().map_or(0, Vec::len);
    let mut slots = Vec::with_capacity(n_rows * n_cols);
    for (r, line) in occupancy.iter().enumerate() {
        if line.len() != n_cols || line.iter().any(Option::is_none) {
            return Err(CorpusError::Structure(format!(
                "row {r} covers {} of {n_cols} columns after span expansion",
                line.iter().filter(|s| s.is_some()).count()
            )));
        }
        slots.extend(line.iter().map(|s| s.unwrap()));
    }
    Ok(ExpandedTable {
        n_rows,
        n_cols,
        slots,
        cells,
    })
}
