//! In-memory table model: a column-header row over an `m × n` grid of cells,
//! with one column designated as the row-header column.

use serde::{Deserialize, Serialize};

use crate::numeric::{parse_numeric, NumericValue};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("table has zero data rows")]
    ZeroDataRows,
    #[error("table has zero columns")]
    ZeroColumns,
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row header column {col} is out of bounds for {cols} columns")]
    RowHeaderOutOfBounds { col: usize, cols: usize },
}

/// Position of a cell inside the data grid (header row excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellRef {
    pub row: usize,
    pub col: usize,
}

impl CellRef {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub raw: String,
    pub numeric: Option<NumericValue>,
    pub row_index: usize,
    pub col_index: usize,
}

impl Cell {
    fn new(raw: String, row_index: usize, col_index: usize) -> Self {
        let numeric = parse_numeric(&raw);
        Self {
            raw,
            numeric,
            row_index,
            col_index,
        }
    }

    pub fn position(&self) -> CellRef {
        CellRef::new(self.row_index, self.col_index)
    }

    pub fn is_blank(&self) -> bool {
        self.raw.trim().is_empty()
    }

    /// Interpreted numeric value, if the cell parses as a number.
    pub fn value(&self) -> Option<f64> {
        self.numeric.map(|n| n.value())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub id: String,
    column_headers: Vec<String>,
    rows: Vec<Vec<Cell>>,
    row_header_col: usize,
}

impl Table {
    /// Builds a table from an explicit header row and data rows. Every row
    /// must have exactly as many cells as there are headers.
    pub fn new(
        id: impl Into<String>,
        column_headers: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<Self, TableError> {
        let n = column_headers.len();
        if n == 0 {
            return Err(TableError::ZeroColumns);
        }
        if rows.is_empty() {
            return Err(TableError::ZeroDataRows);
        }
        let mut grid = Vec::with_capacity(rows.len());
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(TableError::Ragged {
                    row: r,
                    expected: n,
                    found: row.len(),
                });
            }
            grid.push(
                row.into_iter()
                    .enumerate()
                    .map(|(c, raw)| Cell::new(raw, r, c))
                    .collect(),
            );
        }
        Ok(Self {
            id: id.into(),
            column_headers,
            rows: grid,
            row_header_col: 0,
        })
    }

    /// Builds a table from a raw grid whose leading row(s) hold the column
    /// headers.
    ///
    /// Row 0 is always a header row. Following rows are treated as stacked
    /// header rows while their row-header cell is blank and every non-blank
    /// cell is either non-numeric or a bare year; stacked header strings are
    /// joined per column with a space. Short rows are padded with blanks and
    /// rows that are entirely blank are dropped.
    pub fn from_grid(id: impl Into<String>, grid: Vec<Vec<String>>) -> Result<Self, TableError> {
        let width = grid.iter().map(Vec::len).max().unwrap_or(0);
        if width == 0 {
            return Err(TableError::ZeroColumns);
        }
        let mut grid: Vec<Vec<String>> = grid
            .into_iter()
            .map(|mut row| {
                row.resize(width, String::new());
                row
            })
            .collect();

        let mut header_rows = 1;
        while header_rows + 1 < grid.len() && looks_like_header_row(&grid[header_rows]) {
            header_rows += 1;
        }
        if grid.len() <= header_rows {
            return Err(TableError::ZeroDataRows);
        }
        let data = grid.split_off(header_rows);
        let headers = (0..width)
            .map(|c| {
                grid.iter()
                    .map(|row| row[c].trim())
                    .filter(|s| !s.is_empty())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let data: Vec<Vec<String>> = data
            .into_iter()
            .filter(|row| row.iter().any(|c| !c.trim().is_empty()))
            .collect();
        Self::new(id, headers, data)
    }

    pub fn with_row_header_col(mut self, col: usize) -> Result<Self, TableError> {
        if col >= self.num_cols() {
            return Err(TableError::RowHeaderOutOfBounds {
                col,
                cols: self.num_cols(),
            });
        }
        self.row_header_col = col;
        Ok(self)
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.column_headers.len()
    }

    pub fn row_header_col(&self) -> usize {
        self.row_header_col
    }

    pub fn column_headers(&self) -> &[String] {
        &self.column_headers
    }

    pub fn column_header(&self, col: usize) -> &str {
        &self.column_headers[col]
    }

    /// The row-header cell text for `row`.
    pub fn row_header(&self, row: usize) -> &str {
        &self.rows[row][self.row_header_col].raw
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn row(&self, row: usize) -> &[Cell] {
        &self.rows[row]
    }

    pub fn cell(&self, at: CellRef) -> &Cell {
        &self.rows[at.row][at.col]
    }

    pub fn get(&self, at: CellRef) -> Option<&Cell> {
        self.rows.get(at.row)?.get(at.col)
    }

    /// Row-major iteration over all `m × n` data cells.
    pub fn cells(&self) -> impl Iterator<Item = &Cell> + '_ {
        self.rows.iter().flatten()
    }

    pub fn column_cells(&self, col: usize) -> impl Iterator<Item = &Cell> + '_ {
        self.rows.iter().map(move |row| &row[col])
    }
}

fn looks_like_header_row(row: &[String]) -> bool {
    if !row.first().is_some_and(|c| c.trim().is_empty()) {
        return false;
    }
    row.iter()
        .map(|c| c.trim())
        .filter(|c| !c.is_empty())
        .all(|c| parse_numeric(c).is_none() || is_year(c))
}

fn is_year(s: &str) -> bool {
    s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) && matches!(&s[..2], "19" | "20")
}
