//! First-order cube generation.
//!
//! A cube item applies one operator to cells selected along a single row or
//! column. Selections come from computing patterns instantiated over the
//! candidate rows and columns found by question analysis.

mod oracle;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::numeric::Scale;
use crate::question::{analyze, AnalysisConfig, Operator, QuestionAnalysis};
use crate::table::{CellRef, Table};

pub use oracle::{brute_force_cube, check_against_oracle, OracleBounds, OracleError, OracleViolation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Cells under one candidate column and all candidate rows.
    SameColumn,
    /// Cells in one candidate row and all candidate columns.
    SameRow,
    /// All cells under one candidate column.
    AllRow,
    /// All cells in one candidate row.
    AllColumn,
    /// The first k rows' cells under one candidate column.
    TopKRow,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [
        Pattern::SameColumn,
        Pattern::SameRow,
        Pattern::AllRow,
        Pattern::AllColumn,
        Pattern::TopKRow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::SameColumn => "same_column",
            Pattern::SameRow => "same_row",
            Pattern::AllRow => "all_row",
            Pattern::AllColumn => "all_column",
            Pattern::TopKRow => "top_k_row",
        }
    }

    /// Whether `operator` is instantiated over this pattern. Extension
    /// operators only combine filtered candidates; whole-axis selections are
    /// reserved for aggregations.
    pub fn applies_to(self, operator: Operator) -> bool {
        match operator {
            Operator::Count | Operator::Sum | Operator::Average => true,
            _ => !matches!(self, Pattern::AllRow | Pattern::AllColumn),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operand {
    pub cell: CellRef,
    pub raw: String,
    /// Interpreted numeric value; absent only for text cells tallied by `count`.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeItem {
    pub operator: Operator,
    pub pattern: Pattern,
    pub col_headers: Vec<String>,
    pub row_headers: Vec<String>,
    pub operands: Vec<Operand>,
    pub result: f64,
    pub scale_hint: Option<Scale>,
}

/// Identity of an item for deduplication: operand order only matters for
/// non-commutative operators.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemKey {
    pub operator: Operator,
    pub cells: Vec<CellRef>,
}

impl CubeItem {
    pub fn operand_refs(&self) -> Vec<CellRef> {
        self.operands.iter().map(|o| o.cell).collect()
    }

    pub fn key(&self) -> ItemKey {
        let mut cells = self.operand_refs();
        if self.operator.is_commutative() {
            cells.sort_unstable();
        }
        ItemKey {
            operator: self.operator,
            cells,
        }
    }

    /// Stable identifier used by external score files: a hash of the
    /// operator, the ordered operand cells, and the pattern.
    pub fn fingerprint(&self) -> String {
        let mut text = format!("{}|{}|", self.operator, self.pattern);
        for (i, cell) in self.operand_refs().iter().enumerate() {
            if i > 0 {
                text.push(';');
            }
            text.push_str(&format!("{},{}", cell.row, cell.col));
        }
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// All operands lie in one column or in one row.
    pub fn is_axis_aligned(&self) -> bool {
        let Some(first) = self.operands.first() else {
            return false;
        };
        self.operands.iter().all(|o| o.cell.col == first.cell.col)
            || self.operands.iter().all(|o| o.cell.row == first.cell.row)
    }

    /// Recomputes the result from the operands.
    pub fn recompute(&self) -> Result<f64, ComputeError> {
        compute_operands(self.operator, &self.operands)
    }

    /// Structural validity: alignment, arity, and a bit-exact result.
    pub fn check(&self) -> Result<(), String> {
        if !self.is_axis_aligned() {
            return Err("operands are not axis-aligned".into());
        }
        if self.operator.is_binary() && self.operands.len() != 2 {
            return Err(format!("{} needs exactly 2 operands", self.operator));
        }
        match self.recompute() {
            Ok(r) if r.to_bits() == self.result.to_bits() => Ok(()),
            Ok(r) => Err(format!("result {} differs from recomputed {r}", self.result)),
            Err(e) => Err(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ComputeError {
    #[error("{operator} expects {expected} operands, got {found}")]
    Arity {
        operator: Operator,
        expected: &'static str,
        found: usize,
    },
    #[error("undefined item: {operator} has a zero denominator or a non-finite result")]
    UndefinedItem { operator: Operator },
    #[error("{operator} operand at row {}, column {} is not numeric", .cell.row, .cell.col)]
    NonNumeric { operator: Operator, cell: CellRef },
}

/// Applies `operator` to `operands`.
///
/// `count` is the number of selected cells, `sum`/`add` the left-to-right
/// total, `average` the total over the count, `diff` is `a - b`, `div` is
/// `a / b` and `change_ratio` is `(a - b) / b`.
pub fn compute(operator: Operator, operands: &[f64]) -> Result<f64, ComputeError> {
    let arity = |expected| ComputeError::Arity {
        operator,
        expected,
        found: operands.len(),
    };
    let undefined = ComputeError::UndefinedItem { operator };
    let result = match operator {
        Operator::Count | Operator::Sum | Operator::Average | Operator::Add => {
            if operands.is_empty() {
                return Err(arity("at least 1"));
            }
            let total = sum(operands);
            match operator {
                Operator::Count => operands.len() as f64,
                Operator::Average => total / operands.len() as f64,
                _ => total,
            }
        }
        Operator::Diff | Operator::Div | Operator::ChangeRatio => {
            let &[a, b] = operands else {
                return Err(arity("exactly 2"));
            };
            match operator {
                Operator::Diff => a - b,
                _ if b == 0.0 => return Err(undefined),
                Operator::Div => a / b,
                _ => (a - b) / b,
            }
        }
    };
    if result.is_finite() {
        Ok(result)
    } else {
        Err(undefined)
    }
}

fn sum(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc + v)
}

fn compute_operands(operator: Operator, operands: &[Operand]) -> Result<f64, ComputeError> {
    if operator == Operator::Count {
        return compute(operator, &vec![0.0; operands.len()]);
    }
    let values = operands
        .iter()
        .map(|o| {
            o.value.ok_or(ComputeError::NonNumeric {
                operator,
                cell: o.cell,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    compute(operator, &values)
}

/// Builds an item over `cells` (already in operand order), deriving headers
/// and scale from the table. Returns `None` when the item is undefined.
pub(crate) fn build_item(
    table: &Table,
    operator: Operator,
    pattern: Pattern,
    cells: &[CellRef],
) -> Option<CubeItem> {
    let operands: Vec<Operand> = cells
        .iter()
        .map(|&at| {
            let cell = table.cell(at);
            Operand {
                cell: at,
                raw: cell.raw.clone(),
                value: cell.value(),
            }
        })
        .collect();
    let result = compute_operands(operator, &operands).ok()?;

    let mut col_headers: Vec<String> = Vec::new();
    let mut row_headers: Vec<String> = Vec::new();
    for at in cells {
        push_distinct(&mut col_headers, table.column_header(at.col));
        push_distinct(&mut row_headers, table.row_header(at.row));
    }

    let scale_hint = if operator == Operator::Count {
        None
    } else {
        let mut scales = cells.iter().map(|&at| table.cell(at).numeric.and_then(|n| n.scale));
        let first = scales.next().flatten();
        scales.all(|s| s == first).then_some(first).flatten()
    };

    Some(CubeItem {
        operator,
        pattern,
        col_headers,
        row_headers,
        operands,
        result,
        scale_hint,
    })
}

fn push_distinct(list: &mut Vec<String>, header: &str) {
    let header = header.trim();
    if !header.is_empty() && !list.iter().any(|h| h == header) {
        list.push(header.to_string());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationLimits {
    pub max_candidate_rows: usize,
    pub max_candidate_cols: usize,
    pub top_k_row_values: Vec<usize>,
    pub max_items: usize,
}

impl Default for GenerationLimits {
    fn default() -> Self {
        Self {
            max_candidate_rows: 10,
            max_candidate_cols: 6,
            top_k_row_values: vec![2, 3],
            max_items: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("generation limit {0} must be positive")]
pub struct InvalidLimits(pub &'static str);

impl GenerationLimits {
    pub fn validate(&self) -> Result<(), InvalidLimits> {
        if self.max_candidate_rows == 0 {
            return Err(InvalidLimits("max_candidate_rows"));
        }
        if self.max_candidate_cols == 0 {
            return Err(InvalidLimits("max_candidate_cols"));
        }
        if self.top_k_row_values.contains(&0) {
            return Err(InvalidLimits("top_k_row_values"));
        }
        if self.max_items == 0 {
            return Err(InvalidLimits("max_items"));
        }
        Ok(())
    }
}

/// Minimum number of selected cells for an aggregate item. A one-cell sum
/// or average is the cell itself, so those need two.
fn min_operands(operator: Operator) -> usize {
    match operator {
        Operator::Count => 1,
        _ => 2,
    }
}

fn selections(
    analysis: &QuestionAnalysis,
    table: &Table,
    limits: &GenerationLimits,
) -> Vec<(Pattern, Vec<CellRef>)> {
    let rows = &analysis.candidate_rows[..analysis.candidate_rows.len().min(limits.max_candidate_rows)];
    let cols = &analysis.candidate_cols[..analysis.candidate_cols.len().min(limits.max_candidate_cols)];
    let (m, n) = (table.num_rows(), table.num_cols());
    let mut out = Vec::new();

    if !rows.is_empty() {
        for &c in cols {
            out.push((Pattern::SameColumn, rows.iter().map(|&r| CellRef::new(r, c)).collect()));
        }
    }
    if !cols.is_empty() {
        for &r in rows {
            out.push((Pattern::SameRow, cols.iter().map(|&c| CellRef::new(r, c)).collect()));
        }
    }
    for &c in cols {
        out.push((Pattern::AllRow, (0..m).map(|r| CellRef::new(r, c)).collect()));
    }
    for &r in rows {
        out.push((Pattern::AllColumn, (0..n).map(|c| CellRef::new(r, c)).collect()));
    }
    let ks: BTreeSet<usize> = limits.top_k_row_values.iter().copied().filter(|&k| k < m).collect();
    for k in ks {
        for &c in cols {
            out.push((Pattern::TopKRow, (0..k).map(|r| CellRef::new(r, c)).collect()));
        }
    }
    out
}

/// Enumerates cube items for `operators` over the pattern selections built
/// from the analysis' candidates.
///
/// Aggregations and `add` yield one item per selection over its usable
/// cells (non-blank cells for `count`, numeric cells otherwise). Binary
/// operators yield both orders of every pair of numeric cells in the
/// selection. Items are deduplicated by operator and operand cells, undefined
/// items are dropped, and enumeration stops at `limits.max_items`.
pub fn enumerate_items(
    analysis: &QuestionAnalysis,
    table: &Table,
    limits: &GenerationLimits,
    operators: &BTreeSet<Operator>,
) -> Vec<CubeItem> {
    let selections = selections(analysis, table, limits);
    let mut seen: HashSet<ItemKey> = HashSet::new();
    let mut items = Vec::new();

    let mut push = |item: CubeItem, items: &mut Vec<CubeItem>| {
        if seen.insert(item.key()) {
            items.push(item);
        }
        items.len() >= limits.max_items
    };

    for &operator in operators {
        for (pattern, cells) in &selections {
            if !pattern.applies_to(operator) {
                continue;
            }
            let usable: Vec<CellRef> = cells
                .iter()
                .copied()
                .filter(|&at| {
                    let cell = table.cell(at);
                    if operator == Operator::Count {
                        !cell.is_blank()
                    } else {
                        cell.numeric.is_some()
                    }
                })
                .collect();

            if operator.is_binary() {
                for i in 0..usable.len() {
                    for j in i + 1..usable.len() {
                        for pair in [[usable[i], usable[j]], [usable[j], usable[i]]] {
                            if let Some(item) = build_item(table, operator, *pattern, &pair) {
                                if push(item, &mut items) {
                                    return items;
                                }
                            }
                        }
                    }
                }
            } else if usable.len() >= min_operands(operator) {
                let mut sorted = usable;
                sorted.sort_unstable();
                if let Some(item) = build_item(table, operator, *pattern, &sorted) {
                    if push(item, &mut items) {
                        return items;
                    }
                }
            }
        }
    }
    items
}

#[derive(Debug, Clone)]
pub struct CubeConfig {
    pub analysis: AnalysisConfig,
    pub limits: GenerationLimits,
    /// Run every enabled operator when the question triggers none.
    pub fallback_all_operators: bool,
    pub enabled: BTreeSet<Operator>,
}

impl Default for CubeConfig {
    fn default() -> Self {
        Self {
            analysis: AnalysisConfig::default(),
            limits: GenerationLimits::default(),
            fallback_all_operators: true,
            enabled: Operator::all(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedCube {
    pub analysis: QuestionAnalysis,
    pub operators: BTreeSet<Operator>,
    /// The operator set came from the fallback rather than triggers.
    pub fallback: bool,
    pub items: Vec<CubeItem>,
}

impl GeneratedCube {
    pub fn triggered(&self) -> bool {
        !self.fallback && !self.operators.is_empty()
    }
}

/// Question-sensitive generation: analyze the question, pick the operator
/// set, then enumerate.
pub fn generate(question: &str, table: &Table, config: &CubeConfig) -> GeneratedCube {
    let analysis = analyze(question, table, &config.analysis);
    let detected: BTreeSet<Operator> = analysis
        .operators
        .intersection(&config.enabled)
        .copied()
        .collect();
    let (operators, fallback) = if detected.is_empty() && config.fallback_all_operators {
        (config.enabled.clone(), true)
    } else {
        (detected, false)
    };
    let items = enumerate_items(&analysis, table, &config.limits, &operators);
    GeneratedCube {
        analysis,
        operators,
        fallback,
        items,
    }
}

pub fn generate_cube(question: &str, table: &Table, config: &CubeConfig) -> Vec<CubeItem> {
    generate(question, table, config).items
}
