//! Exhaustive enumeration of every axis-aligned first-order item, used as a
//! test oracle for the pattern-based generator. Exponential in the table
//! dimensions, so it refuses tables beyond fixed bounds.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::{build_item, CubeItem, ItemKey, Pattern};
use crate::question::Operator;
use crate::table::{CellRef, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBounds {
    pub max_rows: usize,
    pub max_cols: usize,
}

impl Default for OracleBounds {
    fn default() -> Self {
        Self {
            max_rows: 8,
            max_cols: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("table is {rows}x{cols}, brute force is limited to {max_rows}x{max_cols}")]
pub struct OracleError {
    pub rows: usize,
    pub cols: usize,
    pub max_rows: usize,
    pub max_cols: usize,
}

/// Every item obtainable from one row or one column: all non-empty subsets
/// for aggregations and `add`, all ordered pairs for binary operators.
/// Subset operands are in ascending cell order. Duplicates (the same
/// singleton reached from its row and its column) are reported once.
pub fn brute_force_cube(
    table: &Table,
    operators: &BTreeSet<Operator>,
    bounds: OracleBounds,
) -> Result<Vec<CubeItem>, OracleError> {
    let (m, n) = (table.num_rows(), table.num_cols());
    if m > bounds.max_rows || n > bounds.max_cols {
        return Err(OracleError {
            rows: m,
            cols: n,
            max_rows: bounds.max_rows,
            max_cols: bounds.max_cols,
        });
    }

    let mut lines: Vec<(Pattern, Vec<CellRef>)> = Vec::with_capacity(m + n);
    for c in 0..n {
        lines.push((Pattern::SameColumn, (0..m).map(|r| CellRef::new(r, c)).collect()));
    }
    for r in 0..m {
        lines.push((Pattern::SameRow, (0..n).map(|c| CellRef::new(r, c)).collect()));
    }

    let mut seen: HashSet<ItemKey> = HashSet::new();
    let mut items = Vec::new();
    for &operator in operators {
        for (pattern, line) in &lines {
            let eligible: Vec<CellRef> = line
                .iter()
                .copied()
                .filter(|&at| {
                    let cell = table.cell(at);
                    match operator {
                        Operator::Count => !cell.raw.trim().is_empty(),
                        _ => cell.numeric.is_some(),
                    }
                })
                .collect();

            let mut emit = |cells: &[CellRef]| {
                if let Some(item) = build_item(table, operator, *pattern, cells) {
                    if seen.insert(item.key()) {
                        items.push(item);
                    }
                }
            };

            if operator.is_binary() {
                for (i, &a) in eligible.iter().enumerate() {
                    for (j, &b) in eligible.iter().enumerate() {
                        if i != j {
                            emit(&[a, b]);
                        }
                    }
                }
            } else {
                let len = eligible.len();
                for mask in 1u32..(1u32 << len) {
                    let subset: Vec<CellRef> = (0..len)
                        .filter(|bit| mask & (1 << bit) != 0)
                        .map(|bit| eligible[bit])
                        .collect();
                    emit(&subset);
                }
            }
        }
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleViolation {
    pub item: CubeItem,
    pub reason: String,
}

/// Checks that every item appears in the brute-force enumeration over the
/// same operators, with a bit-identical result.
pub fn check_against_oracle(
    table: &Table,
    items: &[CubeItem],
    operators: &BTreeSet<Operator>,
    bounds: OracleBounds,
) -> Result<Vec<OracleViolation>, OracleError> {
    let reference: HashMap<ItemKey, f64> = brute_force_cube(table, operators, bounds)?
        .into_iter()
        .map(|item| (item.key(), item.result))
        .collect();
    let violations = items
        .iter()
        .filter_map(|item| {
            let reason = match reference.get(&item.key()) {
                None => "not produced by brute force".to_string(),
                Some(r) if r.to_bits() != item.result.to_bits() => {
                    format!("result {} differs from brute force {}", item.result, r)
                }
                Some(_) => return None,
            };
            Some(OracleViolation {
                item: item.clone(),
                reason,
            })
        })
        .collect();
    Ok(violations)
}
