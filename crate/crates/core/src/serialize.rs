//! Flattening of tables and cube items into model input sequences.
//!
//! Table sequence:
//!
//! ```text
//! [HEAD] | c1 | c2 [ROW] 1 | v11 | v12 [ROW] 2 | v21 | v22
//! ```
//!
//! Cube item sequence (fields separated by single spaces):
//!
//! ```text
//! [CUBE] diff Passengers Los Angles Toronto 1.2 0.5 [ANSWER] : 0.7
//! ```
//!
//! Inside any field a literal `|` is written `\|` and a literal backslash
//! `\\`, so cube sequences can be joined with ` | ` unambiguously.

use serde::Serialize;

use crate::cube::{CubeItem, Operand};
use crate::question::Operator;
use crate::table::Table;

pub const HEAD_TOKEN: &str = "[HEAD]";
pub const ROW_TOKEN: &str = "[ROW]";
pub const CUBE_TOKEN: &str = "[CUBE]";
pub const ANSWER_TOKEN: &str = "[ANSWER]";
pub const CUBE_SEPARATOR: &str = " | ";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("missing {0} marker")]
    MissingMarker(&'static str),
    #[error("expected row marker {0}")]
    RowMarker(usize),
    #[error("row {row} has {found} cells, expected {expected}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown operator {0:?}")]
    Operator(String),
    #[error("no segmentation of {0:?} into headers and operands")]
    Segmentation(String),
}

/// Renders a number with no decimal point when integral and otherwise up to
/// four decimals with trailing zeros trimmed.
pub fn format_number(value: f64) -> String {
    let mut s = format!("{value:.4}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(trimmed);
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub fn escape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        if matches!(c, '\\' | '|') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

pub fn unescape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(next) = chars.next() {
                out.push(next);
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Splits on `|` characters that are not escaped. Escapes are preserved.
fn split_unescaped_pipes(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '|' {
            parts.push(&text[start..i]);
            start = i + 1;
        }
    }
    parts.push(&text[start..]);
    parts
}

pub fn linearize_table(table: &Table) -> String {
    let mut out = String::from(HEAD_TOKEN);
    for header in table.column_headers() {
        out.push_str(" | ");
        out.push_str(&escape_field(header));
    }
    for (i, row) in table.rows().iter().enumerate() {
        out.push_str(&format!(" {ROW_TOKEN} {}", i + 1));
        for cell in row {
            out.push_str(" | ");
            out.push_str(&escape_field(&cell.raw));
        }
    }
    out
}

/// Headers and raw rows recovered from a table sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Inverse of [`linearize_table`]. A cell whose text itself ends in
/// `" [ROW] k"` for the next row number `k` cannot be told apart from a row
/// boundary.
pub fn parse_table(text: &str) -> Result<ParsedTable, ParseError> {
    let fields = split_unescaped_pipes(text);
    let last = fields.len() - 1;
    if fields[0] != format!("{HEAD_TOKEN} ") && !(last == 0 && fields[0] == HEAD_TOKEN) {
        return Err(ParseError::MissingMarker(HEAD_TOKEN));
    }

    let mut headers = Vec::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut current: Option<Vec<String>> = None;
    for (i, field) in fields.iter().enumerate().skip(1) {
        let mut field = field.strip_prefix(' ').unwrap_or(field);
        if i != last {
            field = field.strip_suffix(' ').unwrap_or(field);
        }
        let next_row = rows.len() + usize::from(current.is_some()) + 1;
        let marker = format!(" {ROW_TOKEN} {next_row}");
        let (cell, starts_row) = match field.strip_suffix(&marker) {
            Some(cell) if i != last => (cell, true),
            _ => (field, false),
        };
        match current.as_mut() {
            Some(row) => row.push(unescape_field(cell)),
            None => headers.push(unescape_field(cell)),
        }
        if starts_row {
            if let Some(row) = current.replace(Vec::new()) {
                rows.push(row);
            }
        }
    }
    if let Some(row) = current {
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ParseError::RowMarker(1));
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != headers.len() {
            return Err(ParseError::RowWidth {
                row: r,
                expected: headers.len(),
                found: row.len(),
            });
        }
    }
    Ok(ParsedTable { headers, rows })
}

fn render_operand(operand: &Operand) -> String {
    match operand.value {
        Some(v) => format_number(v),
        None => escape_field(operand.raw.trim()),
    }
}

pub fn linearize_cube_item(item: &CubeItem) -> String {
    let mut fields: Vec<String> = vec![CUBE_TOKEN.into(), item.operator.name().into()];
    fields.extend(item.col_headers.iter().map(|h| escape_field(h)));
    fields.extend(item.row_headers.iter().map(|h| escape_field(h)));
    fields.extend(item.operands.iter().map(render_operand));
    fields.push(ANSWER_TOKEN.into());
    fields.push(":".into());
    fields.push(format_number(item.result));
    fields.join(" ")
}

/// The strings a cube sequence may contain, taken from the table the items
/// were generated over. Needed because multi-word headers are not delimited.
#[derive(Debug, Clone, Default)]
pub struct CubeVocabulary {
    col_headers: Vec<Vec<String>>,
    row_headers: Vec<Vec<String>>,
    cell_texts: Vec<Vec<String>>,
}

fn words(text: &str) -> Vec<String> {
    escape_field(text.trim()).split(' ').map(str::to_string).collect()
}

fn longest_first(mut list: Vec<Vec<String>>) -> Vec<Vec<String>> {
    list.sort();
    list.dedup();
    list.sort_by_key(|w| std::cmp::Reverse(w.len()));
    list
}

impl CubeVocabulary {
    pub fn from_table(table: &Table) -> Self {
        let nonblank = |s: &&str| !s.trim().is_empty();
        Self {
            col_headers: longest_first(
                table.column_headers().iter().map(String::as_str).filter(nonblank).map(words).collect(),
            ),
            row_headers: longest_first(
                (0..table.num_rows()).map(|r| table.row_header(r)).filter(nonblank).map(words).collect(),
            ),
            cell_texts: longest_first(
                table.cells().map(|c| c.raw.as_str()).filter(nonblank).map(words).collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCubeItem {
    pub operator: Operator,
    pub col_headers: Vec<String>,
    pub row_headers: Vec<String>,
    /// Operands as rendered: formatted numbers or raw cell text.
    pub operands: Vec<String>,
    pub answer: String,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    ColHeaders,
    RowHeaders,
    Operands,
}

struct Segmenter<'a> {
    words: &'a [&'a str],
    vocab: &'a CubeVocabulary,
    col: Vec<String>,
    row: Vec<String>,
    ops: Vec<String>,
}

impl Segmenter<'_> {
    fn matches(&self, pos: usize, candidate: &[String]) -> bool {
        self.words.len() - pos >= candidate.len()
            && candidate.iter().zip(&self.words[pos..]).all(|(a, b)| a == b)
    }

    fn run(&mut self, pos: usize, phase: Phase) -> bool {
        match phase {
            Phase::ColHeaders | Phase::RowHeaders => {
                let list = if phase == Phase::ColHeaders {
                    &self.vocab.col_headers
                } else {
                    &self.vocab.row_headers
                };
                for candidate in list {
                    if self.matches(pos, candidate) {
                        let text = unescape_field(&candidate.join(" "));
                        // Headers within one item are distinct.
                        if self.target(phase).contains(&text) {
                            continue;
                        }
                        self.target(phase).push(text);
                        if self.run(pos + candidate.len(), phase) {
                            return true;
                        }
                        self.target(phase).pop();
                    }
                }
                let next = if phase == Phase::ColHeaders {
                    Phase::RowHeaders
                } else {
                    Phase::Operands
                };
                self.run(pos, next)
            }
            Phase::Operands => {
                if pos == self.words.len() {
                    return !self.ops.is_empty();
                }
                let word = self.words[pos];
                if word.parse::<f64>().is_ok() {
                    self.ops.push(word.to_string());
                    if self.run(pos + 1, phase) {
                        return true;
                    }
                    self.ops.pop();
                }
                for candidate in &self.vocab.cell_texts {
                    if self.matches(pos, candidate) {
                        self.ops.push(unescape_field(&candidate.join(" ")));
                        if self.run(pos + candidate.len(), phase) {
                            return true;
                        }
                        self.ops.pop();
                    }
                }
                false
            }
        }
    }

    fn target(&mut self, phase: Phase) -> &mut Vec<String> {
        match phase {
            Phase::ColHeaders => &mut self.col,
            Phase::RowHeaders => &mut self.row,
            Phase::Operands => &mut self.ops,
        }
    }
}

/// Inverse of [`linearize_cube_item`]. Header boundaries are resolved
/// against `vocab`, preferring longer headers and more column headers; a
/// header that is a space-joined concatenation of other headers is
/// therefore ambiguous, as is a header that also occurs as operand text.
pub fn parse_cube_item(text: &str, vocab: &CubeVocabulary) -> Result<ParsedCubeItem, ParseError> {
    let body = text
        .strip_prefix(CUBE_TOKEN)
        .and_then(|s| s.strip_prefix(' '))
        .ok_or(ParseError::MissingMarker(CUBE_TOKEN))?;
    let answer_marker = format!(" {ANSWER_TOKEN} : ");
    let (body, answer) = body
        .rsplit_once(&answer_marker)
        .ok_or(ParseError::MissingMarker(ANSWER_TOKEN))?;
    let (operator, rest) = body.split_once(' ').unwrap_or((body, ""));
    let operator: Operator = operator
        .parse()
        .map_err(|_| ParseError::Operator(operator.to_string()))?;
    let words: Vec<&str> = if rest.is_empty() { vec![] } else { rest.split(' ').collect() };

    let mut segmenter = Segmenter {
        words: &words,
        vocab,
        col: vec![],
        row: vec![],
        ops: vec![],
    };
    if !segmenter.run(0, Phase::ColHeaders) {
        return Err(ParseError::Segmentation(rest.to_string()));
    }
    Ok(ParsedCubeItem {
        operator,
        col_headers: segmenter.col,
        row_headers: segmenter.row,
        operands: segmenter.ops,
        answer: answer.to_string(),
    })
}

/// Byte range `[start, end)` of a segment. Each span runs up to the start of
/// the next segment, so it includes the separator that follows it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segments {
    pub question: Span,
    pub context: Option<Span>,
    pub table: Span,
    pub cubes: Vec<Span>,
}

impl Segments {
    pub fn in_order(&self) -> Vec<Span> {
        let mut spans = vec![self.question];
        spans.extend(self.context);
        spans.push(self.table);
        spans.extend(self.cubes.iter().copied());
        spans
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SerializedInput {
    pub text: String,
    pub segments: Segments,
}

impl SerializedInput {
    /// Segments are contiguous, non-overlapping, and cover the text.
    pub fn segments_cover_text(&self) -> bool {
        let spans = self.segments.in_order();
        spans.first().is_some_and(|s| s.start == 0)
            && spans.last().is_some_and(|s| s.end == self.text.len())
            && spans.windows(2).all(|w| w[0].end == w[1].start)
            && spans.iter().all(|s| s.start <= s.end)
    }
}

/// Question, optional context, the table sequence, then the cube sequences
/// joined by `" | "`, all separated by single spaces. With no cubes the
/// output is the plain question-plus-table input.
pub fn build_model_input<'a>(
    question: &str,
    context: Option<&str>,
    table: &Table,
    cubes: impl IntoIterator<Item = &'a CubeItem>,
) -> SerializedInput {
    let mut text = String::new();
    let mut starts = Vec::new();
    let mut push = |text: &mut String, part: &str, sep: &str| {
        if !text.is_empty() {
            text.push_str(sep);
        }
        starts.push(text.len());
        text.push_str(part);
    };

    push(&mut text, question, " ");
    let has_context = context.is_some_and(|c| !c.is_empty());
    if let Some(ctx) = context.filter(|c| !c.is_empty()) {
        push(&mut text, ctx, " ");
    }
    push(&mut text, &linearize_table(table), " ");
    let mut cube_count = 0;
    for (i, item) in cubes.into_iter().enumerate() {
        push(&mut text, &linearize_cube_item(item), if i == 0 { " " } else { CUBE_SEPARATOR });
        cube_count += 1;
    }

    let mut spans: Vec<Span> = starts
        .windows(2)
        .map(|w| Span { start: w[0], end: w[1] })
        .collect();
    spans.push(Span {
        start: *starts.last().expect("question segment"),
        end: text.len(),
    });
    let mut spans = spans.into_iter();
    let question = spans.next().expect("question span");
    let context = if has_context { spans.next() } else { None };
    let table = spans.next().expect("table span");
    let cubes: Vec<Span> = spans.collect();
    debug_assert_eq!(cubes.len(), cube_count);
    SerializedInput {
        text,
        segments: Segments {
            question,
            context,
            table,
            cubes,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::Pattern;
    use crate::table::CellRef;

    fn table(headers: &[&str], rows: &[&[&str]]) -> Table {
        Table::new(
            "t",
            headers.iter().map(|s| s.to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        )
        .unwrap()
    }

    fn operand(row: usize, col: usize, value: f64) -> Operand {
        Operand {
            cell: CellRef::new(row, col),
            raw: value.to_string(),
            value: Some(value),
        }
    }

    fn diff_item() -> CubeItem {
        CubeItem {
            operator: Operator::Diff,
            pattern: Pattern::SameColumn,
            col_headers: vec!["Passengers".into()],
            row_headers: vec!["Los Angles".into(), "Toronto".into()],
            operands: vec![operand(0, 1, 1.2), operand(1, 1, 0.5)],
            result: 1.2 - 0.5,
            scale_hint: None,
        }
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(0.1), "0.1");
        assert_eq!(format_number(1.2 - 0.5), "0.7");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(1.0 / 3.0), "0.3333");
        assert_eq!(format_number(-0.00001), "0");
        assert_eq!(format_number(1234567.0), "1234567");
        assert_eq!(format_number(2.99999), "3");
    }

    #[test]
    fn table_sequences() {
        assert_eq!(
            linearize_table(&table(&["Year", "Revenue"], &[&["2019", "100"]])),
            "[HEAD] | Year | Revenue [ROW] 1 | 2019 | 100"
        );
        assert_eq!(linearize_table(&table(&["A"], &[&["x"]])), "[HEAD] | A [ROW] 1 | x");
        let piped = table(&["A", "B"], &[&["a|b", ""], &["c\\d", "e"]]);
        let text = linearize_table(&piped);
        assert_eq!(text, "[HEAD] | A | B [ROW] 1 | a\\|b |  [ROW] 2 | c\\\\d | e");
        let parsed = parse_table(&text).unwrap();
        assert_eq!(parsed.rows[0], ["a|b", ""]);
        assert_eq!(parsed.rows[1], ["c\\d", "e"]);
    }

    #[test]
    fn parse_table_rejects_garbage() {
        assert_eq!(parse_table("hello | world"), Err(ParseError::MissingMarker(HEAD_TOKEN)));
        assert!(parse_table("[HEAD] | A | B [ROW] 1 | x").is_err());
    }

    #[test]
    fn cube_sequences() {
        assert_eq!(
            linearize_cube_item(&diff_item()),
            "[CUBE] diff Passengers Los Angles Toronto 1.2 0.5 [ANSWER] : 0.7"
        );
        let count = CubeItem {
            operator: Operator::Count,
            pattern: Pattern::AllRow,
            col_headers: vec!["Result".into()],
            row_headers: vec![],
            operands: vec![
                Operand { cell: CellRef::new(0, 1), raw: "DNF".into(), value: None },
                operand(1, 1, 3.0),
                operand(2, 1, 4.0),
            ],
            result: 3.0,
            scale_hint: None,
        };
        assert!(linearize_cube_item(&count).ends_with("[ANSWER] : 3"));
        let ratio = CubeItem {
            operator: Operator::ChangeRatio,
            result: (110.0 - 100.0) / 100.0,
            ..diff_item()
        };
        assert!(linearize_cube_item(&ratio).ends_with("[ANSWER] : 0.1"));
    }

    #[test]
    fn cube_round_trip_with_multiword_headers() {
        let t = table(&["City", "Passengers"], &[&["Los Angles", "1.2"], &["Toronto", "0.5"]]);
        let vocab = CubeVocabulary::from_table(&t);
        let parsed = parse_cube_item(&linearize_cube_item(&diff_item()), &vocab).unwrap();
        assert_eq!(parsed.operator, Operator::Diff);
        assert_eq!(parsed.col_headers, ["Passengers"]);
        assert_eq!(parsed.row_headers, ["Los Angles", "Toronto"]);
        assert_eq!(parsed.operands, ["1.2", "0.5"]);
        assert_eq!(parsed.answer, "0.7");
    }

    #[test]
    fn model_input_layout() {
        let t = table(&["City", "Passengers"], &[&["Los Angles", "1.2"], &["Toronto", "0.5"]]);
        let baseline = build_model_input("q?", Some("ctx"), &t, []);
        assert_eq!(baseline.text, format!("q? ctx {}", linearize_table(&t)));
        assert!(baseline.segments.cubes.is_empty());
        assert!(baseline.segments_cover_text());

        let a = diff_item();
        let b = CubeItem { operator: Operator::Div, result: 1.2 / 0.5, ..diff_item() };
        let with = build_model_input("q?", None, &t, [&a, &b]);
        assert_eq!(with.segments.cubes.len(), 2);
        assert_eq!(with.text.matches(" | [CUBE]").count(), 1);
        assert!(with.segments_cover_text());
        let expected = format!(
            "q? {} {} | {}",
            linearize_table(&t),
            linearize_cube_item(&a),
            linearize_cube_item(&b)
        );
        assert_eq!(with.text, expected);
        let first = with.segments.cubes[0];
        assert_eq!(&with.text[first.start..first.end], format!("{} | ", linearize_cube_item(&a)));
    }
}
