//! Dataset ingestion: TAT-QA JSON, WikiTableQuestions TSV + CSV tables, and
//! generic CSV tables with optional question sidecars.
//!
//! I/O failures on the main file are fatal. Malformed records are skipped
//! and listed in the [`IngestReport`].

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::table::{Table, TableError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Tatqa,
    Wtq,
    Csv,
}

impl DatasetFormat {
    pub fn name(self) -> &'static str {
        match self {
            DatasetFormat::Tatqa => "tatqa",
            DatasetFormat::Wtq => "wtq",
            DatasetFormat::Csv => "csv",
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tatqa" | "tat-qa" => Ok(DatasetFormat::Tatqa),
            "wtq" => Ok(DatasetFormat::Wtq),
            "csv" => Ok(DatasetFormat::Csv),
            other => Err(format!("unknown dataset format {other:?} (expected tatqa, wtq or csv)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerType {
    #[serde(rename = "span")]
    Span,
    #[serde(rename = "multi-span")]
    MultiSpan,
    #[serde(rename = "count")]
    Count,
    #[serde(rename = "arithmetic")]
    Arithmetic,
}

impl FromStr for AnswerType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "span" => Ok(AnswerType::Span),
            "multi-span" => Ok(AnswerType::MultiSpan),
            "count" => Ok(AnswerType::Count),
            "arithmetic" => Ok(AnswerType::Arithmetic),
            other => Err(format!("unknown answer type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub values: Vec<String>,
    pub scale: Option<String>,
    pub derivation: Option<String>,
    pub answer_type: Option<AnswerType>,
}

#[derive(Debug, Clone)]
pub struct QAInstance {
    pub id: String,
    pub question: String,
    pub table: Arc<Table>,
    pub context: Option<String>,
    pub gold: Option<GoldAnswer>,
    /// Joined SQL annotation, when a sidecar supplies one.
    pub sql: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordIssue {
    pub record: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub instances: Vec<QAInstance>,
    /// Question records encountered, including skipped ones.
    pub ingested: usize,
    pub skipped: Vec<RecordIssue>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Table { path: PathBuf, source: TableError },
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn ingest_dataset(path: &Path, format: DatasetFormat) -> Result<IngestReport, IngestError> {
    match format {
        DatasetFormat::Tatqa => ingest_tatqa(path),
        DatasetFormat::Wtq => ingest_wtq(path, None),
        DatasetFormat::Csv => ingest_csv(path, None),
    }
}

/// Builds a flat table: first record is the header row, rows are padded to
/// the widest record.
pub fn table_from_records(id: &str, mut records: Vec<Vec<String>>) -> Result<Table, TableError> {
    if records.is_empty() {
        return Err(TableError::ZeroColumns);
    }
    let width = records.iter().map(Vec::len).max().unwrap_or(0);
    for r in &mut records {
        r.resize(width, String::new());
    }
    let rows = records.split_off(1);
    let headers = records.pop().expect("header record");
    Table::new(id, headers, rows)
}

// TAT-QA

#[derive(Deserialize)]
struct TatBlock {
    table: TatTable,
    #[serde(default)]
    paragraphs: Vec<TatParagraph>,
    #[serde(default)]
    questions: Vec<Value>,
}

#[derive(Deserialize)]
struct TatTable {
    #[serde(default)]
    uid: String,
    table: Vec<Vec<String>>,
}

#[derive(Deserialize)]
struct TatParagraph {
    #[serde(default)]
    order: i64,
    text: String,
}

#[derive(Deserialize)]
struct TatQuestion {
    #[serde(default)]
    uid: String,
    question: String,
    #[serde(default)]
    answer: Value,
    #[serde(default)]
    derivation: String,
    #[serde(default)]
    answer_type: Option<String>,
    #[serde(default)]
    scale: String,
}

fn value_strings(v: &Value) -> Vec<String> {
    match v {
        Value::Null => vec![],
        Value::String(s) if s.trim().is_empty() => vec![],
        Value::String(s) => vec![s.clone()],
        Value::Number(n) => vec![n.to_string()],
        Value::Array(items) => items.iter().flat_map(value_strings).collect(),
        other => vec![other.to_string()],
    }
}

fn non_empty(s: String) -> Option<String> {
    (!s.trim().is_empty()).then_some(s)
}

pub fn ingest_tatqa(path: &Path) -> Result<IngestReport, IngestError> {
    let text = read(path)?;
    let blocks: Vec<Value> = serde_json::from_str(&text).map_err(|e| IngestError::Syntax {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut report = IngestReport::default();
    for (b, block) in blocks.into_iter().enumerate() {
        let question_count = block
            .get("questions")
            .and_then(Value::as_array)
            .map_or(1, |q| q.len().max(1));
        let block_label = format!("block {b}");
        let block: TatBlock = match serde_json::from_value(block) {
            Ok(block) => block,
            Err(e) => {
                report.ingested += question_count;
                report.skipped.push(RecordIssue {
                    record: block_label,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let table_id = if block.table.uid.is_empty() { block_label.clone() } else { block.table.uid.clone() };
        let table = Table::from_grid(table_id.clone(), block.table.table).map(Arc::new);
        let mut paragraphs = block.paragraphs;
        paragraphs.sort_by_key(|p| p.order);
        let context = non_empty(
            paragraphs
                .iter()
                .map(|p| p.text.trim())
                .filter(|t| !t.is_empty())
                .collect::<Vec<_>>()
                .join(" "),
        );

        for (q, raw) in block.questions.into_iter().enumerate() {
            report.ingested += 1;
            let fallback_id = format!("{table_id}#{q}");
            let parsed: TatQuestion = match serde_json::from_value(raw) {
                Ok(parsed) => parsed,
                Err(e) => {
                    report.skipped.push(RecordIssue {
                        record: fallback_id,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            let id = if parsed.uid.is_empty() { fallback_id } else { parsed.uid.clone() };
            let table = match &table {
                Ok(t) => Arc::clone(t),
                Err(e) => {
                    report.skipped.push(RecordIssue {
                        record: id,
                        message: e.to_string(),
                    });
                    continue;
                }
            };
            if parsed.question.trim().is_empty() {
                report.skipped.push(RecordIssue {
                    record: id,
                    message: "empty question".into(),
                });
                continue;
            }
            let answer_type = match parsed.answer_type.as_deref().filter(|s| !s.is_empty()).map(str::parse) {
                Some(Err(e)) => {
                    report.skipped.push(RecordIssue { record: id, message: e });
                    continue;
                }
                Some(Ok(t)) => Some(t),
                None => None,
            };
            let values = value_strings(&parsed.answer);
            let gold = (!values.is_empty()).then(|| GoldAnswer {
                values,
                scale: non_empty(parsed.scale),
                derivation: non_empty(parsed.derivation),
                answer_type,
            });
            report.instances.push(QAInstance {
                id,
                question: parsed.question,
                table,
                context: context.clone(),
                gold,
                sql: None,
            });
        }
    }
    Ok(report)
}

// WikiTableQuestions

/// Undoes the TSV escapes `\n`, `\p` (pipe) and `\\`.
fn wtq_unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('p') => out.push('|'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Target values are `|`-separated; escapes are undone per value.
fn wtq_targets(field: &str) -> Vec<String> {
    field
        .split('|')
        .map(wtq_unescape)
        .filter(|v| !v.trim().is_empty())
        .collect()
}

/// Reads a WTQ table CSV (`\"` escapes inside quoted fields).
pub fn read_wtq_table(path: &Path, id: &str) -> Result<Table, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .escape(Some(b'\\'))
        .double_quote(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        records.push(rec.iter().map(str::to_string).collect());
    }
    table_from_records(id, records).map_err(|source| IngestError::Table {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IngestError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => IngestError::Syntax {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

/// Loads SQL annotations keyed by question id. Accepts a JSON array of
/// objects with `nt` (or `id`) and `sql`, where `sql` is a string or a list
/// of token tuples whose second element is the token text.
pub fn load_sql_sidecar(path: &Path) -> Result<HashMap<String, String>, IngestError> {
    let text = read(path)?;
    let records: Vec<Value> = serde_json::from_str(&text).map_err(|e| IngestError::Syntax {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut map = HashMap::new();
    for rec in records {
        let Some(id) = rec.get("nt").or_else(|| rec.get("id")).and_then(Value::as_str) else {
            continue;
        };
        let sql = match rec.get("sql") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Array(tokens)) => tokens
                .iter()
                .filter_map(|t| match t {
                    Value::String(s) => Some(s.clone()),
                    Value::Array(parts) => parts.get(1).and_then(Value::as_str).map(str::to_string),
                    _ => None,
                })
                .collect::<Vec<_>>()
                .join(" "),
            _ => continue,
        };
        map.insert(id.to_string(), sql);
    }
    Ok(map)
}

fn resolve_table_path(tsv: &Path, relative: &str) -> PathBuf {
    let dir = tsv.parent().unwrap_or(Path::new("."));
    let direct = dir.join(relative);
    if direct.exists() {
        return direct;
    }
    dir.parent().map(|p| p.join(relative)).filter(|p| p.exists()).unwrap_or(direct)
}

/// Reads a WTQ question file (`id, utterance, context, targetValue`, with a
/// header line). Table paths are resolved against the file's directory and
/// then its parent, matching the official layout (`data/*.tsv`, `csv/...`).
pub fn ingest_wtq(path: &Path, sql: Option<&HashMap<String, String>>) -> Result<IngestReport, IngestError> {
    let text = read(path)?;
    let mut report = IngestReport::default();
    let mut tables: HashMap<String, Result<Arc<Table>, String>> = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if n == 0 && line.starts_with("id\t") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        report.ingested += 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let record = fields.first().copied().unwrap_or_default().to_string();
        if fields.len() < 4 {
            report.skipped.push(RecordIssue {
                record: format!("line {}", n + 1),
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
            continue;
        }
        let (id, question, context, target) = (fields[0], wtq_unescape(fields[1]), fields[2], fields[3]);
        let table = tables
            .entry(context.to_string())
            .or_insert_with(|| {
                let table_path = resolve_table_path(path, context);
                read_wtq_table(&table_path, context).map(Arc::new).map_err(|e| e.to_string())
            })
            .clone();
        let table = match table {
            Ok(t) => t,
            Err(message) => {
                report.skipped.push(RecordIssue { record, message });
                continue;
            }
        };
        if question.trim().is_empty() {
            report.skipped.push(RecordIssue {
                record,
                message: "empty question".into(),
            });
            continue;
        }
        let values = wtq_targets(target);
        let gold = (!values.is_empty()).then_some(GoldAnswer {
            values,
            scale: None,
            derivation: None,
            answer_type: None,
        });
        report.instances.push(QAInstance {
            id: id.to_string(),
            question,
            table,
            context: None,
            gold,
            sql: sql.and_then(|m| m.get(id).cloned()),
        });
    }
    Ok(report)
}

// Generic CSV

/// Default sidecar location: `<stem>.questions.txt` next to the table.
pub fn default_question_sidecar(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
    path.with_file_name(format!("{stem}.questions.txt"))
}

/// Reads an RFC 4180 CSV table. Questions come from `questions` if given,
/// else from the default sidecar if it exists (one per non-blank line); with
/// neither, a single instance whose question is the file stem is produced.
/// Instances carry no gold answer.
pub fn ingest_csv(path: &Path, questions: Option<Vec<String>>) -> Result<IngestReport, IngestError> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("table").to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        records.push(rec.iter().map(str::to_string).collect());
    }
    let table = Arc::new(table_from_records(&stem, records).map_err(|source| IngestError::Table {
        path: path.to_path_buf(),
        source,
    })?);

    let questions = match questions {
        Some(q) => q,
        None => {
            let sidecar = default_question_sidecar(path);
            if sidecar.exists() {
                read(&sidecar)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_string)
                    .collect()
            } else {
                vec![stem.clone()]
            }
        }
    };
    let single = questions.len() == 1;
    let mut report = IngestReport::default();
    for (i, question) in questions.into_iter().enumerate() {
        report.ingested += 1;
        let id = if single { stem.clone() } else { format!("{stem}-{}", i + 1) };
        if question.trim().is_empty() {
            report.skipped.push(RecordIssue {
                record: id,
                message: "empty question".into(),
            });
            continue;
        }
        report.instances.push(QAInstance {
            id,
            question,
            table: Arc::clone(&table),
            context: None,
            gold: None,
            sql: None,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wtq_escapes() {
        assert_eq!(wtq_unescape(r"a\pb\nc\\d"), "a|b\nc\\d");
        assert_eq!(wtq_targets("1|2"), ["1", "2"]);
        assert_eq!(wtq_targets(r"x\py"), ["x|y"]);
    }

    #[test]
    fn tatqa_answer_shapes() {
        assert_eq!(value_strings(&serde_json::json!(12.5)), ["12.5"]);
        assert_eq!(value_strings(&serde_json::json!(["a", "b"])), ["a", "b"]);
        assert!(value_strings(&serde_json::json!("")).is_empty());
    }

    #[test]
    fn header_only_records() {
        let err = table_from_records("t", vec![vec!["A".into(), "B".into()]]).unwrap_err();
        assert_eq!(err.to_string(), "table has zero data rows");
    }

    #[test]
    fn format_names() {
        assert_eq!("TAT-QA".parse::<DatasetFormat>(), Ok(DatasetFormat::Tatqa));
        assert!("xml".parse::<DatasetFormat>().is_err());
    }
}
