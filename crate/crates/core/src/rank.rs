//! Ranking of cube items against the question: TF-IDF cosine similarity over
//! flattened item sequences, or scores supplied by an external classifier.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cube::CubeItem;
use crate::question::normalize;
use crate::serialize::linearize_cube_item;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankerMode {
    #[default]
    Heuristic,
    External,
}

impl RankerMode {
    pub fn name(self) -> &'static str {
        match self {
            RankerMode::Heuristic => "heuristic",
            RankerMode::External => "external",
        }
    }
}

impl fmt::Display for RankerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RankerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heuristic" => Ok(RankerMode::Heuristic),
            "external" => Ok(RankerMode::External),
            other => Err(format!("unknown ranker {other:?} (expected heuristic or external)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfWeighting {
    #[default]
    Raw,
    /// 1 + ln(tf)
    Log,
    Binary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfWeighting {
    /// ln(1 + N/df)
    #[default]
    Smooth,
    /// ln(N/df)
    Plain,
    None,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfIdfConfig {
    pub tf: TfWeighting,
    pub idf: IdfWeighting,
}

/// TF-IDF vector space fitted on one document set.
#[derive(Debug, Clone)]
pub struct HeuristicScorer {
    config: TfIdfConfig,
    idf: HashMap<String, f64>,
    query: BTreeMap<String, f64>,
}

fn term_counts(tokens: Vec<String>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

impl HeuristicScorer {
    /// Fits IDF on `{question} ∪ documents` and prepares the question vector.
    pub fn fit<S: AsRef<str>>(question: &str, documents: &[S], config: TfIdfConfig) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let all = std::iter::once(question).chain(documents.iter().map(AsRef::as_ref));
        let mut n = 0usize;
        for doc in all {
            n += 1;
            for term in normalize(doc).into_iter().collect::<HashSet<_>>() {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        let n = n as f64;
        let idf = df
            .into_iter()
            .map(|(term, df)| {
                let ratio = n / df as f64;
                let w = match config.idf {
                    IdfWeighting::Smooth => (1.0 + ratio).ln(),
                    IdfWeighting::Plain => ratio.ln(),
                    IdfWeighting::None => 1.0,
                };
                (term, w)
            })
            .collect();
        let mut scorer = Self {
            config,
            idf,
            query: BTreeMap::new(),
        };
        scorer.query = scorer.vector(question);
        scorer
    }

    /// L2-normalized weight vector. Terms outside the fitted vocabulary get
    /// zero weight.
    pub fn vector(&self, text: &str) -> BTreeMap<String, f64> {
        let mut v: BTreeMap<String, f64> = term_counts(normalize(text))
            .into_iter()
            .map(|(term, count)| {
                let tf = match self.config.tf {
                    TfWeighting::Raw => count as f64,
                    TfWeighting::Log => 1.0 + (count as f64).ln(),
                    TfWeighting::Binary => 1.0,
                };
                let idf = self.idf.get(&term).copied().unwrap_or(0.0);
                (term, tf * idf)
            })
            .filter(|(_, w)| *w != 0.0)
            .collect();
        let norm = v.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.values_mut().for_each(|w| *w /= norm);
        }
        v
    }

    /// Cosine similarity between the question and `document`, in [0, 1].
    pub fn score(&self, document: &str) -> f64 {
        let doc = self.vector(document);
        let dot: f64 = self
            .query
            .iter()
            .filter_map(|(t, q)| doc.get(t).map(|d| q * d))
            .sum();
        dot.clamp(0.0, 1.0)
    }
}

/// TF-IDF similarity between the question and one item, with IDF fitted on
/// the question and all `candidates` of the same instance.
pub fn score_heuristic(question: &str, item: &CubeItem, candidates: &[CubeItem]) -> f64 {
    let docs: Vec<String> = candidates.iter().map(linearize_cube_item).collect();
    HeuristicScorer::fit(question, &docs, TfIdfConfig::default()).score(&linearize_cube_item(item))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub fp: String,
    pub label: u8,
    pub logit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub scores: Vec<ScoreEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreFileError {
    #[error("reading score file: {0}")]
    Io(#[from] std::io::Error),
    #[error("score file line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("score file line {line}: label must be 0 or 1, got {label}")]
    Label { line: usize, label: u8 },
}

/// Externally produced per-item scores, keyed by instance id.
#[derive(Debug, Clone, Default)]
pub struct ExternalScores {
    by_id: HashMap<String, Vec<ScoreEntry>>,
}

impl ExternalScores {
    pub fn from_reader(reader: impl BufRead) -> Result<Self, ScoreFileError> {
        let mut by_id: HashMap<String, Vec<ScoreEntry>> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ScoreRecord = serde_json::from_str(&line)
                .map_err(|source| ScoreFileError::Json { line: i + 1, source })?;
            if let Some(bad) = record.scores.iter().find(|s| s.label > 1) {
                return Err(ScoreFileError::Label {
                    line: i + 1,
                    label: bad.label,
                });
            }
            by_id.entry(record.id).or_default().extend(record.scores);
        }
        Ok(Self { by_id })
    }

    pub fn load(path: &Path) -> Result<Self, ScoreFileError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn from_records(records: impl IntoIterator<Item = ScoreRecord>) -> Self {
        let mut by_id: HashMap<String, Vec<ScoreEntry>> = HashMap::new();
        for r in records {
            by_id.entry(r.id).or_default().extend(r.scores);
        }
        Self { by_id }
    }

    pub fn get(&self, id: &str) -> Option<&[ScoreEntry]> {
        self.by_id.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub item: CubeItem,
    pub score: f64,
    /// Generation-order index of the item.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCube {
    pub items: Vec<RankedEntry>,
    pub k: usize,
    /// The ranker actually applied, after any fallback.
    pub ranker: RankerMode,
    /// Set when external scores were requested but could not be used.
    pub fallback_reason: Option<String>,
}

impl RankedCube {
    pub fn top(&self, k: usize) -> &[RankedEntry] {
        &self.items[..k.min(self.items.len())]
    }

    pub fn cube_items(&self) -> impl Iterator<Item = &CubeItem> {
        self.items.iter().map(|e| &e.item)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("k must be at least 1")]
pub struct InvalidK;

#[derive(Debug, Clone, Copy, Default)]
pub struct RankOptions<'a> {
    pub mode: RankerMode,
    pub external: Option<&'a [ScoreEntry]>,
    pub tfidf: TfIdfConfig,
}

/// Stable sort of `(item, key)` pairs by key descending, truncated to `k`.
fn sort_and_truncate(
    items: Vec<CubeItem>,
    keys: Vec<(f64, f64)>,
    scores: Vec<f64>,
    k: usize,
) -> Vec<RankedEntry> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (keys[a], keys[b]);
        kb.0.total_cmp(&ka.0).then(kb.1.total_cmp(&ka.1))
    });
    order.truncate(k);
    let mut slots: Vec<Option<CubeItem>> = items.into_iter().map(Some).collect();
    order
        .into_iter()
        .map(|i| RankedEntry {
            item: slots[i].take().expect("each index used once"),
            score: scores[i],
            index: i,
        })
        .collect()
}

/// Heuristic ranking with a pre-fitted scorer.
pub fn rank_with_scorer(scorer: &HeuristicScorer, items: Vec<CubeItem>, k: usize) -> Result<RankedCube, InvalidK> {
    if k == 0 {
        return Err(InvalidK);
    }
    let scores: Vec<f64> = items.iter().map(|i| scorer.score(&linearize_cube_item(i))).collect();
    let keys = scores.iter().map(|&s| (s, 0.0)).collect();
    Ok(RankedCube {
        items: sort_and_truncate(items, keys, scores, k),
        k,
        ranker: RankerMode::Heuristic,
        fallback_reason: None,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Orders by `(label, logit)` descending. Items without an entry sort after
/// all scored items. Returns an error message when the entries cannot be
/// used for this instance.
fn rank_external(items: Vec<CubeItem>, entries: &[ScoreEntry], k: usize) -> Result<Vec<RankedEntry>, (Vec<CubeItem>, String)> {
    let fingerprints: Vec<String> = items.iter().map(CubeItem::fingerprint).collect();
    let known: HashSet<&str> = fingerprints.iter().map(String::as_str).collect();
    let unresolved: Vec<&str> = entries
        .iter()
        .map(|e| e.fp.as_str())
        .filter(|fp| !known.contains(fp))
        .collect();
    if !unresolved.is_empty() {
        let reason = format!("{} unresolved fingerprint(s): {}", unresolved.len(), unresolved.join(","));
        return Err((items, reason));
    }
    let lookup: HashMap<&str, &ScoreEntry> = entries.iter().map(|e| (e.fp.as_str(), e)).collect();
    let mut keys = Vec::with_capacity(items.len());
    let mut scores = Vec::with_capacity(items.len());
    for fp in &fingerprints {
        match lookup.get(fp.as_str()) {
            Some(e) => {
                keys.push((f64::from(e.label), e.logit));
                scores.push(f64::from(e.label) + sigmoid(e.logit));
            }
            None => {
                keys.push((-1.0, f64::NEG_INFINITY));
                scores.push(0.0);
            }
        }
    }
    Ok(sort_and_truncate(items, keys, scores, k))
}

/// Ranks the items of one instance and keeps the top `k`.
///
/// Heuristic mode fits IDF on the question and these items. External mode
/// falls back to heuristic, with a warning, when the instance has no score
/// entry or an entry references an item that was not generated.
pub fn rank(question: &str, items: Vec<CubeItem>, k: usize, options: RankOptions<'_>) -> Result<RankedCube, InvalidK> {
    if k == 0 {
        return Err(InvalidK);
    }
    let heuristic = |items: Vec<CubeItem>| {
        let docs: Vec<String> = items.iter().map(linearize_cube_item).collect();
        let scorer = HeuristicScorer::fit(question, &docs, options.tfidf);
        rank_with_scorer(&scorer, items, k)
    };
    if options.mode == RankerMode::Heuristic {
        return heuristic(items);
    }
    let (items, reason) = match options.external {
        None => (items, "no score entry for instance".to_string()),
        Some(entries) => match rank_external(items, entries, k) {
            Ok(ranked) => {
                return Ok(RankedCube {
                    items: ranked,
                    k,
                    ranker: RankerMode::External,
                    fallback_reason: None,
                })
            }
            Err(e) => e,
        },
    };
    log::warn!("external ranking unavailable ({reason}); using heuristic");
    let mut ranked = heuristic(items)?;
    ranked.fallback_reason = Some(reason);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{Operand, Pattern};
    use crate::question::Operator;
    use crate::table::CellRef;

    fn item(col: &str, row: &str, value: f64) -> CubeItem {
        CubeItem {
            operator: Operator::Sum,
            pattern: Pattern::SameColumn,
            col_headers: vec![col.into()],
            row_headers: vec![row.into()],
            operands: vec![Operand {
                cell: CellRef::new(0, 0),
                raw: value.to_string(),
                value: Some(value),
            }],
            result: value,
            scale_hint: None,
        }
    }

    #[test]
    fn disjoint_and_identical_documents() {
        let scorer = HeuristicScorer::fit("alpha beta", &["gamma delta", "alpha beta"], TfIdfConfig::default());
        assert_eq!(scorer.score("gamma delta"), 0.0);
        assert!((scorer.score("alpha beta") - 1.0).abs() < 1e-12);
        assert!((scorer.score("Alpha, BETA!") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_weights() {
        // Documents: q = "a b", d1 = "a c", d2 = "c c". N = 3.
        // df: a=2, b=1, c=2. idf: a=ln(2.5), b=ln(4), c=ln(2.5).
        let scorer = HeuristicScorer::fit("a b", &["a c", "c c"], TfIdfConfig::default());
        let (ia, ib, ic) = (2.5f64.ln(), 4f64.ln(), 2.5f64.ln());
        let expected = (ia * ia) / ((ia * ia + ib * ib).sqrt() * (ia * ia + ic * ic).sqrt());
        assert!((scorer.score("a c") - expected).abs() < 1e-12);
        assert_eq!(scorer.score("c c"), 0.0);
    }

    #[test]
    fn ties_keep_generation_order() {
        let items = vec![item("X", "p", 1.0), item("Y", "q", 2.0), item("X", "p", 3.0)];
        let ranked = rank("unrelated words", items, 10, RankOptions::default()).unwrap();
        let idx: Vec<usize> = ranked.items.iter().map(|e| e.index).collect();
        assert_eq!(idx, [0, 1, 2]);
    }

    #[test]
    fn k_truncates_and_zero_is_rejected() {
        let items = vec![item("Revenue", "2019", 1.0), item("Cost", "2018", 2.0), item("Tax", "2017", 3.0)];
        let ranked = rank("what is the revenue", items.clone(), 2, RankOptions::default()).unwrap();
        assert_eq!(ranked.items.len(), 2);
        assert_eq!(ranked.items[0].index, 0);
        assert_eq!(rank("q", items, 0, RankOptions::default()), Err(InvalidK));
        assert!(rank("q", vec![], 5, RankOptions::default()).unwrap().items.is_empty());
    }

    #[test]
    fn external_orders_by_label_then_logit() {
        let items = vec![item("A", "r", 1.0), item("B", "r", 2.0), item("C", "r", 3.0)];
        let fps: Vec<String> = items.iter().map(CubeItem::fingerprint).collect();
        assert_eq!(fps[0], fps[1], "same operator, cells and pattern share a fingerprint");
        let mut items = items;
        items[1].operands[0].cell = CellRef::new(1, 0);
        items[2].operands[0].cell = CellRef::new(2, 0);
        let fps: Vec<String> = items.iter().map(CubeItem::fingerprint).collect();
        let entries = vec![
            ScoreEntry { fp: fps[0].clone(), label: 0, logit: 5.0 },
            ScoreEntry { fp: fps[1].clone(), label: 1, logit: -2.0 },
            ScoreEntry { fp: fps[2].clone(), label: 1, logit: 3.0 },
        ];
        let options = RankOptions {
            mode: RankerMode::External,
            external: Some(&entries),
            ..Default::default()
        };
        let ranked = rank("q", items.clone(), 10, options).unwrap();
        assert_eq!(ranked.ranker, RankerMode::External);
        let idx: Vec<usize> = ranked.items.iter().map(|e| e.index).collect();
        assert_eq!(idx, [2, 1, 0]);

        let bogus = vec![ScoreEntry { fp: "00".into(), label: 1, logit: 0.0 }];
        let options = RankOptions { external: Some(&bogus), ..options };
        let ranked = rank("q", items.clone(), 10, options).unwrap();
        assert_eq!(ranked.ranker, RankerMode::Heuristic);
        assert!(ranked.fallback_reason.unwrap().contains("unresolved"));

        let options = RankOptions { external: None, ..options };
        assert_eq!(rank("q", items, 10, options).unwrap().ranker, RankerMode::Heuristic);
    }

    #[test]
    fn score_file_parsing() {
        let text = "{\"id\":\"a\",\"scores\":[{\"fp\":\"x\",\"label\":1,\"logit\":0.5}]}\n\n{\"id\":\"b\",\"scores\":[]}\n";
        let scores = ExternalScores::from_reader(text.as_bytes()).unwrap();
        assert_eq!(scores.len(), 2);
        assert_eq!(scores.get("a").unwrap()[0].label, 1);
        let err = ExternalScores::from_reader("{\"id\":\"a\",\"scores\":[{\"fp\":\"x\",\"label\":2,\"logit\":0}]}".as_bytes());
        assert!(matches!(err, Err(ScoreFileError::Label { line: 1, label: 2 })));
        assert!(matches!(ExternalScores::from_reader("nope".as_bytes()), Err(ScoreFileError::Json { line: 1, .. })));
    }
}
