//! Question analysis: tokenization, operator triggers, and alignment of
//! question mentions with table rows and columns.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::table::Table;

const DEFAULT_LEXICON: &str = include_str!("../config/lexicon.toml");

/// Default per-token similarity a question token needs to match a table token.
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Count,
    Sum,
    Average,
    Add,
    Diff,
    Div,
    ChangeRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorGroup {
    /// Aggregations over a selection (`cube`).
    Aggr,
    /// Extension operators over filtered operands (`cube_ext`).
    Ext,
}

impl Operator {
    pub const ALL: [Operator; 7] = [
        Operator::Count,
        Operator::Sum,
        Operator::Average,
        Operator::Add,
        Operator::Diff,
        Operator::Div,
        Operator::ChangeRatio,
    ];

    pub fn group(self) -> OperatorGroup {
        match self {
            Operator::Count | Operator::Sum | Operator::Average => OperatorGroup::Aggr,
            Operator::Add | Operator::Diff | Operator::Div | Operator::ChangeRatio => {
                OperatorGroup::Ext
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Operator::Count => "count",
            Operator::Sum => "sum",
            Operator::Average => "average",
            Operator::Add => "add",
            Operator::Diff => "diff",
            Operator::Div => "div",
            Operator::ChangeRatio => "change_ratio",
        }
    }

    /// Operators that take exactly two operands in a fixed order.
    pub fn is_binary(self) -> bool {
        matches!(self, Operator::Diff | Operator::Div | Operator::ChangeRatio)
    }

    /// Whether operand order is irrelevant to the result.
    pub fn is_commutative(self) -> bool {
        !self.is_binary()
    }

    /// Whether the operator produces a ratio rather than a quantity.
    pub fn is_ratio(self) -> bool {
        matches!(self, Operator::Div | Operator::ChangeRatio)
    }

    pub fn all() -> BTreeSet<Operator> {
        Self::ALL.into_iter().collect()
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown operator {0:?}")]
pub struct UnknownOperator(pub String);

impl FromStr for Operator {
    type Err = UnknownOperator;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operator::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| UnknownOperator(s.to_string()))
    }
}

/// Lowercases, strips punctuation and splits on whitespace. Commas and
/// periods between two digits are kept so numerals survive verbatim.
pub fn normalize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
            continue;
        }
        let numeral_joint = matches!(c, ',' | '.')
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if numeral_joint {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("reading lexicon {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing lexicon: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("lexicon rule {0} has neither phrases nor all_of groups")]
    EmptyRule(usize),
}

#[derive(Debug, Clone, Deserialize)]
struct LexiconFile {
    #[serde(default)]
    rule: Vec<RuleFile>,
}

#[derive(Debug, Clone, Deserialize)]
struct RuleFile {
    operators: Vec<Operator>,
    #[serde(default)]
    phrases: Vec<String>,
    #[serde(default)]
    all_of: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerRule {
    pub operators: Vec<Operator>,
    pub phrases: Vec<Vec<String>>,
    pub all_of: Vec<Vec<String>>,
}

/// Keyword lexicon mapping question phrases to operators.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerLexicon {
    pub rules: Vec<TriggerRule>,
}

impl Default for TriggerLexicon {
    fn default() -> Self {
        Self::from_toml(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl TriggerLexicon {
    pub fn from_toml(text: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = toml::from_str(text)?;
        let mut rules = Vec::with_capacity(file.rule.len());
        for (i, rule) in file.rule.into_iter().enumerate() {
            if rule.phrases.is_empty() && rule.all_of.is_empty() {
                return Err(LexiconError::EmptyRule(i));
            }
            rules.push(TriggerRule {
                operators: rule.operators,
                phrases: rule
                    .phrases
                    .iter()
                    .map(|p| normalize(p))
                    .filter(|p| !p.is_empty())
                    .collect(),
                all_of: rule
                    .all_of
                    .iter()
                    .map(|group| group.iter().flat_map(|w| normalize(w)).collect())
                    .collect(),
            });
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

/// A lexicon hit: which phrase fired which operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trigger {
    pub operator: Operator,
    pub phrase: String,
}

/// Detects operators whose trigger phrases occur in `tokens`, returning the
/// operator set together with the hits that produced it.
pub fn detect_triggers(tokens: &[String], lexicon: &TriggerLexicon) -> Vec<Trigger> {
    let mut hits = Vec::new();
    for rule in &lexicon.rules {
        let phrase = rule
            .phrases
            .iter()
            .find(|p| contains_ngram(tokens, p))
            .map(|p| p.join(" "))
            .or_else(|| {
                let fired = !rule.all_of.is_empty()
                    && rule
                        .all_of
                        .iter()
                        .all(|group| group.iter().any(|w| tokens.contains(w)));
                fired.then(|| {
                    rule.all_of
                        .iter()
                        .filter_map(|group| group.iter().find(|w| tokens.contains(w)).cloned())
                        .collect::<Vec<_>>()
                        .join(" + ")
                })
            });
        if let Some(phrase) = phrase {
            for &operator in &rule.operators {
                hits.push(Trigger {
                    operator,
                    phrase: phrase.clone(),
                });
            }
        }
    }
    hits
}

pub fn detect_operators(tokens: &[String], lexicon: &TriggerLexicon) -> BTreeSet<Operator> {
    detect_triggers(tokens, lexicon)
        .into_iter()
        .map(|t| t.operator)
        .collect()
}

fn contains_ngram(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "before", "between", "both", "but", "by", "can", "could", "did", "do", "does", "during",
    "each", "for", "from", "had", "has", "have", "he", "her", "his", "how", "i", "if", "in",
    "into", "is", "it", "its", "many", "much", "of", "on", "or", "other", "s", "she", "so",
    "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those",
    "to", "total", "up", "vs", "was", "were", "what", "when", "where", "which", "while", "who",
    "whom", "why", "will", "with", "would",
];

fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

fn is_numeral(token: &str) -> bool {
    token.bytes().any(|b| b.is_ascii_digit())
}

/// Similarity of a question token and a table token: 1 for equality, the
/// normalized edit similarity for longer alphabetic tokens, 0 otherwise.
pub fn token_similarity(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    if is_numeral(a) || is_numeral(b) || a.chars().count() < 4 || b.chars().count() < 4 {
        return 0.0;
    }
    strsim::normalized_levenshtein(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Row,
    Column,
}

/// Best alignment found between a question n-gram and a table string.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchEvidence {
    pub axis: Axis,
    pub index: usize,
    pub ngram: String,
    pub table_string: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Candidates {
    pub rows: Vec<Candidate>,
    pub cols: Vec<Candidate>,
    pub evidence: Vec<MatchEvidence>,
}

/// Scores how well `target` (a header or cell string) is mentioned in the
/// question. Every aligned token pair must reach `threshold`, the aligned
/// run must contain a content word, and the score is the summed similarity
/// over the run divided by the target's token count (1.0 for a verbatim
/// mention of the whole string).
fn mention_score(question: &[String], target: &[String], threshold: f64) -> Option<(f64, String)> {
    let mut best: Option<(f64, String)> = None;
    for qi in 0..question.len() {
        for ti in 0..target.len() {
            let mut total = 0.0;
            let mut content = false;
            let mut len = 0;
            while qi + len < question.len() && ti + len < target.len() {
                let sim = token_similarity(&question[qi + len], &target[ti + len]);
                if sim < threshold {
                    break;
                }
                total += sim;
                content |= !is_stopword(&target[ti + len]);
                len += 1;
                if content {
                    let score = total / target.len() as f64;
                    if best.as_ref().is_none_or(|(b, _)| score > *b) {
                        best = Some((score, question[qi..qi + len].join(" ")));
                    }
                }
            }
        }
    }
    best
}

fn ordered(mut scored: Vec<Candidate>) -> Vec<Candidate> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    scored
}

/// Aligns question tokens with the table. A row is a candidate when its
/// row-header cell or any of its cells is mentioned; a column when its
/// header or any of its cells is mentioned. Candidates are ordered by
/// descending score, then ascending index.
pub fn match_candidates(tokens: &[String], table: &Table, threshold: f64) -> Candidates {
    let mut row_best: Vec<Option<MatchEvidence>> = vec![None; table.num_rows()];
    let mut col_best: Vec<Option<MatchEvidence>> = vec![None; table.num_cols()];

    let offer = |slot: &mut Option<MatchEvidence>, axis, index, text: &str, score: f64, ngram: String| {
        if slot.as_ref().is_none_or(|e| score > e.score) {
            *slot = Some(MatchEvidence {
                axis,
                index,
                ngram,
                table_string: text.to_string(),
                score,
            });
        }
    };

    for (c, header) in table.column_headers().iter().enumerate() {
        if let Some((score, ngram)) = mention_score(tokens, &normalize(header), threshold) {
            offer(&mut col_best[c], Axis::Column, c, header, score, ngram);
        }
    }
    for cell in table.cells() {
        let cell_tokens = normalize(&cell.raw);
        if let Some((score, ngram)) = mention_score(tokens, &cell_tokens, threshold) {
            let (r, c) = (cell.row_index, cell.col_index);
            offer(&mut row_best[r], Axis::Row, r, &cell.raw, score, ngram.clone());
            offer(&mut col_best[c], Axis::Column, c, &cell.raw, score, ngram);
        }
    }

    let to_candidates = |best: &[Option<MatchEvidence>]| {
        ordered(
            best.iter()
                .flatten()
                .map(|e| Candidate {
                    index: e.index,
                    score: e.score,
                })
                .collect(),
        )
    };
    let rows = to_candidates(&row_best);
    let cols = to_candidates(&col_best);
    let evidence = row_best.into_iter().chain(col_best).flatten().collect();
    Candidates {
        rows,
        cols,
        evidence,
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub lexicon: TriggerLexicon,
    pub match_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            lexicon: TriggerLexicon::default(),
            match_threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionAnalysis {
    pub raw: String,
    pub tokens: Vec<String>,
    pub operators: BTreeSet<Operator>,
    pub triggers: Vec<Trigger>,
    pub candidate_rows: Vec<usize>,
    pub candidate_cols: Vec<usize>,
    pub match_evidence: Vec<MatchEvidence>,
}

pub fn analyze(question: &str, table: &Table, config: &AnalysisConfig) -> QuestionAnalysis {
    let tokens = normalize(question);
    let triggers = detect_triggers(&tokens, &config.lexicon);
    let operators = triggers.iter().map(|t| t.operator).collect();
    let candidates = match_candidates(&tokens, table, config.match_threshold);
    QuestionAnalysis {
        raw: question.to_string(),
        tokens,
        operators,
        triggers,
        candidate_rows: candidates.rows.iter().map(|c| c.index).collect(),
        candidate_cols: candidates.cols.iter().map(|c| c.index).collect(),
        match_evidence: candidates.evidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        normalize(s)
    }

    fn ops(s: &str) -> Vec<Operator> {
        detect_operators(&toks(s), &TriggerLexicon::default())
            .into_iter()
            .collect()
    }

    fn airports() -> Table {
        let rows = [
            ["Atlanta", "1.5", "Delta"],
            ["Los Angeles", "1.2", "United"],
            ["Chicago", "1.1", "United"],
            ["Toronto", "0.5", "Air Canada"],
        ];
        Table::new(
            "airports",
            vec!["City".into(), "Passengers".into(), "Carrier".into()],
            rows.iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn stopwords_sorted() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            toks("What is the difference in Passengers?"),
            ["what", "is", "the", "difference", "in", "passengers"]
        );
        assert!(toks("").is_empty());
        assert_eq!(
            toks("change ratio 2019 vs 2018"),
            ["change", "ratio", "2019", "vs", "2018"]
        );
        assert_eq!(toks("Revenue of $1,234.5, right?"), ["revenue", "of", "1,234.5", "right"]);
    }

    #[test]
    fn operator_groups() {
        for op in Operator::ALL {
            let expected = match op {
                Operator::Count | Operator::Sum | Operator::Average => OperatorGroup::Aggr,
                _ => OperatorGroup::Ext,
            };
            assert_eq!(op.group(), expected);
            assert_eq!(op.name().parse::<Operator>().unwrap(), op);
        }
        assert_ne!(Operator::Add, Operator::Sum);
    }

    #[test]
    fn detects_canonical_triggers() {
        assert_eq!(ops("what is the difference between A and B"), [Operator::Diff]);
        assert_eq!(ops("what was the average time"), [Operator::Average]);
        assert!(ops("list all the countries").is_empty());
        assert_eq!(ops("how many medals"), [Operator::Count]);
        assert_eq!(ops("what is the total revenue"), [Operator::Sum, Operator::Add]);
        assert_eq!(
            ops("what is the percentage change in revenue"),
            [Operator::Diff, Operator::ChangeRatio]
        );
        assert!(ops("by what percent did revenue increase").contains(&Operator::ChangeRatio));
    }

    #[test]
    fn custom_lexicon_from_toml() {
        let lex = TriggerLexicon::from_toml(
            "[[rule]]\noperators = [\"div\"]\nphrases = [\"Per Share\"]\n",
        )
        .unwrap();
        assert_eq!(
            detect_operators(&toks("earnings per share"), &lex),
            [Operator::Div].into_iter().collect()
        );
        assert!(TriggerLexicon::from_toml("[[rule]]\noperators = [\"div\"]\n").is_err());
        assert!(TriggerLexicon::from_toml("[[rule]]\noperators = [\"mul\"]\nphrases=[\"x\"]").is_err());
    }

    #[test]
    fn running_example_rows() {
        let t = airports();
        let c = match_candidates(
            &toks("What is the difference in passengers between Los Angles and Toronto?"),
            &t,
            DEFAULT_MATCH_THRESHOLD,
        );
        let rows: BTreeSet<usize> = c.rows.iter().map(|c| c.index).collect();
        assert_eq!(rows, [1, 3].into_iter().collect());
        assert!(c.cols.contains(&Candidate { index: 1, score: 1.0 }));
    }

    #[test]
    fn no_overlap_no_candidates() {
        let c = match_candidates(&toks("list every zebra"), &airports(), DEFAULT_MATCH_THRESHOLD);
        assert!(c.rows.is_empty() && c.cols.is_empty());
    }

    #[test]
    fn exact_numeric_header_is_top_candidate() {
        let t = Table::new(
            "t",
            vec!["Item".into(), "2019".into(), "2018 restated".into()],
            vec![vec!["Revenue".into(), "10".into(), "9".into()]],
        )
        .unwrap();
        let c = match_candidates(&toks("what was it in 2019 and 2018"), &t, DEFAULT_MATCH_THRESHOLD);
        assert_eq!(c.cols[0], Candidate { index: 1, score: 1.0 });
        assert_eq!(c.cols[1].index, 2);
        assert_eq!(c.cols[1].score, 0.5);
    }

    #[test]
    fn stopword_only_mentions_do_not_match() {
        let t = Table::new("t", vec!["The".into(), "Of".into()], vec![vec!["in".into(), "a".into()]]).unwrap();
        let c = match_candidates(&toks("what is the value of a thing in it"), &t, DEFAULT_MATCH_THRESHOLD);
        assert!(c.rows.is_empty() && c.cols.is_empty());
    }

    proptest! {
        #[test]
        fn detection_is_monotone(
            a in prop::collection::vec("[a-z]{1,8}|how many|total|average|change|ratio|percent|increase", 0..8),
            b in prop::collection::vec("[a-z]{1,8}|number of|difference|mean|growth rate|percentage", 0..8),
        ) {
            let lex = TriggerLexicon::default();
            let ta = toks(&a.join(" "));
            let tb = toks(&b.join(" "));
            let base = detect_operators(&ta, &lex);
            let mut longer = ta.clone();
            longer.extend(tb.iter().cloned());
            prop_assert!(base.is_subset(&detect_operators(&longer, &lex)));
            let mut prefixed = tb.clone();
            prefixed.extend(ta.iter().cloned());
            prop_assert!(base.is_subset(&detect_operators(&prefixed, &lex)));
        }

        #[test]
        fn matching_ignores_case_and_punctuation(words in prop::collection::vec("[A-Za-z]{2,9}|Los Angeles|Toronto|Passengers|Delta", 1..6)) {
            let t = airports();
            let plain = words.join(" ");
            let noisy: String = words
                .iter()
                .map(|w| format!("{}?!", w.to_uppercase()))
                .collect::<Vec<_>>()
                .join(", ");
            let a = match_candidates(&toks(&plain), &t, DEFAULT_MATCH_THRESHOLD);
            let b = match_candidates(&toks(&noisy), &t, DEFAULT_MATCH_THRESHOLD);
            prop_assert_eq!(a, b);
        }
    }
}
