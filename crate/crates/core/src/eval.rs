//! Coverage evaluation: does any generated (or top-k ranked) cube item
//! reproduce the gold numeric answer?

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cube::CubeItem;
use crate::dataset::{AnswerType, GoldAnswer, QAInstance};
use crate::numeric::{parse_numeric, Scale};
use crate::question::Operator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-4, rel: 1e-3 }
    }
}

impl Tolerance {
    /// `|x - gold| <= max(abs, rel * |gold|)`
    pub fn accepts(&self, x: f64, gold: f64) -> bool {
        (x - gold).abs() <= self.abs.max(self.rel * gold.abs())
    }
}

/// The gold answer has no numeric value, so no cube item can reproduce it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("gold answer is not coverage-eligible")]
pub struct NotEligible;

struct GoldNumber {
    value: f64,
    scale: Option<Scale>,
}

fn gold_numbers(gold: &GoldAnswer) -> Vec<GoldNumber> {
    let declared = gold.scale.as_deref().and_then(Scale::from_word);
    gold.values
        .iter()
        .filter_map(|v| parse_numeric(v))
        .map(|n| GoldNumber {
            value: n.value(),
            scale: n.scale.or(declared),
        })
        .collect()
}

pub fn has_numeric_gold(gold: &GoldAnswer) -> bool {
    !gold_numbers(gold).is_empty()
}

/// Tries the raw gold value, the gold value with its scale applied, and the
/// item result ×100 when the gold is a percent and the item a ratio.
pub fn answer_matches(gold: &GoldAnswer, item: &CubeItem, tol: Tolerance) -> Result<bool, NotEligible> {
    let numbers = gold_numbers(gold);
    if numbers.is_empty() {
        return Err(NotEligible);
    }
    let r = item.result;
    Ok(numbers.iter().any(|g| {
        tol.accepts(r, g.value)
            || g.scale.is_some_and(|s| tol.accepts(r, g.value * s.factor()))
            || (g.scale == Some(Scale::Percent) && item.operator.is_ratio() && tol.accepts(r * 100.0, g.value))
    }))
}

// Gold operator extraction

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Op(char),
    Open,
    Close,
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[$€£]?\s*\d[\d,]*(?:\.\d+)?\s*%?|^[$€£]?\s*\.\d+\s*%?").expect("number regex"));

fn tokenize(text: &str) -> Option<Vec<Tok>> {
    let mut toks = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        if let Some(m) = NUMBER.find(rest) {
            toks.push(Tok::Num(parse_numeric(m.as_str().trim())?.magnitude));
            rest = rest[m.end()..].trim_start();
            continue;
        }
        let c = rest.chars().next()?;
        match c {
            '+' | '-' | '*' | '/' | 'x' | '×' | '÷' => toks.push(Tok::Op(match c {
                'x' | '×' => '*',
                '÷' => '/',
                c => c,
            })),
            '(' | '[' => toks.push(Tok::Open),
            ')' | ']' => toks.push(Tok::Close),
            _ => return None,
        }
        rest = rest[c.len_utf8()..].trim_start();
    }
    Some(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn expr(&mut self) -> Option<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Some(lhs)
    }

    fn term(&mut self) -> Option<Expr> {
        let mut lhs = self.atom()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.atom()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Some(lhs)
    }

    fn atom(&mut self) -> Option<Expr> {
        match self.peek()?.clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Some(Expr::Num(v))
            }
            Tok::Open => {
                self.pos += 1;
                let e = self.expr()?;
                (self.peek() == Some(&Tok::Close)).then(|| self.pos += 1)?;
                Some(e)
            }
            Tok::Op('-') => {
                self.pos += 1;
                match self.atom()? {
                    Expr::Num(v) => Some(Expr::Num(-v)),
                    e => Some(Expr::Sub(Box::new(Expr::Num(0.0)), Box::new(e))),
                }
            }
            _ => None,
        }
    }
}

fn parse_expr(text: &str) -> Option<Expr> {
    let toks = tokenize(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let e = parser.expr()?;
    (parser.pos == parser.toks.len()).then_some(e)
}

fn addends(e: &Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Add(a, b) => {
            addends(a, out);
            addends(b, out);
        }
        other => out.push(other.clone()),
    }
}

fn classify(e: &Expr) -> Option<Operator> {
    match e {
        Expr::Mul(inner, k) | Expr::Mul(k, inner) if **k == Expr::Num(100.0) && matches!(**inner, Expr::Div(..)) => {
            classify(inner)
        }
        Expr::Div(num, den) => {
            if let Expr::Sub(_, b) = &**num {
                if b == den {
                    return Some(Operator::ChangeRatio);
                }
            }
            let mut terms = Vec::new();
            addends(num, &mut terms);
            if terms.len() >= 2 && **den == Expr::Num(terms.len() as f64) {
                return Some(Operator::Average);
            }
            Some(Operator::Div)
        }
        Expr::Sub(..) => Some(Operator::Diff),
        Expr::Add(..) => Some(Operator::Sum),
        _ => None,
    }
}

/// Classifies an arithmetic derivation by its expression shape:
/// `(a-b)/b` is change_ratio, `(a+…+z)/n` with n terms is average, and
/// otherwise the top-level operator decides.
pub fn classify_derivation(derivation: &str) -> Option<Operator> {
    classify(&parse_expr(derivation)?)
}

pub fn is_arithmetic_expression(derivation: &str) -> bool {
    matches!(
        parse_expr(derivation),
        Some(Expr::Add(..) | Expr::Sub(..) | Expr::Mul(..) | Expr::Div(..))
    )
}

static SQL_COUNT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bcount\s*\(").expect("regex"));
static SQL_AVG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bavg\s*\(").expect("regex"));
static SQL_SUM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bsum\s*\(").expect("regex"));
static SQL_WHERE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bwhere\b[^()]*").expect("regex"));

/// Operator keywords in an SQL annotation. Arithmetic inside `where`
/// conditions is ignored.
pub fn classify_sql(sql: &str) -> Option<Operator> {
    let sql = sql.to_lowercase();
    if SQL_COUNT.is_match(&sql) {
        return Some(Operator::Count);
    }
    if SQL_AVG.is_match(&sql) {
        return Some(Operator::Average);
    }
    if SQL_SUM.is_match(&sql) {
        return Some(Operator::Sum);
    }
    let select = SQL_WHERE.replace_all(&sql, "");
    if select.contains(" - ") {
        Some(Operator::Diff)
    } else if select.contains(" / ") {
        Some(Operator::Div)
    } else if select.contains(" + ") {
        Some(Operator::Add)
    } else {
        None
    }
}

/// Gold operator from the derivation (or the count answer type) for
/// TAT-QA-style instances, or from the SQL annotation when present.
pub fn extract_gold_operator(instance: &QAInstance) -> Option<Operator> {
    if let Some(gold) = &instance.gold {
        if gold.answer_type == Some(AnswerType::Count) {
            return Some(Operator::Count);
        }
        if let Some(op) = gold.derivation.as_deref().and_then(classify_derivation) {
            return Some(op);
        }
    }
    instance.sql.as_deref().and_then(classify_sql)
}

// Coverage

/// Which instances count towards the coverage denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Aggregation/arithmetic questions with a numeric gold answer.
    Eligible,
    /// Eligible questions for which a non-empty cube was generated.
    CubeExtracted,
}

/// Membership rule for the aggregation/arithmetic subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EligibilityRule {
    /// `answer_type` is arithmetic or the derivation is an arithmetic expression.
    Arithmetic,
    /// Any numeric gold answer.
    NumericGold,
}

pub fn is_eligible(gold: &GoldAnswer, rule: EligibilityRule) -> bool {
    if !has_numeric_gold(gold) {
        return false;
    }
    match rule {
        EligibilityRule::NumericGold => true,
        EligibilityRule::Arithmetic => {
            gold.answer_type == Some(AnswerType::Arithmetic)
                || gold.derivation.as_deref().is_some_and(is_arithmetic_expression)
        }
    }
}

/// Coverage facts for one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceEval {
    pub id: String,
    pub eligible: bool,
    pub extracted: bool,
    pub covered: bool,
    /// Rank position of the first matching item in the ranked list.
    pub first_hit: Option<usize>,
    pub gold_operator: Option<Operator>,
}

pub fn evaluate_instance<'a>(
    instance: &QAInstance,
    generated: &[CubeItem],
    ranked: impl IntoIterator<Item = &'a CubeItem>,
    rule: EligibilityRule,
    tol: Tolerance,
) -> InstanceEval {
    let eligible = instance.gold.as_ref().is_some_and(|g| is_eligible(g, rule));
    let matches = |item: &CubeItem| {
        instance
            .gold
            .as_ref()
            .is_some_and(|g| answer_matches(g, item, tol).unwrap_or(false))
    };
    let (covered, first_hit) = if eligible {
        (generated.iter().any(matches), ranked.into_iter().position(matches))
    } else {
        (false, None)
    };
    InstanceEval {
        id: instance.id.clone(),
        eligible,
        extracted: eligible && !generated.is_empty(),
        covered,
        first_hit,
        gold_operator: extract_gold_operator(instance),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorTally {
    pub count: usize,
    pub covered: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KCoverage {
    pub k: usize,
    pub covered: usize,
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureTag {
    OutsideKnowledge,
    NonNumberPattern,
    RuleUncovered,
    Other,
}

impl FailureTag {
    pub const ALL: [FailureTag; 4] = [
        FailureTag::OutsideKnowledge,
        FailureTag::NonNumberPattern,
        FailureTag::RuleUncovered,
        FailureTag::Other,
    ];

    pub fn parse(text: &str) -> Option<Self> {
        let key: String = text
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect();
        match key.trim_end_matches("_cases") {
            "outside_knowledge" => Some(FailureTag::OutsideKnowledge),
            "non_number_pattern" => Some(FailureTag::NonNumberPattern),
            "rule_uncovered" => Some(FailureTag::RuleUncovered),
            "other" => Some(FailureTag::Other),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FailureTagError {
    #[error("reading failure tags: {0}")]
    Csv(#[from] csv::Error),
    #[error("failure tags line {line}: unknown tag {tag:?}")]
    UnknownTag { line: usize, tag: String },
    #[error("failure tags: missing `tag` column")]
    MissingColumn,
}

/// Manual annotations as `id,tag` CSV rows (header required).
pub fn load_failure_tags(path: &Path) -> Result<Vec<(String, FailureTag)>, FailureTagError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let tag_col = col("tag").ok_or(FailureTagError::MissingColumn)?;
    let id_col = col("id").unwrap_or(usize::from(tag_col == 0));
    let mut tags = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let tag_text = rec.get(tag_col).unwrap_or_default();
        let tag = FailureTag::parse(tag_text).ok_or_else(|| FailureTagError::UnknownTag {
            line: i + 2,
            tag: tag_text.to_string(),
        })?;
        tags.push((rec.get(id_col).unwrap_or_default().to_string(), tag));
    }
    Ok(tags)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub total: usize,
    pub eligible: usize,
    pub cube_extracted: usize,
    pub covered: usize,
    /// Denominator used for `coverage`, `per_operator` and `per_k`.
    pub denominator: Denominator,
    pub coverage: f64,
    pub coverage_eligible: f64,
    pub coverage_cube_extracted: f64,
    pub no_eligible_cases: bool,
    pub per_operator: BTreeMap<Operator, OperatorTally>,
    /// Eligible questions whose gold operator could not be classified.
    pub unclassified: OperatorTally,
    pub per_k: Vec<KCoverage>,
    pub failure_tags: BTreeMap<FailureTag, usize>,
    pub ingested: usize,
    pub skipped: usize,
    pub processed: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Counters {
    pub ingested: usize,
    pub skipped: usize,
}

/// Aggregates per-instance results. Ratios are 0 with `no_eligible_cases`
/// set when the denominator is empty.
pub fn evaluate_coverage(
    evals: &[InstanceEval],
    k_max: usize,
    denominator: Denominator,
    tags: &[(String, FailureTag)],
    counters: Counters,
) -> CoverageReport {
    let in_population = |e: &&InstanceEval| match denominator {
        Denominator::Eligible => e.eligible,
        Denominator::CubeExtracted => e.extracted,
    };
    let eligible = evals.iter().filter(|e| e.eligible).count();
    let cube_extracted = evals.iter().filter(|e| e.extracted).count();
    let covered = evals.iter().filter(|e| e.covered).count();
    let population: Vec<&InstanceEval> = evals.iter().filter(in_population).collect();
    let den = population.len();

    let mut per_operator: BTreeMap<Operator, OperatorTally> = BTreeMap::new();
    let mut unclassified = OperatorTally::default();
    for e in &population {
        let tally = match e.gold_operator {
            Some(op) => per_operator.entry(op).or_default(),
            None => &mut unclassified,
        };
        tally.count += 1;
        tally.covered += usize::from(e.covered);
    }

    let per_k = (1..=k_max)
        .map(|k| {
            let hits = population.iter().filter(|e| e.first_hit.is_some_and(|p| p < k)).count();
            KCoverage {
                k,
                covered: hits,
                coverage: ratio(hits, den),
            }
        })
        .collect();

    let mut failure_tags: BTreeMap<FailureTag, usize> = FailureTag::ALL.iter().map(|&t| (t, 0)).collect();
    for (_, tag) in tags {
        *failure_tags.entry(*tag).or_default() += 1;
    }

    CoverageReport {
        total: evals.len(),
        eligible,
        cube_extracted,
        covered,
        denominator,
        coverage: ratio(covered, den),
        coverage_eligible: ratio(covered, eligible),
        coverage_cube_extracted: ratio(covered, cube_extracted),
        no_eligible_cases: den == 0,
        per_operator,
        unclassified,
        per_k,
        failure_tags,
        ingested: counters.ingested,
        skipped: counters.skipped,
        processed: evals.len(),
    }
}

impl CoverageReport {
    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let den = match self.denominator {
            Denominator::Eligible => self.eligible,
            Denominator::CubeExtracted => self.cube_extracted,
        };
        out.push_str(&format!(
            "records: ingested {} skipped {} processed {}\n",
            self.ingested, self.skipped, self.processed
        ));
        out.push_str(&format!(
            "eligible {} cube-extracted {} covered {}\n",
            self.eligible, self.cube_extracted, self.covered
        ));
        if self.no_eligible_cases {
            out.push_str("coverage: no eligible cases\n");
        } else {
            out.push_str(&format!(
                "coverage: {:.4} ({} / {}, denominator {})\n",
                self.coverage,
                self.covered,
                den,
                match self.denominator {
                    Denominator::Eligible => "eligible",
                    Denominator::CubeExtracted => "cube-extracted",
                }
            ));
        }
        out.push_str(&format!(
            "coverage over eligible {:.4}, over cube-extracted {:.4}\n",
            self.coverage_eligible, self.coverage_cube_extracted
        ));
        if !self.per_k.is_empty() {
            out.push_str("coverage by k:\n");
            for k in &self.per_k {
                out.push_str(&format!("  k={:<3} {:.4} ({})\n", k.k, k.coverage, k.covered));
            }
        }
        if !self.per_operator.is_empty() || self.unclassified.count > 0 {
            out.push_str("by gold operator:\n");
            for (op, t) in &self.per_operator {
                out.push_str(&format!("  {:<13} {} / {}\n", op.name(), t.covered, t.count));
            }
            if self.unclassified.count > 0 {
                out.push_str(&format!(
                    "  {:<13} {} / {}\n",
                    "unclassified", self.unclassified.covered, self.unclassified.count
                ));
            }
        }
        if self.failure_tags.values().any(|&n| n > 0) {
            out.push_str("failure tags:\n");
            for (tag, n) in &self.failure_tags {
                out.push_str(&format!("  {tag:?}: {n}\n"));
            }
        }
        out
    }
}
