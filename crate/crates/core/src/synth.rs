//! Random tables and questions for oracle checks and property tests.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::table::Table;

const HEADER_WORDS: &[&str] = &[
    "Revenue", "Cost", "Passengers", "Employees", "Assets", "Tax", "Score", "Points", "Votes", "Population",
    "Net income", "Gross margin", "Year 2019", "Year 2018", "Total",
];

const ROW_WORDS: &[&str] = &[
    "Toronto", "Los Angeles", "Berlin", "Paris", "North", "South", "Q1", "Q2", "Alpha", "Beta", "Gamma",
    "Segment A", "Segment B", "Other",
];

const TEXT_CELLS: &[&str] = &["DNF", "n/a", "yes", "no", "Won", "Lost", "-", "4 years"];

const QUESTION_TRIGGERS: &[&str] = &[
    "what is the total",
    "what is the difference in",
    "what is the average",
    "how many",
    "what is the ratio of",
    "what is the percentage change in",
    "what is the sum of",
    "which is",
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A numeric cell string in one of the supported surface forms.
pub fn random_number_text(rng: &mut impl Rng) -> String {
    let int: u32 = rng.random_range(0..5000);
    match rng.random_range(0..7) {
        0 => int.to_string(),
        1 => format!("{}.{:02}", int % 100, rng.random_range(0..100)),
        2 => format!("({})", int % 1000),
        3 => format!("{},{:03}", rng.random_range(1..99), int % 1000),
        4 => format!("{}%", int % 100),
        5 => format!("${}", int),
        _ => format!("-{}", int % 500),
    }
}

fn random_cell(rng: &mut impl Rng) -> String {
    match rng.random_range(0..10) {
        0 => String::new(),
        1 | 2 => TEXT_CELLS.choose(rng).expect("non-empty").to_string(),
        _ => random_number_text(rng),
    }
}

/// A table with 1..=`max_rows` rows and 1..=`max_cols` columns. Column 0
/// holds distinct row labels; other cells mix numbers, text and blanks.
pub fn random_table(rng: &mut impl Rng, id: &str, max_rows: usize, max_cols: usize) -> Table {
    let m = rng.random_range(1..=max_rows.max(1));
    let n = rng.random_range(1..=max_cols.max(1));
    let mut headers: Vec<String> = HEADER_WORDS.choose_multiple(rng, n).map(|s| s.to_string()).collect();
    headers[0] = "Name".into();
    let labels: Vec<&str> = ROW_WORDS.choose_multiple(rng, m).copied().collect();
    let rows = (0..m)
        .map(|r| {
            (0..n)
                .map(|c| if c == 0 && rng.random_bool(0.8) { labels[r].to_string() } else { random_cell(rng) })
                .collect()
        })
        .collect();
    Table::new(id, headers, rows).expect("synthetic tables are rectangular and non-empty")
}

/// A question that may trigger operators and mention headers or row labels.
pub fn random_question(rng: &mut impl Rng, table: &Table) -> String {
    let mut q = QUESTION_TRIGGERS.choose(rng).expect("non-empty").to_string();
    let cols: Vec<usize> = (0..table.num_cols()).collect();
    let n_cols = rng.random_range(0..=2);
    let picked_cols: Vec<usize> = cols.choose_multiple(rng, n_cols).copied().collect();
    for c in picked_cols {
        q.push(' ');
        q.push_str(table.column_header(c));
    }
    let rows: Vec<usize> = (0..table.num_rows()).collect();
    let n_rows = rng.random_range(0..=3);
    let picked: Vec<usize> = rows.choose_multiple(rng, n_rows).copied().collect();
    for (i, r) in picked.into_iter().enumerate() {
        q.push_str(if i == 0 { " for " } else { " and " });
        q.push_str(table.row_header(r));
    }
    q.push('?');
    q
}

/// `n` finite operands drawn from a mix of magnitudes and signs.
pub fn random_operands(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let magnitude = 10f64.powi(rng.random_range(-3..7));
            let v = rng.random_range(-1.0..1.0) * magnitude;
            if rng.random_bool(0.2) {
                v.round()
            } else {
                v
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_respect_bounds_and_are_seeded() {
        let a = random_table(&mut rng(7), "a", 6, 6);
        let b = random_table(&mut rng(7), "a", 6, 6);
        assert_eq!(a, b);
        for seed in 0..50 {
            let t = random_table(&mut rng(seed), "t", 6, 6);
            assert!((1..=6).contains(&t.num_rows()) && (1..=6).contains(&t.num_cols()));
            assert!(!random_question(&mut rng(seed), &t).is_empty());
        }
    }

    #[test]
    fn number_texts_parse() {
        let mut r = rng(1);
        for _ in 0..500 {
            let text = random_number_text(&mut r);
            assert!(crate::numeric::parse_numeric(&text).is_some(), "{text}");
        }
    }
}
