use std::collections::HashMap;

use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::Rng;
use tacube::cube::{generate, CubeConfig};
use tacube::golden::{check_goldens, default_golden_dir};
use tacube::serialize::{format_number, parse_cube_item, parse_table, CubeVocabulary};
use tacube::{build_model_input, linearize_cube_item, linearize_table, synth, CubeItem, Table};

// Disjoint pools so that every parse is unambiguous.
const COLS: &[&str] = &["Net income", "Gross margin", "Passengers", "Head count", "Cost|basis", "Tax"];
const ROWS: &[&str] = &["Los Angles", "Toronto", "North East", "Q1 2019", "Path\\a", "Other"];
const TEXTS: &[&str] = &["DNF", "n/a", "Did not start", "yes"];

fn vocab_table(rng: &mut impl Rng) -> Table {
    let m = rng.random_range(1..=5);
    let n = rng.random_range(2..=5);
    let mut headers: Vec<String> = COLS.choose_multiple(rng, n).map(|s| s.to_string()).collect();
    headers.sort();
    let labels: Vec<&str> = ROWS.choose_multiple(rng, m).copied().collect();
    let rows = (0..m)
        .map(|r| {
            (0..n)
                .map(|c| match (c, rng.random_range(0..6)) {
                    (0, _) => labels[r].to_string(),
                    (_, 0) => TEXTS.choose(rng).unwrap().to_string(),
                    _ => synth::random_number_text(rng),
                })
                .collect()
        })
        .collect();
    Table::new("t", headers, rows).unwrap()
}

/// Every row and column mentioned and no operator trigger, so the fallback
/// enables all operators and all patterns fire.
fn exhaustive_question(table: &Table) -> String {
    let mut q = String::from("show");
    for h in table.column_headers() {
        q.push(' ');
        q.push_str(h);
    }
    for r in 0..table.num_rows() {
        q.push(' ');
        q.push_str(table.row_header(r));
    }
    q
}

fn expected_operands(item: &CubeItem) -> Vec<String> {
    item.operands
        .iter()
        .map(|o| o.value.map_or_else(|| o.raw.trim().to_string(), format_number))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cube_items_round_trip(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let table = vocab_table(&mut rng);
        let items = generate(&exhaustive_question(&table), &table, &CubeConfig::default()).items;
        let vocab = CubeVocabulary::from_table(&table);
        for item in &items {
            let text = linearize_cube_item(item);
            let parsed = parse_cube_item(&text, &vocab).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
            prop_assert_eq!(parsed.operator, item.operator);
            prop_assert_eq!(&parsed.col_headers, &item.col_headers);
            prop_assert_eq!(&parsed.row_headers, &item.row_headers);
            prop_assert_eq!(parsed.operands, expected_operands(item));
            prop_assert_eq!(parsed.answer, format_number(item.result));
        }
    }

    #[test]
    fn distinct_items_serialize_distinctly(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let table = vocab_table(&mut rng);
        let items = generate(&exhaustive_question(&table), &table, &CubeConfig::default()).items;
        let mut seen: HashMap<String, &CubeItem> = HashMap::new();
        for item in &items {
            if let Some(other) = seen.insert(linearize_cube_item(item), item) {
                // Same string only for items that agree on every rendered field.
                prop_assert_eq!(other.operator, item.operator);
                prop_assert_eq!(&other.col_headers, &item.col_headers);
                prop_assert_eq!(&other.row_headers, &item.row_headers);
                prop_assert_eq!(expected_operands(other), expected_operands(item));
                prop_assert_eq!(format_number(other.result), format_number(item.result));
            }
        }
    }

    #[test]
    fn tables_round_trip(
        headers in prop::collection::vec("[a-zA-Z0-9 |\\\\.,$%()-]{0,10}", 1..5),
        cells in prop::collection::vec("[a-zA-Z0-9 |\\\\.,$%()-]{0,10}", 1..25),
    ) {
        let n = headers.len();
        let rows: Vec<Vec<String>> = cells.chunks(n).filter(|c| c.len() == n).map(|c| c.to_vec()).collect();
        prop_assume!(!rows.is_empty());
        let table = Table::new("t", headers.clone(), rows.clone()).unwrap();
        let parsed = parse_table(&linearize_table(&table)).unwrap();
        prop_assert_eq!(parsed.headers, headers);
        prop_assert_eq!(parsed.rows, rows);
    }

    #[test]
    fn model_input_grows_linearly(seed in any::<u64>(), k in 0usize..8) {
        let mut rng = synth::rng(seed);
        let table = vocab_table(&mut rng);
        let question = exhaustive_question(&table);
        let items = generate(&question, &table, &CubeConfig::default()).items;
        let chosen: Vec<&CubeItem> = items.iter().take(k).collect();
        let base = build_model_input(&question, Some("ctx"), &table, []);
        let full = build_model_input(&question, Some("ctx"), &table, chosen.iter().copied());
        prop_assert!(full.segments_cover_text());
        prop_assert_eq!(full.segments.cubes.len(), chosen.len());
        let cubes: usize = chosen.iter().map(|i| linearize_cube_item(i).len()).sum();
        if chosen.is_empty() {
            prop_assert_eq!(&full.text, &base.text);
        } else {
            prop_assert_eq!(full.text.len(), base.text.len() + 1 + cubes + 3 * (chosen.len() - 1));
            prop_assert!(full.text.len() <= base.text.len() + cubes + 3 * chosen.len());
            prop_assert!(full.text.starts_with(&base.text));
        }
    }
}

#[test]
fn round_trip_fixtures_exercise_every_operator() {
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..20 {
        let table = vocab_table(&mut synth::rng(seed));
        seen.extend(generate(&exhaustive_question(&table), &table, &CubeConfig::default()).items.iter().map(|i| i.operator));
    }
    assert_eq!(seen, tacube::Operator::all());
}

#[test]
fn golden_files_match() {
    let stale = check_goldens(&default_golden_dir());
    assert!(stale.is_empty(), "stale golden files: {stale:?}");
}
