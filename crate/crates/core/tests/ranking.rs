use std::collections::HashMap;

use proptest::prelude::*;
use tacube::cube::{generate, CubeConfig, Operand};
use tacube::rank::{rank_with_scorer, HeuristicScorer, RankOptions, TfIdfConfig};
use tacube::{linearize_cube_item, normalize, rank, score_heuristic, synth, CellRef, CubeItem, Operator, Pattern};

/// Straight TF-IDF cosine: raw counts, idf = ln(1 + N/df), N counting the
/// question plus every document.
fn oracle_score(question: &str, docs: &[String], doc: &str) -> f64 {
    let corpus: Vec<Vec<String>> = std::iter::once(question.to_string())
        .chain(docs.iter().cloned())
        .map(|d| normalize(&d))
        .collect();
    let n = corpus.len() as f64;
    let df = |t: &str| corpus.iter().filter(|d| d.iter().any(|x| x == t)).count() as f64;
    let weights = |text: &str| {
        let mut tf: HashMap<String, f64> = HashMap::new();
        for t in normalize(text) {
            *tf.entry(t).or_default() += 1.0;
        }
        tf.into_iter()
            .map(|(t, c)| {
                let d = df(&t);
                let w = if d == 0.0 { 0.0 } else { c * (1.0 + n / d).ln() };
                (t, w)
            })
            .collect::<HashMap<_, _>>()
    };
    let (q, d) = (weights(question), weights(doc));
    let norm = |v: &HashMap<String, f64>| v.values().map(|w| w * w).sum::<f64>().sqrt();
    let (nq, nd) = (norm(&q), norm(&d));
    if nq == 0.0 || nd == 0.0 {
        return 0.0;
    }
    q.iter().map(|(t, w)| w * d.get(t).unwrap_or(&0.0)).sum::<f64>() / (nq * nd)
}

fn sum_item(col: &str, row: &str) -> CubeItem {
    let operand = |r: usize, v: f64| Operand {
        cell: CellRef::new(r, 1),
        raw: v.to_string(),
        value: Some(v),
    };
    CubeItem {
        operator: Operator::Sum,
        pattern: Pattern::SameColumn,
        col_headers: vec![col.into()],
        row_headers: vec![row.into()],
        operands: vec![operand(0, 10.0), operand(1, 20.0)],
        result: 30.0,
        scale_hint: None,
    }
}

#[test]
fn header_overlap_orders_items() {
    // Question tokens {revenue, 2019}; A = {cube, sum, revenue, 2019, 10, 20,
    // answer, 30}; B swaps in cost and 2018. N = 3 and every term of A has
    // df = 2, so all weights are ln 2.5: cos(q, A) = 2 / (sqrt 2 * sqrt 8) = 0.5.
    let a = sum_item("Revenue", "2019");
    let b = sum_item("Cost", "2018");
    let items = vec![b.clone(), a.clone()];
    assert!((score_heuristic("Revenue, 2019?", &a, &items) - 0.5).abs() < 1e-12);
    assert_eq!(score_heuristic("Revenue, 2019?", &b, &items), 0.0);
    let ranked = rank("Revenue, 2019?", items, 2, RankOptions::default()).unwrap();
    assert_eq!(ranked.items[0].item, a);
}

#[test]
fn identical_sequence_scores_one() {
    let a = sum_item("Revenue", "2019");
    let text = linearize_cube_item(&a);
    assert!((score_heuristic(&text, &a, std::slice::from_ref(&a)) - 1.0).abs() < 1e-12);
}

fn instance(seed: u64) -> (String, Vec<CubeItem>) {
    let mut rng = synth::rng(seed);
    let table = synth::random_table(&mut rng, "t", 6, 6);
    let question = synth::random_question(&mut rng, &table);
    let items = generate(&question, &table, &CubeConfig::default()).items;
    (question, items)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scorer_matches_oracle(seed in any::<u64>()) {
        let (question, items) = instance(seed);
        let docs: Vec<String> = items.iter().map(linearize_cube_item).collect();
        let scorer = HeuristicScorer::fit(&question, &docs, TfIdfConfig::default());
        for doc in &docs {
            let s = scorer.score(doc);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((s - oracle_score(&question, &docs, doc)).abs() < 1e-9);
        }
    }

    #[test]
    fn scores_ignore_case_and_punctuation(seed in any::<u64>()) {
        let (question, items) = instance(seed);
        let shouted = format!("{}!!", question.to_uppercase().replace(' ', " , "));
        for item in &items {
            let a = score_heuristic(&question, item, &items);
            let b = score_heuristic(&shouted, item, &items);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ranking_is_stable_sorted_and_truncated(seed in any::<u64>(), k in 1usize..15) {
        let (question, items) = instance(seed);
        let ranked = rank(&question, items.clone(), k, RankOptions::default()).unwrap();
        prop_assert!(ranked.items.len() <= k);
        prop_assert_eq!(ranked.items.len(), k.min(items.len()));
        for w in ranked.items.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
            if w[0].score == w[1].score {
                prop_assert!(w[0].index < w[1].index);
            }
        }
        for e in &ranked.items {
            prop_assert_eq!(&e.item, &items[e.index]);
        }
        // Larger k extends the list without reordering it.
        let longer = rank(&question, items, k + 3, RankOptions::default()).unwrap();
        prop_assert_eq!(&longer.items[..ranked.items.len()], &ranked.items[..]);
    }

    #[test]
    fn ranking_is_idempotent_for_a_fixed_scorer(seed in any::<u64>(), k in 1usize..15) {
        let (question, items) = instance(seed);
        let docs: Vec<String> = items.iter().map(linearize_cube_item).collect();
        let scorer = HeuristicScorer::fit(&question, &docs, TfIdfConfig::default());
        let once = rank_with_scorer(&scorer, items, k).unwrap();
        let again = rank_with_scorer(&scorer, once.cube_items().cloned().collect(), k).unwrap();
        let a: Vec<_> = once.items.iter().map(|e| (&e.item, e.score)).collect();
        let b: Vec<_> = again.items.iter().map(|e| (&e.item, e.score)).collect();
        prop_assert_eq!(a, b);
    }
}
