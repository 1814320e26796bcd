//! Fixed instances whose serializations are checked in under
//! `fixtures/golden/`.

use std::path::{Path, PathBuf};

use crate::cube::{generate_cube, CubeConfig};
use crate::rank::{rank, RankOptions};
use crate::serialize::{build_model_input, linearize_cube_item, linearize_table};
use crate::table::Table;

pub struct GoldenInstance {
    pub name: &'static str,
    pub question: &'static str,
    pub context: Option<&'static str>,
    pub table: Table,
    pub k: usize,
}

fn grid(rows: &[&[&str]]) -> Vec<Vec<String>> {
    rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect()
}

pub fn golden_instances() -> Vec<GoldenInstance> {
    let airports = Table::from_grid(
        "airports",
        grid(&[
            &["City", "Passengers", "Flights"],
            &["Los Angles", "1.2", "300"],
            &["Chicago", "0.9", "250"],
            &["Toronto", "0.5", "120"],
        ]),
    )
    .expect("golden table");
    let finance = Table::from_grid(
        "finance",
        grid(&[
            &["", "2019", "2018"],
            &["Revenue", "$1,200", "$1,000"],
            &["Cost of sales", "(300)", "(250)"],
            &["Segment A|B", "15%", "12%"],
        ]),
    )
    .expect("golden table");
    vec![
        GoldenInstance {
            name: "airports",
            question: "What is the difference in passengers between Los Angles and Toronto?",
            context: None,
            table: airports,
            k: 3,
        },
        GoldenInstance {
            name: "finance",
            question: "What was the percentage change in revenue from 2018 to 2019?",
            context: Some("Revenue grew on higher volumes. Amounts in thousands."),
            table: finance,
            k: 2,
        },
    ]
}

pub struct GoldenFile {
    pub name: String,
    pub contents: String,
}

/// Per instance: `<name>.table.txt`, `<name>.cubes.txt` (one ranked item
/// per line) and `<name>.input.txt`.
pub fn render_goldens() -> Vec<GoldenFile> {
    let mut files = Vec::new();
    for g in golden_instances() {
        let items = generate_cube(g.question, &g.table, &CubeConfig::default());
        let ranked = rank(g.question, items, g.k, RankOptions::default()).expect("k >= 1");
        let cubes: String = ranked.cube_items().map(|i| linearize_cube_item(i) + "\n").collect();
        let input = build_model_input(g.question, g.context, &g.table, ranked.cube_items());
        files.push(GoldenFile {
            name: format!("{}.table.txt", g.name),
            contents: linearize_table(&g.table) + "\n",
        });
        files.push(GoldenFile {
            name: format!("{}.cubes.txt", g.name),
            contents: cubes,
        });
        files.push(GoldenFile {
            name: format!("{}.input.txt", g.name),
            contents: input.text + "\n",
        });
    }
    files
}

pub fn default_golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("golden")
}

/// Names of golden files in `dir` that are missing or differ.
pub fn check_goldens(dir: &Path) -> Vec<String> {
    render_goldens()
        .into_iter()
        .filter(|f| std::fs::read_to_string(dir.join(&f.name)).ok().as_deref() != Some(f.contents.as_str()))
        .map(|f| f.name)
        .collect()
}

pub fn write_goldens(dir: &Path) -> std::io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for f in render_goldens() {
        std::fs::write(dir.join(&f.name), &f.contents)?;
        names.push(f.name);
    }
    Ok(names)
}
