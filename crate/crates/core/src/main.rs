use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::{Args, Parser, Subcommand};

use tacube::config::{PipelineConfig, CONFIG_ENV, DATA_DIR_ENV};
use tacube::cube::{check_against_oracle, generate, CubeConfig, OracleBounds};
use tacube::dataset::DatasetFormat;
use tacube::golden::{check_goldens, default_golden_dir, write_goldens};
use tacube::pipeline::{execute, run_pipeline, write_artifacts};
use tacube::rank::RankerMode;
use tacube::synth;

#[derive(Parser)]
#[command(name = "tacube", version, about = "Cube pre-computation, ranking and coverage for table QA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write augmented.jsonl, coverage.json and summary.txt.
    Run(DataArgs),
    /// Compute the coverage report only.
    Coverage(DataArgs),
    /// Compare generated cubes with brute-force enumeration on random tables.
    OracleCheck(OracleArgs),
    /// Check (or rewrite) the golden serialization files.
    Goldens(GoldenArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Config file (TOML or JSON).
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Dataset file, or a dataset name (tatqa, wtq) resolved with --split and --data-dir.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    format: Option<DatasetFormat>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// SQL annotation sidecar for WTQ.
    #[arg(long)]
    sql: Option<PathBuf>,
    /// Question for a CSV table (repeatable).
    #[arg(long = "question")]
    questions: Vec<String>,
    #[arg(long)]
    ranker: Option<RankerMode>,
    /// External score file (JSONL).
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(short = 'k', long = "k")]
    k: Option<usize>,
    #[arg(long)]
    tol_abs: Option<f64>,
    #[arg(long)]
    tol_rel: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Manual failure annotations (CSV with id,tag columns).
    #[arg(long)]
    failure_tags: Option<PathBuf>,
    /// Use every operator when the question triggers none.
    #[arg(long)]
    fallback: Option<bool>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 1000)]
    tables: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    max_rows: usize,
    #[arg(long, default_value_t = 6)]
    max_cols: usize,
}

#[derive(Args)]
struct GoldenArgs {
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Rewrite the files instead of checking them.
    #[arg(long)]
    write: bool,
}

impl DataArgs {
    fn into_config(self) -> Result<PipelineConfig> {
        let mut c = PipelineConfig::load_or_default(self.config.as_deref())?;
        if let Some(d) = self.dataset {
            match d.parse::<DatasetFormat>() {
                Ok(format) if !Path::new(&d).exists() => c.format = Some(format),
                _ => c.dataset = Some(PathBuf::from(d)),
            }
        }
        if self.format.is_some() {
            c.format = self.format;
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { c.$field = Some(v); })* };
        }
        set!(split, data_dir, sql, scores, k, workers, failure_tags);
        if !self.questions.is_empty() {
            c.questions = Some(self.questions);
        }
        if let Some(r) = self.ranker {
            c.ranker = r;
        }
        if let Some(v) = self.tol_abs {
            c.tolerance.abs = v;
        }
        if let Some(v) = self.tol_rel {
            c.tolerance.rel = v;
        }
        if let Some(d) = self.out_dir {
            c.out_dir = d;
        }
        if self.fallback.is_some() {
            c.fallback_all_operators = self.fallback;
        }
        c.validate()?;
        Ok(c)
    }
}

fn oracle_check(args: OracleArgs) -> Result<bool> {
    let mut rng = synth::rng(args.seed);
    let config = CubeConfig::default();
    let (mut items, mut violations) = (0usize, 0usize);
    for i in 0..args.tables {
        let table = synth::random_table(&mut rng, &format!("t{i}"), args.max_rows, args.max_cols);
        let question = synth::random_question(&mut rng, &table);
        let cube = generate(&question, &table, &config);
        items += cube.items.len();
        let found = check_against_oracle(&table, &cube.items, &cube.operators, OracleBounds::default())?;
        for v in &found {
            println!("table {i} {question:?}: {} {:?}: {}", v.item.operator, v.item.operand_refs(), v.reason);
        }
        violations += found.len();
    }
    println!("checked {} tables, {items} items, {violations} violations", args.tables);
    Ok(violations == 0)
}

fn goldens(args: GoldenArgs) -> Result<bool> {
    let dir = args.dir.unwrap_or_else(default_golden_dir);
    if args.write {
        let written = write_goldens(&dir).map_err(|e| anyhow!("writing {}: {e}", dir.display()))?;
        for name in written {
            println!("wrote {}", dir.join(name).display());
        }
        return Ok(true);
    }
    let stale = check_goldens(&dir);
    for name in &stale {
        println!("mismatch: {}", dir.join(name).display());
    }
    if stale.is_empty() {
        println!("golden files match");
    }
    Ok(stale.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let config = args.into_config()?;
            let out = run_pipeline(&config)?;
            print!("{}", out.summary());
            println!("artifacts written to {}", config.out_dir.display());
            Ok(true)
        }
        Command::Coverage(args) => {
            let explicit_out = args.out_dir.is_some();
            let config = args.into_config()?;
            let out = execute(&config)?;
            print!("{}", out.summary());
            if explicit_out {
                write_artifacts(&out, &config.out_dir, false)?;
            }
            Ok(true)
        }
        Command::OracleCheck(args) => {
            if args.max_rows == 0 || args.max_cols == 0 {
                bail!("table bounds must be positive");
            }
            oracle_check(args)
        }
        Command::Goldens(args) => goldens(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
