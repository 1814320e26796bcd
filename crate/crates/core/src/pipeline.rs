//! End-to-end batch run: ingestion, generation, ranking, serialization and
//! coverage evaluation, with JSONL/JSON/text artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, PipelineConfig};
use crate::cube::{generate, CubeConfig, Pattern};
use crate::dataset::{ingest_csv, ingest_tatqa, ingest_wtq, load_sql_sidecar, DatasetFormat, IngestError, IngestReport, QAInstance, RecordIssue};
use crate::eval::{
    evaluate_coverage, evaluate_instance, load_failure_tags, Counters, CoverageReport, Denominator, EligibilityRule,
    InstanceEval, Tolerance,
};
use crate::question::Operator;
use crate::rank::{rank, ExternalScores, RankOptions, RankedCube, RankerMode, TfIdfConfig};
use crate::serialize::{build_model_input, Segments};
use crate::table::CellRef;

pub const AUGMENTED_FILE: &str = "augmented.jsonl";
pub const COVERAGE_FILE: &str = "coverage.json";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{0}")]
    Scores(#[from] crate::rank::ScoreFileError),
    #[error("{0}")]
    FailureTags(#[from] crate::eval::FailureTagError),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("building worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordOperand {
    pub cell: CellRef,
    pub raw: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordItem {
    pub operator: Operator,
    pub pattern: Pattern,
    pub operands: Vec<RecordOperand>,
    pub result: f64,
    pub score: f64,
    pub fp: String,
}

/// One line of the augmented JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedRecord {
    pub id: String,
    pub input: String,
    pub segments: Segments,
    pub cube_items: Vec<RecordItem>,
    /// Absent when the gold answer is not coverage-eligible.
    pub covered: Option<bool>,
    pub generated: usize,
    pub ranker: RankerMode,
}

/// Settings resolved for one dataset format.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub cube: CubeConfig,
    pub k: usize,
    pub ranker: RankerMode,
    pub tfidf: TfIdfConfig,
    pub tolerance: Tolerance,
    pub eligibility: EligibilityRule,
    pub denominator: Denominator,
}

impl RunSettings {
    pub fn from_config(config: &PipelineConfig, format: DatasetFormat) -> Result<Self, ConfigError> {
        Ok(Self {
            cube: config.cube_config(format)?,
            k: config.k(format),
            ranker: config.ranker,
            tfidf: config.tfidf,
            tolerance: config.tolerance,
            eligibility: config.eligibility(format),
            denominator: config.denominator(format),
        })
    }
}

#[derive(Debug, Clone)]
pub struct InstanceResult {
    pub record: AugmentedRecord,
    pub eval: InstanceEval,
    pub ranked: RankedCube,
}

/// Runs one instance end to end. Pure apart from logging.
pub fn process_instance(instance: &QAInstance, settings: &RunSettings, scores: Option<&ExternalScores>) -> InstanceResult {
    let generated = generate(&instance.question, &instance.table, &settings.cube);
    let options = RankOptions {
        mode: settings.ranker,
        external: scores.and_then(|s| s.get(&instance.id)),
        tfidf: settings.tfidf,
    };
    let ranked = rank(&instance.question, generated.items.clone(), settings.k, options)
        .expect("k validated at configuration time");
    if let Some(reason) = &ranked.fallback_reason {
        log::warn!("{}: {reason}", instance.id);
    }
    let input = build_model_input(
        &instance.question,
        instance.context.as_deref(),
        &instance.table,
        ranked.cube_items(),
    );
    let eval = evaluate_instance(
        instance,
        &generated.items,
        ranked.cube_items(),
        settings.eligibility,
        settings.tolerance,
    );
    let cube_items = ranked
        .items
        .iter()
        .map(|e| RecordItem {
            operator: e.item.operator,
            pattern: e.item.pattern,
            operands: e
                .item
                .operands
                .iter()
                .map(|o| RecordOperand {
                    cell: o.cell,
                    raw: o.raw.clone(),
                    value: o.value,
                })
                .collect(),
            result: e.item.result,
            score: e.score,
            fp: e.item.fingerprint(),
        })
        .collect();
    let record = AugmentedRecord {
        id: instance.id.clone(),
        input: input.text,
        segments: input.segments,
        cube_items,
        covered: eval.eligible.then_some(eval.covered),
        generated: generated.items.len(),
        ranker: ranked.ranker,
    };
    InstanceResult { record, eval, ranked }
}

/// Processes instances on `workers` threads; results keep input order.
pub fn process_all(
    instances: &[QAInstance],
    settings: &RunSettings,
    scores: Option<&ExternalScores>,
    workers: Option<usize>,
) -> Result<Vec<InstanceResult>, PipelineError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    Ok(pool.install(|| {
        instances
            .par_iter()
            .map(|inst| process_instance(inst, settings, scores))
            .collect()
    }))
}

pub fn load_instances(config: &PipelineConfig) -> Result<(DatasetFormat, IngestReport), PipelineError> {
    let path = config.dataset_path()?;
    let format = match config.format {
        Some(f) => f,
        None => PipelineConfig {
            dataset: Some(path.clone()),
            ..PipelineConfig::default()
        }
        .resolved_format()?,
    };
    let report = match format {
        DatasetFormat::Tatqa => ingest_tatqa(&path)?,
        DatasetFormat::Wtq => {
            let sql = config.sql.as_deref().map(load_sql_sidecar).transpose()?;
            ingest_wtq(&path, sql.as_ref())?
        }
        DatasetFormat::Csv => ingest_csv(&path, config.questions.clone())?,
    };
    log::info!(
        "ingested {} records from {} ({} skipped)",
        report.ingested,
        path.display(),
        report.skipped.len()
    );
    Ok((format, report))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub format: DatasetFormat,
    pub results: Vec<InstanceResult>,
    pub report: CoverageReport,
    pub skipped: Vec<RecordIssue>,
}

impl PipelineOutput {
    pub fn jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&serde_json::to_string(&r.record).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = format!("dataset format: {}\n", self.format);
        s.push_str(&self.report.summary());
        if !self.skipped.is_empty() {
            s.push_str(&format!("skipped records ({}):\n", self.skipped.len()));
            for issue in self.skipped.iter().take(20) {
                s.push_str(&format!("  {}: {}\n", issue.record, issue.message));
            }
        }
        s
    }
}

/// Ingests, processes and evaluates without writing anything.
pub fn execute(config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let (format, ingest) = load_instances(config)?;
    let settings = RunSettings::from_config(config, format)?;
    let scores = match (&config.scores, config.ranker) {
        (Some(path), RankerMode::External) => Some(ExternalScores::load(path)?),
        _ => None,
    };
    let tags = match &config.failure_tags {
        Some(path) => load_failure_tags(path)?,
        None => vec![],
    };
    let results = process_all(&ingest.instances, &settings, scores.as_ref(), config.workers)?;
    let evals: Vec<InstanceEval> = results.iter().map(|r| r.eval.clone()).collect();
    let report = evaluate_coverage(
        &evals,
        settings.k,
        settings.denominator,
        &tags,
        Counters {
            ingested: ingest.ingested,
            skipped: ingest.skipped.len(),
        },
    );
    Ok(PipelineOutput {
        format,
        results,
        report,
        skipped: ingest.skipped,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    let wrap = |source| PipelineError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(wrap)?;
    f.write_all(contents.as_bytes()).map_err(wrap)
}

/// Full run: writes `augmented.jsonl`, `coverage.json` and `summary.txt`
/// into the configured output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let output = execute(config)?;
    write_artifacts(&output, &config.out_dir, true)?;
    Ok(output)
}

pub fn write_artifacts(output: &PipelineOutput, dir: &Path, with_jsonl: bool) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    if with_jsonl {
        write_file(&dir.join(AUGMENTED_FILE), &output.jsonl())?;
    }
    let report = serde_json::to_string_pretty(&output.report).expect("report serializes") + "\n";
    write_file(&dir.join(COVERAGE_FILE), &report)?;
    write_file(&dir.join(SUMMARY_FILE), &output.summary())
}
