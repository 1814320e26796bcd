//! Dataset discovery for the acceptance suite.
//!
//! - `TACUBE_TATQA_DEV`: path to `tatqa_dataset_dev.json`
//! - `TACUBE_WTQ_DIR`: WikiTableQuestions root (holding `data/` and `csv/`)
//! - `TACUBE_WTQ_SQL`: optional SQL sidecar for WTQ
//! - `TACUBE_DATA_DIR`: fallback directory for both

use std::path::{Path, PathBuf};

use tacube::config::DATA_DIR_ENV;
use tacube::{DatasetFormat, PipelineConfig};

pub const TATQA_DEV_ENV: &str = "TACUBE_TATQA_DEV";
pub const WTQ_DIR_ENV: &str = "TACUBE_WTQ_DIR";
pub const WTQ_SQL_ENV: &str = "TACUBE_WTQ_SQL";

fn env_path(var: &str) -> Option<PathBuf> {
    std::env::var_os(var)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

pub fn tatqa_dev() -> Result<PathBuf, String> {
    let path = env_path(TATQA_DEV_ENV)
        .or_else(|| env_path(DATA_DIR_ENV).map(|d| d.join("tatqa_dataset_dev.json")))
        .ok_or(format!(
            "TAT-QA dev split not available (set {TATQA_DEV_ENV} or {DATA_DIR_ENV})"
        ))?;
    if path.is_file() {
        Ok(path)
    } else {
        Err(format!("TAT-QA dev split not found at {}", path.display()))
    }
}

/// Pipeline config for a WTQ split, or why the split cannot be found.
pub fn wtq_config(split: &str) -> Result<PipelineConfig, String> {
    let dir = env_path(WTQ_DIR_ENV)
        .or_else(|| env_path(DATA_DIR_ENV))
        .ok_or(format!(
            "WikiTableQuestions not available (set {WTQ_DIR_ENV} or {DATA_DIR_ENV})"
        ))?;
    let config = PipelineConfig {
        format: Some(DatasetFormat::Wtq),
        split: Some(split.to_string()),
        data_dir: Some(dir),
        sql: env_path(WTQ_SQL_ENV),
        ..PipelineConfig::default()
    };
    let path = config.dataset_path().map_err(|e| e.to_string())?;
    if path.is_file() {
        Ok(config)
    } else {
        Err(format!("WTQ {split} split not found at {}", path.display()))
    }
}

/// The small TAT-QA fixture shipped with the core crate's tests.
pub fn tatqa_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/tatqa_mini.json")
}
