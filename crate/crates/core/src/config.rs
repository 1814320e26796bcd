//! Pipeline configuration, loadable from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cube::{CubeConfig, GenerationLimits};
use crate::dataset::DatasetFormat;
use crate::eval::{Denominator, EligibilityRule, Tolerance};
use crate::question::{AnalysisConfig, TriggerLexicon, DEFAULT_MATCH_THRESHOLD};
use crate::rank::{RankerMode, TfIdfConfig};

pub const CONFIG_ENV: &str = "TACUBE_CONFIG";
pub const DATA_DIR_ENV: &str = "TACUBE_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("no dataset given (set a dataset path, or a dataset name with a split)")]
    NoDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Dataset file. When absent, resolved from `format`, `split` and `data_dir`.
    pub dataset: Option<PathBuf>,
    pub format: Option<DatasetFormat>,
    pub split: Option<String>,
    pub data_dir: Option<PathBuf>,
    /// SQL annotation sidecar for WTQ questions.
    pub sql: Option<PathBuf>,
    /// Questions for a CSV table; overrides the sidecar file.
    pub questions: Option<Vec<String>>,
    pub ranker: RankerMode,
    pub scores: Option<PathBuf>,
    /// Top-k cut; defaults to 10 for TAT-QA and CSV, 5 for WTQ.
    pub k: Option<usize>,
    pub limits: GenerationLimits,
    pub lexicon: Option<PathBuf>,
    pub match_threshold: f64,
    /// Use all operators when none is triggered; defaults to on except for WTQ.
    pub fallback_all_operators: Option<bool>,
    pub tolerance: Tolerance,
    pub tfidf: TfIdfConfig,
    /// Defaults to eligible for TAT-QA and CSV, cube-extracted for WTQ.
    pub denominator: Option<Denominator>,
    pub failure_tags: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: None,
            split: None,
            data_dir: None,
            sql: None,
            questions: None,
            ranker: RankerMode::Heuristic,
            scores: None,
            k: None,
            limits: GenerationLimits::default(),
            lexicon: None,
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            fallback_all_operators: None,
            tolerance: Tolerance::default(),
            tfidf: TfIdfConfig::default(),
            denominator: None,
            failure_tags: None,
            out_dir: PathBuf::from("out"),
            workers: None,
        }
    }
}

fn format_from_extension(path: &Path) -> Option<DatasetFormat> {
    match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
        "json" => Some(DatasetFormat::Tatqa),
        "tsv" => Some(DatasetFormat::Wtq),
        "csv" => Some(DatasetFormat::Csv),
        _ => None,
    }
}

impl PipelineConfig {
    /// Reads a `.toml` or `.json` file (anything else is tried as TOML).
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |message: String| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))
        }
    }

    /// Loads from `explicit`, else from `$TACUBE_CONFIG`, else defaults.
    pub fn load_or_default(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.k == Some(0) {
            return invalid("k must be at least 1");
        }
        let tol = self.tolerance;
        if !(tol.abs >= 0.0 && tol.abs.is_finite() && tol.rel >= 0.0 && tol.rel.is_finite()) {
            return invalid("tolerances must be finite and non-negative");
        }
        if !(self.match_threshold > 0.0 && self.match_threshold <= 1.0) {
            return invalid("match_threshold must be in (0, 1]");
        }
        if self.workers == Some(0) {
            return invalid("workers must be at least 1");
        }
        if self.ranker == RankerMode::External && self.scores.is_none() {
            return invalid("the external ranker needs a scores file");
        }
        self.limits
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn resolved_format(&self) -> Result<DatasetFormat, ConfigError> {
        if let Some(f) = self.format {
            return Ok(f);
        }
        self.dataset
            .as_deref()
            .and_then(format_from_extension)
            .ok_or(ConfigError::NoDataset)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    /// The dataset file: the explicit path, or the official file name for the
    /// format and split under the data directory.
    pub fn dataset_path(&self) -> Result<PathBuf, ConfigError> {
        if let Some(p) = &self.dataset {
            return Ok(p.clone());
        }
        let split = self.split.as_deref().ok_or(ConfigError::NoDataset)?;
        let dir = self.data_dir();
        match self.format.ok_or(ConfigError::NoDataset)? {
            DatasetFormat::Tatqa => Ok(dir.join(format!("tatqa_dataset_{split}.json"))),
            DatasetFormat::Wtq => {
                let name = match split {
                    "test" => "pristine-unseen-tables.tsv".to_string(),
                    s => format!("random-split-1-{s}.tsv"),
                };
                let nested = dir.join("data").join(&name);
                Ok(if nested.exists() { nested } else { dir.join(name) })
            }
            DatasetFormat::Csv => Err(ConfigError::NoDataset),
        }
    }

    pub fn k(&self, format: DatasetFormat) -> usize {
        self.k.unwrap_or(match format {
            DatasetFormat::Wtq => 5,
            DatasetFormat::Tatqa | DatasetFormat::Csv => 10,
        })
    }

    pub fn fallback(&self, format: DatasetFormat) -> bool {
        self.fallback_all_operators
            .unwrap_or(format != DatasetFormat::Wtq)
    }

    pub fn denominator(&self, format: DatasetFormat) -> Denominator {
        self.denominator.unwrap_or(match format {
            DatasetFormat::Wtq => Denominator::CubeExtracted,
            DatasetFormat::Tatqa | DatasetFormat::Csv => Denominator::Eligible,
        })
    }

    pub fn eligibility(&self, format: DatasetFormat) -> EligibilityRule {
        match format {
            DatasetFormat::Tatqa => EligibilityRule::Arithmetic,
            DatasetFormat::Wtq | DatasetFormat::Csv => EligibilityRule::NumericGold,
        }
    }

    pub fn cube_config(&self, format: DatasetFormat) -> Result<CubeConfig, ConfigError> {
        let lexicon = match &self.lexicon {
            Some(p) => TriggerLexicon::load(p).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => TriggerLexicon::default(),
        };
        Ok(CubeConfig {
            analysis: AnalysisConfig {
                lexicon,
                match_threshold: self.match_threshold,
            },
            limits: self.limits.clone(),
            fallback_all_operators: self.fallback(format),
            ..CubeConfig::default()
        })
    }
}
