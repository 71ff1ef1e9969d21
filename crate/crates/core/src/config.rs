//! Run configuration: flat `key = value` lines under `[section]` headers.
//!
//! ```text
//! [miner]
//! min_len = 2
//! max_len = 16
//!
//! [structures]
//! mode = delimiter
//! delimiter = 0a
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Unknown
//! sections or keys are errors.

use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::cognition::MinerConfig;
use crate::dpu::TopologyConfig;
use crate::forecast::Method;
use crate::hypotheses::HypothesisConfig;
use crate::relevancy::RelevancyConfig;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key {key:?} in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: bad value {value:?} for {key}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// One `key = value` entry with its section and 1-based line number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                message: "unclosed section header".into(),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: n + 1,
            message: "expected key = value".into(),
        })?;
        out.push(Entry {
            section: section.clone(),
            key: key.trim().to_string(),
            value: value.trim().to_string(),
            line: n + 1,
        });
    }
    Ok(out)
}

pub(crate) fn value<T: FromStr>(e: &Entry) -> Result<T, ConfigError> {
    e.value.parse().map_err(|_| ConfigError::BadValue {
        line: e.line,
        key: e.key.clone(),
        value: e.value.clone(),
    })
}

pub(crate) fn unknown(e: &Entry) -> ConfigError {
    ConfigError::UnknownKey {
        line: e.line,
        section: e.section.clone(),
        key: e.key.clone(),
    }
}

/// How tokens are grouped into structures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StructureSpec {
    Window(usize),
    /// Delimiter bytes; resolved against the dictionary at run time.
    Delimiter(Vec<u8>),
}

impl Default for StructureSpec {
    fn default() -> Self {
        StructureSpec::Window(3)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub store_path: Option<PathBuf>,
    pub miner: MinerConfig,
    pub structures: StructureSpec,
    pub relevancy: RelevancyConfig,
    pub hypothesis: HypothesisConfig,
    /// Trailing windows replayed as the incoming stream by `hypothesize`.
    pub holdout: u64,
    pub forecast_method: Method,
    pub alpha: f64,
    pub dpu: Option<TopologyConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            store_path: None,
            miner: MinerConfig::default(),
            structures: StructureSpec::default(),
            relevancy: RelevancyConfig::default(),
            hypothesis: HypothesisConfig::default(),
            holdout: 1,
            forecast_method: Method::Markov,
            alpha: 1.0,
            dpu: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut mode = None;
        let mut k = 3usize;
        let mut delimiter = None;
        let mut dpu_entries = Vec::new();
        for e in parse_entries(text)? {
            match (e.section.as_str(), e.key.as_str()) {
                ("store", "path") => cfg.store_path = Some(PathBuf::from(&e.value)),
                ("miner", "min_len") => cfg.miner.min_len = value(&e)?,
                ("miner", "max_len") => cfg.miner.max_len = value(&e)?,
                ("miner", "min_support") => cfg.miner.min_support = value(&e)?,
                ("miner", "window_size") => cfg.miner.window_size = value(&e)?,
                ("structures", "mode") => mode = Some(e.clone()),
                ("structures", "k") => k = value(&e)?,
                ("structures", "delimiter") => {
                    let bytes = hex::decode(&e.value).map_err(|_| ConfigError::BadValue {
                        line: e.line,
                        key: e.key.clone(),
                        value: e.value.clone(),
                    })?;
                    delimiter = Some(bytes);
                }
                ("relevancy", "decay") => cfg.relevancy.decay = value(&e)?,
                ("relevancy", "saturation") => cfg.relevancy.saturation = value(&e)?,
                ("relevancy", "budget") => cfg.relevancy.budget = value(&e)?,
                ("hypothesis", "threshold") => cfg.hypothesis.threshold = value(&e)?,
                ("hypothesis", "quorum") => cfg.hypothesis.quorum = value(&e)?,
                ("hypothesis", "fluctuation_window") => {
                    cfg.hypothesis.fluctuation_window = value(&e)?
                }
                ("hypothesis", "ttl") => cfg.hypothesis.ttl = value(&e)?,
                ("hypothesis", "budget") => cfg.hypothesis.budget = value(&e)?,
                ("hypothesis", "holdout") => cfg.holdout = value(&e)?,
                ("forecast", "method") => cfg.forecast_method = value(&e)?,
                ("forecast", "alpha") => cfg.alpha = value(&e)?,
                ("dpu", _) => dpu_entries.push(e),
                _ => return Err(unknown(&e)),
            }
        }
        cfg.structures = match mode.as_ref().map(|e| e.value.as_str()) {
            None | Some("window") => StructureSpec::Window(k),
            Some("delimiter") => StructureSpec::Delimiter(delimiter.ok_or_else(|| {
                ConfigError::Invalid("delimiter mode needs structures.delimiter".into())
            })?),
            Some(_) => {
                let e = mode.expect("matched Some");
                return Err(ConfigError::BadValue {
                    line: e.line,
                    key: e.key,
                    value: e.value,
                });
            }
        };
        if !dpu_entries.is_empty() {
            cfg.dpu = Some(TopologyConfig::from_entries(&dpu_entries)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.miner.validate().map_err(|e| invalid(e.to_string()))?;
        self.relevancy
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.hypothesis
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if let StructureSpec::Window(k) = self.structures {
            if k < 2 {
                return Err(invalid(format!("structures.k must be >= 2, got {k}")));
            }
        }
        if let StructureSpec::Delimiter(d) = &self.structures {
            if d.is_empty() {
                return Err(invalid("structures.delimiter is empty".into()));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!(
                "forecast.alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}
