//! Experiment configuration.
//!
//! Configs are single flat JSON objects. Unknown keys are rejected and absent
//! keys take the defaults of the reference study:
//!
//! ```json
//! {
//!   "seed": 1,
//!   "batch_max_list": [3, 30],
//!   "centre_list": [1, 100],
//!   "mode_list": ["f", "fg", "g"],
//!   "repeats": 2,
//!   "train_grid": 25,
//!   "report_grid": 101,
//!   "grid_lower": [-2.0, -2.0],
//!   "grid_upper": [2.0, 2.0],
//!   "dataset_size": 121,
//!   "dataset_interval": [-2.0, 2.0],
//!   "dataset_coeffs": [0.1, 0.1],
//!   "shape_lo": 1e-4,
//!   "shape_hi": 1e5,
//!   "shape_count": 121,
//!   "basis_ratio": 6,
//!   "output_dir": "out"
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{DatasetSpec, GridSpec};
use crate::surrogate::{FitMode, FitRecipe};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub batch_max_list: Vec<usize>,
    pub centre_list: Vec<usize>,
    pub mode_list: Vec<FitMode>,
    pub repeats: usize,
    pub train_grid: GridSpec,
    pub report_grid: GridSpec,
    pub dataset: DatasetSpec,
    pub shape_lo: f64,
    pub shape_hi: f64,
    pub shape_count: usize,
    pub basis_ratio: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_raw(RawConfig::default()).expect("default config is valid")
    }
}

/// The on-disk form. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_max_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centre_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_list: Option<Vec<FitMode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_lower: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_upper: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_interval: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_coeffs: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_ratio: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Everything that influences results, i.e. the config minus `output_dir`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub seed: u64,
    pub batch_max_list: Vec<usize>,
    pub centre_list: Vec<usize>,
    pub mode_list: Vec<FitMode>,
    pub repeats: usize,
    pub train_grid: GridSpec,
    pub report_grid: GridSpec,
    pub dataset: DatasetSpec,
    pub shape_lo: f64,
    pub shape_hi: f64,
    pub shape_count: usize,
    pub basis_ratio: usize,
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        line: None,
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Apply defaults and validate.
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let defaults = DatasetSpec::default();
        let lower = raw.grid_lower.unwrap_or([-2.0, -2.0]);
        let upper = raw.grid_upper.unwrap_or([2.0, 2.0]);
        let train_grid = GridSpec::new(lower, upper, raw.train_grid.unwrap_or(25))
            .map_err(|e| invalid("train_grid", e.to_string()))?;
        let report_grid = GridSpec::new(lower, upper, raw.report_grid.unwrap_or(101))
            .map_err(|e| invalid("report_grid", e.to_string()))?;
        let dataset = DatasetSpec {
            n: raw.dataset_size.unwrap_or(defaults.n),
            interval: raw.dataset_interval.map(|[a, b]| (a, b)).unwrap_or(defaults.interval),
            coeffs: raw.dataset_coeffs.map(|[a, b]| (a, b)).unwrap_or(defaults.coeffs),
        };
        let config = Self {
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            batch_max_list: raw.batch_max_list.unwrap_or_else(|| vec![3, 30]),
            centre_list: raw.centre_list.unwrap_or_else(|| vec![1, 100]),
            mode_list: raw.mode_list.unwrap_or_else(|| FitMode::ALL.to_vec()),
            repeats: raw.repeats.unwrap_or(2),
            train_grid,
            report_grid,
            dataset,
            shape_lo: raw.shape_lo.unwrap_or(1e-4),
            shape_hi: raw.shape_hi.unwrap_or(1e5),
            shape_count: raw.shape_count.unwrap_or(121),
            basis_ratio: raw.basis_ratio.unwrap_or(6),
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, empty) in [
            ("batch_max_list", self.batch_max_list.is_empty()),
            ("centre_list", self.centre_list.is_empty()),
            ("mode_list", self.mode_list.is_empty()),
        ] {
            if empty {
                return Err(invalid(field, "list must not be empty"));
            }
        }
        if self.repeats == 0 {
            return Err(invalid("repeats", "must be at least 1"));
        }
        if self.dataset.n < 2 {
            return Err(invalid("dataset_size", "must be at least 2"));
        }
        let (lo, hi) = self.dataset.interval;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("dataset_interval", format!("[{lo}, {hi}] is not an interval")));
        }
        if !(self.dataset.coeffs.0.is_finite() && self.dataset.coeffs.1.is_finite()) {
            return Err(invalid("dataset_coeffs", "coefficients must be finite"));
        }
        if let Some(&b) = self.batch_max_list.iter().find(|&&b| b == 0 || b > self.dataset.n) {
            return Err(invalid(
                "batch_max_list",
                format!("batch maximum {b} must lie in 1..={}", self.dataset.n),
            ));
        }
        // Sweep bounds are checked through a throwaway recipe.
        self.recipe(FitMode::F, 1)
            .validate()
            .map_err(|e| invalid("shape_lo", e.to_string()))?;
        let observations = self.train_grid.len();
        for &m in &self.centre_list {
            if m == 0 {
                return Err(invalid("centre_list", "centre counts must be at least 1"));
            }
            if let Err(e) = self.recipe(FitMode::F, m).check_ratio(observations) {
                return Err(invalid(
                    "centre_list",
                    format!(
                        "{}x{} training grid violates the {}x rule: {e}",
                        self.train_grid.resolution, self.train_grid.resolution, self.basis_ratio
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn recipe(&self, mode: FitMode, n_centres: usize) -> FitRecipe {
        FitRecipe {
            mode,
            n_centres,
            shape_lo: self.shape_lo,
            shape_hi: self.shape_hi,
            shape_count: self.shape_count,
            basis_ratio: self.basis_ratio,
        }
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            seed: self.seed,
            batch_max_list: self.batch_max_list.clone(),
            centre_list: self.centre_list.clone(),
            mode_list: self.mode_list.clone(),
            repeats: self.repeats,
            train_grid: self.train_grid,
            report_grid: self.report_grid,
            dataset: self.dataset,
            shape_lo: self.shape_lo,
            shape_hi: self.shape_hi,
            shape_count: self.shape_count,
            basis_ratio: self.basis_ratio,
        }
    }
}

/// 1-based line of the first occurrence of `"field"` in `text`.
fn line_of(text: &str, field: &str) -> Option<usize> {
    let needle = format!("\"{field}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        let field = message
            .strip_prefix("unknown field `")
            .and_then(|rest| rest.split('`').next())
            .unwrap_or("<document>")
            .to_string();
        Error::Config {
            field,
            line: Some(e.line()),
            message,
        }
    })?;
    ExperimentConfig::from_raw(raw).map_err(|e| match e {
        Error::Config { field, message, .. } => Error::Config {
            line: line_of(text, &field),
            field,
            message,
        },
        other => other,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_reference_study() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.batch_max_list, vec![3, 30]);
        assert_eq!(c.centre_list, vec![1, 100]);
        assert_eq!(c.mode_list, vec![FitMode::F, FitMode::FG, FitMode::G]);
        assert_eq!(c.repeats, 2);
        assert_eq!(c.train_grid, GridSpec::square(25).unwrap());
        assert_eq!(c.report_grid, GridSpec::square(101).unwrap());
        assert_eq!(c.dataset, DatasetSpec::default());
        assert_eq!((c.shape_lo, c.shape_hi, c.shape_count, c.basis_ratio), (1e-4, 1e5, 121, 6));
    }

    #[test]
    fn seed_override() {
        let c = parse_config(r#"{"seed": 42}"#).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.centre_list, vec![1, 100]);
    }

    #[test]
    fn too_many_centres_cites_the_rule() {
        let err = parse_config("{\n  \"centre_list\": [105]\n}").unwrap_err();
        match &err {
            Error::Config { field, line, message } => {
                assert_eq!(field, "centre_list");
                assert_eq!(*line, Some(2));
                assert!(message.contains("6x rule"), "{message}");
                assert!(message.contains("max 104"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(parse_config(r#"{"centre_list": [104]}"#).is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config("{\"seed\": 1,\n \"centers\": [1]}").unwrap_err();
        match err {
            Error::Config { field, line, .. } => {
                assert_eq!(field, "centers");
                assert_eq!(line, Some(2));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn constraint_violations() {
        for bad in [
            r#"{"repeats": 0}"#,
            r#"{"mode_list": []}"#,
            r#"{"batch_max_list": [0]}"#,
            r#"{"batch_max_list": [122]}"#,
            r#"{"train_grid": 1}"#,
            r#"{"shape_lo": 10.0, "shape_hi": 1.0}"#,
            r#"{"mode_list": ["h"]}"#,
            r#"[1, 2]"#,
        ] {
            assert!(matches!(parse_config(bad), Err(Error::Config { .. })), "{bad}");
        }
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"seed": 7, "mode_list": ["g"], "output_dir": "somewhere"}"#).unwrap();
        let c = load_config(&path).unwrap();
        assert_eq!((c.seed, c.mode_list.clone()), (7, vec![FitMode::G]));
        assert_eq!(c.output_dir, PathBuf::from("somewhere"));
        assert!(load_config(&dir.path().join("missing.json")).is_err());
    }
}
