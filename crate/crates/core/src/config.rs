//! Every tunable threshold of the pipeline, loadable from a single TOML file.
//!
//! Missing keys take the defaults below, so an empty file is a valid config.
//! The full resolved config is snapshotted into each bundle.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compare::LagSearchParams;
use crate::signal::LoessParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scan: ScanConfig,
    pub crosscut: CrosscutConfig,
    pub grooves: GrooveConfig,
    pub loess: LoessParams,
    pub lag: LagSearchParams,
    pub score: ScoreConfig,
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Scans with a smaller fraction of measured cells are excluded.
    pub min_measured_fraction: f64,
    pub min_cols: usize,
    pub min_rows: usize,
    /// Block size used for viewer thumbnails.
    pub thumbnail_factor: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            min_measured_fraction: 0.6,
            min_cols: 100,
            min_rows: 3,
            thumbnail_factor: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosscutConfig {
    pub step_um: f64,
    pub stability_threshold: f64,
    pub window: usize,
    /// Rows below this measured fraction are not admissible crosscuts.
    pub min_row_fraction: f64,
    /// Rows on each side of the crosscut that enter the band median.
    pub band_halfwidth: usize,
}

impl Default for CrosscutConfig {
    fn default() -> Self {
        Self {
            step_um: 25.0,
            stability_threshold: 0.95,
            window: 3,
            min_row_fraction: 0.8,
            band_halfwidth: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrooveConfig {
    pub shoulder_quantile: f64,
    /// Multiplies the mid-region residual quantile before comparing edge residuals.
    pub shoulder_multiplier: f64,
    pub edge_fraction: f64,
    pub min_samples: usize,
    pub robust_iterations: usize,
}

impl Default for GrooveConfig {
    fn default() -> Self {
        Self {
            shoulder_quantile: 0.99,
            shoulder_multiplier: 2.0,
            edge_fraction: 0.25,
            min_samples: 50,
            robust_iterations: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Fewer valid in-phase land pairs than this marks a bullet score unreliable.
    pub min_in_phase: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { min_in_phase: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub outlier_quantile: f64,
    pub trend: LoessParams,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            outlier_quantile: 0.05,
            trend: LoessParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(ok: bool, field: &'static str, reason: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    field,
                    reason: reason.to_string(),
                })
            }
        }
        let ratio = |v: f64| (0.0..=1.0).contains(&v);
        check(
            ratio(self.scan.min_measured_fraction),
            "scan.min_measured_fraction",
            "must lie in [0, 1]",
        )?;
        check(
            self.scan.thumbnail_factor >= 1,
            "scan.thumbnail_factor",
            "must be at least 1",
        )?;
        check(
            self.crosscut.step_um > 0.0,
            "crosscut.step_um",
            "must be positive",
        )?;
        check(
            self.crosscut.window >= 1,
            "crosscut.window",
            "must be at least 1",
        )?;
        check(
            ratio(self.crosscut.min_row_fraction),
            "crosscut.min_row_fraction",
            "must lie in [0, 1]",
        )?;
        check(
            ratio(self.grooves.shoulder_quantile),
            "grooves.shoulder_quantile",
            "must lie in [0, 1]",
        )?;
        check(
            self.grooves.edge_fraction > 0.0 && self.grooves.edge_fraction < 0.5,
            "grooves.edge_fraction",
            "must lie in (0, 0.5)",
        )?;
        check(
            self.grooves.shoulder_multiplier > 0.0,
            "grooves.shoulder_multiplier",
            "must be positive",
        )?;
        self.loess.validate().map_err(|e| ConfigError::Invalid {
            field: "loess",
            reason: e.to_string(),
        })?;
        self.analysis
            .trend
            .validate()
            .map_err(|e| ConfigError::Invalid {
                field: "analysis.trend",
                reason: e.to_string(),
            })?;
        check(
            self.analysis.outlier_quantile > 0.0 && self.analysis.outlier_quantile < 0.5,
            "analysis.outlier_quantile",
            "must lie in (0, 0.5)",
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.lag.max_lag, 500);
        assert_eq!(cfg.loess.span, 0.75);
        assert_eq!(cfg.scan.min_measured_fraction, 0.6);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.lag.max_lag = 42;
        cfg.lag.min_overlap = Some(100);
        let back = PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_override() {
        let cfg = PipelineConfig::from_toml_str("[lag]\nmax_lag = 50\n").unwrap();
        assert_eq!(cfg.lag.max_lag, 50);
        assert_eq!(cfg.crosscut.window, 3);
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(PipelineConfig::from_toml_str("[loess]\nspan = 1.5\n").is_err());
        assert!(PipelineConfig::from_toml_str("[lag]\nbogus = 1\n").is_err());
    }
}
