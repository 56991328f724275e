//! Declarative configuration: one TOML file covering dictionary overrides,
//! scoring weights, channel constants, fusion parameters and scenario
//! tuning. Every section is optional and defaults to the built-in values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use situ_backend::evaluate::ScoringConfig;
use situ_backend::fuse::FusionConfig;
use situ_core::dictionary::{
    default_dictionary, Calibration, DataDictionary, DictionaryEntry, FactorClass, SignalClass,
};
use situ_core::{DataKey, ValueKind};
use situ_sim::{ChannelModel, ScenarioTuning};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub fusion: FusionConfig,
    pub scoring: ScoringConfig,
    pub channels: ChannelModel,
    pub scenario: ScenarioTuning,
    pub serve: ServeConfig,
    pub dictionary: DictionaryOverrides,
    /// Optional full scenario spec file; overrides the built-in scenarios.
    pub scenario_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    /// Shared registration token; unset disables authentication.
    pub auth: Option<String>,
    /// Assemble closed windows every N batches (0: only at shutdown).
    pub assemble_every_batches: usize,
    /// Leap correction applied to non-unix time bases.
    pub leap_offset_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryOverrides {
    pub calibration: Vec<CalibrationOverride>,
    pub entries: Vec<EntrySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOverride {
    pub key: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrySpec {
    pub key: String,
    pub value_kind: ValueKind,
    #[serde(default)]
    pub unit: String,
    pub signal_class: SignalClass,
    pub factor_class: FactorClass,
    #[serde(default)]
    pub calibration: Option<[f64; 2]>,
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(AppConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: AppConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scoring
            .weights
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.fusion.window_ms == 0 || self.fusion.grid_ms == 0 {
            return Err(CliError::Config(
                "fusion window_ms and grid_ms must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The canonical dictionary with this configuration's overrides applied.
    pub fn dictionary(&self) -> Result<DataDictionary, CliError> {
        let mut dict = default_dictionary();
        for cal in &self.dictionary.calibration {
            let key = DataKey::new(cal.key.clone()).map_err(|e| CliError::Config(e.to_string()))?;
            let mut entry = dict.get(&key).cloned().ok_or_else(|| {
                CliError::Config(format!("calibration override for unknown key {key}"))
            })?;
            entry.calibration = Some(
                Calibration::new(cal.lo, cal.hi).map_err(|e| CliError::Config(e.to_string()))?,
            );
            dict.upsert(entry)
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        for spec in &self.dictionary.entries {
            let entry = DictionaryEntry {
                key: DataKey::new(spec.key.clone()).map_err(|e| CliError::Config(e.to_string()))?,
                value_kind: spec.value_kind,
                unit: spec.unit.clone(),
                signal_class: spec.signal_class,
                factor_class: spec.factor_class,
                calibration: match spec.calibration {
                    Some([lo, hi]) => Some(
                        Calibration::new(lo, hi).map_err(|e| CliError::Config(e.to_string()))?,
                    ),
                    None => None,
                },
            };
            dict.upsert(entry)
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(dict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let config = AppConfig::default();
        config.validate().unwrap();
        let dict = config.dictionary().unwrap();
        assert_eq!(dict.len(), 20);
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
            [scoring.weights]
            w_driver = 0.5
            w_traffic = 0.3
            w_env = 0.2
            threshold = 0.7

            [channels.local]
            range_m = 500.0

            [scenario.s3]
            fog_onset_ms = 70000

            [[dictionary.calibration]]
            key = "driver.heart_rate_bpm"
            lo = 50.0
            hi = 150.0

            [[dictionary.entries]]
            key = "custom.sensor"
            value_kind = "scalar"
            signal_class = "continuous"
            factor_class = "dynamic"
            calibration = [0.0, 1.0]
        "#;
        let config: AppConfig = toml::from_str(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.scoring.weights.w_driver, 0.5);
        assert_eq!(config.channels.local.range_m, 500.0);
        assert_eq!(config.scenario.s3.fog_onset_ms, 70_000);
        // Untouched sections keep defaults.
        assert_eq!(config.fusion.window_ms, 1000);
        assert_eq!(config.channels.cellular.latency_ms, 100);

        let dict = config.dictionary().unwrap();
        let hr = dict.get_str("driver.heart_rate_bpm").unwrap();
        assert_eq!(hr.calibration.unwrap().hi, 150.0);
        assert!(dict.get_str("custom.sensor").is_some());
        assert_eq!(dict.len(), 21);
    }

    #[test]
    fn bad_weights_fail_validation() {
        let text = r#"
            [scoring.weights]
            w_driver = 0.9
            w_traffic = 0.9
            w_env = 0.9
        "#;
        let config: AppConfig = toml::from_str(text).unwrap();
        assert!(config.validate().is_err());
    }
}
