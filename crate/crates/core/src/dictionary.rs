//! The data dictionary: the registry of permitted keys, their value kinds,
//! units, signal classes and calibration ranges, plus record validation
//! against it.
//!
//! The canonical key set below is a working reconstruction chosen so that
//! every simulated sensor maps to at least one key; deployments can extend or
//! override it through configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::key::DataKey;
use crate::record::DataRecord;
use crate::value::ValueKind;

/// Validation slack applied around calibration ranges: honest but
/// out-of-calibration values pass, garbage does not.
pub const RANGE_SLACK: f64 = 0.5;

/// Well-known key names. Kept as plain strings so call sites stay readable;
/// every one of them resolves in [`default_dictionary`].
pub mod keys {
    pub const TRAFFIC_VEHICLE_POSITION: &str = "traffic.vehicle.position";
    pub const TRAFFIC_VEHICLE_SPEED: &str = "traffic.vehicle.speed_mps";
    pub const TRAFFIC_LIGHT_PHASE: &str = "traffic.light.phase";
    pub const TRAFFIC_LIGHT_TIME_TO_CHANGE: &str = "traffic.light.time_to_change_s";
    pub const TRAFFIC_STATIONARY_VEHICLE: &str = "traffic.event.stationary_vehicle";
    pub const TRAFFIC_PEDESTRIAN_COUNT: &str = "traffic.vru.pedestrian_count";
    pub const TRAFFIC_TRAM_PRESENT: &str = "traffic.tram.present";
    pub const ENV_VISIBILITY: &str = "env.weather.visibility_m";
    pub const ENV_PRECIPITATION: &str = "env.weather.precipitation";
    pub const ENV_FRICTION: &str = "env.road.friction";
    pub const ENV_BAD_CONDITION: &str = "env.road.bad_condition";
    pub const ENV_NOISE: &str = "env.noise_db";
    pub const VEHICLE_SPEED: &str = "vehicle.speed_mps";
    pub const VEHICLE_ACCEL: &str = "vehicle.accel_mps2";
    pub const VEHICLE_BRAKE: &str = "vehicle.brake_active";
    pub const DRIVER_HEART_RATE: &str = "driver.heart_rate_bpm";
    pub const DRIVER_SKIN_CONDUCTANCE: &str = "driver.skin_conductance_us";
    pub const DRIVER_PUPIL_DIAMETER: &str = "driver.pupil_diameter_mm";
    pub const DRIVER_GAZE_ON_ROAD: &str = "driver.gaze_on_road_frac";
    pub const DRIVER_TAKEOVER_REQUEST: &str = "driver.takeover_request";
}

/// Temporal character of a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalClass {
    Continuous,
    Discrete,
    Event,
}

/// How quickly a factor changes: road topology is static, potholes are
/// semi-static, road users and weather are dynamic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorClass {
    Static,
    SemiStatic,
    Dynamic,
}

/// Expected numeric range of a scalar key, used for normalization and for
/// validation with [`RANGE_SLACK`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lo: f64,
    pub hi: f64,
}

impl Calibration {
    pub fn new(lo: f64, hi: f64) -> Result<Self, DictionaryError> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Calibration { lo, hi })
        } else {
            Err(DictionaryError::InvalidCalibration { lo, hi })
        }
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    /// Range widened by `RANGE_SLACK` of the span on each side.
    pub fn widened(&self) -> (f64, f64) {
        let slack = RANGE_SLACK * self.span();
        (self.lo - slack, self.hi + slack)
    }

    /// Position of `v` inside the range, clamped to [0, 1].
    pub fn normalize(&self, v: f64) -> f64 {
        ((v - self.lo) / self.span()).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DictionaryError {
    #[error("invalid calibration range [{lo}, {hi}]")]
    InvalidCalibration { lo: f64, hi: f64 },
    #[error("duplicate dictionary key {0}")]
    DuplicateKey(DataKey),
    #[error("continuous entry {0} must be scalar-valued")]
    ContinuousNotScalar(DataKey),
    #[error("event entry {0} must carry flag or token values")]
    EventNotFlagOrToken(DataKey),
}

/// One dictionary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub key: DataKey,
    pub value_kind: ValueKind,
    pub unit: String,
    pub signal_class: SignalClass,
    pub factor_class: FactorClass,
    pub calibration: Option<Calibration>,
}

impl DictionaryEntry {
    fn check(&self) -> Result<(), DictionaryError> {
        if self.signal_class == SignalClass::Continuous && self.value_kind != ValueKind::Scalar {
            return Err(DictionaryError::ContinuousNotScalar(self.key.clone()));
        }
        if self.signal_class == SignalClass::Event
            && !matches!(self.value_kind, ValueKind::Flag | ValueKind::Token)
        {
            return Err(DictionaryError::EventNotFlagOrToken(self.key.clone()));
        }
        if let Some(c) = &self.calibration {
            Calibration::new(c.lo, c.hi)?;
        }
        Ok(())
    }
}

/// Registry of permitted keys, unique by key, lookup total over every key
/// used anywhere in the system. Built once, read-only afterwards.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DataDictionary {
    entries: BTreeMap<DataKey, DictionaryEntry>,
}

impl DataDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entry: DictionaryEntry) -> Result<(), DictionaryError> {
        entry.check()?;
        if self.entries.contains_key(&entry.key) {
            return Err(DictionaryError::DuplicateKey(entry.key));
        }
        self.entries.insert(entry.key.clone(), entry);
        Ok(())
    }

    /// Replace or add an entry (used by configuration overrides).
    pub fn upsert(&mut self, entry: DictionaryEntry) -> Result<(), DictionaryError> {
        entry.check()?;
        self.entries.insert(entry.key.clone(), entry);
        Ok(())
    }

    pub fn get(&self, key: &DataKey) -> Option<&DictionaryEntry> {
        self.entries.get(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&DictionaryEntry> {
        let key = DataKey::new(key).ok()?;
        self.entries.get(&key)
    }

    pub fn contains(&self, key: &DataKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DictionaryEntry> {
        self.entries.values()
    }

    /// All keys whose first segment equals `group` (e.g. `driver`).
    pub fn keys_with_group(&self, group: &str) -> std::collections::BTreeSet<DataKey> {
        self.entries
            .keys()
            .filter(|k| k.group() == group)
            .cloned()
            .collect()
    }
}

fn entry(
    key: &str,
    value_kind: ValueKind,
    unit: &str,
    signal_class: SignalClass,
    factor_class: FactorClass,
    calibration: Option<(f64, f64)>,
) -> DictionaryEntry {
    DictionaryEntry {
        key: DataKey::new(key).expect("canonical key names are valid"),
        value_kind,
        unit: unit.to_owned(),
        signal_class,
        factor_class,
        calibration: calibration.map(|(lo, hi)| Calibration { lo, hi }),
    }
}

/// The canonical dictionary covering all four aggregator domains.
pub fn default_dictionary() -> DataDictionary {
    use FactorClass::*;
    use SignalClass::*;
    use ValueKind::*;

    #[rustfmt::skip]
    let rows = [
        entry(keys::TRAFFIC_VEHICLE_POSITION, Token,  "",      Discrete,   Dynamic,    None),
        entry(keys::TRAFFIC_VEHICLE_SPEED,    Scalar, "m/s",   Continuous, Dynamic,    Some((0.0, 60.0))),
        entry(keys::TRAFFIC_LIGHT_PHASE,      Token,  "",      Discrete,   Dynamic,    None),
        entry(keys::TRAFFIC_LIGHT_TIME_TO_CHANGE, Scalar, "s", Continuous, Dynamic,    None),
        entry(keys::TRAFFIC_STATIONARY_VEHICLE, Flag, "",      Event,      Dynamic,    None),
        entry(keys::TRAFFIC_PEDESTRIAN_COUNT, Count,  "1",     Discrete,   Dynamic,    None),
        entry(keys::TRAFFIC_TRAM_PRESENT,     Flag,   "",      Discrete,   Dynamic,    None),
        entry(keys::ENV_VISIBILITY,           Scalar, "m",     Continuous, Dynamic,    Some((0.0, 2000.0))),
        entry(keys::ENV_PRECIPITATION,        Flag,   "",      Discrete,   Dynamic,    None),
        entry(keys::ENV_FRICTION,             Scalar, "1",     Continuous, Dynamic,    Some((0.1, 1.0))),
        entry(keys::ENV_BAD_CONDITION,        Flag,   "",      Discrete,   SemiStatic, None),
        entry(keys::ENV_NOISE,                Scalar, "dB",    Continuous, Dynamic,    Some((30.0, 100.0))),
        entry(keys::VEHICLE_SPEED,            Scalar, "m/s",   Continuous, Dynamic,    Some((0.0, 60.0))),
        entry(keys::VEHICLE_ACCEL,            Scalar, "m/s^2", Continuous, Dynamic,    Some((-10.0, 10.0))),
        entry(keys::VEHICLE_BRAKE,            Flag,   "",      Discrete,   Dynamic,    None),
        entry(keys::DRIVER_HEART_RATE,        Scalar, "bpm",   Continuous, Dynamic,    Some((60.0, 120.0))),
        entry(keys::DRIVER_SKIN_CONDUCTANCE,  Scalar, "uS",    Continuous, Dynamic,    Some((2.0, 20.0))),
        entry(keys::DRIVER_PUPIL_DIAMETER,    Scalar, "mm",    Continuous, Dynamic,    Some((3.0, 7.0))),
        entry(keys::DRIVER_GAZE_ON_ROAD,      Scalar, "1",     Continuous, Dynamic,    Some((0.0, 1.0))),
        entry(keys::DRIVER_TAKEOVER_REQUEST,  Flag,   "",      Event,      Dynamic,    None),
    ];

    let mut dict = DataDictionary::new();
    for row in rows {
        dict.insert(row).expect("canonical table is consistent");
    }
    dict
}

/// First rule a record violates, if any.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("unknown-key: {0} not in dictionary")]
    UnknownKey(DataKey),
    #[error("value-kind-mismatch: {key} expects {expected}, got {found:?}")]
    ValueKindMismatch {
        key: DataKey,
        expected: ValueKind,
        found: Option<ValueKind>,
    },
    #[error("out-of-range: {key} value {value} outside [{lo}, {hi}]")]
    OutOfRange {
        key: DataKey,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("malformed-validity: start {start_ms} past generation {gen_ms} + duration {dur_ms}")]
    MalformedValidity {
        start_ms: u64,
        gen_ms: u64,
        dur_ms: u64,
    },
}

impl ValidationError {
    /// Stable wire code for this rule.
    pub fn code(&self) -> &'static str {
        match self {
            ValidationError::UnknownKey(_) => "unknown-key",
            ValidationError::ValueKindMismatch { .. } => "value-kind-mismatch",
            ValidationError::OutOfRange { .. } => "out-of-range",
            ValidationError::MalformedValidity { .. } => "malformed-validity",
        }
    }
}

/// Check a record against the dictionary contract. Rules are applied in
/// order: key resolution, value kind, calibration range (scalars, widened by
/// [`RANGE_SLACK`]), validity well-formedness.
pub fn validate_record(record: &DataRecord, dict: &DataDictionary) -> Result<(), ValidationError> {
    let entry = dict
        .get(&record.key)
        .ok_or_else(|| ValidationError::UnknownKey(record.key.clone()))?;

    let found = record.value.as_ref().map(|v| v.kind());
    if found != Some(entry.value_kind) {
        return Err(ValidationError::ValueKindMismatch {
            key: record.key.clone(),
            expected: entry.value_kind,
            found,
        });
    }

    if let Some(v) = record.value.as_ref().and_then(|v| v.as_scalar()) {
        if let Some(cal) = &entry.calibration {
            let (lo, hi) = cal.widened();
            if !v.is_finite() || v < lo || v > hi {
                return Err(ValidationError::OutOfRange {
                    key: record.key.clone(),
                    value: v,
                    lo,
                    hi,
                });
            }
        } else if !v.is_finite() {
            return Err(ValidationError::OutOfRange {
                key: record.key.clone(),
                value: v,
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            });
        }
    }

    let gen_ms = record.generation_time.millis();
    let start_ms = record.validity.start.millis();
    let dur_ms = record.validity.duration_ms;
    if start_ms > gen_ms.saturating_add(dur_ms) {
        return Err(ValidationError::MalformedValidity {
            start_ms,
            gen_ms,
            dur_ms,
        });
    }

    Ok(())
}
