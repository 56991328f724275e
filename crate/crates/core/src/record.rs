//! Records and their canonical serialized layout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint};
use crate::key::{DataKey, KeyError};
use crate::time::{EpochTime, ValidityInterval};
use crate::value::{QualityFlag, Value};

/// Processing annotation tags attached to records as they move through the
/// pipeline. Tags are in-memory provenance only and never serialized.
pub mod trace_tags {
    /// Position was filled in from an area context rather than measured.
    pub const AREA_REFERENCED: &str = "area-ref";
    /// Record went through the preparation pipeline.
    pub const PREPARED: &str = "prepared";

    pub fn relay(aggregator_id: &str) -> String {
        format!("relay:{aggregator_id}")
    }

    pub fn session(session_id: &str) -> String {
        format!("session:{session_id}")
    }
}

/// One timestamped, geo-referenced, quality-flagged key-value measurement.
///
/// `value` is `None` only for `quality == Missing` placeholders emitted by
/// gap extrapolation; every source station emits concrete measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "WireRecord", try_from = "WireRecord")]
pub struct DataRecord {
    pub key: DataKey,
    pub value: Option<Value>,
    pub generation_time: EpochTime,
    pub validity: ValidityInterval,
    pub position: Option<GeoPoint>,
    pub source_id: String,
    pub quality: QualityFlag,
    trace: Vec<String>,
}

impl DataRecord {
    /// A freshly measured record, as emitted by stations.
    pub fn measured(
        key: DataKey,
        value: Value,
        generation_time: EpochTime,
        validity: ValidityInterval,
        position: Option<GeoPoint>,
        source_id: impl Into<String>,
    ) -> Self {
        DataRecord {
            key,
            value: Some(value),
            generation_time,
            validity,
            position,
            source_id: source_id.into(),
            quality: QualityFlag::Measured,
            trace: Vec::new(),
        }
    }

    /// Derived record with an explicit quality flag (preparation output).
    pub fn derived(
        key: DataKey,
        value: Option<Value>,
        generation_time: EpochTime,
        validity: ValidityInterval,
        position: Option<GeoPoint>,
        source_id: impl Into<String>,
        quality: QualityFlag,
    ) -> Self {
        DataRecord {
            key,
            value,
            generation_time,
            validity,
            position,
            source_id: source_id.into(),
            quality,
            trace: Vec::new(),
        }
    }

    pub fn push_trace(&mut self, tag: impl Into<String>) {
        self.trace.push(tag.into());
    }

    pub fn with_trace(mut self, tag: impl Into<String>) -> Self {
        self.push_trace(tag);
        self
    }

    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    pub fn copy_trace_from(&mut self, other: &DataRecord) {
        self.trace = other.trace.clone();
    }

    pub fn has_trace_tag(&self, tag: &str) -> bool {
        self.trace.iter().any(|t| t == tag)
    }

    /// Canonical one-line serialization (wire and persistence layout).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }

    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// Canonical serialized record layout, shared by the wire protocol and the
/// persistence log. Field names and order are fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireRecord {
    pub key: String,
    pub value: Option<Value>,
    pub gen_ms: u64,
    pub valid_from_ms: u64,
    pub valid_dur_ms: u64,
    pub lat_e7: Option<i32>,
    pub lon_e7: Option<i32>,
    pub source: String,
    pub quality: QualityFlag,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WireError {
    #[error(transparent)]
    InvalidKey(#[from] KeyError),
    #[error(transparent)]
    InvalidCoordinate(#[from] GeoError),
    #[error("lat_e7 and lon_e7 must be both present or both null")]
    HalfPosition,
}

impl From<DataRecord> for WireRecord {
    fn from(r: DataRecord) -> Self {
        WireRecord {
            key: r.key.as_str().to_owned(),
            value: r.value,
            gen_ms: r.generation_time.millis(),
            valid_from_ms: r.validity.start.millis(),
            valid_dur_ms: r.validity.duration_ms,
            lat_e7: r.position.map(|p| p.lat_e7),
            lon_e7: r.position.map(|p| p.lon_e7),
            source: r.source_id,
            quality: r.quality,
        }
    }
}

impl TryFrom<WireRecord> for DataRecord {
    type Error = WireError;

    fn try_from(w: WireRecord) -> Result<Self, Self::Error> {
        let position = match (w.lat_e7, w.lon_e7) {
            (Some(lat), Some(lon)) => Some(GeoPoint::new(lat, lon)?),
            (None, None) => None,
            _ => return Err(WireError::HalfPosition),
        };
        Ok(DataRecord {
            key: DataKey::new(w.key)?,
            value: w.value,
            generation_time: EpochTime::from_millis(w.gen_ms),
            validity: ValidityInterval::new(
                EpochTime::from_millis(w.valid_from_ms),
                w.valid_dur_ms,
            ),
            position,
            source_id: w.source,
            quality: w.quality,
            trace: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DataRecord {
        DataRecord::measured(
            DataKey::new("driver.heart_rate_bpm").unwrap(),
            Value::Scalar(80.0),
            EpochTime::from_millis(1000),
            ValidityInterval::new(EpochTime::from_millis(1000), 500),
            Some(GeoPoint::new(490_000_000, 70_000_000).unwrap()),
            "dda-ego",
        )
    }

    #[test]
    fn wire_layout_is_bit_exact() {
        let line = sample().to_json_line();
        assert_eq!(
            line,
            "{\"key\":\"driver.heart_rate_bpm\",\"value\":80.0,\"gen_ms\":1000,\
             \"valid_from_ms\":1000,\"valid_dur_ms\":500,\"lat_e7\":490000000,\
             \"lon_e7\":70000000,\"source\":\"dda-ego\",\"quality\":\"measured\"}"
        );
    }

    #[test]
    fn absent_position_serializes_as_nulls() {
        let mut r = sample();
        r.position = None;
        let line = r.to_json_line();
        assert!(line.contains("\"lat_e7\":null,\"lon_e7\":null"), "{line}");
        let back = DataRecord::from_json_line(&line).unwrap();
        assert_eq!(back.position, None);
    }

    #[test]
    fn round_trip_preserves_fields() {
        let r = sample();
        let back = DataRecord::from_json_line(&r.to_json_line()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn trace_is_not_serialized() {
        let mut r = sample();
        r.push_trace(trace_tags::session("sess-0001"));
        let line = r.to_json_line();
        assert!(!line.contains("sess-0001"));
        let back = DataRecord::from_json_line(&line).unwrap();
        assert!(back.trace().is_empty());
    }

    #[test]
    fn half_position_is_rejected() {
        let line = "{\"key\":\"env.noise_db\",\"value\":55.0,\"gen_ms\":0,\
                    \"valid_from_ms\":0,\"valid_dur_ms\":1,\"lat_e7\":1,\"lon_e7\":null,\
                    \"source\":\"x\",\"quality\":\"measured\"}";
        assert!(matches!(
            DataRecord::from_json_line(line),
            Err(e) if e.to_string().contains("both")
        ));
    }

    #[test]
    fn missing_placeholder_round_trips_with_null_value() {
        let r = DataRecord::derived(
            DataKey::new("env.noise_db").unwrap(),
            None,
            EpochTime::from_millis(5000),
            ValidityInterval::new(EpochTime::from_millis(5000), 100),
            None,
            "prep",
            QualityFlag::Missing,
        );
        let line = r.to_json_line();
        assert!(line.contains("\"value\":null"), "{line}");
        assert_eq!(DataRecord::from_json_line(&line).unwrap(), r);
    }
}
