//! Data preparation: uniform time base, uniform sampling grid, complete
//! spatial referencing, and flagged gap filling.
//!
//! Preparation is the only stage that produces `interpolated`,
//! `extrapolated` or `missing` quality flags. Event-class keys are never
//! interpolated or held: they pass through resampling and gap filling
//! unchanged, since events are instantaneous facts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use situ_core::dictionary::SignalClass;
use situ_core::record::trace_tags;
use situ_core::{
    DataDictionary, DataKey, DataRecord, EpochTime, GeoArea, QualityFlag, ValidityInterval, Value,
};

/// Offset of the 2004-01-01 epoch from the unix epoch: 12,418 days.
pub const ITS_2004_EPOCH_UNIX_MS: u64 = 1_072_915_200_000;
/// Offset of the 1980-01-06 GPS epoch from the unix epoch: 3,657 days.
pub const GPS_EPOCH_UNIX_MS: u64 = 315_964_800_000;

pub const DEFAULT_GRID_MS: u64 = 100;
pub const DEFAULT_MAX_GAP_MS: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrepareError {
    #[error("negative-timestamp: {0} is not representable on the unified base")]
    NegativeTimestamp(i64),
    #[error("empty-series")]
    EmptySeries,
    #[error("series mixes keys or sources: {key}/{source_id}")]
    MixedSeries { key: DataKey, source_id: String },
    #[error("duplicate timestamp {at} in series for {key}")]
    DuplicateTimestamp { key: DataKey, at: EpochTime },
    #[error("continuous series for {key} carries a non-scalar value at {at}")]
    NonScalarContinuous { key: DataKey, at: EpochTime },
    #[error("series for {key} has off-grid timestamp {at} (grid {grid_ms} ms)")]
    OffGrid {
        key: DataKey,
        at: EpochTime,
        grid_ms: u64,
    },
    #[error("unknown key {0} during preparation")]
    UnknownKey(DataKey),
}

/// Source time standard of incoming timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeBaseKind {
    #[default]
    UnixMs,
    Its2004Ms,
    GpsMs,
}

/// A time base plus the configured leap-second correction applied when
/// converting onto the unified unix base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TimeBase {
    pub kind: TimeBaseKind,
    #[serde(default)]
    pub leap_offset_ms: u64,
}

impl TimeBase {
    pub fn unix() -> Self {
        TimeBase::default()
    }

    pub fn new(kind: TimeBaseKind, leap_offset_ms: u64) -> Self {
        TimeBase {
            kind,
            leap_offset_ms,
        }
    }
}

/// Convert a timestamp from its source base onto the unified unix-ms base.
pub fn to_unified_time(ts: i64, base: TimeBase) -> Result<EpochTime, PrepareError> {
    if ts < 0 {
        return Err(PrepareError::NegativeTimestamp(ts));
    }
    let ts = ts as u64;
    let epoch_offset = match base.kind {
        TimeBaseKind::UnixMs => 0,
        TimeBaseKind::Its2004Ms => ITS_2004_EPOCH_UNIX_MS,
        TimeBaseKind::GpsMs => GPS_EPOCH_UNIX_MS,
    };
    ts.checked_add(epoch_offset)
        .and_then(|v| v.checked_sub(base.leap_offset_ms))
        .map(EpochTime::from_millis)
        .ok_or(PrepareError::NegativeTimestamp(ts as i64))
}

/// Spatial referencing: records without a measured position get the center of
/// their collection context area and an `area-ref` provenance tag.
pub fn attach_position(record: &DataRecord, context: &GeoArea) -> DataRecord {
    if record.position.is_some() {
        return record.clone();
    }
    let mut out = record.clone();
    out.position = Some(context.center());
    out.push_trace(trace_tags::AREA_REFERENCED);
    out
}

/// Time-ordered records of a single key from a single source: the unit of
/// resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    key: DataKey,
    source_id: String,
    records: Vec<DataRecord>,
}

impl Series {
    /// Build from records of one key and one source. Records are sorted by
    /// generation time; equal timestamps are an error.
    pub fn from_records(mut records: Vec<DataRecord>) -> Result<Self, PrepareError> {
        let first = records.first().ok_or(PrepareError::EmptySeries)?;
        let key = first.key.clone();
        let source_id = first.source_id.clone();
        for r in &records {
            if r.key != key || r.source_id != source_id {
                return Err(PrepareError::MixedSeries {
                    key: r.key.clone(),
                    source_id: r.source_id.clone(),
                });
            }
        }
        records.sort_by_key(|r| r.generation_time);
        for pair in records.windows(2) {
            if pair[0].generation_time == pair[1].generation_time {
                return Err(PrepareError::DuplicateTimestamp {
                    key: key.clone(),
                    at: pair[0].generation_time,
                });
            }
        }
        Ok(Series {
            key,
            source_id,
            records,
        })
    }

    pub fn key(&self) -> &DataKey {
        &self.key
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn records(&self) -> &[DataRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<DataRecord> {
        self.records
    }

    pub fn first_time(&self) -> EpochTime {
        self.records[0].generation_time
    }

    pub fn last_time(&self) -> EpochTime {
        self.records[self.records.len() - 1].generation_time
    }
}

/// Resample a series onto the uniform grid of `grid_ms` multiples covering
/// the span between its first and last sample.
///
/// Continuous keys are linearly interpolated between neighboring inputs,
/// discrete keys (flag, token, count) are held at the latest input value;
/// grid points that coincide with an input keep that input's value and
/// quality, everything else is flagged `interpolated`. Event keys pass
/// through unchanged. No grid points are invented before the first or after
/// the last sample.
pub fn resample(
    series: &Series,
    grid_ms: u64,
    dict: &DataDictionary,
) -> Result<Series, PrepareError> {
    assert!(grid_ms > 0, "grid_ms must be positive");
    let entry = dict
        .get(series.key())
        .ok_or_else(|| PrepareError::UnknownKey(series.key().clone()))?;
    if entry.signal_class == SignalClass::Event {
        return Ok(series.clone());
    }

    let records = series.records();
    let first = series.first_time().millis();
    let last = series.last_time().millis();
    let k0 = first.div_ceil(grid_ms);
    let k1 = last / grid_ms;
    let mut out = Vec::new();
    // Index of the latest input at or before the current grid point.
    let mut prev = 0usize;
    for k in k0..=k1 {
        let t = EpochTime::from_millis(k * grid_ms);
        while prev + 1 < records.len() && records[prev + 1].generation_time <= t {
            prev += 1;
        }
        let left = &records[prev];
        let validity = ValidityInterval::new(t, grid_ms);
        let rec = if left.generation_time == t {
            let mut r = left.clone();
            r.validity = validity;
            r
        } else {
            let value = match entry.signal_class {
                SignalClass::Continuous => {
                    let right = &records[prev + 1];
                    Some(Value::Scalar(lerp_scalar(series, left, right, t)?))
                }
                SignalClass::Discrete => left.value.clone(),
                SignalClass::Event => unreachable!("events pass through"),
            };
            let mut r = DataRecord::derived(
                series.key().clone(),
                value,
                t,
                validity,
                left.position,
                series.source_id(),
                QualityFlag::Interpolated,
            );
            r.copy_trace_from(left);
            r
        };
        out.push(rec);
    }
    if out.is_empty() {
        // The span contains no grid point (inputs tighter than the grid);
        // nothing can be emitted without inventing samples outside it.
        return Err(PrepareError::EmptySeries);
    }
    Series::from_records(out)
}

fn lerp_scalar(
    series: &Series,
    left: &DataRecord,
    right: &DataRecord,
    t: EpochTime,
) -> Result<f64, PrepareError> {
    let v0 = scalar_of(series, left)?;
    let v1 = scalar_of(series, right)?;
    let t0 = left.generation_time.millis() as f64;
    let t1 = right.generation_time.millis() as f64;
    Ok(v0 + (v1 - v0) * ((t.millis() as f64 - t0) / (t1 - t0)))
}

fn scalar_of(series: &Series, r: &DataRecord) -> Result<f64, PrepareError> {
    r.value
        .as_ref()
        .and_then(|v| v.as_scalar())
        .ok_or_else(|| PrepareError::NonScalarContinuous {
            key: series.key().clone(),
            at: r.generation_time,
        })
}

/// Fill holes in an on-grid series.
///
/// Grid slots missing (or carrying only `missing` placeholders) within
/// `max_gap_ms` of the last measured or interpolated value are filled by
/// holding that value with quality `extrapolated`; slots beyond the gap limit
/// are emitted as `missing` placeholders without a value. Existing measured
/// and interpolated points are never altered, previously extrapolated points
/// are kept but do not anchor further filling, so the operation is
/// idempotent.
pub fn extrapolate_gaps(
    series: &Series,
    grid_ms: u64,
    max_gap_ms: u64,
) -> Result<Series, PrepareError> {
    assert!(grid_ms > 0, "grid_ms must be positive");
    let mut by_slot: BTreeMap<u64, &DataRecord> = BTreeMap::new();
    for r in series.records() {
        let ms = r.generation_time.millis();
        if ms % grid_ms != 0 {
            return Err(PrepareError::OffGrid {
                key: series.key().clone(),
                at: r.generation_time,
                grid_ms,
            });
        }
        by_slot.insert(ms, r);
    }
    let first = series.first_time().millis();
    let last = series.last_time().millis();

    let mut out = Vec::with_capacity(((last - first) / grid_ms + 1) as usize);
    // Anchor: last measured/interpolated value. Extrapolated points do not
    // extend the anchor, otherwise refills could chain past max_gap.
    let mut anchor: Option<&DataRecord> = None;
    let mut last_position = None;
    let mut slot = first;
    while slot <= last {
        let t = EpochTime::from_millis(slot);
        match by_slot.get(&slot) {
            Some(r) if !r.quality.is_missing() => {
                if matches!(r.quality, QualityFlag::Measured | QualityFlag::Interpolated) {
                    anchor = Some(r);
                }
                last_position = r.position.or(last_position);
                out.push((*r).clone());
            }
            _ => {
                let filled = anchor.filter(|a| slot - a.generation_time.millis() <= max_gap_ms);
                let rec = match filled {
                    Some(a) => {
                        let mut r = DataRecord::derived(
                            series.key().clone(),
                            a.value.clone(),
                            t,
                            ValidityInterval::new(t, grid_ms),
                            a.position,
                            series.source_id(),
                            QualityFlag::Extrapolated,
                        );
                        r.copy_trace_from(a);
                        r
                    }
                    None => DataRecord::derived(
                        series.key().clone(),
                        None,
                        t,
                        ValidityInterval::new(t, grid_ms),
                        last_position,
                        series.source_id(),
                        QualityFlag::Missing,
                    ),
                };
                out.push(rec);
            }
        }
        slot += grid_ms;
    }
    Series::from_records(out)
}

/// Full preparation pipeline over a mixed record batch.
///
/// Records are grouped into per-(key, source) series, given a position when
/// they lack one, resampled onto the grid and gap-filled. Event keys pass
/// through. Every output record carries the `prepared` provenance tag.
pub fn prepare_records(
    records: Vec<DataRecord>,
    context: &GeoArea,
    grid_ms: u64,
    max_gap_ms: u64,
    dict: &DataDictionary,
) -> Result<Vec<DataRecord>, PrepareError> {
    let mut groups: BTreeMap<(DataKey, String), Vec<DataRecord>> = BTreeMap::new();
    for r in records {
        let r = attach_position(&r, context);
        groups
            .entry((r.key.clone(), r.source_id.clone()))
            .or_default()
            .push(r);
    }

    let mut out = Vec::new();
    for ((key, _source), mut group) in groups {
        let entry = dict
            .get(&key)
            .ok_or_else(|| PrepareError::UnknownKey(key.clone()))?;
        group.sort_by_key(|r| r.generation_time);
        // Same source re-reporting the same instant: keep the last occurrence.
        group.reverse();
        group.dedup_by_key(|r| r.generation_time);
        group.reverse();

        let series = Series::from_records(group)?;
        let prepared = if entry.signal_class == SignalClass::Event {
            series
        } else {
            match resample(&series, grid_ms, dict) {
                Ok(resampled) => extrapolate_gaps(&resampled, grid_ms, max_gap_ms)?,
                // A span shorter than the grid yields no grid point; keep the
                // raw samples rather than dropping the measurement.
                Err(PrepareError::EmptySeries) => series,
                Err(e) => return Err(e),
            }
        };
        for mut r in prepared.into_records() {
            r.push_trace(trace_tags::PREPARED);
            out.push(r);
        }
    }
    out.sort_by(|a, b| {
        (a.generation_time, &a.key, &a.source_id).cmp(&(b.generation_time, &b.key, &b.source_id))
    });
    Ok(out)
}
