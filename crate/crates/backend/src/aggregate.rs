//! The four aggregator roles.
//!
//! TDA and EDA are backend services with a geographic responsibility area;
//! they buffer validated records and prevent duplicates early. VDA and DDA
//! run on the vehicle: their data cannot be combined with other vehicles, so
//! they pre-aggregate locally in tumbling windows before anything leaves the
//! node.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use situ_core::dictionary::SignalClass;
use situ_core::record::trace_tags;
use situ_core::{
    great_circle_distance_m, Containment, DataDictionary, DataKey, DataRecord, EpochTime, GeoArea,
    ValidityInterval, Value,
};

/// Two records closer than this are duplicate candidates.
pub const DUPLICATE_DISTANCE_M: f64 = 5.0;

/// Default on-node pre-aggregation window.
pub const DEFAULT_PREAGG_WINDOW_MS: u64 = 500;

/// Aggregator role. The registered key partition follows the role: TDA takes
/// `traffic.*`, EDA `env.*`, VDA `vehicle.*`, DDA `driver.*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregatorKind {
    #[serde(rename = "TDA")]
    Tda,
    #[serde(rename = "EDA")]
    Eda,
    #[serde(rename = "VDA")]
    Vda,
    #[serde(rename = "DDA")]
    Dda,
}

impl AggregatorKind {
    pub fn key_group(self) -> &'static str {
        match self {
            AggregatorKind::Tda => "traffic",
            AggregatorKind::Eda => "env",
            AggregatorKind::Vda => "vehicle",
            AggregatorKind::Dda => "driver",
        }
    }

    /// Backend aggregators collect for geographic areas; on-node ones
    /// pre-aggregate per vehicle.
    pub fn is_backend(self) -> bool {
        matches!(self, AggregatorKind::Tda | AggregatorKind::Eda)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("{kind:?} is not a backend aggregator kind")]
    NotBackendKind { kind: AggregatorKind },
    #[error("{kind:?} is not an on-node aggregator kind")]
    NotOnboardKind { kind: AggregatorKind },
}

/// Why a record was not buffered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("key-not-registered")]
    KeyNotRegistered,
    #[error("outside-responsibility")]
    OutsideResponsibility,
}

/// One aggregator instance. Single-writer: callers serialize `accept_record`
/// and `flush` per instance; distinct instances are independent.
#[derive(Debug, Clone)]
pub struct Aggregator {
    id: String,
    kind: AggregatorKind,
    registered_keys: BTreeSet<DataKey>,
    responsibility: Option<GeoArea>,
    window_ms: Option<u64>,
    signal_classes: BTreeMap<DataKey, SignalClass>,
    buffer: Vec<DataRecord>,
}

impl Aggregator {
    /// Backend aggregator (TDA/EDA) with a geographic responsibility area.
    pub fn backend(
        id: impl Into<String>,
        kind: AggregatorKind,
        responsibility: GeoArea,
        dict: &DataDictionary,
    ) -> Result<Self, AggregateError> {
        if !kind.is_backend() {
            return Err(AggregateError::NotBackendKind { kind });
        }
        Ok(Self::build(id, kind, dict, Some(responsibility), None))
    }

    /// On-node aggregator (VDA/DDA) with a pre-aggregation window.
    pub fn onboard(
        id: impl Into<String>,
        kind: AggregatorKind,
        window_ms: u64,
        dict: &DataDictionary,
    ) -> Result<Self, AggregateError> {
        if kind.is_backend() {
            return Err(AggregateError::NotOnboardKind { kind });
        }
        assert!(window_ms > 0, "window_ms must be positive");
        Ok(Self::build(id, kind, dict, None, Some(window_ms)))
    }

    fn build(
        id: impl Into<String>,
        kind: AggregatorKind,
        dict: &DataDictionary,
        responsibility: Option<GeoArea>,
        window_ms: Option<u64>,
    ) -> Self {
        let registered_keys = dict.keys_with_group(kind.key_group());
        let signal_classes = registered_keys
            .iter()
            .filter_map(|k| dict.get(k).map(|e| (k.clone(), e.signal_class)))
            .collect();
        Aggregator {
            id: id.into(),
            kind,
            registered_keys,
            responsibility,
            window_ms,
            signal_classes,
            buffer: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> AggregatorKind {
        self.kind
    }

    pub fn registered_keys(&self) -> &BTreeSet<DataKey> {
        &self.registered_keys
    }

    pub fn responsibility(&self) -> Option<&GeoArea> {
        self.responsibility.as_ref()
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Buffer a validated record. Backend aggregators additionally require the
    /// position to fall inside (or on the border of) their responsibility.
    pub fn accept_record(&mut self, record: DataRecord) -> Result<(), RejectReason> {
        if !self.registered_keys.contains(&record.key) {
            return Err(RejectReason::KeyNotRegistered);
        }
        if let Some(area) = &self.responsibility {
            let inside = record
                .position
                .map(|p| !matches!(area.contains(p), Ok(Containment::Outside)))
                .unwrap_or(false);
            if !inside {
                return Err(RejectReason::OutsideResponsibility);
            }
        }
        // Keep the buffer in generation-time order, appends stay stable.
        let at = self
            .buffer
            .partition_point(|r| r.generation_time <= record.generation_time);
        self.buffer.insert(at, record);
        Ok(())
    }

    /// Pre-aggregate on-node data up to `up_to`: records in closed tumbling
    /// windows leave the buffer; continuous keys collapse to one mean record
    /// per (key, window), discrete and event records pass through unchanged.
    pub fn pre_aggregate_local(
        &mut self,
        up_to: EpochTime,
    ) -> Result<Vec<DataRecord>, AggregateError> {
        let Some(window_ms) = self.window_ms else {
            return Err(AggregateError::NotOnboardKind { kind: self.kind });
        };
        let cutoff = up_to.window_start(window_ms);
        let split = self.buffer.partition_point(|r| r.generation_time < cutoff);
        let closed: Vec<DataRecord> = self.buffer.drain(..split).collect();

        let mut groups: BTreeMap<(u64, DataKey), Vec<DataRecord>> = BTreeMap::new();
        for r in closed {
            let window = r.generation_time.window_start(window_ms).millis();
            groups.entry((window, r.key.clone())).or_default().push(r);
        }

        let mut out = Vec::new();
        for ((window_start, key), group) in groups {
            let continuous = self.signal_classes.get(&key) == Some(&SignalClass::Continuous);
            if continuous {
                out.push(window_mean(&key, window_start, window_ms, &group));
            } else {
                out.extend(group);
            }
        }
        out.sort_by(|a, b| {
            (a.generation_time, &a.key, &a.source_id).cmp(&(
                b.generation_time,
                &b.key,
                &b.source_id,
            ))
        });
        Ok(out)
    }

    /// Return and clear the buffer contents: deduplicated for TDA/EDA,
    /// pre-aggregated for VDA/DDA. Records keep their original source and
    /// gain this aggregator's id as a relay annotation.
    pub fn flush(&mut self) -> Batch {
        let mut records = if self.kind.is_backend() {
            let deduped = deduplicate(&self.buffer);
            self.buffer.clear();
            deduped
        } else {
            self.pre_aggregate_local(EpochTime::MAX)
                .expect("on-node aggregators have a window")
        };
        let tag = trace_tags::relay(&self.id);
        for r in &mut records {
            r.push_trace(tag.clone());
        }
        Batch {
            aggregator_id: self.id.clone(),
            kind: self.kind,
            records,
        }
    }
}

fn window_mean(
    key: &DataKey,
    window_start: u64,
    window_ms: u64,
    group: &[DataRecord],
) -> DataRecord {
    let values: Vec<f64> = group
        .iter()
        .filter_map(|r| r.value.as_ref().and_then(Value::as_scalar))
        .collect();
    let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
    let last = group.last().expect("groups are non-empty");
    let start = EpochTime::from_millis(window_start);
    let mut rec = DataRecord::measured(
        key.clone(),
        Value::Scalar(mean),
        start.add_millis(window_ms),
        ValidityInterval::new(start, window_ms),
        last.position,
        last.source_id.clone(),
    );
    rec.copy_trace_from(last);
    rec
}

/// Remove duplicates from a time-ordered buffer.
///
/// Two records are duplicates iff they share the key and value kind, their
/// validity intervals overlap, and their positions are within
/// [`DUPLICATE_DISTANCE_M`] (great-circle). Among duplicates only the record
/// with the latest generation time survives, ties going to the
/// lexicographically smallest source id. Idempotent and order-independent.
pub fn deduplicate(buffer: &[DataRecord]) -> Vec<DataRecord> {
    // Bitwise-identical duplicates (e.g. one broadcast relayed by two
    // stations) collapse first; dominance cannot separate them.
    let mut seen = BTreeSet::new();
    let uniq: Vec<&DataRecord> = buffer
        .iter()
        .filter(|r| seen.insert(r.to_json_line()))
        .collect();

    uniq.iter()
        .enumerate()
        .filter(|(i, r)| {
            !uniq
                .iter()
                .enumerate()
                .any(|(j, s)| *i != j && dominates(s, r))
        })
        .map(|(_, r)| (*r).clone())
        .collect()
}

fn is_duplicate_pair(a: &DataRecord, b: &DataRecord) -> bool {
    if a.key != b.key {
        return false;
    }
    let kinds_match = match (&a.value, &b.value) {
        (Some(va), Some(vb)) => va.kind() == vb.kind(),
        _ => false,
    };
    if !kinds_match || !a.validity.intersects(&b.validity) {
        return false;
    }
    match (a.position, b.position) {
        (Some(pa), Some(pb)) => great_circle_distance_m(pa, pb) <= DUPLICATE_DISTANCE_M,
        (None, None) => true,
        _ => false,
    }
}

fn dominates(s: &DataRecord, r: &DataRecord) -> bool {
    is_duplicate_pair(s, r)
        && (s.generation_time > r.generation_time
            || (s.generation_time == r.generation_time && s.source_id < r.source_id))
}

/// A flushed batch: header plus records in the canonical layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub aggregator_id: String,
    pub kind: AggregatorKind,
    pub records: Vec<DataRecord>,
}

/// Serialized batch header line: `{aggregator_id, kind, count}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchHeader {
    pub aggregator_id: String,
    pub kind: AggregatorKind,
    pub count: usize,
}

#[derive(Debug, Error)]
pub enum BatchIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("batch framing error at line {line}: {message}")]
    Framing { line: usize, message: String },
}

impl Batch {
    /// Write as line-delimited records preceded by a header line.
    pub fn write_lines<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header = BatchHeader {
            aggregator_id: self.aggregator_id.clone(),
            kind: self.kind,
            count: self.records.len(),
        };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for r in &self.records {
            writeln!(w, "{}", r.to_json_line())?;
        }
        Ok(())
    }

    pub fn read_lines<R: BufRead>(r: R) -> Result<Batch, BatchIoError> {
        let mut lines = r.lines();
        let header_line = lines.next().ok_or(BatchIoError::Framing {
            line: 1,
            message: "missing header".into(),
        })??;
        let header: BatchHeader =
            serde_json::from_str(&header_line).map_err(|e| BatchIoError::Framing {
                line: 1,
                message: e.to_string(),
            })?;
        let mut records = Vec::with_capacity(header.count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            let rec = DataRecord::from_json_line(&line).map_err(|e| BatchIoError::Framing {
                line: i + 2,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        if records.len() != header.count {
            return Err(BatchIoError::Framing {
                line: records.len() + 1,
                message: format!("expected {} records, got {}", header.count, records.len()),
            });
        }
        Ok(Batch {
            aggregator_id: header.aggregator_id,
            kind: header.kind,
            records,
        })
    }
}
