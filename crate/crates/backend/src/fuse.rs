//! The backend data fusion service.
//!
//! Aggregators register with a subset of the dictionary keys, push record
//! batches, and the service runs the preparation pipeline and assembles
//! spatio-temporal situations: one per (monitored area, tumbling window) cell
//! that received data. Monitored areas must be pairwise disjoint so a record
//! is never assigned twice.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use situ_core::record::trace_tags;
use situ_core::{
    areas_overlap, validate_record, Containment, DataDictionary, DataKey, DataRecord, EpochTime,
    GeoArea, ValidationError, ValidityInterval,
};

use crate::aggregate::AggregatorKind;
use crate::prepare::{prepare_records, to_unified_time, PrepareError, TimeBase};

/// Requirement groups used for situation completeness: one key of each
/// domain present and non-missing.
pub const REQUIRED_GROUPS: [&str; 4] = ["driver", "env", "traffic", "vehicle"];

pub const DEFAULT_WINDOW_MS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub window_ms: u64,
    pub grid_ms: u64,
    pub max_gap_ms: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            window_ms: DEFAULT_WINDOW_MS,
            grid_ms: crate::prepare::DEFAULT_GRID_MS,
            max_gap_ms: crate::prepare::DEFAULT_MAX_GAP_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistrationError {
    #[error("empty-key-set")]
    EmptyKeySet,
    #[error("unknown-keys: {0:?}")]
    UnknownKeys(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("unknown-session: {0}")]
    UnknownSession(String),
    #[error("monitored areas {a} and {b} overlap")]
    OverlappingMonitoredAreas { a: usize, b: usize },
    #[error("no monitored areas configured")]
    NoMonitoredAreas,
    #[error("empty-required-set")]
    EmptyRequiredSet,
    #[error(transparent)]
    Prepare(#[from] PrepareError),
}

/// An aggregator's announcement of what it provides.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationRequest {
    pub aggregator_id: String,
    pub kind: AggregatorKind,
    pub keys: BTreeSet<DataKey>,
    pub time_base: TimeBase,
}

/// Accepted registration.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub aggregator_id: String,
    pub kind: AggregatorKind,
    pub keys: BTreeSet<DataKey>,
    pub established: EpochTime,
    pub time_base: TimeBase,
}

/// Per-record ingest outcome, in batch order.
#[derive(Debug, Clone, PartialEq)]
pub enum IngestVerdict {
    Ok,
    KeyNotInSession,
    Invalid(ValidationError),
    BadTimestamp,
    /// The record could not be parsed at all (wire layer).
    MalformedRecord,
}

impl IngestVerdict {
    pub fn code(&self) -> &'static str {
        match self {
            IngestVerdict::Ok => "ok",
            IngestVerdict::KeyNotInSession => "key-not-in-session",
            IngestVerdict::Invalid(e) => e.code(),
            IngestVerdict::BadTimestamp => "bad-timestamp",
            IngestVerdict::MalformedRecord => "malformed-record",
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, IngestVerdict::Ok)
    }
}

/// All prepared records intersecting one (area, window) cell: the unit of
/// fusion, storage and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Situation {
    pub situation_id: String,
    pub area: GeoArea,
    pub window: ValidityInterval,
    pub records: BTreeMap<DataKey, Vec<DataRecord>>,
    pub completeness: f64,
}

impl Situation {
    pub fn record_count(&self) -> usize {
        self.records.values().map(Vec::len).sum()
    }

    pub fn all_records(&self) -> impl Iterator<Item = &DataRecord> {
        self.records.values().flatten()
    }

    /// Canonical serialized form, used for idempotence/conflict comparisons.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("situation serialization is infallible")
    }
}

/// Deterministic situation id from the window start and the area content.
pub fn situation_id(area: &GeoArea, window_start: EpochTime) -> String {
    let area_json = serde_json::to_string(area).expect("area serialization is infallible");
    let digest = Sha256::digest(area_json.as_bytes());
    format!(
        "sit-{}-{}",
        window_start.millis(),
        hex::encode(&digest[..4])
    )
}

/// Result of one assembly pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyOutput {
    pub situations: Vec<Situation>,
    /// Prepared records outside every monitored area.
    pub unassigned: usize,
    /// Total records that came out of preparation in this pass.
    pub prepared_count: usize,
}

/// Fraction of `required` keys for which the situation holds at least one
/// record that is not a missing placeholder.
pub fn completeness(s: &Situation, required: &BTreeSet<DataKey>) -> Result<f64, FusionError> {
    if required.is_empty() {
        return Err(FusionError::EmptyRequiredSet);
    }
    let present = required.iter().filter(|k| has_non_missing(s, k)).count();
    Ok(present as f64 / required.len() as f64)
}

/// Group-level completeness: fraction of key groups (first segments) with at
/// least one non-missing record.
pub fn completeness_groups(s: &Situation, groups: &[&str]) -> Result<f64, FusionError> {
    if groups.is_empty() {
        return Err(FusionError::EmptyRequiredSet);
    }
    let present = groups
        .iter()
        .filter(|g| {
            s.records
                .iter()
                .any(|(k, recs)| k.group() == **g && recs.iter().any(|r| !r.quality.is_missing()))
        })
        .count();
    Ok(present as f64 / groups.len() as f64)
}

fn has_non_missing(s: &Situation, key: &DataKey) -> bool {
    s.records
        .get(key)
        .map(|recs| recs.iter().any(|r| !r.quality.is_missing()))
        .unwrap_or(false)
}

/// The fusion service state. Ingestion may run concurrently per session under
/// an external lock; assembly and storage commits are serialized behind it.
#[derive(Debug)]
pub struct FusionService {
    dict: DataDictionary,
    monitored_areas: Vec<GeoArea>,
    config: FusionConfig,
    default_context: GeoArea,
    sessions: BTreeMap<String, Session>,
    session_counter: u64,
    buffer: Vec<DataRecord>,
    /// Records with validity starting before this instant belong to windows
    /// that were already assembled; late arrivals are counted, not assembled.
    assembled_until: EpochTime,
    late_discarded: usize,
    ingested: usize,
}

impl FusionService {
    /// `default_context` supplies positions for records that arrive without
    /// one; it defaults to the first monitored area.
    pub fn new(
        dict: DataDictionary,
        monitored_areas: Vec<GeoArea>,
        default_context: Option<GeoArea>,
        config: FusionConfig,
    ) -> Result<Self, FusionError> {
        assert!(
            config.window_ms > 0 && config.grid_ms > 0,
            "fusion windows and grid must be positive"
        );
        check_disjoint(&monitored_areas)?;
        let default_context = default_context
            .or_else(|| monitored_areas.first().cloned())
            .ok_or(FusionError::NoMonitoredAreas)?;
        Ok(FusionService {
            dict,
            monitored_areas,
            config,
            default_context,
            sessions: BTreeMap::new(),
            session_counter: 0,
            buffer: Vec::new(),
            assembled_until: EpochTime::ZERO,
            late_discarded: 0,
            ingested: 0,
        })
    }

    pub fn dictionary(&self) -> &DataDictionary {
        &self.dict
    }

    pub fn monitored_areas(&self) -> &[GeoArea] {
        &self.monitored_areas
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn ingested(&self) -> usize {
        self.ingested
    }

    pub fn late_discarded(&self) -> usize {
        self.late_discarded
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Latest validity start seen so far, for watermark-style assembly.
    pub fn max_seen_start(&self) -> EpochTime {
        self.buffer
            .iter()
            .map(|r| r.validity.start)
            .max()
            .unwrap_or(EpochTime::ZERO)
    }

    /// Accept a registration iff the key set is non-empty and every key
    /// resolves in the dictionary; otherwise list every unknown key.
    pub fn register(&mut self, req: RegistrationRequest) -> Result<Session, RegistrationError> {
        if req.keys.is_empty() {
            return Err(RegistrationError::EmptyKeySet);
        }
        let unknown: Vec<String> = req
            .keys
            .iter()
            .filter(|k| !self.dict.contains(k))
            .map(|k| k.as_str().to_owned())
            .collect();
        if !unknown.is_empty() {
            return Err(RegistrationError::UnknownKeys(unknown));
        }
        self.session_counter += 1;
        let session = Session {
            session_id: format!("sess-{:04}", self.session_counter),
            aggregator_id: req.aggregator_id,
            kind: req.kind,
            keys: req.keys,
            established: self.assembled_until,
            time_base: req.time_base,
        };
        self.sessions
            .insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    pub fn session(&self, session_id: &str) -> Option<&Session> {
        self.sessions.get(session_id)
    }

    /// Ingest a batch on a session. The verdict list preserves batch order
    /// and length; `Err` slots in the input stand for unparseable records.
    pub fn ingest_mixed(
        &mut self,
        session_id: &str,
        batch: Vec<Result<DataRecord, ()>>,
    ) -> Result<Vec<IngestVerdict>, FusionError> {
        let session = self
            .sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| FusionError::UnknownSession(session_id.to_owned()))?;

        let mut verdicts = Vec::with_capacity(batch.len());
        for item in batch {
            let verdict = match item {
                Err(()) => IngestVerdict::MalformedRecord,
                Ok(record) => self.ingest_one(&session, record),
            };
            verdicts.push(verdict);
        }
        Ok(verdicts)
    }

    pub fn ingest(
        &mut self,
        session_id: &str,
        batch: Vec<DataRecord>,
    ) -> Result<Vec<IngestVerdict>, FusionError> {
        self.ingest_mixed(session_id, batch.into_iter().map(Ok).collect())
    }

    fn ingest_one(&mut self, session: &Session, mut record: DataRecord) -> IngestVerdict {
        if !session.keys.contains(&record.key) {
            return IngestVerdict::KeyNotInSession;
        }
        // Unify the time base before validation; identity for unix sources.
        if session.time_base != TimeBase::unix() {
            let gen = to_unified_time(record.generation_time.millis() as i64, session.time_base);
            let start = to_unified_time(record.validity.start.millis() as i64, session.time_base);
            match (gen, start) {
                (Ok(gen), Ok(start)) => {
                    record.generation_time = gen;
                    record.validity = ValidityInterval::new(start, record.validity.duration_ms);
                }
                _ => return IngestVerdict::BadTimestamp,
            }
        }
        if let Err(e) = validate_record(&record, &self.dict) {
            return IngestVerdict::Invalid(e);
        }
        record.push_trace(trace_tags::session(&session.session_id));
        self.buffer.push(record);
        self.ingested += 1;
        IngestVerdict::Ok
    }

    /// Prepare and assemble every buffered record whose window closes before
    /// `up_to`. Pass `EpochTime::MAX` to drain everything.
    pub fn assemble_up_to(&mut self, up_to: EpochTime) -> Result<AssemblyOutput, FusionError> {
        let window_ms = self.config.window_ms;
        let cutoff = up_to.window_start(window_ms);

        let mut to_process = Vec::new();
        let mut keep = Vec::new();
        for r in self.buffer.drain(..) {
            if r.validity.start < self.assembled_until {
                self.late_discarded += 1;
            } else if r.validity.start < cutoff {
                to_process.push(r);
            } else {
                keep.push(r);
            }
        }
        self.buffer = keep;

        let prepared = prepare_records(
            to_process,
            &self.default_context,
            self.config.grid_ms,
            self.config.max_gap_ms,
            &self.dict,
        )?;
        let prepared_count = prepared.len();

        let mut cells: BTreeMap<(u64, usize), BTreeMap<DataKey, Vec<DataRecord>>> = BTreeMap::new();
        let mut unassigned = 0usize;
        for r in prepared {
            let area_idx = self.monitored_areas.iter().position(|a| {
                r.position
                    .map(|p| !matches!(a.contains(p), Ok(Containment::Outside)))
                    .unwrap_or(false)
            });
            match area_idx {
                Some(idx) => {
                    let window = r.validity.start.window_start(window_ms).millis();
                    cells
                        .entry((window, idx))
                        .or_default()
                        .entry(r.key.clone())
                        .or_default()
                        .push(r);
                }
                None => unassigned += 1,
            }
        }

        let mut situations = Vec::with_capacity(cells.len());
        for ((window_start, area_idx), records) in cells {
            let area = self.monitored_areas[area_idx].clone();
            let window_start = EpochTime::from_millis(window_start);
            let window = ValidityInterval::new(window_start, window_ms);
            let mut situation = Situation {
                situation_id: situation_id(&area, window_start),
                area,
                window,
                records,
                completeness: 0.0,
            };
            situation.completeness = completeness_groups(&situation, &REQUIRED_GROUPS)?;
            debug_assert!(situation
                .all_records()
                .all(|r| r.validity.intersects(&window)));
            situations.push(situation);
        }
        situations.sort_by(|a, b| {
            (a.window.start, &a.situation_id).cmp(&(b.window.start, &b.situation_id))
        });

        self.assembled_until = self.assembled_until.max(cutoff);
        Ok(AssemblyOutput {
            situations,
            unassigned,
            prepared_count,
        })
    }
}

fn check_disjoint(areas: &[GeoArea]) -> Result<(), FusionError> {
    for i in 0..areas.len() {
        for j in i + 1..areas.len() {
            if areas_overlap(&areas[i], &areas[j]) {
                return Err(FusionError::OverlappingMonitoredAreas { a: i, b: j });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use situ_core::dictionary::{default_dictionary, keys};
    use situ_core::{offset_point, DataRecord, GeoPoint, QualityFlag, Value};

    fn t(ms: u64) -> EpochTime {
        EpochTime::from_millis(ms)
    }

    fn origin() -> GeoPoint {
        GeoPoint::from_degrees(49.0, 7.0).unwrap()
    }

    fn two_areas() -> Vec<GeoArea> {
        vec![
            GeoArea::circle(origin(), 90.0).unwrap(),
            GeoArea::circle(offset_point(origin(), 200.0, 0.0).unwrap(), 90.0).unwrap(),
        ]
    }

    fn service() -> FusionService {
        FusionService::new(
            default_dictionary(),
            two_areas(),
            None,
            FusionConfig::default(),
        )
        .unwrap()
    }

    fn keyset(names: &[&str]) -> BTreeSet<DataKey> {
        names.iter().map(|n| DataKey::new(*n).unwrap()).collect()
    }

    fn dda_request(keys: BTreeSet<DataKey>) -> RegistrationRequest {
        RegistrationRequest {
            aggregator_id: "dda-ego".into(),
            kind: AggregatorKind::Dda,
            keys,
            time_base: TimeBase::unix(),
        }
    }

    fn hr_record(ms: u64, v: f64, pos: GeoPoint) -> DataRecord {
        DataRecord::measured(
            DataKey::new(keys::DRIVER_HEART_RATE).unwrap(),
            Value::Scalar(v),
            t(ms),
            ValidityInterval::new(t(ms), 100),
            Some(pos),
            "dda-ego",
        )
    }

    #[test]
    fn registration_accepts_known_keys() {
        let mut svc = service();
        let session = svc
            .register(dda_request(keyset(&[
                keys::DRIVER_HEART_RATE,
                keys::DRIVER_PUPIL_DIAMETER,
            ])))
            .unwrap();
        assert_eq!(session.session_id, "sess-0001");
        assert_eq!(session.keys.len(), 2);
    }

    #[test]
    fn registration_lists_every_unknown_key() {
        let mut svc = service();
        let mut ks = keyset(&[keys::DRIVER_HEART_RATE]);
        ks.insert(DataKey::new("driver.mood").unwrap());
        let err = svc.register(dda_request(ks)).unwrap_err();
        assert_eq!(
            err,
            RegistrationError::UnknownKeys(vec!["driver.mood".into()])
        );
    }

    #[test]
    fn registration_rejects_empty_key_set() {
        let mut svc = service();
        let err = svc.register(dda_request(BTreeSet::new())).unwrap_err();
        assert_eq!(err, RegistrationError::EmptyKeySet);
    }

    #[test]
    fn ingest_accepts_valid_batch() {
        let mut svc = service();
        let session = svc
            .register(dda_request(keyset(&[keys::DRIVER_HEART_RATE])))
            .unwrap();
        let batch: Vec<_> = (0..10)
            .map(|i| hr_record(i * 100, 80.0, origin()))
            .collect();
        let verdicts = svc.ingest(&session.session_id, batch).unwrap();
        assert_eq!(verdicts.len(), 10);
        assert!(verdicts.iter().all(IngestVerdict::is_ok));
        assert_eq!(svc.ingested(), 10);
    }

    #[test]
    fn foreign_key_rejected_per_record() {
        let mut svc = service();
        let session = svc
            .register(dda_request(keyset(&[keys::DRIVER_HEART_RATE])))
            .unwrap();
        let phase = DataRecord::measured(
            DataKey::new(keys::TRAFFIC_LIGHT_PHASE).unwrap(),
            Value::Token("green".into()),
            t(0),
            ValidityInterval::new(t(0), 100),
            Some(origin()),
            "rsu-1",
        );
        let verdicts = svc
            .ingest(
                &session.session_id,
                vec![
                    hr_record(0, 80.0, origin()),
                    phase,
                    hr_record(100, 81.0, origin()),
                ],
            )
            .unwrap();
        assert_eq!(verdicts[0], IngestVerdict::Ok);
        assert_eq!(verdicts[1], IngestVerdict::KeyNotInSession);
        assert_eq!(verdicts[2], IngestVerdict::Ok);
    }

    #[test]
    fn unknown_session_rejected_whole() {
        let mut svc = service();
        let err = svc
            .ingest("sess-9999", vec![hr_record(0, 80.0, origin())])
            .unwrap_err();
        assert!(matches!(err, FusionError::UnknownSession(_)));
        assert_eq!(svc.ingested(), 0);
    }

    #[test]
    fn time_base_conversion_applies_at_ingest() {
        let mut svc = service();
        let mut req = dda_request(keyset(&[keys::DRIVER_HEART_RATE]));
        req.time_base = TimeBase::new(crate::prepare::TimeBaseKind::GpsMs, 0);
        let session = svc.register(req).unwrap();
        let verdicts = svc
            .ingest(&session.session_id, vec![hr_record(1000, 80.0, origin())])
            .unwrap();
        assert_eq!(verdicts, vec![IngestVerdict::Ok]);
        assert_eq!(svc.buffer[0].generation_time.millis(), 315_964_801_000);
    }

    #[test]
    fn assemble_groups_by_window() {
        let mut svc = service();
        let session = svc
            .register(dda_request(keyset(&[keys::DRIVER_HEART_RATE])))
            .unwrap();
        // Records at 100, 400, 900 all in window [0, 1000) and area 0.
        let batch = vec![
            hr_record(100, 80.0, origin()),
            hr_record(400, 81.0, origin()),
            hr_record(900, 82.0, origin()),
        ];
        svc.ingest(&session.session_id, batch).unwrap();
        let out = svc.assemble_up_to(EpochTime::MAX).unwrap();
        assert_eq!(out.situations.len(), 1);
        assert_eq!(out.unassigned, 0);
        let total: usize = out.situations.iter().map(Situation::record_count).sum();
        assert_eq!(total + out.unassigned, out.prepared_count);
    }

    #[test]
    fn window_boundary_splits_situations() {
        let mut svc = service();
        let session = svc
            .register(dda_request(keyset(&[keys::DRIVER_HEART_RATE])))
            .unwrap();
        svc.ingest(
            &session.session_id,
            vec![
                hr_record(900, 80.0, origin()),
                hr_record(1100, 81.0, origin()),
            ],
        )
        .unwrap();
        let out = svc.assemble_up_to(EpochTime::MAX).unwrap();
        assert_eq!(out.situations.len(), 2);
        assert_eq!(out.situations[0].window.start, t(0));
        assert_eq!(out.situations[1].window.start, t(1000));
    }

    #[test]
    fn far_records_are_unassigned() {
        let mut svc = service();
        let session = svc
            .register(dda_request(keyset(&[keys::DRIVER_HEART_RATE])))
            .unwrap();
        let far = offset_point(origin(), 5000.0, 0.0).unwrap();
        svc.ingest(&session.session_id, vec![hr_record(100, 80.0, far)])
            .unwrap();
        let out = svc.assemble_up_to(EpochTime::MAX).unwrap();
        assert!(out.situations.is_empty());
        assert_eq!(out.unassigned, out.prepared_count);
        assert!(out.unassigned > 0);
    }

    #[test]
    fn assembly_ids_are_deterministic() {
        let build = || {
            let mut svc = service();
            let session = svc
                .register(dda_request(keyset(&[keys::DRIVER_HEART_RATE])))
                .unwrap();
            svc.ingest(
                &session.session_id,
                vec![
                    hr_record(100, 80.0, origin()),
                    hr_record(1500, 82.0, origin()),
                ],
            )
            .unwrap();
            svc.assemble_up_to(EpochTime::MAX).unwrap()
        };
        let a = build();
        let b = build();
        assert_eq!(a.situations, b.situations);
    }

    #[test]
    fn overlapping_monitored_areas_rejected() {
        let areas = vec![
            GeoArea::circle(origin(), 200.0).unwrap(),
            GeoArea::circle(offset_point(origin(), 100.0, 0.0).unwrap(), 200.0).unwrap(),
        ];
        let err = FusionService::new(default_dictionary(), areas, None, FusionConfig::default())
            .unwrap_err();
        assert!(matches!(
            err,
            FusionError::OverlappingMonitoredAreas { a: 0, b: 1 }
        ));
    }

    #[test]
    fn completeness_counts_required_keys() {
        let mut svc = service();
        let session = svc
            .register(dda_request(keyset(&[keys::DRIVER_HEART_RATE])))
            .unwrap();
        svc.ingest(&session.session_id, vec![hr_record(100, 80.0, origin())])
            .unwrap();
        let out = svc.assemble_up_to(EpochTime::MAX).unwrap();
        let s = &out.situations[0];

        let all4 = keyset(&[keys::DRIVER_HEART_RATE]);
        assert_eq!(completeness(s, &all4).unwrap(), 1.0);

        let required = keyset(&[
            keys::DRIVER_HEART_RATE,
            keys::DRIVER_PUPIL_DIAMETER,
            keys::ENV_VISIBILITY,
            keys::VEHICLE_SPEED,
        ]);
        assert_eq!(completeness(s, &required).unwrap(), 0.25);

        assert_eq!(
            completeness(s, &BTreeSet::new()),
            Err(FusionError::EmptyRequiredSet)
        );

        // Group completeness: only the driver group is present.
        assert_eq!(s.completeness, 0.25);
    }

    #[test]
    fn missing_placeholders_do_not_count_as_present() {
        let mut s = Situation {
            situation_id: "sit-x".into(),
            area: GeoArea::circle(origin(), 90.0).unwrap(),
            window: ValidityInterval::new(t(0), 1000),
            records: BTreeMap::new(),
            completeness: 0.0,
        };
        let key = DataKey::new(keys::DRIVER_HEART_RATE).unwrap();
        let placeholder = DataRecord::derived(
            key.clone(),
            None,
            t(100),
            ValidityInterval::new(t(100), 100),
            Some(origin()),
            "prep",
            QualityFlag::Missing,
        );
        s.records.insert(key.clone(), vec![placeholder]);
        let required = [key].into_iter().collect();
        assert_eq!(completeness(&s, &required).unwrap(), 0.0);
    }

    #[test]
    fn ingested_records_carry_session_and_prepared_tags() {
        let mut svc = service();
        let session = svc
            .register(dda_request(keyset(&[keys::DRIVER_HEART_RATE])))
            .unwrap();
        svc.ingest(&session.session_id, vec![hr_record(100, 80.0, origin())])
            .unwrap();
        let out = svc.assemble_up_to(EpochTime::MAX).unwrap();
        for s in &out.situations {
            for r in s.all_records() {
                assert!(r.has_trace_tag(&trace_tags::session("sess-0001")));
                assert!(r.has_trace_tag(trace_tags::PREPARED));
            }
        }
    }
}
