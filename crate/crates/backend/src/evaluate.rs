//! Situation evaluation: driver-load, traffic-complexity and
//! environment-severity components, the handover suitability score and
//! recommendation, situation similarity, and the stress-map export.
//!
//! The scoring model is a transparent linear baseline behind a pluggable
//! scorer interface, so a learned model can be substituted later without
//! touching storage or fusion. Every coefficient lives in [`ScoringConfig`].

use std::collections::BTreeSet;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use situ_core::dictionary::keys;
use situ_core::{DataDictionary, DataKey, EpochTime, GeoArea, GeoPoint, Value, EARTH_RADIUS_M};

use crate::fuse::{completeness_groups, Situation, REQUIRED_GROUPS};
use crate::store::{SituationStore, StoredSituation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluateError {
    #[error("invalid-weights: w_driver={w_driver}, w_traffic={w_traffic}, w_env={w_env}, threshold={threshold}")]
    InvalidWeights {
        w_driver: f64,
        w_traffic: f64,
        w_env: f64,
        threshold: f64,
    },
    #[error("degenerate-box: stress map bounding box has no extent")]
    DegenerateBox,
}

/// Direction of the control transition being scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoverDirection {
    VehicleToDriver,
    DriverToVehicle,
}

/// Component weights and the recommendation threshold. Weights must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreWeights {
    pub w_driver: f64,
    pub w_traffic: f64,
    pub w_env: f64,
    pub threshold: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            w_driver: 0.40,
            w_traffic: 0.35,
            w_env: 0.25,
            threshold: 0.60,
        }
    }
}

impl ScoreWeights {
    pub fn new(
        w_driver: f64,
        w_traffic: f64,
        w_env: f64,
        threshold: f64,
    ) -> Result<Self, EvaluateError> {
        let w = ScoreWeights {
            w_driver,
            w_traffic,
            w_env,
            threshold,
        };
        w.validate()?;
        Ok(w)
    }

    /// Build from possibly unnormalized non-negative weights by dividing
    /// through their sum.
    pub fn normalized(
        w_driver: f64,
        w_traffic: f64,
        w_env: f64,
        threshold: f64,
    ) -> Result<Self, EvaluateError> {
        let sum = w_driver + w_traffic + w_env;
        if !(sum.is_finite() && sum > 0.0) {
            return Err(EvaluateError::InvalidWeights {
                w_driver,
                w_traffic,
                w_env,
                threshold,
            });
        }
        Self::new(w_driver / sum, w_traffic / sum, w_env / sum, threshold)
    }

    pub fn validate(&self) -> Result<(), EvaluateError> {
        let err = || EvaluateError::InvalidWeights {
            w_driver: self.w_driver,
            w_traffic: self.w_traffic,
            w_env: self.w_env,
            threshold: self.threshold,
        };
        let all_finite = [self.w_driver, self.w_traffic, self.w_env, self.threshold]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !all_finite {
            return Err(err());
        }
        let sum = self.w_driver + self.w_traffic + self.w_env;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(err());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(err());
        }
        Ok(())
    }
}

/// Traffic-complexity term coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficCoefficients {
    pub stationary_vehicle: f64,
    pub per_pedestrian: f64,
    pub pedestrian_cap: f64,
    pub imminent_phase_change: f64,
    pub phase_change_window_s: f64,
    pub tram_present: f64,
}

impl Default for TrafficCoefficients {
    fn default() -> Self {
        TrafficCoefficients {
            stationary_vehicle: 0.3,
            per_pedestrian: 0.1,
            pedestrian_cap: 0.4,
            imminent_phase_change: 0.2,
            phase_change_window_s: 5.0,
            tram_present: 0.1,
        }
    }
}

/// Environment-severity term coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvCoefficients {
    pub visibility_weight: f64,
    pub visibility_ref_m: f64,
    pub friction_weight: f64,
    pub friction_ref: f64,
    pub friction_span: f64,
    pub bad_condition_weight: f64,
}

impl Default for EnvCoefficients {
    fn default() -> Self {
        EnvCoefficients {
            visibility_weight: 0.5,
            visibility_ref_m: 200.0,
            friction_weight: 0.3,
            friction_ref: 0.8,
            friction_span: 0.6,
            bad_condition_weight: 0.2,
        }
    }
}

/// The complete scoring model configuration, in one block.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub weights: ScoreWeights,
    pub threshold_to_automation: ThresholdToAutomation,
    pub traffic: TrafficCoefficients,
    pub env: EnvCoefficients,
}

/// Handing control to automation is assumed safe in a superset of
/// situations, so that direction uses a lower threshold on the same score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdToAutomation(pub f64);

impl Default for ThresholdToAutomation {
    fn default() -> Self {
        ThresholdToAutomation(0.30)
    }
}

/// Evaluation attached to a situation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuitabilityResult {
    pub driver_load: f64,
    pub traffic_complexity: f64,
    pub environment_severity: f64,
    pub score: f64,
    pub direction: HandoverDirection,
    pub recommended: bool,
    pub completeness: f64,
    pub scorer_id: String,
}

/// Latest non-missing record for a key, by generation time.
fn latest_value<'a>(s: &'a Situation, key: &str) -> Option<&'a Value> {
    let key = DataKey::new(key).ok()?;
    s.records
        .get(&key)?
        .iter()
        .filter(|r| !r.quality.is_missing())
        .max_by_key(|r| r.generation_time)
        .and_then(|r| r.value.as_ref())
}

/// Mean of the non-missing scalar values of a key, if any.
fn mean_scalar(s: &Situation, key: &DataKey) -> Option<f64> {
    let records = s.records.get(key)?;
    let values: Vec<f64> = records
        .iter()
        .filter(|r| !r.quality.is_missing())
        .filter_map(|r| r.value.as_ref().and_then(Value::as_scalar))
        .collect();
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Driver load D in [0, 1]: mean of the calibrated driver signals normalized
/// into their ranges, with gaze-on-road contributing inverted (more gaze off
/// the road means more load). No driver data means D = 0; completeness
/// reflects the absence.
pub fn driver_load(s: &Situation, dict: &DataDictionary) -> f64 {
    let mut contributions = Vec::new();
    for key in s.records.keys() {
        if key.group() != "driver" {
            continue;
        }
        let Some(entry) = dict.get(key) else { continue };
        let Some(cal) = entry.calibration else {
            continue;
        };
        if entry.signal_class != situ_core::dictionary::SignalClass::Continuous {
            continue;
        }
        let Some(mean) = mean_scalar(s, key) else {
            continue;
        };
        let n = cal.normalize(mean);
        let contribution = if key.as_str() == keys::DRIVER_GAZE_ON_ROAD {
            1.0 - n
        } else {
            n
        };
        contributions.push(contribution);
    }
    if contributions.is_empty() {
        return 0.0;
    }
    contributions.iter().sum::<f64>() / contributions.len() as f64
}

/// Traffic complexity T in [0, 1], from the latest non-missing record per
/// key in the window.
pub fn traffic_complexity(s: &Situation, c: &TrafficCoefficients) -> f64 {
    let mut t = 0.0;
    if latest_value(s, keys::TRAFFIC_STATIONARY_VEHICLE).and_then(Value::as_flag) == Some(true) {
        t += c.stationary_vehicle;
    }
    if let Some(count) = latest_value(s, keys::TRAFFIC_PEDESTRIAN_COUNT).and_then(Value::as_count) {
        t += (c.per_pedestrian * count as f64).min(c.pedestrian_cap);
    }
    if let Some(ttc) =
        latest_value(s, keys::TRAFFIC_LIGHT_TIME_TO_CHANGE).and_then(Value::as_scalar)
    {
        if ttc < c.phase_change_window_s {
            t += c.imminent_phase_change;
        }
    }
    if latest_value(s, keys::TRAFFIC_TRAM_PRESENT).and_then(Value::as_flag) == Some(true) {
        t += c.tram_present;
    }
    t.clamp(0.0, 1.0)
}

/// Environment severity E in [0, 1]; absent keys contribute nothing.
pub fn environment_severity(s: &Situation, c: &EnvCoefficients) -> f64 {
    let mut e = 0.0;
    if let Some(vis) = latest_value(s, keys::ENV_VISIBILITY).and_then(Value::as_scalar) {
        e +=
            c.visibility_weight * ((c.visibility_ref_m - vis) / c.visibility_ref_m).clamp(0.0, 1.0);
    }
    if let Some(friction) = latest_value(s, keys::ENV_FRICTION).and_then(Value::as_scalar) {
        e += c.friction_weight * ((c.friction_ref - friction) / c.friction_span).clamp(0.0, 1.0);
    }
    if latest_value(s, keys::ENV_BAD_CONDITION).and_then(Value::as_flag) == Some(true) {
        e += c.bad_condition_weight;
    }
    e.clamp(0.0, 1.0)
}

/// Combine component loads into the suitability score.
pub fn combine_score(d: f64, t: f64, e: f64, w: &ScoreWeights) -> f64 {
    (1.0 - (w.w_driver * d + w.w_traffic * t + w.w_env * e)).clamp(0.0, 1.0)
}

/// Anything that can map a situation to a suitability result.
pub trait SituationScorer {
    fn scorer_id(&self) -> &str;

    fn evaluate(
        &self,
        s: &Situation,
        dict: &DataDictionary,
        direction: HandoverDirection,
    ) -> SuitabilityResult;
}

/// The reference scoring model: transparent weighted combination of the three
/// component loads.
#[derive(Debug, Clone)]
pub struct BaselineScorer {
    config: ScoringConfig,
}

pub const BASELINE_SCORER_ID: &str = "baseline-linear-v1";

impl BaselineScorer {
    pub fn new(config: ScoringConfig) -> Result<Self, EvaluateError> {
        config.weights.validate()?;
        Ok(BaselineScorer { config })
    }

    pub fn config(&self) -> &ScoringConfig {
        &self.config
    }

    fn threshold_for(&self, direction: HandoverDirection) -> f64 {
        match direction {
            HandoverDirection::VehicleToDriver => self.config.weights.threshold,
            HandoverDirection::DriverToVehicle => self.config.threshold_to_automation.0,
        }
    }
}

impl SituationScorer for BaselineScorer {
    fn scorer_id(&self) -> &str {
        BASELINE_SCORER_ID
    }

    fn evaluate(
        &self,
        s: &Situation,
        dict: &DataDictionary,
        direction: HandoverDirection,
    ) -> SuitabilityResult {
        let d = driver_load(s, dict);
        let t = traffic_complexity(s, &self.config.traffic);
        let e = environment_severity(s, &self.config.env);
        let score = combine_score(d, t, e, &self.config.weights);
        SuitabilityResult {
            driver_load: d,
            traffic_complexity: t,
            environment_severity: e,
            score,
            direction,
            recommended: score >= self.threshold_for(direction),
            completeness: completeness_groups(s, &REQUIRED_GROUPS).unwrap_or(0.0),
            scorer_id: self.scorer_id().to_owned(),
        }
    }
}

/// Similarity in [0, 1] between two situations over their calibrated keys.
///
/// Shared keys contribute the absolute difference of their normalized means;
/// calibrated keys present on exactly one side contribute distance 1. With no
/// comparable keys at all the similarity is 0.
pub fn compare_situations(a: &Situation, b: &Situation, dict: &DataDictionary) -> f64 {
    let calibrated_present = |s: &Situation| -> BTreeSet<DataKey> {
        s.records
            .keys()
            .filter(|k| {
                dict.get(k).and_then(|e| e.calibration).is_some() && mean_scalar(s, k).is_some()
            })
            .cloned()
            .collect()
    };
    let in_a = calibrated_present(a);
    let in_b = calibrated_present(b);

    let mut total = 0.0;
    let mut n = 0usize;
    for key in in_a.union(&in_b) {
        let cal = dict.get(key).and_then(|e| e.calibration).expect("filtered");
        match (mean_scalar(a, key), mean_scalar(b, key)) {
            (Some(va), Some(vb)) => {
                total += (cal.normalize(va) - cal.normalize(vb)).abs();
                n += 1;
            }
            (Some(_), None) | (None, Some(_)) => {
                total += 1.0;
                n += 1;
            }
            (None, None) => {}
        }
    }
    if n == 0 {
        return 0.0;
    }
    1.0 - total / n as f64
}

/// Per-cell aggregate of challenge = 1 - score.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellStat {
    pub sum_challenge: f64,
    pub count: usize,
}

impl CellStat {
    pub fn challenge(&self) -> f64 {
        self.sum_challenge / self.count.max(1) as f64
    }
}

/// Spatial grid of mean challenge values. Cells without contributions stay
/// absent (empty is not zero challenge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressMapGrid {
    pub south_west: GeoPoint,
    pub north_east: GeoPoint,
    pub cell_m: f64,
    pub rows: usize,
    pub cols: usize,
    pub cells: std::collections::BTreeMap<(usize, usize), CellStat>,
    /// Evaluated situations whose center fell outside the box.
    pub outside: usize,
}

impl StressMapGrid {
    fn mid_lat_cos(&self) -> f64 {
        let mid = (self.south_west.lat_deg() + self.north_east.lat_deg()) / 2.0;
        mid.to_radians().cos()
    }

    fn locate(&self, p: GeoPoint) -> Option<(usize, usize)> {
        if p.lat_e7 < self.south_west.lat_e7
            || p.lat_e7 > self.north_east.lat_e7
            || p.lon_e7 < self.south_west.lon_e7
            || p.lon_e7 > self.north_east.lon_e7
        {
            return None;
        }
        let north_m = EARTH_RADIUS_M * (p.lat_deg() - self.south_west.lat_deg()).to_radians();
        let east_m = EARTH_RADIUS_M
            * (p.lon_deg() - self.south_west.lon_deg()).to_radians()
            * self.mid_lat_cos();
        // Points exactly on the north/east edge land in the last cell.
        let row = ((north_m / self.cell_m) as usize).min(self.rows - 1);
        let col = ((east_m / self.cell_m) as usize).min(self.cols - 1);
        Some((row, col))
    }

    pub fn cell_center(&self, row: usize, col: usize) -> GeoPoint {
        let north_m = (row as f64 + 0.5) * self.cell_m;
        let east_m = (col as f64 + 0.5) * self.cell_m;
        self.point_from_sw(north_m, east_m)
    }

    fn point_from_sw(&self, north_m: f64, east_m: f64) -> GeoPoint {
        let lat = self.south_west.lat_deg() + (north_m / EARTH_RADIUS_M).to_degrees();
        let lon = self.south_west.lon_deg()
            + (east_m / (EARTH_RADIUS_M * self.mid_lat_cos())).to_degrees();
        GeoPoint::from_degrees(lat, lon).expect("grid stays within coordinate range")
    }

    pub fn total_count(&self) -> usize {
        self.cells.values().map(|c| c.count).sum()
    }

    /// CSV export: header `cell_lat,cell_lon,challenge,count`, one row per
    /// non-empty cell, row-major from the south-west corner.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "cell_lat,cell_lon,challenge,count")?;
        for ((row, col), stat) in &self.cells {
            let center = self.cell_center(*row, *col);
            writeln!(
                w,
                "{},{},{},{}",
                center.lat_deg(),
                center.lon_deg(),
                stat.challenge(),
                stat.count
            )?;
        }
        Ok(())
    }

    /// GeoJSON export: FeatureCollection of cell polygons with `challenge`
    /// and `count` properties.
    pub fn to_geojson(&self) -> serde_json::Value {
        let features: Vec<serde_json::Value> = self
            .cells
            .iter()
            .map(|((row, col), stat)| {
                let sw = self.point_from_sw(*row as f64 * self.cell_m, *col as f64 * self.cell_m);
                let ne = self.point_from_sw(
                    (*row as f64 + 1.0) * self.cell_m,
                    (*col as f64 + 1.0) * self.cell_m,
                );
                let ring = vec![
                    vec![sw.lon_deg(), sw.lat_deg()],
                    vec![ne.lon_deg(), sw.lat_deg()],
                    vec![ne.lon_deg(), ne.lat_deg()],
                    vec![sw.lon_deg(), ne.lat_deg()],
                    vec![sw.lon_deg(), sw.lat_deg()],
                ];
                serde_json::json!({
                    "type": "Feature",
                    "geometry": { "type": "Polygon", "coordinates": [ring] },
                    "properties": { "challenge": stat.challenge(), "count": stat.count }
                })
            })
            .collect();
        serde_json::json!({ "type": "FeatureCollection", "features": features })
    }
}

/// Build the stress map from (situation center, score) samples.
pub fn build_stress_map(
    samples: impl IntoIterator<Item = (GeoPoint, f64)>,
    corner_a: GeoPoint,
    corner_b: GeoPoint,
    cell_m: f64,
) -> Result<StressMapGrid, EvaluateError> {
    if !(cell_m.is_finite() && cell_m > 0.0) {
        return Err(EvaluateError::DegenerateBox);
    }
    let south_west = GeoPoint {
        lat_e7: corner_a.lat_e7.min(corner_b.lat_e7),
        lon_e7: corner_a.lon_e7.min(corner_b.lon_e7),
    };
    let north_east = GeoPoint {
        lat_e7: corner_a.lat_e7.max(corner_b.lat_e7),
        lon_e7: corner_a.lon_e7.max(corner_b.lon_e7),
    };
    if south_west.lat_e7 == north_east.lat_e7 || south_west.lon_e7 == north_east.lon_e7 {
        return Err(EvaluateError::DegenerateBox);
    }
    let mid_cos = ((south_west.lat_deg() + north_east.lat_deg()) / 2.0)
        .to_radians()
        .cos();
    let height_m = EARTH_RADIUS_M * (north_east.lat_deg() - south_west.lat_deg()).to_radians();
    let width_m =
        EARTH_RADIUS_M * (north_east.lon_deg() - south_west.lon_deg()).to_radians() * mid_cos;
    let rows = (height_m / cell_m).ceil().max(1.0) as usize;
    let cols = (width_m / cell_m).ceil().max(1.0) as usize;

    let mut grid = StressMapGrid {
        south_west,
        north_east,
        cell_m,
        rows,
        cols,
        cells: Default::default(),
        outside: 0,
    };
    for (center, score) in samples {
        match grid.locate(center) {
            Some(cell) => {
                let stat = grid.cells.entry(cell).or_default();
                stat.sum_challenge += 1.0 - score;
                stat.count += 1;
            }
            None => grid.outside += 1,
        }
    }
    Ok(grid)
}

/// Latest evaluation of the situation whose area overlaps `area` and whose
/// window contains `at`. With several matches the most recent window wins.
pub fn query_intersection_suitability(
    store: &SituationStore,
    area: &GeoArea,
    at: EpochTime,
) -> Option<SuitabilityResult> {
    let q = crate::store::SituationQuery {
        area: Some(area.clone()),
        interval: Some(situ_core::ValidityInterval::new(at, 1)),
        with_evaluation: true,
        ..Default::default()
    };
    let matches = store.query(&q).ok()?;
    matches
        .into_iter()
        .filter(|s: &StoredSituation| s.situation.window.is_valid_at(at))
        .max_by(|a, b| {
            (a.situation.window.start, &a.situation.situation_id)
                .cmp(&(b.situation.window.start, &b.situation.situation_id))
                .then(std::cmp::Ordering::Equal)
        })
        .and_then(|s| s.latest_evaluation().map(|(_, e)| e.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use situ_core::dictionary::default_dictionary;
    use situ_core::{DataRecord, QualityFlag, ValidityInterval};
    use std::collections::BTreeMap;

    fn t(ms: u64) -> EpochTime {
        EpochTime::from_millis(ms)
    }

    fn origin() -> GeoPoint {
        GeoPoint::from_degrees(49.0, 7.0).unwrap()
    }

    fn empty_situation() -> Situation {
        let area = GeoArea::circle(origin(), 90.0).unwrap();
        Situation {
            situation_id: crate::fuse::situation_id(&area, t(0)),
            area,
            window: ValidityInterval::new(t(0), 1000),
            records: BTreeMap::new(),
            completeness: 0.0,
        }
    }

    fn add(s: &mut Situation, key: &str, value: Value, ms: u64) {
        let key = DataKey::new(key).unwrap();
        let rec = DataRecord::measured(
            key.clone(),
            value,
            t(ms),
            ValidityInterval::new(t(ms), 100),
            Some(origin()),
            "src",
        );
        s.records.entry(key).or_default().push(rec);
    }

    #[test]
    fn driver_load_zero_at_calm_ends() {
        let dict = default_dictionary();
        let mut s = empty_situation();
        add(&mut s, keys::DRIVER_HEART_RATE, Value::Scalar(60.0), 100);
        add(
            &mut s,
            keys::DRIVER_SKIN_CONDUCTANCE,
            Value::Scalar(2.0),
            100,
        );
        add(&mut s, keys::DRIVER_PUPIL_DIAMETER, Value::Scalar(3.0), 100);
        add(&mut s, keys::DRIVER_GAZE_ON_ROAD, Value::Scalar(1.0), 100);
        assert_eq!(driver_load(&s, &dict), 0.0);
    }

    #[test]
    fn driver_load_normalizes_single_key() {
        let dict = default_dictionary();
        let mut s = empty_situation();
        add(&mut s, keys::DRIVER_HEART_RATE, Value::Scalar(90.0), 100);
        let d = driver_load(&s, &dict);
        assert!((d - 0.5).abs() < 1e-12, "(90-60)/(120-60) = 0.5, got {d}");
    }

    #[test]
    fn driver_load_without_driver_keys_is_zero() {
        let dict = default_dictionary();
        let mut s = empty_situation();
        add(&mut s, keys::ENV_VISIBILITY, Value::Scalar(2000.0), 100);
        assert_eq!(driver_load(&s, &dict), 0.0);
    }

    #[test]
    fn traffic_complexity_empty_is_zero() {
        let c = TrafficCoefficients::default();
        assert_eq!(traffic_complexity(&empty_situation(), &c), 0.0);
    }

    #[test]
    fn traffic_complexity_pedestrians_and_phase() {
        let c = TrafficCoefficients::default();
        let mut s = empty_situation();
        add(&mut s, keys::TRAFFIC_PEDESTRIAN_COUNT, Value::Count(3), 100);
        add(
            &mut s,
            keys::TRAFFIC_LIGHT_TIME_TO_CHANGE,
            Value::Scalar(3.0),
            100,
        );
        let t_val = traffic_complexity(&s, &c);
        assert!((t_val - 0.5).abs() < 1e-12, "0.3 + 0.2 = 0.5, got {t_val}");
    }

    #[test]
    fn traffic_complexity_caps_pedestrian_term() {
        let c = TrafficCoefficients::default();
        let mut s = empty_situation();
        add(
            &mut s,
            keys::TRAFFIC_STATIONARY_VEHICLE,
            Value::Flag(true),
            100,
        );
        add(&mut s, keys::TRAFFIC_PEDESTRIAN_COUNT, Value::Count(6), 100);
        add(&mut s, keys::TRAFFIC_TRAM_PRESENT, Value::Flag(true), 100);
        let t_val = traffic_complexity(&s, &c);
        assert!(
            (t_val - 0.8).abs() < 1e-12,
            "0.3 + min(0.6, 0.4) + 0.1 = 0.8, got {t_val}"
        );
    }

    #[test]
    fn traffic_uses_latest_non_missing_record() {
        let c = TrafficCoefficients::default();
        let mut s = empty_situation();
        add(&mut s, keys::TRAFFIC_PEDESTRIAN_COUNT, Value::Count(6), 100);
        add(&mut s, keys::TRAFFIC_PEDESTRIAN_COUNT, Value::Count(1), 900);
        // A later missing placeholder must not shadow the real value.
        let key = DataKey::new(keys::TRAFFIC_PEDESTRIAN_COUNT).unwrap();
        let placeholder = DataRecord::derived(
            key.clone(),
            None,
            t(950),
            ValidityInterval::new(t(950), 100),
            Some(origin()),
            "prep",
            QualityFlag::Missing,
        );
        s.records.get_mut(&key).unwrap().push(placeholder);
        assert!((traffic_complexity(&s, &c) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn environment_severity_clear_is_zero() {
        let c = EnvCoefficients::default();
        let mut s = empty_situation();
        add(&mut s, keys::ENV_VISIBILITY, Value::Scalar(2000.0), 100);
        add(&mut s, keys::ENV_FRICTION, Value::Scalar(0.8), 100);
        assert_eq!(environment_severity(&s, &c), 0.0);
    }

    #[test]
    fn environment_severity_fog_case() {
        let c = EnvCoefficients::default();
        let mut s = empty_situation();
        add(&mut s, keys::ENV_VISIBILITY, Value::Scalar(50.0), 100);
        add(&mut s, keys::ENV_FRICTION, Value::Scalar(0.4), 100);
        let e = environment_severity(&s, &c);
        // 0.5 * (200-50)/200 + 0.3 * (0.8-0.4)/0.6 = 0.375 + 0.2 = 0.575
        assert!((e - 0.575).abs() < 1e-12, "got {e}");
    }

    #[test]
    fn environment_severity_bad_condition_only() {
        let c = EnvCoefficients::default();
        let mut s = empty_situation();
        add(&mut s, keys::ENV_BAD_CONDITION, Value::Flag(true), 100);
        assert!((environment_severity(&s, &c) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn suitability_formula_and_recommendation() {
        let w = ScoreWeights::default();
        assert_eq!(combine_score(0.0, 0.0, 0.0, &w), 1.0);

        // Fog case: D=0.5, T=0, E=0.575.
        let score = combine_score(0.5, 0.0, 0.575, &w);
        assert!((score - 0.65625).abs() < 1e-12, "got {score}");
        assert!(score >= w.threshold);

        // Pedestrian case: D=0.5, T=0.5, E=0.
        let score = combine_score(0.5, 0.5, 0.0, &w);
        assert!((score - 0.625).abs() < 1e-12, "got {score}");
    }

    #[test]
    fn baseline_scorer_end_to_end() {
        let dict = default_dictionary();
        let scorer = BaselineScorer::new(ScoringConfig::default()).unwrap();
        let mut s = empty_situation();
        add(&mut s, keys::DRIVER_HEART_RATE, Value::Scalar(90.0), 100);
        add(&mut s, keys::ENV_VISIBILITY, Value::Scalar(50.0), 100);
        add(&mut s, keys::ENV_FRICTION, Value::Scalar(0.4), 100);
        let result = scorer.evaluate(&s, &dict, HandoverDirection::VehicleToDriver);
        assert!((result.driver_load - 0.5).abs() < 1e-12);
        assert!((result.environment_severity - 0.575).abs() < 1e-12);
        assert!((result.score - 0.65625).abs() < 1e-12);
        assert!(result.recommended);
        assert_eq!(result.scorer_id, BASELINE_SCORER_ID);
        assert!(
            (result.completeness - 0.5).abs() < 1e-12,
            "driver + env groups"
        );

        let to_automation = scorer.evaluate(&s, &dict, HandoverDirection::DriverToVehicle);
        assert_eq!(to_automation.score, result.score);
        assert!(to_automation.recommended);
    }

    #[test]
    fn directions_diverge_between_the_thresholds() {
        // D=0.5, T=0.5, E=0.45 scores 0.5125: too low to hand control to
        // the driver, safe enough to hand it to automation.
        let dict = default_dictionary();
        let scorer = BaselineScorer::new(ScoringConfig::default()).unwrap();
        let mut s = empty_situation();
        add(&mut s, keys::DRIVER_HEART_RATE, Value::Scalar(90.0), 100);
        add(
            &mut s,
            keys::TRAFFIC_STATIONARY_VEHICLE,
            Value::Flag(true),
            100,
        );
        add(&mut s, keys::TRAFFIC_PEDESTRIAN_COUNT, Value::Count(2), 100);
        add(&mut s, keys::ENV_VISIBILITY, Value::Scalar(100.0), 100);
        add(&mut s, keys::ENV_BAD_CONDITION, Value::Flag(true), 100);
        let to_driver = scorer.evaluate(&s, &dict, HandoverDirection::VehicleToDriver);
        let to_automation = scorer.evaluate(&s, &dict, HandoverDirection::DriverToVehicle);
        assert!(
            (to_driver.score - 0.5125).abs() < 1e-12,
            "{}",
            to_driver.score
        );
        assert!(!to_driver.recommended);
        assert!(to_automation.recommended);
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(ScoreWeights::new(0.5, 0.5, 0.5, 0.6).is_err());
        assert!(ScoreWeights::new(0.4, 0.35, 0.25, 0.0).is_err());
        assert!(ScoreWeights::normalized(2.0, 1.0, 1.0, 0.6).is_ok());
    }

    #[test]
    fn compare_identity_is_one() {
        let dict = default_dictionary();
        let mut s = empty_situation();
        add(&mut s, keys::DRIVER_HEART_RATE, Value::Scalar(85.0), 100);
        assert_eq!(compare_situations(&s, &s, &dict), 1.0);
    }

    #[test]
    fn compare_opposite_ends_is_zero() {
        let dict = default_dictionary();
        let mut a = empty_situation();
        add(&mut a, keys::DRIVER_HEART_RATE, Value::Scalar(60.0), 100);
        let mut b = empty_situation();
        add(&mut b, keys::DRIVER_HEART_RATE, Value::Scalar(120.0), 100);
        assert_eq!(compare_situations(&a, &b, &dict), 0.0);
    }

    #[test]
    fn compare_one_sided_key_costs_one() {
        let dict = default_dictionary();
        let mut a = empty_situation();
        add(&mut a, keys::DRIVER_HEART_RATE, Value::Scalar(85.0), 100);
        add(&mut a, keys::ENV_VISIBILITY, Value::Scalar(500.0), 100);
        let mut b = empty_situation();
        add(&mut b, keys::DRIVER_HEART_RATE, Value::Scalar(85.0), 100);
        let sim = compare_situations(&a, &b, &dict);
        assert!((sim - 0.5).abs() < 1e-12, "1 - (0 + 1)/2, got {sim}");
        assert_eq!(compare_situations(&b, &a, &dict), sim);
    }

    #[test]
    fn compare_no_keys_is_zero() {
        let dict = default_dictionary();
        assert_eq!(
            compare_situations(&empty_situation(), &empty_situation(), &dict),
            0.0
        );
    }

    #[test]
    fn stress_map_single_situation() {
        let sw = GeoPoint::from_degrees(49.0, 7.0).unwrap();
        let ne = GeoPoint::from_degrees(49.01, 7.01).unwrap();
        let inside = GeoPoint::from_degrees(49.0005, 7.0005).unwrap();
        let grid = build_stress_map([(inside, 0.6)], sw, ne, 100.0).unwrap();
        assert_eq!(grid.total_count(), 1);
        assert_eq!(grid.outside, 0);
        let stat = grid.cells.values().next().unwrap();
        assert!((stat.challenge() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn stress_map_averages_cell_scores() {
        let sw = GeoPoint::from_degrees(49.0, 7.0).unwrap();
        let ne = GeoPoint::from_degrees(49.01, 7.01).unwrap();
        let p = GeoPoint::from_degrees(49.0005, 7.0005).unwrap();
        let grid = build_stress_map([(p, 0.8), (p, 0.6)], sw, ne, 100.0).unwrap();
        let stat = grid.cells.values().next().unwrap();
        assert_eq!(stat.count, 2);
        assert!(
            (stat.challenge() - 0.3).abs() < 1e-12,
            "mean of 0.2 and 0.4"
        );
    }

    #[test]
    fn stress_map_counts_outside() {
        let sw = GeoPoint::from_degrees(49.0, 7.0).unwrap();
        let ne = GeoPoint::from_degrees(49.01, 7.01).unwrap();
        let outside = GeoPoint::from_degrees(50.0, 7.0).unwrap();
        let grid = build_stress_map([(outside, 0.5)], sw, ne, 100.0).unwrap();
        assert_eq!(grid.total_count(), 0);
        assert_eq!(grid.outside, 1);
        assert!(grid.cells.is_empty(), "empty cells stay absent");
    }

    #[test]
    fn stress_map_degenerate_box_rejected() {
        let p = GeoPoint::from_degrees(49.0, 7.0).unwrap();
        assert!(matches!(
            build_stress_map([], p, p, 100.0),
            Err(EvaluateError::DegenerateBox)
        ));
    }

    #[test]
    fn csv_export_shape() {
        let sw = GeoPoint::from_degrees(49.0, 7.0).unwrap();
        let ne = GeoPoint::from_degrees(49.01, 7.01).unwrap();
        let inside = GeoPoint::from_degrees(49.0005, 7.0005).unwrap();
        let grid = build_stress_map([(inside, 0.6)], sw, ne, 100.0).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("cell_lat,cell_lon,challenge,count"));
        let row = lines.next().unwrap();
        assert!(row.ends_with(",0.4,1"), "{row}");
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn geojson_export_is_feature_collection() {
        let sw = GeoPoint::from_degrees(49.0, 7.0).unwrap();
        let ne = GeoPoint::from_degrees(49.01, 7.01).unwrap();
        let inside = GeoPoint::from_degrees(49.0005, 7.0005).unwrap();
        let grid = build_stress_map([(inside, 0.6)], sw, ne, 100.0).unwrap();
        let geojson = grid.to_geojson();
        assert_eq!(geojson["type"], "FeatureCollection");
        assert_eq!(geojson["features"].as_array().unwrap().len(), 1);
        let feature = &geojson["features"][0];
        assert_eq!(feature["properties"]["count"], 1);
        assert_eq!(feature["geometry"]["type"], "Polygon");
    }

    #[test]
    fn intersection_query_returns_latest_version() {
        use crate::store::SituationStore;
        let mut store = SituationStore::in_memory();
        let mut s = empty_situation();
        add(&mut s, keys::DRIVER_HEART_RATE, Value::Scalar(80.0), 100);
        let area = s.area.clone();
        let id = store.put_situation(s, t(1000)).unwrap();

        assert!(query_intersection_suitability(&store, &area, t(500)).is_none());

        let make = |score: f64| SuitabilityResult {
            driver_load: 0.0,
            traffic_complexity: 0.0,
            environment_severity: 0.0,
            score,
            direction: HandoverDirection::VehicleToDriver,
            recommended: true,
            completeness: 0.25,
            scorer_id: "test".into(),
        };
        store.attach_evaluation(&id, make(0.9)).unwrap();
        store.attach_evaluation(&id, make(0.7)).unwrap();

        let got = query_intersection_suitability(&store, &area, t(500)).unwrap();
        assert_eq!(got.score, 0.7, "version 2 wins");
        assert!(query_intersection_suitability(&store, &area, t(5000)).is_none());
    }
}
