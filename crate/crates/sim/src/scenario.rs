//! Scenario definitions and the deterministic simulation runner.
//!
//! Four built-in scenarios exercise the platform: a stationary vehicle
//! blocking a lane in an urban setting, pedestrians at a signalized
//! intersection, dense fog on a wet rural road, and a stretch of bad road
//! surface where the driver requests control. Every run is fully determined
//! by (spec, seed): all randomness comes from one seeded PCG-64 generator.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use situ_core::dictionary::{default_dictionary, keys};
use situ_core::{
    great_circle_distance_m, offset_point, Containment, DataDictionary, DataKey, DataRecord,
    EpochTime, GeoArea, GeoPoint, ValidityInterval, Value,
};

use crate::channel::{ChannelModel, DeliveryOutcome, DropEntry};
use crate::clock::SimClock;
use crate::station::{Emission, Placement, StationConfig, StationKind, Waypoint};
use crate::travel::{make_pseudonym, TravelTimeTable};
use crate::SimError;

/// Simulation epoch: runs start here so tumbling windows align cleanly.
pub const SIM_START_MS: u64 = 1_600_000_000_000;

/// Validity attached to instantaneous event records.
const EVENT_VALIDITY_MS: u64 = 500;

/// Scenario knobs with desk-scale defaults. All times are offsets from the
/// scenario start, all distances are meters along the road from its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioTuning {
    pub duration_ms: u64,
    pub origin_lat_deg: f64,
    pub origin_lon_deg: f64,
    pub ego_speed_mps: f64,
    pub area_radius_m: f64,
    pub area_spacing_m: f64,
    pub area_count: u32,
    pub segment_length_m: f64,
    /// Gaussian noise on driver signals, as a fraction of the calibration span.
    pub driver_noise_frac: f64,
    pub s1: StationaryVehicleTuning,
    pub s2: IntersectionTuning,
    pub s3: FogTuning,
    pub s4: BadRoadTuning,
}

impl Default for ScenarioTuning {
    fn default() -> Self {
        ScenarioTuning {
            duration_ms: 60_000,
            origin_lat_deg: 49.0,
            origin_lon_deg: 7.0,
            ego_speed_mps: 13.9,
            area_radius_m: 90.0,
            area_spacing_m: 200.0,
            area_count: 6,
            segment_length_m: 300.0,
            driver_noise_frac: 0.02,
            s1: StationaryVehicleTuning::default(),
            s2: IntersectionTuning::default(),
            s3: FogTuning::default(),
            s4: BadRoadTuning::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StationaryVehicleTuning {
    pub breakdown_offset_m: f64,
    pub breakdown_at_ms: u64,
    pub rsu_offset_m: f64,
}

impl Default for StationaryVehicleTuning {
    fn default() -> Self {
        StationaryVehicleTuning {
            breakdown_offset_m: 400.0,
            breakdown_at_ms: 10_000,
            rsu_offset_m: 480.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntersectionTuning {
    pub rsu_offset_m: f64,
    pub green_ms: u64,
    pub yellow_ms: u64,
    pub red_ms: u64,
    /// Pedestrian appearance times; the detected count ramps up step by step.
    pub pedestrian_times_ms: Vec<u64>,
}

impl Default for IntersectionTuning {
    fn default() -> Self {
        IntersectionTuning {
            rsu_offset_m: 320.0,
            green_ms: 30_000,
            yellow_ms: 3_000,
            red_ms: 27_000,
            pedestrian_times_ms: vec![5_000, 12_000, 20_000],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FogTuning {
    pub rsu_offset_m: f64,
    pub fog_onset_ms: u64,
    pub fog_visibility_m: f64,
    pub fog_friction: f64,
    pub clear_visibility_m: f64,
    pub clear_friction: f64,
    pub fog_heart_rate_bpm: f64,
}

impl Default for FogTuning {
    fn default() -> Self {
        FogTuning {
            rsu_offset_m: 480.0,
            fog_onset_ms: 10_000,
            fog_visibility_m: 50.0,
            fog_friction: 0.4,
            clear_visibility_m: 1000.0,
            clear_friction: 0.8,
            fog_heart_rate_bpm: 95.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BadRoadTuning {
    pub rsu_offset_m: f64,
    pub bad_from_m: f64,
    pub bad_to_m: f64,
}

impl Default for BadRoadTuning {
    fn default() -> Self {
        BadRoadTuning {
            rsu_offset_m: 480.0,
            bad_from_m: 320.0,
            bad_to_m: 620.0,
        }
    }
}

/// World changes scripted into a scenario, at offsets from the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ScriptedEvent {
    /// A vehicle starts broadcasting that it is stationary.
    StationaryVehicleOn { at_ms: u64, station_id: String },
    /// The intersection sensors now see this many pedestrians.
    PedestrianCount { at_ms: u64, count: u64 },
    /// Weather degrades; the driver's heart rate target rises with it.
    FogOnset {
        at_ms: u64,
        visibility_m: f64,
        friction: f64,
        heart_rate_bpm: f64,
    },
    /// Road surface flagged bad between two instants.
    BadRoad { from_ms: u64, to_ms: u64 },
    /// The driver requests control of the vehicle.
    TakeoverRequest { at_ms: u64, station_id: String },
}

/// Road segment for the travel-time service, in meters along the route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub from_m: f64,
    pub to_m: f64,
}

/// A complete, runnable scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: u8,
    pub start_ms: u64,
    pub duration_ms: u64,
    pub channels: ChannelModel,
    pub bounding: GeoArea,
    pub monitored_areas: Vec<GeoArea>,
    pub stations: Vec<StationConfig>,
    pub events: Vec<ScriptedEvent>,
    pub segments: Vec<Segment>,
    pub driver_noise_frac: f64,
    /// Traffic light cycle for stations emitting phase keys.
    pub light_cycle: (u64, u64, u64),
    /// Clear-weather defaults the world starts from.
    pub clear_visibility_m: f64,
    pub clear_friction: f64,
}

impl ScenarioSpec {
    pub fn start(&self) -> EpochTime {
        EpochTime::from_millis(self.start_ms)
    }

    pub fn end(&self) -> EpochTime {
        EpochTime::from_millis(self.start_ms + self.duration_ms)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario specs serialize")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::MalformedSpec(e.to_string()))
    }

    pub fn validate(&self, dict: &DataDictionary) -> Result<(), SimError> {
        if self.duration_ms == 0 {
            return Err(SimError::MalformedSpec("zero duration".into()));
        }
        for station in &self.stations {
            station.validate(dict)?;
            let positions: Vec<GeoPoint> = match &station.placement {
                Placement::Fixed { lat_e7, lon_e7 } => vec![GeoPoint {
                    lat_e7: *lat_e7,
                    lon_e7: *lon_e7,
                }],
                Placement::Route { waypoints } => {
                    waypoints.iter().map(Waypoint::position).collect()
                }
            };
            for p in positions {
                if matches!(self.bounding.contains(p), Ok(Containment::Outside) | Err(_)) {
                    return Err(SimError::MalformedSpec(format!(
                        "station {} leaves the bounding area",
                        station.station_id
                    )));
                }
            }
        }
        for area in &self.monitored_areas {
            if matches!(
                self.bounding.contains(area.center()),
                Ok(Containment::Outside) | Err(_)
            ) {
                return Err(SimError::MalformedSpec(
                    "monitored area outside the bounding area".into(),
                ));
            }
        }
        for event in &self.events {
            let station = match event {
                ScriptedEvent::StationaryVehicleOn { station_id, .. }
                | ScriptedEvent::TakeoverRequest { station_id, .. } => Some(station_id),
                _ => None,
            };
            if let Some(id) = station {
                if !self.stations.iter().any(|s| &s.station_id == id) {
                    return Err(SimError::MalformedSpec(format!(
                        "scripted event references unknown station {id}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Where a delivered record ended up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    /// Stayed on the emitting vehicle's bus (VDA/DDA input).
    OnBoard(String),
    /// Received by another station over the broadcast channel.
    Station(String),
    /// Arrived at the backend over the cellular uplink.
    Backend,
}

/// One element of the ordered delivery stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub at: EpochTime,
    pub destination: Destination,
    pub record: DataRecord,
}

/// Everything a scenario run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub deliveries: Vec<Delivery>,
    pub drops: Vec<DropEntry>,
    pub travel: TravelTimeTable,
    /// Transmit attempts (on-board handoffs, broadcasts, relays, uplinks).
    pub emitted: usize,
    pub monitored_areas: Vec<GeoArea>,
    pub bounding: GeoArea,
}

enum SimEvent {
    Emit { station: usize, emission: usize },
    Scripted(usize),
    Relay { record: DataRecord, via: usize },
    SegmentEnter { vehicle: usize, segment: usize },
    SegmentExit { vehicle: usize, segment: usize },
}

struct WorldState {
    pedestrian_count: u64,
    stationary: Vec<String>,
    visibility_m: f64,
    friction: f64,
    precipitation: bool,
    bad_road: bool,
    heart_rate_bpm: f64,
}

/// Run a scenario to completion. Deterministic in (spec, seed).
pub fn run_scenario(spec: &ScenarioSpec, seed: u64) -> Result<SimOutput, SimError> {
    let dict = default_dictionary();
    spec.validate(&dict)?;

    let mut rng = Pcg64::seed_from_u64(seed);
    let mut clock: SimClock<SimEvent> = SimClock::new(spec.start());
    let mut world = WorldState {
        pedestrian_count: 0,
        stationary: Vec::new(),
        visibility_m: spec.clear_visibility_m,
        friction: spec.clear_friction,
        precipitation: false,
        bad_road: false,
        heart_rate_bpm: midpoint(&dict, keys::DRIVER_HEART_RATE),
    };

    // Per-vehicle trip nonces, drawn up front in station order.
    let pseudonyms: Vec<Option<String>> = spec
        .stations
        .iter()
        .map(|s| {
            (s.kind == StationKind::Vehicle).then(|| {
                let nonce: u128 = rng.random();
                let secret = format!("{}::trip-secret", s.station_id);
                make_pseudonym(nonce, secret.as_bytes()).expect("secret is non-empty")
            })
        })
        .collect();

    for (i, _event) in spec.events.iter().enumerate() {
        let at = match &spec.events[i] {
            ScriptedEvent::StationaryVehicleOn { at_ms, .. }
            | ScriptedEvent::PedestrianCount { at_ms, .. }
            | ScriptedEvent::FogOnset { at_ms, .. }
            | ScriptedEvent::TakeoverRequest { at_ms, .. } => *at_ms,
            ScriptedEvent::BadRoad { from_ms, .. } => *from_ms,
        };
        clock.schedule(spec.start().add_millis(at), SimEvent::Scripted(i));
        if let ScriptedEvent::BadRoad { to_ms, .. } = &spec.events[i] {
            // The end of the stretch is its own world change.
            let idx = spec.events.len() + i;
            clock.schedule(spec.start().add_millis(*to_ms), SimEvent::Scripted(idx));
        }
    }

    for (si, station) in spec.stations.iter().enumerate() {
        for (ei, _) in station.emissions.iter().enumerate() {
            clock.schedule(
                spec.start(),
                SimEvent::Emit {
                    station: si,
                    emission: ei,
                },
            );
        }
    }

    // Segment crossings from each vehicle's route geometry.
    for (si, station) in spec.stations.iter().enumerate() {
        if station.kind != StationKind::Vehicle {
            continue;
        }
        for (gi, segment) in spec.segments.iter().enumerate() {
            if let Some(at) = time_at_distance(station, segment.from_m) {
                clock.schedule(
                    at,
                    SimEvent::SegmentEnter {
                        vehicle: si,
                        segment: gi,
                    },
                );
            }
            if let Some(at) = time_at_distance(station, segment.to_m) {
                clock.schedule(
                    at,
                    SimEvent::SegmentExit {
                        vehicle: si,
                        segment: gi,
                    },
                );
            }
        }
    }

    let mut deliveries: Vec<Delivery> = Vec::new();
    let mut drops: Vec<DropEntry> = Vec::new();
    let mut travel = TravelTimeTable::new();
    let mut segment_entries: BTreeMap<(usize, usize), EpochTime> = BTreeMap::new();
    let mut emitted = 0usize;

    while let Some((now, event)) = clock.pop() {
        match event {
            SimEvent::Emit { station, emission } => {
                let st = &spec.stations[station];
                let em = &st.emissions[emission];
                if now < spec.end() {
                    if let Some(value) =
                        sample_value(spec, st, &em.key, now, &world, &dict, &mut rng)
                    {
                        let record = DataRecord::measured(
                            em.key.clone(),
                            value,
                            now,
                            ValidityInterval::new(now, em.period_ms),
                            Some(st.position_at(now)),
                            st.station_id.clone(),
                        );
                        transmit(
                            spec,
                            station,
                            record,
                            now,
                            &mut clock,
                            &mut rng,
                            &mut deliveries,
                            &mut drops,
                            &mut emitted,
                        );
                    }
                    let next = now.add_millis(em.period_ms);
                    if next < spec.end() {
                        clock.schedule(next, SimEvent::Emit { station, emission });
                    }
                }
            }
            SimEvent::Scripted(idx) => {
                if idx >= spec.events.len() {
                    // Second half of a BadRoad interval.
                    world.bad_road = false;
                    continue;
                }
                match &spec.events[idx] {
                    ScriptedEvent::StationaryVehicleOn { station_id, .. } => {
                        world.stationary.push(station_id.clone());
                    }
                    ScriptedEvent::PedestrianCount { count, .. } => {
                        world.pedestrian_count = *count;
                    }
                    ScriptedEvent::FogOnset {
                        visibility_m,
                        friction,
                        heart_rate_bpm,
                        ..
                    } => {
                        world.visibility_m = *visibility_m;
                        world.friction = *friction;
                        world.precipitation = true;
                        world.heart_rate_bpm = *heart_rate_bpm;
                    }
                    ScriptedEvent::BadRoad { .. } => {
                        world.bad_road = true;
                    }
                    ScriptedEvent::TakeoverRequest { station_id, .. } => {
                        let Some(si) = spec
                            .stations
                            .iter()
                            .position(|s| &s.station_id == station_id)
                        else {
                            continue;
                        };
                        let st = &spec.stations[si];
                        let record = DataRecord::measured(
                            DataKey::new(keys::DRIVER_TAKEOVER_REQUEST).unwrap(),
                            Value::Flag(true),
                            now,
                            ValidityInterval::new(now, EVENT_VALIDITY_MS),
                            Some(st.position_at(now)),
                            st.station_id.clone(),
                        );
                        deliveries.push(Delivery {
                            at: now,
                            destination: Destination::OnBoard(st.station_id.clone()),
                            record,
                        });
                        emitted += 1;
                    }
                }
            }
            SimEvent::Relay { record, via } => {
                let rsu = &spec.stations[via];
                emitted += 1;
                match spec.channels.cellular_delivery(now, &mut rng) {
                    DeliveryOutcome::Scheduled { at } => deliveries.push(Delivery {
                        at,
                        destination: Destination::Backend,
                        record,
                    }),
                    DeliveryOutcome::Dropped { reason } => drops.push(DropEntry {
                        at_ms: now.millis(),
                        from: rsu.station_id.clone(),
                        to: "backend".into(),
                        key: Some(record.key.clone()),
                        reason,
                    }),
                }
            }
            SimEvent::SegmentEnter { vehicle, segment } => {
                segment_entries.insert((vehicle, segment), now);
            }
            SimEvent::SegmentExit { vehicle, segment } => {
                if let Some(enter) = segment_entries.remove(&(vehicle, segment)) {
                    if let Some(pseudonym) = &pseudonyms[vehicle] {
                        let seg = &spec.segments[segment];
                        let _ = travel.record_travel_time(
                            seg.id.clone(),
                            pseudonym.clone(),
                            enter,
                            now,
                        );
                    }
                }
            }
        }
    }

    // The stream is ordered by delivery time; the stable sort keeps emission
    // order for simultaneous deliveries.
    deliveries.sort_by_key(|d| d.at);
    debug_assert_eq!(emitted, deliveries.len() + drops.len());

    Ok(SimOutput {
        deliveries,
        drops,
        travel,
        emitted,
        monitored_areas: spec.monitored_areas.clone(),
        bounding: spec.bounding.clone(),
    })
}

/// Route one freshly emitted record onto its channel(s).
#[allow(clippy::too_many_arguments)]
fn transmit(
    spec: &ScenarioSpec,
    station_idx: usize,
    record: DataRecord,
    now: EpochTime,
    clock: &mut SimClock<SimEvent>,
    rng: &mut Pcg64,
    deliveries: &mut Vec<Delivery>,
    drops: &mut Vec<DropEntry>,
    emitted: &mut usize,
) {
    let station = &spec.stations[station_idx];
    let group = record.key.group();
    match (station.kind, group) {
        // Vehicle bus data stays on the node for VDA/DDA.
        (StationKind::Vehicle, "vehicle") | (StationKind::Vehicle, "driver") => {
            *emitted += 1;
            deliveries.push(Delivery {
                at: now,
                destination: Destination::OnBoard(station.station_id.clone()),
                record,
            });
        }
        // Vehicles broadcast traffic facts to every station in range;
        // roadside receivers relay them to the backend.
        (StationKind::Vehicle, _) => {
            let from = station.position_at(now);
            for (oi, other) in spec.stations.iter().enumerate() {
                if oi == station_idx {
                    continue;
                }
                *emitted += 1;
                let to = other.position_at(now);
                match spec.channels.local_delivery(now, from, to, rng) {
                    DeliveryOutcome::Scheduled { at } => {
                        deliveries.push(Delivery {
                            at,
                            destination: Destination::Station(other.station_id.clone()),
                            record: record.clone(),
                        });
                        if other.kind == StationKind::Roadside {
                            clock.schedule(
                                at,
                                SimEvent::Relay {
                                    record: record.clone(),
                                    via: oi,
                                },
                            );
                        }
                    }
                    DeliveryOutcome::Dropped { reason } => drops.push(DropEntry {
                        at_ms: now.millis(),
                        from: station.station_id.clone(),
                        to: other.station_id.clone(),
                        key: Some(record.key.clone()),
                        reason,
                    }),
                }
            }
        }
        // Roadside stations uplink directly to the backend.
        (StationKind::Roadside, _) => {
            *emitted += 1;
            match spec.channels.cellular_delivery(now, rng) {
                DeliveryOutcome::Scheduled { at } => deliveries.push(Delivery {
                    at,
                    destination: Destination::Backend,
                    record,
                }),
                DeliveryOutcome::Dropped { reason } => drops.push(DropEntry {
                    at_ms: now.millis(),
                    from: station.station_id.clone(),
                    to: "backend".into(),
                    key: Some(record.key.clone()),
                    reason,
                }),
            }
        }
    }
}

fn midpoint(dict: &DataDictionary, key: &str) -> f64 {
    dict.get_str(key)
        .and_then(|e| e.calibration)
        .map(|c| (c.lo + c.hi) / 2.0)
        .unwrap_or(0.0)
}

fn noisy(dict: &DataDictionary, key: &str, target: f64, noise_frac: f64, rng: &mut Pcg64) -> f64 {
    let cal = dict
        .get_str(key)
        .and_then(|e| e.calibration)
        .expect("driver keys are calibrated");
    let sigma = noise_frac * cal.span();
    let sample = if sigma > 0.0 {
        Normal::new(target, sigma)
            .expect("finite sigma")
            .sample(rng)
    } else {
        target
    };
    sample.clamp(cal.lo, cal.hi)
}

/// Ground-truth speed along the route, from positions a step apart.
fn route_speed_mps(station: &StationConfig, t: EpochTime) -> f64 {
    let dt_ms = 100u64;
    let a = station.position_at(t);
    let b = station.position_at(t.add_millis(dt_ms));
    great_circle_distance_m(a, b) / (dt_ms as f64 / 1000.0)
}

fn sample_value(
    spec: &ScenarioSpec,
    station: &StationConfig,
    key: &DataKey,
    now: EpochTime,
    world: &WorldState,
    dict: &DataDictionary,
    rng: &mut Pcg64,
) -> Option<Value> {
    let noise = spec.driver_noise_frac;
    let rel_ms = now.since(spec.start());
    let value = match key.as_str() {
        keys::VEHICLE_SPEED => Value::Scalar(route_speed_mps(station, now)),
        keys::VEHICLE_ACCEL => Value::Scalar(0.0),
        keys::VEHICLE_BRAKE => Value::Flag(false),
        keys::DRIVER_HEART_RATE => Value::Scalar(noisy(
            dict,
            keys::DRIVER_HEART_RATE,
            world.heart_rate_bpm,
            noise,
            rng,
        )),
        keys::DRIVER_SKIN_CONDUCTANCE => Value::Scalar(noisy(
            dict,
            keys::DRIVER_SKIN_CONDUCTANCE,
            midpoint(dict, keys::DRIVER_SKIN_CONDUCTANCE),
            noise,
            rng,
        )),
        keys::DRIVER_PUPIL_DIAMETER => Value::Scalar(noisy(
            dict,
            keys::DRIVER_PUPIL_DIAMETER,
            midpoint(dict, keys::DRIVER_PUPIL_DIAMETER),
            noise,
            rng,
        )),
        keys::DRIVER_GAZE_ON_ROAD => Value::Scalar(noisy(
            dict,
            keys::DRIVER_GAZE_ON_ROAD,
            midpoint(dict, keys::DRIVER_GAZE_ON_ROAD),
            noise,
            rng,
        )),
        keys::TRAFFIC_VEHICLE_POSITION => Value::Token(station.station_id.clone()),
        keys::TRAFFIC_VEHICLE_SPEED => Value::Scalar(route_speed_mps(station, now)),
        keys::TRAFFIC_STATIONARY_VEHICLE => {
            if world.stationary.contains(&station.station_id) {
                Value::Flag(true)
            } else {
                return None; // nothing to report before the breakdown
            }
        }
        keys::TRAFFIC_LIGHT_PHASE => {
            let (phase, _) = light_phase(spec.light_cycle, rel_ms);
            Value::Token(phase.to_owned())
        }
        keys::TRAFFIC_LIGHT_TIME_TO_CHANGE => {
            let (_, remaining_ms) = light_phase(spec.light_cycle, rel_ms);
            Value::Scalar(remaining_ms as f64 / 1000.0)
        }
        keys::TRAFFIC_PEDESTRIAN_COUNT => Value::Count(world.pedestrian_count),
        keys::TRAFFIC_TRAM_PRESENT => Value::Flag(false),
        keys::ENV_VISIBILITY => Value::Scalar(world.visibility_m),
        keys::ENV_FRICTION => Value::Scalar(world.friction),
        keys::ENV_PRECIPITATION => Value::Flag(world.precipitation),
        keys::ENV_BAD_CONDITION => Value::Flag(world.bad_road),
        keys::ENV_NOISE => Value::Scalar(55.0),
        keys::DRIVER_TAKEOVER_REQUEST => return None, // scripted, never periodic
        _ => return None,
    };
    Some(value)
}

/// Phase name and milliseconds until the next change.
fn light_phase(cycle: (u64, u64, u64), rel_ms: u64) -> (&'static str, u64) {
    let (green, yellow, red) = cycle;
    let total = green + yellow + red;
    let m = rel_ms % total;
    if m < green {
        ("green", green - m)
    } else if m < green + yellow {
        ("yellow", green + yellow - m)
    } else {
        ("red", total - m)
    }
}

/// Instant at which a vehicle's route reaches `distance_m` of arc length.
fn time_at_distance(station: &StationConfig, distance_m: f64) -> Option<EpochTime> {
    let Placement::Route { waypoints } = &station.placement else {
        return None;
    };
    let mut walked = 0.0;
    for pair in waypoints.windows(2) {
        let leg = great_circle_distance_m(pair[0].position(), pair[1].position());
        if leg > 0.0 && walked + leg >= distance_m {
            let frac = (distance_m - walked) / leg;
            let at = pair[0].at_ms as f64 + frac * (pair[1].at_ms - pair[0].at_ms) as f64;
            return Some(EpochTime::from_millis(at.round() as u64));
        }
        walked += leg;
    }
    None
}

/// Build one of the four scenarios from tuning parameters.
pub fn scenario_spec(id: u8, tuning: &ScenarioTuning) -> Result<ScenarioSpec, SimError> {
    scenario_spec_with_channels(id, tuning, ChannelModel::default())
}

pub fn scenario_spec_with_channels(
    id: u8,
    tuning: &ScenarioTuning,
    channels: ChannelModel,
) -> Result<ScenarioSpec, SimError> {
    if !(1..=4).contains(&id) {
        return Err(SimError::UnknownScenario(id));
    }
    let origin = GeoPoint::from_degrees(tuning.origin_lat_deg, tuning.origin_lon_deg)
        .map_err(|e| SimError::MalformedSpec(e.to_string()))?;
    let road_point = |d: f64| -> Result<GeoPoint, SimError> {
        offset_point(origin, d, 0.0).map_err(|e| SimError::MalformedSpec(e.to_string()))
    };

    let road_length = tuning.area_spacing_m * (tuning.area_count.max(1) - 1) as f64;
    let bounding = GeoArea::circle(road_point(road_length / 2.0)?, road_length + 1000.0)
        .map_err(|e| SimError::MalformedSpec(e.to_string()))?;
    let monitored_areas: Vec<GeoArea> = (0..tuning.area_count)
        .map(|k| {
            GeoArea::circle(
                road_point(k as f64 * tuning.area_spacing_m)?,
                tuning.area_radius_m,
            )
            .map_err(|e| SimError::MalformedSpec(e.to_string()))
        })
        .collect::<Result<_, _>>()?;

    let segments: Vec<Segment> = (0..3)
        .map(|k| Segment {
            id: format!("seg-{k}"),
            from_m: k as f64 * tuning.segment_length_m,
            to_m: (k + 1) as f64 * tuning.segment_length_m,
        })
        .collect();

    let key = |name: &str| DataKey::new(name).expect("canonical keys are valid");
    let ego_end = road_point(tuning.ego_speed_mps * tuning.duration_ms as f64 / 1000.0)?;
    let ego = StationConfig {
        station_id: "veh-ego".into(),
        kind: StationKind::Vehicle,
        placement: Placement::Route {
            waypoints: vec![
                Waypoint {
                    at_ms: SIM_START_MS,
                    lat_e7: origin.lat_e7,
                    lon_e7: origin.lon_e7,
                },
                Waypoint {
                    at_ms: SIM_START_MS + tuning.duration_ms,
                    lat_e7: ego_end.lat_e7,
                    lon_e7: ego_end.lon_e7,
                },
            ],
        },
        #[rustfmt::skip]
        emissions: vec![
            Emission { key: key(keys::VEHICLE_SPEED), period_ms: 100 },
            Emission { key: key(keys::VEHICLE_ACCEL), period_ms: 100 },
            Emission { key: key(keys::VEHICLE_BRAKE), period_ms: 500 },
            Emission { key: key(keys::DRIVER_HEART_RATE), period_ms: 100 },
            Emission { key: key(keys::DRIVER_SKIN_CONDUCTANCE), period_ms: 200 },
            Emission { key: key(keys::DRIVER_PUPIL_DIAMETER), period_ms: 200 },
            Emission { key: key(keys::DRIVER_GAZE_ON_ROAD), period_ms: 200 },
            Emission { key: key(keys::TRAFFIC_VEHICLE_POSITION), period_ms: 500 },
            Emission { key: key(keys::TRAFFIC_VEHICLE_SPEED), period_ms: 500 },
        ],
    };

    let rsu_offset = match id {
        1 => tuning.s1.rsu_offset_m,
        2 => tuning.s2.rsu_offset_m,
        3 => tuning.s3.rsu_offset_m,
        _ => tuning.s4.rsu_offset_m,
    };
    let rsu_pos = road_point(rsu_offset)?;
    #[rustfmt::skip]
    let mut rsu_emissions = vec![
        Emission { key: key(keys::ENV_VISIBILITY), period_ms: 1000 },
        Emission { key: key(keys::ENV_FRICTION), period_ms: 1000 },
    ];
    let mut stations = vec![ego];
    let mut events = Vec::new();

    match id {
        1 => {
            let brk_pos = road_point(tuning.s1.breakdown_offset_m)?;
            stations.push(StationConfig {
                station_id: "veh-brk".into(),
                kind: StationKind::Vehicle,
                placement: Placement::Route {
                    waypoints: vec![
                        Waypoint {
                            at_ms: SIM_START_MS,
                            lat_e7: brk_pos.lat_e7,
                            lon_e7: brk_pos.lon_e7,
                        },
                        Waypoint {
                            at_ms: SIM_START_MS + tuning.duration_ms,
                            lat_e7: brk_pos.lat_e7,
                            lon_e7: brk_pos.lon_e7,
                        },
                    ],
                },
                #[rustfmt::skip]
                emissions: vec![
                    Emission { key: key(keys::TRAFFIC_STATIONARY_VEHICLE), period_ms: 1000 },
                    Emission { key: key(keys::TRAFFIC_VEHICLE_POSITION), period_ms: 1000 },
                ],
            });
            events.push(ScriptedEvent::StationaryVehicleOn {
                at_ms: tuning.s1.breakdown_at_ms,
                station_id: "veh-brk".into(),
            });
        }
        2 => {
            #[rustfmt::skip]
            rsu_emissions.extend([
                Emission { key: key(keys::TRAFFIC_LIGHT_PHASE), period_ms: 1000 },
                Emission { key: key(keys::TRAFFIC_LIGHT_TIME_TO_CHANGE), period_ms: 1000 },
                Emission { key: key(keys::TRAFFIC_PEDESTRIAN_COUNT), period_ms: 1000 },
            ]);
            for (i, at_ms) in tuning.s2.pedestrian_times_ms.iter().enumerate() {
                events.push(ScriptedEvent::PedestrianCount {
                    at_ms: *at_ms,
                    count: i as u64 + 1,
                });
            }
        }
        3 => {
            rsu_emissions.push(Emission {
                key: key(keys::ENV_PRECIPITATION),
                period_ms: 1000,
            });
            events.push(ScriptedEvent::FogOnset {
                at_ms: tuning.s3.fog_onset_ms,
                visibility_m: tuning.s3.fog_visibility_m,
                friction: tuning.s3.fog_friction,
                heart_rate_bpm: tuning.s3.fog_heart_rate_bpm,
            });
        }
        _ => {
            rsu_emissions.push(Emission {
                key: key(keys::ENV_BAD_CONDITION),
                period_ms: 1000,
            });
            // The stretch is positional; its time window follows from the
            // ego route at constant speed.
            let to_ms = |d: f64| (d / tuning.ego_speed_mps * 1000.0).round() as u64;
            let from_ms = to_ms(tuning.s4.bad_from_m);
            events.push(ScriptedEvent::BadRoad {
                from_ms,
                to_ms: to_ms(tuning.s4.bad_to_m),
            });
            events.push(ScriptedEvent::TakeoverRequest {
                at_ms: from_ms,
                station_id: "veh-ego".into(),
            });
        }
    }

    stations.push(StationConfig {
        station_id: "rsu-1".into(),
        kind: StationKind::Roadside,
        placement: Placement::Fixed {
            lat_e7: rsu_pos.lat_e7,
            lon_e7: rsu_pos.lon_e7,
        },
        emissions: rsu_emissions,
    });

    Ok(ScenarioSpec {
        id,
        start_ms: SIM_START_MS,
        duration_ms: tuning.duration_ms,
        channels,
        bounding,
        monitored_areas,
        stations,
        events,
        segments,
        driver_noise_frac: tuning.driver_noise_frac,
        light_cycle: (tuning.s2.green_ms, tuning.s2.yellow_ms, tuning.s2.red_ms),
        clear_visibility_m: tuning.s3.clear_visibility_m,
        clear_friction: tuning.s3.clear_friction,
    })
}
