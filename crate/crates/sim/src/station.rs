//! Station configuration: vehicles on timed routes, roadside stations at
//! fixed positions, each with a set of periodic emissions.

use serde::{Deserialize, Serialize};

use situ_core::{DataDictionary, DataKey, EpochTime, GeoPoint};

use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationKind {
    Vehicle,
    Roadside,
}

/// One periodic emission: a key produced every `period_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub key: DataKey,
    pub period_ms: u64,
}

/// Timed route waypoint; positions interpolate linearly in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub at_ms: u64,
    pub lat_e7: i32,
    pub lon_e7: i32,
}

impl Waypoint {
    pub fn position(&self) -> GeoPoint {
        GeoPoint {
            lat_e7: self.lat_e7,
            lon_e7: self.lon_e7,
        }
    }
}

/// Where a station is: roadside stations sit still, vehicles follow routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Placement {
    Fixed { lat_e7: i32, lon_e7: i32 },
    Route { waypoints: Vec<Waypoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    pub station_id: String,
    pub kind: StationKind,
    pub placement: Placement,
    pub emissions: Vec<Emission>,
}

impl StationConfig {
    /// Position at simulation time `t`: fixed, or linear interpolation along
    /// the route (clamped at both ends).
    pub fn position_at(&self, t: EpochTime) -> GeoPoint {
        match &self.placement {
            Placement::Fixed { lat_e7, lon_e7 } => GeoPoint {
                lat_e7: *lat_e7,
                lon_e7: *lon_e7,
            },
            Placement::Route { waypoints } => {
                let ms = t.millis();
                let first = waypoints.first().expect("validated non-empty route");
                let last = waypoints.last().expect("validated non-empty route");
                if ms <= first.at_ms {
                    return first.position();
                }
                if ms >= last.at_ms {
                    return last.position();
                }
                let idx = waypoints.partition_point(|w| w.at_ms <= ms);
                let (a, b) = (&waypoints[idx - 1], &waypoints[idx]);
                let frac = (ms - a.at_ms) as f64 / (b.at_ms - a.at_ms) as f64;
                let lerp = |x: i32, y: i32| x as f64 + (y as f64 - x as f64) * frac;
                GeoPoint {
                    lat_e7: lerp(a.lat_e7, b.lat_e7).round() as i32,
                    lon_e7: lerp(a.lon_e7, b.lon_e7).round() as i32,
                }
            }
        }
    }

    pub fn validate(&self, dict: &DataDictionary) -> Result<(), SimError> {
        match (&self.kind, &self.placement) {
            (StationKind::Vehicle, Placement::Fixed { .. }) => {
                return Err(SimError::MalformedSpec(format!(
                    "vehicle station {} needs a route",
                    self.station_id
                )));
            }
            (StationKind::Roadside, Placement::Route { .. }) => {
                return Err(SimError::MalformedSpec(format!(
                    "roadside station {} needs a fixed position",
                    self.station_id
                )));
            }
            (StationKind::Vehicle, Placement::Route { waypoints }) => {
                if waypoints.is_empty() {
                    return Err(SimError::MalformedSpec(format!(
                        "station {} has an empty route",
                        self.station_id
                    )));
                }
                if waypoints.windows(2).any(|w| w[0].at_ms >= w[1].at_ms) {
                    return Err(SimError::MalformedSpec(format!(
                        "station {} route times must increase",
                        self.station_id
                    )));
                }
            }
            (StationKind::Roadside, Placement::Fixed { .. }) => {}
        }
        for emission in &self.emissions {
            if dict.get(&emission.key).is_none() {
                return Err(SimError::MalformedSpec(format!(
                    "station {} emits unknown key {}",
                    self.station_id, emission.key
                )));
            }
            if emission.period_ms == 0 {
                return Err(SimError::MalformedSpec(format!(
                    "station {} has a zero emission period",
                    self.station_id
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use situ_core::dictionary::{default_dictionary, keys};
    use situ_core::{great_circle_distance_m, offset_point};

    fn t(ms: u64) -> EpochTime {
        EpochTime::from_millis(ms)
    }

    fn route_station() -> StationConfig {
        let start = GeoPoint::from_degrees(49.0, 7.0).unwrap();
        let end = offset_point(start, 834.0, 0.0).unwrap();
        StationConfig {
            station_id: "veh-ego".into(),
            kind: StationKind::Vehicle,
            placement: Placement::Route {
                waypoints: vec![
                    Waypoint {
                        at_ms: 0,
                        lat_e7: start.lat_e7,
                        lon_e7: start.lon_e7,
                    },
                    Waypoint {
                        at_ms: 60_000,
                        lat_e7: end.lat_e7,
                        lon_e7: end.lon_e7,
                    },
                ],
            },
            emissions: vec![Emission {
                key: DataKey::new(keys::VEHICLE_SPEED).unwrap(),
                period_ms: 100,
            }],
        }
    }

    #[test]
    fn route_interpolates_linearly() {
        let station = route_station();
        let start = station.position_at(t(0));
        let mid = station.position_at(t(30_000));
        let end = station.position_at(t(60_000));
        let half = great_circle_distance_m(start, mid);
        let full = great_circle_distance_m(start, end);
        assert!((full - 834.0).abs() < 1.0);
        assert!((half - 417.0).abs() < 1.0);
        // Clamped beyond the ends.
        assert_eq!(station.position_at(t(90_000)), end);
    }

    #[test]
    fn vehicle_without_route_is_malformed() {
        let dict = default_dictionary();
        let mut station = route_station();
        station.placement = Placement::Fixed {
            lat_e7: 0,
            lon_e7: 0,
        };
        assert!(station.validate(&dict).is_err());
    }

    #[test]
    fn unknown_emission_key_is_malformed() {
        let mut dict = default_dictionary();
        let station = route_station();
        assert!(station.validate(&dict).is_ok());
        dict = DataDictionary::new();
        assert!(station.validate(&dict).is_err());
    }
}
