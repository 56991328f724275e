//! Pseudonymous travel time recording.
//!
//! Trips are identified by unlinkable per-trip tokens instead of station
//! identities: a keyed hash of a random trip nonce under a station-held
//! secret. The backend table stores per-segment durations and answers mean
//! travel time queries.

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use situ_core::EpochTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TravelError {
    #[error("empty-secret")]
    EmptySecret,
    #[error("non-positive-duration: enter {enter_ms} >= exit {exit_ms}")]
    NonPositiveDuration { enter_ms: u64, exit_ms: u64 },
}

/// HMAC-SHA256 of the trip nonce under the station secret, hex-encoded.
/// Same inputs give the same token; the token never embeds the station id.
pub fn make_pseudonym(trip_nonce: u128, station_secret: &[u8]) -> Result<String, TravelError> {
    if station_secret.is_empty() {
        return Err(TravelError::EmptySecret);
    }
    let mut mac =
        Hmac::<Sha256>::new_from_slice(station_secret).expect("hmac accepts any key length");
    mac.update(&trip_nonce.to_be_bytes());
    Ok(hex::encode(mac.finalize().into_bytes()))
}

/// One recorded traversal of a road segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeRecord {
    pub pseudonym: String,
    pub segment_id: String,
    pub enter: EpochTime,
    pub exit: EpochTime,
}

impl TravelTimeRecord {
    pub fn duration_ms(&self) -> u64 {
        self.exit.since(self.enter)
    }
}

/// Backend travel-time table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeTable {
    records: Vec<TravelTimeRecord>,
}

impl TravelTimeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_travel_time(
        &mut self,
        segment_id: impl Into<String>,
        pseudonym: impl Into<String>,
        enter: EpochTime,
        exit: EpochTime,
    ) -> Result<&TravelTimeRecord, TravelError> {
        if exit <= enter {
            return Err(TravelError::NonPositiveDuration {
                enter_ms: enter.millis(),
                exit_ms: exit.millis(),
            });
        }
        self.records.push(TravelTimeRecord {
            pseudonym: pseudonym.into(),
            segment_id: segment_id.into(),
            enter,
            exit,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[TravelTimeRecord] {
        &self.records
    }

    pub fn mean_travel_time_ms(&self, segment_id: &str) -> Option<f64> {
        let durations: Vec<u64> = self
            .records
            .iter()
            .filter(|r| r.segment_id == segment_id)
            .map(TravelTimeRecord::duration_ms)
            .collect();
        if durations.is_empty() {
            return None;
        }
        Some(durations.iter().sum::<u64>() as f64 / durations.len() as f64)
    }
}
