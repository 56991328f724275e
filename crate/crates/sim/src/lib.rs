//! Deterministic, seeded discrete-event simulation of vehicle and roadside
//! stations: scenario definitions, simulated hybrid channels, and the
//! pseudonymous travel-time service.
//!
//! Reproducibility contract: a run is a pure function of (scenario spec,
//! seed). The only randomness source is a PCG-64 generator seeded from the
//! run seed, so streams are identical across runs and platforms.

pub mod channel;
pub mod clock;
pub mod scenario;
pub mod station;
pub mod travel;

use thiserror::Error;

pub use channel::{ChannelModel, DeliveryOutcome, DropEntry, DropReason};
pub use clock::SimClock;
pub use scenario::{
    run_scenario, scenario_spec, scenario_spec_with_channels, Delivery, Destination, ScenarioSpec,
    ScenarioTuning, ScriptedEvent, SimOutput, SIM_START_MS,
};
pub use station::{Emission, Placement, StationConfig, StationKind, Waypoint};
pub use travel::{make_pseudonym, TravelError, TravelTimeRecord, TravelTimeTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("malformed-spec: {0}")]
    MalformedSpec(String),
    #[error("unknown-scenario: {0}")]
    UnknownScenario(u8),
}
