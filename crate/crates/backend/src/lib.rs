//! Backend services of the situation fusion platform: the four aggregator
//! roles, the preparation pipeline, the data fusion service with its wire
//! protocol, the situation storage, and the evaluation stage.

pub mod aggregate;
pub mod evaluate;
pub mod fuse;
pub mod prepare;
pub mod store;
pub mod wire;

pub use aggregate::{deduplicate, Aggregator, AggregatorKind, Batch, RejectReason};
pub use evaluate::{
    build_stress_map, compare_situations, driver_load, environment_severity,
    query_intersection_suitability, traffic_complexity, BaselineScorer, EvaluateError,
    HandoverDirection, ScoreWeights, ScoringConfig, SituationScorer, StressMapGrid,
    SuitabilityResult,
};
pub use fuse::{
    completeness, completeness_groups, AssemblyOutput, FusionConfig, FusionError, FusionService,
    IngestVerdict, RegistrationError, RegistrationRequest, Session, Situation,
};
pub use prepare::{
    attach_position, extrapolate_gaps, prepare_records, resample, to_unified_time, PrepareError,
    Series, TimeBase, TimeBaseKind,
};
pub use store::{
    ReplayWarning, SituationQuery, SituationStore, StoreError, StoredSituation, SubscriptionHandle,
};
