//! Shared data model for the situation fusion platform.
//!
//! Everything the other crates exchange lives here: epoch timestamps with
//! validity windows, geo-referenced key-value records, the data dictionary
//! those records are validated against, and the circle/rectangle/ellipse
//! area geometry used for spatial assignment.

pub mod dictionary;
pub mod geo;
pub mod key;
pub mod record;
pub mod time;
pub mod value;

pub use dictionary::{
    default_dictionary, validate_record, Calibration, DataDictionary, DictionaryEntry, FactorClass,
    SignalClass, ValidationError, RANGE_SLACK,
};
pub use geo::{
    areas_overlap, great_circle_distance_m, offset_point, Containment, GeoArea, GeoError, GeoPoint,
    LocalXY, Shape, EARTH_RADIUS_M,
};
pub use key::{DataKey, KeyError};
pub use record::{trace_tags, DataRecord, WireError, WireRecord};
pub use time::{EpochTime, ValidityInterval};
pub use value::{QualityFlag, Value, ValueKind};
