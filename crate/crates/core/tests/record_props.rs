//! Property tests for records and dictionary validation.

use proptest::prelude::*;
use situ_core::dictionary::{default_dictionary, keys, validate_record};
use situ_core::geo::GeoPoint;
use situ_core::time::{EpochTime, ValidityInterval};
use situ_core::value::{QualityFlag, Value, ValueKind};
use situ_core::{DataKey, DataRecord};

/// A key from the canonical dictionary together with a matching in-range value.
fn key_and_value() -> impl Strategy<Value = (String, Value)> {
    prop_oneof![
        (
            Just(keys::DRIVER_HEART_RATE.to_owned()),
            (60.0..120.0f64).prop_map(Value::Scalar)
        ),
        (
            Just(keys::ENV_VISIBILITY.to_owned()),
            (0.0..2000.0f64).prop_map(Value::Scalar)
        ),
        (
            Just(keys::VEHICLE_ACCEL.to_owned()),
            (-10.0..10.0f64).prop_map(Value::Scalar)
        ),
        (
            Just(keys::TRAFFIC_PEDESTRIAN_COUNT.to_owned()),
            (0u64..50).prop_map(Value::Count)
        ),
        (
            Just(keys::VEHICLE_BRAKE.to_owned()),
            any::<bool>().prop_map(Value::Flag)
        ),
        (
            Just(keys::TRAFFIC_LIGHT_PHASE.to_owned()),
            prop_oneof![Just("red"), Just("yellow"), Just("green")]
                .prop_map(|s| Value::Token(s.to_owned()))
        ),
    ]
}

prop_compose! {
    fn arb_record()(
        (key, value) in key_and_value(),
        gen_ms in 0u64..10_000_000,
        dur_ms in 1u64..10_000,
        has_pos in any::<bool>(),
        lat in -800_000_000i32..800_000_000,
        lon in -1_700_000_000i32..1_700_000_000,
    ) -> DataRecord {
        let position = has_pos.then(|| GeoPoint::new(lat, lon).unwrap());
        DataRecord::measured(
            DataKey::new(key).unwrap(),
            value,
            EpochTime::from_millis(gen_ms),
            ValidityInterval::new(EpochTime::from_millis(gen_ms), dur_ms),
            position,
            "station-x",
        )
    }
}

proptest! {
    /// A record that validates OK round-trips through the canonical layout
    /// unchanged.
    #[test]
    fn valid_records_round_trip(record in arb_record()) {
        let dict = default_dictionary();
        prop_assert!(validate_record(&record, &dict).is_ok());
        let line = record.to_json_line();
        let back = DataRecord::from_json_line(&line).unwrap();
        prop_assert_eq!(back, record);
    }

    /// Preparation may change quality and fill the position; the record must
    /// still validate.
    #[test]
    fn prepared_records_still_validate(record in arb_record()) {
        let dict = default_dictionary();
        prop_assert!(validate_record(&record, &dict).is_ok());
        let mut prepared = record;
        prepared.quality = QualityFlag::Interpolated;
        if prepared.position.is_none() {
            prepared.position = Some(GeoPoint::new(490_000_000, 70_000_000).unwrap());
        }
        prop_assert!(validate_record(&prepared, &dict).is_ok());
    }

    /// The untagged value encoding never confuses kinds for dictionary values.
    #[test]
    fn value_kind_survives_round_trip((key, value) in key_and_value()) {
        let _ = key;
        let encoded = serde_json::to_string(&value).unwrap();
        let back: Value = serde_json::from_str(&encoded).unwrap();
        prop_assert_eq!(back.kind(), value.kind());
        prop_assert_eq!(back, value);
    }
}

#[test]
fn kinds_match_dictionary_declarations() {
    let dict = default_dictionary();
    for entry in dict.iter() {
        // Each declared kind has a constructible witness value.
        let witness = match entry.value_kind {
            ValueKind::Scalar => {
                Value::Scalar(entry.calibration.map_or(1.0, |c| (c.lo + c.hi) / 2.0))
            }
            ValueKind::Count => Value::Count(1),
            ValueKind::Flag => Value::Flag(true),
            ValueKind::Token => Value::Token("tok".to_owned()),
        };
        let r = DataRecord::measured(
            entry.key.clone(),
            witness,
            EpochTime::from_millis(0),
            ValidityInterval::new(EpochTime::from_millis(0), 1),
            None,
            "w",
        );
        assert_eq!(validate_record(&r, &dict), Ok(()), "{}", entry.key);
    }
}
