//! Randomized properties of the scoring model.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use situ_backend::evaluate::{
    build_stress_map, combine_score, compare_situations, environment_severity, traffic_complexity,
    EnvCoefficients, ScoreWeights, TrafficCoefficients,
};
use situ_backend::fuse::{situation_id, Situation};
use situ_core::dictionary::{default_dictionary, keys};
use situ_core::{
    offset_point, DataKey, DataRecord, EpochTime, GeoArea, GeoPoint, ValidityInterval, Value,
};

fn t(ms: u64) -> EpochTime {
    EpochTime::from_millis(ms)
}

fn origin() -> GeoPoint {
    GeoPoint::from_degrees(49.0, 7.0).unwrap()
}

fn empty_situation() -> Situation {
    let area = GeoArea::circle(origin(), 90.0).unwrap();
    Situation {
        situation_id: situation_id(&area, t(0)),
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

/// Criterion-scale sweep: score non-increasing in each component, and the
/// recommendation invariant under weight renormalization.
#[test]
fn score_monotonicity_and_weight_renormalization_10k() {
    let mut rng = Pcg64::seed_from_u64(0x5c0);
    let w = ScoreWeights::default();
    for _ in 0..10_000 {
        let d = rng.random_range(0.0..1.0);
        let tc = rng.random_range(0.0..1.0);
        let e = rng.random_range(0.0..1.0);
        let base = combine_score(d, tc, e, &w);
        assert!((0.0..=1.0).contains(&base));

        let bump = rng.random_range(0.0..0.3);
        assert!(combine_score((d + bump).min(1.0), tc, e, &w) <= base + 1e-12);
        assert!(combine_score(d, (tc + bump).min(1.0), e, &w) <= base + 1e-12);
        assert!(combine_score(d, tc, (e + bump).min(1.0), &w) <= base + 1e-12);

        // Scaling all weights by a positive constant and renormalizing yields
        // the same recommendation.
        let c = rng.random_range(0.1..10.0);
        let scaled =
            ScoreWeights::normalized(w.w_driver * c, w.w_traffic * c, w.w_env * c, w.threshold)
                .unwrap();
        let score_scaled = combine_score(d, tc, e, &scaled);
        assert_eq!(score_scaled >= scaled.threshold, base >= w.threshold);
        assert!((score_scaled - base).abs() < 1e-9);
    }
}

#[test]
fn pedestrian_count_never_decreases_complexity() {
    let c = TrafficCoefficients::default();
    let mut prev = -1.0;
    for count in 0..12u64 {
        let mut s = empty_situation();
        add(
            &mut s,
            keys::TRAFFIC_PEDESTRIAN_COUNT,
            Value::Count(count),
            100,
        );
        let tc = traffic_complexity(&s, &c);
        assert!(tc >= prev - 1e-12, "count {count}: {tc} < {prev}");
        prev = tc;
    }
}

#[test]
fn falling_visibility_never_decreases_severity() {
    let c = EnvCoefficients::default();
    let mut prev = -1.0;
    for step in 0..40 {
        let vis = 2000.0 - step as f64 * 50.0;
        let mut s = empty_situation();
        add(&mut s, keys::ENV_VISIBILITY, Value::Scalar(vis), 100);
        let e = environment_severity(&s, &c);
        assert!(e >= prev - 1e-12, "visibility {vis}: {e} < {prev}");
        prev = e;
    }
}

#[test]
fn compare_is_symmetric_on_random_situations() {
    let dict = default_dictionary();
    let mut rng = Pcg64::seed_from_u64(77);
    let pool = [
        keys::DRIVER_HEART_RATE,
        keys::DRIVER_PUPIL_DIAMETER,
        keys::ENV_VISIBILITY,
        keys::ENV_FRICTION,
        keys::VEHICLE_SPEED,
    ];
    for _ in 0..500 {
        let make = |rng: &mut Pcg64| {
            let mut s = empty_situation();
            for key in pool {
                if rng.random_bool(0.6) {
                    let cal = dict.get_str(key).unwrap().calibration.unwrap();
                    let v = rng.random_range(cal.lo..cal.hi);
                    add(&mut s, key, Value::Scalar(v), 100);
                }
            }
            s
        };
        let a = make(&mut rng);
        let b = make(&mut rng);
        let ab = compare_situations(&a, &b, &dict);
        let ba = compare_situations(&b, &a, &dict);
        assert!((ab - ba).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&ab));
        if !a.records.is_empty() {
            assert!((compare_situations(&a, &a, &dict) - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn stress_map_conserves_situation_count() {
    let mut rng = Pcg64::seed_from_u64(78);
    for _ in 0..200 {
        let sw = origin();
        let ne = offset_point(sw, 2000.0, 2000.0).unwrap();
        let n = rng.random_range(0usize..100);
        let samples: Vec<(GeoPoint, f64)> = (0..n)
            .map(|_| {
                let p = offset_point(
                    sw,
                    rng.random_range(-500.0..2500.0),
                    rng.random_range(-500.0..2500.0),
                )
                .unwrap();
                (p, rng.random_range(0.0..1.0))
            })
            .collect();
        let grid = build_stress_map(samples.iter().copied(), sw, ne, 250.0).unwrap();
        assert_eq!(grid.total_count() + grid.outside, n);
    }
}
