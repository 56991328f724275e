//! Epoch timestamps and validity windows.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Milliseconds since 1970-01-01T00:00:00Z (UTC).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EpochTime(u64);

impl EpochTime {
    pub const ZERO: EpochTime = EpochTime(0);
    pub const MAX: EpochTime = EpochTime(u64::MAX);

    pub const fn from_millis(millis: u64) -> Self {
        EpochTime(millis)
    }

    pub const fn millis(self) -> u64 {
        self.0
    }

    pub const fn add_millis(self, ms: u64) -> Self {
        EpochTime(self.0.saturating_add(ms))
    }

    /// Millisecond difference `self - earlier`, clamped at zero.
    pub const fn since(self, earlier: EpochTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }

    /// Start of the tumbling window of length `window_ms` containing this instant.
    /// Windows are aligned to multiples of `window_ms` on the epoch grid.
    pub const fn window_start(self, window_ms: u64) -> EpochTime {
        EpochTime(self.0 / window_ms * window_ms)
    }
}

impl fmt::Display for EpochTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Half-open span `[start, start + duration_ms)` during which a record's value
/// is asserted to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValidityInterval {
    pub start: EpochTime,
    pub duration_ms: u64,
}

impl ValidityInterval {
    pub const fn new(start: EpochTime, duration_ms: u64) -> Self {
        ValidityInterval { start, duration_ms }
    }

    pub const fn end(&self) -> EpochTime {
        self.start.add_millis(self.duration_ms)
    }

    /// A record is valid at `t` iff `start <= t < start + duration_ms`.
    pub fn is_valid_at(&self, t: EpochTime) -> bool {
        self.start <= t && t < self.end()
    }

    /// Overlap of two half-open intervals. Zero-duration intervals are treated
    /// as time points so that instantaneous events still intersect the window
    /// containing them.
    pub fn intersects(&self, other: &ValidityInterval) -> bool {
        match (self.duration_ms, other.duration_ms) {
            (0, 0) => self.start == other.start,
            (0, _) => other.is_valid_at(self.start),
            (_, 0) => self.is_valid_at(other.start),
            _ => self.start < other.end() && other.start < self.end(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ms: u64) -> EpochTime {
        EpochTime::from_millis(ms)
    }

    #[test]
    fn validity_is_half_open() {
        let v = ValidityInterval::new(t(1000), 500);
        assert!(!v.is_valid_at(t(999)));
        assert!(v.is_valid_at(t(1000)));
        assert!(v.is_valid_at(t(1499)));
        assert!(!v.is_valid_at(t(1500)));
    }

    #[test]
    fn zero_duration_is_never_valid_but_counts_as_point_for_overlap() {
        let v = ValidityInterval::new(t(1000), 0);
        assert!(!v.is_valid_at(t(1000)));
        let window = ValidityInterval::new(t(1000), 1000);
        assert!(v.intersects(&window));
        assert!(window.intersects(&v));
        let before = ValidityInterval::new(t(0), 1000);
        assert!(!v.intersects(&before));
    }

    #[test]
    fn interval_overlap() {
        let a = ValidityInterval::new(t(0), 1000);
        let b = ValidityInterval::new(t(999), 10);
        let c = ValidityInterval::new(t(1000), 10);
        assert!(a.intersects(&b));
        assert!(!a.intersects(&c));
    }

    #[test]
    fn window_alignment() {
        assert_eq!(t(1234).window_start(1000), t(1000));
        assert_eq!(t(1000).window_start(1000), t(1000));
        assert_eq!(t(999).window_start(1000), t(0));
    }
}
