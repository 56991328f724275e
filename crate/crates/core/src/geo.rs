//! Geographic points and area addressing.
//!
//! Areas are circles, rectangles or ellipses described by a center, two
//! extents and an azimuth, with a sign-based containment function: the
//! geometric function is positive inside, zero on the border and negative
//! outside. The local frame uses an equirectangular projection about the
//! area center, which is accurate to well under a meter for the few-kilometer
//! areas this system works with (below ~70 degrees latitude).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius used by all projections, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Latitude limit beyond which the local projection is considered degenerate.
pub const MAX_PROJECTION_LAT_DEG: f64 = 89.9;

/// Border classification tolerance on the (dimensionless) geometric function.
pub const BORDER_TOLERANCE: f64 = 1e-9;

const BOUNDARY_SAMPLES: usize = 360;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("coordinate out of range: lat_e7={lat_e7}, lon_e7={lon_e7}")]
    CoordinateOutOfRange { lat_e7: i64, lon_e7: i64 },
    #[error("projection degenerate at latitude {lat_deg} degrees")]
    DegenerateLatitude { lat_deg: f64 },
    #[error("invalid area dimensions: dist_a_m={dist_a_m}, dist_b_m={dist_b_m}")]
    InvalidDimensions { dist_a_m: f64, dist_b_m: f64 },
}

/// WGS-84 position in integer tenths of microdegrees.
///
/// Integer storage keeps wire round-trips bit-exact; conversion to degrees
/// happens only inside geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_e7: i32,
    pub lon_e7: i32,
}

pub const LAT_E7_MAX: i32 = 900_000_000;
pub const LON_E7_MAX: i32 = 1_800_000_000;

impl GeoPoint {
    pub fn new(lat_e7: i32, lon_e7: i32) -> Result<Self, GeoError> {
        if lat_e7.abs() > LAT_E7_MAX || lon_e7.abs() > LON_E7_MAX {
            return Err(GeoError::CoordinateOutOfRange {
                lat_e7: lat_e7 as i64,
                lon_e7: lon_e7 as i64,
            });
        }
        Ok(GeoPoint { lat_e7, lon_e7 })
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64) -> Result<Self, GeoError> {
        let lat = (lat_deg * 1e7).round();
        let lon = (lon_deg * 1e7).round();
        if !lat.is_finite()
            || !lon.is_finite()
            || lat.abs() > LAT_E7_MAX as f64
            || lon.abs() > LON_E7_MAX as f64
        {
            return Err(GeoError::CoordinateOutOfRange {
                lat_e7: lat as i64,
                lon_e7: lon as i64,
            });
        }
        Ok(GeoPoint {
            lat_e7: lat as i32,
            lon_e7: lon as i32,
        })
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat_e7 as f64 / 1e7
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon_e7 as f64 / 1e7
    }
}

/// Great-circle distance in meters (haversine on the mean-radius sphere).
pub fn great_circle_distance_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat_deg().to_radians();
    let lat2 = b.lat_deg().to_radians();
    let dlat = lat2 - lat1;
    let dlon = (b.lon_deg() - a.lon_deg()).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Displace `origin` by the given north/east meters (equirectangular inverse).
pub fn offset_point(origin: GeoPoint, north_m: f64, east_m: f64) -> Result<GeoPoint, GeoError> {
    let lat0 = origin.lat_deg();
    if lat0.abs() >= MAX_PROJECTION_LAT_DEG {
        return Err(GeoError::DegenerateLatitude { lat_deg: lat0 });
    }
    let dlat = (north_m / EARTH_RADIUS_M).to_degrees();
    let dlon = (east_m / (EARTH_RADIUS_M * lat0.to_radians().cos())).to_degrees();
    let lon = wrap_lon_deg(origin.lon_deg() + dlon);
    GeoPoint::from_degrees(lat0 + dlat, lon)
}

fn wrap_lon_deg(lon: f64) -> f64 {
    let w = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Area shape selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Rectangle,
    Ellipse,
}

/// Coordinates in an area's local frame: `x_m` along the long axis (azimuth
/// direction), `y_m` along the perpendicular.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalXY {
    pub x_m: f64,
    pub y_m: f64,
}

/// Geographic area: circle, rectangle or ellipse around a center point.
///
/// `dist_a_m` is the radius, half-length of the long side, or semi-major
/// axis; `dist_b_m` the half-length of the short side or semi-minor axis
/// (equal to `dist_a_m` for circles). `azimuth_deg` orients the long axis
/// clockwise from geographic north and is normalized into [0, 360).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WireArea", into = "WireArea")]
pub struct GeoArea {
    shape: Shape,
    center: GeoPoint,
    dist_a_m: f64,
    dist_b_m: f64,
    azimuth_deg: f64,
}

/// Serialized area layout: `{shape, lat_e7, lon_e7, dist_a_m, dist_b_m, azimuth_deg}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireArea {
    pub shape: Shape,
    pub lat_e7: i32,
    pub lon_e7: i32,
    pub dist_a_m: f64,
    pub dist_b_m: f64,
    pub azimuth_deg: f64,
}

impl From<GeoArea> for WireArea {
    fn from(a: GeoArea) -> Self {
        WireArea {
            shape: a.shape,
            lat_e7: a.center.lat_e7,
            lon_e7: a.center.lon_e7,
            dist_a_m: a.dist_a_m,
            dist_b_m: a.dist_b_m,
            azimuth_deg: a.azimuth_deg,
        }
    }
}

impl TryFrom<WireArea> for GeoArea {
    type Error = GeoError;

    fn try_from(w: WireArea) -> Result<Self, Self::Error> {
        let center = GeoPoint::new(w.lat_e7, w.lon_e7)?;
        match w.shape {
            Shape::Circle => GeoArea::circle(center, w.dist_a_m),
            Shape::Rectangle => GeoArea::rectangle(center, w.dist_a_m, w.dist_b_m, w.azimuth_deg),
            Shape::Ellipse => GeoArea::ellipse(center, w.dist_a_m, w.dist_b_m, w.azimuth_deg),
        }
    }
}

impl GeoArea {
    pub fn circle(center: GeoPoint, radius_m: f64) -> Result<Self, GeoError> {
        Self::checked(Shape::Circle, center, radius_m, radius_m, 0.0)
    }

    pub fn rectangle(
        center: GeoPoint,
        half_long_m: f64,
        half_short_m: f64,
        azimuth_deg: f64,
    ) -> Result<Self, GeoError> {
        Self::checked(
            Shape::Rectangle,
            center,
            half_long_m,
            half_short_m,
            azimuth_deg,
        )
    }

    pub fn ellipse(
        center: GeoPoint,
        semi_major_m: f64,
        semi_minor_m: f64,
        azimuth_deg: f64,
    ) -> Result<Self, GeoError> {
        Self::checked(
            Shape::Ellipse,
            center,
            semi_major_m,
            semi_minor_m,
            azimuth_deg,
        )
    }

    fn checked(
        shape: Shape,
        center: GeoPoint,
        dist_a_m: f64,
        dist_b_m: f64,
        azimuth_deg: f64,
    ) -> Result<Self, GeoError> {
        let ok = dist_a_m.is_finite()
            && dist_b_m.is_finite()
            && azimuth_deg.is_finite()
            && dist_b_m > 0.0
            && dist_a_m >= dist_b_m;
        if !ok {
            return Err(GeoError::InvalidDimensions { dist_a_m, dist_b_m });
        }
        let azimuth_deg = if shape == Shape::Circle {
            0.0
        } else {
            azimuth_deg.rem_euclid(360.0)
        };
        Ok(GeoArea {
            shape,
            center,
            dist_a_m,
            dist_b_m,
            azimuth_deg,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn center(&self) -> GeoPoint {
        self.center
    }

    pub fn dist_a_m(&self) -> f64 {
        self.dist_a_m
    }

    pub fn dist_b_m(&self) -> f64 {
        self.dist_b_m
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_deg
    }

    /// Project `p` into the area's local frame: equirectangular offsets about
    /// the center (north `n = R * dlat`, east `e = R * dlon * cos(lat_c)`),
    /// rotated so x aligns with the azimuth direction.
    pub fn project_to_local(&self, p: GeoPoint) -> Result<LocalXY, GeoError> {
        for lat in [p.lat_deg(), self.center.lat_deg()] {
            if lat.abs() >= MAX_PROJECTION_LAT_DEG {
                return Err(GeoError::DegenerateLatitude { lat_deg: lat });
            }
        }
        let n = EARTH_RADIUS_M * (p.lat_deg() - self.center.lat_deg()).to_radians();
        let e = EARTH_RADIUS_M
            * (p.lon_deg() - self.center.lon_deg()).to_radians()
            * self.center.lat_deg().to_radians().cos();
        let az = self.azimuth_deg.to_radians();
        Ok(LocalXY {
            x_m: n * az.cos() + e * az.sin(),
            y_m: -n * az.sin() + e * az.cos(),
        })
    }

    /// Inverse of [`project_to_local`](Self::project_to_local), rounded to the
    /// integer coordinate grid.
    pub fn local_to_point(&self, xy: LocalXY) -> Result<GeoPoint, GeoError> {
        let az = self.azimuth_deg.to_radians();
        let n = xy.x_m * az.cos() - xy.y_m * az.sin();
        let e = xy.x_m * az.sin() + xy.y_m * az.cos();
        offset_point(self.center, n, e)
    }

    /// Sign-based containment function: positive inside, zero on the border,
    /// negative outside.
    ///
    /// Circle/ellipse: `1 - (x/a)^2 - (y/b)^2`. Rectangle:
    /// `min(1 - (x/a)^2, 1 - (y/b)^2)`.
    pub fn geometric_function(&self, p: GeoPoint) -> Result<f64, GeoError> {
        let xy = self.project_to_local(p)?;
        let xa = xy.x_m / self.dist_a_m;
        let yb = xy.y_m / self.dist_b_m;
        Ok(match self.shape {
            Shape::Circle | Shape::Ellipse => 1.0 - xa * xa - yb * yb,
            Shape::Rectangle => (1.0 - xa * xa).min(1.0 - yb * yb),
        })
    }

    /// Classify `p` by the sign of the geometric function, with a
    /// `BORDER_TOLERANCE` band counted as the border.
    pub fn contains(&self, p: GeoPoint) -> Result<Containment, GeoError> {
        let f = self.geometric_function(p)?;
        Ok(if f.abs() <= BORDER_TOLERANCE {
            Containment::Border
        } else if f > 0.0 {
            Containment::Inside
        } else {
            Containment::Outside
        })
    }

    /// Point on the area border, parameterized by `frac` in [0, 1) along the
    /// perimeter walk.
    pub fn boundary_local(&self, frac: f64) -> LocalXY {
        let (a, b) = (self.dist_a_m, self.dist_b_m);
        match self.shape {
            Shape::Circle | Shape::Ellipse => {
                let theta = frac * 2.0 * PI;
                LocalXY {
                    x_m: a * theta.cos(),
                    y_m: b * theta.sin(),
                }
            }
            Shape::Rectangle => {
                // Walk the perimeter corner to corner: (a,b) -> (-a,b) -> (-a,-b) -> (a,-b) -> (a,b).
                let perimeter = 4.0 * (a + b);
                let mut s = frac.rem_euclid(1.0) * perimeter;
                if s < 2.0 * a {
                    return LocalXY { x_m: a - s, y_m: b };
                }
                s -= 2.0 * a;
                if s < 2.0 * b {
                    return LocalXY {
                        x_m: -a,
                        y_m: b - s,
                    };
                }
                s -= 2.0 * b;
                if s < 2.0 * a {
                    return LocalXY {
                        x_m: -a + s,
                        y_m: -b,
                    };
                }
                s -= 2.0 * a;
                LocalXY {
                    x_m: a,
                    y_m: -b + s,
                }
            }
        }
    }
}

/// Inside / border / outside classification of a point against an area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Containment {
    Inside,
    Border,
    Outside,
}

/// Whether two areas overlap.
///
/// Circle pairs are decided analytically (center distance strictly below the
/// radius sum). Every other pair is decided by testing the opposite center
/// plus 360 uniformly spaced boundary samples in both directions, so slivers
/// thinner than the 1-degree sampling gap can be missed; that resolution is
/// adequate for the dedup and responsibility checks this feeds.
pub fn areas_overlap(a: &GeoArea, b: &GeoArea) -> bool {
    if a.shape == Shape::Circle && b.shape == Shape::Circle {
        return great_circle_distance_m(a.center, b.center) < a.dist_a_m + b.dist_a_m;
    }
    covers_any_of(a, b) || covers_any_of(b, a)
}

fn covers_any_of(container: &GeoArea, other: &GeoArea) -> bool {
    if matches!(
        container.contains(other.center),
        Ok(Containment::Inside) | Ok(Containment::Border)
    ) {
        return true;
    }
    for i in 0..BOUNDARY_SAMPLES {
        let xy = other.boundary_local(i as f64 / BOUNDARY_SAMPLES as f64);
        let Ok(p) = other.local_to_point(xy) else {
            continue;
        };
        if matches!(
            container.contains(p),
            Ok(Containment::Inside) | Ok(Containment::Border)
        ) {
            return true;
        }
    }
    false
}
