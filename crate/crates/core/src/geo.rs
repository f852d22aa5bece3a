//! Geodesic and local-plane geometry.
//!
//! Positions are WGS84 degrees on a spherical Earth. Short-range work (fusion
//! merging, TTI rays, lane distances) happens on an equirectangular tangent
//! plane around a caller-chosen origin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Largest distance from the origin accepted by [`to_local_enu`].
pub const MAX_LOCAL_RANGE_M: f64 = 10_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("course {0} outside [0, 360)")]
    CourseOutOfRange(f64),
    #[error("point is {0:.1} m from the origin; local projection is limited to 10 km")]
    RangeExceeded(f64),
}

/// WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPosition {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::LatitudeOutOfRange(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::LongitudeOutOfRange(lon));
        }
        Ok(GeoPosition { lat, lon })
    }

    pub fn distance_to(&self, other: &GeoPosition) -> f64 {
        haversine_distance(*self, *other)
    }
}

/// Point on the local tangent plane, meters east/north of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalPoint {
    pub east: f64,
    pub north: f64,
}

impl LocalPoint {
    pub fn new(east: f64, north: f64) -> Self {
        LocalPoint { east, north }
    }

    pub fn norm(&self) -> f64 {
        self.east.hypot(self.north)
    }

    pub fn dot(&self, other: &LocalPoint) -> f64 {
        self.east * other.east + self.north * other.north
    }

    /// z-component of the 2D cross product.
    pub fn cross(&self, other: &LocalPoint) -> f64 {
        self.east * other.north - self.north * other.east
    }

    pub fn scale(&self, k: f64) -> LocalPoint {
        LocalPoint::new(self.east * k, self.north * k)
    }
}

impl std::ops::Add for LocalPoint {
    type Output = LocalPoint;
    fn add(self, rhs: LocalPoint) -> LocalPoint {
        LocalPoint::new(self.east + rhs.east, self.north + rhs.north)
    }
}

impl std::ops::Sub for LocalPoint {
    type Output = LocalPoint;
    fn sub(self, rhs: LocalPoint) -> LocalPoint {
        LocalPoint::new(self.east - rhs.east, self.north - rhs.north)
    }
}

/// Course over ground, degrees clockwise from true north, in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CourseDeg(f64);

impl CourseDeg {
    pub fn new(value: f64) -> Result<Self, GeoError> {
        if (0.0..360.0).contains(&value) {
            Ok(CourseDeg(value))
        } else {
            Err(GeoError::CourseOutOfRange(value))
        }
    }

    /// Wraps any finite angle into `[0, 360)`.
    pub fn wrapped(value: f64) -> Self {
        let mut v = value.rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        if v >= 360.0 {
            v = 0.0;
        }
        CourseDeg(v)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Bearing of a local-plane direction vector.
    pub fn from_vector(v: LocalPoint) -> Self {
        CourseDeg::wrapped(v.east.atan2(v.north).to_degrees())
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_distance(a: GeoPosition, b: GeoPosition) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection of `p` onto the tangent plane at `origin`.
pub fn to_local_enu(origin: GeoPosition, p: GeoPosition) -> Result<LocalPoint, GeoError> {
    let d = haversine_distance(origin, p);
    if d >= MAX_LOCAL_RANGE_M {
        return Err(GeoError::RangeExceeded(d));
    }
    Ok(project(origin, p))
}

/// Projection without the range check. Callers guarantee short distances.
pub(crate) fn project(origin: GeoPosition, p: GeoPosition) -> LocalPoint {
    let east = EARTH_RADIUS_M * (p.lon - origin.lon).to_radians() * origin.lat.to_radians().cos();
    let north = EARTH_RADIUS_M * (p.lat - origin.lat).to_radians();
    LocalPoint { east, north }
}

/// Inverse of [`to_local_enu`].
pub fn from_local_enu(origin: GeoPosition, lp: LocalPoint) -> GeoPosition {
    if lp.east == 0.0 && lp.north == 0.0 {
        return origin;
    }
    let lat = origin.lat + (lp.north / EARTH_RADIUS_M).to_degrees();
    let lon = origin.lon + (lp.east / (EARTH_RADIUS_M * origin.lat.to_radians().cos())).to_degrees();
    GeoPosition { lat, lon }
}

/// `(east, north)` unit vector pointing along the course.
pub fn course_to_unit_vector(c: CourseDeg) -> LocalPoint {
    let r = c.value().to_radians();
    LocalPoint::new(r.sin(), r.cos())
}

/// Smallest absolute difference between two courses, in `[0, 180]`.
pub fn angular_difference(a: CourseDeg, b: CourseDeg) -> f64 {
    let d = (a.value() - b.value()).abs();
    d.min(360.0 - d)
}
