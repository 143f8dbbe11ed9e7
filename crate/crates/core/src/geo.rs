//! Geographic primitives: validated coordinates, great-circle distance and
//! forward bearing on a sphere.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean Earth radius in meters. Cell-tower positioning is accurate to
/// hundreds of meters at best, so a spherical model is sufficient.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A point on the Earth's surface, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    /// Latitude must be finite in [-90, 90], longitude finite in [-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<GeoPoint> {
        if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon)
        {
            return Err(Error::InvalidCoordinate { lat, lon });
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Great-circle distance between two points in meters (haversine formula).
///
/// Symmetric, non-negative, and zero exactly when the coordinates coincide.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    if a.lat == b.lat && a.lon == b.lon {
        return 0.0;
    }
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();

    let s1 = (dlat / 2.0).sin();
    let s2 = (dlon / 2.0).sin();
    let h = s1 * s1 + lat1.cos() * lat2.cos() * s2 * s2;
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Initial (forward) great-circle bearing from `a` to `b`, degrees in [0, 360).
///
/// Returns 0 for coincident points.
pub fn initial_bearing(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlon = (b.lon - a.lon).to_radians();

    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    if y == 0.0 && x == 0.0 {
        return 0.0;
    }
    let deg = y.atan2(x).to_degrees();
    (deg + 360.0) % 360.0
}

/// Absolute angular difference between two bearings, folded into [0, 180].
pub fn bearing_difference(deg_a: f64, deg_b: f64) -> f64 {
    let d = (deg_a - deg_b).abs() % 360.0;
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}
