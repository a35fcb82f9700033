//! Haversine geometry on the WGS84 mean-radius sphere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lat.abs() > 90.0 || self.lon.abs() > 180.0 || !self.lat.is_finite() {
            return Err(Error::Validation(format!(
                "invalid coordinates ({}, {})",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (p1, l1) = (a.lat.to_radians(), a.lon.to_radians());
    let (p2, l2) = (b.lat.to_radians(), b.lon.to_radians());
    let dp = p2 - p1;
    let dl = l2 - l1;
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().asin()
}

/// Initial bearing from `from` toward `to`, radians. Coincident points
/// give 0 (due north) so sin/cos features stay well defined.
pub fn initial_bearing_rad(from: LatLon, to: LatLon) -> f64 {
    let p1 = from.lat.to_radians();
    let p2 = to.lat.to_radians();
    let dl = (to.lon - from.lon).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    if y == 0.0 && x == 0.0 {
        0.0
    } else {
        y.atan2(x)
    }
}

/// Displace a coordinate by kilometers east/north (small-offset
/// approximation, fine for the few-km scatter the generator uses).
pub fn offset_km(origin: LatLon, east_km: f64, north_km: f64) -> LatLon {
    let lat = origin.lat + (north_km / EARTH_RADIUS_KM).to_degrees();
    let lon = origin.lon
        + (east_km / (EARTH_RADIUS_KM * origin.lat.to_radians().cos())).to_degrees();
    LatLon { lat, lon }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_to_self() {
        let p = LatLon::new(34.05, -118.25);
        assert_eq!(haversine_km(p, p), 0.0);
    }

    #[test]
    fn one_hundredth_degree_longitude_at_la() {
        // Frozen from the closed-form haversine at lat 34.05.
        let d = haversine_km(LatLon::new(34.05, -118.26), LatLon::new(34.05, -118.25));
        assert!((d - 0.9213060241577776).abs() < 1e-12);
    }

    #[test]
    fn offset_round_trips_through_haversine() {
        let origin = LatLon::new(34.05, -118.25);
        let p = offset_km(origin, 3.0, 0.0);
        assert!((haversine_km(origin, p) - 3.0).abs() < 0.01);
        let q = offset_km(origin, 0.0, -2.0);
        assert!((haversine_km(origin, q) - 2.0).abs() < 0.01);
    }

    #[test]
    fn bearing_quadrants() {
        let origin = LatLon::new(34.05, -118.25);
        let north = offset_km(origin, 0.0, 1.0);
        let east = offset_km(origin, 1.0, 0.0);
        assert!(initial_bearing_rad(origin, north).abs() < 1e-6);
        assert!((initial_bearing_rad(origin, east) - std::f64::consts::FRAC_PI_2).abs() < 1e-3);
        assert_eq!(initial_bearing_rad(origin, origin), 0.0);
    }

    #[test]
    fn coordinate_validation() {
        assert!(LatLon::new(91.0, 0.0).validate().is_err());
        assert!(LatLon::new(0.0, -180.5).validate().is_err());
        assert!(LatLon::new(34.05, -118.25).validate().is_ok());
    }
}
