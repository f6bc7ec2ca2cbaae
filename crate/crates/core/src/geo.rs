//! Distance, central location and containment on the WGS84 sphere.

use std::cmp::Ordering;

use thiserror::Error;

use crate::model::{CampusBoundary, GeoPoint};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters along a meridian per degree of latitude.
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("median of an empty point set")]
    EmptyPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DistanceMeters(f64);

impl DistanceMeters {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Great-circle distance.
pub fn haversine(a: GeoPoint, b: GeoPoint) -> DistanceMeters {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    DistanceMeters(2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin())
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Latitude and longitude medians taken independently.
pub fn componentwise_median(points: &[GeoPoint]) -> Result<GeoPoint, GeoError> {
    if points.is_empty() {
        return Err(GeoError::EmptyPoints);
    }
    let mut lats: Vec<f64> = points.iter().map(|p| p.lat).collect();
    let mut lons: Vec<f64> = points.iter().map(|p| p.lon).collect();
    Ok(GeoPoint {
        lat: median_of(&mut lats),
        lon: median_of(&mut lons),
    })
}

/// Ray casting in the lat/lon plane. Points on an edge or vertex are inside.
pub fn contains(boundary: &CampusBoundary, p: GeoPoint) -> bool {
    let ring = boundary.ring();
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if on_edge(a, b, p) {
            return true;
        }
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let crossing = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < crossing {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_edge(a: GeoPoint, b: GeoPoint, p: GeoPoint) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    let scale = (b.lon - a.lon).abs().max((b.lat - a.lat).abs()).max(1e-12);
    cross.abs() <= 1e-12 * scale
        && p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

/// Moves `origin` by `north_m`/`east_m` meters using a local flat-earth
/// approximation.
pub fn offset_meters(origin: GeoPoint, north_m: f64, east_m: f64) -> GeoPoint {
    let lat = origin.lat + north_m / METERS_PER_DEGREE;
    let lon = origin.lon + east_m / (METERS_PER_DEGREE * origin.lat.to_radians().cos());
    GeoPoint { lat, lon }
}
