//! Spherical geodesy and planar polygon membership.
//!
//! Distances use a spherical Earth of mean radius 6371.0088 km. At the few
//! kilometre scale of a harbour approach the ellipsoidal correction is far
//! below AIS position noise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in kilometres (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;
/// Metres per nautical mile.
pub const METRES_PER_NM: f64 = 1852.0;
/// Mean Earth radius in nautical miles.
pub const EARTH_RADIUS_NM: f64 = EARTH_RADIUS_KM * 1000.0 / METRES_PER_NM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate lat={lat}, lon={lon}")]
    InvalidPoint { lat: f64, lon: f64 },
    #[error("bearing between coincident points is undefined")]
    CoincidentPoints,
    #[error("polygon needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon vertices are collinear")]
    DegeneratePolygon,
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("bounds are degenerate or inverted: {0:?}")]
    DegenerateBounds(Bounds),
}

/// A latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        let ok = lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..=180.0).contains(&lon);
        if ok {
            Ok(Self { lat, lon })
        } else {
            Err(GeoError::InvalidPoint { lat, lon })
        }
    }

    pub fn is_valid(&self) -> bool {
        Self::new(self.lat, self.lon).is_ok()
    }
}

/// Great-circle distance in nautical miles (haversine form).
pub fn haversine_nm(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let s_lat = (dlat * 0.5).sin();
    let s_lon = (dlon * 0.5).sin();
    let h = s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon;
    2.0 * EARTH_RADIUS_NM * h.sqrt().min(1.0).asin()
}

/// Forward azimuth at `a` towards `b`, degrees clockwise from north in `[0, 360)`.
pub fn initial_bearing(a: GeoPoint, b: GeoPoint) -> Result<f64, GeoError> {
    if a == b {
        return Err(GeoError::CoincidentPoints);
    }
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlon = (b.lon - a.lon).to_radians();
    let y = dlon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * dlon.cos();
    let deg = y.atan2(x).to_degrees().rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative angles
    Ok(if deg >= 360.0 { 0.0 } else { deg })
}

/// Point reached after travelling `distance_nm` along the great circle with
/// initial bearing `bearing_deg`.
pub fn destination(start: GeoPoint, bearing_deg: f64, distance_nm: f64) -> GeoPoint {
    let delta = distance_nm / EARTH_RADIUS_NM;
    let theta = bearing_deg.to_radians();
    let lat1 = start.lat.to_radians();
    let lon1 = start.lon.to_radians();
    let lat2 = (lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * theta.cos()).asin();
    let lon2 = lon1
        + (theta.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * lat2.sin());
    GeoPoint {
        lat: lat2.to_degrees(),
        lon: (lon2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0,
    }
}

/// Axis-aligned latitude/longitude box, inclusive on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Bounds {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, GeoError> {
        let b = Self { lat_min, lat_max, lon_min, lon_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if finite && self.lat_max > self.lat_min && self.lon_max > self.lon_min {
            Ok(())
        } else {
            Err(GeoError::DegenerateBounds(*self))
        }
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.lat_min && p.lat <= self.lat_max && p.lon >= self.lon_min && p.lon <= self.lon_max
    }

    /// Smallest box holding every point, or `None` for an empty iterator.
    pub fn enclosing(points: impl IntoIterator<Item = GeoPoint>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Self { lat_min: first.lat, lat_max: first.lat, lon_min: first.lon, lon_max: first.lon };
        for p in it {
            b.lat_min = b.lat_min.min(p.lat);
            b.lat_max = b.lat_max.max(p.lat);
            b.lon_min = b.lon_min.min(p.lon);
            b.lon_max = b.lon_max.max(p.lon);
        }
        Some(b)
    }

    /// Grow each axis by `fraction` of its span on both sides.
    pub fn padded(&self, fraction: f64) -> Self {
        let dlat = (self.lat_max - self.lat_min) * fraction;
        let dlon = (self.lon_max - self.lon_min) * fraction;
        Self {
            lat_min: self.lat_min - dlat,
            lat_max: self.lat_max + dlat,
            lon_min: self.lon_min - dlon,
            lon_max: self.lon_max + dlon,
        }
    }

    /// Affine map to the unit square; no range check.
    pub fn to_unit(&self, p: GeoPoint) -> [f64; 2] {
        [
            (p.lat - self.lat_min) / (self.lat_max - self.lat_min),
            (p.lon - self.lon_min) / (self.lon_max - self.lon_min),
        ]
    }

    pub fn from_unit(&self, u: [f64; 2]) -> GeoPoint {
        GeoPoint {
            lat: self.lat_min + u[0] * (self.lat_max - self.lat_min),
            lon: self.lon_min + u[1] * (self.lon_max - self.lon_min),
        }
    }
}

/// Simple polygon in the (lon, lat) plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionOfInterest {
    vertices: Vec<GeoPoint>,
}

/// Tolerance, in degrees, for the on-boundary test.
const EDGE_EPS: f64 = 1e-12;

fn cross(o: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

fn on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool {
    let len = ((b.lon - a.lon).powi(2) + (b.lat - a.lat).powi(2)).sqrt();
    if cross(a, b, p).abs() > EDGE_EPS * len.max(1.0) {
        return false;
    }
    p.lon >= a.lon.min(b.lon) - EDGE_EPS
        && p.lon <= a.lon.max(b.lon) + EDGE_EPS
        && p.lat >= a.lat.min(b.lat) - EDGE_EPS
        && p.lat <= a.lat.max(b.lat) + EDGE_EPS
}

fn segments_intersect(a: GeoPoint, b: GeoPoint, c: GeoPoint, d: GeoPoint) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

impl RegionOfInterest {
    /// Validates simplicity and non-degeneracy. A closing vertex equal to the
    /// first one is dropped.
    pub fn new(mut vertices: Vec<GeoPoint>) -> Result<Self, GeoError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if let Some(bad) = vertices.iter().find(|v| !v.is_valid()) {
            return Err(GeoError::InvalidPoint { lat: bad.lat, lon: bad.lon });
        }
        let m = vertices.len();
        if m < 3 {
            return Err(GeoError::TooFewVertices(m));
        }
        let v0 = vertices[0];
        if vertices.windows(2).all(|w| cross(v0, w[0], w[1]).abs() <= EDGE_EPS) {
            return Err(GeoError::DegeneratePolygon);
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let adjacent = j == i + 1 || (i == 0 && j == m - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % m]);
                let (c, d) = (vertices[j], vertices[(j + 1) % m]);
                if segments_intersect(a, b, c, d) {
                    return Err(GeoError::SelfIntersecting(i, j));
                }
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (GeoPoint, GeoPoint)> + '_ {
        let m = self.vertices.len();
        (0..m).map(move |i| (self.vertices[i], self.vertices[(i + 1) % m]))
    }

    /// Even-odd ray casting with half-open edges; boundary points are inside.
    pub fn contains(&self, p: GeoPoint) -> bool {
        if self.edges().any(|(a, b)| on_segment(p, a, b)) {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.lat > p.lat) != (b.lat > p.lat) {
                let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
                if p.lon < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

impl<'de> Deserialize<'de> for RegionOfInterest {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            vertices: Vec<GeoPoint>,
        }
        let raw = Raw::deserialize(de)?;
        RegionOfInterest::new(raw.vertices).map_err(serde::de::Error::custom)
    }
}

/// Free-function form of [`RegionOfInterest::contains`].
pub fn point_in_polygon(p: GeoPoint, roi: &RegionOfInterest) -> bool {
    roi.contains(p)
}
