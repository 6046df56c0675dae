use serde::{Deserialize, Serialize};

use super::KinematicState;
use crate::geo::{GeoPoint, EARTH_RADIUS_NM};

/// Relative speeds below this (knots) count as zero relative motion.
const MIN_REL_SPEED_KN: f64 = 1e-9;

/// CPA indicators for one vessel pair at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpaResult {
    /// Current separation in the tangent plane.
    pub range_nm: f64,
    pub dcpa_nm: f64,
    /// Seconds until closest approach; negative when diverging, `+inf` when
    /// there is no relative motion.
    pub tcpa_s: f64,
}

/// Equirectangular projection about `origin`, in nautical miles (east, north).
pub fn to_tangent_plane(p: GeoPoint, origin: GeoPoint) -> [f64; 2] {
    let k = EARTH_RADIUS_NM * std::f64::consts::PI / 180.0;
    [(p.lon - origin.lon) * origin.lat.to_radians().cos() * k, (p.lat - origin.lat) * k]
}

fn velocity(s: &KinematicState) -> [f64; 2] {
    let c = s.cog.to_radians();
    [s.sog * c.sin(), s.sog * c.cos()]
}

/// Constant-velocity closest point of approach of `b` relative to `a`,
/// evaluated in the tangent plane at the pair midpoint.
pub fn relative_cpa(a: &KinematicState, b: &KinematicState) -> CpaResult {
    let mid = GeoPoint { lat: 0.5 * (a.pos.lat + b.pos.lat), lon: 0.5 * (a.pos.lon + b.pos.lon) };
    let pa = to_tangent_plane(a.pos, mid);
    let pb = to_tangent_plane(b.pos, mid);
    let r = [pb[0] - pa[0], pb[1] - pa[1]];
    let (va, vb) = (velocity(a), velocity(b));
    let v = [vb[0] - va[0], vb[1] - va[1]];
    let range = r[0].hypot(r[1]);
    let v2 = v[0] * v[0] + v[1] * v[1];
    if v2.sqrt() < MIN_REL_SPEED_KN {
        return CpaResult { range_nm: range, dcpa_nm: range, tcpa_s: f64::INFINITY };
    }
    let tcpa_h = -(r[0] * v[0] + r[1] * v[1]) / v2;
    let dcpa = (r[0] + v[0] * tcpa_h).hypot(r[1] + v[1] * tcpa_h);
    CpaResult { range_nm: range, dcpa_nm: dcpa.min(range), tcpa_s: tcpa_h * 3600.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{destination, haversine_nm};

    fn state(pos: GeoPoint, sog: f64, cog: f64) -> KinematicState {
        KinematicState { t: 0.0, pos, sog, cog }
    }

    #[test]
    fn head_on_closed_form() {
        let d = 1.5;
        let a = GeoPoint { lat: 0.0, lon: 103.0 };
        let b = GeoPoint { lat: 0.0, lon: 103.0 + d / EARTH_RADIUS_NM * 180.0 / std::f64::consts::PI };
        let (v1, v2) = (10.0, 8.0);
        let c = relative_cpa(&state(a, v1, 90.0), &state(b, v2, 270.0));
        assert!(c.dcpa_nm.abs() < 1e-9, "{c:?}");
        assert!((c.tcpa_s - 3600.0 * d / (v1 + v2)).abs() < 1e-9, "{c:?}");
        assert!((c.range_nm - d).abs() < 1e-9);
    }

    #[test]
    fn no_relative_motion() {
        let a = GeoPoint { lat: 1.2, lon: 103.8 };
        let b = destination(a, 30.0, 0.4);
        let c = relative_cpa(&state(a, 9.0, 10.0), &state(b, 9.0, 10.0));
        assert_eq!(c.tcpa_s, f64::INFINITY);
        assert_eq!(c.dcpa_nm, c.range_nm);
    }

    #[test]
    fn diverging_has_negative_tcpa() {
        let a = GeoPoint { lat: 1.2, lon: 103.8 };
        let b = destination(a, 0.0, 0.5);
        let c = relative_cpa(&state(a, 5.0, 180.0), &state(b, 5.0, 0.0));
        assert!(c.tcpa_s < 0.0);
        assert!(c.dcpa_nm <= c.range_nm);
    }

    /// Brute force: advance both vessels along great circles in 0.1 s steps
    /// and take the smallest haversine separation.
    fn sweep(a: &KinematicState, b: &KinematicState, horizon_s: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0);
        let steps = (horizon_s / 0.1) as usize;
        for n in 0..=steps {
            let t = n as f64 * 0.1;
            let pa = destination(a.pos, a.cog, a.sog * t / 3600.0);
            let pb = destination(b.pos, b.cog, b.sog * t / 3600.0);
            let d = haversine_nm(pa, pb);
            if d < best.0 {
                best = (d, t);
            }
        }
        best
    }

    #[test]
    fn crossing_matches_time_sweep() {
        // a northbound 10 kn at the origin; b westbound 12 kn starting 1 nm
        // east and 0.5 nm north of a
        let origin = GeoPoint { lat: 1.19, lon: 103.80 };
        let b_pos = destination(destination(origin, 90.0, 1.0), 0.0, 0.5);
        let a = state(origin, 10.0, 0.0);
        let b = state(b_pos, 12.0, 270.0);
        let c = relative_cpa(&a, &b);
        let (d_min, t_min) = sweep(&a, &b, 900.0);
        assert!((c.dcpa_nm - d_min).abs() < 1e-4, "{c:?} vs {d_min}");
        assert!((c.tcpa_s - t_min).abs() < 0.5, "{c:?} vs {t_min}");
        assert!(c.tcpa_s > 200.0 && c.dcpa_nm > 0.1);
    }

    #[test]
    fn dcpa_never_exceeds_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let a = GeoPoint { lat: rng.random_range(1.18..1.22), lon: rng.random_range(103.78..103.84) };
            let b = GeoPoint { lat: rng.random_range(1.18..1.22), lon: rng.random_range(103.78..103.84) };
            let c = relative_cpa(
                &state(a, rng.random_range(0.0..20.0), rng.random_range(0.0..360.0)),
                &state(b, rng.random_range(0.0..20.0), rng.random_range(0.0..360.0)),
            );
            assert!(c.dcpa_nm >= 0.0 && c.dcpa_nm <= c.range_nm + 1e-9);
        }
    }
}
