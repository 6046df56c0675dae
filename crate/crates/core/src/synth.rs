//! Synthetic traffic-flow corpora.
//!
//! Every track follows a chord from `start` to `end` with a lateral
//! displacement (nm, positive to the left of travel)
//!
//! ```text
//! lat_off(s) = c + b * sin(pi * s)        arcs, crossing flows
//! lat_off(s) = c + b * sin(2 * pi * s)    S-curves
//! ```
//!
//! where `s` in `[0, 1]` is the fraction of the chord covered at constant
//! speed `v`. Per track, `c ~ U(-offset_nm, offset_nm)`, `b ~ U(bow_nm)` and
//! `v ~ U(speed_kn)`. Reports are spaced `U(gap_s)` seconds apart, with a
//! `long_gap_prob` chance of an extra `U(20, 40)` s dropout, and carry
//! isotropic Gaussian position noise of `noise_nm`. A fraction
//! `outlier_fraction` of tracks gets an extra 0.6 nm mid-route excursion.
//!
//! Track `k` draws from ChaCha stream `k`, so a corpus of `n` tracks is a
//! prefix of any larger corpus with the same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geo::{destination, haversine_nm, initial_bearing, Bounds, GeoPoint, RegionOfInterest};
use crate::preprocess::RouteSpec;
use crate::trajectory::{TimedState, Trajectory};

/// 2023-10-01T00:00:00Z, the nominal start of every corpus.
pub const EPOCH_BASE_S: f64 = 1_696_118_400.0;

/// Singapore-Strait-sized study box.
pub fn study_area() -> Bounds {
    Bounds { lat_min: 1.180, lat_max: 1.215, lon_min: 103.785, lon_max: 103.837 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Arcs,
    Scurves,
    Crossing,
}

impl std::str::FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "arcs" => Ok(Self::Arcs),
            "scurves" => Ok(Self::Scurves),
            "crossing" => Ok(Self::Crossing),
            _ => Err(format!("unknown synth kind '{s}' (expected arcs, scurves or crossing)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub start: GeoPoint,
    pub end: GeoPoint,
    pub s_curve: bool,
    pub offset_nm: f64,
    pub bow_nm: [f64; 2],
    pub speed_kn: [f64; 2],
    pub gap_s: [f64; 2],
    pub long_gap_prob: f64,
    pub noise_nm: f64,
    pub outlier_fraction: f64,
}

impl FlowSpec {
    fn base(start: GeoPoint, end: GeoPoint) -> Self {
        Self {
            start,
            end,
            s_curve: false,
            offset_nm: 0.06,
            bow_nm: [0.05, 0.12],
            speed_kn: [9.0, 11.0],
            gap_s: [6.0, 14.0],
            long_gap_prob: 0.03,
            noise_nm: 0.002,
            outlier_fraction: 0.0,
        }
    }

    /// Eastbound flow (`route` 1) or northbound flow (`route` 2) of the
    /// crossing pattern; arcs and S-curves reuse the eastbound chord.
    pub fn preset(kind: SynthKind, route: u8) -> Self {
        let east = Self::base(GeoPoint { lat: 1.195, lon: 103.788 }, GeoPoint { lat: 1.203, lon: 103.834 });
        match (kind, route) {
            (SynthKind::Crossing, 2) => Self {
                speed_kn: [7.0, 9.0],
                bow_nm: [0.03, 0.08],
                ..Self::base(GeoPoint { lat: 1.1815, lon: 103.808 }, GeoPoint { lat: 1.2135, lon: 103.815 })
            },
            (SynthKind::Crossing, _) => east,
            (SynthKind::Arcs, _) => Self { bow_nm: [0.2, 0.45], ..east },
            (SynthKind::Scurves, _) => Self { s_curve: true, bow_nm: [0.1, 0.25], ..east },
        }
    }

    /// Box around the chord start that every track begins in.
    pub fn start_box(&self) -> Bounds {
        around(self.start, self.offset_nm + 0.05)
    }

    pub fn end_box(&self) -> Bounds {
        around(self.end, self.offset_nm + 0.05)
    }

    /// Preprocessing spec matching this flow's route boxes, 10 s sampling.
    pub fn route_spec(&self, name: &str, window_steps: usize) -> RouteSpec {
        RouteSpec {
            name: name.into(),
            start_box: self.start_box(),
            end_box: self.end_box(),
            dt_s: 10.0,
            window_steps,
            outlier_k_mad: 3.0,
            bounds_padding: 0.05,
        }
    }
}

fn around(p: GeoPoint, nm: f64) -> Bounds {
    let dlat = nm / 60.0;
    let dlon = dlat / p.lat.to_radians().cos();
    Bounds { lat_min: p.lat - dlat, lat_max: p.lat + dlat, lon_min: p.lon - dlon, lon_max: p.lon + dlon }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn one_track(spec: &FlowSpec, id: String, rng: &mut ChaCha8Rng, t0: f64) -> Trajectory {
    let chord = haversine_nm(spec.start, spec.end);
    let course = initial_bearing(spec.start, spec.end).unwrap_or(0.0);
    let c = if spec.offset_nm > 0.0 { rng.random_range(-spec.offset_nm..spec.offset_nm) } else { 0.0 };
    let mut b = uniform(rng, spec.bow_nm);
    if rng.random::<f64>() < spec.outlier_fraction {
        b += 0.6;
    }
    let v = uniform(rng, spec.speed_kn);
    let noise = Normal::new(0.0, spec.noise_nm.max(0.0)).expect("noise scale is finite");
    let duration = chord / v * 3600.0;
    let mut states = Vec::new();
    let mut t = 0.0;
    loop {
        let s = (t / duration).min(1.0);
        let wave = if spec.s_curve { (2.0 * std::f64::consts::PI * s).sin() } else { (std::f64::consts::PI * s).sin() };
        let on_chord = destination(spec.start, course, s * chord);
        let lateral = c + b * wave;
        let p = destination(on_chord, course - 90.0, lateral);
        let p = destination(p, 0.0, noise.sample(rng));
        let p = destination(p, 90.0, noise.sample(rng));
        states.push(TimedState { t: t0 + t, pos: p });
        if s >= 1.0 {
            break;
        }
        t += uniform(rng, spec.gap_s);
        if rng.random::<f64>() < spec.long_gap_prob {
            t += rng.random_range(20.0..40.0);
        }
        if t > duration {
            t = duration;
        }
    }
    Trajectory::new(id, states).expect("generated timestamps increase")
}

/// `count` raw tracks of one flow named `{prefix}{k:05}`.
pub fn synth_flow(spec: &FlowSpec, prefix: &str, count: usize, seed: u64) -> Vec<Trajectory> {
    (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            one_track(spec, format!("{prefix}{k:05}"), &mut rng, EPOCH_BASE_S + 60.0 * k as f64)
        })
        .collect()
}

/// Region of interest around the crossing of the two crossing flows.
pub fn crossing_roi() -> RegionOfInterest {
    RegionOfInterest::new(vec![
        GeoPoint { lat: 1.188, lon: 103.798 },
        GeoPoint { lat: 1.188, lon: 103.824 },
        GeoPoint { lat: 1.210, lon: 103.824 },
        GeoPoint { lat: 1.210, lon: 103.798 },
    ])
    .expect("static polygon is valid")
}
