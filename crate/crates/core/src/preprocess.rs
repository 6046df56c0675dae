//! Cleaning stages that turn raw position reports into a training dataset:
//! route filtering, uniform resampling, pairwise outlier removal and window
//! standardization, in that order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_nm, Bounds, GeoPoint};
use crate::trajectory::{RouteDataset, TimedState, Trajectory, TrajectoryError};

/// Keep trajectories that start inside `start_box` and end inside `end_box`.
pub fn filter_route(raw: &[Trajectory], start_box: &Bounds, end_box: &Bounds) -> Vec<Trajectory> {
    raw.iter()
        .filter(|t| !t.is_empty() && start_box.contains(t.first().pos) && end_box.contains(t.last().pos))
        .cloned()
        .collect()
}

/// Linear interpolation onto `t0, t0 + dt, ...` within the original span.
/// Samples that land exactly on an input timestamp are copied bitwise.
pub fn resample_uniform(traj: &Trajectory, dt: f64) -> Result<Trajectory, TrajectoryError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(TrajectoryError::InvalidInterval(dt));
    }
    let span = traj.span();
    if span < dt {
        return Err(TrajectoryError::SpanTooShort { id: traj.id.clone(), span, dt });
    }
    let t0 = traj.first().t;
    let t_end = traj.last().t;
    let n = (span / dt).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let t = t0 + k as f64 * dt;
        if t > t_end {
            break;
        }
        while seg + 1 < traj.states.len() - 1 && traj.states[seg + 1].t <= t {
            seg += 1;
        }
        let a = traj.states[seg];
        let b = traj.states[seg + 1];
        let pos = if t == a.t {
            a.pos
        } else if t == b.t {
            b.pos
        } else {
            let w = (t - a.t) / (b.t - a.t);
            GeoPoint { lat: a.pos.lat + w * (b.pos.lat - a.pos.lat), lon: a.pos.lon + w * (b.pos.lon - a.pos.lon) }
        };
        out.push(TimedState { t, pos });
    }
    Trajectory::uniform(traj.id.clone(), out, dt)
}

/// Mean point-wise great-circle distance over the common index prefix.
fn mean_pointwise_nm(a: &Trajectory, b: &Trajectory) -> f64 {
    let n = a.len().min(b.len());
    let sum: f64 = a.states[..n].iter().zip(&b.states[..n]).map(|(x, y)| haversine_nm(x.pos, y.pos)).sum();
    sum / n as f64
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Per-trajectory average distance to every other trajectory.
///
/// Each trajectory's distances are summed in ascending order so the score
/// does not depend on the input order.
pub fn mean_pairwise_scores(trajs: &[Trajectory]) -> Vec<f64> {
    let n = trajs.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = mean_pointwise_nm(&trajs[i], &trajs[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    (0..n)
        .map(|i| {
            let row = sorted((0..n).filter(|&j| j != i).map(|j| dist[i * n + j]).collect());
            row.iter().sum::<f64>() / (n - 1).max(1) as f64
        })
        .collect()
}

/// Indices of trajectories kept by the `median + k_mad * MAD` rule.
pub fn outlier_keep_mask(trajs: &[Trajectory], k_mad: f64) -> Vec<bool> {
    if trajs.len() < 3 {
        return vec![true; trajs.len()];
    }
    let scores = mean_pairwise_scores(trajs);
    let med = median(&sorted(scores.clone()));
    let mad = median(&sorted(scores.iter().map(|s| (s - med).abs()).collect()));
    let threshold = med + k_mad * mad;
    // k_mad = inf with mad = 0 gives NaN; treat that as "keep everything"
    scores.iter().map(|&s| threshold.is_nan() || s <= threshold).collect()
}

/// Drop trajectories whose mean distance to the rest of the set exceeds
/// `median + k_mad * MAD`. Fewer than three trajectories pass through.
pub fn outlier_filter(trajs: &[Trajectory], k_mad: f64) -> Vec<Trajectory> {
    let keep = outlier_keep_mask(trajs, k_mad);
    trajs.iter().zip(keep).filter(|(_, k)| *k).map(|(t, _)| t.clone()).collect()
}

/// Dataset form of [`outlier_filter`]; bounds and dt are carried over.
pub fn outlier_filter_pairwise(ds: &RouteDataset, k_mad: f64) -> RouteDataset {
    RouteDataset { trajectories: outlier_filter(&ds.trajectories, k_mad), ..ds.clone() }
}

/// Keep tracks with at least `window` samples, truncated to their first `window`.
pub fn standardize_window(trajs: &[Trajectory], window: usize) -> Vec<Trajectory> {
    assert!(window >= 2, "window must be at least 2 steps");
    trajs
        .iter()
        .filter(|t| t.len() >= window)
        .map(|t| Trajectory { id: t.id.clone(), states: t.states[..window].to_vec(), dt: t.dt })
        .collect()
}

/// Parameters of one directional traffic flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub name: String,
    pub start_box: Bounds,
    pub end_box: Bounds,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub window_steps: usize,
    #[serde(default = "default_k_mad")]
    pub outlier_k_mad: f64,
    /// Fraction of each axis span added around the data extent for the
    /// normalization bounds.
    #[serde(default = "default_pad")]
    pub bounds_padding: f64,
}

fn default_dt() -> f64 {
    10.0
}
fn default_k_mad() -> f64 {
    3.0
}
fn default_pad() -> f64 {
    0.05
}

/// Trajectory counts after each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub input: usize,
    pub route_filter: usize,
    pub resample: usize,
    pub outlier_filter: usize,
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    RouteFilter,
    Resample,
    OutlierFilter,
    Window,
}

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("no trajectories survive the {stage:?} stage (counts so far: {counts:?})")]
    NoTrajectoriesSurvive { stage: Stage, counts: StageCounts },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// The full cleaning chain for one route.
pub fn preprocess_route(raw: &[Trajectory], spec: &RouteSpec) -> Result<(RouteDataset, StageCounts), PreprocessError> {
    spec.start_box.validate().map_err(TrajectoryError::from)?;
    spec.end_box.validate().map_err(TrajectoryError::from)?;
    let mut counts = StageCounts { input: raw.len(), route_filter: 0, resample: 0, outlier_filter: 0, window: 0 };
    let empty = |stage, counts| PreprocessError::NoTrajectoriesSurvive { stage, counts };

    let routed = filter_route(raw, &spec.start_box, &spec.end_box);
    counts.route_filter = routed.len();
    if routed.is_empty() {
        return Err(empty(Stage::RouteFilter, counts));
    }

    // tracks shorter than one interval cannot be resampled and are dropped
    let resampled: Vec<Trajectory> = routed.iter().filter_map(|t| resample_uniform(t, spec.dt_s).ok()).collect();
    counts.resample = resampled.len();
    if resampled.is_empty() {
        return Err(empty(Stage::Resample, counts));
    }

    let clean = outlier_filter(&resampled, spec.outlier_k_mad);
    counts.outlier_filter = clean.len();
    if clean.is_empty() {
        return Err(empty(Stage::OutlierFilter, counts));
    }

    let windowed = standardize_window(&clean, spec.window_steps);
    counts.window = windowed.len();
    if windowed.is_empty() {
        return Err(empty(Stage::Window, counts));
    }
    let ds = RouteDataset::with_enclosing_bounds(spec.name.clone(), spec.dt_s, windowed, spec.bounds_padding)?;
    Ok((ds, counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(id: &str, pts: &[(f64, f64, f64)]) -> Trajectory {
        Trajectory::new(id, pts.iter().map(|&(t, la, lo)| TimedState::new(t, la, lo)).collect()).unwrap()
    }

    fn straight(id: &str, n: usize, lat0: f64, lon: f64) -> Trajectory {
        let s = (0..n).map(|k| TimedState::new(k as f64 * 10.0, lat0 + k as f64 * 1e-4, lon)).collect();
        Trajectory::uniform(id, s, 10.0).unwrap()
    }

    #[test]
    fn route_filter_boxes() {
        let start = Bounds::new(1.175, 1.185, 103.78, 103.84).unwrap();
        let end = Bounds::new(1.205, 1.215, 103.78, 103.84).unwrap();
        let north = track("n", &[(0.0, 1.180, 103.8), (600.0, 1.212, 103.81)]);
        let outside = track("o", &[(0.0, 1.19, 103.8), (600.0, 1.212, 103.81)]);
        let kept = filter_route(&[north, outside], &start, &end);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "n");
        assert!(filter_route(&[], &start, &end).is_empty());
    }

    #[test]
    fn resample_midpoint() {
        let t = track("a", &[(0.0, 0.0, 0.0), (20.0, 0.0, 0.002)]);
        let r = resample_uniform(&t, 10.0).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.states[1].t, 10.0);
        assert!((r.states[1].pos.lon - 0.001).abs() < 1e-15);
        assert_eq!(r.dt, Some(10.0));
    }

    #[test]
    fn resample_idempotent_bitwise() {
        let t = straight("u", 20, 1.18, 103.8);
        let r = resample_uniform(&t, 10.0).unwrap();
        assert_eq!(r.states, t.states);
        let rr = resample_uniform(&r, 10.0).unwrap();
        assert_eq!(rr.states, r.states);
    }

    /// Piecewise-linear evaluation by direct search over all segments.
    fn brute_interp(pts: &[(f64, f64, f64)], t: f64) -> (f64, f64) {
        for w in pts.windows(2) {
            let (t0, a0, b0) = w[0];
            let (t1, a1, b1) = w[1];
            if t >= t0 && t <= t1 {
                let u = (t - t0) / (t1 - t0);
                return (a0 + u * (a1 - a0), b0 + u * (b1 - b0));
            }
        }
        panic!("t outside span");
    }

    #[test]
    fn resample_irregular_gaps() {
        let pts = [(0.0, 1.18, 103.80), (7.0, 1.181, 103.802), (31.0, 1.1835, 103.801)];
        let r = resample_uniform(&track("g", &pts), 10.0).unwrap();
        let ts: Vec<f64> = r.states.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.0, 10.0, 20.0, 30.0]);
        for s in &r.states {
            let (la, lo) = brute_interp(&pts, s.t);
            assert!((s.pos.lat - la).abs() < 1e-12 && (s.pos.lon - lo).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_span_too_short() {
        let t = track("s", &[(0.0, 0.0, 0.0), (5.0, 0.0, 0.001)]);
        assert!(matches!(resample_uniform(&t, 10.0), Err(TrajectoryError::SpanTooShort { .. })));
    }

    #[test]
    fn outlier_removes_offset_track() {
        let mut v: Vec<_> = (0..10).map(|i| straight(&format!("t{i}"), 30, 1.18, 103.8)).collect();
        v.push(straight("off", 30, 2.18, 103.8));
        let kept = outlier_filter(&v, 3.0);
        assert_eq!(kept.len(), 10);
        assert!(kept.iter().all(|t| t.id != "off"));
        assert_eq!(outlier_filter(&v, f64::INFINITY).len(), 11);
    }

    #[test]
    fn outlier_keeps_identical_tracks() {
        let v: Vec<_> = (0..5).map(|i| straight(&format!("t{i}"), 30, 1.18, 103.8)).collect();
        assert_eq!(outlier_filter(&v, 3.0).len(), 5);
        assert_eq!(outlier_filter(&v, f64::INFINITY).len(), 5);
    }

    #[test]
    fn outlier_permutation_invariant() {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let v: Vec<_> = (0..15)
            .map(|i| {
                let lat0 = 1.18 + rng.random_range(0.0..0.002) + if i % 7 == 0 { 0.01 } else { 0.0 };
                straight(&format!("t{i}"), 25, lat0, 103.8 + rng.random_range(0.0..0.002))
            })
            .collect();
        let ids = |ts: Vec<Trajectory>| {
            let mut ids: Vec<String> = ts.into_iter().map(|t| t.id).collect();
            ids.sort();
            ids
        };
        let base = ids(outlier_filter(&v, 3.0));
        assert!(base.len() < v.len());
        for _ in 0..5 {
            let mut p = v.clone();
            p.shuffle(&mut rng);
            assert_eq!(ids(outlier_filter(&p, 3.0)), base);
        }
    }

    #[test]
    fn window_truncates_and_drops() {
        let long = straight("l", 120, 1.18, 103.8);
        let short = straight("s", 60, 1.18, 103.8);
        let out = standardize_window(&[long.clone(), short.clone()], 91);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].states[..], long.states[..91]);
        assert!(standardize_window(&[short.clone()], 61).is_empty());
        assert_eq!(standardize_window(&[short], 2)[0].len(), 2);
    }

    #[test]
    fn preprocess_empty_input_fails_at_route_filter() {
        let spec = RouteSpec {
            name: "r".into(),
            start_box: Bounds::new(1.175, 1.185, 103.78, 103.84).unwrap(),
            end_box: Bounds::new(1.205, 1.215, 103.78, 103.84).unwrap(),
            dt_s: 10.0,
            window_steps: 10,
            outlier_k_mad: 3.0,
            bounds_padding: 0.05,
        };
        assert!(matches!(
            preprocess_route(&[], &spec),
            Err(PreprocessError::NoTrajectoriesSurvive { stage: Stage::RouteFilter, .. })
        ));
    }
}
