//! Exhaustive pairing oracle and scenario checks written without the
//! library's search code. Shared by several test targets.

#![allow(dead_code)]

use forge_core::encounter::{
    pair_search, relative_cpa, safety_filter, EncounterCandidate, KinematicState, PreparedPool,
    Scenario, ScenarioConfig,
};
use forge_core::geo::{haversine_nm, initial_bearing, GeoPoint, RegionOfInterest};
use forge_core::preprocess::{preprocess_route, resample_uniform};
use forge_core::synth::{synth_flow, FlowSpec, SynthKind};
use forge_core::{TimedState, Trajectory};

pub fn windowed_pool(route: u8, n: usize, seed: u64) -> Vec<Trajectory> {
    let spec = FlowSpec::preset(SynthKind::Crossing, route);
    let raw = synth_flow(&spec, &format!("r{route}_"), n + 4, seed);
    let (ds, _) = preprocess_route(&raw, &spec.route_spec("r", 64)).unwrap();
    ds.trajectories.into_iter().take(n).collect()
}

/// Resampled but not windowed, so lengths differ.
pub fn ragged_pool(route: u8, n: usize, seed: u64) -> Vec<Trajectory> {
    let spec = FlowSpec::preset(SynthKind::Crossing, route);
    synth_flow(&spec, &format!("g{route}_"), n, seed).iter().map(|t| resample_uniform(t, 10.0).unwrap()).collect()
}

pub fn stationary(id: &str, p: GeoPoint, n: usize) -> Trajectory {
    Trajectory::uniform(id, (0..n).map(|k| TimedState { t: 10.0 * k as f64, pos: p }).collect(), 10.0).unwrap()
}

pub fn kin(t: &Trajectory) -> Vec<KinematicState> {
    let dt = t.states[1].t - t.states[0].t;
    let mut cog = 0.0;
    let mut out: Vec<KinematicState> = Vec::new();
    for k in 1..t.len() {
        let (a, b) = (t.states[k - 1].pos, t.states[k].pos);
        let d = haversine_nm(a, b);
        if d > 1e-9 {
            cog = initial_bearing(a, b).unwrap();
        }
        out.push(KinematicState { t: t.states[k].t, pos: b, sog: d * 3600.0 / dt, cog });
    }
    let first = KinematicState { t: t.states[0].t, pos: t.states[0].pos, ..out[0] };
    std::iter::once(first).chain(out).collect()
}

/// Every offset, every instant; best by (distance, |offset|, offset, k).
pub fn exhaustive(p1: &[Trajectory], p2: &[Trajectory], roi: &RegionOfInterest, cfg: &ScenarioConfig) -> Vec<(EncounterCandidate, bool)> {
    let stride = cfg.offset_stride_steps as i64;
    let mut out = Vec::new();
    for (i, a) in p1.iter().enumerate() {
        for (j, b) in p2.iter().enumerate() {
            let mut all = Vec::new();
            for o in -(b.len() as i64 - 1)..=(a.len() as i64 - 1) {
                if o.rem_euclid(stride) != 0 {
                    continue;
                }
                for k in 0..a.len() as i64 {
                    let l = k - o;
                    if l < 0 || l >= b.len() as i64 {
                        continue;
                    }
                    let (pa, pb) = (a.states[k as usize].pos, b.states[l as usize].pos);
                    if roi.contains(pa) && roi.contains(pb) {
                        all.push((haversine_nm(pa, pb), o.abs(), o, k));
                    }
                }
            }
            let Some(&(d, _, o, k)) = all.iter().min_by(|x, y| x.partial_cmp(y).unwrap()) else { continue };
            if d > cfg.d_min_nm {
                continue;
            }
            let (ka, kb) = (kin(a), kin(b));
            let safe = (0..a.len() as i64).filter(|k| (0..b.len() as i64).contains(&(k - o))).any(|k| {
                let c = relative_cpa(&ka[k as usize], &kb[(k - o) as usize]);
                c.range_nm <= cfg.d_th_nm && c.tcpa_s > 0.0 && c.tcpa_s <= cfg.t_th_s && c.dcpa_nm <= cfg.d_cpa_nm
            });
            let c = EncounterCandidate { i, j, offset_steps: o, k_star: k as usize, l_star: (k - o) as usize, d_min_observed_nm: d };
            out.push((c, safe));
        }
    }
    out
}

pub fn check_against_oracle(p1: &[Trajectory], p2: &[Trajectory], roi: &RegionOfInterest, cfg: &ScenarioConfig) -> usize {
    let found = pair_search(p1, p2, roi, cfg).unwrap();
    let q1 = PreparedPool::new(p1, roi).unwrap();
    let q2 = PreparedPool::new(p2, roi).unwrap();
    let with_filter: Vec<_> = found.iter().map(|c| (*c, safety_filter(c, &q1, &q2, cfg))).collect();
    let expected = exhaustive(p1, p2, roi, cfg);
    assert_eq!(with_filter, expected);
    expected.len()
}

/// Segment ordering and partition, window lengths, the proximity gate and
/// at least one aligned instant meeting every motion clause.
pub fn check_scenario(s: &Scenario, p1: &[Trajectory], p2: &[Trajectory], cfg: &ScenarioConfig) {
    let v1 = &s.vessels[0].segments;
    let v2 = &s.vessels[1].segments;
    let (t1, t2) = (&p1[s.pair.i], &p2[s.pair.j]);
    for (v, t) in [(v1, t1), (v2, t2)] {
        assert_eq!(v.len(), t.len());
        for seg in [&v.pre, &v.encounter, &v.post] {
            assert!(seg.windows(2).all(|w| w[0][0] < w[1][0]));
        }
        let all = v.concat();
        assert!(all.windows(2).all(|w| w[0][0] < w[1][0]));
        // same positions in the same order as the source track
        assert!(all.iter().zip(&t.states).all(|(r, st)| r[1] == st.pos.lat && r[2] == st.pos.lon));
        assert!(v.pre.iter().all(|r| r[0] < s.t_star_s - cfg.t_early_s));
        assert!(v.encounter.iter().all(|r| (s.t_star_s - cfg.t_early_s..=s.t_star_s + cfg.t_after_s).contains(&r[0])));
        assert!(v.post.iter().all(|r| r[0] > s.t_star_s + cfg.t_after_s));
        let full = ((cfg.t_early_s + cfg.t_after_s) / s.dt_s).round() as usize + 1;
        if !v.pre.is_empty() && !v.post.is_empty() {
            assert_eq!(v.encounter.len(), full);
        }
    }
    // minimum range over the encounter window at aligned instants
    let d_enc = v1
        .encounter
        .iter()
        .filter_map(|a| v2.encounter.iter().find(|b| b[0] == a[0]).map(|b| (a, b)))
        .map(|(a, b)| haversine_nm(GeoPoint { lat: a[1], lon: a[2] }, GeoPoint { lat: b[1], lon: b[2] }))
        .fold(f64::INFINITY, f64::min);
    assert!(d_enc <= cfg.d_min_nm, "{d_enc}");
    assert!((s.recompute_d_min().unwrap() - s.d_min_observed_nm).abs() < 1e-9);

    let (ka, kb) = (kin(t1), kin(t2));
    let o = s.pair.offset_steps;
    let witness = (0..t1.len() as i64).filter(|k| (0..t2.len() as i64).contains(&(k - o))).any(|k| {
        let c = relative_cpa(&ka[k as usize], &kb[(k - o) as usize]);
        c.range_nm <= cfg.d_th_nm && c.tcpa_s > 0.0 && c.tcpa_s <= cfg.t_th_s && c.dcpa_nm <= cfg.d_cpa_nm
    });
    assert!(witness, "no instant meets the motion clauses for pair ({}, {})", s.pair.i, s.pair.j);
}
