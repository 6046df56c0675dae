use serde::{Deserialize, Serialize};

use super::kinematics::uniform_dt;
use super::{anchor_and_segment, reconstruct_kinematics, relative_cpa, EncounterError, KinematicState, Scenario};
use crate::geo::{haversine_nm, RegionOfInterest};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Proximity threshold on the minimum observed separation.
    pub d_min_nm: f64,
    /// Range at which the motion-consistency check applies.
    pub d_th_nm: f64,
    /// Upper bound on time to closest approach.
    pub t_th_s: f64,
    /// Upper bound on distance at closest approach.
    pub d_cpa_nm: f64,
    pub t_early_s: f64,
    pub t_after_s: f64,
    pub offset_stride_steps: usize,
    pub max_pairs: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            d_min_nm: 0.05,
            d_th_nm: 0.5,
            t_th_s: 600.0,
            d_cpa_nm: 0.1,
            t_early_s: 100.0,
            t_after_s: 100.0,
            offset_stride_steps: 1,
            max_pairs: 1000,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), EncounterError> {
        let positive = [self.d_min_nm, self.d_th_nm, self.t_th_s, self.d_cpa_nm, self.t_early_s, self.t_after_s];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(EncounterError::InvalidConfig("thresholds and margins must be positive".into()));
        }
        if self.offset_stride_steps == 0 || self.max_pairs == 0 {
            return Err(EncounterError::InvalidConfig("offset_stride_steps and max_pairs must be positive".into()));
        }
        Ok(())
    }
}

/// Pairing record for one trajectory pair at its best relative offset.
///
/// Trajectory 2 is shifted by `offset_steps`: sample `l` of trajectory 2 is
/// aligned with sample `k = l + offset_steps` of trajectory 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncounterCandidate {
    pub i: usize,
    pub j: usize,
    pub offset_steps: i64,
    pub k_star: usize,
    pub l_star: usize,
    pub d_min_observed_nm: f64,
}

/// Per-trajectory ROI masks and kinematics, computed once per pool.
#[derive(Debug, Clone)]
pub struct PreparedPool<'a> {
    pub trajectories: &'a [Trajectory],
    pub dt: f64,
    pub in_roi: Vec<Vec<bool>>,
    pub kinematics: Vec<Vec<KinematicState>>,
}

impl<'a> PreparedPool<'a> {
    pub fn new(trajectories: &'a [Trajectory], roi: &RegionOfInterest) -> Result<Self, EncounterError> {
        let mut dt = None;
        let mut in_roi = Vec::with_capacity(trajectories.len());
        let mut kinematics = Vec::with_capacity(trajectories.len());
        for t in trajectories {
            let this = uniform_dt(t)?;
            match dt {
                None => dt = Some(this),
                Some(d) if (d - this).abs() > 1e-6 * d => {
                    return Err(EncounterError::MixedIntervals { id: t.id.clone(), expected: d, found: this })
                }
                _ => {}
            }
            in_roi.push(t.positions().map(|p| roi.contains(p)).collect());
            kinematics.push(reconstruct_kinematics(t)?);
        }
        Ok(Self { trajectories, dt: dt.unwrap_or(0.0), in_roi, kinematics })
    }
}

/// Relative offsets `o` with `-(len2 - 1) <= o <= len1 - 1` that are
/// multiples of `stride` (zero included).
pub fn offset_grid(len1: usize, len2: usize, stride: usize) -> Vec<i64> {
    let lo = -(len2 as i64 - 1);
    let hi = len1 as i64 - 1;
    let s = stride.max(1) as i64;
    let first = lo.div_euclid(s) * s;
    (0..)
        .map(|n| first + n * s)
        .skip_while(|o| *o < lo)
        .take_while(|o| *o <= hi)
        .collect()
}

/// Aligned trajectory-1 index range `[start, end)` for an offset.
pub(crate) fn overlap(len1: usize, len2: usize, offset: i64) -> (usize, usize) {
    let start = offset.max(0) as usize;
    let end = (len1 as i64).min(len2 as i64 + offset).max(0) as usize;
    (start, end.max(start))
}

/// True when `a` is preferred over `b` as the best offset of one pair.
fn better_offset(a: (f64, i64), b: (f64, i64)) -> bool {
    if a.0 != b.0 {
        return a.0 < b.0;
    }
    (a.1.abs(), a.1) < (b.1.abs(), b.1)
}

fn search_pair(p1: &PreparedPool, p2: &PreparedPool, i: usize, j: usize, cfg: &ScenarioConfig) -> Option<EncounterCandidate> {
    let (t1, t2) = (&p1.trajectories[i], &p2.trajectories[j]);
    let (r1, r2) = (&p1.in_roi[i], &p2.in_roi[j]);
    let mut best: Option<EncounterCandidate> = None;
    for offset in offset_grid(t1.len(), t2.len(), cfg.offset_stride_steps) {
        let (start, end) = overlap(t1.len(), t2.len(), offset);
        let mut local: Option<(f64, usize)> = None;
        for k in start..end {
            let l = (k as i64 - offset) as usize;
            if !(r1[k] && r2[l]) {
                continue;
            }
            let d = haversine_nm(t1.states[k].pos, t2.states[l].pos);
            if local.is_none_or(|(m, _)| d < m) {
                local = Some((d, k));
            }
        }
        let Some((d, k)) = local else { continue };
        if best.is_none_or(|b| better_offset((d, offset), (b.d_min_observed_nm, b.offset_steps))) {
            best = Some(EncounterCandidate {
                i,
                j,
                offset_steps: offset,
                k_star: k,
                l_star: (k as i64 - offset) as usize,
                d_min_observed_nm: d,
            });
        }
    }
    best.filter(|c| c.d_min_observed_nm <= cfg.d_min_nm)
}

/// All pairs (ordered by `i`, then `j`) whose ROI-gated minimum separation
/// at their best offset is within `d_min_nm`.
pub fn pair_search(
    pool1: &[Trajectory],
    pool2: &[Trajectory],
    roi: &RegionOfInterest,
    cfg: &ScenarioConfig,
) -> Result<Vec<EncounterCandidate>, EncounterError> {
    cfg.validate()?;
    let p1 = PreparedPool::new(pool1, roi)?;
    let p2 = PreparedPool::new(pool2, roi)?;
    check_shared_dt(&p1, &p2)?;
    Ok(search_prepared(&p1, &p2, cfg))
}

fn check_shared_dt(p1: &PreparedPool, p2: &PreparedPool) -> Result<(), EncounterError> {
    if !p1.trajectories.is_empty() && !p2.trajectories.is_empty() && (p1.dt - p2.dt).abs() > 1e-6 * p1.dt {
        return Err(EncounterError::MixedIntervals { id: p2.trajectories[0].id.clone(), expected: p1.dt, found: p2.dt });
    }
    Ok(())
}

fn search_prepared(p1: &PreparedPool, p2: &PreparedPool, cfg: &ScenarioConfig) -> Vec<EncounterCandidate> {
    let mut out = Vec::new();
    for i in 0..p1.trajectories.len() {
        for j in 0..p2.trajectories.len() {
            if let Some(c) = search_pair(p1, p2, i, j, cfg) {
                out.push(c);
            }
        }
    }
    out
}

/// Proximity plus motion consistency: some aligned instant must have range
/// within `d_th_nm`, `0 < tcpa <= t_th_s` and `dcpa <= d_cpa_nm`.
pub fn safety_filter(c: &EncounterCandidate, p1: &PreparedPool, p2: &PreparedPool, cfg: &ScenarioConfig) -> bool {
    if c.d_min_observed_nm > cfg.d_min_nm {
        return false;
    }
    let (k1, k2) = (&p1.kinematics[c.i], &p2.kinematics[c.j]);
    let (start, end) = overlap(k1.len(), k2.len(), c.offset_steps);
    (start..end).any(|k| {
        let l = (k as i64 - c.offset_steps) as usize;
        let cpa = relative_cpa(&k1[k], &k2[l]);
        cpa.range_nm <= cfg.d_th_nm && cpa.tcpa_s > 0.0 && cpa.tcpa_s <= cfg.t_th_s && cpa.dcpa_nm <= cfg.d_cpa_nm
    })
}

/// Search, filter, cap at `max_pairs` and segment.
pub fn build_scenarios(
    pool1: &[Trajectory],
    pool2: &[Trajectory],
    roi: &RegionOfInterest,
    cfg: &ScenarioConfig,
) -> Result<Vec<Scenario>, EncounterError> {
    cfg.validate()?;
    let p1 = PreparedPool::new(pool1, roi)?;
    let p2 = PreparedPool::new(pool2, roi)?;
    check_shared_dt(&p1, &p2)?;
    let mut out = Vec::new();
    for c in search_prepared(&p1, &p2, cfg) {
        if out.len() >= cfg.max_pairs {
            break;
        }
        if safety_filter(&c, &p1, &p2, cfg) {
            out.push(anchor_and_segment(&c, &p1, &p2, roi, cfg)?);
        }
    }
    Ok(out)
}
