use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncounterCandidate, EncounterError, PreparedPool, ScenarioConfig};
use crate::geo::{haversine_nm, GeoPoint, RegionOfInterest};
use crate::trajectory::Trajectory;

pub const SCENARIO_SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Flow1,
    Flow2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairInfo {
    pub i: usize,
    pub j: usize,
    pub offset_steps: i64,
    pub k_star: usize,
    pub l_star: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    pub t_early_s: f64,
    pub t_after_s: f64,
}

/// Samples as `[t, lat, lon]` in the scenario time frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segments {
    pub pre: Vec<[f64; 3]>,
    pub encounter: Vec<[f64; 3]>,
    pub post: Vec<[f64; 3]>,
}

impl Segments {
    pub fn len(&self) -> usize {
        self.pre.len() + self.encounter.len() + self.post.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn concat(&self) -> Vec<[f64; 3]> {
        self.pre.iter().chain(&self.encounter).chain(&self.post).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselSegments {
    pub role: Role,
    pub id: String,
    pub segments: Segments,
}

/// One two-vessel encounter anchored at the closest sampled instant.
///
/// Time is measured from the first sample of the flow-1 trajectory; the
/// flow-2 trajectory is shifted by `pair.offset_steps * dt_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: String,
    pub pair: PairInfo,
    pub t_star_s: f64,
    pub dt_s: f64,
    pub margins: Margins,
    pub config: ScenarioConfig,
    pub roi: RegionOfInterest,
    pub vessels: [VesselSegments; 2],
    pub d_min_observed_nm: f64,
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario fields are always serializable")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// ROI-gated minimum separation over instants present in both vessels'
    /// embedded samples.
    pub fn recompute_d_min(&self) -> Option<f64> {
        let a = self.vessels[0].segments.concat();
        let b = self.vessels[1].segments.concat();
        let inside = |s: &[f64; 3]| self.roi.contains(GeoPoint { lat: s[1], lon: s[2] });
        let mut best: Option<f64> = None;
        let (mut p, mut q) = (0, 0);
        while p < a.len() && q < b.len() {
            if a[p][0] < b[q][0] {
                p += 1;
            } else if a[p][0] > b[q][0] {
                q += 1;
            } else {
                if inside(&a[p]) && inside(&b[q]) {
                    let d = haversine_nm(GeoPoint { lat: a[p][1], lon: a[p][2] }, GeoPoint { lat: b[q][1], lon: b[q][2] });
                    best = Some(best.map_or(d, |m: f64| m.min(d)));
                }
                p += 1;
                q += 1;
            }
        }
        best
    }
}

fn segment(traj: &Trajectory, shift_steps: i64, dt: f64, t_star: f64, m: &Margins) -> Segments {
    let (lo, hi) = (t_star - m.t_early_s, t_star + m.t_after_s);
    let mut out = Segments::default();
    for (k, s) in traj.states.iter().enumerate() {
        let t = (k as i64 + shift_steps) as f64 * dt;
        let row = [t, s.pos.lat, s.pos.lon];
        if t < lo {
            out.pre.push(row);
        } else if t <= hi {
            out.encounter.push(row);
        } else {
            out.post.push(row);
        }
    }
    out
}

/// Build the scenario record for a candidate. Timestamps are rebuilt on the
/// sample grid so aligned instants of the two vessels compare equal.
pub fn anchor_and_segment(
    c: &EncounterCandidate,
    pool1: &PreparedPool,
    pool2: &PreparedPool,
    roi: &RegionOfInterest,
    cfg: &ScenarioConfig,
) -> Result<Scenario, EncounterError> {
    let (Some(t1), Some(t2)) = (pool1.trajectories.get(c.i), pool2.trajectories.get(c.j)) else {
        return Err(EncounterError::BadCandidate { i: c.i, j: c.j });
    };
    if c.k_star >= t1.len() || c.l_star >= t2.len() || c.k_star as i64 - c.l_star as i64 != c.offset_steps {
        return Err(EncounterError::BadCandidate { i: c.i, j: c.j });
    }
    let dt = pool1.dt;
    let t_star = c.k_star as f64 * dt;
    let margins = Margins { t_early_s: cfg.t_early_s, t_after_s: cfg.t_after_s };
    Ok(Scenario {
        schema_version: SCENARIO_SCHEMA_VERSION.to_string(),
        pair: PairInfo { i: c.i, j: c.j, offset_steps: c.offset_steps, k_star: c.k_star, l_star: c.l_star },
        t_star_s: t_star,
        dt_s: dt,
        margins,
        config: cfg.clone(),
        roi: roi.clone(),
        vessels: [
            VesselSegments { role: Role::Flow1, id: t1.id.clone(), segments: segment(t1, 0, dt, t_star, &margins) },
            VesselSegments {
                role: Role::Flow2,
                id: t2.id.clone(),
                segments: segment(t2, c.offset_steps, dt, t_star, &margins),
            },
        ],
        d_min_observed_nm: c.d_min_observed_nm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub file: String,
    pub i: usize,
    pub j: usize,
    pub t_star_s: f64,
    pub d_min_observed_nm: f64,
}

/// Write `scenario_NNNNN.json` files and `index.json` into `dir`.
pub fn write_library(dir: &Path, scenarios: &[Scenario]) -> io::Result<Vec<IndexEntry>> {
    fs::create_dir_all(dir)?;
    let mut index = Vec::with_capacity(scenarios.len());
    for (n, s) in scenarios.iter().enumerate() {
        let file = format!("scenario_{n:05}.json");
        fs::write(dir.join(&file), s.to_json() + "\n")?;
        index.push(IndexEntry { file, i: s.pair.i, j: s.pair.j, t_star_s: s.t_star_s, d_min_observed_nm: s.d_min_observed_nm });
    }
    let text = serde_json::to_string_pretty(&index).map_err(io::Error::other)?;
    fs::write(dir.join("index.json"), text + "\n")?;
    Ok(index)
}

pub fn read_library_index(dir: &Path) -> io::Result<Vec<IndexEntry>> {
    let text = fs::read_to_string(dir.join("index.json"))?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
