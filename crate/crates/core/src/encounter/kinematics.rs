use serde::{Deserialize, Serialize};

use super::EncounterError;
use crate::geo::{haversine_nm, initial_bearing, GeoPoint};
use crate::trajectory::Trajectory;

/// Displacements at or below this are treated as stationary.
const STATIONARY_NM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub t: f64,
    pub pos: GeoPoint,
    /// Speed over ground, knots.
    pub sog: f64,
    /// Course over ground, degrees true in `[0, 360)`.
    pub cog: f64,
}

/// Sampling interval of a uniformly sampled trajectory.
pub(crate) fn uniform_dt(traj: &Trajectory) -> Result<f64, EncounterError> {
    if traj.len() < 2 {
        return Err(EncounterError::TooShort { id: traj.id.clone() });
    }
    let dt = traj.dt.unwrap_or(traj.states[1].t - traj.states[0].t);
    if !(dt > 0.0) || !traj.is_uniform(dt, 1e-6 * dt) {
        return Err(EncounterError::NonUniformSampling { id: traj.id.clone(), dt });
    }
    Ok(dt)
}

/// SOG/COG from consecutive positions. The first state copies the second;
/// stationary steps carry the previous course (0 before any motion).
pub fn reconstruct_kinematics(traj: &Trajectory) -> Result<Vec<KinematicState>, EncounterError> {
    let dt = uniform_dt(traj)?;
    let mut out = Vec::with_capacity(traj.len());
    let mut course = 0.0;
    for k in 1..traj.len() {
        let (a, b) = (traj.states[k - 1].pos, traj.states[k].pos);
        let d = haversine_nm(a, b);
        if d > STATIONARY_NM {
            course = initial_bearing(a, b).unwrap_or(course);
        }
        let sog = d / dt * 3600.0;
        out.push(KinematicState { t: traj.states[k].t, pos: b, sog, cog: course });
    }
    let first = KinematicState { t: traj.states[0].t, pos: traj.states[0].pos, ..out[0] };
    out.insert(0, first);
    Ok(out)
}
