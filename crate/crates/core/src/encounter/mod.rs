//! Encounter construction: kinematics from positions, CPA analysis, pairing
//! of two trajectory pools under a region-of-interest gate, and
//! three-segment scenario output.

mod cpa;
mod kinematics;
mod pairing;
mod scenario;

pub use cpa::{relative_cpa, to_tangent_plane, CpaResult};
pub use kinematics::{reconstruct_kinematics, KinematicState};
pub use pairing::{
    build_scenarios, offset_grid, pair_search, safety_filter, EncounterCandidate, PreparedPool, ScenarioConfig,
};
pub use scenario::{
    anchor_and_segment, read_library_index, write_library, IndexEntry, Margins, PairInfo, Role, Scenario,
    Segments, VesselSegments, SCENARIO_SCHEMA_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncounterError {
    #[error("trajectory {id}: not uniformly sampled at dt={dt}s")]
    NonUniformSampling { id: String, dt: f64 },
    #[error("trajectory {id}: sampling interval {found}s differs from pool interval {expected}s")]
    MixedIntervals { id: String, expected: f64, found: f64 },
    #[error("trajectory {id}: needs at least 2 states")]
    TooShort { id: String },
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("candidate ({i}, {j}) does not index the pools")]
    BadCandidate { i: usize, j: usize },
}
