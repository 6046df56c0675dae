use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{Bounds, GeoError, GeoPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory {id}: needs at least 2 states, got {len}")]
    TooShort { id: String, len: usize },
    #[error("trajectory {id}: timestamps not strictly increasing at index {index}")]
    NonMonotonic { id: String, index: usize },
    #[error("trajectory {id}: non-finite timestamp at index {index}")]
    NonFiniteTime { id: String, index: usize },
    #[error("trajectory {id}: invalid position at index {index}")]
    InvalidPosition { id: String, index: usize },
    #[error("trajectory {id}: time span {span}s shorter than dt={dt}s")]
    SpanTooShort { id: String, span: f64, dt: f64 },
    #[error("sampling interval must be positive and finite, got {0}")]
    InvalidInterval(f64),
    #[error("position {point:?} outside bounds {bounds:?}")]
    OutOfBounds { point: GeoPoint, bounds: Bounds },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("dataset {name}: {reason}")]
    InvalidDataset { name: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedState {
    /// Seconds.
    pub t: f64,
    pub pos: GeoPoint,
}

impl TimedState {
    pub fn new(t: f64, lat: f64, lon: f64) -> Self {
        Self { t, pos: GeoPoint { lat, lon } }
    }
}

/// A temporally ordered track. `dt` is set once the track is uniformly sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub states: Vec<TimedState>,
    pub dt: Option<f64>,
}

impl Trajectory {
    /// Checks length, finiteness and strict monotonicity.
    pub fn new(id: impl Into<String>, states: Vec<TimedState>) -> Result<Self, TrajectoryError> {
        let id = id.into();
        validate_states(&id, &states)?;
        Ok(Self { id, states, dt: None })
    }

    /// As [`Trajectory::new`] and additionally asserts a uniform interval.
    pub fn uniform(id: impl Into<String>, states: Vec<TimedState>, dt: f64) -> Result<Self, TrajectoryError> {
        let mut t = Self::new(id, states)?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(TrajectoryError::InvalidInterval(dt));
        }
        t.dt = Some(dt);
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &TimedState {
        &self.states[0]
    }

    pub fn last(&self) -> &TimedState {
        &self.states[self.states.len() - 1]
    }

    pub fn span(&self) -> f64 {
        self.last().t - self.first().t
    }

    pub fn positions(&self) -> impl Iterator<Item = GeoPoint> + '_ {
        self.states.iter().map(|s| s.pos)
    }

    /// True when every consecutive gap equals `dt` within `tol` seconds.
    pub fn is_uniform(&self, dt: f64, tol: f64) -> bool {
        self.states.windows(2).all(|w| ((w[1].t - w[0].t) - dt).abs() <= tol)
    }
}

fn validate_states(id: &str, states: &[TimedState]) -> Result<(), TrajectoryError> {
    if states.len() < 2 {
        return Err(TrajectoryError::TooShort { id: id.to_string(), len: states.len() });
    }
    for (index, s) in states.iter().enumerate() {
        if !s.t.is_finite() {
            return Err(TrajectoryError::NonFiniteTime { id: id.to_string(), index });
        }
        if !s.pos.is_valid() {
            return Err(TrajectoryError::InvalidPosition { id: id.to_string(), index });
        }
        if index > 0 && s.t <= states[index - 1].t {
            return Err(TrajectoryError::NonMonotonic { id: id.to_string(), index });
        }
    }
    Ok(())
}

/// A set of equal-length, uniformly sampled tracks of one traffic flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteDataset {
    pub name: String,
    pub dt: f64,
    pub bounds: Bounds,
    pub trajectories: Vec<Trajectory>,
}

impl RouteDataset {
    pub fn new(
        name: impl Into<String>,
        dt: f64,
        bounds: Bounds,
        trajectories: Vec<Trajectory>,
    ) -> Result<Self, TrajectoryError> {
        let ds = Self { name: name.into(), dt, bounds, trajectories };
        ds.validate()?;
        Ok(ds)
    }

    /// Dataset whose bounds enclose all states, padded by `pad_fraction` of
    /// each axis span.
    pub fn with_enclosing_bounds(
        name: impl Into<String>,
        dt: f64,
        trajectories: Vec<Trajectory>,
        pad_fraction: f64,
    ) -> Result<Self, TrajectoryError> {
        let name = name.into();
        let bounds = Bounds::enclosing(trajectories.iter().flat_map(|t| t.positions()))
            .ok_or_else(|| TrajectoryError::InvalidDataset { name: name.clone(), reason: "no trajectories".into() })?
            .padded(pad_fraction);
        Self::new(name, dt, bounds, trajectories)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let bad = |reason: String| TrajectoryError::InvalidDataset { name: self.name.clone(), reason };
        self.bounds.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(TrajectoryError::InvalidInterval(self.dt));
        }
        let Some(first) = self.trajectories.first() else {
            return Ok(());
        };
        let len = first.len();
        for t in &self.trajectories {
            validate_states(&t.id, &t.states)?;
            if t.len() != len {
                return Err(bad(format!("trajectory {} has length {} (expected {len})", t.id, t.len())));
            }
            if !t.is_uniform(self.dt, 1e-6 * self.dt) {
                return Err(bad(format!("trajectory {} is not sampled at dt={}", t.id, self.dt)));
            }
            if let Some(p) = t.positions().find(|p| !self.bounds.contains(*p)) {
                return Err(TrajectoryError::OutOfBounds { point: p, bounds: self.bounds });
            }
        }
        Ok(())
    }

    pub fn seq_len(&self) -> Option<usize> {
        self.trajectories.first().map(Trajectory::len)
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// An `L x 2` sequence in the unit square: column 0 latitude, column 1 longitude.
/// Stored flat, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSequence {
    values: Vec<f64>,
    pub source_bounds: Bounds,
}

impl NormalizedSequence {
    /// Wraps values already in `[0, 1]`.
    pub fn from_flat(values: Vec<f64>, source_bounds: Bounds) -> Result<Self, TrajectoryError> {
        source_bounds.validate()?;
        if values.len() % 2 != 0 || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(TrajectoryError::InvalidDataset {
                name: "normalized sequence".into(),
                reason: "values must be pairs in [0, 1]".into(),
            });
        }
        Ok(Self { values, source_bounds })
    }

    pub fn len(&self) -> usize {
        self.values.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, k: usize) -> [f64; 2] {
        [self.values[2 * k], self.values[2 * k + 1]]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for NormalizedSequence {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Per-axis min-max map of every position into `[0, 1]`.
pub fn normalize(traj: &Trajectory, bounds: &Bounds) -> Result<NormalizedSequence, TrajectoryError> {
    bounds.validate()?;
    let mut values = Vec::with_capacity(2 * traj.len());
    for p in traj.positions() {
        if !bounds.contains(p) {
            return Err(TrajectoryError::OutOfBounds { point: p, bounds: *bounds });
        }
        let u = bounds.to_unit(p);
        // clamp rounding spill at the box edges
        values.push(u[0].clamp(0.0, 1.0));
        values.push(u[1].clamp(0.0, 1.0));
    }
    Ok(NormalizedSequence { values, source_bounds: *bounds })
}

/// Inverse of [`normalize`], stamping times `0, dt, 2dt, ...`.
pub fn denormalize(seq: &NormalizedSequence, id: impl Into<String>, dt: f64) -> Result<Trajectory, TrajectoryError> {
    let states = (0..seq.len())
        .map(|k| TimedState { t: k as f64 * dt, pos: seq.source_bounds.from_unit(seq.row(k)) })
        .collect();
    Trajectory::uniform(id, states, dt)
}
