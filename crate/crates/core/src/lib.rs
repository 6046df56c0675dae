//! Trajectory primitives and the non-learned half of the scenario pipeline.
//!
//! - [`geo`]: spherical distance, bearing, regions of interest
//! - [`trajectory`] and [`preprocess`]: track types and the cleaning stages
//! - [`csvio`]: the `id,timestamp,lat,lon` interchange format
//! - [`smoothing`] and [`metrics`]: post-processing and evaluation
//! - [`encounter`]: kinematics, CPA analysis, pairing and scenario output
//! - [`synth`]: synthetic traffic-flow corpora for tests and demos

pub mod csvio;
pub mod encounter;
pub mod geo;
pub mod metrics;
pub mod preprocess;
pub mod smoothing;
pub mod synth;
pub mod trajectory;

pub use geo::{Bounds, GeoError, GeoPoint, RegionOfInterest};
pub use trajectory::{NormalizedSequence, RouteDataset, TimedState, Trajectory, TrajectoryError};
