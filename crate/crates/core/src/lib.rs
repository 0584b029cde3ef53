//! Grid simulator for a robot swarm that builds a given 2D shape out of
//! blocks, coordinating only through the blocks each robot sees.
//!
//! Module map:
//! - [`grid`]: world model, shape geometry, flood-fill reachability
//! - [`placement`]: which cell the next block goes into
//! - [`pathing`]: shortest paths with transient obstacles
//! - [`agent`]: sensing, local maps and the per-robot controller
//! - [`engine`]: the deterministic tick loop, failures and metrics
//! - [`io`]: shape files, traces, frame rendering, validation, benchmarks

pub mod agent;
pub mod engine;
pub mod grid;
pub mod io;
pub mod pathing;
pub mod placement;

pub use engine::{run, run_scenario, EventKind, Metrics, RunOutput, SimConfig, TraceEvent};
pub use grid::{Cell, GridWorld, Shape};
pub use io::shapefile::{parse_shape, Scenario};
