//! Robot-count sweeps producing makespan / parallelism tables.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{run_scenario, SimConfig, SimError};
use crate::io::shapefile::Scenario;

pub const CSV_HEADER: &str = "shape,robots,trial,makespan,completed,parallelism_index,replans,retargets";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub shape: String,
    pub robots: u32,
    pub trial: u32,
    pub makespan: u64,
    pub completed: bool,
    pub parallelism_index: f64,
    pub replans: u64,
    pub retargets: u64,
}

/// Runs every `(trial, robot count)` pair. Runs are independent and execute
/// in parallel; rows come back ordered by trial, then by position in `robots`.
pub fn bench(
    scenario: &Scenario,
    shape_name: &str,
    base: &SimConfig,
    robots: &[u32],
    trials: u32,
) -> Result<Vec<BenchRow>, SimError> {
    let jobs: Vec<(u32, u32)> = (0..trials)
        .flat_map(|t| robots.iter().map(move |&r| (t, r)))
        .collect();
    jobs.par_iter()
        .map(|&(trial, robot_count)| {
            let mut config = base.clone();
            config.robot_count = robot_count;
            config.seed = base.seed + trial as u64;
            config.spawn_cells = None;
            let out = run_scenario(scenario, &config)?;
            Ok(BenchRow {
                shape: shape_name.to_string(),
                robots: robot_count,
                trial,
                makespan: out.metrics.makespan_ticks,
                completed: out.metrics.completed,
                parallelism_index: out.metrics.parallelism_index,
                replans: out.metrics.replans_total,
                retargets: out.metrics.retargets_total,
            })
        })
        .collect()
}

pub fn write_csv<W: Write>(rows: &[BenchRow], mut sink: W) -> io::Result<()> {
    writeln!(sink, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{}",
            r.shape, r.robots, r.trial, r.makespan, r.completed, r.parallelism_index, r.replans, r.retargets
        )?;
    }
    sink.flush()
}
