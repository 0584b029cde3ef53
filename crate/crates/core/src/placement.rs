//! Block placement ordering: start at the centroid, then grow outward along
//! the known frontier, preferring the neighbourhood of the robot's own last
//! drop, the most enclosed candidates, and finally the nearest one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{closest_to, frontier_candidates, occupied_neighbor_count, Cell, Shape};

/// Free cells remembered around a robot's most recent drop.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateMemory {
    pub cells: BTreeSet<Cell>,
    pub recorded_tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementReason {
    Centroid,
    MemoryBiased,
    Frontier,
}

impl PlacementReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Centroid => "centroid",
            Self::MemoryBiased => "memory",
            Self::Frontier => "frontier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementDecision {
    pub target: Cell,
    pub reason: PlacementReason,
    /// Size of the working set the target was picked from.
    pub candidate_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlacementError {
    #[error("no known frontier")]
    NoKnownFrontier,
}

/// Chooses where the next block goes.
///
/// `known_blocks` is the robot's belief; anything it has not seen counts as
/// free. `excluded` holds cells the robot has just rejected for safety
/// reasons and must not pick again until its situation changes.
pub fn next_drop_position(
    known_blocks: &BTreeSet<Cell>,
    shape: &Shape,
    memory: &CandidateMemory,
    ref_pos: Cell,
    excluded: &BTreeSet<Cell>,
) -> Result<PlacementDecision, PlacementError> {
    let centroid = shape.centroid_cell();
    let any_known = known_blocks.iter().any(|c| shape.contains(*c));
    if !any_known {
        if excluded.contains(&centroid) {
            return Err(PlacementError::NoKnownFrontier);
        }
        return Ok(PlacementDecision {
            target: centroid,
            reason: PlacementReason::Centroid,
            candidate_count: 1,
        });
    }

    let frontier: BTreeSet<Cell> = frontier_candidates(known_blocks, shape)
        .into_iter()
        .filter(|c| !excluded.contains(c))
        .collect();
    if frontier.is_empty() {
        return Err(PlacementError::NoKnownFrontier);
    }

    let remembered: BTreeSet<Cell> = frontier.intersection(&memory.cells).copied().collect();
    let (working, reason) = if remembered.is_empty() {
        (frontier, PlacementReason::Frontier)
    } else {
        (remembered, PlacementReason::MemoryBiased)
    };
    let candidate_count = working.len();

    let best = working
        .iter()
        .map(|c| occupied_neighbor_count(known_blocks, *c))
        .max()
        .unwrap_or(0);
    let target = closest_to(
        ref_pos,
        working
            .into_iter()
            .filter(|c| occupied_neighbor_count(known_blocks, *c) == best),
    )
    .ok_or(PlacementError::NoKnownFrontier)?;

    Ok(PlacementDecision {
        target,
        reason,
        candidate_count,
    })
}

/// In-shape 4-neighbours of `placed` that are not known blocks.
pub fn remember_candidates(
    known_blocks: &BTreeSet<Cell>,
    placed: Cell,
    shape: &Shape,
    tick: u64,
) -> CandidateMemory {
    let cells = placed
        .neighbors(shape.width(), shape.height())
        .filter(|n| shape.contains(*n) && !known_blocks.contains(n))
        .collect();
    CandidateMemory {
        cells,
        recorded_tick: tick,
    }
}
