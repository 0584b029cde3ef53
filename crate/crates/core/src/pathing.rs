//! Shortest paths on the 4-grid with transient obstacles.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use crate::grid::{Cell, CellState, OccupancyView};

/// Planned route, excluding the current position and ending at the goal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Path {
    pub cells: Vec<Cell>,
}

impl Path {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn next(&self) -> Option<Cell> {
        self.cells.first().copied()
    }

    pub fn goal(&self) -> Option<Cell> {
        self.cells.last().copied()
    }

    /// Drops the first step after it has been taken.
    pub fn advance(&mut self) -> Option<Cell> {
        if self.cells.is_empty() {
            None
        } else {
            Some(self.cells.remove(0))
        }
    }
}

fn passable<V: OccupancyView + ?Sized>(view: &V, cell: Cell, extra: &BTreeSet<Cell>) -> bool {
    !matches!(view.state(cell), CellState::Block | CellState::Factory) && !extra.contains(&cell)
}

/// Minimal-length path from `start` to whichever of `goals` is cheapest to
/// reach. Blocks, factories and `extra_obstacles` are impassable; robots in
/// the view itself are not (pass them in `extra_obstacles` to avoid them).
///
/// Expansion order is up, left, right, down and equal priorities pop FIFO, so
/// the same inputs always produce the same path.
pub fn plan_path_to_any<V: OccupancyView + ?Sized>(
    view: &V,
    start: Cell,
    goals: &BTreeSet<Cell>,
    extra_obstacles: &BTreeSet<Cell>,
) -> Option<Path> {
    let goals: Vec<Cell> = goals
        .iter()
        .copied()
        .filter(|g| *g == start || passable(view, *g, extra_obstacles))
        .collect();
    if goals.is_empty() {
        return None;
    }
    if goals.contains(&start) {
        return Some(Path::default());
    }
    let (w, h) = (view.width(), view.height());
    let heuristic = |c: Cell| goals.iter().map(|g| g.manhattan(c)).min().unwrap_or(0);

    let mut g_cost = vec![usize::MAX; w * h];
    let mut parent: Vec<Option<Cell>> = vec![None; w * h];
    let mut closed = vec![false; w * h];
    let mut open = BinaryHeap::new();
    let mut seq: u64 = 0;

    g_cost[view.index(start)] = 0;
    open.push(Reverse((heuristic(start), seq, start)));

    while let Some(Reverse((_, _, cell))) = open.pop() {
        let ci = view.index(cell);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if goals.contains(&cell) {
            let mut cells = vec![cell];
            let mut cur = cell;
            while let Some(p) = parent[view.index(cur)] {
                if p == start {
                    break;
                }
                cells.push(p);
                cur = p;
            }
            cells.reverse();
            return Some(Path { cells });
        }
        let next_g = g_cost[ci] + 1;
        for n in cell.neighbors(w, h) {
            let ni = view.index(n);
            if closed[ni] || !passable(view, n, extra_obstacles) {
                continue;
            }
            if next_g < g_cost[ni] {
                g_cost[ni] = next_g;
                parent[ni] = Some(cell);
                seq += 1;
                open.push(Reverse((next_g + heuristic(n), seq, n)));
            }
        }
    }
    None
}

pub fn plan_path<V: OccupancyView + ?Sized>(
    view: &V,
    start: Cell,
    goal: Cell,
    extra_obstacles: &BTreeSet<Cell>,
) -> Option<Path> {
    plan_path_to_any(view, start, &BTreeSet::from([goal]), extra_obstacles)
}

/// Does anything in `observed` sit on the first `radius` steps of the path?
/// Steps further ahead are beyond what the robot can currently see.
pub fn path_blocked(path: &Path, observed: &BTreeSet<Cell>, radius: usize) -> bool {
    path.cells.iter().take(radius).any(|c| observed.contains(c))
}
