//! Ground-truth world model plus the geometry and reachability primitives
//! shared by the placement rules, the controller and the trace validator.
//!
//! All connectivity is 4-neighbour. "Closest" always means Euclidean distance
//! between cell centres with ties broken by `(row, col)` order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A grid cell addressed by row and column. Serialized as `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// In-bounds 4-neighbours in the fixed expansion order: up, left, right, down.
    pub fn neighbors(self, width: usize, height: usize) -> impl Iterator<Item = Cell> {
        let Cell { row, col } = self;
        let up = (row > 0).then(|| Cell::new(row - 1, col));
        let left = (col > 0).then(|| Cell::new(row, col - 1));
        let right = (col + 1 < width).then(|| Cell::new(row, col + 1));
        let down = (row + 1 < height).then(|| Cell::new(row + 1, col));
        [up, left, right, down].into_iter().flatten()
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col) == 1
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }

    /// Squared Euclidean distance; exact, so it can be compared without rounding.
    pub fn dist2(self, other: Cell) -> usize {
        let dr = self.row.abs_diff(other.row);
        let dc = self.col.abs_diff(other.col);
        dr * dr + dc * dc
    }
}

impl From<[usize; 2]> for Cell {
    fn from([row, col]: [usize; 2]) -> Self {
        Self { row, col }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Picks the cell closest to `origin`, ties broken lexicographically.
pub fn closest_to<I>(origin: Cell, cells: I) -> Option<Cell>
where
    I: IntoIterator<Item = Cell>,
{
    cells.into_iter().min_by_key(|c| (c.dist2(origin), *c))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("empty shape")]
    EmptyShape,
    #[error("shape cell {0} lies outside the {1}x{2} grid")]
    OutOfBounds(Cell, usize, usize),
    #[error("disconnected shape: cell {0} is not 4-connected to {1}")]
    Disconnected(Cell, Cell),
    #[error("interior hole at {0}")]
    InteriorHole(Cell),
    #[error("blocked start at {0}")]
    BlockedStart(Cell),
}

/// Occupancy of one cell in some view of the world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Free,
    Block,
    Factory,
    Robot(u32),
}

/// How flood fills treat cells that currently hold a robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobotsAs {
    Free,
    Blocked,
}

/// Anything that can answer "what is in this cell".
///
/// Implemented by the ground-truth [`GridWorld`], by a robot's local map and
/// by the hypothetical-drop overlay [`WithBlock`].
pub trait OccupancyView {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn state(&self, cell: Cell) -> CellState;

    fn index(&self, cell: Cell) -> usize {
        cell.row * self.width() + cell.col
    }

    fn cells(&self) -> Box<dyn Iterator<Item = Cell> + '_> {
        let w = self.width();
        Box::new((0..self.height()).flat_map(move |r| (0..w).map(move |c| Cell::new(r, c))))
    }
}

impl<V: OccupancyView + ?Sized> OccupancyView for &V {
    fn width(&self) -> usize {
        (**self).width()
    }
    fn height(&self) -> usize {
        (**self).height()
    }
    fn state(&self, cell: Cell) -> CellState {
        (**self).state(cell)
    }
}

/// A view with one extra block placed, used for "what if I drop here" checks.
pub struct WithBlock<'a, V: ?Sized> {
    base: &'a V,
    block: Cell,
}

impl<'a, V: OccupancyView + ?Sized> WithBlock<'a, V> {
    pub fn new(base: &'a V, block: Cell) -> Self {
        Self { base, block }
    }
}

impl<V: OccupancyView + ?Sized> OccupancyView for WithBlock<'_, V> {
    fn width(&self) -> usize {
        self.base.width()
    }
    fn height(&self) -> usize {
        self.base.height()
    }
    fn state(&self, cell: Cell) -> CellState {
        if cell == self.block {
            CellState::Block
        } else {
            self.base.state(cell)
        }
    }
}

fn traversable(state: CellState, robots: RobotsAs) -> bool {
    match state {
        CellState::Free => true,
        CellState::Robot(_) => robots == RobotsAs::Free,
        CellState::Block | CellState::Factory => false,
    }
}

/// Multi-source BFS over traversable cells; returns a reached-mask indexed by
/// [`OccupancyView::index`]. Sources are expanded even if they are robots.
fn flood<V: OccupancyView + ?Sized>(
    view: &V,
    sources: impl IntoIterator<Item = Cell>,
    robots: RobotsAs,
) -> Vec<bool> {
    let (w, h) = (view.width(), view.height());
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    for s in sources {
        let i = view.index(s);
        if !seen[i] {
            seen[i] = true;
            queue.push_back(s);
        }
    }
    while let Some(cell) = queue.pop_front() {
        for n in cell.neighbors(w, h) {
            let i = view.index(n);
            if !seen[i] && traversable(view.state(n), robots) {
                seen[i] = true;
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Target footprint with its derived centroid cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    width: usize,
    height: usize,
    cells: BTreeSet<Cell>,
    mask: Vec<bool>,
    centroid: Cell,
}

impl Shape {
    /// Validates the footprint: non-empty, in bounds, one 4-connected
    /// component and no interior holes.
    pub fn new(width: usize, height: usize, cells: BTreeSet<Cell>) -> Result<Self, GridError> {
        let first = *cells.iter().next().ok_or(GridError::EmptyShape)?;
        let mut mask = vec![false; width * height];
        for &c in &cells {
            if c.row >= height || c.col >= width {
                return Err(GridError::OutOfBounds(c, width, height));
            }
            mask[c.row * width + c.col] = true;
        }

        // one component
        let mut seen = vec![false; width * height];
        let mut queue = VecDeque::from([first]);
        seen[first.row * width + first.col] = true;
        while let Some(c) = queue.pop_front() {
            for n in c.neighbors(width, height) {
                let i = n.row * width + n.col;
                if mask[i] && !seen[i] {
                    seen[i] = true;
                    queue.push_back(n);
                }
            }
        }
        if let Some(&stray) = cells.iter().find(|c| !seen[c.row * width + c.col]) {
            return Err(GridError::Disconnected(stray, first));
        }

        // every non-shape cell must reach the border through non-shape cells
        let mut outside = vec![false; width * height];
        let mut queue = VecDeque::new();
        for r in 0..height {
            for c in 0..width {
                let i = r * width + c;
                let border = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
                if border && !mask[i] {
                    outside[i] = true;
                    queue.push_back(Cell::new(r, c));
                }
            }
        }
        while let Some(c) = queue.pop_front() {
            for n in c.neighbors(width, height) {
                let i = n.row * width + n.col;
                if !mask[i] && !outside[i] {
                    outside[i] = true;
                    queue.push_back(n);
                }
            }
        }
        for r in 0..height {
            for c in 0..width {
                let i = r * width + c;
                if !mask[i] && !outside[i] {
                    return Err(GridError::InteriorHole(Cell::new(r, c)));
                }
            }
        }

        let centroid = centroid(&cells)?;
        Ok(Self {
            width,
            height,
            cells,
            mask,
            centroid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &BTreeSet<Cell> {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn centroid_cell(&self) -> Cell {
        self.centroid
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width && self.mask[cell.row * self.width + cell.col]
    }
}

/// Rounds `num / den` to the nearest integer, halves rounding down.
fn round_half_down(num: i64, den: i64) -> i64 {
    // ceil((2num - den) / 2den)
    let a = 2 * num - den;
    let b = 2 * den;
    -((-a).div_euclid(b))
}

/// The cell at the rounded arithmetic mean of `cells` if it belongs to the
/// set, else the member nearest the exact mean.
pub fn centroid(cells: &BTreeSet<Cell>) -> Result<Cell, GridError> {
    if cells.is_empty() {
        return Err(GridError::EmptyShape);
    }
    let n = cells.len() as i64;
    let sum_r: i64 = cells.iter().map(|c| c.row as i64).sum();
    let sum_c: i64 = cells.iter().map(|c| c.col as i64).sum();
    let rounded = Cell::new(
        round_half_down(sum_r, n) as usize,
        round_half_down(sum_c, n) as usize,
    );
    if cells.contains(&rounded) {
        return Ok(rounded);
    }
    // distance to the exact mean, scaled by n to stay in integers
    let key = |c: &Cell| {
        let dr = c.row as i64 * n - sum_r;
        let dc = c.col as i64 * n - sum_c;
        (dr * dr + dc * dc, *c)
    };
    Ok(*cells.iter().min_by_key(|c| key(c)).expect("non-empty"))
}

pub fn occupied_neighbor_count(known_blocks: &BTreeSet<Cell>, cell: Cell) -> usize {
    // bounds are irrelevant here: out-of-grid cells are never in the set
    let Cell { row, col } = cell;
    let mut count = 0;
    if row > 0 && known_blocks.contains(&Cell::new(row - 1, col)) {
        count += 1;
    }
    if col > 0 && known_blocks.contains(&Cell::new(row, col - 1)) {
        count += 1;
    }
    if known_blocks.contains(&Cell::new(row, col + 1)) {
        count += 1;
    }
    if known_blocks.contains(&Cell::new(row + 1, col)) {
        count += 1;
    }
    count
}

/// Empty shape cells touching at least one known block.
pub fn frontier_candidates(known_blocks: &BTreeSet<Cell>, shape: &Shape) -> BTreeSet<Cell> {
    let mut out = BTreeSet::new();
    for &b in known_blocks {
        for n in b.neighbors(shape.width(), shape.height()) {
            if shape.contains(n) && !known_blocks.contains(&n) {
                out.insert(n);
            }
        }
    }
    out
}

/// Maximal 4-connected set of traversable cells containing `start`.
/// Blocks and factories are never traversable.
pub fn free_region<V: OccupancyView + ?Sized>(
    view: &V,
    start: Cell,
    robots: RobotsAs,
) -> Result<BTreeSet<Cell>, GridError> {
    match view.state(start) {
        CellState::Block | CellState::Factory => return Err(GridError::BlockedStart(start)),
        CellState::Free | CellState::Robot(_) => {}
    }
    let seen = flood(view, [start], robots);
    Ok(view.cells().filter(|c| seen[view.index(*c)]).collect())
}

/// Would a block at `drop` leave the robot at `robot` with no way out of the
/// shape footprint?
pub fn would_trap_robot<V: OccupancyView + ?Sized>(
    view: &V,
    drop: Cell,
    robot: Cell,
    shape: &Shape,
) -> Result<bool, GridError> {
    let after = WithBlock::new(view, drop);
    if matches!(after.state(robot), CellState::Block | CellState::Factory) {
        return Err(GridError::BlockedStart(robot));
    }
    let seen = flood(&after, [robot], RobotsAs::Free);
    let escapes = after
        .cells()
        .any(|c| seen[after.index(c)] && !shape.contains(c));
    Ok(!escapes)
}

/// Empty shape cells that cannot reach any non-shape cell, robots counted as
/// free space.
pub fn sealed_cells<V: OccupancyView + ?Sized>(view: &V, shape: &Shape) -> BTreeSet<Cell> {
    let sources: Vec<Cell> = view
        .cells()
        .filter(|c| !shape.contains(*c) && traversable(view.state(*c), RobotsAs::Free))
        .collect();
    let seen = flood(view, sources, RobotsAs::Free);
    shape
        .cells()
        .iter()
        .copied()
        .filter(|c| traversable(view.state(*c), RobotsAs::Free) && !seen[view.index(*c)])
        .collect()
}

/// If a block at `drop` would leave empty shape cells unreachable from
/// outside the footprint, returns the one nearest `drop`.
pub fn unreachable_empty_after<V: OccupancyView + ?Sized>(
    view: &V,
    drop: Cell,
    shape: &Shape,
) -> Option<Cell> {
    let after = WithBlock::new(view, drop);
    closest_to(drop, sealed_cells(&after, shape))
}

/// Ground truth: blocks, factories and robot positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWorld {
    shape: Shape,
    factories: BTreeSet<Cell>,
    blocks: BTreeSet<Cell>,
    robots: BTreeMap<u32, Cell>,
    grid: Vec<CellState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("factory {0} lies inside the shape")]
    FactoryInShape(Cell),
    #[error("cell {0} is outside the grid")]
    OutOfBounds(Cell),
    #[error("cell {0} is not free")]
    Occupied(Cell),
    #[error("block at {0} would lie outside the shape")]
    OutsideShape(Cell),
    #[error("unknown robot {0}")]
    UnknownRobot(u32),
    #[error("robot {0} already placed")]
    DuplicateRobot(u32),
}

impl GridWorld {
    pub fn new(shape: Shape, factories: BTreeSet<Cell>) -> Result<Self, WorldError> {
        let (w, h) = (shape.width(), shape.height());
        let mut grid = vec![CellState::Free; w * h];
        for &f in &factories {
            if f.row >= h || f.col >= w {
                return Err(WorldError::OutOfBounds(f));
            }
            if shape.contains(f) {
                return Err(WorldError::FactoryInShape(f));
            }
            grid[f.row * w + f.col] = CellState::Factory;
        }
        Ok(Self {
            shape,
            factories,
            blocks: BTreeSet::new(),
            robots: BTreeMap::new(),
            grid,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn factories(&self) -> &BTreeSet<Cell> {
        &self.factories
    }

    pub fn blocks(&self) -> &BTreeSet<Cell> {
        &self.blocks
    }

    pub fn robots(&self) -> &BTreeMap<u32, Cell> {
        &self.robots
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row < self.height() && cell.col < self.width()
    }

    pub fn is_complete(&self) -> bool {
        self.blocks.len() == self.shape.len()
    }

    pub fn place_robot(&mut self, id: u32, at: Cell) -> Result<(), WorldError> {
        if self.robots.contains_key(&id) {
            return Err(WorldError::DuplicateRobot(id));
        }
        if !self.in_bounds(at) {
            return Err(WorldError::OutOfBounds(at));
        }
        if self.state(at) != CellState::Free {
            return Err(WorldError::Occupied(at));
        }
        let i = self.index(at);
        self.grid[i] = CellState::Robot(id);
        self.robots.insert(id, at);
        Ok(())
    }

    pub fn move_robot(&mut self, id: u32, to: Cell) -> Result<(), WorldError> {
        let from = *self.robots.get(&id).ok_or(WorldError::UnknownRobot(id))?;
        if !self.in_bounds(to) {
            return Err(WorldError::OutOfBounds(to));
        }
        if self.state(to) != CellState::Free {
            return Err(WorldError::Occupied(to));
        }
        let (fi, ti) = (self.index(from), self.index(to));
        self.grid[fi] = CellState::Free;
        self.grid[ti] = CellState::Robot(id);
        self.robots.insert(id, to);
        Ok(())
    }

    pub fn remove_robot(&mut self, id: u32) -> Result<Cell, WorldError> {
        let at = self.robots.remove(&id).ok_or(WorldError::UnknownRobot(id))?;
        let i = self.index(at);
        self.grid[i] = CellState::Free;
        Ok(at)
    }

    pub fn place_block(&mut self, at: Cell) -> Result<(), WorldError> {
        if !self.shape.contains(at) {
            return Err(WorldError::OutsideShape(at));
        }
        if self.state(at) != CellState::Free {
            return Err(WorldError::Occupied(at));
        }
        let i = self.index(at);
        self.grid[i] = CellState::Block;
        self.blocks.insert(at);
        Ok(())
    }
}

impl OccupancyView for GridWorld {
    fn width(&self) -> usize {
        self.shape.width()
    }
    fn height(&self) -> usize {
        self.shape.height()
    }
    fn state(&self, cell: Cell) -> CellState {
        self.grid[cell.row * self.shape.width() + cell.col]
    }
}
