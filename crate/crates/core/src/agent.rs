//! Per-robot controller: sensing, the private occupancy map, and the
//! fetch / place state machine.
//!
//! A robot only ever learns about blocks by seeing them. Everything it has
//! not seen is assumed free; arriving at a target and finding it filled is
//! what corrects the belief.

use std::collections::{BTreeMap, BTreeSet};

use crate::grid::{
    closest_to, free_region, sealed_cells, unreachable_empty_after, would_trap_robot, Cell, CellState,
    GridWorld, OccupancyView, RobotsAs, Shape, WithBlock,
};
use crate::pathing::{path_blocked, plan_path_to_any, Path};
use crate::placement::{next_drop_position, remember_candidates, CandidateMemory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Belief {
    Unknown,
    Free,
    Block,
}

/// A robot's private picture of the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalMap {
    width: usize,
    height: usize,
    beliefs: Vec<Belief>,
    last_seen: Vec<Option<u64>>,
    known_blocks: BTreeSet<Cell>,
    factories: BTreeSet<Cell>,
    shape_known_blocks: usize,
}

impl LocalMap {
    /// Starts with static knowledge only: grid size and factory locations.
    pub fn new(width: usize, height: usize, factories: BTreeSet<Cell>) -> Self {
        Self {
            width,
            height,
            beliefs: vec![Belief::Unknown; width * height],
            last_seen: vec![None; width * height],
            known_blocks: BTreeSet::new(),
            factories,
            shape_known_blocks: 0,
        }
    }

    pub fn belief(&self, cell: Cell) -> Belief {
        self.beliefs[self.index(cell)]
    }

    pub fn last_seen(&self, cell: Cell) -> Option<u64> {
        self.last_seen[self.index(cell)]
    }

    pub fn known_blocks(&self) -> &BTreeSet<Cell> {
        &self.known_blocks
    }

    pub fn factories(&self) -> &BTreeSet<Cell> {
        &self.factories
    }

    /// Records an observation. Blocks are never removed from the world, so a
    /// cell once seen as a block stays one.
    pub fn observe(&mut self, cell: Cell, is_block: bool, tick: u64) {
        let i = self.index(cell);
        self.last_seen[i] = Some(tick);
        if self.beliefs[i] == Belief::Block {
            return;
        }
        if is_block {
            self.beliefs[i] = Belief::Block;
            if self.known_blocks.insert(cell) {
                self.shape_known_blocks += 1;
            }
        } else {
            self.beliefs[i] = Belief::Free;
        }
    }

    /// Known blocks plus shape cells the map shows walled in by them. Nobody
    /// ever seals an empty cell, so a walled-in cell must already be filled
    /// even though no robot outside can see it any more.
    pub fn settled_blocks(&self, shape: &Shape) -> BTreeSet<Cell> {
        let mut out = self.known_blocks.clone();
        out.extend(sealed_cells(self, shape));
        out
    }

    /// True once every shape cell is known or inferred to hold a block.
    pub fn shows_complete(&self, shape: &Shape) -> bool {
        if self.shape_known_blocks >= shape.len()
            && shape.cells().iter().all(|c| self.known_blocks.contains(c))
        {
            return true;
        }
        let settled = self.settled_blocks(shape);
        shape.cells().iter().all(|c| settled.contains(c))
    }

    /// Free cells next to a factory where a robot can load.
    pub fn docking_cells(&self) -> BTreeSet<Cell> {
        let mut out = BTreeSet::new();
        for f in &self.factories {
            for n in f.neighbors(self.width, self.height) {
                if !matches!(self.state(n), CellState::Block | CellState::Factory) {
                    out.insert(n);
                }
            }
        }
        out
    }

    pub fn is_docked(&self, pos: Cell) -> bool {
        self.factories.iter().any(|f| f.is_adjacent(pos))
    }
}

impl OccupancyView for LocalMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn state(&self, cell: Cell) -> CellState {
        if self.factories.contains(&cell) {
            CellState::Factory
        } else if self.beliefs[self.index(cell)] == Belief::Block {
            CellState::Block
        } else {
            CellState::Free
        }
    }
}

/// Local map overlaid with the robots sensed this tick.
pub struct SensedView<'a> {
    map: &'a LocalMap,
    robots: &'a BTreeMap<Cell, u32>,
}

impl<'a> SensedView<'a> {
    pub fn new(map: &'a LocalMap, robots: &'a BTreeMap<Cell, u32>) -> Self {
        Self { map, robots }
    }
}

impl OccupancyView for SensedView<'_> {
    fn width(&self) -> usize {
        self.map.width
    }
    fn height(&self) -> usize {
        self.map.height
    }
    fn state(&self, cell: Cell) -> CellState {
        match self.map.state(cell) {
            CellState::Free => match self.robots.get(&cell) {
                Some(&id) => CellState::Robot(id),
                None => CellState::Free,
            },
            other => other,
        }
    }
}

/// What one sensing pass produced beyond the map update itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SensorReading {
    /// Other robots inside the window, by position.
    pub robots: BTreeMap<Cell, u32>,
    pub cells_updated: usize,
}

/// Writes the true block/free state of every cell within Chebyshev `radius`
/// of `pos` into `map`, and reports the other robots seen.
pub fn sense(
    world: &GridWorld,
    self_id: u32,
    pos: Cell,
    radius: usize,
    map: &mut LocalMap,
    tick: u64,
) -> SensorReading {
    let mut reading = SensorReading::default();
    let r0 = pos.row.saturating_sub(radius);
    let c0 = pos.col.saturating_sub(radius);
    let r1 = (pos.row + radius).min(world.height() - 1);
    let c1 = (pos.col + radius).min(world.width() - 1);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let cell = Cell::new(row, col);
            let state = world.state(cell);
            map.observe(cell, state == CellState::Block, tick);
            reading.cells_updated += 1;
            if let CellState::Robot(id) = state {
                if id != self_id {
                    reading.robots.insert(cell, id);
                }
            }
        }
    }
    reading
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    ToFactory,
    Loading,
    ToDrop,
    Finished,
    Stuck,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Finished | Phase::Stuck)
    }
}

/// What the robot asks the world to do this tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Move(Cell),
    Load { factory: Cell },
    Drop(Cell),
    Replan,
    Wait,
    Finish,
    DeclareStuck,
}

/// Why a carried block's destination changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetargetCause {
    /// Destination seen filled.
    Filled,
    /// Destination occupied by a robot.
    Occupied,
    /// Dropping would shut a sensed robot inside the construction.
    TrapsOther,
    /// Dropping would cut this robot off from every factory.
    TrapsSelf,
    /// Dropping would seal an empty cell; go fill that one first.
    Seal,
    /// No docking cell next to the destination is known to be free.
    NoAccess,
    /// First destination picked after a retry.
    Fresh,
}

impl RetargetCause {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Filled => "filled",
            Self::Occupied => "occupied",
            Self::TrapsOther => "traps_other",
            Self::TrapsSelf => "traps_self",
            Self::Seal => "seal",
            Self::NoAccess => "no_access",
            Self::Fresh => "fresh",
        }
    }
}

/// Side information produced while deciding, reported in the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Note {
    Replanned(Path),
    Retargeted { target: Cell, cause: RetargetCause },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub notes: Vec<Note>,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentConfig {
    pub sensor_radius: usize,
    /// Consecutive waits before a robot declares itself stuck.
    pub stuck_threshold: u32,
    /// Consecutive waits before a blocked robot steps aside.
    pub sidestep_after: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            sensor_radius: 2,
            stuck_threshold: 50,
            sidestep_after: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Robot {
    pub id: u32,
    pub pos: Cell,
    pub phase: Phase,
    pub has_block: bool,
    pub path: Option<Path>,
    pub target: Option<Cell>,
    pub memory: CandidateMemory,
    pub local_map: LocalMap,
    pub stall_ticks: u32,
    /// Targets rejected since the last load or drop.
    deferred: BTreeSet<Cell>,
}

impl Robot {
    pub fn new(id: u32, pos: Cell, local_map: LocalMap) -> Self {
        Self {
            id,
            pos,
            phase: Phase::ToFactory,
            has_block: false,
            path: None,
            target: None,
            memory: CandidateMemory::default(),
            local_map,
            stall_ticks: 0,
            deferred: BTreeSet::new(),
        }
    }

    /// One step of the controller. Mutates only this robot's own record;
    /// the returned action is applied to the world by the engine, which then
    /// reports back through [`Robot::confirm_move`] or [`Robot::move_denied`].
    pub fn decide(
        &mut self,
        sensed: &SensorReading,
        shape: &Shape,
        cfg: &AgentConfig,
        tick: u64,
    ) -> Decision {
        debug_assert!(!self.phase.is_terminal());
        let mut notes = Vec::new();

        if self.local_map.shows_complete(shape) {
            self.phase = Phase::Finished;
            self.has_block = false;
            self.path = None;
            self.target = None;
            return Decision {
                notes,
                action: Action::Finish,
            };
        }

        let action = match self.phase {
            Phase::ToFactory | Phase::Loading => self.fetch(sensed, shape, cfg, tick, &mut notes),
            Phase::ToDrop => self.deliver(sensed, shape, cfg, tick, &mut notes),
            Phase::Finished | Phase::Stuck => Action::Wait,
        };
        let action = match action {
            Action::Wait => {
                self.stall_ticks += 1;
                if self.stall_ticks >= cfg.stuck_threshold {
                    self.phase = Phase::Stuck;
                    self.has_block = false;
                    self.path = None;
                    Action::DeclareStuck
                } else {
                    Action::Wait
                }
            }
            Action::Load { .. } | Action::Drop(_) => {
                self.stall_ticks = 0;
                action
            }
            other => other,
        };
        Decision { notes, action }
    }

    /// The engine executed our move.
    pub fn confirm_move(&mut self, to: Cell) {
        self.pos = to;
        self.stall_ticks = 0;
        if let Some(path) = self.path.as_mut() {
            if path.next() == Some(to) {
                path.advance();
            } else {
                self.path = None;
            }
        }
        if self.phase == Phase::ToFactory && self.local_map.is_docked(to) {
            self.phase = Phase::Loading;
        }
    }

    /// The engine refused our move (cell taken this tick).
    pub fn move_denied(&mut self) {
        self.path = None;
        self.stall_ticks += 1;
    }

    /// Removes the robot from play after a failure.
    pub fn fail(&mut self) {
        self.phase = Phase::Stuck;
        self.has_block = false;
        self.path = None;
        self.target = None;
    }

    /// Would dropping at `drop` leave this robot able to reach a factory?
    pub fn self_preservation_check(&self, robots: &BTreeMap<Cell, u32>, drop: Cell) -> bool {
        let view = SensedView::new(&self.local_map, robots);
        let after = WithBlock::new(&view, drop);
        let docks = self.local_map.docking_cells();
        match free_region(&after, self.pos, RobotsAs::Free) {
            Ok(region) => docks.iter().any(|d| *d != drop && region.contains(d)),
            Err(_) => false,
        }
    }

    fn fetch(
        &mut self,
        sensed: &SensorReading,
        shape: &Shape,
        cfg: &AgentConfig,
        tick: u64,
        notes: &mut Vec<Note>,
    ) -> Action {
        let factory = self
            .local_map
            .factories()
            .iter()
            .copied()
            .find(|f| f.is_adjacent(self.pos));
        if let Some(factory) = factory {
            self.phase = Phase::ToDrop;
            self.has_block = true;
            self.path = None;
            self.deferred.clear();
            self.target = None;
            self.pick_target(sensed, shape, None, notes);
            return Action::Load { factory };
        }
        self.phase = Phase::ToFactory;
        let docks = self.local_map.docking_cells();
        self.follow(&docks, sensed, cfg, tick, notes)
            .unwrap_or(Action::Wait)
    }

    fn deliver(
        &mut self,
        sensed: &SensorReading,
        shape: &Shape,
        cfg: &AgentConfig,
        tick: u64,
        notes: &mut Vec<Note>,
    ) -> Action {
        let Some(target) = self.target else {
            if !self.pick_target(sensed, shape, Some(RetargetCause::Fresh), notes) {
                return Action::Wait;
            }
            return self.approach(sensed, shape, cfg, tick, notes);
        };

        if self.local_map.settled_blocks(shape).contains(&target) {
            return self.retarget(target, RetargetCause::Filled, sensed, shape, cfg, tick, notes, false);
        }

        if !self.pos.is_adjacent(target) {
            return self.approach(sensed, shape, cfg, tick, notes);
        }

        // at the drop site: the rule checks, in order
        if sensed.robots.contains_key(&target) {
            return self.retarget(target, RetargetCause::Occupied, sensed, shape, cfg, tick, notes, true);
        }
        let view = SensedView::new(&self.local_map, &sensed.robots);
        let traps_other = sensed.robots.keys().any(|&other| {
            would_trap_robot(&view, target, other, shape).unwrap_or(false)
        });
        if traps_other {
            return self.retarget(target, RetargetCause::TrapsOther, sensed, shape, cfg, tick, notes, true);
        }
        if !self.self_preservation_check(&sensed.robots, target) {
            return self.retarget(target, RetargetCause::TrapsSelf, sensed, shape, cfg, tick, notes, true);
        }
        if let Some(hole) = self.sealed_by(&view, target, shape) {
            self.target = Some(hole);
            self.path = None;
            notes.push(Note::Retargeted {
                target: hole,
                cause: RetargetCause::Seal,
            });
            return self.approach(sensed, shape, cfg, tick, notes);
        }

        // drop
        self.local_map.observe(target, true, tick);
        self.memory = remember_candidates(self.local_map.known_blocks(), target, shape, tick);
        self.has_block = false;
        self.phase = Phase::ToFactory;
        self.target = None;
        self.path = None;
        self.deferred.clear();
        Action::Drop(target)
    }

    /// The cell that must be filled before `drop`, if dropping there would
    /// seal one. Prefers sealed cells that already touch a known block so
    /// the construction stays connected.
    fn sealed_by(&self, view: &SensedView<'_>, drop: Cell, shape: &Shape) -> Option<Cell> {
        unreachable_empty_after(view, drop, shape)?;
        // holes the map already shows enclosed are stale beliefs this drop
        // cannot make worse
        let before = sealed_cells(view, shape);
        let after = WithBlock::new(view, drop);
        let fresh: BTreeSet<Cell> = sealed_cells(&after, shape)
            .difference(&before)
            .copied()
            .collect();
        let known = self.local_map.known_blocks();
        let touching = fresh.iter().copied().filter(|c| {
            c.neighbors(shape.width(), shape.height())
                .any(|n| known.contains(&n))
        });
        closest_to(drop, touching).or_else(|| closest_to(drop, fresh.iter().copied()))
    }

    #[allow(clippy::too_many_arguments)]
    fn retarget(
        &mut self,
        old: Cell,
        cause: RetargetCause,
        sensed: &SensorReading,
        shape: &Shape,
        cfg: &AgentConfig,
        tick: u64,
        notes: &mut Vec<Note>,
        defer: bool,
    ) -> Action {
        if defer {
            self.deferred.insert(old);
        }
        self.target = None;
        self.path = None;
        if !self.pick_target(sensed, shape, Some(cause), notes) {
            return Action::Wait;
        }
        if self.target.is_some_and(|t| self.pos.is_adjacent(t)) {
            // checks run against the new target next tick
            return Action::Replan;
        }
        self.approach(sensed, shape, cfg, tick, notes)
    }

    /// Picks a destination; `cause` is `None` right after loading, when the
    /// choice is reported on the load event instead.
    fn pick_target(
        &mut self,
        sensed: &SensorReading,
        shape: &Shape,
        cause: Option<RetargetCause>,
        notes: &mut Vec<Note>,
    ) -> bool {
        // cells holding a robot right now are not worth walking to
        let mut excluded = self.deferred.clone();
        excluded.extend(sensed.robots.keys().copied());
        let decision = next_drop_position(
            &self.local_map.settled_blocks(shape),
            shape,
            &self.memory,
            self.pos,
            &excluded,
        );
        match decision {
            Ok(d) => {
                self.target = Some(d.target);
                if let Some(cause) = cause {
                    notes.push(Note::Retargeted {
                        target: d.target,
                        cause,
                    });
                }
                true
            }
            Err(_) => {
                // every candidate was rejected; forget the rejections and
                // try again next tick
                self.deferred.clear();
                self.target = None;
                false
            }
        }
    }

    fn approach(
        &mut self,
        sensed: &SensorReading,
        shape: &Shape,
        cfg: &AgentConfig,
        tick: u64,
        notes: &mut Vec<Note>,
    ) -> Action {
        let Some(target) = self.target else {
            return Action::Wait;
        };
        let docks: BTreeSet<Cell> = target
            .neighbors(shape.width(), shape.height())
            .filter(|n| {
                !matches!(self.local_map.state(*n), CellState::Block | CellState::Factory)
            })
            .collect();
        if docks.is_empty() {
            self.deferred.insert(target);
            self.target = None;
            self.path = None;
            if self.pick_target(sensed, shape, Some(RetargetCause::NoAccess), notes) {
                return Action::Replan;
            }
            return Action::Wait;
        }
        match self.follow(&docks, sensed, cfg, tick, notes) {
            Some(action) => action,
            None => {
                // walled off in our own map, not just by robots
                self.deferred.insert(target);
                self.target = None;
                self.path = None;
                if self.pick_target(sensed, shape, Some(RetargetCause::NoAccess), notes) {
                    Action::Replan
                } else {
                    Action::Wait
                }
            }
        }
    }

    /// Moves one step toward the nearest of `goals`, replanning when the
    /// current path is missing, stale or visibly obstructed. `None` when the
    /// goals cannot be reached even with every robot out of the way.
    fn follow(
        &mut self,
        goals: &BTreeSet<Cell>,
        sensed: &SensorReading,
        cfg: &AgentConfig,
        tick: u64,
        notes: &mut Vec<Note>,
    ) -> Option<Action> {
        let observed: BTreeSet<Cell> = sensed
            .robots
            .keys()
            .copied()
            .chain(
                self.local_map
                    .known_blocks()
                    .iter()
                    .copied()
                    .filter(|b| b.chebyshev(self.pos) <= cfg.sensor_radius),
            )
            .collect();
        let stale = match &self.path {
            None => true,
            Some(p) => {
                p.goal().is_none_or(|g| !goals.contains(&g))
                    || path_blocked(p, &observed, cfg.sensor_radius)
            }
        };
        if stale {
            let robots: BTreeSet<Cell> = sensed.robots.keys().copied().collect();
            match plan_path_to_any(&self.local_map, self.pos, goals, &robots) {
                Some(p) => {
                    notes.push(Note::Replanned(p.clone()));
                    self.path = Some(p);
                }
                None => {
                    self.path = None;
                    plan_path_to_any(&self.local_map, self.pos, goals, &BTreeSet::new())?;
                    return Some(self.blocked_wait(sensed, cfg, tick));
                }
            }
        }
        Some(match self.path.as_ref().and_then(Path::next) {
            Some(next) => Action::Move(next),
            // already at a goal: nothing to do this tick
            None => Action::Wait,
        })
    }

    /// Waits while blocked; after a few ticks steps onto any free neighbour
    /// so that two robots facing each other in a corridor can get unstuck.
    fn blocked_wait(&mut self, sensed: &SensorReading, cfg: &AgentConfig, tick: u64) -> Action {
        let next_wait = self.stall_ticks + 1;
        if cfg.sidestep_after == 0 || !next_wait.is_multiple_of(cfg.sidestep_after) {
            return Action::Wait;
        }
        let (w, h) = (self.local_map.width, self.local_map.height);
        let options: Vec<Cell> = self
            .pos
            .neighbors(w, h)
            .filter(|n| {
                self.local_map.state(*n) == CellState::Free && !sensed.robots.contains_key(n)
            })
            .collect();
        if options.is_empty() {
            return Action::Wait;
        }
        let pick = (tick as usize + self.id as usize) % options.len();
        Action::Move(options[pick])
    }
}
