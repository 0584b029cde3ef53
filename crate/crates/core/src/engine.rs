//! Synchronous tick loop.
//!
//! Every tick, failures scheduled for that tick are applied first, then each
//! live robot in ascending id order senses, decides and acts. A drop changes
//! the world immediately, so robots later in the same tick already see it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{sense, Action, AgentConfig, LocalMap, Note, Phase, Robot};
use crate::grid::{Cell, GridWorld, OccupancyView, Shape, WorldError};
use crate::io::shapefile::{self, Scenario, ShapeFileError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureInjection {
    pub robot_id: u32,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub shape_file: PathBuf,
    pub robot_count: u32,
    #[serde(default)]
    pub spawn_cells: Option<Vec<Cell>>,
    pub sensor_radius: usize,
    pub stuck_threshold: u32,
    pub max_ticks: u64,
    pub seed: u64,
    #[serde(default)]
    pub failure_injections: Vec<FailureInjection>,
}

impl SimConfig {
    pub fn new(shape_file: impl Into<PathBuf>, robot_count: u32) -> Self {
        Self {
            shape_file: shape_file.into(),
            robot_count,
            spawn_cells: None,
            sensor_radius: 2,
            stuck_threshold: 50,
            max_ticks: 100_000,
            seed: 0,
            failure_injections: Vec::new(),
        }
    }

    fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            sensor_radius: self.sensor_radius,
            stuck_threshold: self.stuck_threshold,
            ..AgentConfig::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("robot_count must be at least 1")]
    NoRobots,
    #[error("sensor radius must be at least 1")]
    ZeroRadius,
    #[error("{requested} robots requested but only {available} free cells outside the shape")]
    TooManyRobots { requested: u32, available: usize },
    #[error("spawn cell {0} is not a free cell outside the shape")]
    BadSpawn(Cell),
    #[error("spawn cell {0} listed twice")]
    DuplicateSpawn(Cell),
    #[error("failure injection names unknown robot {0}")]
    UnknownRobot(u32),
    #[error("robot {0} has more than one failure injection")]
    DuplicateFailure(u32),
    #[error(transparent)]
    ShapeFile(#[from] ShapeFileError),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Move,
    Load,
    Drop,
    Replan,
    Retarget,
    Wait,
    Finish,
    Stuck,
    FailInjected,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Move => "move",
            Self::Load => "load",
            Self::Drop => "drop",
            Self::Replan => "replan",
            Self::Retarget => "retarget",
            Self::Wait => "wait",
            Self::Finish => "finish",
            Self::Stuck => "stuck",
            Self::FailInjected => "fail_injected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: u64,
    pub robot: u32,
    pub kind: EventKind,
    pub cell: Option<Cell>,
    pub detail: String,
}

impl TraceEvent {
    fn new(tick: u64, robot: u32, kind: EventKind, cell: Option<Cell>) -> Self {
        Self {
            tick,
            robot,
            kind,
            cell,
            detail: String::new(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Encodes a path as `r,c;r,c;...` for replan event details.
pub fn encode_path(cells: &[Cell]) -> String {
    let parts: Vec<String> = cells.iter().map(|c| format!("{},{}", c.row, c.col)).collect();
    format!("path={}", parts.join(";"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub makespan_ticks: u64,
    pub blocks_per_robot: BTreeMap<u32, u64>,
    pub replans_total: u64,
    pub retargets_total: u64,
    pub distance_per_robot: BTreeMap<u32, u64>,
    /// Median number of robots carrying a block toward the construction over
    /// the middle third of the construction period.
    pub parallelism_index: f64,
    pub completed: bool,
    pub stuck_robots: Vec<u32>,
    pub failed_robots: Vec<u32>,
    pub first_drop_tick: Option<u64>,
    pub last_drop_tick: Option<u64>,
    pub diagnostic: Option<String>,
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceEvent>,
    pub metrics: Metrics,
    pub final_world: GridWorld,
    pub spawns: Vec<Cell>,
}

/// Spawn cells: explicit ones first, then for each remaining robot the free
/// non-shape cell nearest to the next factory in round-robin order.
pub fn resolve_spawns(
    scenario: &Scenario,
    config: &SimConfig,
) -> Result<Vec<Cell>, SimError> {
    let shape = &scenario.shape;
    let usable = |c: Cell| {
        c.row < shape.height()
            && c.col < shape.width()
            && !shape.contains(c)
            && !scenario.factories.contains(&c)
    };
    let available = (0..shape.height())
        .flat_map(|r| (0..shape.width()).map(move |c| Cell::new(r, c)))
        .filter(|c| usable(*c))
        .count();
    if config.robot_count as usize > available {
        return Err(SimError::TooManyRobots {
            requested: config.robot_count,
            available,
        });
    }

    let explicit: Vec<Cell> = match &config.spawn_cells {
        Some(cells) => cells.clone(),
        None => scenario.spawns.clone(),
    };
    let mut used = BTreeSet::new();
    let mut spawns = Vec::new();
    for c in explicit.into_iter().take(config.robot_count as usize) {
        if !usable(c) {
            return Err(SimError::BadSpawn(c));
        }
        if !used.insert(c) {
            return Err(SimError::DuplicateSpawn(c));
        }
        spawns.push(c);
    }

    let factories: Vec<Cell> = scenario.factories.iter().copied().collect();
    let mut round = 0usize;
    while spawns.len() < config.robot_count as usize {
        let factory = factories[round % factories.len()];
        round += 1;
        let pick = (0..shape.height())
            .flat_map(|r| (0..shape.width()).map(move |c| Cell::new(r, c)))
            .filter(|c| usable(*c) && !used.contains(c))
            .min_by_key(|c| (c.dist2(factory), *c))
            .expect("capacity checked above");
        used.insert(pick);
        spawns.push(pick);
    }
    Ok(spawns)
}

struct Slot {
    robot: Robot,
    removed: bool,
}

/// A single simulation in progress.
pub struct Simulation {
    world: GridWorld,
    slots: Vec<Slot>,
    agent: AgentConfig,
    failures: BTreeMap<u64, Vec<u32>>,
    tick: u64,
    to_drop_counts: Vec<u32>,
    blocks_per_robot: BTreeMap<u32, u64>,
    distance_per_robot: BTreeMap<u32, u64>,
    replans: u64,
    retargets: u64,
    first_drop: Option<u64>,
    last_drop: Option<u64>,
    spawns: Vec<Cell>,
}

impl Simulation {
    pub fn new(scenario: &Scenario, config: &SimConfig) -> Result<Self, SimError> {
        if config.robot_count == 0 {
            return Err(SimError::NoRobots);
        }
        if config.sensor_radius == 0 {
            return Err(SimError::ZeroRadius);
        }
        let mut failures: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
        let mut failing = BTreeSet::new();
        for f in &config.failure_injections {
            if f.robot_id >= config.robot_count {
                return Err(SimError::UnknownRobot(f.robot_id));
            }
            if !failing.insert(f.robot_id) {
                return Err(SimError::DuplicateFailure(f.robot_id));
            }
            failures.entry(f.tick).or_default().push(f.robot_id);
        }
        for ids in failures.values_mut() {
            ids.sort_unstable();
        }

        let spawns = resolve_spawns(scenario, config)?;
        let mut world = GridWorld::new(scenario.shape.clone(), scenario.factories.clone())?;
        let mut slots = Vec::new();
        for (id, &at) in spawns.iter().enumerate() {
            let id = id as u32;
            world.place_robot(id, at)?;
            let map = LocalMap::new(world.width(), world.height(), scenario.factories.clone());
            slots.push(Slot {
                robot: Robot::new(id, at, map),
                removed: false,
            });
        }
        let ids = 0..config.robot_count;
        Ok(Self {
            world,
            slots,
            agent: config.agent_config(),
            failures,
            tick: 0,
            to_drop_counts: Vec::new(),
            blocks_per_robot: ids.clone().map(|i| (i, 0)).collect(),
            distance_per_robot: ids.map(|i| (i, 0)).collect(),
            replans: 0,
            retargets: 0,
            first_drop: None,
            last_drop: None,
            spawns,
        })
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    pub fn current_tick(&self) -> u64 {
        self.tick
    }

    pub fn robots(&self) -> impl Iterator<Item = &Robot> {
        self.slots.iter().filter(|s| !s.removed).map(|s| &s.robot)
    }

    /// True while at least one robot is still working.
    pub fn active(&self) -> bool {
        self.slots
            .iter()
            .any(|s| !s.removed && !s.robot.phase.is_terminal())
    }

    /// Takes a robot out of the world; whatever it carried is lost.
    pub fn inject_failure(&mut self, robot_id: u32) -> Result<TraceEvent, SimError> {
        let slot = self
            .slots
            .get_mut(robot_id as usize)
            .filter(|s| !s.removed)
            .ok_or(SimError::UnknownRobot(robot_id))?;
        let at = self.world.remove_robot(robot_id)?;
        let carrying = slot.robot.has_block;
        slot.robot.fail();
        slot.removed = true;
        let detail = if carrying { "carrying" } else { "" };
        Ok(TraceEvent::new(self.tick, robot_id, EventKind::FailInjected, Some(at)).with_detail(detail))
    }

    /// Advances one tick and returns its events.
    pub fn tick(&mut self) -> Vec<TraceEvent> {
        let tick = self.tick;
        let mut events = Vec::new();

        if let Some(ids) = self.failures.remove(&tick) {
            for id in ids {
                // already-removed robots are skipped silently
                if let Ok(ev) = self.inject_failure(id) {
                    events.push(ev);
                }
            }
        }

        let shape: Shape = self.world.shape().clone();
        for i in 0..self.slots.len() {
            if self.slots[i].removed || self.slots[i].robot.phase.is_terminal() {
                continue;
            }
            let robot = &mut self.slots[i].robot;
            let id = robot.id;
            let reading = sense(
                &self.world,
                id,
                robot.pos,
                self.agent.sensor_radius,
                &mut robot.local_map,
                tick,
            );
            let decision = robot.decide(&reading, &shape, &self.agent, tick);
            let had_notes = !decision.notes.is_empty();
            for note in decision.notes {
                match note {
                    Note::Replanned(path) => {
                        self.replans += 1;
                        events.push(
                            TraceEvent::new(tick, id, EventKind::Replan, path.goal())
                                .with_detail(encode_path(&path.cells)),
                        );
                    }
                    Note::Retargeted { target, cause } => {
                        self.retargets += 1;
                        events.push(
                            TraceEvent::new(tick, id, EventKind::Retarget, Some(target))
                                .with_detail(cause.as_str()),
                        );
                    }
                }
            }
            let pos = robot.pos;
            match decision.action {
                Action::Move(to) => match self.world.move_robot(id, to) {
                    Ok(()) => {
                        robot.confirm_move(to);
                        *self.distance_per_robot.entry(id).or_default() += 1;
                        events.push(TraceEvent::new(tick, id, EventKind::Move, Some(to)));
                    }
                    Err(_) => {
                        robot.move_denied();
                        self.replans += 1;
                        events.push(
                            TraceEvent::new(tick, id, EventKind::Replan, None).with_detail("denied"),
                        );
                        events.push(TraceEvent::new(tick, id, EventKind::Wait, Some(pos)));
                    }
                },
                Action::Load { factory } => {
                    let detail = robot
                        .target
                        .map(|t| format!("target={},{}", t.row, t.col))
                        .unwrap_or_default();
                    events.push(
                        TraceEvent::new(tick, id, EventKind::Load, Some(factory)).with_detail(detail),
                    );
                }
                Action::Drop(at) => {
                    self.world
                        .place_block(at)
                        .unwrap_or_else(|e| panic!("robot {id} made an illegal drop at {at}: {e}"));
                    *self.blocks_per_robot.entry(id).or_default() += 1;
                    self.first_drop.get_or_insert(tick);
                    self.last_drop = Some(tick);
                    events.push(TraceEvent::new(tick, id, EventKind::Drop, Some(at)));
                }
                Action::Replan => {
                    if !had_notes {
                        self.replans += 1;
                        events.push(TraceEvent::new(tick, id, EventKind::Replan, None));
                    }
                }
                Action::Wait => events.push(TraceEvent::new(tick, id, EventKind::Wait, Some(pos))),
                Action::Finish => {
                    // a finished robot drives off the arena
                    self.world.remove_robot(id).expect("active robot is on the grid");
                    events.push(TraceEvent::new(tick, id, EventKind::Finish, Some(pos)));
                }
                Action::DeclareStuck => {
                    events.push(TraceEvent::new(tick, id, EventKind::Stuck, Some(pos)))
                }
            }
        }

        let carrying = self
            .robots()
            .filter(|r| r.phase == Phase::ToDrop)
            .count() as u32;
        self.to_drop_counts.push(carrying);
        self.tick += 1;
        // failures land first but a tick's events are listed by robot id
        events.sort_by_key(|e| e.robot);
        events
    }

    /// Runs until no robot is working or `max_ticks` is reached.
    pub fn run_to_end(mut self, max_ticks: u64) -> RunOutput {
        let mut trace = Vec::new();
        while self.active() && self.tick < max_ticks {
            trace.extend(self.tick());
        }
        let exhausted = self.active();
        let metrics = self.metrics(exhausted, max_ticks);
        RunOutput {
            trace,
            metrics,
            final_world: self.world,
            spawns: self.spawns,
        }
    }

    fn metrics(&self, exhausted: bool, max_ticks: u64) -> Metrics {
        let completed = self.world.is_complete();
        let stuck_robots = self
            .slots
            .iter()
            .filter(|s| !s.removed && s.robot.phase == Phase::Stuck)
            .map(|s| s.robot.id)
            .collect();
        let failed_robots = self
            .slots
            .iter()
            .filter(|s| s.removed)
            .map(|s| s.robot.id)
            .collect();
        let diagnostic = if exhausted {
            Some(format!(
                "max_ticks {max_ticks} reached with {} of {} blocks placed",
                self.world.blocks().len(),
                self.world.shape().len()
            ))
        } else if !completed {
            Some(format!(
                "all robots stopped with {} of {} blocks placed",
                self.world.blocks().len(),
                self.world.shape().len()
            ))
        } else {
            None
        };
        Metrics {
            makespan_ticks: self.tick,
            blocks_per_robot: self.blocks_per_robot.clone(),
            replans_total: self.replans,
            retargets_total: self.retargets,
            distance_per_robot: self.distance_per_robot.clone(),
            parallelism_index: parallelism_index(&self.to_drop_counts, self.first_drop, self.last_drop),
            completed,
            stuck_robots,
            failed_robots,
            first_drop_tick: self.first_drop,
            last_drop_tick: self.last_drop,
            diagnostic,
        }
    }
}

/// Bounds `[start, end)` of the middle third of the inclusive tick range
/// `first..=last`.
pub fn middle_third(first: u64, last: u64) -> (u64, u64) {
    let len = last - first + 1;
    let start = first + len / 3;
    let end = (first + (2 * len) / 3).max(start + 1);
    (start, end.min(last + 1))
}

fn parallelism_index(counts: &[u32], first: Option<u64>, last: Option<u64>) -> f64 {
    let (Some(first), Some(last)) = (first, last) else {
        return 0.0;
    };
    let (start, end) = middle_third(first, last);
    let mut window: Vec<u32> = counts[start as usize..end as usize].to_vec();
    window.sort_unstable();
    let n = window.len();
    if n % 2 == 1 {
        window[n / 2] as f64
    } else {
        (window[n / 2 - 1] as f64 + window[n / 2] as f64) / 2.0
    }
}

/// Runs a parsed scenario to completion.
pub fn run_scenario(scenario: &Scenario, config: &SimConfig) -> Result<RunOutput, SimError> {
    let sim = Simulation::new(scenario, config)?;
    Ok(sim.run_to_end(config.max_ticks))
}

/// Loads `config.shape_file` and runs it.
pub fn run(config: &SimConfig) -> Result<RunOutput, SimError> {
    let scenario = shapefile::load(&config.shape_file)?;
    run_scenario(&scenario, config)
}
