//! Independent trace auditor.
//!
//! Replays a trace on its own minimal world model and re-checks every world
//! invariant. Nothing here calls into the engine, the agent or the grid
//! reachability helpers, so the auditor can judge traces from any producer.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::engine::{EventKind, TraceEvent};
use crate::grid::Cell;
use crate::io::shapefile::Scenario;
use crate::io::trace::TraceHeader;

pub const BLOCKS_WITHIN_SHAPE: &str = "blocks within shape";
pub const CENTROID_FIRST: &str = "centroid first";
pub const CONNECTED_GROWTH: &str = "connected growth";
pub const NO_SEALED_HOLES: &str = "no sealed holes";
pub const PHASE_TRANSITIONS: &str = "phase transitions";
pub const ADJACENT_MOVES: &str = "adjacent moves";
pub const NO_COLLISIONS: &str = "no co-location";
pub const LEGAL_DROPS: &str = "legal drops";
pub const LEGAL_LOADS: &str = "legal loads";
pub const NO_TRAPPED_ROBOTS: &str = "no trapped robots";
pub const COMPLETE: &str = "complete construction";

const ALL_CHECKS: [&str; 11] = [
    BLOCKS_WITHIN_SHAPE,
    CENTROID_FIRST,
    CONNECTED_GROWTH,
    NO_SEALED_HOLES,
    PHASE_TRANSITIONS,
    ADJACENT_MOVES,
    NO_COLLISIONS,
    LEGAL_DROPS,
    LEGAL_LOADS,
    NO_TRAPPED_ROBOTS,
    COMPLETE,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub first_violation_tick: Option<u64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    /// Set when the trace cannot be replayed at all.
    pub structural_error: Option<String>,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.structural_error.is_none() && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(err) = &self.structural_error {
            writeln!(f, "FAIL structure: {err}")?;
        } else {
            writeln!(f, "ok   structure")?;
        }
        for c in &self.checks {
            if c.passed {
                writeln!(f, "ok   {}", c.name)?;
            } else {
                write!(f, "FAIL {}", c.name)?;
                if let Some(t) = c.first_violation_tick {
                    write!(f, " (first at tick {t})")?;
                }
                if let Some(m) = &c.message {
                    write!(f, ": {m}")?;
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Fetching,
    Carrying,
    Finished,
    Stuck,
    Removed,
}

struct Audit {
    width: usize,
    height: usize,
    shape: HashSet<Cell>,
    factories: HashSet<Cell>,
    blocks: HashSet<Cell>,
    robots: BTreeMap<u32, (Cell, Status)>,
    first: BTreeMap<&'static str, (u64, String)>,
    drops: usize,
}

impl Audit {
    fn flag(&mut self, name: &'static str, tick: u64, message: String) {
        self.first.entry(name).or_insert((tick, message));
    }

    fn in_bounds(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width
    }

    fn neighbors(&self, c: Cell) -> Vec<Cell> {
        let mut out = Vec::with_capacity(4);
        if c.row > 0 {
            out.push(Cell::new(c.row - 1, c.col));
        }
        if c.col > 0 {
            out.push(Cell::new(c.row, c.col - 1));
        }
        if c.col + 1 < self.width {
            out.push(Cell::new(c.row, c.col + 1));
        }
        if c.row + 1 < self.height {
            out.push(Cell::new(c.row + 1, c.col));
        }
        out
    }

    fn open(&self, c: Cell) -> bool {
        !self.blocks.contains(&c) && !self.factories.contains(&c)
    }

    fn occupant(&self, c: Cell) -> Option<u32> {
        self.robots
            .iter()
            .find(|(_, (pos, st))| *pos == c && !matches!(st, Status::Removed | Status::Finished))
            .map(|(id, _)| *id)
    }

    /// Cells reachable from `starts` through open cells; robots do not block.
    fn reach(&self, starts: impl IntoIterator<Item = Cell>) -> HashSet<Cell> {
        let mut seen: HashSet<Cell> = HashSet::new();
        let mut queue = VecDeque::new();
        for s in starts {
            if seen.insert(s) {
                queue.push_back(s);
            }
        }
        while let Some(c) = queue.pop_front() {
            for n in self.neighbors(c) {
                if self.open(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    fn blocks_connected(&self) -> bool {
        let Some(&start) = self.blocks.iter().min() else {
            return true;
        };
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for n in self.neighbors(c) {
                if self.blocks.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen.len() == self.blocks.len()
    }

    fn sealed_cell(&self) -> Option<Cell> {
        let outside: Vec<Cell> = (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| Cell::new(r, c)))
            .filter(|c| !self.shape.contains(c) && self.open(*c))
            .collect();
        let reached = self.reach(outside);
        let mut sealed: Vec<Cell> = self
            .shape
            .iter()
            .copied()
            .filter(|c| !self.blocks.contains(c) && !reached.contains(c))
            .collect();
        sealed.sort();
        sealed.first().copied()
    }

    fn docking(&self) -> HashSet<Cell> {
        self.factories
            .iter()
            .flat_map(|f| self.neighbors(*f))
            .filter(|c| self.open(*c))
            .collect()
    }
}

/// Centroid computed from floating-point means, independent of the engine's
/// integer arithmetic.
fn reference_centroid(shape: &BTreeSet<Cell>) -> Option<Cell> {
    if shape.is_empty() {
        return None;
    }
    let n = shape.len() as f64;
    let mr = shape.iter().map(|c| c.row as f64).sum::<f64>() / n;
    let mc = shape.iter().map(|c| c.col as f64).sum::<f64>() / n;
    let round = |x: f64| (x - 0.5).ceil().max(0.0) as usize;
    let guess = Cell::new(round(mr), round(mc));
    if shape.contains(&guess) {
        return Some(guess);
    }
    let mut best: Option<(f64, Cell)> = None;
    for &c in shape {
        let d = (c.row as f64 - mr).powi(2) + (c.col as f64 - mc).powi(2);
        match best {
            Some((bd, _)) if d >= bd - 1e-9 => {}
            _ => best = Some((d, c)),
        }
    }
    best.map(|(_, c)| c)
}

fn structural(message: String) -> ValidationReport {
    ValidationReport {
        structural_error: Some(message),
        checks: Vec::new(),
    }
}

/// Replays `events` against `scenario` and reports every invariant.
pub fn validate_trace(
    header: &TraceHeader,
    events: &[TraceEvent],
    scenario: &Scenario,
) -> ValidationReport {
    if header.shape_hash != scenario.shape_hash {
        return structural("trace was recorded on a different shape file".to_string());
    }
    let shape_cells = scenario.shape.cells().clone();
    let mut audit = Audit {
        width: scenario.shape.width(),
        height: scenario.shape.height(),
        shape: shape_cells.iter().copied().collect(),
        factories: scenario.factories.iter().copied().collect(),
        blocks: HashSet::new(),
        robots: BTreeMap::new(),
        first: BTreeMap::new(),
        drops: 0,
    };
    for (id, &at) in header.spawns.iter().enumerate() {
        if !audit.in_bounds(at) || !audit.open(at) || audit.shape.contains(&at) {
            return structural(format!("spawn {at} of robot {id} is not a free non-shape cell"));
        }
        if audit.occupant(at).is_some() {
            return structural(format!("two robots spawn at {at}"));
        }
        audit.robots.insert(id as u32, (at, Status::Fetching));
    }
    let centroid = reference_centroid(&shape_cells);

    let mut last = (0u64, 0u32);
    for (i, e) in events.iter().enumerate() {
        let line = i + 2;
        if (e.tick, e.robot) < last {
            return structural(format!("line {line}: events out of (tick, robot) order"));
        }
        last = (e.tick, e.robot);
        let Some(&(pos, status)) = audit.robots.get(&e.robot) else {
            return structural(format!("line {line}: unknown robot {}", e.robot));
        };
        if let Some(c) = e.cell {
            if !audit.in_bounds(c) {
                return structural(format!("line {line}: cell {c} outside the grid"));
            }
        }
        let needs_cell = matches!(e.kind, EventKind::Move | EventKind::Load | EventKind::Drop);
        if needs_cell && e.cell.is_none() {
            return structural(format!("line {line}: {} event without a cell", e.kind.as_str()));
        }
        let t = e.tick;
        let id = e.robot;

        let live = matches!(status, Status::Fetching | Status::Carrying);
        if !live {
            audit.flag(
                PHASE_TRANSITIONS,
                t,
                format!("robot {id} acted ({}) after stopping", e.kind.as_str()),
            );
            if status == Status::Removed {
                continue;
            }
        }

        match e.kind {
            EventKind::Move => {
                let to = e.cell.expect("checked");
                if !pos.is_adjacent(to) {
                    audit.flag(ADJACENT_MOVES, t, format!("robot {id} jumped {pos} -> {to}"));
                }
                if !audit.open(to) {
                    audit.flag(NO_COLLISIONS, t, format!("robot {id} entered obstacle {to}"));
                }
                if let Some(other) = audit.occupant(to).filter(|o| *o != id) {
                    audit.flag(NO_COLLISIONS, t, format!("robots {id} and {other} share {to}"));
                }
                audit.robots.insert(id, (to, status));
            }
            EventKind::Load => {
                let factory = e.cell.expect("checked");
                if !audit.factories.contains(&factory) || !factory.is_adjacent(pos) {
                    audit.flag(LEGAL_LOADS, t, format!("robot {id} at {pos} loaded from {factory}"));
                }
                if status != Status::Fetching {
                    audit.flag(PHASE_TRANSITIONS, t, format!("robot {id} loaded while carrying"));
                }
                audit.robots.insert(id, (pos, Status::Carrying));
            }
            EventKind::Drop => {
                let at = e.cell.expect("checked");
                if status != Status::Carrying {
                    audit.flag(PHASE_TRANSITIONS, t, format!("robot {id} dropped without a block"));
                }
                if !at.is_adjacent(pos) {
                    audit.flag(LEGAL_DROPS, t, format!("robot {id} at {pos} dropped at {at}"));
                }
                if !audit.open(at) || audit.occupant(at).is_some() {
                    audit.flag(LEGAL_DROPS, t, format!("drop onto occupied {at}"));
                }
                if !audit.shape.contains(&at) {
                    audit.flag(BLOCKS_WITHIN_SHAPE, t, format!("block at {at} outside the shape"));
                }
                if audit.drops == 0 && Some(at) != centroid {
                    audit.flag(CENTROID_FIRST, t, format!("first drop at {at}, centroid is {centroid:?}"));
                }
                audit.drops += 1;
                audit.blocks.insert(at);
                if !audit.blocks_connected() {
                    audit.flag(CONNECTED_GROWTH, t, format!("drop at {at} is detached"));
                }
                if let Some(hole) = audit.sealed_cell() {
                    audit.flag(NO_SEALED_HOLES, t, format!("drop at {at} sealed {hole}"));
                }
                audit.robots.insert(id, (pos, Status::Fetching));
            }
            EventKind::Replan | EventKind::Retarget | EventKind::Wait => {}
            EventKind::Finish => {
                audit.robots.insert(id, (pos, Status::Finished));
            }
            EventKind::Stuck => {
                audit.robots.insert(id, (pos, Status::Stuck));
            }
            EventKind::FailInjected => {
                audit.robots.insert(id, (pos, Status::Removed));
            }
        }
    }

    let end_tick = events.last().map_or(0, |e| e.tick);
    let docks = audit.docking();
    let mut trapped = Vec::new();
    for (id, (pos, status)) in &audit.robots {
        if matches!(status, Status::Stuck | Status::Removed | Status::Finished) {
            continue;
        }
        if audit.reach([*pos]).is_disjoint(&docks) {
            trapped.push(*id);
        }
    }
    if !trapped.is_empty() {
        audit.flag(NO_TRAPPED_ROBOTS, end_tick, format!("robots {trapped:?} cannot reach a factory"));
    }
    if audit.blocks.len() != audit.shape.len() || !audit.blocks.iter().all(|b| audit.shape.contains(b)) {
        let missing = audit.shape.iter().filter(|c| !audit.blocks.contains(c)).count();
        audit.flag(COMPLETE, end_tick, format!("incomplete construction: {missing} shape cells empty"));
    }

    let checks = ALL_CHECKS
        .iter()
        .map(|&name| match audit.first.get(name) {
            Some((tick, message)) => CheckResult {
                name,
                passed: false,
                first_violation_tick: Some(*tick),
                message: Some(message.clone()),
            },
            None => CheckResult {
                name,
                passed: true,
                first_violation_tick: None,
                message: None,
            },
        })
        .collect();
    ValidationReport {
        structural_error: None,
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimConfig;
    use crate::io::shapefile::parse_shape;

    fn ev(tick: u64, robot: u32, kind: EventKind, cell: Option<(usize, usize)>) -> TraceEvent {
        TraceEvent {
            tick,
            robot,
            kind,
            cell: cell.map(|(r, c)| Cell::new(r, c)),
            detail: String::new(),
        }
    }

    fn setup(text: &str, spawns: Vec<Cell>) -> (Scenario, TraceHeader) {
        let scenario = parse_shape(text).unwrap();
        let header = TraceHeader::new(SimConfig::new("x", spawns.len() as u32), scenario.shape_hash.clone(), spawns);
        (scenario, header)
    }

    #[test]
    fn centroid_reference_matches_examples() {
        let u: BTreeSet<Cell> = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2)]
            .into_iter()
            .map(|(r, c)| Cell::new(r, c))
            .collect();
        assert_eq!(reference_centroid(&u), Some(Cell::new(2, 1)));
    }

    #[test]
    fn empty_trace_flags_incomplete_only() {
        let (s, h) = setup("F...\n.##.\n....\n", vec![Cell::new(0, 1)]);
        let r = validate_trace(&h, &[], &s);
        assert!(r.structural_error.is_none());
        let failed: Vec<_> = r.failed().map(|c| c.name).collect();
        assert_eq!(failed, vec![COMPLETE]);
        assert!(r.check(COMPLETE).unwrap().message.as_ref().unwrap().contains("incomplete construction"));
    }

    #[test]
    fn hand_written_run_passes() {
        // 1x2 shape at (1,1),(1,2); centroid is (1,1) (mean col 1.5 rounds down)
        let (s, h) = setup("F...\n.##.\n....\n", vec![Cell::new(0, 1)]);
        let events = vec![
            ev(0, 0, EventKind::Load, Some((0, 0))),
            ev(1, 0, EventKind::Drop, Some((1, 1))),
            ev(2, 0, EventKind::Load, Some((0, 0))),
            ev(3, 0, EventKind::Move, Some((0, 2))),
            ev(4, 0, EventKind::Drop, Some((1, 2))),
            ev(5, 0, EventKind::Finish, Some((0, 2))),
        ];
        let r = validate_trace(&h, &events, &s);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn mutations_are_caught() {
        let (s, h) = setup("F...\n.##.\n....\n", vec![Cell::new(0, 1)]);
        let outside = vec![
            ev(0, 0, EventKind::Load, Some((0, 0))),
            ev(1, 0, EventKind::Drop, Some((0, 2))),
        ];
        let r = validate_trace(&h, &outside, &s);
        assert_eq!(r.check(BLOCKS_WITHIN_SHAPE).unwrap().first_violation_tick, Some(1));

        let teleport = vec![ev(0, 0, EventKind::Move, Some((2, 3)))];
        let r = validate_trace(&h, &teleport, &s);
        assert_eq!(r.check(ADJACENT_MOVES).unwrap().first_violation_tick, Some(0));

        let after_finish = vec![
            ev(0, 0, EventKind::Finish, Some((0, 1))),
            ev(1, 0, EventKind::Move, Some((0, 2))),
        ];
        let r = validate_trace(&h, &after_finish, &s);
        assert!(!r.check(PHASE_TRANSITIONS).unwrap().passed);
    }

    #[test]
    fn sealed_hole_is_caught() {
        let text = "F....\n.###.\n.###.\n.###.\n.....\n";
        let (s, h) = setup(text, vec![Cell::new(0, 1)]);
        let mut events = Vec::new();
        let mut t = 0;
        for cell in [(2, 2), (1, 2), (2, 1), (2, 3), (1, 1), (1, 3)] {
            // drops are not adjacent to the robot; only the hole check matters here
            events.push(ev(t, 0, EventKind::Load, Some((0, 0))));
            t += 1;
            events.push(ev(t, 0, EventKind::Drop, Some(cell)));
            t += 1;
        }
        let r = validate_trace(&h, &events, &s);
        assert!(r.check(NO_SEALED_HOLES).unwrap().passed);

        // (2,2) left empty and its last exit (3,2) filled on the 8th drop
        let mut events = Vec::new();
        let mut t = 0;
        for cell in [(2, 1), (1, 1), (1, 2), (1, 3), (2, 3), (3, 1), (3, 3), (3, 2)] {
            events.push(ev(t, 0, EventKind::Load, Some((0, 0))));
            t += 1;
            events.push(ev(t, 0, EventKind::Drop, Some(cell)));
            t += 1;
        }
        let r = validate_trace(&h, &events, &s);
        let check = r.check(NO_SEALED_HOLES).unwrap();
        assert!(!check.passed);
        assert_eq!(check.first_violation_tick, Some(15));
    }

    #[test]
    fn structural_problems() {
        let (s, h) = setup("F...\n.##.\n....\n", vec![Cell::new(0, 1)]);
        let r = validate_trace(&h, &[ev(0, 5, EventKind::Wait, None)], &s);
        assert!(r.structural_error.unwrap().contains("unknown robot"));
        let r = validate_trace(
            &h,
            &[ev(3, 0, EventKind::Wait, None), ev(1, 0, EventKind::Wait, None)],
            &s,
        );
        assert!(r.structural_error.unwrap().contains("order"));
        let mut other = h.clone();
        other.shape_hash = "0".repeat(64);
        assert!(validate_trace(&other, &[], &s).structural_error.is_some());
    }
}
