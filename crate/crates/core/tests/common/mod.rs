#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarm_construct::io::shapefile::{self, Scenario};
use swarm_construct::{Cell, GridWorld, Shape};

pub const SUITE: [&str; 4] = ["square5", "disc9", "u7", "pentagram"];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/shapes")
        .join(format!("{name}.txt"))
}

pub fn load(name: &str) -> Scenario {
    shapefile::load(fixture(name)).unwrap()
}

/// A random world described as plain arrays so oracles never touch the
/// library's own data structures.
#[derive(Debug, Clone)]
pub struct Instance {
    pub w: usize,
    pub h: usize,
    pub shape: Vec<bool>,
    pub block: Vec<bool>,
    pub factory: Vec<bool>,
    pub robot: Vec<bool>,
}

impl Instance {
    pub fn idx(&self, r: usize, c: usize) -> usize {
        r * self.w + c
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.h).flat_map(move |r| (0..self.w).map(move |c| (r, c)))
    }

    fn nbrs(&self, r: usize, c: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        if r > 0 {
            v.push((r - 1, c));
        }
        if c > 0 {
            v.push((r, c - 1));
        }
        if c + 1 < self.w {
            v.push((r, c + 1));
        }
        if r + 1 < self.h {
            v.push((r + 1, c));
        }
        v
    }

    /// Plain BFS. `open` decides which cells may be entered.
    pub fn bfs(&self, start: (usize, usize), open: &dyn Fn(usize) -> bool) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.w * self.h];
        dist[self.idx(start.0, start.1)] = Some(0);
        let mut q = VecDeque::from([start]);
        while let Some((r, c)) = q.pop_front() {
            let d = dist[self.idx(r, c)].unwrap();
            for (nr, nc) in self.nbrs(r, c) {
                let i = self.idx(nr, nc);
                if dist[i].is_none() && open(i) {
                    dist[i] = Some(d + 1);
                    q.push_back((nr, nc));
                }
            }
        }
        dist
    }

    pub fn world(&self) -> GridWorld {
        let shape_cells = self
            .cells()
            .filter(|&(r, c)| self.shape[self.idx(r, c)])
            .map(|(r, c)| Cell::new(r, c))
            .collect();
        let shape = Shape::new(self.w, self.h, shape_cells).unwrap();
        let factories = self
            .cells()
            .filter(|&(r, c)| self.factory[self.idx(r, c)])
            .map(|(r, c)| Cell::new(r, c))
            .collect();
        let mut world = GridWorld::new(shape, factories).unwrap();
        for (r, c) in self.cells().collect::<Vec<_>>() {
            let i = self.idx(r, c);
            if self.block[i] {
                world.place_block(Cell::new(r, c)).unwrap();
            }
        }
        let mut id = 0;
        for (r, c) in self.cells().collect::<Vec<_>>() {
            if self.robot[self.idx(r, c)] {
                world.place_robot(id, Cell::new(r, c)).unwrap();
                id += 1;
            }
        }
        world
    }

    pub fn empty_cells(&self) -> Vec<(usize, usize)> {
        self.cells()
            .filter(|&(r, c)| {
                let i = self.idx(r, c);
                !self.block[i] && !self.factory[i]
            })
            .collect()
    }

    pub fn empty_shape_cells_without_robot(&self) -> Vec<(usize, usize)> {
        self.cells()
            .filter(|&(r, c)| {
                let i = self.idx(r, c);
                self.shape[i] && !self.block[i] && !self.robot[i]
            })
            .collect()
    }
}

/// Grows a connected footprint from the middle, fills its holes, then
/// scatters blocks, factories and robots.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.gen_range(8..=12);
    let h = rng.gen_range(8..=12);
    let mut inst = Instance {
        w,
        h,
        shape: vec![false; w * h],
        block: vec![false; w * h],
        factory: vec![false; w * h],
        robot: vec![false; w * h],
    };
    let target = rng.gen_range(w * h / 6..=w * h / 2);
    let start = (h / 2, w / 2);
    let mut members = vec![start];
    let s0 = inst.idx(start.0, start.1);
    inst.shape[s0] = true;
    while members.len() < target {
        let (r, c) = members[rng.gen_range(0..members.len())];
        let options = inst.nbrs(r, c);
        let (nr, nc) = options[rng.gen_range(0..options.len())];
        // leave a one-cell margin so something always lies outside
        if nr == 0 || nc == 0 || nr == h - 1 || nc == w - 1 {
            continue;
        }
        let i = inst.idx(nr, nc);
        if !inst.shape[i] {
            inst.shape[i] = true;
            members.push((nr, nc));
        }
    }
    // anything outside the footprint that the border cannot reach is a hole
    let outside = {
        let s = inst.shape.clone();
        inst.bfs((0, 0), &move |i| !s[i])
    };
    for (i, d) in outside.iter().enumerate() {
        if d.is_none() {
            inst.shape[i] = true;
        }
    }

    let density: f64 = rng.gen_range(0.1..0.7);
    for i in 0..w * h {
        if inst.shape[i] && rng.gen_bool(density) {
            inst.block[i] = true;
        }
    }
    let outside_cells: Vec<usize> = (0..w * h).filter(|&i| !inst.shape[i]).collect();
    for _ in 0..rng.gen_range(1..=3) {
        let i = outside_cells[rng.gen_range(0..outside_cells.len())];
        inst.factory[i] = true;
    }
    let free: Vec<usize> = (0..w * h)
        .filter(|&i| !inst.block[i] && !inst.factory[i])
        .collect();
    for _ in 0..rng.gen_range(0..=4) {
        let i = free[rng.gen_range(0..free.len())];
        inst.robot[i] = true;
    }
    inst
}

pub fn cell(rc: (usize, usize)) -> Cell {
    Cell::new(rc.0, rc.1)
}

// ---- oracles ----

pub fn oracle_free_region(inst: &Instance, start: (usize, usize), robots_block: bool) -> BTreeSet<Cell> {
    let open = |i: usize| !inst.block[i] && !inst.factory[i] && !(robots_block && inst.robot[i]);
    inst.bfs(start, &open)
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_some())
        .map(|(i, _)| Cell::new(i / inst.w, i % inst.w))
        .collect()
}

pub fn oracle_would_trap(inst: &Instance, drop: (usize, usize), robot: (usize, usize)) -> bool {
    let d = inst.idx(drop.0, drop.1);
    let open = |i: usize| i != d && !inst.block[i] && !inst.factory[i];
    let dist = inst.bfs(robot, &open);
    !(0..inst.w * inst.h).any(|i| dist[i].is_some() && !inst.shape[i])
}

/// Checks every empty shape cell separately, as the definition reads.
pub fn oracle_unreachable_after(inst: &Instance, drop: (usize, usize)) -> Option<Cell> {
    let d = inst.idx(drop.0, drop.1);
    let open = |i: usize| i != d && !inst.block[i] && !inst.factory[i];
    let mut sealed = Vec::new();
    for (r, c) in inst.cells() {
        let i = inst.idx(r, c);
        if !inst.shape[i] || inst.block[i] || i == d {
            continue;
        }
        let dist = inst.bfs((r, c), &open);
        if !(0..inst.w * inst.h).any(|j| dist[j].is_some() && !inst.shape[j]) {
            sealed.push((r, c));
        }
    }
    sealed
        .into_iter()
        .min_by_key(|&(r, c)| {
            let dr = r as i64 - drop.0 as i64;
            let dc = c as i64 - drop.1 as i64;
            (dr * dr + dc * dc, r, c)
        })
        .map(cell)
}

pub fn oracle_distance(
    inst: &Instance,
    start: (usize, usize),
    goal: (usize, usize),
    extra: &BTreeSet<Cell>,
) -> Option<usize> {
    let open = |i: usize| {
        !inst.block[i] && !inst.factory[i] && !extra.contains(&Cell::new(i / inst.w, i % inst.w))
    };
    if !open(inst.idx(goal.0, goal.1)) && goal != start {
        return None;
    }
    inst.bfs(start, &open)[inst.idx(goal.0, goal.1)]
}

// ---- equivalence sweeps, shared with the acceptance target ----

use swarm_construct::grid::{
    free_region, unreachable_empty_after, would_trap_robot, RobotsAs,
};
use swarm_construct::pathing::plan_path;

/// Each sweep returns how many instances were checked and how many of them
/// had a positive answer (non-trivial region, trap, seal, reachable goal),
/// or the first disagreement.
pub fn sweep_free_region(instances: u64) -> Result<(u64, u64), String> {
    let mut positive = 0;
    for seed in 0..instances {
        let inst = random_instance(seed);
        let world = inst.world();
        let empty = inst.empty_cells();
        let start = empty[seed as usize % empty.len()];
        for robots_block in [false, true] {
            if robots_block && inst.robot[inst.idx(start.0, start.1)] {
                continue;
            }
            let mode = if robots_block { RobotsAs::Blocked } else { RobotsAs::Free };
            let got = free_region(&world, cell(start), mode).map_err(|e| e.to_string())?;
            let want = oracle_free_region(&inst, start, robots_block);
            if got != want {
                return Err(format!("seed {seed}: free_region from {start:?} differs"));
            }
            if robots_block && want.len() > 1 && want.len() < inst.empty_cells().len() {
                positive += 1;
            }
        }
    }
    Ok((instances, positive))
}

pub fn sweep_would_trap(instances: u64) -> Result<(u64, u64), String> {
    let mut positive = 0;
    for seed in 0..instances {
        let inst = random_instance(10_000 + seed);
        let world = inst.world();
        let drops = inst.empty_shape_cells_without_robot();
        if drops.is_empty() {
            continue;
        }
        let drop = drops[seed as usize % drops.len()];
        // half the time stand next to the drop, where traps actually happen
        let mut robots: Vec<_> = inst.empty_cells().into_iter().filter(|c| *c != drop).collect();
        if seed % 2 == 0 {
            let near: Vec<_> = robots
                .iter()
                .copied()
                .filter(|c| inst.shape[inst.idx(c.0, c.1)] && cell(*c).manhattan(cell(drop)) <= 2)
                .collect();
            if !near.is_empty() {
                robots = near;
            }
        }
        let robot = robots[(seed as usize * 7) % robots.len()];
        let got = would_trap_robot(&world, cell(drop), cell(robot), world.shape())
            .map_err(|e| e.to_string())?;
        if got != oracle_would_trap(&inst, drop, robot) {
            return Err(format!("seed {seed}: would_trap_robot({drop:?}, {robot:?}) = {got}"));
        }
        positive += got as u64;
    }
    Ok((instances, positive))
}

pub fn sweep_unreachable_after(instances: u64) -> Result<(u64, u64), String> {
    let mut positive = 0;
    for seed in 0..instances {
        let inst = random_instance(20_000 + seed);
        let world = inst.world();
        let drops = inst.empty_shape_cells_without_robot();
        if drops.is_empty() {
            continue;
        }
        let drop = drops[(seed as usize * 3) % drops.len()];
        let got = unreachable_empty_after(&world, cell(drop), world.shape());
        let want = oracle_unreachable_after(&inst, drop);
        if got != want {
            return Err(format!("seed {seed}: drop {drop:?} gave {got:?}, oracle {want:?}"));
        }
        positive += got.is_some() as u64;
    }
    Ok((instances, positive))
}

pub fn sweep_plan_path(instances: u64) -> Result<(u64, u64), String> {
    let mut positive = 0;
    for seed in 0..instances {
        let inst = random_instance(30_000 + seed);
        let world = inst.world();
        let empty = inst.empty_cells();
        let start = empty[seed as usize % empty.len()];
        let goal = empty[(seed as usize * 13 + 5) % empty.len()];
        // robots are passable unless listed; list them as the transient obstacles
        let extra: BTreeSet<Cell> = inst
            .cells()
            .filter(|&(r, c)| inst.robot[inst.idx(r, c)] && (r, c) != start)
            .map(cell)
            .collect();
        let got = plan_path(&world, cell(start), cell(goal), &extra);
        let want = oracle_distance(&inst, start, goal, &extra);
        match (&got, want) {
            (None, None) => {}
            (Some(p), Some(d)) if p.len() == d => {
                let mut prev = cell(start);
                for &c in &p.cells {
                    let i = inst.idx(c.row, c.col);
                    if !prev.is_adjacent(c) || inst.block[i] || inst.factory[i] || extra.contains(&c) {
                        return Err(format!("seed {seed}: illegal step {prev} -> {c}"));
                    }
                    prev = c;
                }
                if prev != cell(goal) {
                    return Err(format!("seed {seed}: path ends at {prev}, not {goal:?}"));
                }
                positive += 1;
            }
            _ => {
                return Err(format!(
                    "seed {seed}: {start:?}->{goal:?} length {:?}, oracle {want:?}",
                    got.map(|p| p.len())
                ))
            }
        }
    }
    Ok((instances, positive))
}
