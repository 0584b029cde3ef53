//! Binary PPM (P6) snapshots of a replayed trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{EventKind, TraceEvent};
use crate::grid::Cell;
use crate::io::shapefile::Scenario;
use crate::io::trace::TraceHeader;

/// Pixels per grid cell.
pub const CELL_PX: usize = 16;

type Rgb = [u8; 3];

const BACKGROUND: Rgb = [245, 245, 245];
const SHAPE_FILL: Rgb = [214, 222, 236];
const OUTLINE: Rgb = [70, 70, 90];
const BLOCK: Rgb = [150, 100, 50];
const FACTORY: Rgb = [205, 35, 35];
const PALETTE: [Rgb; 8] = [
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
    [23, 190, 207],
    [227, 119, 194],
    [188, 189, 34],
    [127, 127, 127],
];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("cannot write frames to {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// An RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Frame {
    fn new(width: usize, height: usize) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&BACKGROUND);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    fn put(&mut self, x: i64, y: i64, rgb: Rgb) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn fill_cell(&mut self, cell: Cell, rgb: Rgb, inset: usize) {
        let (x0, y0) = (cell.col * CELL_PX, cell.row * CELL_PX);
        for y in y0 + inset..y0 + CELL_PX - inset {
            for x in x0 + inset..x0 + CELL_PX - inset {
                self.put(x as i64, y as i64, rgb);
            }
        }
    }

    fn disc(&mut self, cell: Cell, radius: i64, rgb: Rgb) {
        let (cx, cy) = center(cell);
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                if dx * dx + dy * dy <= radius * radius {
                    self.put(cx + dx, cy + dy, rgb);
                }
            }
        }
    }

    /// Bresenham line between two pixel positions.
    fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), rgb: Rgb) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, rgb);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

fn center(cell: Cell) -> (i64, i64) {
    (
        (cell.col * CELL_PX + CELL_PX / 2) as i64,
        (cell.row * CELL_PX + CELL_PX / 2) as i64,
    )
}

fn parse_path(detail: &str) -> Option<Vec<Cell>> {
    let body = detail.strip_prefix("path=")?;
    if body.is_empty() {
        return Some(Vec::new());
    }
    body.split(';')
        .map(|pair| {
            let (r, c) = pair.split_once(',')?;
            Some(Cell::new(r.parse().ok()?, c.parse().ok()?))
        })
        .collect()
}

/// World state reconstructed from events, just enough to draw.
struct Replay {
    blocks: BTreeSet<Cell>,
    robots: BTreeMap<u32, Cell>,
    paths: BTreeMap<u32, Vec<Cell>>,
}

impl Replay {
    fn apply(&mut self, e: &TraceEvent) {
        match e.kind {
            EventKind::Move => {
                if let Some(to) = e.cell {
                    self.robots.insert(e.robot, to);
                    if let Some(p) = self.paths.get_mut(&e.robot) {
                        if let Some(i) = p.iter().position(|c| *c == to) {
                            p.drain(..=i);
                        } else {
                            p.clear();
                        }
                    }
                }
            }
            EventKind::Drop => {
                if let Some(at) = e.cell {
                    self.blocks.insert(at);
                }
                self.paths.remove(&e.robot);
            }
            EventKind::Replan => {
                if let Some(p) = parse_path(&e.detail) {
                    self.paths.insert(e.robot, p);
                }
            }
            EventKind::Stuck => {
                self.paths.remove(&e.robot);
            }
            EventKind::Finish | EventKind::FailInjected => {
                self.robots.remove(&e.robot);
                self.paths.remove(&e.robot);
            }
            EventKind::Load | EventKind::Retarget | EventKind::Wait => {}
        }
    }

    fn draw(&self, scenario: &Scenario) -> Frame {
        let shape = &scenario.shape;
        let (w, h) = (shape.width(), shape.height());
        let mut frame = Frame::new(w * CELL_PX, h * CELL_PX);
        for &c in shape.cells() {
            frame.fill_cell(c, SHAPE_FILL, 0);
        }
        // outline along every shape / non-shape boundary
        for &c in shape.cells() {
            let (x0, y0) = ((c.col * CELL_PX) as i64, (c.row * CELL_PX) as i64);
            let x1 = x0 + CELL_PX as i64 - 1;
            let y1 = y0 + CELL_PX as i64 - 1;
            let outside = |r: Option<usize>, col: Option<usize>| match (r, col) {
                (Some(r), Some(col)) => !shape.contains(Cell::new(r, col)),
                _ => true,
            };
            if outside(c.row.checked_sub(1), Some(c.col)) {
                frame.line((x0, y0), (x1, y0), OUTLINE);
            }
            if outside(Some(c.row + 1), Some(c.col)) {
                frame.line((x0, y1), (x1, y1), OUTLINE);
            }
            if outside(Some(c.row), c.col.checked_sub(1)) {
                frame.line((x0, y0), (x0, y1), OUTLINE);
            }
            if outside(Some(c.row), Some(c.col + 1)) {
                frame.line((x1, y0), (x1, y1), OUTLINE);
            }
        }
        for &b in &self.blocks {
            frame.fill_cell(b, BLOCK, 1);
        }
        for &f in &scenario.factories {
            frame.fill_cell(f, FACTORY, 1);
        }
        for (id, path) in &self.paths {
            let Some(&start) = self.robots.get(id) else {
                continue;
            };
            let color = PALETTE[*id as usize % PALETTE.len()];
            let mut prev = center(start);
            for &c in path {
                let next = center(c);
                frame.line(prev, next, color);
                prev = next;
            }
        }
        for (id, &at) in &self.robots {
            frame.disc(at, (CELL_PX / 2 - 2) as i64, PALETTE[*id as usize % PALETTE.len()]);
        }
        frame
    }
}

/// Ticks to snapshot: 0, every, 2*every, ... plus the final state. A frame
/// labelled `t` shows the world after all events of ticks before `t`.
pub fn sample_ticks(events: &[TraceEvent], every: u64) -> Vec<u64> {
    let end = events.last().map_or(0, |e| e.tick + 1);
    let mut ticks: Vec<u64> = if every == 0 {
        vec![0]
    } else {
        (0..end).step_by(every as usize).collect()
    };
    if ticks.last() != Some(&end) {
        ticks.push(end);
    }
    ticks
}

/// Renders the sampled frames in memory.
pub fn render_in_memory(
    header: &TraceHeader,
    events: &[TraceEvent],
    scenario: &Scenario,
    every: u64,
) -> Vec<(u64, Frame)> {
    let mut replay = Replay {
        blocks: BTreeSet::new(),
        robots: header
            .spawns
            .iter()
            .enumerate()
            .map(|(i, c)| (i as u32, *c))
            .collect(),
        paths: BTreeMap::new(),
    };
    let mut frames = Vec::new();
    let mut next = 0usize;
    for tick in sample_ticks(events, every) {
        while next < events.len() && events[next].tick < tick {
            replay.apply(&events[next]);
            next += 1;
        }
        frames.push((tick, replay.draw(scenario)));
    }
    frames
}

/// Writes `frame_<tick>.ppm` files into `out_dir` and returns their paths.
pub fn render_frames(
    header: &TraceHeader,
    events: &[TraceEvent],
    scenario: &Scenario,
    out_dir: &Path,
    every: u64,
) -> Result<Vec<PathBuf>, RenderError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| RenderError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    for (tick, frame) in render_in_memory(header, events, scenario, every) {
        let path = out_dir.join(format!("frame_{tick:06}.ppm"));
        let mut file = fs::File::create(&path).map_err(io_err(&path))?;
        file.write_all(&frame.to_ppm()).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
