//! Text-grid scenario files.
//!
//! One character per cell, rows separated by newlines, all rows the same
//! length:
//!
//! | char | meaning            |
//! |------|--------------------|
//! | `#`  | shape cell         |
//! | `.`  | free cell          |
//! | `F`  | block factory      |
//! | `S`  | robot spawn (free) |

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{Cell, Shape};

#[derive(Debug, Error)]
pub enum ShapeFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("empty file")]
    Empty,
    #[error("line {line}: ragged row, expected {expected} columns but found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {col}: unexpected character {ch:?}")]
    BadChar { line: usize, col: usize, ch: char },
    #[error("no shape cells ('#')")]
    NoShapeCells,
    #[error("no block factory ('F')")]
    NoFactory,
    #[error("line {line}, column {col}: disconnected shape cell")]
    Disconnected { line: usize, col: usize },
    #[error("line {line}, column {col}: interior hole")]
    InteriorHole { line: usize, col: usize },
    #[error("line {line}, column {col}: factory enclosed by the shape")]
    FactoryInShape { line: usize, col: usize },
}

/// Parsed and validated world geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub shape: Shape,
    pub factories: BTreeSet<Cell>,
    /// Explicit spawn cells in row-major order.
    pub spawns: Vec<Cell>,
    /// Hex SHA-256 of the canonical grid text.
    pub shape_hash: String,
}

fn at(cell: Cell) -> (usize, usize) {
    (cell.row + 1, cell.col + 1)
}

pub fn parse_shape(text: &str) -> Result<Scenario, ShapeFileError> {
    let mut rows: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    while rows.last().is_some_and(|l| l.trim().is_empty()) {
        rows.pop();
    }
    let first = rows.first().ok_or(ShapeFileError::Empty)?;
    let width = first.chars().count();
    if width == 0 {
        return Err(ShapeFileError::Empty);
    }
    let height = rows.len();

    let mut shape_cells = BTreeSet::new();
    let mut factories = BTreeSet::new();
    let mut spawns = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let found = row.chars().count();
        if found != width {
            return Err(ShapeFileError::Ragged {
                line: r + 1,
                expected: width,
                found,
            });
        }
        for (c, ch) in row.chars().enumerate() {
            let cell = Cell::new(r, c);
            match ch {
                '#' => {
                    shape_cells.insert(cell);
                }
                '.' => {}
                'F' => {
                    factories.insert(cell);
                }
                'S' => spawns.push(cell),
                _ => {
                    return Err(ShapeFileError::BadChar {
                        line: r + 1,
                        col: c + 1,
                        ch,
                    })
                }
            }
        }
    }
    if shape_cells.is_empty() {
        return Err(ShapeFileError::NoShapeCells);
    }
    if factories.is_empty() {
        return Err(ShapeFileError::NoFactory);
    }

    // connectivity and holes are diagnosed here (rather than through
    // Shape::new) so the message can point at a line and column
    let in_shape = |c: &Cell| shape_cells.contains(c);
    let start = *shape_cells.iter().next().expect("non-empty");
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for n in c.neighbors(width, height) {
            if in_shape(&n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    if let Some(stray) = shape_cells.iter().find(|c| !seen.contains(c)) {
        let (line, col) = at(*stray);
        return Err(ShapeFileError::Disconnected { line, col });
    }

    let mut outside = BTreeSet::new();
    let mut queue = VecDeque::new();
    for r in 0..height {
        for c in 0..width {
            let cell = Cell::new(r, c);
            let border = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
            if border && !in_shape(&cell) && outside.insert(cell) {
                queue.push_back(cell);
            }
        }
    }
    while let Some(c) = queue.pop_front() {
        for n in c.neighbors(width, height) {
            if !in_shape(&n) && outside.insert(n) {
                queue.push_back(n);
            }
        }
    }
    for r in 0..height {
        for c in 0..width {
            let cell = Cell::new(r, c);
            if !in_shape(&cell) && !outside.contains(&cell) {
                let (line, col) = at(cell);
                return Err(if factories.contains(&cell) {
                    ShapeFileError::FactoryInShape { line, col }
                } else {
                    ShapeFileError::InteriorHole { line, col }
                });
            }
        }
    }

    let shape = Shape::new(width, height, shape_cells)
        .expect("geometry was validated above");
    let shape_hash = hash_grid(&rows);
    Ok(Scenario {
        shape,
        factories,
        spawns,
        shape_hash,
    })
}

fn hash_grid(rows: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for row in rows {
        hasher.update(row.as_bytes());
        hasher.update(b"\n");
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ShapeFileError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ShapeFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_shape(&text)
}
