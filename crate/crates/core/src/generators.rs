//! Parameterized task families: noisy grid navigation (with the corridor
//! template) and chain tasks.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::task::{ActionId, StateId, Task, TaskError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("grid needs at least one goal cell")]
    NoGoals,
    #[error("grid needs at least one start cell")]
    NoStarts,
    #[error("cell ({0},{1}) is used but not part of the grid")]
    UnknownCell(i64, i64),
    #[error("grid sketch line {line}: unexpected character `{ch}`")]
    Sketch { line: usize, ch: char },
    #[error("size parameter must be at least 1")]
    ZeroSize,
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Grid actions in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GridAction {
    Finish,
    Left,
    Right,
    Up,
    Down,
    LeftUp,
    LeftDown,
    RightUp,
    RightDown,
}

impl GridAction {
    pub const ALL: [GridAction; 9] = [
        GridAction::Finish,
        GridAction::Left,
        GridAction::Right,
        GridAction::Up,
        GridAction::Down,
        GridAction::LeftUp,
        GridAction::LeftDown,
        GridAction::RightUp,
        GridAction::RightDown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridAction::Finish => "finish",
            GridAction::Left => "left",
            GridAction::Right => "right",
            GridAction::Up => "up",
            GridAction::Down => "down",
            GridAction::LeftUp => "left-up",
            GridAction::LeftDown => "left-down",
            GridAction::RightUp => "right-up",
            GridAction::RightDown => "right-down",
        }
    }

    /// Possible displacements: the intended direction first, then the
    /// left-rotating and the right-rotating noise option.
    pub fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            GridAction::Finish => &[(0, 0)],
            GridAction::Left => &[(-1, 0), (-1, -1), (-1, 1)],
            GridAction::Right => &[(1, 0), (1, -1), (1, 1)],
            GridAction::Up => &[(0, 1), (-1, 1), (1, 1)],
            GridAction::Down => &[(0, -1), (1, -1), (-1, -1)],
            GridAction::LeftUp => &[(-1, 1), (-1, 0), (0, 1)],
            GridAction::LeftDown => &[(-1, -1), (0, -1), (-1, 0)],
            GridAction::RightUp => &[(1, 1), (0, 1), (1, 0)],
            GridAction::RightDown => &[(1, -1), (1, 0), (0, -1)],
        }
    }
}

/// Cells are `(x, y)` with `x` the column and `y` the row, `y` growing upward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub cells: BTreeSet<(i64, i64)>,
    pub starts: BTreeSet<(i64, i64)>,
    pub goals: BTreeSet<(i64, i64)>,
}

impl GridSpec {
    /// Parses a text sketch: `.` cell, `#` absent, `S` start cell, `G` goal
    /// cell. The first non-comment line is the top row; rows are flipped so
    /// `y` increases upward, with the bottom line at `y = 0`. Lines starting
    /// with `#` followed by a space are comments.
    pub fn from_sketch(text: &str) -> Result<GridSpec, GenError> {
        let rows: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with("# "))
            .collect();
        let height = rows.len() as i64;
        let mut spec = GridSpec {
            cells: BTreeSet::new(),
            starts: BTreeSet::new(),
            goals: BTreeSet::new(),
        };
        for (row, (line, content)) in rows.iter().enumerate() {
            let y = height - 1 - row as i64;
            for (x, ch) in content.chars().enumerate() {
                let cell = (x as i64, y);
                match ch {
                    '#' => continue,
                    '.' => {}
                    'S' => {
                        spec.starts.insert(cell);
                    }
                    'G' => {
                        spec.goals.insert(cell);
                    }
                    other => return Err(GenError::Sketch { line: *line, ch: other }),
                }
                spec.cells.insert(cell);
            }
        }
        Ok(spec)
    }
}

pub fn cell_name((x, y): (i64, i64)) -> String {
    format!("{x},{y}")
}

/// Builds the grid navigation task of `spec`. A movement action moves to one
/// of its child cells when all of them are in the grid and otherwise leaves
/// the agent in place; `finish` stays put and rewards exactly on goal cells.
pub fn grid_task(spec: &GridSpec) -> Result<Task, GenError> {
    if spec.goals.is_empty() {
        return Err(GenError::NoGoals);
    }
    if spec.starts.is_empty() {
        return Err(GenError::NoStarts);
    }
    if let Some(&(x, y)) = spec
        .starts
        .iter()
        .chain(spec.goals.iter())
        .find(|c| !spec.cells.contains(c))
    {
        return Err(GenError::UnknownCell(x, y));
    }
    // Column-major order: x first, then y.
    let cells: Vec<(i64, i64)> = spec.cells.iter().copied().collect();
    let id = |c: &(i64, i64)| StateId(cells.binary_search(c).expect("cell in grid"));
    let mut delta = Vec::with_capacity(cells.len() * GridAction::ALL.len());
    for &(x, y) in &cells {
        for action in GridAction::ALL {
            let children: Vec<(i64, i64)> = action.offsets().iter().map(|&(u, v)| (x + u, y + v)).collect();
            if children.iter().all(|c| spec.cells.contains(c)) {
                delta.push(children.iter().map(id).collect());
            } else {
                delta.push(vec![id(&(x, y))]);
            }
        }
    }
    let finish = ActionId(0);
    Ok(Task::new(
        cells.iter().copied().map(cell_name).collect(),
        spec.starts.iter().map(id).collect(),
        GridAction::ALL.iter().map(|a| a.name().to_owned()).collect(),
        spec.goals.iter().map(|g| (id(g), finish)).collect(),
        delta,
    )?)
}

/// Number of rows in every corridor.
pub const CORRIDOR_HEIGHT: i64 = 5;

/// Corridor template: a five-row corridor of `length` columns with the start
/// cell at column 0 of the middle row, closed off by a 3×3 goal patch in
/// columns `length..length+2`, rows 1..3. The patch columns hold no other
/// cells, so the agent cannot slip around the goals. The two outer cells of
/// column 0 are left out: with `length == 1` they would have no exit.
pub fn corridor_spec(length: u32) -> Result<GridSpec, GenError> {
    if length == 0 {
        return Err(GenError::ZeroSize);
    }
    let l = i64::from(length);
    let mut spec = GridSpec {
        cells: BTreeSet::new(),
        starts: BTreeSet::from([(0, 2)]),
        goals: BTreeSet::new(),
    };
    for x in 0..l {
        for y in 0..CORRIDOR_HEIGHT {
            spec.cells.insert((x, y));
        }
    }
    spec.cells.remove(&(0, 0));
    spec.cells.remove(&(0, CORRIDOR_HEIGHT - 1));
    for x in l..l + 3 {
        for y in 1..=3 {
            spec.cells.insert((x, y));
            spec.goals.insert((x, y));
        }
    }
    Ok(spec)
}

pub fn corridor_task(length: u32) -> Result<Task, GenError> {
    grid_task(&corridor_spec(length)?)
}

/// Chain of `n` states plus a goal state `n+1`. At state `i`, action `a_i`
/// jumps nondeterministically to any of `i+1..=n+1`; every other action
/// returns to state 1.
pub fn chain_task(n: u32) -> Result<Task, GenError> {
    if n == 0 {
        return Err(GenError::ZeroSize);
    }
    let n = n as usize;
    let states: Vec<String> = (1..=n + 1).map(|i| i.to_string()).collect();
    let actions: Vec<String> = (1..=n).map(|i| format!("a{i}")).collect();
    let mut delta = Vec::with_capacity((n + 1) * n);
    for i in 0..=n {
        for b in 0..n {
            let image = if i == n {
                vec![StateId(n)]
            } else if b == i {
                (i + 1..=n).map(StateId).collect()
            } else {
                vec![StateId(0)]
            };
            delta.push(image);
        }
    }
    Ok(Task::new(
        states,
        vec![StateId(0)],
        actions,
        (0..n).map(|b| (StateId(n), ActionId(b))).collect(),
        delta,
    )?)
}
