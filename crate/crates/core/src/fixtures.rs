//! Small hand-written tasks shipped with the crate.

/// Reducible three-state task; its layers are `{3}`, `{3,2}`, `{3,2,1}`.
pub const EXAMPLE1: &str = include_str!("../fixtures/example1.task");

/// Non-learnable three-state task with unstable set `{2}`.
pub const EXAMPLE3: &str = include_str!("../fixtures/example3.task");

/// Grid sketch of a box with a dead-end tail that is not reducible.
pub const PARTIAL_BOX_GRID: &str = include_str!("../fixtures/partial_box.grid");
