//! Deterministic embodied-exploration engine and benchmark harness.

pub mod config;
pub mod error;
pub mod eval;
pub mod frontier;
pub mod generator;
pub mod geometry;
pub mod memory;
pub mod pathfinding;
pub mod pipeline;
pub mod policy;
pub mod retrieval;
pub mod reward;
pub mod scene;
pub mod sim;
pub mod task;

pub use error::{Error, Result};
pub use geometry::{MoveAction, Pose};
pub use scene::{load_scene, Scene};
pub use task::{load_task, Difficulty, Task};
