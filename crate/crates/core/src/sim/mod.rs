//! Discrete-step simulation: action dynamics, symbolic views and episodes.

mod episode;
mod runner;
pub mod raycast;
mod views;

pub use episode::{
    apply_action, check_success, segment_is_free, step, EpisodeState, SUCCESS_RADIUS_M,
};
pub use views::{
    line_of_sight, render_view_towards, render_views, view_index_for_bearing, View, ViewConfig,
    VisibleObject, VIEW_HEADINGS,
};
pub use runner::{
    replay_memory, run_episode, EpisodeConfig, EpisodeLog, GoalMemoryEvent, LogRecord,
    MemoryEvent, SubtaskOutcome, ToolLog, DEFAULT_BUDGET, LOG_VERSION,
};
