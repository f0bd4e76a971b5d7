//! Dependency-ordered, resumable execution of per-scene task graphs.

mod executor;
mod graph;
mod resources;
mod scripts;
mod state;

pub use executor::{execute, execute_task, render_command, run_shell, Outcome, RunReport, TaskReport, TaskRunner};
pub use graph::{default_graph, BuiltinStage, OutputMapping, TaskGraph, TaskKind, TaskSpec, BASE_MODELS};
pub use resources::{estimate, ResourceAnchor, ResourceEstimate, ResourceModel};
pub use scripts::{emit_batch_scripts, parse_script_header, ScriptHeader, ScriptScene};
pub use state::{compute_pending, SceneLock, StateStore, TaskState, TaskStatus, STATE_DIR};
