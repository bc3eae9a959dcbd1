//! Agent runtime: budget, plan/execution state machine, KV-cache accounting and
//! the episode loop.

pub mod budget;
pub mod cache;
pub mod episode;
pub mod policy;
pub mod state;

use serde_json::{Map, Value};

pub use budget::{BudgetConfig, BudgetError};
pub use cache::{cache_rollback, cache_step, CacheState};
pub use episode::{run_episode, EpisodeMetrics, EpisodeOutcome, RuntimeError, TaskInput};
pub use policy::{Policy, PolicyView, ScriptedPolicy};
pub use state::{AgentState, Mode, Transition};

/// Result of one environment tool call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolOutcome {
    pub observation: String,
    pub failed: bool,
}

impl ToolOutcome {
    pub fn ok(observation: impl Into<String>) -> Self {
        Self { observation: observation.into(), failed: false }
    }

    /// A failed call; the runtime prefixes the reason with `Error: `.
    pub fn failed(reason: impl Into<String>) -> Self {
        Self { observation: reason.into(), failed: true }
    }
}

/// The environment side of an episode: executes every tool other than branch,
/// return and finish.
pub trait ToolSession {
    fn call(&mut self, name: &str, arguments: &Map<String, Value>) -> ToolOutcome;
}

/// An environment with no tools; every call fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoTools;

impl ToolSession for NoTools {
    fn call(&mut self, name: &str, _arguments: &Map<String, Value>) -> ToolOutcome {
        ToolOutcome::failed(format!("unknown tool `{name}`"))
    }
}
