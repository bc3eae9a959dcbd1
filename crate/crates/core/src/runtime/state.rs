//! Plan/execution state machine for the branch and return tools.

use serde::{Deserialize, Serialize};

use super::cache::{cache_rollback, CacheState};
use crate::context::BranchId;

pub const BRANCH_CREATED: &str =
    "Branch created. You are now in a separate working context for this sub-task. Call return with the outcome when it is complete.";
pub const FORCED_RETURN_MESSAGE: &str = "budget exhausted in branch";

pub fn return_observation(message: &str) -> String {
    format!("Returned from branch with message: {message}")
}

pub fn failure_observation(reason: &str) -> String {
    format!("Error: {reason}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Mode {
    Planning,
    Execution {
        branch: BranchId,
        /// Context length through the branch-call action; the cache rolls back here.
        call_prefix: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub mode: Mode,
    pub branches_used: usize,
}

impl Default for AgentState {
    fn default() -> Self {
        Self { mode: Mode::Planning, branches_used: 0 }
    }
}

impl AgentState {
    pub fn is_planning(&self) -> bool {
        self.mode == Mode::Planning
    }

    pub fn current_branch(&self) -> Option<BranchId> {
        match self.mode {
            Mode::Execution { branch, .. } => Some(branch),
            Mode::Planning => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub observation: String,
    pub state: AgentState,
    pub failed: bool,
}

/// Opens a branch. `call_prefix` is the context length once the branch-call
/// action itself is in context.
pub fn handle_branch(state: AgentState, max_branches: usize, call_prefix: usize) -> Transition {
    if !state.is_planning() {
        return Transition {
            observation: failure_observation(
                "cannot create a branch while executing inside a branch; call return first",
            ),
            state,
            failed: true,
        };
    }
    if state.branches_used >= max_branches {
        return Transition {
            observation: failure_observation(&format!(
                "branch limit reached ({max_branches} branches); continue in the main thread"
            )),
            state,
            failed: true,
        };
    }
    let branch = state.branches_used as BranchId + 1;
    Transition {
        observation: BRANCH_CREATED.to_string(),
        state: AgentState { mode: Mode::Execution { branch, call_prefix }, branches_used: state.branches_used + 1 },
        failed: false,
    }
}

/// Closes the current branch and rolls the cache back to its call prefix.
pub fn handle_return(
    state: AgentState,
    message: &str,
    cache: CacheState,
    generated: usize,
) -> (Transition, CacheState) {
    match state.mode {
        Mode::Planning => (
            Transition {
                observation: failure_observation("return is only available inside a branch"),
                state,
                failed: true,
            },
            cache,
        ),
        Mode::Execution { call_prefix, .. } => (
            Transition {
                observation: return_observation(message),
                state: AgentState { mode: Mode::Planning, ..state },
                failed: false,
            },
            cache_rollback(cache, call_prefix, generated),
        ),
    }
}
