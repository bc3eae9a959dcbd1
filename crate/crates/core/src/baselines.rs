//! Comparison runtimes: plain ReAct (no context management) and a
//! summary-based manager that compresses the working context when it fills.

use serde::{Deserialize, Serialize};

use crate::context::token::truncate_words;
use crate::context::Turn;
use crate::runtime::episode::{drive, ContextManager};
use crate::runtime::{BudgetConfig, BudgetError, EpisodeOutcome, Policy, RuntimeError, TaskInput, ToolSession};

pub const DEFAULT_MAX_SESSIONS: usize = 10;
pub const DEFAULT_SUMMARY_TOKENS: usize = 1024;

/// Runs an episode with the identity context manager: the working context is
/// the full history, and exceeding the limit ends the episode.
pub fn run_react(
    task: TaskInput<'_>,
    policy: &mut dyn Policy,
    env: &mut dyn ToolSession,
    active_limit: usize,
    max_turns: usize,
) -> Result<EpisodeOutcome, RuntimeError> {
    let budget = BudgetConfig { active_limit, max_branches: 1, max_turns };
    drive(task, policy, env, &budget, ContextManager::Identity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryConfig {
    pub active_limit: usize,
    pub max_sessions: usize,
    pub max_turns: usize,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        let b = BudgetConfig::default();
        Self { active_limit: b.active_limit, max_sessions: DEFAULT_MAX_SESSIONS, max_turns: b.max_turns }
    }
}

/// Compresses a window of history into a text summary.
pub trait Summarizer {
    fn summarize(&self, prompt: &str, previous: Option<&str>, window: &[Turn]) -> String;
}

/// Keeps the previous summary and a one-line digest of each turn, truncated to
/// `max_tokens` words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractiveSummarizer {
    pub max_tokens: usize,
    /// Words of each observation kept in its digest line.
    pub observation_words: usize,
}

impl Default for ExtractiveSummarizer {
    fn default() -> Self {
        Self { max_tokens: DEFAULT_SUMMARY_TOKENS, observation_words: 24 }
    }
}

impl Summarizer for ExtractiveSummarizer {
    fn summarize(&self, _prompt: &str, previous: Option<&str>, window: &[Turn]) -> String {
        let mut text = String::from("Summary of progress so far.");
        if let Some(p) = previous {
            text.push(' ');
            text.push_str(p.trim_start_matches("Summary of progress so far.").trim());
        }
        // Newest turns first so truncation drops the oldest detail.
        for t in window.iter().rev() {
            text.push_str(&format!(
                "\nstep {}: {} -> {}",
                t.index(),
                t.action().render(),
                truncate_words(t.observation(), self.observation_words)
            ));
        }
        truncate_words(&text, self.max_tokens).to_string()
    }
}

/// Runs an episode with the summary context manager.
pub fn run_summary(
    task: TaskInput<'_>,
    policy: &mut dyn Policy,
    env: &mut dyn ToolSession,
    config: &SummaryConfig,
    summarizer: &dyn Summarizer,
) -> Result<EpisodeOutcome, RuntimeError> {
    if config.max_sessions == 0 {
        return Err(RuntimeError::Budget(BudgetError("max_sessions")));
    }
    let budget = BudgetConfig { active_limit: config.active_limit, max_branches: 1, max_turns: config.max_turns };
    drive(task, policy, env, &budget, ContextManager::Summary { max_sessions: config.max_sessions, summarizer })
}
