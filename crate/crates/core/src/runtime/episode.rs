//! The policy/environment loop shared by the folding, ReAct and summary runtimes.

use serde::{Deserialize, Serialize};

use super::budget::{BudgetConfig, BudgetError};
use super::cache::{cache_rollback, cache_step, CacheState};
use super::policy::{Policy, PolicyView};
use super::state::{
    failure_observation, handle_branch, handle_return, return_observation, AgentState, Mode, FORCED_RETURN_MESSAGE,
};
use super::{ToolOutcome, ToolSession};
use crate::baselines::Summarizer;
use crate::context::fold::{fold_unchecked, unfolded};
use crate::context::token::count_text_tokens;
use crate::context::{main_thread_tokens, ActionKind, TerminalStatus, TraceRecord, Trajectory, Turn, TurnStatus};

/// Task identity and prompt as seen by the runtime.
#[derive(Debug, Clone, Copy)]
pub struct TaskInput<'a> {
    pub id: &'a str,
    pub prompt: &'a str,
}

impl<'a> TaskInput<'a> {
    pub fn new(id: &'a str, prompt: &'a str) -> Self {
        Self { id, prompt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub finished: bool,
    pub terminal: TerminalStatus,
    pub turns: usize,
    /// Final main-thread length after folding.
    pub main_len: usize,
    pub branches: usize,
    pub tool_calls: usize,
    pub failed_calls: usize,
    /// Largest working context presented to the policy, prompt included.
    pub peak_context: usize,
    /// All tokens in the raw trajectory, generated and observed.
    pub total_tokens: usize,
    pub generated_tokens: usize,
    pub summary_sessions: usize,
    pub forced_returns: usize,
    pub cache: CacheState,
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    pub metrics: EpisodeMetrics,
    pub trace: Vec<TraceRecord>,
    /// Working-context length at every policy query, prompt included.
    pub query_lengths: Vec<usize>,
    pub prompt_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error("summary of {tokens} tokens does not fit the active limit of {limit}")]
    SummaryTooLong { tokens: usize, limit: usize },
}

pub(crate) enum ContextManager<'s> {
    Fold,
    Identity,
    Summary { max_sessions: usize, summarizer: &'s dyn Summarizer },
}

/// Runs one context-folding episode.
pub fn run_episode(
    task: TaskInput<'_>,
    policy: &mut dyn Policy,
    env: &mut dyn ToolSession,
    budget: &BudgetConfig,
) -> Result<EpisodeOutcome, RuntimeError> {
    drive(task, policy, env, budget, ContextManager::Fold)
}

struct Pending {
    turn: Turn,
    state: AgentState,
    cache: Option<CacheState>,
    finish: Option<String>,
    /// Context length once this turn is appended.
    context_after: usize,
}

fn record(turn: &Turn, thread: String, context: usize) -> TraceRecord {
    TraceRecord {
        step: turn.index(),
        thread,
        action: turn.action().label().to_string(),
        action_tokens: turn.action_tokens().len(),
        observation_tokens: turn.observation_tokens().len(),
        folded_context: context,
        failed: turn.failed(),
    }
}

fn thread_label(state: &AgentState) -> String {
    match state.mode {
        Mode::Planning => "main".to_string(),
        Mode::Execution { branch, .. } => format!("branch-{branch}"),
    }
}

pub(crate) fn drive(
    task: TaskInput<'_>,
    policy: &mut dyn Policy,
    env: &mut dyn ToolSession,
    budget: &BudgetConfig,
    manager: ContextManager<'_>,
) -> Result<EpisodeOutcome, RuntimeError> {
    budget.validate()?;
    let folding = matches!(manager, ContextManager::Fold);
    let ceiling = if folding { budget.total_ceiling() } else { usize::MAX };
    let limit = budget.active_limit;
    let prompt_tokens = count_text_tokens(task.prompt);

    let mut traj = Trajectory::new(task.id);
    let mut state = AgentState::default();
    let mut cache = CacheState::default();
    let mut summary: Option<String> = None;
    let mut summary_tokens = 0usize;
    let mut window_start = 0usize;
    let mut sessions = 0usize;
    let mut forced_returns = 0usize;
    let mut trace = Vec::new();
    let mut query_lengths = Vec::new();
    let mut total = 0usize;
    let mut last_failed = false;
    let mut answer = None;
    let mut terminal = TerminalStatus::StepLimit;

    for step in 1..=budget.max_turns {
        let window = &traj.turns()[window_start..];
        let context = if folding { fold_unchecked(task.id, window) } else { unfolded(task.id, window) };
        let len = prompt_tokens + summary_tokens + context.token_count();
        if len > limit {
            terminal = TerminalStatus::BudgetExhausted;
            break;
        }
        query_lengths.push(len);
        cache = cache_step(cache, len);
        let view = PolicyView {
            task_id: task.id,
            prompt: task.prompt,
            summary: summary.as_deref(),
            context: &context,
            state,
            step,
            context_tokens: len,
            last_failed,
        };
        let raw = policy.next_action(&view);
        drop(context);

        let pending = execute(raw, step, state, cache, len, folding, budget, env);
        let turn_tokens = pending.turn.token_count();
        if total + turn_tokens > ceiling {
            terminal = TerminalStatus::BudgetExhausted;
            break;
        }

        if pending.context_after > limit {
            match (&manager, state.mode) {
                (ContextManager::Fold, Mode::Execution { call_prefix, .. }) => {
                    let forced = Turn::new(
                        step,
                        ActionKind::ret(FORCED_RETURN_MESSAGE),
                        return_observation(FORCED_RETURN_MESSAGE),
                        TurnStatus::Forced,
                    );
                    let after = call_prefix + forced.observation_tokens().len();
                    if after > limit || total + forced.token_count() > ceiling {
                        terminal = TerminalStatus::BudgetExhausted;
                        break;
                    }
                    trace.push(record(&forced, thread_label(&state), after - prompt_tokens));
                    cache = cache_rollback(cache, call_prefix, 0);
                    state = AgentState { mode: Mode::Planning, ..state };
                    total += forced.token_count();
                    traj.push(forced).expect("forced return closes the open branch");
                    forced_returns += 1;
                    last_failed = true;
                    continue;
                }
                (ContextManager::Summary { max_sessions, summarizer }, _) if sessions < *max_sessions => {
                    sessions += 1;
                    let mut covered: Vec<Turn> = traj.turns()[window_start..].to_vec();
                    covered.push(pending.turn.clone());
                    let text = summarizer.summarize(task.prompt, summary.as_deref(), &covered);
                    let tokens = count_text_tokens(&text);
                    if tokens >= limit {
                        return Err(RuntimeError::SummaryTooLong { tokens, limit });
                    }
                    summary = Some(text);
                    summary_tokens = tokens;
                    trace.push(record(&pending.turn, thread_label(&state), summary_tokens));
                    last_failed = pending.turn.failed();
                    total += turn_tokens;
                    state = pending.state;
                    traj.push(pending.turn).expect("summary runtime never opens branches");
                    window_start = traj.len();
                    if let Some(a) = pending.finish {
                        answer = Some(a);
                        terminal = TerminalStatus::Finished;
                        break;
                    }
                    if prompt_tokens + summary_tokens > limit {
                        terminal = TerminalStatus::BudgetExhausted;
                        break;
                    }
                    continue;
                }
                _ => {
                    terminal = TerminalStatus::BudgetExhausted;
                    break;
                }
            }
        }

        let thread = match (state.mode, pending.state.mode) {
            (Mode::Execution { branch, .. }, _) => format!("branch-{branch}"),
            _ => "main".to_string(),
        };
        trace.push(record(&pending.turn, thread, pending.context_after - prompt_tokens));
        state = pending.state;
        if let Some(c) = pending.cache {
            cache = c;
        }
        last_failed = pending.turn.failed();
        total += turn_tokens;
        traj.push(pending.turn).expect("the state machine only admits well-formed branch structure");
        if let Some(a) = pending.finish {
            answer = Some(a);
            terminal = TerminalStatus::Finished;
            break;
        }
    }

    traj.set_terminal(terminal);
    let turns = traj.turns();
    let metrics = EpisodeMetrics {
        finished: terminal == TerminalStatus::Finished,
        terminal,
        turns: turns.len(),
        main_len: main_thread_tokens(turns).expect("trajectory is well-formed"),
        branches: state.branches_used,
        tool_calls: turns.iter().filter(|t| t.action().is_tool_call() && t.status() != TurnStatus::Forced).count(),
        failed_calls: turns.iter().filter(|t| t.failed()).count(),
        peak_context: query_lengths.iter().copied().max().unwrap_or(0),
        total_tokens: traj.token_count(),
        generated_tokens: traj.generated_token_count(),
        summary_sessions: sessions,
        forced_returns,
        cache,
        answer,
    };
    Ok(EpisodeOutcome { trajectory: traj, metrics, trace, query_lengths, prompt_tokens })
}

#[allow(clippy::too_many_arguments)]
fn execute(
    raw: ActionKind,
    step: usize,
    state: AgentState,
    cache: CacheState,
    len: usize,
    folding: bool,
    budget: &BudgetConfig,
    env: &mut dyn ToolSession,
) -> Pending {
    let fallback = raw.clone();
    let failed = |action: ActionKind, reason: &str| {
        let turn = Turn::new(step, action, failure_observation(reason), TurnStatus::Failed);
        let context_after = len + turn.token_count();
        Pending { turn, state, cache: None, finish: None, context_after }
    };
    let action = match raw.normalize() {
        Ok(a) => a,
        Err(e) => return failed(fallback, &e.to_string()),
    };
    let generated = count_text_tokens(&action.render());
    match &action {
        ActionKind::Branch { .. } | ActionKind::Return { .. } if !folding => {
            let reason = format!("unknown tool `{}`", action.label());
            failed(action, &reason)
        }
        ActionKind::Branch { .. } => {
            let t = handle_branch(state, budget.max_branches, len + generated);
            let status = if t.failed { TurnStatus::Failed } else { TurnStatus::Ok };
            let turn = Turn::new(step, action, t.observation, status);
            let context_after = len + turn.token_count();
            Pending { turn, state: t.state, cache: None, finish: None, context_after }
        }
        ActionKind::Return { message } => {
            let (t, c) = handle_return(state, message, cache, generated);
            let call_prefix = match state.mode {
                Mode::Execution { call_prefix, .. } => Some(call_prefix),
                Mode::Planning => None,
            };
            let status = if t.failed { TurnStatus::Failed } else { TurnStatus::Ok };
            let turn = Turn::new(step, action, t.observation, status);
            let context_after = match (t.failed, call_prefix) {
                (false, Some(p)) => p + turn.observation_tokens().len(),
                _ => len + turn.token_count(),
            };
            let cache = (!t.failed).then_some(c);
            Pending { turn, state: t.state, cache, finish: None, context_after }
        }
        ActionKind::Finish { answer, .. } => {
            if !state.is_planning() {
                return failed(action, "finish is not available inside a branch; call return first");
            }
            let finish = Some(answer.clone());
            let turn = Turn::ok(step, action, "");
            let context_after = len + turn.token_count();
            Pending { turn, state, cache: None, finish, context_after }
        }
        ActionKind::ToolCall { name, arguments } => {
            let ToolOutcome { observation, failed: call_failed } = env.call(name, arguments);
            let status = if call_failed { TurnStatus::Failed } else { TurnStatus::Ok };
            let observation = if call_failed { failure_observation(&observation) } else { observation };
            let turn = Turn::new(step, action, observation, status);
            let context_after = len + turn.token_count();
            Pending { turn, state, cache: None, finish: None, context_after }
        }
        ActionKind::Reason { .. } => {
            let turn = Turn::ok(step, action, "");
            let context_after = len + turn.token_count();
            Pending { turn, state, cache: None, finish: None, context_after }
        }
    }
}
