use crate::context::{ActionKind, FoldedContext, Token};

use super::state::AgentState;

/// Everything a policy may condition on at one step.
#[derive(Debug, Clone)]
pub struct PolicyView<'a> {
    pub task_id: &'a str,
    pub prompt: &'a str,
    /// Summary text replacing earlier history (summary runtime only).
    pub summary: Option<&'a str>,
    pub context: &'a FoldedContext<'a>,
    pub state: AgentState,
    /// 1-based index of the turn about to be generated.
    pub step: usize,
    /// Working-context length including prompt and summary.
    pub context_tokens: usize,
    pub last_failed: bool,
}

/// The acting policy. Implementations must be deterministic given their seed.
pub trait Policy {
    fn next_action(&mut self, view: &PolicyView<'_>) -> ActionKind;

    /// Per-token log-probabilities of `action` given `context`. The default is a
    /// deterministic pseudo-score, enough to exercise the training pipeline.
    fn token_logprobs(&self, context: &[Token], action: &[Token]) -> Vec<f64> {
        let ids = |ts: &[Token]| ts.iter().map(Token::id).collect::<Vec<_>>();
        pseudo_logprobs(0, &ids(context), &ids(action))
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn next_action(&mut self, view: &PolicyView<'_>) -> ActionKind {
        (**self).next_action(view)
    }

    fn token_logprobs(&self, context: &[Token], action: &[Token]) -> Vec<f64> {
        (**self).token_logprobs(context, action)
    }
}

/// Seeded log-probabilities in `[-4, 0)` derived from the context length, the
/// last context token and each target token.
pub fn pseudo_logprobs(seed: u64, context: &[u32], action: &[u32]) -> Vec<f64> {
    let last = context.last().map_or(0, |&t| u64::from(t));
    let base = seed ^ (context.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ last.rotate_left(17);
    action
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut h = base ^ (u64::from(*t) << 1) ^ (i as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            h ^= h >> 31;
            h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
            h ^= h >> 29;
            -4.0 * ((h >> 11) as f64 / (1u64 << 53) as f64) - f64::EPSILON
        })
        .collect()
}

/// Replays a fixed list of actions, then finishes with an empty answer.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    actions: std::collections::VecDeque<ActionKind>,
}

impl ScriptedPolicy {
    pub fn new(actions: impl IntoIterator<Item = ActionKind>) -> Self {
        Self { actions: actions.into_iter().collect() }
    }
}

impl Policy for ScriptedPolicy {
    fn next_action(&mut self, _view: &PolicyView<'_>) -> ActionKind {
        self.actions.pop_front().unwrap_or_else(|| ActionKind::finish("", "script exhausted"))
    }
}
