use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{lit, token_layout, FAILURE_PENALTY, OUT_OF_SCOPE_PENALTY, UNFOLDED_PENALTY, UNFOLDED_THRESHOLD};
use crate::context::{main_thread_tokens, threads, ActionKind, Thread, Trajectory};
use crate::env::judge::ScopeJudge;
use crate::runtime::BudgetConfig;

/// How often each penalty fired while labeling one trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltyCounts {
    pub unfolded_tokens: usize,
    pub out_of_scope_branches: usize,
    pub out_of_scope_tokens: usize,
    pub failed_turns: usize,
    pub failed_tokens: usize,
}

impl std::ops::AddAssign for PenaltyCounts {
    fn add_assign(&mut self, o: Self) {
        self.unfolded_tokens += o.unfolded_tokens;
        self.out_of_scope_branches += o.out_of_scope_branches;
        self.out_of_scope_tokens += o.out_of_scope_tokens;
        self.failed_turns += o.failed_turns;
        self.failed_tokens += o.failed_tokens;
    }
}

/// Token-level process rewards `Q`. Applicable penalties add up; observation
/// tokens always carry 0.
pub fn label_process_rewards<F: Float>(traj: &Trajectory, budget: &BudgetConfig, judge: &dyn ScopeJudge) -> Vec<F> {
    label_with_counts(traj, budget, judge).0
}

pub fn label_with_counts<F: Float>(
    traj: &Trajectory,
    budget: &BudgetConfig,
    judge: &dyn ScopeJudge,
) -> (Vec<F>, PenaltyCounts) {
    let turns = traj.turns();
    let (offsets, len) = token_layout(turns);
    let mut q = vec![F::zero(); len];
    let mut counts = PenaltyCounts::default();
    let penalize = |q: &mut [F], i: usize, amount: f64| -> usize {
        let (a, o) = offsets[i];
        for v in &mut q[a..o] {
            *v = *v + lit(amount);
        }
        o - a
    };

    let th = threads(turns).expect("trajectories are validated on construction");
    let main_len = main_thread_tokens(turns).expect("trajectories are validated on construction");
    if main_len as f64 > UNFOLDED_THRESHOLD * budget.active_limit as f64 {
        for (i, t) in turns.iter().enumerate() {
            if th[i] == Thread::Main && !t.action().is_branch() {
                counts.unfolded_tokens += penalize(&mut q, i, UNFOLDED_PENALTY);
            }
        }
    }

    for span in traj.spans().iter().filter(|s| s.close > s.open) {
        let prompt = match turns[span.open - 1].action() {
            ActionKind::Branch { prompt, .. } => prompt.as_str(),
            _ => "",
        };
        let interior = &turns[span.open..span.close];
        let message = match turns[span.close - 1].action() {
            ActionKind::Return { message } => message.as_str(),
            _ => "",
        };
        if !judge.in_scope(prompt, interior, message) {
            counts.out_of_scope_branches += 1;
            for i in span.open..span.close {
                counts.out_of_scope_tokens += penalize(&mut q, i, OUT_OF_SCOPE_PENALTY);
            }
        }
    }

    for (i, t) in turns.iter().enumerate() {
        if t.failed() {
            counts.failed_turns += 1;
            counts.failed_tokens += penalize(&mut q, i, FAILURE_PENALTY);
        }
    }
    (q, counts)
}
