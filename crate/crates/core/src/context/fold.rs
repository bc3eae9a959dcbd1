//! The fold operator: maps a raw history prefix to the context the policy sees.
//!
//! Every closed branch `(k, m)` collapses to the branch call `a_k` followed by the
//! return observation `o_m`; everything from `o_k` through `a_m` is dropped. A
//! branch that is still open at the end of the prefix is kept verbatim.

use super::trajectory::{threads, validate_structure, Thread, Trajectory, Violation};
use super::turn::Turn;

/// One retained `(action, observation)` pair. For ordinary turns both halves come
/// from the same turn; for a folded branch the observation comes from the return turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldedItem<'a> {
    pub action: &'a Turn,
    pub observation: &'a Turn,
}

impl<'a> FoldedItem<'a> {
    pub fn is_folded_branch(&self) -> bool {
        !std::ptr::eq(self.action, self.observation) || self.action.sealed()
    }

    pub fn token_count(&self) -> usize {
        self.action.action_tokens().len() + self.observation.observation_tokens().len()
    }

    /// `a{i},o{j}` label of the pair, by original turn index.
    pub fn label(&self) -> String {
        format!("a{},o{}", self.action.index(), self.observation.index())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldedContext<'a> {
    pub task_id: &'a str,
    pub items: Vec<FoldedItem<'a>>,
}

impl<'a> FoldedContext<'a> {
    pub fn token_count(&self) -> usize {
        self.items.iter().map(FoldedItem::token_count).sum()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Comma-separated `a{i},o{j}` labels, e.g. `a1,o1,a2,o4`.
    pub fn labels(&self) -> String {
        self.items.iter().map(FoldedItem::label).collect::<Vec<_>>().join(",")
    }

    pub fn last_observation(&self) -> Option<&'a str> {
        self.items.last().map(|i| i.observation.observation())
    }

    /// Re-reads the folded context as a history: each folded branch becomes a
    /// sealed branch turn carrying its return observation.
    pub fn to_history(&self) -> Vec<Turn> {
        self.items
            .iter()
            .enumerate()
            .map(|(pos, item)| {
                if item.is_folded_branch() {
                    Turn::sealed_branch(pos + 1, item.action.action().clone(), item.observation.observation())
                } else {
                    let mut t = item.action.clone();
                    t.set_index(pos + 1);
                    t
                }
            })
            .collect()
    }
}

/// Folds a history prefix. The history must satisfy the single-branch discipline.
pub fn fold<'a>(task_id: &'a str, history: &'a [Turn]) -> Result<FoldedContext<'a>, Violation> {
    validate_structure(history)?;
    Ok(fold_unchecked(task_id, history))
}

pub(crate) fn fold_unchecked<'a>(task_id: &'a str, history: &'a [Turn]) -> FoldedContext<'a> {
    let mut items: Vec<FoldedItem<'a>> = Vec::with_capacity(history.len());
    // Position in `items` of the call of the currently open branch.
    let mut open_at: Option<usize> = None;
    for turn in history {
        if turn.closes_branch() {
            if let Some(call) = open_at.take() {
                items.truncate(call + 1);
                items[call].observation = turn;
                continue;
            }
        }
        if turn.opens_branch() && !turn.sealed() {
            open_at = Some(items.len());
        }
        items.push(FoldedItem { action: turn, observation: turn });
    }
    FoldedContext { task_id, items }
}

/// The identity context manager: every turn verbatim.
pub fn unfolded<'a>(task_id: &'a str, history: &'a [Turn]) -> FoldedContext<'a> {
    FoldedContext { task_id, items: history.iter().map(|t| FoldedItem { action: t, observation: t }).collect() }
}

impl Trajectory {
    pub fn fold(&self) -> FoldedContext<'_> {
        fold_unchecked(self.task_id(), self.turns())
    }

    /// Folded context `F(tau_{<i})` seen when generating turn `i` (1-based).
    pub fn fold_before(&self, i: usize) -> FoldedContext<'_> {
        let end = i.saturating_sub(1).min(self.len());
        fold_unchecked(self.task_id(), &self.turns()[..end])
    }
}

/// Anything whose simulated token length can be counted.
pub trait TokenCount {
    fn count_tokens(&self) -> usize;
}

impl TokenCount for [Turn] {
    fn count_tokens(&self) -> usize {
        self.iter().map(Turn::token_count).sum()
    }
}

impl TokenCount for Vec<Turn> {
    fn count_tokens(&self) -> usize {
        self.as_slice().count_tokens()
    }
}

impl TokenCount for Trajectory {
    fn count_tokens(&self) -> usize {
        self.token_count()
    }
}

impl TokenCount for FoldedContext<'_> {
    fn count_tokens(&self) -> usize {
        self.token_count()
    }
}

pub fn count_tokens<C: TokenCount + ?Sized>(context: &C) -> usize {
    context.count_tokens()
}

/// Length of the main thread after folding: every main-thread turn plus each
/// branch call with its return observation. An unclosed branch contributes only
/// its call action.
pub fn main_thread_tokens(history: &[Turn]) -> Result<usize, Violation> {
    let th = threads(history)?;
    let mut total = 0;
    for (turn, thread) in history.iter().zip(&th) {
        match thread {
            Thread::Main if turn.opens_branch() && !turn.sealed() => {
                total += turn.action_tokens().len();
            }
            Thread::Main => total += turn.token_count(),
            Thread::Branch(_) if turn.closes_branch() => {
                total += turn.observation_tokens().len();
            }
            Thread::Branch(_) => {}
        }
    }
    Ok(total)
}
