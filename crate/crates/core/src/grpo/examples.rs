use num_traits::Float;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::advantage::{compute_advantages, RewardedGroup};
use super::token_layout;
use crate::context::{threads, Thread, Token, Turn, Violation};
use crate::runtime::policy::pseudo_logprobs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    Action,
    Observation,
}

/// A run of tokens from one turn inside a training sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Serialize + DeserializeOwned + PartialEq + Clone")]
pub struct Segment<F> {
    pub turn: usize,
    pub part: Part,
    pub tokens: Vec<u32>,
    pub trainable: bool,
    /// Per-token values for trainable segments; empty otherwise.
    #[serde(with = "super::runs")]
    pub advantages: Vec<Option<F>>,
    pub old_logprobs: Vec<F>,
}

/// One causally conditioned sequence: the folded main thread, or one branch
/// with the folded main context up to its call as a frozen prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Serialize + DeserializeOwned + PartialEq + Clone")]
pub struct TrainingExample<F> {
    pub task_id: String,
    pub member: usize,
    pub thread: String,
    pub segments: Vec<Segment<F>>,
}

impl<F> TrainingExample<F> {
    /// Generated tokens this example trains on.
    pub fn llm_token_count(&self) -> usize {
        self.segments.iter().filter(|s| s.trainable).map(|s| s.tokens.len()).sum()
    }

    pub fn token_count(&self) -> usize {
        self.segments.iter().map(|s| s.tokens.len()).sum()
    }

    /// Turns whose action tokens this example trains on.
    pub fn target_turns(&self) -> Vec<usize> {
        self.segments.iter().filter(|s| s.trainable).map(|s| s.turn).collect()
    }

    /// Token ids that condition the action of `turn`, or `None` if this example
    /// does not train on that turn.
    pub fn context_before(&self, turn: usize) -> Option<Vec<u32>> {
        let at = self.segments.iter().position(|s| s.trainable && s.turn == turn)?;
        Some(self.segments[..at].iter().flat_map(|s| s.tokens.iter().copied()).collect())
    }
}

/// Source of old-policy log-probabilities for a target span given its context.
pub trait LogprobSupplier<F> {
    fn logprobs(&self, context: &[u32], target: &[u32]) -> Vec<F>;
}

/// Deterministic stand-in scorer.
#[derive(Debug, Clone, Copy, Default)]
pub struct PseudoLogprobs {
    pub seed: u64,
}

impl<F: Float> LogprobSupplier<F> for PseudoLogprobs {
    fn logprobs(&self, context: &[u32], target: &[u32]) -> Vec<F> {
        pseudo_logprobs(self.seed, context, target).into_iter().map(|x| F::from(x).expect("finite")).collect()
    }
}

fn ids(tokens: &[Token]) -> Vec<u32> {
    tokens.iter().map(Token::id).collect()
}

fn segment<F>(turn: &Turn, part: Part) -> Option<Segment<F>> {
    let tokens = match part {
        Part::Action => ids(turn.action_tokens()),
        Part::Observation => ids(turn.observation_tokens()),
    };
    (!tokens.is_empty()).then(|| Segment {
        turn: turn.index(),
        part,
        tokens,
        trainable: part == Part::Action,
        advantages: Vec::new(),
        old_logprobs: Vec::new(),
    })
}

fn frozen<F>(s: &Segment<F>) -> Segment<F> {
    Segment {
        turn: s.turn,
        part: s.part,
        tokens: s.tokens.clone(),
        trainable: false,
        advantages: Vec::new(),
        old_logprobs: Vec::new(),
    }
}

type ThreadSequences<F> = Vec<(Thread, Vec<Segment<F>>)>;

/// Sequences of one trajectory, before advantages and log-probabilities are
/// attached: main thread first, then branches in order.
fn sequences<F>(turns: &[Turn]) -> Result<ThreadSequences<F>, Violation> {
    let th = threads(turns)?;
    // Close position (0-based) of each branch opened at position k.
    let mut close_of = vec![None; turns.len()];
    let mut open: Option<usize> = None;
    for (i, t) in turns.iter().enumerate() {
        if t.opens_branch() && !t.sealed() && th[i] == Thread::Main {
            open = Some(i);
        } else if t.closes_branch() {
            if let Some(k) = open.take() {
                close_of[k] = Some(i);
            }
        }
    }

    let mut main: Vec<Segment<F>> = Vec::new();
    let mut calls: Vec<(usize, usize)> = Vec::new(); // (call position, main segment count through a_k)
    for (i, t) in turns.iter().enumerate() {
        if th[i] != Thread::Main {
            continue;
        }
        main.extend(segment(t, Part::Action));
        if t.opens_branch() && !t.sealed() {
            calls.push((i, main.len()));
            if let Some(m) = close_of[i] {
                main.extend(segment(&turns[m], Part::Observation));
            }
        } else {
            main.extend(segment(t, Part::Observation));
        }
    }

    let mut out = vec![(Thread::Main, Vec::new())];
    for &(k, prefix_len) in &calls {
        let mut segs: Vec<Segment<F>> = main[..prefix_len].iter().map(frozen).collect();
        segs.extend(segment(&turns[k], Part::Observation));
        let end = close_of[k].map_or(turns.len(), |m| m + 1);
        let branch = match th.get(k + 1) {
            Some(b @ Thread::Branch(_)) => *b,
            _ => Thread::Branch(0),
        };
        for (j, t) in turns.iter().enumerate().take(end).skip(k + 1) {
            segs.extend(segment(t, Part::Action));
            if Some(j) != close_of[k] {
                segs.extend(segment(t, Part::Observation));
            }
        }
        out.push((branch, segs));
    }
    out[0].1 = main;
    Ok(out)
}

/// Splits every member trajectory into its main-thread sequence and one
/// sequence per branch, attaching advantages and old-policy log-probabilities
/// to the generated spans. Generated tokens are conserved exactly.
pub fn emit_training_examples<F: Float>(
    group: &RewardedGroup<F>,
    supplier: &dyn LogprobSupplier<F>,
) -> Result<Vec<TrainingExample<F>>, Violation> {
    let advantages = compute_advantages(group);
    let mut out = Vec::new();
    for (member, m) in group.members.iter().enumerate() {
        let turns = m.trajectory.turns();
        let (offsets, _) = token_layout(turns);
        for (thread, mut segments) in sequences::<F>(turns)? {
            let mut context: Vec<u32> = Vec::new();
            for s in &mut segments {
                if s.trainable {
                    let start = offsets[s.turn - 1].0;
                    s.advantages = advantages[member][start..start + s.tokens.len()].to_vec();
                    s.old_logprobs = supplier.logprobs(&context, &s.tokens);
                }
                context.extend_from_slice(&s.tokens);
            }
            out.push(TrainingExample { task_id: group.task_id.clone(), member, thread: thread.to_string(), segments });
        }
    }
    Ok(out)
}
