use num_traits::Float;

use super::advantage::{compute_advantages, RewardedGroup};
use super::ClipConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport<F> {
    pub value: F,
    /// Per-token terms; exactly zero on masked-out tokens.
    pub terms: Vec<Vec<F>>,
    /// Σ|τ_i|, the length normalizer.
    pub normalizer: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ObjectiveError {
    #[error("expected log-probabilities for {expected} members, got {got}")]
    MemberCount { expected: usize, got: usize },
    #[error("member {member}: expected {expected} log-probabilities, got {got}")]
    Length { member: usize, expected: usize, got: usize },
    #[error("member {member}: missing {which} log-probability for generated token {token}")]
    Missing { member: usize, token: usize, which: &'static str },
    #[error("clip range must satisfy 0 < eps_low <= eps_high < 1")]
    Clip,
}

/// The clipped surrogate objective with token-level advantages, summed over
/// generated tokens and divided by the group's total token count.
///
/// `new` and `old` are per-token log-probabilities in the flat layout; entries
/// on observation tokens are ignored.
pub fn evaluate_objective<F: Float>(
    group: &RewardedGroup<F>,
    new: &[Vec<Option<F>>],
    old: &[Vec<Option<F>>],
    clip: &ClipConfig<F>,
) -> Result<ObjectiveReport<F>, ObjectiveError> {
    if !clip.is_valid() {
        return Err(ObjectiveError::Clip);
    }
    let g = group.members.len();
    for lp in [new, old] {
        if lp.len() != g {
            return Err(ObjectiveError::MemberCount { expected: g, got: lp.len() });
        }
    }
    let advantages = compute_advantages(group);
    let lo = F::one() - clip.eps_low;
    let hi = F::one() + clip.eps_high;
    let mut sum = F::zero();
    let mut terms = Vec::with_capacity(g);
    for (i, member) in group.members.iter().enumerate() {
        let n = member.mask.len();
        for lp in [&new[i], &old[i]] {
            if lp.len() != n {
                return Err(ObjectiveError::Length { member: i, expected: n, got: lp.len() });
            }
        }
        let mut row = vec![F::zero(); n];
        for t in 0..n {
            let Some(a) = advantages[i][t] else { continue };
            let nl = new[i][t].ok_or(ObjectiveError::Missing { member: i, token: t, which: "new" })?;
            let ol = old[i][t].ok_or(ObjectiveError::Missing { member: i, token: t, which: "old" })?;
            let r = (nl - ol).exp();
            let term = (r * a).min(r.max(lo).min(hi) * a);
            row[t] = term;
            sum = sum + term;
        }
        terms.push(row);
    }
    let normalizer = group.total_tokens();
    let value = if normalizer == 0 { F::zero() } else { sum / F::from(normalizer).expect("count fits") };
    Ok(ObjectiveReport { value, terms, normalizer })
}
