use num_traits::Float;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::labels::{label_with_counts, PenaltyCounts};
use super::llm_mask;
use crate::context::Trajectory;
use crate::env::judge::ScopeJudge;
use crate::runtime::BudgetConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Serialize + DeserializeOwned + PartialEq + Clone")]
pub struct GroupMember<F> {
    pub trajectory: Trajectory,
    /// Outcome reward in {0, 1}.
    pub reward: u8,
    #[serde(with = "super::runs")]
    pub q: Vec<F>,
    #[serde(with = "super::runs")]
    pub mask: Vec<bool>,
    /// `None` on masked-out tokens.
    #[serde(with = "super::runs")]
    pub advantages: Vec<Option<F>>,
    pub penalties: PenaltyCounts,
}

/// G rollouts of one prompt with their rewards, labels and advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Serialize + DeserializeOwned + PartialEq + Clone")]
pub struct RewardedGroup<F> {
    pub task_id: String,
    pub members: Vec<GroupMember<F>>,
}

impl<F: Float> RewardedGroup<F> {
    /// Labels every graded trajectory and computes the group's advantages.
    pub fn assemble(
        task_id: impl Into<String>,
        graded: Vec<(Trajectory, u8)>,
        budget: &BudgetConfig,
        judge: &dyn ScopeJudge,
    ) -> Self {
        let members = graded
            .into_iter()
            .map(|(trajectory, reward)| {
                let (q, penalties) = label_with_counts(&trajectory, budget, judge);
                let mask = llm_mask(trajectory.turns());
                GroupMember { advantages: vec![None; q.len()], trajectory, reward, q, mask, penalties }
            })
            .collect();
        let mut group = Self { task_id: task_id.into(), members };
        let adv = compute_advantages(&group);
        for (m, a) in group.members.iter_mut().zip(adv) {
            m.advantages = a;
        }
        group
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Σ|τ_i| over the group: every token, generated or observed.
    pub fn total_tokens(&self) -> usize {
        self.members.iter().map(|m| m.q.len()).sum()
    }

    /// Mean and population standard deviation of the outcome rewards.
    pub fn reward_stats(&self) -> (F, F) {
        let g = F::from(self.members.len()).expect("group size fits");
        if self.members.is_empty() {
            return (F::zero(), F::zero());
        }
        let r = |m: &GroupMember<F>| F::from(m.reward).expect("reward fits");
        let mean = self.members.iter().map(r).fold(F::zero(), |a, b| a + b) / g;
        let var = self.members.iter().map(|m| (r(m) - mean).powi(2)).fold(F::zero(), |a, b| a + b) / g;
        (mean, var.sqrt())
    }

    pub fn is_degenerate(&self) -> bool {
        self.reward_stats().1 == F::zero()
    }

    pub fn has_nonzero_advantage(&self) -> bool {
        self.members.iter().flat_map(|m| m.advantages.iter().flatten()).any(|a| *a != F::zero())
    }
}

/// Per-token advantages `(clip(R + Q, 0, 1) - mean R) / std R`. Masked-out
/// tokens get `None`; a group whose rewards are all equal gets zeros.
pub fn compute_advantages<F: Float>(group: &RewardedGroup<F>) -> Vec<Vec<Option<F>>> {
    let (mean, std) = group.reward_stats();
    group
        .members
        .iter()
        .map(|m| {
            let r = F::from(m.reward).expect("reward fits");
            m.q.iter()
                .zip(&m.mask)
                .map(|(&q, &llm)| {
                    llm.then(|| {
                        if std == F::zero() {
                            F::zero()
                        } else {
                            ((r + q).max(F::zero()).min(F::one()) - mean) / std
                        }
                    })
                })
                .collect()
        })
        .collect()
}
