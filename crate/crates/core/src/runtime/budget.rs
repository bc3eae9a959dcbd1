use serde::{Deserialize, Serialize};

pub const DEFAULT_ACTIVE_LIMIT: usize = 32_768;
pub const DEFAULT_MAX_BRANCHES: usize = 10;
pub const DEFAULT_MAX_TURNS: usize = 256;

/// Token and step limits for one episode.
///
/// `max_branches = usize::MAX` means unlimited branching; the total ceiling then
/// saturates and never binds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub active_limit: usize,
    pub max_branches: usize,
    pub max_turns: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self { active_limit: DEFAULT_ACTIVE_LIMIT, max_branches: DEFAULT_MAX_BRANCHES, max_turns: DEFAULT_MAX_TURNS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid budget: {0} must be positive")]
pub struct BudgetError(pub &'static str);

impl BudgetConfig {
    pub fn new(active_limit: usize, max_branches: usize) -> Self {
        Self { active_limit, max_branches, ..Self::default() }
    }

    pub fn unlimited_branches(active_limit: usize) -> Self {
        Self::new(active_limit, usize::MAX)
    }

    /// Ceiling on total tokens across the episode: active limit times branch cap.
    pub fn total_ceiling(&self) -> usize {
        self.active_limit.saturating_mul(self.max_branches)
    }

    pub fn validate(&self) -> Result<(), BudgetError> {
        if self.active_limit == 0 {
            return Err(BudgetError("active_limit"));
        }
        if self.max_branches == 0 {
            return Err(BudgetError("max_branches"));
        }
        if self.max_turns == 0 {
            return Err(BudgetError("max_turns"));
        }
        Ok(())
    }
}
