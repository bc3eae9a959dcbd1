//! Context folding for long-horizon agents: the fold operator, a branch/return
//! runtime with budget and KV-cache accounting, comparison baselines, a synthetic
//! research environment, FoldGRPO training signals and a rollout scheduler.

pub mod baselines;
pub mod context;
pub mod env;
pub mod grpo;
pub mod harness;
pub mod policies;
pub mod runtime;
pub mod scheduler;

/// Default scalar for training signals.
pub type Scalar = f64;
pub type ClipConfig = grpo::ClipConfig<Scalar>;
pub type RewardedGroup = grpo::RewardedGroup<Scalar>;
pub type GroupMember = grpo::GroupMember<Scalar>;
pub type TrainingExample = grpo::TrainingExample<Scalar>;
pub type ObjectiveReport = grpo::ObjectiveReport<Scalar>;
