use serde::{Deserialize, Serialize};

use super::action::ActionKind;
use super::token::{tokenize, Provenance, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TurnStatus {
    #[default]
    Ok,
    /// The tool call was rejected or errored; the observation explains why.
    Failed,
    /// Inserted by the runtime rather than generated by the policy.
    Forced,
}

/// One step `(a_i, o_i)` of an interaction history.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    index: usize,
    action: ActionKind,
    action_tokens: Vec<Token>,
    observation: String,
    observation_tokens: Vec<Token>,
    status: TurnStatus,
    sealed: bool,
}

#[derive(Serialize, Deserialize)]
struct TurnRecord {
    index: usize,
    action: ActionKind,
    observation: String,
    #[serde(default)]
    status: TurnStatus,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    sealed: bool,
}

impl Turn {
    pub fn new(index: usize, action: ActionKind, observation: impl Into<String>, status: TurnStatus) -> Self {
        let observation = observation.into();
        let action_tokens =
            if status == TurnStatus::Forced { Vec::new() } else { tokenize(&action.render(), Provenance::Generated) };
        let observation_tokens = tokenize(&observation, Provenance::Observation);
        Self { index, action, action_tokens, observation, observation_tokens, status, sealed: false }
    }

    pub fn ok(index: usize, action: ActionKind, observation: impl Into<String>) -> Self {
        Self::new(index, action, observation, TurnStatus::Ok)
    }

    /// A branch-call turn whose observation is already its branch's return message,
    /// i.e. a folded branch re-read as a history.
    pub fn sealed_branch(index: usize, action: ActionKind, return_observation: impl Into<String>) -> Self {
        let mut turn = Self::ok(index, action, return_observation);
        turn.sealed = turn.action.is_branch();
        turn
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub(crate) fn set_index(&mut self, index: usize) {
        self.index = index;
    }

    pub fn action(&self) -> &ActionKind {
        &self.action
    }

    pub fn action_tokens(&self) -> &[Token] {
        &self.action_tokens
    }

    pub fn observation(&self) -> &str {
        &self.observation
    }

    pub fn observation_tokens(&self) -> &[Token] {
        &self.observation_tokens
    }

    pub fn status(&self) -> TurnStatus {
        self.status
    }

    pub fn failed(&self) -> bool {
        self.status == TurnStatus::Failed
    }

    pub fn sealed(&self) -> bool {
        self.sealed
    }

    pub fn token_count(&self) -> usize {
        self.action_tokens.len() + self.observation_tokens.len()
    }

    /// A branch call the runtime accepted (failed attempts never open a branch).
    pub fn opens_branch(&self) -> bool {
        self.action.is_branch() && self.status != TurnStatus::Failed
    }

    pub fn closes_branch(&self) -> bool {
        self.action.is_return() && self.status != TurnStatus::Failed
    }
}

impl From<TurnRecord> for Turn {
    fn from(r: TurnRecord) -> Self {
        let mut turn = Turn::new(r.index, r.action, r.observation, r.status);
        turn.sealed = r.sealed && turn.action.is_branch();
        turn
    }
}

impl Serialize for Turn {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TurnRecord {
            index: self.index,
            action: self.action.clone(),
            observation: self.observation.clone(),
            status: self.status,
            sealed: self.sealed,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Turn {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        TurnRecord::deserialize(deserializer).map(Turn::from)
    }
}
