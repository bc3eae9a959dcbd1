use std::fmt;

use serde::{Deserialize, Serialize};

use super::turn::Turn;

pub type BranchId = u32;

/// A closed branch: the branch call at `open` and its return at `close` (1-based).
/// A sealed branch turn yields `open == close`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSpan {
    pub open: usize,
    pub close: usize,
    pub branch_id: BranchId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenBranch {
    pub open: usize,
    pub branch_id: BranchId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Thread {
    Main,
    Branch(BranchId),
}

impl fmt::Display for Thread {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Thread::Main => f.write_str("main"),
            Thread::Branch(id) => write!(f, "branch-{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// A branch was opened while another branch is still open.
    NestedBranch,
    UnmatchedReturn,
    /// An already-folded branch appears inside an open branch.
    BranchInsideBranch,
    /// Records of two different branches interleave without a return (trace files only).
    MultipleOpenBranches,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::NestedBranch => "nested-branch",
            ViolationKind::UnmatchedReturn => "unmatched-return",
            ViolationKind::BranchInsideBranch => "branch-inside-branch",
            ViolationKind::MultipleOpenBranches => "multiple-open-branches",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("structural error at turn {index}: {kind}")]
pub struct Violation {
    pub kind: ViolationKind,
    pub index: usize,
}

/// Branch structure of a history, derived from its accepted branch/return actions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpanSet {
    pub closed: Vec<BranchSpan>,
    pub open: Option<OpenBranch>,
    next_id: BranchId,
}

impl SpanSet {
    pub fn new() -> Self {
        Self { closed: Vec::new(), open: None, next_id: 1 }
    }

    /// Folds one more turn into the structure. `position` is the turn's 1-based
    /// position in the history.
    pub fn observe(&mut self, position: usize, turn: &Turn) -> Result<(), Violation> {
        if turn.opens_branch() {
            if let Some(_open) = self.open {
                let kind = if turn.sealed() { ViolationKind::BranchInsideBranch } else { ViolationKind::NestedBranch };
                return Err(Violation { kind, index: position });
            }
            let branch_id = self.next_id;
            self.next_id += 1;
            if turn.sealed() {
                self.closed.push(BranchSpan { open: position, close: position, branch_id });
            } else {
                self.open = Some(OpenBranch { open: position, branch_id });
            }
        } else if turn.closes_branch() {
            match self.open.take() {
                Some(open) => {
                    self.closed.push(BranchSpan { open: open.open, close: position, branch_id: open.branch_id })
                }
                None => return Err(Violation { kind: ViolationKind::UnmatchedReturn, index: position }),
            }
        }
        Ok(())
    }

    pub fn branches_opened(&self) -> usize {
        (self.next_id - 1) as usize
    }
}

/// Derives branch spans from a history, failing at the first violation.
pub fn derive_spans(turns: &[Turn]) -> Result<SpanSet, Violation> {
    let mut spans = SpanSet::new();
    for (pos, turn) in turns.iter().enumerate() {
        spans.observe(pos + 1, turn)?;
    }
    Ok(spans)
}

/// Checks the single-active-branch discipline. Violations are returned, never thrown.
pub fn validate_structure(turns: &[Turn]) -> Result<(), Violation> {
    derive_spans(turns).map(|_| ())
}

/// Thread membership of every turn. A branch-call turn belongs to the main thread;
/// the turns after it up to and including the return belong to the branch.
pub fn threads(turns: &[Turn]) -> Result<Vec<Thread>, Violation> {
    let mut spans = SpanSet::new();
    let mut out = Vec::with_capacity(turns.len());
    for (pos, turn) in turns.iter().enumerate() {
        let before = spans.open;
        spans.observe(pos + 1, turn)?;
        out.push(match before {
            Some(open) => Thread::Branch(open.branch_id),
            None => Thread::Main,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalStatus {
    Finished,
    BudgetExhausted,
    StepLimit,
    Error,
    /// Still being generated.
    #[default]
    Running,
}

/// A task's interaction history with its branch structure kept up to date on
/// every append.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    task_id: String,
    turns: Vec<Turn>,
    spans: SpanSet,
    terminal: TerminalStatus,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    task_id: String,
    terminal: TerminalStatus,
    turns: Vec<Turn>,
}

impl Trajectory {
    pub fn new(task_id: impl Into<String>) -> Self {
        Self { task_id: task_id.into(), turns: Vec::new(), spans: SpanSet::new(), terminal: TerminalStatus::Running }
    }

    pub fn from_turns(task_id: impl Into<String>, turns: Vec<Turn>) -> Result<Self, Violation> {
        let mut t = Self::new(task_id);
        for turn in turns {
            t.push(turn)?;
        }
        Ok(t)
    }

    /// Appends a turn, renumbering it to the next step index.
    pub fn push(&mut self, mut turn: Turn) -> Result<(), Violation> {
        let position = self.turns.len() + 1;
        turn.set_index(position);
        self.spans.observe(position, &turn)?;
        self.turns.push(turn);
        Ok(())
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn spans(&self) -> &[BranchSpan] {
        &self.spans.closed
    }

    pub fn open_branch(&self) -> Option<OpenBranch> {
        self.spans.open
    }

    pub fn branches_opened(&self) -> usize {
        self.spans.branches_opened()
    }

    pub fn terminal(&self) -> TerminalStatus {
        self.terminal
    }

    pub fn set_terminal(&mut self, status: TerminalStatus) {
        self.terminal = status;
    }

    pub fn threads(&self) -> Vec<Thread> {
        threads(&self.turns).expect("trajectory structure is validated on push")
    }

    pub fn token_count(&self) -> usize {
        self.turns.iter().map(Turn::token_count).sum()
    }

    pub fn generated_token_count(&self) -> usize {
        self.turns.iter().map(|t| t.action_tokens().len()).sum()
    }
}

impl Serialize for Trajectory {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TrajectoryRecord { task_id: self.task_id.clone(), terminal: self.terminal, turns: self.turns.clone() }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let record = TrajectoryRecord::deserialize(deserializer)?;
        let mut t = Trajectory::from_turns(record.task_id, record.turns).map_err(serde::de::Error::custom)?;
        t.terminal = record.terminal;
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::action::ActionKind;
    use crate::context::turn::TurnStatus;

    fn reason(i: usize) -> Turn {
        Turn::ok(i, ActionKind::reason("step"), "obs")
    }
    fn branch(i: usize) -> Turn {
        Turn::ok(i, ActionKind::branch("d", "p"), "created")
    }
    fn ret(i: usize) -> Turn {
        Turn::ok(i, ActionKind::ret("done"), "returned")
    }

    #[test]
    fn nested_branch_is_reported_at_second_branch() {
        let turns = vec![reason(1), branch(2), branch(3)];
        assert_eq!(validate_structure(&turns), Err(Violation { kind: ViolationKind::NestedBranch, index: 3 }));
    }

    #[test]
    fn unmatched_return_at_first_turn() {
        assert_eq!(validate_structure(&[ret(1)]), Err(Violation { kind: ViolationKind::UnmatchedReturn, index: 1 }));
    }

    #[test]
    fn sealed_branch_inside_open_branch() {
        let turns = vec![branch(1), Turn::sealed_branch(2, ActionKind::branch("d", "p"), "r")];
        assert_eq!(validate_structure(&turns).unwrap_err().kind, ViolationKind::BranchInsideBranch);
    }

    #[test]
    fn failed_branch_attempts_do_not_open() {
        let failed = Turn::new(3, ActionKind::branch("d", "p"), "Error", TurnStatus::Failed);
        let turns = vec![branch(1), reason(2), failed, ret(4)];
        let spans = derive_spans(&turns).unwrap();
        assert_eq!(spans.closed, vec![BranchSpan { open: 1, close: 4, branch_id: 1 }]);
    }

    #[test]
    fn thread_assignment() {
        let turns = vec![reason(1), branch(2), reason(3), ret(4), reason(5), branch(6), reason(7)];
        let th = threads(&turns).unwrap();
        use Thread::*;
        assert_eq!(th, vec![Main, Main, Branch(1), Branch(1), Main, Main, Branch(2)]);
    }

    #[test]
    fn push_rejects_and_keeps_state() {
        let mut t = Trajectory::new("t");
        t.push(branch(7)).unwrap();
        assert_eq!(t.turns()[0].index(), 1);
        assert!(t.push(branch(2)).is_err());
        assert_eq!(t.len(), 1);
        assert_eq!(t.open_branch(), Some(OpenBranch { open: 1, branch_id: 1 }));
    }

    #[test]
    fn serde_rejects_invalid_structure() {
        let json = serde_json::json!({
            "task_id": "t", "terminal": "finished",
            "turns": [ {"index": 1, "action": {"kind": "return", "message": "m"}, "observation": ""} ]
        });
        assert!(serde_json::from_value::<Trajectory>(json).is_err());
    }
}
