//! Trajectories, the fold operator and trace files.

pub mod action;
pub mod fold;
pub mod token;
pub mod trace;
pub mod trajectory;
pub mod turn;

pub use action::{ActionError, ActionKind};
pub use fold::{count_tokens, fold, main_thread_tokens, FoldedContext, FoldedItem, TokenCount};
pub use token::{Provenance, Token};
pub use trace::{TraceHeader, TraceRecord};
pub use trajectory::{
    derive_spans, threads, validate_structure, BranchId, BranchSpan, OpenBranch, TerminalStatus, Thread, Trajectory,
    Violation, ViolationKind,
};
pub use turn::{Turn, TurnStatus};
