//! Deterministic synthetic retrieval environment: corpus, tasks, tools, grading
//! and the scope judge.

pub mod corpus;
pub mod judge;
pub mod task;
pub mod tools;

pub use corpus::{CorpusParams, Document, Fact, FactId, SyntheticCorpus, DEFAULT_TOPK, PAGE_TOKENS, SNIPPET_TOKENS};
pub use judge::{declared_facts, fact_tag, AcceptAll, NeedSetJudge, ScopeJudge};
pub use task::{
    grade, make_compound, normalize_answer, CompoundTask, Difficulty, Grade, Task, TaskError, TaskSet, TaskSetSpec,
};
pub use tools::EnvSession;
