//! Deterministic policies for the synthetic environment.

use std::collections::HashSet;
use std::path::Path;

use serde_json::json;

use crate::context::ActionKind;
use crate::env::corpus::{FactId, SyntheticCorpus};
use crate::env::judge::fact_tag;
use crate::env::task::CompoundTask;
use crate::env::tools::{OPEN_PAGE_TOOL, SEARCH_TOOL};
use crate::runtime::{Policy, PolicyView, ScriptedPolicy};

/// How the oracle deviates from perfect play. Used to build policy sets with a
/// known outcome pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flaws {
    /// Finish with a wrong answer.
    pub wrong_answer: bool,
    /// Open one document outside each branch's need-set before returning.
    pub wander: bool,
    /// Issue one malformed tool call in each sub-task.
    pub bad_call: bool,
}

#[derive(Debug, Clone)]
struct SubPlan {
    facts: Vec<FactId>,
    keys: Vec<String>,
    docs: Vec<String>,
    answer: String,
    question: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Branch,
    Search(usize),
    Open(usize),
    BadCall,
    WanderSearch,
    WanderOpen,
    Return,
    Finish,
}

/// Follows every hop chain of a (compound) task. With branching enabled it
/// solves each sub-question inside its own branch whose prompt declares the
/// sub-question's facts; if a branch is refused it works inline instead.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    plans: Vec<SubPlan>,
    branching: bool,
    flaws: Flaws,
    wander_doc: Option<String>,
    cur: usize,
    step: Step,
    inline: bool,
    in_branch: bool,
    awaiting_branch: bool,
    answers: Vec<String>,
}

const WANDER_QUERY: &str = "points to";

impl OraclePolicy {
    pub fn new(task: &CompoundTask, corpus: &SyntheticCorpus, branching: bool) -> Self {
        Self::with_flaws(task, corpus, branching, Flaws::default())
    }

    pub fn with_flaws(task: &CompoundTask, corpus: &SyntheticCorpus, branching: bool, flaws: Flaws) -> Self {
        let plans: Vec<SubPlan> = task
            .sub_tasks
            .iter()
            .map(|t| {
                let facts: Vec<_> = t.hop_chain.iter().map(|id| corpus.fact(*id).expect("task facts exist")).collect();
                SubPlan {
                    facts: t.hop_chain.clone(),
                    keys: facts.iter().map(|f| f.key()).collect(),
                    docs: facts.iter().map(|f| corpus.docs()[f.doc].doc_id.clone()).collect(),
                    answer: t.answer.clone(),
                    question: t.question.clone(),
                }
            })
            .collect();
        // First fact document, in search order, that no sub-task needs.
        let needed: HashSet<usize> =
            corpus.need_set(&task.sub_tasks.iter().flat_map(|t| t.hop_chain.clone()).collect::<Vec<_>>());
        let wander_doc = corpus
            .rank(WANDER_QUERY, usize::MAX)
            .into_iter()
            .find(|d| !needed.contains(d))
            .map(|d| corpus.docs()[d].doc_id.clone());
        let first = if branching { Step::Branch } else { Step::Search(0) };
        Self {
            answers: Vec::with_capacity(plans.len()),
            plans,
            branching,
            flaws,
            wander_doc,
            cur: 0,
            step: first,
            inline: !branching,
            in_branch: false,
            awaiting_branch: false,
        }
    }

    fn start_next(&mut self) {
        self.cur += 1;
        self.in_branch = false;
        self.inline = !self.branching;
        self.step = if self.cur >= self.plans.len() {
            Step::Finish
        } else if self.branching {
            Step::Branch
        } else {
            Step::Search(0)
        };
    }

    fn after_hops(&self) -> Step {
        if self.flaws.wander && !self.inline && self.wander_doc.is_some() {
            Step::WanderSearch
        } else if self.inline {
            Step::Finish
        } else {
            Step::Return
        }
    }

    fn final_answer(&self) -> String {
        if self.flaws.wrong_answer {
            return "unknown".to_string();
        }
        CompoundTask::format_answers(&self.answers)
    }
}

impl Policy for OraclePolicy {
    fn next_action(&mut self, view: &PolicyView<'_>) -> ActionKind {
        if self.awaiting_branch {
            self.awaiting_branch = false;
            if view.state.is_planning() {
                // Branch refused: solve this sub-question in the main thread.
                self.inline = true;
                self.in_branch = false;
            }
        } else if self.in_branch && view.state.is_planning() {
            // The runtime closed the branch for us; this sub-question is lost.
            self.answers.push(String::new());
            self.start_next();
        }
        if self.plans.is_empty() {
            self.step = Step::Finish;
        }
        loop {
            let plan = self.plans.get(self.cur);
            match self.step {
                Step::Branch => {
                    let plan = plan.expect("branch step has a plan");
                    self.step = Step::Search(0);
                    self.awaiting_branch = true;
                    self.in_branch = true;
                    return ActionKind::branch(
                        format!("resolve sub-question {}", self.cur + 1),
                        format!("{} {}", plan.question, fact_tag(&plan.facts)),
                    );
                }
                Step::Search(h) => {
                    let plan = plan.expect("search step has a plan");
                    self.step = Step::Open(h);
                    return ActionKind::tool(SEARCH_TOOL, json!({ "query": plan.keys[h] }));
                }
                Step::Open(h) => {
                    let plan = plan.expect("open step has a plan");
                    let done = h + 1 == plan.keys.len();
                    self.step = match (done, self.flaws.bad_call && h == 0) {
                        (_, true) => Step::BadCall,
                        (false, false) => Step::Search(h + 1),
                        (true, false) => self.after_hops(),
                    };
                    return ActionKind::tool(OPEN_PAGE_TOOL, json!({ "docid": plan.docs[h] }));
                }
                Step::BadCall => {
                    let plan = plan.expect("bad call step has a plan");
                    self.step = if plan.keys.len() > 1 { Step::Search(1) } else { self.after_hops() };
                    return ActionKind::tool(SEARCH_TOOL, json!({}));
                }
                Step::WanderSearch => {
                    self.step = Step::WanderOpen;
                    return ActionKind::tool(SEARCH_TOOL, json!({ "query": WANDER_QUERY }));
                }
                Step::WanderOpen => {
                    self.step = Step::Return;
                    let doc = self.wander_doc.clone().expect("wander step has a target");
                    return ActionKind::tool(OPEN_PAGE_TOOL, json!({ "docid": doc }));
                }
                Step::Return => {
                    let answer = plan.expect("return step has a plan").answer.clone();
                    self.answers.push(answer.clone());
                    self.start_next();
                    return ActionKind::ret(format!("answer: {answer}"));
                }
                Step::Finish if self.inline && self.cur < self.plans.len() => {
                    // Inline sub-question complete; record it and move on.
                    self.answers.push(self.plans[self.cur].answer.clone());
                    self.start_next();
                }
                Step::Finish => {
                    return ActionKind::finish(self.final_answer(), "followed each link chain to its end");
                }
            }
        }
    }
}

/// Loads an external policy: one JSON action per line, replayed in order.
pub fn load_external(path: &Path) -> Result<ScriptedPolicy, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut actions = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let a: ActionKind = serde_json::from_str(line).map_err(|e| format!("{}:{}: {e}", path.display(), n + 1))?;
        actions.push(a);
    }
    Ok(ScriptedPolicy::new(actions))
}

/// Which policy drives an episode, as named on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    /// Perfect oracle.
    Oracle,
    /// Member `i` of prompt `p` answers wrongly iff `(p + i) % m == 0`.
    Flaky(usize),
    /// Every `m`-th member opens an out-of-scope document in each branch.
    Wander(usize),
    /// Every `m`-th member issues a malformed tool call per sub-question.
    BadCalls(usize),
    External(std::path::PathBuf),
}

impl std::str::FromStr for PolicySpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let modulus = |v: &str| -> Result<usize, String> {
            match v.parse::<usize>() {
                Ok(m) if m > 0 => Ok(m),
                _ => Err(format!("policy modulus must be a positive integer, got `{v}`")),
            }
        };
        if s == "oracle" {
            return Ok(Self::Oracle);
        }
        if let Some(p) = s.strip_prefix("external:") {
            return Ok(Self::External(p.into()));
        }
        match s.strip_prefix("scripted:").and_then(|r| r.split_once(':')) {
            Some(("flaky", m)) => Ok(Self::Flaky(modulus(m)?)),
            Some(("wander", m)) => Ok(Self::Wander(modulus(m)?)),
            Some(("bad-calls", m)) => Ok(Self::BadCalls(modulus(m)?)),
            _ => Err(format!(
                "unknown policy `{s}`; expected oracle, scripted:flaky:<m>, scripted:wander:<m>, scripted:bad-calls:<m> or external:<path>"
            )),
        }
    }
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Oracle => write!(f, "oracle"),
            Self::Flaky(m) => write!(f, "scripted:flaky:{m}"),
            Self::Wander(m) => write!(f, "scripted:wander:{m}"),
            Self::BadCalls(m) => write!(f, "scripted:bad-calls:{m}"),
            Self::External(p) => write!(f, "external:{}", p.display()),
        }
    }
}

impl PolicySpec {
    /// Builds the policy for group member `member` of prompt `prompt`.
    pub fn build(
        &self,
        task: &CompoundTask,
        corpus: &SyntheticCorpus,
        branching: bool,
        prompt: usize,
        member: usize,
    ) -> Result<Box<dyn Policy + Send>, String> {
        let hit = |m: usize| (prompt + member).is_multiple_of(m);
        let flaws = match self {
            Self::Oracle => Flaws::default(),
            Self::Flaky(m) => Flaws { wrong_answer: hit(*m), ..Flaws::default() },
            Self::Wander(m) => Flaws { wander: hit(*m), ..Flaws::default() },
            Self::BadCalls(m) => Flaws { bad_call: hit(*m), ..Flaws::default() },
            Self::External(path) => return Ok(Box::new(load_external(path)?)),
        };
        Ok(Box::new(OraclePolicy::with_flaws(task, corpus, branching, flaws)))
    }
}
