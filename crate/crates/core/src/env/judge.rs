//! Scope judging for closed branches.

use std::collections::HashSet;

use super::corpus::{FactId, SyntheticCorpus};
use super::tools::OPEN_PAGE_TOOL;
use crate::context::{ActionKind, Turn};

/// Decides whether a closed branch stayed within the sub-task its prompt declared.
pub trait ScopeJudge {
    fn in_scope(&self, prompt: &str, branch: &[Turn], return_message: &str) -> bool;
}

/// Judge that accepts every branch.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl ScopeJudge for AcceptAll {
    fn in_scope(&self, _: &str, _: &[Turn], _: &str) -> bool {
        true
    }
}

const FACT_TAG: &str = "[facts:";

/// `[facts: f1 f4]` tag a branch prompt uses to declare its target facts.
pub fn fact_tag(facts: &[FactId]) -> String {
    let ids: Vec<String> = facts.iter().map(FactId::to_string).collect();
    format!("{FACT_TAG} {}]", ids.join(" "))
}

pub fn declared_facts(prompt: &str) -> Vec<FactId> {
    let Some(start) = prompt.find(FACT_TAG) else {
        return Vec::new();
    };
    let rest = &prompt[start + FACT_TAG.len()..];
    let body = rest.split(']').next().unwrap_or("");
    body.split_whitespace().filter_map(|s| s.parse().ok()).collect()
}

/// Documents successfully opened by the given turns.
pub fn opened_docs(corpus: &SyntheticCorpus, turns: &[Turn]) -> Vec<usize> {
    turns
        .iter()
        .filter(|t| !t.failed())
        .filter_map(|t| match t.action() {
            ActionKind::ToolCall { name, arguments } if name == OPEN_PAGE_TOOL => {
                let docid = arguments.get("docid").and_then(|v| v.as_str());
                let url = arguments.get("url").and_then(|v| v.as_str());
                match docid {
                    Some(id) => corpus.doc_by_id(id),
                    None => url.and_then(|u| corpus.doc_by_url(u)),
                }
            }
            _ => None,
        })
        .collect()
}

/// A branch is out of scope iff it opened any document outside the need-set of
/// the facts its prompt declares.
#[derive(Debug, Clone, Copy)]
pub struct NeedSetJudge<'c> {
    corpus: &'c SyntheticCorpus,
}

impl<'c> NeedSetJudge<'c> {
    pub fn new(corpus: &'c SyntheticCorpus) -> Self {
        Self { corpus }
    }
}

impl ScopeJudge for NeedSetJudge<'_> {
    fn in_scope(&self, prompt: &str, branch: &[Turn], _return_message: &str) -> bool {
        let need: HashSet<usize> = self.corpus.need_set(&declared_facts(prompt));
        opened_docs(self.corpus, branch).iter().all(|d| need.contains(d))
    }
}
