use std::collections::HashSet;

use serde_json::{Map, Value};

use super::corpus::{SyntheticCorpus, DEFAULT_TOPK};
use crate::runtime::{ToolOutcome, ToolSession};

pub const SEARCH_TOOL: &str = "search";
pub const OPEN_PAGE_TOOL: &str = "open_page";

/// Per-episode view of the corpus. Remembers which documents search surfaced,
/// since `open_page` only accepts those.
#[derive(Debug, Clone)]
pub struct EnvSession<'c> {
    corpus: &'c SyntheticCorpus,
    seen: HashSet<usize>,
}

impl<'c> EnvSession<'c> {
    pub fn new(corpus: &'c SyntheticCorpus) -> Self {
        Self { corpus, seen: HashSet::new() }
    }

    pub fn corpus(&self) -> &'c SyntheticCorpus {
        self.corpus
    }

    pub fn search(&mut self, query: &str, topk: usize) -> Result<String, String> {
        if query.trim().is_empty() {
            return Err("search query must not be empty".into());
        }
        if topk == 0 {
            return Err("topk must be at least 1".into());
        }
        let hits = self.corpus.rank(query, topk);
        if hits.is_empty() {
            return Ok("No results found.".into());
        }
        let mut out = String::new();
        for (rank, &i) in hits.iter().enumerate() {
            self.seen.insert(i);
            let d = &self.corpus.docs()[i];
            if rank > 0 {
                out.push('\n');
            }
            out.push_str(&format!("[{}] docid {} url {}\n{}", rank + 1, d.doc_id, d.url, d.snippet()));
        }
        Ok(out)
    }

    /// Resolves the `docid`/`url` pair, preferring `docid` when both are given.
    pub fn resolve(&self, docid: Option<&str>, url: Option<&str>) -> Result<usize, String> {
        let index = match (docid, url) {
            (Some(id), _) => self.corpus.doc_by_id(id).ok_or_else(|| format!("unknown docid `{id}`"))?,
            (None, Some(u)) => self.corpus.doc_by_url(u).ok_or_else(|| format!("unknown url `{u}`"))?,
            (None, None) => return Err("provide either `docid` or `url`".into()),
        };
        if !self.seen.contains(&index) {
            return Err(format!("document {} was not returned by a prior search", self.corpus.docs()[index].doc_id));
        }
        Ok(index)
    }

    pub fn open_page(&mut self, docid: Option<&str>, url: Option<&str>) -> Result<String, String> {
        let index = self.resolve(docid, url)?;
        let d = &self.corpus.docs()[index];
        Ok(format!("docid {} url {}\n{}", d.doc_id, d.url, d.page()))
    }
}

fn str_arg<'a>(args: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

impl ToolSession for EnvSession<'_> {
    fn call(&mut self, name: &str, args: &Map<String, Value>) -> ToolOutcome {
        let result = match name {
            SEARCH_TOOL => match str_arg(args, "query") {
                None => Err("tool `search` is missing required field `query`".to_string()),
                Some(q) => {
                    let topk = match args.get("topk") {
                        None | Some(Value::Null) => Ok(DEFAULT_TOPK),
                        Some(v) => v.as_u64().map(|k| k as usize).ok_or_else(|| "topk must be an integer".to_string()),
                    };
                    topk.and_then(|k| self.search(q, k))
                }
            },
            OPEN_PAGE_TOOL => self.open_page(str_arg(args, "docid"), str_arg(args, "url")),
            other => Err(format!("unknown tool `{other}`")),
        };
        match result {
            Ok(text) => ToolOutcome::ok(text),
            Err(reason) => ToolOutcome::failed(reason),
        }
    }
}
