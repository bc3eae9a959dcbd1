//! Line-delimited JSON traces: an optional header line followed by one record per turn.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::fold::fold_unchecked;
use super::trajectory::{Thread, Trajectory, Violation, ViolationKind};

pub const TRACE_FORMAT: &str = "context-fold-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub task_id: String,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl TraceHeader {
    pub fn new(task_id: impl Into<String>, config: serde_json::Value) -> Self {
        Self { format: TRACE_FORMAT.to_string(), version: TRACE_VERSION, task_id: task_id.into(), config }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// `main` or `branch-<id>`.
    pub thread: String,
    pub action: String,
    pub action_tokens: usize,
    pub observation_tokens: usize,
    /// Working-context size after this turn.
    pub folded_context: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

/// Records for a trajectory whose working context is the fold of its history.
pub fn trace_records(trajectory: &Trajectory) -> Vec<TraceRecord> {
    let threads = trajectory.threads();
    let turns = trajectory.turns();
    turns
        .iter()
        .zip(threads)
        .enumerate()
        .map(|(pos, (turn, thread))| TraceRecord {
            step: turn.index(),
            thread: thread.to_string(),
            action: turn.action().label().to_string(),
            action_tokens: turn.action_tokens().len(),
            observation_tokens: turn.observation_tokens().len(),
            folded_context: fold_unchecked("", &turns[..=pos]).token_count(),
            failed: turn.failed(),
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] io::Error),
    #[error("trace line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("unsupported trace format `{format}` version {version}")]
    Version { format: String, version: u32 },
}

pub fn write_trace<W: Write>(mut out: W, header: Option<&TraceHeader>, records: &[TraceRecord]) -> io::Result<()> {
    if let Some(h) = header {
        serde_json::to_writer(&mut out, h)?;
        out.write_all(b"\n")?;
    }
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn trace_to_string(header: Option<&TraceHeader>, records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, header, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn read_trace<R: BufRead>(input: R) -> Result<(Option<TraceHeader>, Vec<TraceRecord>), TraceError> {
    let mut header = None;
    let mut records = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: n + 1, source })?;
        if value.get("format").is_some() {
            let h: TraceHeader =
                serde_json::from_value(value).map_err(|source| TraceError::Parse { line: n + 1, source })?;
            if h.format != TRACE_FORMAT || h.version != TRACE_VERSION {
                return Err(TraceError::Version { format: h.format, version: h.version });
            }
            header = Some(h);
        } else {
            records.push(serde_json::from_value(value).map_err(|source| TraceError::Parse { line: n + 1, source })?);
        }
    }
    Ok((header, records))
}

fn parse_thread(s: &str) -> Option<Thread> {
    if s == "main" {
        return Some(Thread::Main);
    }
    s.strip_prefix("branch-").and_then(|id| id.parse().ok()).map(Thread::Branch)
}

/// Checks that trace records never interleave two open branches.
pub fn validate_trace(records: &[TraceRecord]) -> Result<(), Violation> {
    let mut open: Option<u32> = None;
    for r in records.iter().filter(|r| !r.failed) {
        match parse_thread(&r.thread) {
            Some(Thread::Branch(id)) => {
                match open {
                    Some(current) if current != id => {
                        return Err(Violation { kind: ViolationKind::MultipleOpenBranches, index: r.step })
                    }
                    _ => open = Some(id),
                }
                if r.action == "return" {
                    open = None;
                }
            }
            Some(Thread::Main) => {
                if r.action == "return" {
                    return Err(Violation { kind: ViolationKind::UnmatchedReturn, index: r.step });
                }
                if open.is_some() {
                    return Err(Violation { kind: ViolationKind::NestedBranch, index: r.step });
                }
            }
            None => return Err(Violation { kind: ViolationKind::MultipleOpenBranches, index: r.step }),
        }
    }
    Ok(())
}

/// Human-readable rendering with branch interiors indented and fold points marked.
pub fn render_trace(header: Option<&TraceHeader>, records: &[TraceRecord]) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        let _ = writeln!(out, "task {}  ({} v{})", h.task_id, h.format, h.version);
    }
    let _ =
        writeln!(out, "{:>5}  {:<10} {:<12} {:>7} {:>7} {:>9}", "step", "thread", "action", "act", "obs", "context");
    let mut branch_tokens: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        let in_branch = r.thread != "main";
        let prefix = if in_branch { "  | " } else { "" };
        let _ = writeln!(
            out,
            "{:>5}  {:<10} {}{:<12} {:>7} {:>7} {:>9}{}",
            r.step,
            r.thread,
            prefix,
            r.action,
            r.action_tokens,
            r.observation_tokens,
            r.folded_context,
            if r.failed { "  (failed)" } else { "" }
        );
        if in_branch {
            let acc = branch_tokens.entry(r.thread.clone()).or_default();
            *acc += r.action_tokens + r.observation_tokens;
            if r.action == "return" && !r.failed {
                let _ = writeln!(
                    out,
                    "{:>5}  {:<10}   `-- folded {} tokens of {}; context now {}",
                    "", "", acc, r.thread, r.folded_context
                );
            }
        }
    }
    let total: usize = records.iter().map(|r| r.action_tokens + r.observation_tokens).sum();
    let last = records.last().map_or(0, |r| r.folded_context);
    let _ = writeln!(out, "total {total} tokens, final context {last} tokens, {} branches", branch_tokens.len());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::action::ActionKind;
    use crate::context::turn::Turn;

    fn sample() -> Trajectory {
        let turns = vec![
            Turn::ok(1, ActionKind::reason("plan the work"), "ok"),
            Turn::ok(2, ActionKind::branch("look", "look it up"), "branch created"),
            Turn::ok(3, ActionKind::reason("searching"), "many words of results here"),
            Turn::ok(4, ActionKind::ret("found"), "returned found"),
        ];
        Trajectory::from_turns("t1", turns).unwrap()
    }

    #[test]
    fn records_track_folded_size() {
        let r = trace_records(&sample());
        assert_eq!(r.iter().map(|r| r.thread.as_str()).collect::<Vec<_>>(), ["main", "main", "branch-1", "branch-1"]);
        // a1 o1 = 3 + 1; a2 = branch(description=look, prompt=look it up) = 12; o2 = 2
        assert_eq!(r[0].folded_context, 4);
        assert_eq!(r[1].folded_context, 4 + 12 + 2);
        assert_eq!(r[2].folded_context, 18 + 1 + 5);
        // after return: a1 o1 a2 o4
        assert_eq!(r[3].folded_context, 4 + 12 + 2);
    }

    #[test]
    fn round_trip() {
        let t = sample();
        let header = TraceHeader::new("t1", serde_json::json!({"seed": 7}));
        let text = trace_to_string(Some(&header), &trace_records(&t));
        let (h, recs) = read_trace(text.as_bytes()).unwrap();
        assert_eq!(h.as_ref().unwrap(), &header);
        assert_eq!(recs, trace_records(&t));
        assert!(validate_trace(&recs).is_ok());
        assert!(render_trace(h.as_ref(), &recs).contains("folded"));
    }

    #[test]
    fn interleaved_branches_are_rejected() {
        let mut recs = trace_records(&sample());
        recs[3].thread = "branch-2".into();
        assert_eq!(validate_trace(&recs).unwrap_err().kind, ViolationKind::MultipleOpenBranches);
    }
}
