//! Independent reference implementations used by the property tests and the
//! acceptance harness. None of these call the library routine they check.

#![allow(dead_code)]

use context_fold::context::token::count_text_tokens;
use context_fold::context::{ActionKind, Turn, TurnStatus};
use context_fold::env::{ScopeJudge, SyntheticCorpus};
use context_fold::runtime::{Policy, PolicyView};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const WORDS: &[&str] = &["alpha", "beta", "gamma", "delta", "node", "page", "link", "x", "{", ":", "value", "42"];

fn words(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn plain_action(rng: &mut ChaCha8Rng) -> ActionKind {
    if rng.random_bool(0.4) {
        ActionKind::reason(words(rng, 12))
    } else {
        ActionKind::tool("search", json!({ "query": words(rng, 4) }))
    }
}

/// A random history obeying the single-open-branch discipline: accepted and
/// refused branches, sealed branches, forced returns, failed calls and an
/// optionally unclosed final branch.
pub fn random_turns(rng: &mut ChaCha8Rng, len: usize) -> Vec<Turn> {
    let mut out = Vec::with_capacity(len);
    let mut open = false;
    for i in 1..=len {
        let roll: f64 = rng.random();
        let obs = words(rng, 30);
        let turn = if !open {
            if roll < 0.15 {
                open = true;
                Turn::ok(i, ActionKind::branch(words(rng, 3), words(rng, 8)), "Branch created.")
            } else if roll < 0.20 {
                Turn::new(i, ActionKind::branch("d", words(rng, 4)), "Error: limit", TurnStatus::Failed)
            } else if roll < 0.23 {
                Turn::sealed_branch(i, ActionKind::branch("d", words(rng, 4)), obs)
            } else if roll < 0.27 {
                Turn::new(i, ActionKind::ret(words(rng, 4)), "Error: not in a branch", TurnStatus::Failed)
            } else if roll < 0.35 {
                Turn::new(i, plain_action(rng), obs, TurnStatus::Failed)
            } else {
                Turn::ok(i, plain_action(rng), obs)
            }
        } else if roll < 0.20 {
            open = false;
            Turn::ok(i, ActionKind::ret(words(rng, 6)), format!("Returned from branch with message: {obs}"))
        } else if roll < 0.25 {
            open = false;
            Turn::new(i, ActionKind::ret("budget exhausted in branch"), obs, TurnStatus::Forced)
        } else if roll < 0.30 {
            Turn::new(i, ActionKind::branch("d", "nested"), "Error: nested", TurnStatus::Failed)
        } else if roll < 0.38 {
            Turn::new(i, plain_action(rng), obs, TurnStatus::Failed)
        } else {
            Turn::ok(i, plain_action(rng), obs)
        };
        out.push(turn);
    }
    out
}

fn accepted_branch(t: &Turn) -> bool {
    matches!(t.action(), ActionKind::Branch { .. }) && t.status() != TurnStatus::Failed
}

fn accepted_return(t: &Turn) -> bool {
    matches!(t.action(), ActionKind::Return { .. }) && t.status() != TurnStatus::Failed
}

/// Closed branches as 0-based `(call, return)` positions, plus an unclosed call.
pub fn oracle_spans(turns: &[Turn]) -> (Vec<(usize, usize)>, Option<usize>) {
    let mut spans = Vec::new();
    let mut open = None;
    for (p, t) in turns.iter().enumerate() {
        if accepted_branch(t) && !t.sealed() {
            open = Some(p);
        } else if accepted_return(t) {
            if let Some(k) = open.take() {
                spans.push((k, p));
            }
        }
    }
    (spans, open)
}

/// Span deletion: start from every `(a_p, o_p)` pair, delete the pairs inside
/// each closed branch and give the call the return's observation.
pub fn oracle_fold(turns: &[Turn]) -> Vec<(usize, usize)> {
    let mut keep = vec![true; turns.len()];
    let mut obs: Vec<usize> = (0..turns.len()).collect();
    for (k, m) in oracle_spans(turns).0 {
        for slot in keep.iter_mut().take(m + 1).skip(k + 1) {
            *slot = false;
        }
        obs[k] = m;
    }
    (0..turns.len()).filter(|&p| keep[p]).map(|p| (p, obs[p])).collect()
}

pub fn oracle_fold_ids(turns: &[Turn]) -> Vec<u32> {
    let mut ids = Vec::new();
    for (a, o) in oracle_fold(turns) {
        ids.extend(turns[a].action_tokens().iter().map(|t| t.id()));
        ids.extend(turns[o].observation_tokens().iter().map(|t| t.id()));
    }
    ids
}

pub fn oracle_fold_len(turns: &[Turn]) -> usize {
    oracle_fold(turns)
        .into_iter()
        .map(|(a, o)| turns[a].action_tokens().len() + turns[o].observation_tokens().len())
        .sum()
}

/// Main-thread membership of every turn: a call is on the main thread, the
/// turns after it up to and including its return are not.
pub fn oracle_main(turns: &[Turn]) -> Vec<bool> {
    let mut inside = vec![false; turns.len()];
    let (spans, open) = oracle_spans(turns);
    for (k, m) in spans {
        for slot in inside.iter_mut().take(m + 1).skip(k + 1) {
            *slot = true;
        }
    }
    if let Some(k) = open {
        for slot in inside.iter_mut().skip(k + 1) {
            *slot = true;
        }
    }
    inside.into_iter().map(|b| !b).collect()
}

pub fn oracle_main_len(turns: &[Turn]) -> usize {
    let (spans, open) = oracle_spans(turns);
    let main = oracle_main(turns);
    let mut len = 0;
    for (p, t) in turns.iter().enumerate() {
        if !main[p] {
            continue;
        }
        if Some(p) == open {
            len += t.action_tokens().len();
        } else if let Some(&(_, m)) = spans.iter().find(|(k, _)| *k == p) {
            len += t.action_tokens().len() + turns[m].observation_tokens().len();
        } else {
            len += t.token_count();
        }
    }
    len
}

/// Rule-by-rule process-reward labeler over the flat token layout.
pub fn oracle_labels(turns: &[Turn], active_limit: usize, judge: &dyn ScopeJudge) -> Vec<f64> {
    let mut per_turn = vec![0.0; turns.len()];
    let main = oracle_main(turns);
    if 2 * oracle_main_len(turns) > active_limit {
        for (p, t) in turns.iter().enumerate() {
            let is_branch = matches!(t.action(), ActionKind::Branch { .. });
            if main[p] && !is_branch {
                per_turn[p] += -1.0;
            }
        }
    }
    for (k, m) in oracle_spans(turns).0 {
        let prompt = match turns[k].action() {
            ActionKind::Branch { prompt, .. } => prompt.clone(),
            _ => unreachable!(),
        };
        let message = match turns[m].action() {
            ActionKind::Return { message } => message.clone(),
            _ => unreachable!(),
        };
        if !judge.in_scope(&prompt, &turns[k + 1..=m], &message) {
            for v in per_turn.iter_mut().take(m + 1).skip(k + 1) {
                *v += -0.2;
            }
        }
    }
    for (p, t) in turns.iter().enumerate() {
        if t.status() == TurnStatus::Failed {
            per_turn[p] += -1.0;
        }
    }
    let mut q = Vec::new();
    for (p, t) in turns.iter().enumerate() {
        q.extend(std::iter::repeat_n(per_turn[p], t.action_tokens().len()));
        q.extend(std::iter::repeat_n(0.0, t.observation_tokens().len()));
    }
    q
}

/// Out of scope iff the branch prompt mentions "offtopic".
pub struct KeywordJudge;

impl ScopeJudge for KeywordJudge {
    fn in_scope(&self, prompt: &str, _: &[Turn], _: &str) -> bool {
        !prompt.contains("offtopic")
    }
}

/// Advantages from binary rewards by counting: with c successes out of G the
/// rewards have mean c/G and variance c(G-c)/G^2.
pub fn oracle_advantages(rewards: &[u8], q: &[Vec<f64>], mask: &[Vec<bool>]) -> Vec<Vec<Option<f64>>> {
    let g = rewards.len() as f64;
    let c = rewards.iter().filter(|&&r| r == 1).count() as f64;
    let mean = c / g;
    let std = (c * (g - c)).sqrt() / g;
    rewards
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            (0..q[i].len())
                .map(|t| {
                    if !mask[i][t] {
                        return None;
                    }
                    if c == 0.0 || c == g {
                        return Some(0.0);
                    }
                    let v = (r as f64 + q[i][t]).clamp(0.0, 1.0);
                    Some((v - mean) / std)
                })
                .collect()
        })
        .collect()
}

/// Per-token clipped surrogate, summed and divided by the total token count.
pub fn oracle_objective(
    advantages: &[Vec<Option<f64>>],
    new: &[Vec<Option<f64>>],
    old: &[Vec<Option<f64>>],
    eps_low: f64,
    eps_high: f64,
) -> (f64, Vec<Vec<f64>>) {
    let mut total = 0usize;
    let mut sum = 0.0;
    let mut terms = Vec::new();
    for i in 0..advantages.len() {
        total += advantages[i].len();
        let mut row = Vec::new();
        for t in 0..advantages[i].len() {
            let term = match advantages[i][t] {
                None => 0.0,
                Some(a) => {
                    let ratio = (new[i][t].unwrap() - old[i][t].unwrap()).exp();
                    let clipped = if ratio < 1.0 - eps_low {
                        1.0 - eps_low
                    } else if ratio > 1.0 + eps_high {
                        1.0 + eps_high
                    } else {
                        ratio
                    };
                    let u = ratio * a;
                    let c = clipped * a;
                    if u < c {
                        u
                    } else {
                        c
                    }
                }
            };
            sum += term;
            row.push(term);
        }
        terms.push(row);
    }
    (sum / total as f64, terms)
}

/// Fate of one replayed rollout: `Some(step)` it was trained at, or `None` if dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayedJob {
    pub issue_step: usize,
    pub finish_time: f64,
    pub trained_at: Option<usize>,
}

/// Replays the asynchronous scheduler from the raw duration stream.
pub fn oracle_schedule(
    durations: &[f64],
    batch: usize,
    steps: usize,
    cutoff: f64,
    max_stale: usize,
) -> (Vec<f64>, Vec<ReplayedJob>) {
    let n = ((cutoff * batch as f64).ceil() as usize).clamp(1, batch);
    let mut jobs: Vec<ReplayedJob> = Vec::new();
    let mut ends = Vec::new();
    let mut clock = 0.0;
    for s in 0..steps {
        let ds = &durations[s * batch..(s + 1) * batch];
        let mut sorted = ds.to_vec();
        sorted.sort_by(f64::total_cmp);
        let end = clock + sorted[n - 1];
        for &d in ds {
            let finish = clock + d;
            jobs.push(ReplayedJob { issue_step: s, finish_time: finish, trained_at: (finish <= end).then_some(s) });
        }
        for j in jobs.iter_mut() {
            if j.trained_at.is_none() && j.issue_step < s && s - j.issue_step <= max_stale && j.finish_time <= end {
                j.trained_at = Some(s);
            }
        }
        ends.push(end);
        clock = end;
    }
    (ends, jobs)
}

/// Token-id model of a prefix cache replayed over a fold-mode trajectory. The
/// cache holds the last query's context plus the action decoded on top of it;
/// whatever does not prefix the next query is evicted.
pub fn oracle_cache_evictions(prompt_ids: &[u32], turns: &[Turn]) -> usize {
    let mut evicted = 0;
    let mut resident: Vec<u32> = Vec::new();
    for q in 0..turns.len() {
        let mut ctx = prompt_ids.to_vec();
        ctx.extend(oracle_fold_ids(&turns[..q]));
        let lcp = resident.iter().zip(&ctx).take_while(|(a, b)| a == b).count();
        if lcp < resident.len() {
            evicted += resident.len() - lcp;
        }
        resident = ctx;
        resident.extend(turns[q].action_tokens().iter().map(|t| t.id()));
    }
    evicted
}

/// Random actions over the synthetic tools; records the largest context it is
/// shown, recounted from the visible text.
pub struct FuzzPolicy {
    rng: ChaCha8Rng,
    keys: Vec<String>,
    docs: Vec<String>,
    branching: bool,
    pub max_seen: usize,
}

impl FuzzPolicy {
    pub fn new(seed: u64, corpus: &SyntheticCorpus, branching: bool) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            keys: corpus.facts().iter().map(|f| f.key()).collect(),
            docs: corpus.docs().iter().map(|d| d.doc_id.clone()).collect(),
            branching,
            max_seen: 0,
        }
    }
}

impl Policy for FuzzPolicy {
    fn next_action(&mut self, view: &PolicyView<'_>) -> ActionKind {
        let mut seen = count_text_tokens(view.prompt) + view.summary.map_or(0, count_text_tokens);
        for item in &view.context.items {
            if item.action.status() != TurnStatus::Forced {
                seen += count_text_tokens(&item.action.action().render());
            }
            seen += count_text_tokens(item.observation.observation());
        }
        self.max_seen = self.max_seen.max(seen);

        let r: f64 = self.rng.random();
        let key = self.keys.choose(&mut self.rng).unwrap().clone();
        match r {
            _ if r < 0.30 => ActionKind::tool("search", json!({ "query": format!("points to {key}") })),
            _ if r < 0.45 => {
                ActionKind::tool("open_page", json!({ "docid": self.docs.choose(&mut self.rng).unwrap() }))
            }
            _ if r < 0.55 => ActionKind::reason(vec!["thinking"; self.rng.random_range(1..400)].join(" ")),
            _ if r < 0.68 && self.branching => ActionKind::branch("sub", format!("look up {key}")),
            _ if r < 0.80 && self.branching => ActionKind::ret(format!("answer: {key}")),
            _ if r < 0.83 => ActionKind::finish(key, "guess"),
            _ if r < 0.88 => ActionKind::tool("fly", json!({})),
            _ if r < 0.91 => ActionKind::tool("search", json!({})),
            _ => ActionKind::tool("search", json!({ "query": key })),
        }
    }
}

fn reason_turn(i: usize, n: usize) -> Turn {
    Turn::ok(i, ActionKind::reason(vec!["w"; n].join(" ")), vec!["o"; n].join(" "))
}

fn search_turn(i: usize, status: TurnStatus) -> Turn {
    Turn::new(i, ActionKind::tool("search", json!({"query": "q"})), "r r r", status)
}

fn branch_turn(i: usize, prompt: &str) -> Turn {
    Turn::ok(i, ActionKind::branch("sub", prompt), "Branch created.")
}

fn ret_turn(i: usize) -> Turn {
    Turn::ok(i, ActionKind::ret("done"), "Returned from branch with message: done")
}

/// Twelve hand-built histories with the active limit each is labeled under.
pub fn constructed() -> Vec<(&'static str, Vec<Turn>, usize)> {
    use TurnStatus::*;
    vec![
        ("threshold-below", vec![reason_turn(1, 3), reason_turn(2, 3)], 1000),
        ("threshold-above", vec![reason_turn(1, 30), reason_turn(2, 30)], 100),
        ("threshold-exact", vec![reason_turn(1, 25), reason_turn(2, 25)], 200),
        (
            "branch-turn-exemption",
            vec![reason_turn(1, 40), branch_turn(2, "look"), reason_turn(3, 40), ret_turn(4), reason_turn(5, 5)],
            100,
        ),
        (
            "out-of-scope-branch",
            vec![branch_turn(1, "offtopic"), reason_turn(2, 3), search_turn(3, Ok), ret_turn(4)],
            1000,
        ),
        ("in-scope-branch", vec![branch_turn(1, "look"), reason_turn(2, 3), ret_turn(3)], 1000),
        ("failed-tool-call", vec![reason_turn(1, 2), search_turn(2, Failed), reason_turn(3, 2)], 1000),
        ("stacked-unfolded-and-failed", vec![reason_turn(1, 40), search_turn(2, Failed), reason_turn(3, 10)], 100),
        (
            "stacked-scope-and-failed",
            vec![branch_turn(1, "offtopic"), search_turn(2, Failed), reason_turn(3, 2), ret_turn(4)],
            1000,
        ),
        (
            "stacked-all-three",
            vec![
                reason_turn(1, 60),
                Turn::new(2, ActionKind::branch("d", "x"), "Error: limit", Failed),
                branch_turn(3, "offtopic"),
                search_turn(4, Failed),
                ret_turn(5),
                search_turn(6, Failed),
            ],
            100,
        ),
        (
            "forced-return-in-offtopic-branch",
            vec![
                branch_turn(1, "offtopic"),
                reason_turn(2, 4),
                Turn::new(3, ActionKind::ret("budget exhausted in branch"), "Returned", Forced),
            ],
            1000,
        ),
        (
            "unclosed-branch",
            vec![reason_turn(1, 30), branch_turn(2, "offtopic"), reason_turn(3, 90), search_turn(4, Failed)],
            100,
        ),
    ]
}
