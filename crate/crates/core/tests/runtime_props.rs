mod common;

use common::{oracle_cache_evictions, oracle_fold_len, oracle_spans, FuzzPolicy};
use context_fold::baselines::{run_react, run_summary, ExtractiveSummarizer, SummaryConfig};
use context_fold::context::token::tokenize;
use context_fold::context::trace::trace_to_string;
use context_fold::context::{ActionKind, Provenance};
use context_fold::env::{EnvSession, TaskSet, TaskSetSpec};
use context_fold::policies::{Flaws, OraclePolicy};
use context_fold::runtime::{run_episode, BudgetConfig, NoTools, ScriptedPolicy, TaskInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn task_set(seed: u64) -> TaskSet {
    let spec = match seed % 5 {
        0 => TaskSetSpec::easy(seed, 1),
        1 => TaskSetSpec { medium: 1, ..TaskSetSpec::new(seed) },
        2 => TaskSetSpec { hard: 1, ..TaskSetSpec::new(seed) },
        3 => TaskSetSpec::compound(seed, 3, 1),
        _ => TaskSetSpec::compound(seed, 10, 1),
    };
    TaskSet::generate(spec)
}

#[test]
fn zero_branch_fold_equals_react() {
    for seed in 0..50u64 {
        let ts = task_set(seed);
        let p = &ts.problems[0];
        let flaws = Flaws { wrong_answer: seed % 7 == 0, bad_call: seed % 3 == 0, wander: false };
        let task = TaskInput::new(&p.id, &p.question);

        let mut env = EnvSession::new(&ts.corpus);
        let mut policy = OraclePolicy::with_flaws(p, &ts.corpus, false, flaws);
        let fold = run_episode(task, &mut policy, &mut env, &BudgetConfig::default()).unwrap();

        let mut env = EnvSession::new(&ts.corpus);
        let mut policy = OraclePolicy::with_flaws(p, &ts.corpus, false, flaws);
        let react = run_react(task, &mut policy, &mut env, 32_768, 256).unwrap();

        assert_eq!(fold.metrics.branches, 0);
        assert_eq!(trace_to_string(None, &fold.trace), trace_to_string(None, &react.trace), "seed {seed}");
        assert_eq!(fold.trajectory, react.trajectory);
        assert_eq!(fold.query_lengths, react.query_lengths);
    }
}

#[test]
fn fuzzed_episodes_stay_within_the_limit() {
    let ts = TaskSet::generate(TaskSetSpec { easy: 2, hard: 2, ..TaskSetSpec::new(3) });
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut outcomes = std::collections::HashSet::new();
    let mut forced = 0;
    for ep in 0..1000u64 {
        let limit = rng.random_range(2_000..12_000);
        let p = &ts.problems[ep as usize % ts.problems.len()];
        let task = TaskInput::new(&p.id, &p.question);
        let mut env = EnvSession::new(&ts.corpus);
        let mode = ep % 3;
        let mut policy = FuzzPolicy::new(ep, &ts.corpus, mode == 0);
        let branches = rng.random_range(1..=6);
        let out = match mode {
            0 => {
                let budget = BudgetConfig { active_limit: limit, max_branches: branches, max_turns: 80 };
                run_episode(task, &mut policy, &mut env, &budget).unwrap()
            }
            1 => run_react(task, &mut policy, &mut env, limit, 80).unwrap(),
            _ => {
                let cfg = SummaryConfig { active_limit: limit, max_sessions: rng.random_range(1..4), max_turns: 80 };
                run_summary(task, &mut policy, &mut env, &cfg, &ExtractiveSummarizer::default()).unwrap()
            }
        };
        assert!(policy.max_seen <= limit, "episode {ep}: saw {} > {limit}", policy.max_seen);
        assert!(out.query_lengths.iter().all(|&l| l <= limit));
        assert_eq!(out.metrics.peak_context, out.query_lengths.iter().copied().max().unwrap_or(0));
        outcomes.insert(out.metrics.terminal);
        forced += out.metrics.forced_returns;
        if mode == 0 {
            let turns = out.trajectory.turns();
            assert_eq!(out.metrics.main_len, common::oracle_main_len(turns));
            assert!(out.metrics.total_tokens <= limit * branches);
        }
    }
    assert!(forced > 0, "fuzzing never forced a return");
    assert!(outcomes.len() >= 2);
}

#[test]
fn two_branch_cache_rollback_savings() {
    let script = vec![
        ActionKind::reason("plan the work"),
        ActionKind::branch("first", "collect the first part"),
        ActionKind::reason("working on the first part with several words of output"),
        ActionKind::ret("first part done"),
        ActionKind::branch("second", "collect the second part"),
        ActionKind::reason("second part step one"),
        ActionKind::reason("second part step two with a longer thought"),
        ActionKind::ret("second part done"),
        ActionKind::reason("combine both parts"),
        ActionKind::reason("double check"),
        ActionKind::finish("both", "done"),
    ];
    let prompt = "Answer the two part question.";
    let mut policy = ScriptedPolicy::new(script);
    let out = run_episode(TaskInput::new("ex", prompt), &mut policy, &mut NoTools, &BudgetConfig::default()).unwrap();
    let turns = out.trajectory.turns();
    assert_eq!(out.trajectory.fold().labels(), "a1,o1,a2,o4,a5,o8,a9,o9,a10,o10,a11,o11");

    let (spans, _) = oracle_spans(turns);
    assert_eq!(spans, vec![(1, 3), (4, 7)]);
    let in_branch: usize = spans
        .iter()
        .map(|&(k, m)| {
            turns[k].observation_tokens().len() + turns[k + 1..=m].iter().map(|t| t.token_count()).sum::<usize>()
        })
        .sum();
    let templates: usize = spans.iter().map(|&(_, m)| turns[m].observation_tokens().len()).sum();
    let prompt_ids: Vec<u32> = tokenize(prompt, Provenance::Observation).iter().map(|t| t.id()).collect();

    let cache = out.metrics.cache;
    assert_eq!(cache.rollbacks, 2);
    assert_eq!(cache.evicted, in_branch - templates);
    assert_eq!(cache.evicted, oracle_cache_evictions(&prompt_ids, turns));
    let unfolded: usize = turns.iter().map(|t| t.token_count()).sum();
    assert_eq!(unfolded - oracle_fold_len(turns), in_branch - templates);
}
