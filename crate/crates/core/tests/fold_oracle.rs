mod common;

use common::{oracle_fold, oracle_main, oracle_main_len, random_turns};
use context_fold::context::{fold, main_thread_tokens, ActionKind, Thread, TokenCount, Trajectory, Turn};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn positions(f: &context_fold::context::FoldedContext<'_>) -> Vec<(usize, usize)> {
    f.items.iter().map(|i| (i.action.index() - 1, i.observation.index() - 1)).collect()
}

#[test]
fn matches_span_deletion_on_random_histories() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let len = rng.random_range(0..60);
        let turns = random_turns(&mut rng, len);
        let traj = Trajectory::from_turns("t", turns.clone()).expect("generator emits well-formed histories");
        let f = fold("t", &turns).unwrap();
        assert_eq!(positions(&f), oracle_fold(&turns));
        assert_eq!(f.count_tokens(), traj.fold().count_tokens());

        let main = oracle_main(&turns);
        let th = traj.threads();
        assert!(th.iter().zip(&main).all(|(t, &m)| (*t == Thread::Main) == m));
        assert_eq!(main_thread_tokens(&turns).unwrap(), oracle_main_len(&turns));
    }
}

#[test]
fn every_prefix_folds_like_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let turns = random_turns(&mut rng, 40);
        for t in 0..=turns.len() {
            let f = fold("t", &turns[..t]).unwrap();
            assert_eq!(positions(&f), oracle_fold(&turns[..t]));
        }
    }
}

#[test]
fn worked_example_labels() {
    let r = |i| Turn::ok(i, ActionKind::reason(format!("step {i}")), format!("result {i}"));
    let b = |i| Turn::ok(i, ActionKind::branch("sub", "go"), "Branch created.");
    let ret = |i| Turn::ok(i, ActionKind::ret("done"), "Returned from branch with message: done");
    let h = vec![r(1), b(2), r(3), ret(4), b(5), r(6), r(7), ret(8), r(9), r(10)];
    assert_eq!(fold("q", &h).unwrap().labels(), "a1,o1,a2,o4,a5,o8,a9,o9,a10,o10");
}

proptest! {
    #[test]
    fn refolding_is_idempotent(seed in any::<u64>(), len in 0usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let turns = random_turns(&mut rng, len);
        let f = fold("t", &turns).unwrap();
        let again = f.to_history();
        let f2 = fold("t", &again).unwrap();
        prop_assert_eq!(f.len(), f2.len());
        prop_assert_eq!(f.count_tokens(), f2.count_tokens());
        for (x, y) in f.items.iter().zip(&f2.items) {
            prop_assert_eq!(x.action.action(), y.action.action());
            prop_assert_eq!(x.observation.observation(), y.observation.observation());
        }
    }

    #[test]
    fn folding_never_grows_the_context(seed in any::<u64>(), len in 0usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let turns = random_turns(&mut rng, len);
        let f = fold("t", &turns).unwrap();
        prop_assert!(f.count_tokens() <= turns.count_tokens());
        let branches = turns.iter().filter(|t| t.opens_branch() && !t.sealed()).count();
        if branches == 0 {
            prop_assert_eq!(f.count_tokens(), turns.count_tokens());
        }
    }

    #[test]
    fn structural_errors_point_at_the_first_bad_turn(seed in any::<u64>(), len in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut turns = random_turns(&mut rng, len);
        let open = common::oracle_spans(&turns).1;
        let i = turns.len() + 1;
        let bad = if open.is_some() {
            Turn::ok(i, ActionKind::branch("x", "y"), "Branch created.")
        } else {
            Turn::ok(i, ActionKind::ret("x"), "Returned from branch with message: x")
        };
        turns.push(bad);
        prop_assert_eq!(fold("t", &turns).unwrap_err().index, i);
    }
}
