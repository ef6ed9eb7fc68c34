//! Consensus checked against brute-force recomputation on random matrices.

use std::collections::BTreeMap;

use fmv_core::consensus::{
    fmv_score, joint_rewards, pointwise_rewards, pointwise_target, reward_joint, select_consensus,
};
use fmv_core::metrics::{mean_at_n, TaskEvaluation};
use fmv_core::{normalize_output, ExecOutcome, ExecStatus, ExecutionMatrix};
use proptest::prelude::*;

type Grid = Vec<Vec<Option<String>>>;

fn to_matrix(grid: &Grid, k: usize) -> ExecutionMatrix {
    let rows = grid
        .iter()
        .map(|r| {
            r.iter()
                .map(|c| match c {
                    Some(s) => ExecOutcome::ok(s.clone(), 0, Some(0)),
                    None => ExecOutcome::failed(ExecStatus::RuntimeError, 0, Some(1)),
                })
                .collect()
        })
        .collect();
    let ids = (0..grid.len()).map(|i| format!("c{i}")).collect();
    ExecutionMatrix::new("t", ids, rows, k).unwrap()
}

fn brute_valid(grid: &Grid) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| grid[i].iter().all(Option::is_some))
        .collect()
}

fn brute_score(grid: &Grid, i: usize) -> u64 {
    let valid = brute_valid(grid);
    let mut s = 0;
    for &j in &valid {
        if j == i {
            continue;
        }
        for (a, b) in grid[i].iter().zip(&grid[j]) {
            if a == b {
                s += 1;
            }
        }
    }
    s
}

fn brute_target(grid: &Grid, k: usize) -> Vec<Option<String>> {
    (0..k)
        .map(|col| {
            let mut best: Option<(String, usize)> = None;
            for sym in ["a", "b", "c"] {
                let c = grid
                    .iter()
                    .filter(|r| r[col].as_deref() == Some(sym))
                    .count();
                if c > 0 && best.as_ref().is_none_or(|(_, b)| c > *b) {
                    best = Some((sym.to_string(), c));
                }
            }
            best.map(|(s, _)| s)
        })
        .collect()
}

fn grid_strategy() -> impl Strategy<Value = (Grid, usize)> {
    (1usize..=16, 1usize..=8).prop_flat_map(|(n, k)| {
        let cell = prop_oneof![
            1 => Just(None),
            8 => prop::sample::select(vec!["a", "b", "c"]).prop_map(|s| Some(s.to_string())),
        ];
        (
            prop::collection::vec(prop::collection::vec(cell, k), n),
            Just(k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn scores_match_triple_loop((grid, k) in grid_strategy()) {
        let m = to_matrix(&grid, k);
        let c = select_consensus(&m);
        let valid = brute_valid(&grid);
        prop_assert_eq!(c.valid_set.iter().copied().collect::<Vec<_>>(), valid.clone());
        for &i in &valid {
            let expect = brute_score(&grid, i);
            prop_assert_eq!(c.scores[&i], expect);
            prop_assert_eq!(fmv_score(&m, i).unwrap(), expect);
        }
        let best = valid.iter().map(|&i| brute_score(&grid, i)).max();
        let expect_sel = valid.iter().copied().find(|&i| Some(brute_score(&grid, i)) == best);
        prop_assert_eq!(c.selected, expect_sel);
    }

    #[test]
    fn score_sum_is_even_and_bounded((grid, k) in grid_strategy()) {
        let c = select_consensus(&to_matrix(&grid, k));
        let total: u64 = c.scores.values().sum();
        prop_assert_eq!(total % 2, 0);
        let cap = (c.valid_set.len().saturating_sub(1) * k) as u64;
        prop_assert!(c.scores.values().all(|&s| s <= cap));
        if let Some(sel) = c.selected {
            prop_assert!(c.tie_group.contains(&sel));
            prop_assert!(c.tie_group.is_subset(&c.valid_set));
        } else {
            prop_assert!(c.valid_set.is_empty());
        }
    }

    #[test]
    fn pointwise_matches_counting((grid, k) in grid_strategy()) {
        let t = pointwise_target(&to_matrix(&grid, k));
        prop_assert_eq!(&t.target, &brute_target(&grid, k));
        for col in 0..k {
            let support = grid.iter().filter(|r| r[col].is_some()).count() as u64;
            prop_assert_eq!(t.support[col], support);
            prop_assert_eq!(t.target[col].is_none(), support == 0);
        }
    }

    #[test]
    fn relabeling_permutes_scores(
        (grid, k) in grid_strategy(),
        seed in any::<u64>(),
    ) {
        let n = grid.len();
        let mut perm: Vec<usize> = (0..n).collect();
        // Fisher-Yates with a tiny LCG keeps the permutation test-local.
        let mut state = seed | 1;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let permuted: Grid = perm.iter().map(|&p| grid[p].clone()).collect();
        let a = select_consensus(&to_matrix(&grid, k));
        let b = select_consensus(&to_matrix(&permuted, k));
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(a.scores.get(&old), b.scores.get(&new));
        }
        let image: Vec<usize> = a.tie_group.iter().map(|&old| perm.iter().position(|&p| p == old).unwrap()).collect();
        prop_assert_eq!(b.selected, image.iter().copied().min());
    }

    #[test]
    fn rewards_are_binary_and_respect_validity((grid, k) in grid_strategy()) {
        let m = to_matrix(&grid, k);
        let c = select_consensus(&m);
        let t = pointwise_target(&m);
        for r in joint_rewards(&m, &c).iter().chain(pointwise_rewards(&m, &t).iter()) {
            prop_assert!(r.reward == 0.0 || r.reward == 1.0);
            if !m.is_valid(r.candidate) {
                prop_assert_eq!(r.reward, 0.0);
            }
        }
        if let Some(sel) = c.selected {
            prop_assert_eq!(reward_joint(&m, &c, sel).unwrap().reward, 1.0);
        }
    }

    #[test]
    fn unanimous_valid_rows(
        row in prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 1..8),
        n in 1usize..10,
        broken in prop::collection::vec(any::<bool>(), 10),
    ) {
        let k = row.len();
        let mut grid: Grid = (0..n).map(|_| row.iter().map(|s| Some(s.to_string())).collect()).collect();
        for (i, r) in grid.iter_mut().enumerate().skip(1) {
            if broken[i] {
                r[0] = None;
            }
        }
        let m = to_matrix(&grid, k);
        let c = select_consensus(&m);
        let cap = ((c.valid_set.len() - 1) * k) as u64;
        prop_assert!(c.scores.values().all(|&s| s == cap));
        for r in joint_rewards(&m, &c) {
            let expect = if m.is_valid(r.candidate) { 1.0 } else { 0.0 };
            prop_assert_eq!(r.reward, expect);
        }
        let t = pointwise_target(&m);
        let medoid: Vec<Option<String>> = (0..k).map(|col| m.output(c.selected.unwrap(), col).map(str::to_string)).collect();
        prop_assert_eq!(t.target, medoid);
    }

    #[test]
    fn valid_set_is_monotone((grid, k) in grid_strategy(), pick in any::<prop::sample::Index>()) {
        let before = to_matrix(&grid, k).valid_set().clone();
        let cells: Vec<(usize, usize)> = (0..grid.len())
            .flat_map(|i| (0..k).map(move |col| (i, col)))
            .filter(|&(i, col)| grid[i][col].is_none())
            .collect();
        if !cells.is_empty() {
            let (i, col) = cells[pick.index(cells.len())];
            let mut fixed = grid.clone();
            fixed[i][col] = Some("a".into());
            let after = to_matrix(&fixed, k).valid_set().clone();
            prop_assert!(before.is_subset(&after));
        }
    }

    #[test]
    fn normalization_is_idempotent(raw in prop::collection::vec(any::<u8>(), 0..64)) {
        if let Ok(once) = normalize_output(&raw) {
            prop_assert_eq!(normalize_output(once.as_bytes()).unwrap(), once);
        }
    }

    #[test]
    fn normalization_is_idempotent_on_text(raw in "[ a-c\t\r\n]{0,40}") {
        if let Ok(once) = normalize_output(raw.as_bytes()) {
            prop_assert_eq!(normalize_output(once.as_bytes()).unwrap(), once.clone());
            prop_assert!(once.lines().all(|l| l == l.trim_end()));
            prop_assert!(!once.contains("\r\n"));
        }
    }

    #[test]
    fn mean_invariant_under_candidate_permutation(
        correct in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..12), 1..6),
    ) {
        let evals: Vec<TaskEvaluation> = correct.iter().map(|c| TaskEvaluation {
            task_id: "t".into(), per_candidate_correct: c.clone(), fmv_correct: false, no_consensus: false,
        }).collect();
        let reversed: Vec<TaskEvaluation> = evals.iter().map(|e| {
            let mut e = e.clone();
            e.per_candidate_correct.reverse();
            e
        }).collect();
        prop_assert_eq!(mean_at_n(&evals).unwrap(), mean_at_n(&reversed).unwrap());
    }
}

#[test]
fn pointwise_vote_counts_are_exhaustive() {
    let grid: Grid = vec![
        vec![Some("a".into()), None],
        vec![Some("b".into()), Some("c".into())],
        vec![Some("b".into()), Some("c".into())],
    ];
    let t = pointwise_target(&to_matrix(&grid, 2));
    let expect0: BTreeMap<String, u64> = [("a".to_string(), 1), ("b".to_string(), 2)].into();
    assert_eq!(t.vote_counts[0], expect0);
    assert_eq!(t.target, vec![Some("b".into()), Some("c".into())]);
}
