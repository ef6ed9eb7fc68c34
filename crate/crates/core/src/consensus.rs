//! Functional majority voting over an execution matrix.
//!
//! The score of a valid candidate counts, over every other valid candidate
//! and every test input, the slots where both produced the same output. The
//! highest scoring candidate is the functional medoid. Pointwise voting
//! instead takes the per-input mode and builds a synthetic target vector.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::ExecutionMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("candidate {0} is not in the valid set")]
    NotValid(usize),
    #[error("candidate index {index} out of range for {n} candidates")]
    OutOfRange { index: usize, n: usize },
    #[error("task has no consensus: no candidate ran cleanly on every input")]
    NoConsensus,
}

/// Scores of all valid candidates and the selected medoid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub selected: Option<usize>,
    pub scores: BTreeMap<usize, u64>,
    pub valid_set: BTreeSet<usize>,
    pub tie_group: BTreeSet<usize>,
}

impl ConsensusResult {
    pub fn no_consensus(&self) -> bool {
        self.selected.is_none()
    }

    pub fn max_score(&self) -> Option<u64> {
        self.scores.values().copied().max()
    }
}

/// FMV score of valid candidate `i`.
pub fn fmv_score(matrix: &ExecutionMatrix, i: usize) -> Result<u64, ConsensusError> {
    check_index(matrix, i)?;
    if !matrix.is_valid(i) {
        return Err(ConsensusError::NotValid(i));
    }
    let score = (0..matrix.n_inputs())
        .map(|k| {
            let mine = matrix.output(i, k);
            matrix
                .valid_set()
                .iter()
                .filter(|&&j| j != i && matrix.output(j, k) == mine)
                .count() as u64
        })
        .sum();
    Ok(score)
}

/// Scores every valid candidate and selects the medoid. Ties go to the
/// lowest row, which is the lowest `sample_index`.
pub fn select_consensus(matrix: &ExecutionMatrix) -> ConsensusResult {
    let rows: Vec<usize> = (0..matrix.n_candidates()).collect();
    select_among(matrix, &rows)
}

/// Consensus restricted to the given rows, as if the other candidates had
/// never been sampled. Indices in the result refer to the full matrix.
pub fn select_among(matrix: &ExecutionMatrix, rows: &[usize]) -> ConsensusResult {
    let valid: BTreeSet<usize> = rows
        .iter()
        .copied()
        .filter(|&i| matrix.is_valid(i))
        .collect();

    let mut scores: BTreeMap<usize, u64> = valid.iter().map(|&i| (i, 0)).collect();
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for k in 0..matrix.n_inputs() {
        counts.clear();
        for &i in &valid {
            let out = matrix.output(i, k).expect("valid rows are all Ok");
            *counts.entry(out).or_insert(0) += 1;
        }
        for (&i, score) in scores.iter_mut() {
            let out = matrix.output(i, k).expect("valid rows are all Ok");
            *score += counts[out] - 1;
        }
    }

    let best = scores.values().copied().max();
    let tie_group: BTreeSet<usize> = match best {
        Some(best) => scores
            .iter()
            .filter(|(_, &s)| s == best)
            .map(|(&i, _)| i)
            .collect(),
        None => BTreeSet::new(),
    };
    ConsensusResult {
        selected: tie_group.first().copied(),
        scores,
        valid_set: valid,
        tie_group,
    }
}

/// Synthetic per-input target built from output modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointwiseTarget {
    pub target: Vec<Option<String>>,
    pub vote_counts: Vec<BTreeMap<String, u64>>,
    pub support: Vec<u64>,
}

impl PointwiseTarget {
    pub fn all_undefined(&self) -> bool {
        self.target.iter().all(Option::is_none)
    }
}

/// Per-input mode over the `Ok` outputs of all candidates, valid or not.
/// Ties resolve to the lexicographically smallest output; a slot where
/// nobody produced output stays undefined.
pub fn pointwise_target(matrix: &ExecutionMatrix) -> PointwiseTarget {
    let k = matrix.n_inputs();
    let mut target = Vec::with_capacity(k);
    let mut vote_counts = Vec::with_capacity(k);
    let mut support = Vec::with_capacity(k);
    for col in 0..k {
        let mut votes: BTreeMap<String, u64> = BTreeMap::new();
        for i in 0..matrix.n_candidates() {
            if let Some(out) = matrix.output(i, col) {
                *votes.entry(out.to_string()).or_insert(0) += 1;
            }
        }
        let mut mode: Option<(&String, u64)> = None;
        for (out, &c) in &votes {
            if mode.is_none_or(|(_, best)| c > best) {
                mode = Some((out, c));
            }
        }
        target.push(mode.map(|(out, _)| out.clone()));
        support.push(votes.values().sum());
        vote_counts.push(votes);
    }
    PointwiseTarget {
        target,
        vote_counts,
        support,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardMode {
    Joint,
    Pointwise,
}

/// Binary consensus reward for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub candidate: usize,
    pub reward: f64,
    pub mode: RewardMode,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_consensus: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub undefined_target: bool,
}

impl RewardRecord {
    fn new(candidate: usize, hit: bool, mode: RewardMode) -> Self {
        Self {
            candidate,
            reward: if hit { 1.0 } else { 0.0 },
            mode,
            no_consensus: false,
            undefined_target: false,
        }
    }
}

/// 1.0 when candidate `i` is valid and reproduces the medoid's outputs on
/// every input.
pub fn reward_joint(
    matrix: &ExecutionMatrix,
    consensus: &ConsensusResult,
    i: usize,
) -> Result<RewardRecord, ConsensusError> {
    check_index(matrix, i)?;
    let medoid = consensus.selected.ok_or(ConsensusError::NoConsensus)?;
    let hit = matrix.is_valid(i) && matrix.rows_agree(i, medoid);
    Ok(RewardRecord::new(i, hit, RewardMode::Joint))
}

/// 1.0 when candidate `i` is valid and matches every defined target slot.
/// An all-undefined target rewards nobody and flags the record.
pub fn reward_pointwise(
    matrix: &ExecutionMatrix,
    target: &PointwiseTarget,
    i: usize,
) -> Result<RewardRecord, ConsensusError> {
    check_index(matrix, i)?;
    if target.all_undefined() {
        let mut rec = RewardRecord::new(i, false, RewardMode::Pointwise);
        rec.undefined_target = true;
        return Ok(rec);
    }
    let hit = matrix.is_valid(i)
        && target
            .target
            .iter()
            .enumerate()
            .all(|(k, t)| t.as_deref().is_none_or(|t| matrix.output(i, k) == Some(t)));
    Ok(RewardRecord::new(i, hit, RewardMode::Pointwise))
}

/// Joint rewards for every candidate. Without a consensus every candidate
/// gets 0.0 and the record is flagged.
pub fn joint_rewards(matrix: &ExecutionMatrix, consensus: &ConsensusResult) -> Vec<RewardRecord> {
    (0..matrix.n_candidates())
        .map(|i| match reward_joint(matrix, consensus, i) {
            Ok(rec) => rec,
            Err(_) => {
                let mut rec = RewardRecord::new(i, false, RewardMode::Joint);
                rec.no_consensus = true;
                rec
            }
        })
        .collect()
}

pub fn pointwise_rewards(matrix: &ExecutionMatrix, target: &PointwiseTarget) -> Vec<RewardRecord> {
    (0..matrix.n_candidates())
        .map(|i| reward_pointwise(matrix, target, i).expect("index in range"))
        .collect()
}

fn check_index(matrix: &ExecutionMatrix, i: usize) -> Result<(), ConsensusError> {
    if i >= matrix.n_candidates() {
        return Err(ConsensusError::OutOfRange {
            index: i,
            n: matrix.n_candidates(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{ExecOutcome, ExecStatus};

    fn matrix(rows: &[&[Option<&str>]]) -> ExecutionMatrix {
        let k = rows.first().map_or(1, |r| r.len());
        let outcomes = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c {
                        Some(s) => ExecOutcome::ok(*s, 0, Some(0)),
                        None => ExecOutcome::failed(ExecStatus::RuntimeError, 0, Some(1)),
                    })
                    .collect()
            })
            .collect();
        let ids = (0..rows.len()).map(|i| format!("c{i}")).collect();
        ExecutionMatrix::new("t", ids, outcomes, k).unwrap()
    }

    fn three_rows() -> ExecutionMatrix {
        matrix(&[
            &[Some("a"), Some("b")],
            &[Some("a"), Some("c")],
            &[Some("a"), Some("b")],
        ])
    }

    #[test]
    fn unanimous_rows_reach_maximum() {
        let row: &[Option<&str>] = &[Some("x"), Some("y"), Some("z")];
        let m = matrix(&[row, row, row, row]);
        for i in 0..4 {
            assert_eq!(fmv_score(&m, i).unwrap(), 9);
        }
        let c = select_consensus(&m);
        assert_eq!(c.selected, Some(0));
        assert_eq!(c.tie_group.len(), 4);
        assert_eq!(
            pointwise_target(&m).target,
            vec![Some("x".into()), Some("y".into()), Some("z".into())]
        );
    }

    #[test]
    fn singleton_scores_zero() {
        let m = matrix(&[&[Some("a"), Some("b")]]);
        assert_eq!(fmv_score(&m, 0).unwrap(), 0);
        assert_eq!(select_consensus(&m).selected, Some(0));
    }

    #[test]
    fn three_row_example() {
        let m = three_rows();
        assert_eq!(fmv_score(&m, 0).unwrap(), 3);
        assert_eq!(fmv_score(&m, 1).unwrap(), 2);
        assert_eq!(fmv_score(&m, 2).unwrap(), 3);
        let c = select_consensus(&m);
        assert_eq!(c.tie_group.iter().copied().collect::<Vec<_>>(), [0, 2]);
        assert_eq!(c.selected, Some(0));
        let t = pointwise_target(&m);
        assert_eq!(t.target, vec![Some("a".to_string()), Some("b".to_string())]);
        assert_eq!(t.support, vec![3, 3]);
        let rewards: Vec<f64> = pointwise_rewards(&m, &t).iter().map(|r| r.reward).collect();
        assert_eq!(rewards, [1.0, 0.0, 1.0]);
    }

    #[test]
    fn invalid_rows_do_not_vote_in_scores() {
        // c1 is discarded; among the rest c0 agrees most.
        let m = matrix(&[
            &[Some("1"), Some("2")],
            &[None, Some("2")],
            &[Some("1"), Some("2")],
            &[Some("1"), Some("3")],
            &[Some("0"), Some("3")],
        ]);
        let c = select_consensus(&m);
        assert!(!c.valid_set.contains(&1));
        assert!(!c.scores.contains_key(&1));
        assert_eq!(c.scores[&0], 3);
        assert_eq!(c.selected, Some(0));
        assert_eq!(fmv_score(&m, 1), Err(ConsensusError::NotValid(1)));
    }

    #[test]
    fn empty_valid_set_has_no_consensus() {
        let m = matrix(&[&[None], &[None]]);
        let c = select_consensus(&m);
        assert!(c.no_consensus());
        assert!(c.scores.is_empty());
        assert_eq!(reward_joint(&m, &c, 0), Err(ConsensusError::NoConsensus));
        assert!(joint_rewards(&m, &c)
            .iter()
            .all(|r| r.reward == 0.0 && r.no_consensus));
        let t = pointwise_target(&m);
        assert_eq!(t.target, vec![None]);
        assert_eq!(t.support, vec![0]);
        assert!(pointwise_rewards(&m, &t)
            .iter()
            .all(|r| r.reward == 0.0 && r.undefined_target));
    }

    #[test]
    fn mode_tie_breaks_lexicographically() {
        let m = matrix(&[&[Some("b")], &[Some("a")]]);
        assert_eq!(pointwise_target(&m).target, vec![Some("a".into())]);
        let m = matrix(&[&[Some("a")], &[Some("a")], &[Some("b")]]);
        let t = pointwise_target(&m);
        assert_eq!(t.target, vec![Some("a".into())]);
        assert_eq!(t.vote_counts[0]["a"], 2);
    }

    #[test]
    fn pointwise_counts_invalid_candidates() {
        // c2 is invalid overall but its slot-0 output still votes.
        let m = matrix(&[
            &[Some("x"), Some("p")],
            &[Some("y"), Some("p")],
            &[Some("y"), None],
        ]);
        let t = pointwise_target(&m);
        assert_eq!(t.target, vec![Some("y".into()), Some("p".into())]);
        assert_eq!(t.support, vec![3, 2]);
        let r: Vec<f64> = pointwise_rewards(&m, &t).iter().map(|r| r.reward).collect();
        assert_eq!(r, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn joint_reward_requires_every_slot() {
        let m = matrix(&[
            &[Some("1"), Some("2"), Some("3")],
            &[Some("1"), Some("2"), Some("3")],
            &[Some("1"), Some("2"), Some("4")],
            &[Some("1"), None, Some("3")],
        ]);
        let c = select_consensus(&m);
        assert_eq!(c.selected, Some(0));
        assert_eq!(reward_joint(&m, &c, 0).unwrap().reward, 1.0);
        assert_eq!(reward_joint(&m, &c, 1).unwrap().reward, 1.0);
        assert_eq!(reward_joint(&m, &c, 2).unwrap().reward, 0.0);
        assert_eq!(reward_joint(&m, &c, 3).unwrap().reward, 0.0);
        assert!(matches!(
            reward_joint(&m, &c, 9),
            Err(ConsensusError::OutOfRange { .. })
        ));
    }

    #[test]
    fn partial_undefined_target_checks_defined_slots_only() {
        let m = matrix(&[&[Some("a"), None], &[Some("a"), None]]);
        let t = pointwise_target(&m);
        assert_eq!(t.target, vec![Some("a".into()), None]);
        // Both rows are invalid, so nobody is rewarded even on defined slots.
        assert!(pointwise_rewards(&m, &t)
            .iter()
            .all(|r| r.reward == 0.0 && !r.undefined_target));
    }

    #[test]
    fn select_among_subset() {
        let m = three_rows();
        let c = select_among(&m, &[1, 2]);
        assert_eq!(c.scores.len(), 2);
        assert_eq!(c.scores[&1], 1);
        assert_eq!(c.selected, Some(1));
    }
}
