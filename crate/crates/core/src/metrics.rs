//! Benchmark metrics computed against oracle outputs.
//!
//! A candidate is correct when it is valid and its execution vector equals
//! the oracle outputs on every input, using the same normalization canon
//! that consensus uses.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{select_among, ConsensusResult};
use crate::matrix::ExecutionMatrix;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TRIALS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no tasks to aggregate")]
    Empty,
    #[error("task `{0}` has no candidates")]
    NoCandidates(String),
    #[error("task `{task_id}`: oracle has {oracle} outputs for {inputs} inputs")]
    OracleLength {
        task_id: String,
        oracle: usize,
        inputs: usize,
    },
    #[error("bootstrap needs at least one resample")]
    ZeroResamples,
    #[error("budget {budget} exceeds the pool of {pool} candidates in task `{task_id}`")]
    BudgetExceedsPool {
        budget: usize,
        pool: usize,
        task_id: String,
    },
    #[error("budgets must be positive")]
    ZeroBudget,
    #[error("trials must be positive")]
    ZeroTrials,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskEvaluation {
    pub task_id: String,
    pub per_candidate_correct: Vec<bool>,
    pub fmv_correct: bool,
    pub no_consensus: bool,
}

impl TaskEvaluation {
    pub fn correct_count(&self) -> usize {
        self.per_candidate_correct.iter().filter(|&&c| c).count()
    }

    pub fn n_candidates(&self) -> usize {
        self.per_candidate_correct.len()
    }
}

/// Correctness of every candidate against `oracle`.
pub fn candidate_correctness(
    matrix: &ExecutionMatrix,
    oracle: &[String],
) -> Result<Vec<bool>, MetricsError> {
    if oracle.len() != matrix.n_inputs() {
        return Err(MetricsError::OracleLength {
            task_id: matrix.task_id().to_string(),
            oracle: oracle.len(),
            inputs: matrix.n_inputs(),
        });
    }
    Ok((0..matrix.n_candidates())
        .map(|i| {
            matrix.is_valid(i)
                && oracle
                    .iter()
                    .enumerate()
                    .all(|(k, want)| matrix.output(i, k) == Some(want.as_str()))
        })
        .collect())
}

pub fn evaluate_task(
    matrix: &ExecutionMatrix,
    consensus: &ConsensusResult,
    oracle: &[String],
) -> Result<TaskEvaluation, MetricsError> {
    let per_candidate_correct = candidate_correctness(matrix, oracle)?;
    let fmv_correct = consensus
        .selected
        .is_some_and(|s| per_candidate_correct.get(s).copied().unwrap_or(false));
    Ok(TaskEvaluation {
        task_id: matrix.task_id().to_string(),
        per_candidate_correct,
        fmv_correct,
        no_consensus: consensus.no_consensus(),
    })
}

/// Per-task fraction of correct candidates.
pub fn mean_values(evals: &[TaskEvaluation]) -> Result<Vec<f64>, MetricsError> {
    if evals.is_empty() {
        return Err(MetricsError::Empty);
    }
    evals
        .iter()
        .map(|e| {
            if e.n_candidates() == 0 {
                Err(MetricsError::NoCandidates(e.task_id.clone()))
            } else {
                Ok(e.correct_count() as f64 / e.n_candidates() as f64)
            }
        })
        .collect()
}

pub fn best_values(evals: &[TaskEvaluation]) -> Result<Vec<f64>, MetricsError> {
    indicator(evals, |e| e.correct_count() > 0)
}

pub fn fmv_values(evals: &[TaskEvaluation]) -> Result<Vec<f64>, MetricsError> {
    indicator(evals, |e| e.fmv_correct)
}

fn indicator(
    evals: &[TaskEvaluation],
    f: impl Fn(&TaskEvaluation) -> bool,
) -> Result<Vec<f64>, MetricsError> {
    if evals.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(evals.iter().map(|e| if f(e) { 1.0 } else { 0.0 }).collect())
}

fn average(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Expected accuracy of a single sample, averaged over tasks.
pub fn mean_at_n(evals: &[TaskEvaluation]) -> Result<f64, MetricsError> {
    mean_values(evals).map(|v| average(&v))
}

/// Fraction of tasks with at least one correct candidate.
pub fn best_at_n(evals: &[TaskEvaluation]) -> Result<f64, MetricsError> {
    best_values(evals).map(|v| average(&v))
}

/// Fraction of tasks whose selected medoid is correct.
pub fn fmv_accuracy(evals: &[TaskEvaluation]) -> Result<f64, MetricsError> {
    fmv_values(evals).map(|v| average(&v))
}

/// Incremental mean and variance. Identical inputs yield exactly zero.
#[derive(Debug, Default, Clone, Copy)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn population_std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0).sqrt()
        }
    }
}

/// Standard deviation of `resamples` bootstrap means, resampling tasks with
/// replacement from a generator seeded with `seed`.
pub fn bootstrap_error(values: &[f64], resamples: usize, seed: u64) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if resamples == 0 {
        return Err(MetricsError::ZeroResamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Welford::default();
    let t = values.len();
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..t {
            sum += values[rng.random_range(0..t)];
        }
        acc.push(sum / t as f64);
    }
    Ok(acc.population_std())
}

fn spread_of(values: &[f64]) -> f64 {
    let mut acc = Welford::default();
    values.iter().for_each(|&v| acc.push(v));
    acc.population_std()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

/// A metric with its uncertainty. `std_error` is the bootstrap standard
/// error of the mean; `task_std_dev` is the spread of per-task values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub std_error: f64,
    pub task_std_dev: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl MetricValue {
    fn from_values(values: &[f64], cfg: BootstrapConfig) -> Result<Self, MetricsError> {
        Ok(Self {
            value: average(values),
            std_error: bootstrap_error(values, cfg.resamples, cfg.seed)?,
            task_std_dev: spread_of(values),
            resamples: cfg.resamples,
            seed: cfg.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_tasks: usize,
    pub excluded_tasks: usize,
    pub no_consensus_tasks: usize,
    pub mean_at_n: MetricValue,
    pub best_at_n: MetricValue,
    pub fmv_accuracy: MetricValue,
}

impl MetricsReport {
    pub fn compute(
        evals: &[TaskEvaluation],
        excluded_tasks: usize,
        cfg: BootstrapConfig,
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            n_tasks: evals.len(),
            excluded_tasks,
            no_consensus_tasks: evals.iter().filter(|e| e.no_consensus).count(),
            mean_at_n: MetricValue::from_values(&mean_values(evals)?, cfg)?,
            best_at_n: MetricValue::from_values(&best_values(evals)?, cfg)?,
            fmv_accuracy: MetricValue::from_values(&fmv_values(evals)?, cfg)?,
        })
    }

    /// Fixed-width text table for terminals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "tasks evaluated: {}  excluded (no oracle): {}  no consensus: {}\n",
            self.n_tasks, self.excluded_tasks, self.no_consensus_tasks
        ));
        s.push_str(&format!(
            "{:<14} {:>9} {:>10} {:>10}\n",
            "metric", "value", "std_err", "task_sd"
        ));
        for (name, m) in [
            ("mean@N", &self.mean_at_n),
            ("FMV", &self.fmv_accuracy),
            ("best@N", &self.best_at_n),
        ] {
            s.push_str(&format!(
                "{:<14} {:>8.2}% {:>9.2}% {:>9.2}%\n",
                name,
                100.0 * m.value,
                100.0 * m.std_error,
                100.0 * m.task_std_dev
            ));
        }
        s.push_str(&format!(
            "bootstrap: B={} seed={}\n",
            self.mean_at_n.resamples, self.mean_at_n.seed
        ));
        s
    }
}

/// One task entering the scaling curve: its full candidate pool and oracle.
#[derive(Debug, Clone, Copy)]
pub struct PoolTask<'a> {
    pub matrix: &'a ExecutionMatrix,
    pub oracle: &'a [String],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    pub budgets: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub resamples: usize,
}

impl CurveConfig {
    pub fn new(budgets: Vec<usize>) -> Self {
        Self {
            budgets,
            trials: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
            resamples: DEFAULT_RESAMPLES,
        }
    }
}

/// Powers of two up to and including `pool`, plus `pool` itself.
pub fn default_budgets(pool: usize) -> Vec<usize> {
    let mut b: Vec<usize> = std::iter::successors(Some(1usize), |&n| n.checked_mul(2))
        .take_while(|&n| n <= pool)
        .collect();
    if pool > 0 && b.last() != Some(&pool) {
        b.push(pool);
    }
    b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub fmv_acc: f64,
    pub mean_acc: f64,
    /// Bootstrap standard deviation of `fmv_acc` across tasks.
    pub spread: f64,
}

/// Accuracy of consensus as a function of rollout budget.
///
/// For each budget `n` every task draws `n` candidates without replacement
/// `trials` times and recomputes the medoid on the drawn rows. Draws are
/// seeded per (task, budget). Two budgets are enumerated instead of sampled:
/// `n = 1` visits every singleton and `n` equal to the pool uses the pool
/// itself, so both points are exact.
///
/// `mean_acc` is the per-task fraction of correct candidates in the full
/// pool, which is the exact expected accuracy of a uniformly drawn subset
/// of any size.
pub fn scaling_curve(
    tasks: &[PoolTask<'_>],
    cfg: &CurveConfig,
) -> Result<Vec<CurvePoint>, MetricsError> {
    if tasks.is_empty() {
        return Err(MetricsError::Empty);
    }
    if cfg.trials == 0 {
        return Err(MetricsError::ZeroTrials);
    }
    let correctness = tasks
        .iter()
        .map(|t| candidate_correctness(t.matrix, t.oracle))
        .collect::<Result<Vec<_>, _>>()?;
    for &n in &cfg.budgets {
        if n == 0 {
            return Err(MetricsError::ZeroBudget);
        }
        if let Some(t) = tasks.iter().find(|t| t.matrix.n_candidates() < n) {
            return Err(MetricsError::BudgetExceedsPool {
                budget: n,
                pool: t.matrix.n_candidates(),
                task_id: t.matrix.task_id().to_string(),
            });
        }
    }
    let mean_per_task: Vec<f64> = correctness
        .iter()
        .map(|c| c.iter().filter(|&&x| x).count() as f64 / c.len() as f64)
        .collect();
    let mean_acc = average(&mean_per_task);

    let mut points = Vec::with_capacity(cfg.budgets.len());
    for &n in &cfg.budgets {
        let mut fmv_per_task = Vec::with_capacity(tasks.len());
        for (t, (task, correct)) in tasks.iter().zip(&correctness).enumerate() {
            let pool = task.matrix.n_candidates();
            let value = if n == 1 {
                // A singleton is its own medoid exactly when it is valid.
                let hits = (0..pool)
                    .filter(|&r| {
                        select_among(task.matrix, &[r])
                            .selected
                            .is_some_and(|s| correct[s])
                    })
                    .count();
                hits as f64 / pool as f64
            } else if n == pool {
                let all: Vec<usize> = (0..pool).collect();
                let hit = select_among(task.matrix, &all)
                    .selected
                    .is_some_and(|s| correct[s]);
                if hit {
                    1.0
                } else {
                    0.0
                }
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((t as u64) << 32) | n as u64);
                let mut hits = 0usize;
                for _ in 0..cfg.trials {
                    let mut rows = index::sample(&mut rng, pool, n).into_vec();
                    rows.sort_unstable();
                    let consensus = select_among(task.matrix, &rows);
                    if consensus.selected.is_some_and(|s| correct[s]) {
                        hits += 1;
                    }
                }
                hits as f64 / cfg.trials as f64
            };
            fmv_per_task.push(value);
        }
        points.push(CurvePoint {
            n,
            fmv_acc: average(&fmv_per_task),
            mean_acc,
            spread: bootstrap_error(&fmv_per_task, cfg.resamples, cfg.seed)?,
        });
    }
    Ok(points)
}

/// CSV with header `n,fmv_acc,mean_acc,spread`.
pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("n,fmv_acc,mean_acc,spread\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{}\n",
            p.n, p.fmv_acc, p.mean_acc, p.spread
        ));
    }
    s
}
