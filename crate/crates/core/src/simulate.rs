//! Synthetic execution matrices from a parametric ensemble model.
//!
//! Each candidate is drawn independently as correct (reproduces the oracle
//! row), invalid (one failed cell) or wrong (one of a fixed set of buggy
//! behaviors). Buggy programs are consistently buggy, so wrong behaviors are
//! whole rows. An optional per-cell corruption rate models candidates that
//! only disagree on edge cases.

use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{ExecOutcome, ExecStatus};
use crate::matrix::ExecutionMatrix;
use crate::metrics::{scaling_curve, CurveConfig, CurvePoint, MetricsError, PoolTask};
use crate::task::Task;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid noise model: {0}")]
    InvalidModel(String),
    #[error("need at least one candidate and one task")]
    EmptyEnsemble,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub p_correct: f64,
    pub p_invalid: f64,
    pub wrong_mode_count: usize,
    /// Share of wrong candidates that fall into the most common wrong behavior.
    pub wrong_concentration: f64,
    pub n_inputs: usize,
    pub cell_corruption: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            p_correct: 0.4,
            p_invalid: 0.0,
            wrong_mode_count: 8,
            wrong_concentration: 0.2,
            n_inputs: 5,
            cell_corruption: 0.0,
            seed: 42,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: &str| Err(SimulationError::InvalidModel(m.to_string()));
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.p_correct) || !unit(self.p_invalid) {
            return bad("probabilities must lie in [0, 1]");
        }
        if self.p_correct + self.p_invalid > 1.0 + 1e-12 {
            return bad("p_correct + p_invalid must not exceed 1");
        }
        if self.wrong_mode_count == 0 {
            return bad("wrong_mode_count must be >= 1");
        }
        if !unit(self.wrong_concentration) || !unit(self.cell_corruption) {
            return bad("wrong_concentration and cell_corruption must lie in [0, 1]");
        }
        if self.n_inputs == 0 {
            return bad("n_inputs must be >= 1");
        }
        Ok(())
    }

    fn wrong_mode(&self, rng: &mut ChaCha8Rng) -> usize {
        if self.wrong_mode_count == 1 || rng.random::<f64>() < self.wrong_concentration {
            0
        } else {
            rng.random_range(1..self.wrong_mode_count)
        }
    }
}

/// One simulated task: its matrix and the oracle row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTask {
    pub matrix: ExecutionMatrix,
    pub oracle: Vec<String>,
}

impl SimulatedTask {
    /// The task record that would have produced this matrix.
    pub fn task(&self) -> Task {
        Task {
            task_id: self.matrix.task_id().to_string(),
            prompt: String::new(),
            test_inputs: (0..self.matrix.n_inputs())
                .map(|k| format!("x{k}"))
                .collect(),
            oracle_outputs: Some(self.oracle.clone()),
            metadata: Default::default(),
        }
    }
}

pub fn sim_task_id(index: usize) -> String {
    format!("sim-{index:04}")
}

enum Behavior {
    Correct,
    Wrong(usize),
}

/// Draws the matrix of task `task_index`. The random stream depends only on
/// the model seed and the task index.
pub fn simulate_task(
    model: &NoiseModel,
    task_index: usize,
    n_candidates: usize,
) -> Result<SimulatedTask, SimulationError> {
    model.validate()?;
    if n_candidates == 0 {
        return Err(SimulationError::EmptyEnsemble);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(task_index as u64);

    let k = model.n_inputs;
    let oracle: Vec<String> = (0..k).map(|col| format!("y{col}")).collect();
    let correct_given_invalid = if model.p_invalid < 1.0 {
        model.p_correct / (1.0 - model.p_invalid)
    } else {
        0.0
    };

    let task_id = sim_task_id(task_index);
    let mut rows = Vec::with_capacity(n_candidates);
    for cand in 0..n_candidates {
        let u: f64 = rng.random();
        let invalid = u < model.p_invalid;
        let behavior = if invalid {
            if rng.random::<f64>() < correct_given_invalid {
                Behavior::Correct
            } else {
                Behavior::Wrong(model.wrong_mode(&mut rng))
            }
        } else if u < model.p_invalid + model.p_correct {
            Behavior::Correct
        } else {
            Behavior::Wrong(model.wrong_mode(&mut rng))
        };
        let mut row: Vec<ExecOutcome> = (0..k)
            .map(|col| {
                let out = match behavior {
                    Behavior::Correct => oracle[col].clone(),
                    Behavior::Wrong(m) => format!("w{m}.{col}"),
                };
                ExecOutcome::ok(out, 0, Some(0))
            })
            .collect();
        if model.cell_corruption > 0.0 {
            for (col, cell) in row.iter_mut().enumerate() {
                if rng.random::<f64>() < model.cell_corruption {
                    *cell = ExecOutcome::ok(format!("z{cand}.{col}"), 0, Some(0));
                }
            }
        }
        if invalid {
            let col = rng.random_range(0..k);
            let status = if rng.random::<bool>() {
                ExecStatus::RuntimeError
            } else {
                ExecStatus::Timeout
            };
            row[col] = ExecOutcome::failed(status, 0, None);
        }
        rows.push(row);
    }
    let ids = (0..n_candidates)
        .map(|i| format!("{task_id}/{i}"))
        .collect();
    let matrix = ExecutionMatrix::new(task_id, ids, rows, k).expect("rectangular by construction");
    Ok(SimulatedTask { matrix, oracle })
}

/// A single simulated matrix (task index 0).
pub fn simulate_matrix(
    model: &NoiseModel,
    n_candidates: usize,
) -> Result<SimulatedTask, SimulationError> {
    simulate_task(model, 0, n_candidates)
}

/// Simulates `n_tasks` tasks, spreading the work across threads.
pub fn simulate_tasks(
    model: &NoiseModel,
    n_tasks: usize,
    n_candidates: usize,
) -> Result<Vec<SimulatedTask>, SimulationError> {
    model.validate()?;
    if n_tasks == 0 || n_candidates == 0 {
        return Err(SimulationError::EmptyEnsemble);
    }
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(n_tasks);
    let chunk = n_tasks.div_ceil(workers);
    let mut out = Vec::with_capacity(n_tasks);
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(n_tasks))
                        .map(|t| simulate_task(model, t, n_candidates))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        for h in handles {
            out.push(h.join().expect("simulation worker panicked"));
        }
    });
    Ok(out
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingExperiment {
    pub n_tasks: usize,
    pub pool_size: usize,
    pub curve: CurveConfig,
}

/// Simulates a benchmark and measures consensus accuracy per budget.
pub fn run_scaling_experiment(
    model: &NoiseModel,
    experiment: &ScalingExperiment,
) -> Result<Vec<CurvePoint>, SimulationError> {
    let tasks = simulate_tasks(model, experiment.n_tasks, experiment.pool_size)?;
    let pool: Vec<PoolTask<'_>> = tasks
        .iter()
        .map(|t| PoolTask {
            matrix: &t.matrix,
            oracle: &t.oracle,
        })
        .collect();
    Ok(scaling_curve(&pool, &experiment.curve)?)
}
