//! Workloads shared by the benchmarks.

use fmv_core::simulate::{simulate_task, SimulatedTask};
use fmv_core::NoiseModel;

/// A task with `n` candidates and `k` inputs where wrong programs mostly
/// disagree, with a sprinkling of invalid rows and edge-case corruption.
pub fn diffuse_task(n: usize, k: usize) -> SimulatedTask {
    let model = NoiseModel {
        p_correct: 0.4,
        p_invalid: 0.1,
        n_inputs: k,
        cell_corruption: 0.05,
        ..NoiseModel::default()
    };
    simulate_task(&model, 0, n).expect("valid model")
}
