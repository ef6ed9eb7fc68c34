//! Functional majority voting: pick a consensus program among sampled
//! candidates by executing them on shared inputs and maximizing pairwise
//! output agreement.

pub mod consensus;
pub mod exec;
pub mod generate;
pub mod ingest;
pub mod matrix;
pub mod metrics;
pub mod simulate;
pub mod task;

pub use consensus::{
    fmv_score, pointwise_target, reward_joint, reward_pointwise, select_consensus, ConsensusResult,
    PointwiseTarget, RewardMode, RewardRecord,
};
pub use exec::{
    normalize_output, run_candidate, ExecError, ExecOutcome, ExecStatus, ResourceLimits,
    RunnerCommand,
};
pub use generate::{extract_code, sample_candidates, SamplingConfig};
pub use ingest::{load_corpus, split_holdout, Corpus};
pub use matrix::{valid_set, ExecCache, ExecutionMatrix, MatrixBuilder};
pub use metrics::{CurvePoint, MetricsReport, TaskEvaluation};
pub use simulate::{simulate_matrix, NoiseModel};
pub use task::{Candidate, Task};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
