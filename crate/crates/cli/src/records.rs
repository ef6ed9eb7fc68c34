//! On-disk record types shared between stages.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use fmv_core::{ConsensusResult, ExecutionMatrix, MetricsReport, PointwiseTarget, RewardRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::manifest::{matrix_file_names, timings_path};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRecord {
    pub run_id: String,
    pub task_id: String,
    pub selected: Option<usize>,
    pub selected_candidate_id: Option<String>,
    pub no_consensus: bool,
    pub scores: BTreeMap<usize, u64>,
    pub valid_set: BTreeSet<usize>,
    pub tie_group: BTreeSet<usize>,
}

impl ConsensusRecord {
    pub fn new(run_id: &str, matrix: &ExecutionMatrix, c: &ConsensusResult) -> Self {
        Self {
            run_id: run_id.to_string(),
            task_id: matrix.task_id().to_string(),
            selected: c.selected,
            selected_candidate_id: c.selected.map(|i| matrix.candidate_ids()[i].clone()),
            no_consensus: c.no_consensus(),
            scores: c.scores.clone(),
            valid_set: c.valid_set.clone(),
            tie_group: c.tie_group.clone(),
        }
    }

    /// Rebuilds the consensus, checking it is consistent with `matrix`.
    pub fn to_result(&self, matrix: &ExecutionMatrix) -> Result<ConsensusResult> {
        let bad = |what: &str| {
            Err(CliError::data(format!(
                "consensus record for `{}` does not fit its matrix: {what}",
                self.task_id
            )))
        };
        if &self.valid_set != matrix.valid_set() {
            return bad("valid set differs");
        }
        if let Some(s) = self.selected {
            if !matrix.is_valid(s) {
                return bad("selected candidate is not valid");
            }
            if self.selected_candidate_id.as_deref() != Some(matrix.candidate_ids()[s].as_str()) {
                return bad("selected candidate id differs");
            }
        }
        Ok(ConsensusResult {
            selected: self.selected,
            scores: self.scores.clone(),
            valid_set: self.valid_set.clone(),
            tie_group: self.tie_group.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub run_id: String,
    pub task_id: String,
    pub target: Vec<Option<String>>,
    pub vote_counts: Vec<BTreeMap<String, u64>>,
    pub support: Vec<u64>,
    pub all_undefined: bool,
}

impl TargetRecord {
    pub fn new(run_id: &str, task_id: &str, t: &PointwiseTarget) -> Self {
        Self {
            run_id: run_id.to_string(),
            task_id: task_id.to_string(),
            target: t.target.clone(),
            vote_counts: t.vote_counts.clone(),
            support: t.support.clone(),
            all_undefined: t.all_undefined(),
        }
    }

    pub fn to_target(&self, matrix: &ExecutionMatrix) -> Result<PointwiseTarget> {
        if self.target.len() != matrix.n_inputs() {
            return Err(CliError::data(format!(
                "target for `{}` has {} slots, matrix has {} inputs",
                self.task_id,
                self.target.len(),
                matrix.n_inputs()
            )));
        }
        Ok(PointwiseTarget {
            target: self.target.clone(),
            vote_counts: self.vote_counts.clone(),
            support: self.support.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardLine {
    pub run_id: String,
    pub task_id: String,
    pub candidate_id: String,
    #[serde(flatten)]
    pub record: RewardRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub n_candidates: usize,
    pub n_valid: usize,
    pub n_correct: usize,
    pub selected_candidate_id: Option<String>,
    pub fmv_correct: bool,
    pub no_consensus: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_id: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub excluded_task_ids: Vec<String>,
    pub tasks: Vec<TaskSummary>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| CliError::read(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::data(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    fmv_core::ingest::write_jsonl(&mut buf, records).expect("writing to memory");
    buf
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("record serializes");
    bytes.push(b'\n');
    bytes
}

/// Loads every matrix in `dir`, sorted by task id.
pub fn load_matrices(dir: &Path) -> Result<Vec<ExecutionMatrix>> {
    let mut out: Vec<ExecutionMatrix> = Vec::new();
    for name in matrix_file_names(dir)? {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let file = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let tpath = timings_path(&path);
        let timings = match fs::read(&tpath) {
            Ok(b) => Some(
                serde_json::from_slice(&b)
                    .map_err(|e| CliError::data(format!("{}: {e}", tpath.display())))?,
            ),
            Err(_) => None,
        };
        let matrix = ExecutionMatrix::from_file(file, timings.as_ref())
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        out.push(matrix);
    }
    out.sort_by(|a, b| a.task_id().cmp(b.task_id()));
    if let Some(w) = out.windows(2).find(|w| w[0].task_id() == w[1].task_id()) {
        return Err(CliError::data(format!(
            "{}: two matrices for task `{}`",
            dir.display(),
            w[0].task_id()
        )));
    }
    if out.is_empty() {
        return Err(CliError::data(format!(
            "{}: no matrix files",
            dir.display()
        )));
    }
    Ok(out)
}

/// Indexes per-task records, rejecting duplicates and records for tasks
/// that have no matrix.
pub fn index_by_task<T>(
    records: Vec<T>,
    task_of: impl Fn(&T) -> &str,
    matrices: &[ExecutionMatrix],
    origin: &Path,
) -> Result<BTreeMap<String, T>> {
    let known: BTreeSet<&str> = matrices.iter().map(|m| m.task_id()).collect();
    let mut out = BTreeMap::new();
    for r in records {
        let id = task_of(&r).to_string();
        if !known.contains(id.as_str()) {
            return Err(CliError::data(format!(
                "{}: task `{id}` has no matrix",
                origin.display()
            )));
        }
        if out.insert(id.clone(), r).is_some() {
            return Err(CliError::data(format!(
                "{}: duplicate record for `{id}`",
                origin.display()
            )));
        }
    }
    if let Some(m) = matrices.iter().find(|m| !out.contains_key(m.task_id())) {
        return Err(CliError::data(format!(
            "{}: no record for task `{}`",
            origin.display(),
            m.task_id()
        )));
    }
    Ok(out)
}

/// File-name-safe form of a task id.
pub fn sanitize_id(task_id: &str) -> String {
    let mut s: String = task_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    // Keep clear of the timings sidecar naming.
    if s.ends_with(".timings") {
        s.push('_');
    }
    s
}
