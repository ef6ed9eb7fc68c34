//! The N×K execution matrix of a task and its orchestration.
//!
//! Rows are candidates ordered by `sample_index`, columns are test inputs.
//! Row order is therefore also the tie-break order used by consensus.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::{self, ExecError, ExecOutcome, ExecStatus, ResourceLimits, RunnerCommand};
use crate::task::{Candidate, Task};

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("malformed matrix: {0}")]
    Shape(String),
    #[error("candidate `{candidate_id}` belongs to task `{found}`, expected `{expected}`")]
    ForeignCandidate {
        candidate_id: String,
        found: String,
        expected: String,
    },
    #[error("task `{task_id}`: {reason}")]
    InvalidInput { task_id: String, reason: String },
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("execution of task `{task_id}` failed: {source}")]
    Execution {
        task_id: String,
        #[source]
        source: ExecError,
    },
    #[error("execution cache at {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Outcomes of every candidate on every test input of one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionMatrix {
    task_id: String,
    candidate_ids: Vec<String>,
    outcomes: Vec<Vec<ExecOutcome>>,
    n_inputs: usize,
    valid_set: BTreeSet<usize>,
}

impl ExecutionMatrix {
    /// Assembles a matrix from rows of outcomes, computing the valid set.
    pub fn new(
        task_id: impl Into<String>,
        candidate_ids: Vec<String>,
        outcomes: Vec<Vec<ExecOutcome>>,
        n_inputs: usize,
    ) -> Result<Self, MatrixError> {
        if n_inputs == 0 {
            return Err(MatrixError::Shape(
                "a matrix needs at least one input".into(),
            ));
        }
        if candidate_ids.len() != outcomes.len() {
            return Err(MatrixError::Shape(format!(
                "{} candidate ids for {} rows",
                candidate_ids.len(),
                outcomes.len()
            )));
        }
        if let Some((i, row)) = outcomes
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != n_inputs)
        {
            return Err(MatrixError::Shape(format!(
                "row {i} has {} cells, expected {n_inputs}",
                row.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = candidate_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(MatrixError::Shape(format!(
                "duplicate candidate id `{dup}`"
            )));
        }
        let valid_set = valid_rows(&outcomes);
        Ok(Self {
            task_id: task_id.into(),
            candidate_ids,
            outcomes,
            n_inputs,
            valid_set,
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn candidate_ids(&self) -> &[String] {
        &self.candidate_ids
    }

    pub fn n_candidates(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn outcome(&self, candidate: usize, input: usize) -> &ExecOutcome {
        &self.outcomes[candidate][input]
    }

    pub fn row(&self, candidate: usize) -> &[ExecOutcome] {
        &self.outcomes[candidate]
    }

    pub fn rows(&self) -> &[Vec<ExecOutcome>] {
        &self.outcomes
    }

    /// Normalized output at `(candidate, input)`, if that cell ran cleanly.
    pub fn output(&self, candidate: usize, input: usize) -> Option<&str> {
        self.outcomes[candidate][input].output()
    }

    pub fn valid_set(&self) -> &BTreeSet<usize> {
        &self.valid_set
    }

    pub fn is_valid(&self, candidate: usize) -> bool {
        self.valid_set.contains(&candidate)
    }

    /// True when rows `a` and `b` produced identical outputs on every input.
    /// Rows with any failed cell never match.
    pub fn rows_agree(&self, a: usize, b: usize) -> bool {
        (0..self.n_inputs).all(|k| match (self.output(a, k), self.output(b, k)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        })
    }

    /// The matrix restricted to `rows`, kept in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> ExecutionMatrix {
        let candidate_ids = rows
            .iter()
            .map(|&i| self.candidate_ids[i].clone())
            .collect();
        let outcomes = rows.iter().map(|&i| self.outcomes[i].clone()).collect();
        ExecutionMatrix::new(self.task_id.clone(), candidate_ids, outcomes, self.n_inputs)
            .expect("row subset of a well-formed matrix")
    }

    pub fn to_file(&self, run_id: Option<&str>) -> MatrixFile {
        MatrixFile {
            run_id: run_id.map(str::to_string),
            task_id: self.task_id.clone(),
            n_inputs: self.n_inputs,
            candidate_ids: self.candidate_ids.clone(),
            grid: self
                .outcomes
                .iter()
                .map(|row| row.iter().map(CellRecord::from).collect())
                .collect(),
        }
    }

    pub fn timings(&self) -> TimingsFile {
        TimingsFile {
            run_id: None,
            task_id: self.task_id.clone(),
            duration_ms: self
                .outcomes
                .iter()
                .map(|row| row.iter().map(ExecOutcome::duration_ms).collect())
                .collect(),
        }
    }

    /// Rebuilds a matrix from its persisted form. Durations come from the
    /// optional timings sidecar and default to zero.
    pub fn from_file(
        file: MatrixFile,
        timings: Option<&TimingsFile>,
    ) -> Result<ExecutionMatrix, MatrixError> {
        if let Some(t) = timings {
            if t.task_id != file.task_id {
                return Err(MatrixError::Shape(format!(
                    "timings for `{}` paired with matrix `{}`",
                    t.task_id, file.task_id
                )));
            }
        }
        let mut outcomes = Vec::with_capacity(file.grid.len());
        for (i, row) in file.grid.into_iter().enumerate() {
            let mut cells = Vec::with_capacity(row.len());
            for (k, cell) in row.into_iter().enumerate() {
                let duration = timings
                    .and_then(|t| t.duration_ms.get(i))
                    .and_then(|r| r.get(k))
                    .copied()
                    .unwrap_or(0);
                let outcome =
                    ExecOutcome::from_parts(cell.status, cell.output, duration, cell.exit_code)
                        .map_err(|e| MatrixError::Shape(format!("cell ({i},{k}): {e}")))?;
                cells.push(outcome);
            }
            outcomes.push(cells);
        }
        ExecutionMatrix::new(file.task_id, file.candidate_ids, outcomes, file.n_inputs)
    }
}

/// Rows whose every cell is `Ok`.
pub fn valid_set(matrix: &ExecutionMatrix) -> BTreeSet<usize> {
    valid_rows(&matrix.outcomes)
}

fn valid_rows(outcomes: &[Vec<ExecOutcome>]) -> BTreeSet<usize> {
    outcomes
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().all(ExecOutcome::is_ok))
        .map(|(i, _)| i)
        .collect()
}

/// On-disk matrix. Wall-clock durations live in a separate [`TimingsFile`]
/// so that the matrix itself is a deterministic function of its inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub task_id: String,
    pub n_inputs: usize,
    pub candidate_ids: Vec<String>,
    pub grid: Vec<Vec<CellRecord>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    pub status: ExecStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
}

impl From<&ExecOutcome> for CellRecord {
    fn from(o: &ExecOutcome) -> Self {
        CellRecord {
            status: o.status(),
            output: o.output().map(str::to_string),
            exit_code: o.exit_code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub task_id: String,
    pub duration_ms: Vec<Vec<u64>>,
}

/// Disk cache of execution outcomes keyed by everything that determines
/// them: runner, source, input and limits.
#[derive(Debug, Clone)]
pub struct ExecCache {
    dir: PathBuf,
}

impl ExecCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, MatrixError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| MatrixError::Cache {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(
        runner: &RunnerCommand,
        source: &str,
        input: &str,
        limits: &ResourceLimits,
    ) -> String {
        let limits = serde_json::to_string(limits).expect("limits serialize");
        let mut h = Sha256::new();
        for part in [
            runner.template(),
            runner.file_suffix(),
            source,
            input,
            limits.as_str(),
        ] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// Unreadable or corrupt entries count as misses.
    pub fn get(&self, key: &str) -> Option<ExecOutcome> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, key: &str, outcome: &ExecOutcome) -> Result<(), MatrixError> {
        let path = self.path_for(key);
        let parent = path.parent().expect("cache entry has a parent");
        let wrap = |source| MatrixError::Cache {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(parent).map_err(wrap)?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(wrap)?;
        serde_json::to_writer(&mut tmp, outcome).map_err(|e| wrap(e.into()))?;
        tmp.flush().map_err(wrap)?;
        tmp.persist(&path).map_err(|e| wrap(e.error))?;
        Ok(())
    }
}

/// Runs every candidate of a task on every test input.
#[derive(Debug, Clone)]
pub struct MatrixBuilder {
    runner: RunnerCommand,
    limits: ResourceLimits,
    parallelism: usize,
    cache: Option<ExecCache>,
}

impl MatrixBuilder {
    pub fn new(
        runner: RunnerCommand,
        limits: ResourceLimits,
        parallelism: usize,
    ) -> Result<Self, MatrixError> {
        if parallelism == 0 {
            return Err(MatrixError::ZeroParallelism);
        }
        Ok(Self {
            runner,
            limits,
            parallelism,
            cache: None,
        })
    }

    pub fn with_cache(mut self, cache: ExecCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn limits(&self) -> &ResourceLimits {
        &self.limits
    }

    pub fn runner(&self) -> &RunnerCommand {
        &self.runner
    }

    /// Executes all N×K cells with at most `parallelism` runs in flight.
    ///
    /// The result does not depend on the parallelism level. Any
    /// infrastructure failure aborts the whole task; no partial matrix is
    /// returned.
    pub fn build_matrix(
        &self,
        task: &Task,
        candidates: &[Candidate],
    ) -> Result<ExecutionMatrix, MatrixError> {
        task.validate()
            .map_err(|reason| MatrixError::InvalidInput {
                task_id: task.task_id.clone(),
                reason,
            })?;
        if let Some(c) = candidates.iter().find(|c| c.task_id != task.task_id) {
            return Err(MatrixError::ForeignCandidate {
                candidate_id: c.candidate_id.clone(),
                found: c.task_id.clone(),
                expected: task.task_id.clone(),
            });
        }
        let mut ordered: Vec<&Candidate> = candidates.iter().collect();
        ordered.sort_by_key(|c| c.sample_index);
        if let Some(w) = ordered
            .windows(2)
            .find(|w| w[0].sample_index == w[1].sample_index)
        {
            return Err(MatrixError::InvalidInput {
                task_id: task.task_id.clone(),
                reason: format!("sample_index {} used twice", w[0].sample_index),
            });
        }

        let k = task.n_inputs();
        let n_cells = ordered.len() * k;
        let slots: Vec<Mutex<Option<ExecOutcome>>> =
            (0..n_cells).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let failure: Mutex<Option<MatrixError>> = Mutex::new(None);

        let workers = self.parallelism.min(n_cells.max(1));
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if abort.load(Ordering::SeqCst) {
                        return;
                    }
                    let cell = next.fetch_add(1, Ordering::SeqCst);
                    if cell >= n_cells {
                        return;
                    }
                    let (i, col) = (cell / k, cell % k);
                    match self.run_cell(&task.task_id, &ordered[i].source, &task.test_inputs[col]) {
                        Ok(outcome) => *slots[cell].lock().unwrap() = Some(outcome),
                        Err(e) => {
                            abort.store(true, Ordering::SeqCst);
                            failure.lock().unwrap().get_or_insert(e);
                            return;
                        }
                    }
                });
            }
        });

        if let Some(e) = failure.into_inner().unwrap() {
            return Err(e);
        }
        let mut cells = slots
            .into_iter()
            .map(|s| s.into_inner().unwrap().expect("every cell filled"));
        let outcomes: Vec<Vec<ExecOutcome>> = (0..ordered.len())
            .map(|_| cells.by_ref().take(k).collect())
            .collect();
        let ids = ordered.iter().map(|c| c.candidate_id.clone()).collect();
        ExecutionMatrix::new(task.task_id.clone(), ids, outcomes, k)
    }

    fn run_cell(
        &self,
        task_id: &str,
        source: &str,
        input: &str,
    ) -> Result<ExecOutcome, MatrixError> {
        let key = self
            .cache
            .as_ref()
            .map(|_| ExecCache::key(&self.runner, source, input, &self.limits));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key) {
                return Ok(hit);
            }
        }
        let outcome =
            exec::run_candidate(source, &self.runner, input, &self.limits).map_err(|source| {
                MatrixError::Execution {
                    task_id: task_id.to_string(),
                    source,
                }
            })?;
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            cache.put(key, &outcome)?;
        }
        Ok(outcome)
    }
}
