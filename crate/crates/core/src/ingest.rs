//! Loading task and candidate files and splitting a corpus in two.
//!
//! Both files are line-delimited JSON. Blank lines are ignored.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::exec::normalize_output;
use crate::task::{Candidate, Task};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{source_name} line {line}: {message}")]
    Malformed {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("duplicate task_id `{0}`")]
    DuplicateTask(String),
    #[error("duplicate candidate_id `{0}`")]
    DuplicateCandidate(String),
    #[error("candidate `{candidate_id}` references unknown task `{task_id}`")]
    UnknownTask {
        candidate_id: String,
        task_id: String,
    },
    #[error("task `{task_id}`: sample indices must be 0..{n} without gaps, found {found:?}")]
    SampleIndices {
        task_id: String,
        n: usize,
        found: Vec<usize>,
    },
    #[error("need at least 2 tasks to split, found {0}")]
    TooFewTasks(usize),
}

/// Tasks together with their candidates, ordered by `sample_index`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub tasks: Vec<Task>,
    pub candidates_by_task: BTreeMap<String, Vec<Candidate>>,
}

impl Corpus {
    pub fn new(tasks: Vec<Task>, candidates: Vec<Candidate>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        let mut by_task: BTreeMap<String, Vec<Candidate>> = BTreeMap::new();
        for t in &tasks {
            if !seen.insert(t.task_id.clone()) {
                return Err(IngestError::DuplicateTask(t.task_id.clone()));
            }
            by_task.insert(t.task_id.clone(), Vec::new());
        }
        let mut cand_ids = HashSet::new();
        for c in candidates {
            if !cand_ids.insert(c.candidate_id.clone()) {
                return Err(IngestError::DuplicateCandidate(c.candidate_id));
            }
            match by_task.get_mut(&c.task_id) {
                Some(list) => list.push(c),
                None => {
                    return Err(IngestError::UnknownTask {
                        candidate_id: c.candidate_id,
                        task_id: c.task_id,
                    })
                }
            }
        }
        for (task_id, list) in by_task.iter_mut() {
            list.sort_by_key(|c| c.sample_index);
            if list.iter().enumerate().any(|(i, c)| c.sample_index != i) {
                return Err(IngestError::SampleIndices {
                    task_id: task_id.clone(),
                    n: list.len(),
                    found: list.iter().map(|c| c.sample_index).collect(),
                });
            }
        }
        Ok(Self {
            tasks,
            candidates_by_task: by_task,
        })
    }

    pub fn task(&self, task_id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn candidates(&self, task_id: &str) -> &[Candidate] {
        self.candidates_by_task
            .get(task_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn all_candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.tasks.iter().flat_map(|t| self.candidates(&t.task_id))
    }

    fn restricted_to(&self, ids: &[String]) -> Corpus {
        let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
        let mut tasks: Vec<Task> = self
            .tasks
            .iter()
            .filter(|t| keep.contains(t.task_id.as_str()))
            .cloned()
            .collect();
        tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        let candidates_by_task = self
            .candidates_by_task
            .iter()
            .filter(|(id, _)| keep.contains(id.as_str()))
            .map(|(id, c)| (id.clone(), c.clone()))
            .collect();
        Corpus {
            tasks,
            candidates_by_task,
        }
    }
}

fn parse_jsonl<T: DeserializeOwned>(
    reader: impl BufRead,
    source_name: &str,
) -> Result<Vec<(usize, T)>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::Malformed {
            source_name: source_name.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            source_name: source_name.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, value));
    }
    Ok(out)
}

/// Parses task records and brings oracle outputs into normalized form.
pub fn parse_tasks(reader: impl BufRead, source_name: &str) -> Result<Vec<Task>, IngestError> {
    let mut tasks = Vec::new();
    for (line, mut task) in parse_jsonl::<Task>(reader, source_name)? {
        let malformed = |message: String| IngestError::Malformed {
            source_name: source_name.to_string(),
            line,
            message,
        };
        task.validate().map_err(malformed)?;
        if let Some(oracle) = task.oracle_outputs.as_mut() {
            for (k, out) in oracle.iter_mut().enumerate() {
                *out = normalize_output(out.as_bytes())
                    .map_err(|e| malformed(format!("oracle output {k}: {e}")))?;
            }
        }
        tasks.push(task);
    }
    Ok(tasks)
}

pub fn parse_candidates(
    reader: impl BufRead,
    source_name: &str,
) -> Result<Vec<Candidate>, IngestError> {
    Ok(parse_jsonl::<Candidate>(reader, source_name)?
        .into_iter()
        .map(|(_, c)| c)
        .collect())
}

fn open(path: &Path) -> Result<BufReader<fs::File>, IngestError> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
}

pub fn load_tasks(path: &Path) -> Result<Vec<Task>, IngestError> {
    parse_tasks(open(path)?, &path.display().to_string())
}

pub fn load_candidates(path: &Path) -> Result<Vec<Candidate>, IngestError> {
    parse_candidates(open(path)?, &path.display().to_string())
}

/// Loads and cross-validates a task file and a candidate file.
pub fn load_corpus(tasks_path: &Path, candidates_path: &Path) -> Result<Corpus, IngestError> {
    Corpus::new(load_tasks(tasks_path)?, load_candidates(candidates_path)?)
}

/// Partitions tasks into two halves with a seeded shuffle of the sorted
/// task ids. The first half gets the extra task when the count is odd.
pub fn split_holdout(corpus: &Corpus, seed: u64) -> Result<(Corpus, Corpus), IngestError> {
    let n = corpus.tasks.len();
    if n < 2 {
        return Err(IngestError::TooFewTasks(n));
    }
    let mut ids: Vec<String> = corpus.tasks.iter().map(|t| t.task_id.clone()).collect();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, holdout) = ids.split_at(n.div_ceil(2));
    Ok((corpus.restricted_to(train), corpus.restricted_to(holdout)))
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(mut w: impl Write, records: &[T]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
