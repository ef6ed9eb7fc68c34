use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A problem statement with shared test inputs.
///
/// `oracle_outputs` are ground-truth labels used only for evaluation; the
/// consensus code never reads them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub task_id: String,
    #[serde(default)]
    pub prompt: String,
    pub test_inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_outputs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Task {
    pub fn n_inputs(&self) -> usize {
        self.test_inputs.len()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.task_id.is_empty() {
            return Err("task_id must be nonempty".into());
        }
        if self.test_inputs.is_empty() {
            return Err(format!("task `{}` has no test inputs", self.task_id));
        }
        if let Some(oracle) = &self.oracle_outputs {
            if oracle.len() != self.test_inputs.len() {
                return Err(format!(
                    "task `{}` has {} oracle outputs for {} test inputs",
                    self.task_id,
                    oracle.len(),
                    self.test_inputs.len()
                ));
            }
        }
        Ok(())
    }
}

/// One sampled program for a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub candidate_id: String,
    pub task_id: String,
    pub sample_index: usize,
    pub source: String,
}
