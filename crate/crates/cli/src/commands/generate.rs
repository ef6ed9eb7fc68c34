use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use fmv_core::generate::{sample_candidates, SamplingConfig, API_KEY_ENV};
use fmv_core::ingest::{load_tasks, Corpus};
use fmv_core::Candidate;
use serde_json::json;

use super::{note, Context};
use crate::error::{CliError, Result};
use crate::manifest::StageRun;
use crate::records::{read_jsonl, to_jsonl};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "tasks.jsonl")]
    pub tasks: PathBuf,
    #[arg(long, default_value = "candidates.jsonl")]
    pub out: PathBuf,
    /// Base URL of an OpenAI-compatible server, e.g. http://host:8000/v1.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Candidates per task.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub request_timeout_ms: Option<u64>,
}

impl GenerateArgs {
    fn sampling(&self, base: &SamplingConfig) -> SamplingConfig {
        let mut c = base.clone();
        if let Some(v) = &self.endpoint {
            c.endpoint_url = v.clone();
        }
        if let Some(v) = &self.model {
            c.model_name = v.clone();
        }
        if let Some(v) = self.n {
            c.n_samples = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if let Some(v) = self.top_p {
            c.top_p = v;
        }
        if let Some(v) = self.max_tokens {
            c.max_new_tokens = v;
        }
        if let Some(v) = self.concurrency {
            c.concurrency = v;
        }
        if let Some(v) = self.max_retries {
            c.max_retries = v;
        }
        if let Some(v) = self.request_timeout_ms {
            c.request_timeout_ms = v;
        }
        c.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        c
    }
}

/// Samples candidates for every task. Tasks that already have a complete
/// candidate set in the output file are skipped, so an interrupted run can
/// be resumed.
pub fn run(ctx: &Context, args: &GenerateArgs) -> Result<()> {
    let cfg = args.sampling(&ctx.config.sampling);
    cfg.validate()?;
    let n = cfg.n_samples;

    let mut stage = StageRun::new("generate", json!({ "sampling": cfg }))
        .with_runtime(json!({ "concurrency": cfg.concurrency }));
    stage.input(&ctx.wd, &args.tasks)?;
    let tasks = load_tasks(&ctx.wd.path(&args.tasks))?;
    Corpus::new(tasks.clone(), Vec::new())?;

    let out_path = ctx.wd.path(&args.out);
    let mut done: BTreeMap<String, Vec<Candidate>> = BTreeMap::new();
    if out_path.exists() {
        let mut by_task: BTreeMap<String, Vec<Candidate>> = BTreeMap::new();
        for c in read_jsonl::<Candidate>(&out_path)? {
            by_task.entry(c.task_id.clone()).or_default().push(c);
        }
        for (task_id, mut list) in by_task {
            list.sort_by_key(|c| c.sample_index);
            let complete =
                list.len() == n && list.iter().enumerate().all(|(i, c)| c.sample_index == i);
            if complete && tasks.iter().any(|t| t.task_id == task_id) {
                done.insert(task_id, list);
            }
        }
    }

    // Drop incomplete or foreign sets, then append task by task.
    let kept: Vec<&Candidate> = tasks
        .iter()
        .filter_map(|t| done.get(&t.task_id))
        .flatten()
        .collect();
    ctx.write(&args.out, &to_jsonl(&kept))?;
    let skipped = done.len();
    let mut requested = 0usize;
    for task in &tasks {
        if done.contains_key(&task.task_id) {
            continue;
        }
        let candidates = sample_candidates(task, &cfg)?;
        append(&out_path, &candidates)?;
        requested += 1;
        note(format!(
            "generate: {} -> {} candidates",
            task.task_id,
            candidates.len()
        ));
        done.insert(task.task_id.clone(), candidates);
    }

    let all: Vec<&Candidate> = tasks
        .iter()
        .filter_map(|t| done.get(&t.task_id))
        .flatten()
        .collect();
    ctx.write(&args.out, &to_jsonl(&all))?;
    let manifest = stage.finish(&ctx.wd, &[args.out.as_path()])?;
    note(format!(
        "generate: {} tasks sampled, {skipped} already complete, {} candidates in {} (run {})",
        requested,
        all.len(),
        args.out.display(),
        manifest.run_id
    ));
    Ok(())
}

fn append(path: &Path, candidates: &[Candidate]) -> Result<()> {
    let mut f = OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    f.write_all(&to_jsonl(candidates))
        .map_err(|e| CliError::io(path, e))?;
    f.sync_data().map_err(|e| CliError::io(path, e))
}
