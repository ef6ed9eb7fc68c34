use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::thread;

use clap::Args;
use fmv_core::ingest::load_corpus;
use fmv_core::{ExecCache, MatrixBuilder, ResourceLimits, RunnerCommand};
use serde_json::json;

use super::{note, Context};
use crate::error::{CliError, Result};
use crate::manifest::{matrix_file_names, timings_path, StageRun};
use crate::records::{sanitize_id, to_pretty_json};

pub const DEFAULT_RUNNER: &str = "python3 {file}";
pub const DEFAULT_SUFFIX: &str = ".py";
pub const DEFAULT_CACHE_DIR: &str = ".fmv-cache";

#[derive(Debug, Args)]
pub struct ExecuteArgs {
    #[arg(long, default_value = "tasks.jsonl")]
    pub tasks: PathBuf,
    #[arg(long, default_value = "candidates.jsonl")]
    pub candidates: PathBuf,
    /// Directory that receives one matrix file per task. Existing matrix
    /// files in it are replaced.
    #[arg(long, default_value = "matrices")]
    pub out: PathBuf,
    /// Command template; `{file}` is replaced by the staged program path.
    #[arg(long)]
    pub runner: Option<String>,
    #[arg(long)]
    pub file_suffix: Option<String>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub max_output_bytes: Option<u64>,
    #[arg(long)]
    pub max_memory_bytes: Option<u64>,
    /// Concurrent executions. Defaults to the number of CPUs.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_cache: bool,
}

pub fn run(ctx: &Context, args: &ExecuteArgs) -> Result<()> {
    let sec = &ctx.config.execute;
    let template = args
        .runner
        .clone()
        .or_else(|| sec.runner.clone())
        .unwrap_or_else(|| DEFAULT_RUNNER.into());
    let suffix = args
        .file_suffix
        .clone()
        .or_else(|| sec.file_suffix.clone())
        .unwrap_or_else(|| DEFAULT_SUFFIX.into());
    let defaults = ResourceLimits::default();
    let limits = ResourceLimits::new(
        args.timeout_ms
            .or(sec.timeout_ms)
            .unwrap_or(defaults.wall_timeout_ms()),
        args.max_output_bytes
            .or(sec.max_output_bytes)
            .unwrap_or(defaults.max_output_bytes()),
        args.max_memory_bytes.or(sec.max_memory_bytes),
    )?;
    let parallelism = args
        .parallelism
        .or(sec.parallelism)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()));
    let no_cache = args.no_cache || sec.no_cache.unwrap_or(false);
    let cache_dir = (!no_cache).then(|| {
        args.cache_dir
            .clone()
            .or_else(|| sec.cache_dir.clone().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
    });

    let runner = RunnerCommand::parse(&template)?.with_file_suffix(suffix.clone());
    let mut builder = MatrixBuilder::new(runner, limits, parallelism)?;
    if let Some(dir) = &cache_dir {
        builder = builder.with_cache(ExecCache::open(ctx.wd.path(dir))?);
    }

    let mut stage = StageRun::new(
        "execute",
        json!({ "runner": template, "file_suffix": suffix, "limits": limits }),
    )
    .with_runtime(json!({ "parallelism": parallelism, "cache_dir": cache_dir }));
    stage.input(&ctx.wd, &args.tasks)?;
    stage.input(&ctx.wd, &args.candidates)?;
    let corpus = load_corpus(&ctx.wd.path(&args.tasks), &ctx.wd.path(&args.candidates))?;
    let run_id = stage.run_id();

    let mut names = BTreeSet::new();
    for t in &corpus.tasks {
        if !names.insert(sanitize_id(&t.task_id)) {
            return Err(CliError::data(format!(
                "task ids collide after sanitizing to file names: `{}`",
                t.task_id
            )));
        }
    }

    let out_dir = ctx.wd.path(&args.out);
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    for name in matrix_file_names(&out_dir)? {
        let p = out_dir.join(&name);
        for stale in [timings_path(&p), p] {
            if stale.exists() {
                fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
            }
        }
    }

    for task in &corpus.tasks {
        let candidates = corpus.candidates(&task.task_id);
        let matrix = builder.build_matrix(task, candidates)?;
        let rel = args
            .out
            .join(format!("{}.json", sanitize_id(&task.task_id)));
        ctx.write(&rel, &to_pretty_json(&matrix.to_file(Some(&run_id))))?;
        let mut timings = matrix.timings();
        timings.run_id = Some(run_id.clone());
        ctx.write(&timings_path(&rel), &to_pretty_json(&timings))?;
        note(format!(
            "execute: {} ({} candidates, {} valid)",
            task.task_id,
            matrix.n_candidates(),
            matrix.valid_set().len()
        ));
    }
    stage.finish(&ctx.wd, &[args.out.as_path()])?;
    note(format!(
        "execute: {} matrices in {} (run {run_id})",
        corpus.tasks.len(),
        args.out.display()
    ));
    Ok(())
}
