use std::path::{Path, PathBuf};

use clap::Args;
use fmv_core::ingest::{load_candidates, load_tasks, split_holdout};
use fmv_core::metrics::DEFAULT_SEED;
use fmv_core::Corpus;
use serde_json::json;

use super::{note, Context};
use crate::error::Result;
use crate::manifest::StageRun;
use crate::records::to_jsonl;

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, default_value = "tasks.jsonl")]
    pub tasks: PathBuf,
    /// Also partition a candidate file along the same task split.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long, default_value = "split")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(ctx: &Context, args: &SplitArgs) -> Result<()> {
    let seed = args.seed.or(ctx.config.split.seed).unwrap_or(DEFAULT_SEED);
    let mut stage = StageRun::new("split", json!({ "seed": seed }));
    stage.input(&ctx.wd, &args.tasks)?;
    if let Some(c) = &args.candidates {
        stage.input(&ctx.wd, c)?;
    }
    let tasks = load_tasks(&ctx.wd.path(&args.tasks))?;
    let candidates = match &args.candidates {
        Some(c) => load_candidates(&ctx.wd.path(c))?,
        None => Vec::new(),
    };
    let corpus = Corpus::new(tasks, candidates)?;
    let (train, holdout) = split_holdout(&corpus, seed)?;

    let mut outputs: Vec<PathBuf> = Vec::new();
    for (name, part) in [("train", &train), ("holdout", &holdout)] {
        let rel = args.out_dir.join(format!("{name}_tasks.jsonl"));
        ctx.write(&rel, &to_jsonl(&part.tasks))?;
        outputs.push(rel);
        if args.candidates.is_some() {
            let rel = args.out_dir.join(format!("{name}_candidates.jsonl"));
            let cands: Vec<_> = part.all_candidates().collect();
            ctx.write(&rel, &to_jsonl(&cands))?;
            outputs.push(rel);
        }
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    let manifest = stage.finish(&ctx.wd, &refs)?;
    note(format!(
        "split: {} train / {} holdout tasks in {} (run {})",
        train.tasks.len(),
        holdout.tasks.len(),
        args.out_dir.display(),
        manifest.run_id
    ));
    Ok(())
}
