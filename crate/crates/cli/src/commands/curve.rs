use std::path::PathBuf;

use clap::Args;
use fmv_core::ingest::{load_tasks, Corpus};
use fmv_core::metrics::{
    curve_to_csv, default_budgets, scaling_curve, CurveConfig, PoolTask, DEFAULT_RESAMPLES,
    DEFAULT_SEED, DEFAULT_TRIALS,
};
use serde_json::json;

use super::{note, Context};
use crate::error::{CliError, Result};
use crate::manifest::StageRun;
use crate::records::load_matrices;

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long, default_value = "matrices")]
    pub matrices: PathBuf,
    #[arg(long, default_value = "tasks.jsonl")]
    pub tasks: PathBuf,
    #[arg(long, default_value = "curve.csv")]
    pub out: PathBuf,
    /// Comma-separated budgets. Defaults to powers of two up to the
    /// smallest candidate pool.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub resamples: Option<usize>,
}

pub fn run(ctx: &Context, args: &CurveArgs) -> Result<()> {
    let sec = &ctx.config.curve;
    let mut stage_inputs = StageRun::new("curve", serde_json::Value::Null);
    stage_inputs.input(&ctx.wd, &args.matrices)?;
    stage_inputs.input(&ctx.wd, &args.tasks)?;
    let matrices = load_matrices(&ctx.wd.path(&args.matrices))?;
    let corpus = Corpus::new(load_tasks(&ctx.wd.path(&args.tasks))?, Vec::new())?;

    let mut pool = Vec::new();
    for m in &matrices {
        let task = corpus
            .task(m.task_id())
            .ok_or_else(|| CliError::data(format!("matrix for `{}` has no task", m.task_id())))?;
        if let Some(oracle) = &task.oracle_outputs {
            pool.push(PoolTask { matrix: m, oracle });
        }
    }
    if pool.is_empty() {
        return Err(CliError::data("no task with oracle outputs"));
    }
    let smallest = pool
        .iter()
        .map(|p| p.matrix.n_candidates())
        .min()
        .unwrap_or(0);
    let cfg = CurveConfig {
        budgets: args
            .budgets
            .clone()
            .or_else(|| sec.budgets.clone())
            .unwrap_or_else(|| default_budgets(smallest)),
        trials: args.trials.or(sec.trials).unwrap_or(DEFAULT_TRIALS),
        seed: args.seed.or(sec.seed).unwrap_or(DEFAULT_SEED),
        resamples: args
            .resamples
            .or(sec.resamples)
            .unwrap_or(DEFAULT_RESAMPLES),
    };
    let stage = stage_inputs.with_config(json!({
        "budgets": cfg.budgets,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "resamples": cfg.resamples,
    }));
    let points = scaling_curve(&pool, &cfg)?;
    let csv = curve_to_csv(&points);
    ctx.write(&args.out, csv.as_bytes())?;
    let manifest = stage.finish(&ctx.wd, &[args.out.as_path()])?;
    print!("{csv}");
    note(format!(
        "curve: {} tasks, {} budgets, wrote {} (run {})",
        pool.len(),
        points.len(),
        args.out.display(),
        manifest.run_id
    ));
    Ok(())
}
