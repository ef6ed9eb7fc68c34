use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use fmv_core::metrics::{
    curve_to_csv, default_budgets, scaling_curve, CurveConfig, PoolTask, DEFAULT_RESAMPLES,
    DEFAULT_TRIALS,
};
use fmv_core::simulate::simulate_tasks;
use fmv_core::{NoiseModel, Task};
use serde_json::json;

use super::{note, Context};
use crate::error::{CliError, Result};
use crate::manifest::{matrix_file_names, StageRun};
use crate::records::{sanitize_id, to_jsonl, to_pretty_json};

const DEFAULT_TASKS: usize = 200;
const DEFAULT_POOL: usize = 64;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub p_correct: Option<f64>,
    #[arg(long)]
    pub p_invalid: Option<f64>,
    #[arg(long)]
    pub wrong_modes: Option<usize>,
    #[arg(long)]
    pub wrong_concentration: Option<f64>,
    /// Test inputs per task.
    #[arg(long)]
    pub inputs: Option<usize>,
    #[arg(long)]
    pub cell_corruption: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of simulated tasks.
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Candidates drawn per task; the largest budget on the curve.
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long, default_value = "sim_curve.csv")]
    pub out: PathBuf,
    /// Also write the simulated run as DIR/matrices/*.json and
    /// DIR/tasks.jsonl so it can flow through vote, reward and evaluate.
    #[arg(long)]
    pub emit: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: &SimulateArgs) -> Result<()> {
    let sec = &ctx.config.simulate;
    let d = NoiseModel::default();
    let model = NoiseModel {
        p_correct: args.p_correct.or(sec.p_correct).unwrap_or(d.p_correct),
        p_invalid: args.p_invalid.or(sec.p_invalid).unwrap_or(d.p_invalid),
        wrong_mode_count: args
            .wrong_modes
            .or(sec.wrong_mode_count)
            .unwrap_or(d.wrong_mode_count),
        wrong_concentration: args
            .wrong_concentration
            .or(sec.wrong_concentration)
            .unwrap_or(d.wrong_concentration),
        n_inputs: args.inputs.or(sec.n_inputs).unwrap_or(d.n_inputs),
        cell_corruption: args
            .cell_corruption
            .or(sec.cell_corruption)
            .unwrap_or(d.cell_corruption),
        seed: args.seed.or(sec.seed).unwrap_or(d.seed),
    };
    let n_tasks = args.tasks.or(sec.tasks).unwrap_or(DEFAULT_TASKS);
    let pool_size = args.pool.or(sec.pool_size).unwrap_or(DEFAULT_POOL);
    let curve = CurveConfig {
        budgets: args
            .budgets
            .clone()
            .or_else(|| sec.budgets.clone())
            .unwrap_or_else(|| default_budgets(pool_size)),
        trials: args.trials.or(sec.trials).unwrap_or(DEFAULT_TRIALS),
        seed: model.seed,
        resamples: args
            .resamples
            .or(sec.resamples)
            .unwrap_or(DEFAULT_RESAMPLES),
    };
    model.validate()?;

    let stage = StageRun::new(
        "simulate",
        json!({
            "model": model,
            "tasks": n_tasks,
            "pool_size": pool_size,
            "budgets": curve.budgets,
            "trials": curve.trials,
            "resamples": curve.resamples,
        }),
    );
    let run_id = stage.run_id();
    let sims = simulate_tasks(&model, n_tasks, pool_size)?;
    let pool: Vec<PoolTask<'_>> = sims
        .iter()
        .map(|s| PoolTask {
            matrix: &s.matrix,
            oracle: &s.oracle,
        })
        .collect();
    let points = scaling_curve(&pool, &curve)?;
    let csv = curve_to_csv(&points);
    ctx.write(&args.out, csv.as_bytes())?;

    let mut outputs: Vec<PathBuf> = vec![args.out.clone()];
    if let Some(dir) = &args.emit {
        let mdir = dir.join("matrices");
        let full = ctx.wd.path(&mdir);
        fs::create_dir_all(&full).map_err(|e| CliError::io(&full, e))?;
        for name in matrix_file_names(&full)? {
            let p = full.join(name);
            fs::remove_file(&p).map_err(|e| CliError::io(&p, e))?;
        }
        for s in &sims {
            let rel = mdir.join(format!("{}.json", sanitize_id(s.matrix.task_id())));
            ctx.write(&rel, &to_pretty_json(&s.matrix.to_file(Some(&run_id))))?;
        }
        let tasks: Vec<Task> = sims.iter().map(|s| s.task()).collect();
        let tasks_rel = dir.join("tasks.jsonl");
        ctx.write(&tasks_rel, &to_jsonl(&tasks))?;
        outputs.push(mdir);
        outputs.push(tasks_rel);
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    stage.finish(&ctx.wd, &refs)?;
    print!("{csv}");
    note(format!(
        "simulate: {n_tasks} tasks x {pool_size} candidates, wrote {} (run {run_id})",
        args.out.display()
    ));
    Ok(())
}
