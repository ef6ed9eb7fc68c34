use std::path::PathBuf;

use clap::Args;
use fmv_core::ingest::{load_tasks, Corpus};
use fmv_core::metrics::{evaluate_task, BootstrapConfig, DEFAULT_RESAMPLES, DEFAULT_SEED};
use fmv_core::MetricsReport;
use serde_json::json;

use super::{note, Context};
use crate::error::{CliError, Result};
use crate::manifest::StageRun;
use crate::records::{
    index_by_task, load_matrices, read_jsonl, to_pretty_json, ConsensusRecord, Report, TaskSummary,
};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value = "matrices")]
    pub matrices: PathBuf,
    #[arg(long, default_value = "consensus.jsonl")]
    pub consensus: PathBuf,
    /// Tasks with oracle outputs. Tasks without oracles are excluded.
    #[arg(long, default_value = "tasks.jsonl")]
    pub tasks: PathBuf,
    /// JSON report; a text table is written next to it with a .txt extension.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let sec = &ctx.config.evaluate;
    let cfg = BootstrapConfig {
        resamples: args
            .resamples
            .or(sec.resamples)
            .unwrap_or(DEFAULT_RESAMPLES),
        seed: args.seed.or(sec.seed).unwrap_or(DEFAULT_SEED),
    };
    let mut stage = StageRun::new(
        "evaluate",
        json!({ "resamples": cfg.resamples, "seed": cfg.seed }),
    );
    stage.input(&ctx.wd, &args.matrices)?;
    stage.input(&ctx.wd, &args.consensus)?;
    stage.input(&ctx.wd, &args.tasks)?;
    let matrices = load_matrices(&ctx.wd.path(&args.matrices))?;
    let consensus_path = ctx.wd.path(&args.consensus);
    let records = read_jsonl::<ConsensusRecord>(&consensus_path)?;
    let by_task = index_by_task(records, |r| r.task_id.as_str(), &matrices, &consensus_path)?;
    let corpus = Corpus::new(load_tasks(&ctx.wd.path(&args.tasks))?, Vec::new())?;
    let run_id = stage.run_id();

    let mut evals = Vec::new();
    let mut summaries = Vec::new();
    let mut excluded = Vec::new();
    for m in &matrices {
        let task = corpus.task(m.task_id()).ok_or_else(|| {
            CliError::data(format!(
                "matrix for `{}` has no task in {}",
                m.task_id(),
                args.tasks.display()
            ))
        })?;
        if task.n_inputs() != m.n_inputs() {
            return Err(CliError::data(format!(
                "task `{}` has {} inputs but its matrix has {}",
                m.task_id(),
                task.n_inputs(),
                m.n_inputs()
            )));
        }
        let Some(oracle) = &task.oracle_outputs else {
            excluded.push(m.task_id().to_string());
            continue;
        };
        let consensus = by_task[m.task_id()].to_result(m)?;
        let eval = evaluate_task(m, &consensus, oracle)?;
        summaries.push(TaskSummary {
            task_id: eval.task_id.clone(),
            n_candidates: m.n_candidates(),
            n_valid: m.valid_set().len(),
            n_correct: eval.correct_count(),
            selected_candidate_id: consensus.selected.map(|i| m.candidate_ids()[i].clone()),
            fmv_correct: eval.fmv_correct,
            no_consensus: eval.no_consensus,
        });
        evals.push(eval);
    }
    if evals.is_empty() {
        return Err(CliError::data(format!(
            "none of the {} tasks has oracle outputs",
            matrices.len()
        )));
    }
    let metrics = MetricsReport::compute(&evals, excluded.len(), cfg)?;
    let table = metrics.to_table();
    let report = Report {
        run_id: run_id.clone(),
        metrics,
        excluded_task_ids: excluded,
        tasks: summaries,
    };
    let table_path = args.out.with_extension("txt");
    ctx.write(&args.out, &to_pretty_json(&report))?;
    ctx.write(&table_path, table.as_bytes())?;
    stage.finish(&ctx.wd, &[args.out.as_path(), table_path.as_path()])?;
    print!("{table}");
    note(format!(
        "evaluate: wrote {} (run {run_id})",
        args.out.display()
    ));
    Ok(())
}
