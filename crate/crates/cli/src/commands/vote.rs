use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fmv_core::{pointwise_target, select_consensus};
use serde_json::json;

use super::{note, Context};
use crate::error::Result;
use crate::manifest::StageRun;
use crate::records::{load_matrices, to_jsonl, ConsensusRecord, TargetRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VoteMode {
    /// One functional medoid per task.
    Joint,
    /// Per-input modal output targets.
    Pointwise,
}

impl VoteMode {
    pub fn name(self) -> &'static str {
        match self {
            VoteMode::Joint => "joint",
            VoteMode::Pointwise => "pointwise",
        }
    }

    pub fn default_votes(self) -> PathBuf {
        PathBuf::from(match self {
            VoteMode::Joint => "consensus.jsonl",
            VoteMode::Pointwise => "targets.jsonl",
        })
    }
}

#[derive(Debug, Args)]
pub struct VoteArgs {
    #[arg(long, default_value = "matrices")]
    pub matrices: PathBuf,
    #[arg(long, value_enum, default_value = "joint")]
    pub mode: VoteMode,
    /// Defaults to consensus.jsonl (joint) or targets.jsonl (pointwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(ctx: &Context, args: &VoteArgs) -> Result<()> {
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.mode.default_votes());
    let mut stage = StageRun::new("vote", json!({ "mode": args.mode.name() }));
    stage.input(&ctx.wd, &args.matrices)?;
    let matrices = load_matrices(&ctx.wd.path(&args.matrices))?;
    let run_id = stage.run_id();

    let bytes = match args.mode {
        VoteMode::Joint => {
            let records: Vec<ConsensusRecord> = matrices
                .iter()
                .map(|m| ConsensusRecord::new(&run_id, m, &select_consensus(m)))
                .collect();
            let none = records.iter().filter(|r| r.no_consensus).count();
            note(format!(
                "vote: {} tasks, {none} without consensus",
                records.len()
            ));
            to_jsonl(&records)
        }
        VoteMode::Pointwise => {
            let records: Vec<TargetRecord> = matrices
                .iter()
                .map(|m| TargetRecord::new(&run_id, m.task_id(), &pointwise_target(m)))
                .collect();
            let undefined = records.iter().filter(|r| r.all_undefined).count();
            note(format!(
                "vote: {} targets, {undefined} entirely undefined",
                records.len()
            ));
            to_jsonl(&records)
        }
    };
    ctx.write(&out, &bytes)?;
    stage.finish(&ctx.wd, &[out.as_path()])?;
    note(format!("vote: wrote {} (run {run_id})", out.display()));
    Ok(())
}
