use std::path::PathBuf;

use clap::Args;
use fmv_core::consensus::{joint_rewards, pointwise_rewards};
use serde_json::json;

use super::vote::VoteMode;
use super::{note, Context};
use crate::error::Result;
use crate::manifest::StageRun;
use crate::records::{
    index_by_task, load_matrices, read_jsonl, to_jsonl, ConsensusRecord, RewardLine, TargetRecord,
};

#[derive(Debug, Args)]
pub struct RewardArgs {
    #[arg(long, default_value = "matrices")]
    pub matrices: PathBuf,
    #[arg(long, value_enum, default_value = "joint")]
    pub mode: VoteMode,
    /// Output of `vote`. Defaults to consensus.jsonl or targets.jsonl.
    #[arg(long)]
    pub votes: Option<PathBuf>,
    #[arg(long, default_value = "rewards.jsonl")]
    pub out: PathBuf,
}

pub fn run(ctx: &Context, args: &RewardArgs) -> Result<()> {
    let votes = args
        .votes
        .clone()
        .unwrap_or_else(|| args.mode.default_votes());
    let mut stage = StageRun::new("reward", json!({ "mode": args.mode.name() }));
    stage.input(&ctx.wd, &args.matrices)?;
    stage.input(&ctx.wd, &votes)?;
    let matrices = load_matrices(&ctx.wd.path(&args.matrices))?;
    let votes_path = ctx.wd.path(&votes);
    let run_id = stage.run_id();

    let mut lines = Vec::new();
    match args.mode {
        VoteMode::Joint => {
            let recs = read_jsonl::<ConsensusRecord>(&votes_path)?;
            let by_task = index_by_task(recs, |r| r.task_id.as_str(), &matrices, &votes_path)?;
            for m in &matrices {
                let consensus = by_task[m.task_id()].to_result(m)?;
                lines.extend(
                    joint_rewards(m, &consensus)
                        .into_iter()
                        .map(|r| line(&run_id, m, r)),
                );
            }
        }
        VoteMode::Pointwise => {
            let recs = read_jsonl::<TargetRecord>(&votes_path)?;
            let by_task = index_by_task(recs, |r| r.task_id.as_str(), &matrices, &votes_path)?;
            for m in &matrices {
                let target = by_task[m.task_id()].to_target(m)?;
                lines.extend(
                    pointwise_rewards(m, &target)
                        .into_iter()
                        .map(|r| line(&run_id, m, r)),
                );
            }
        }
    }
    ctx.write(&args.out, &to_jsonl(&lines))?;
    stage.finish(&ctx.wd, &[args.out.as_path()])?;
    let positive = lines.iter().filter(|l| l.record.reward > 0.0).count();
    note(format!(
        "reward: {positive}/{} candidates rewarded, wrote {} (run {run_id})",
        lines.len(),
        args.out.display()
    ));
    Ok(())
}

fn line(run_id: &str, m: &fmv_core::ExecutionMatrix, record: fmv_core::RewardRecord) -> RewardLine {
    RewardLine {
        run_id: run_id.to_string(),
        task_id: m.task_id().to_string(),
        candidate_id: m.candidate_ids()[record.candidate].clone(),
        record,
    }
}
