//! Declarative multi-stage runs: a JSON config lists named stages executed
//! sequentially into one output directory, every stage seeded from the
//! global seed, finishing with an aggregated report.json.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::stages::{self, StageSummary};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "stage", content = "params", rename_all = "kebab-case")]
pub enum StageOp {
    GenData(stages::GenKind),
    Train(stages::TrainArgs),
    Score(stages::ScoreArgs),
    Curve(stages::CurveArgs),
    Decompose(stages::DecomposeArgs),
    Audit(stages::AuditArgs),
    Attack(stages::AttackArgs),
    Surgery(stages::SurgeryArgs),
    Report,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineStage {
    pub name: String,
    #[serde(flatten)]
    pub op: StageOp,
    /// Stage-specific seed override.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub stages: Vec<PipelineStage>,
}

fn rebase(path: &mut PathBuf, run_dir: &Path) {
    if path.is_relative() {
        *path = run_dir.join(&*path);
    }
}

/// Execute a pipeline config into `run_dir`. Stage artifacts land under
/// `run_dir/<stage name>/`; relative paths in stage params resolve against
/// the run directory.
pub fn run_pipeline(config: &PipelineConfig, run_dir: &Path) -> Result<Vec<StageSummary>> {
    std::fs::create_dir_all(run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    let mut names = std::collections::BTreeSet::new();
    for stage in &config.stages {
        if stage.name.is_empty() || stage.name.contains('/') || stage.name == "report" {
            bail!("invalid stage name {:?}", stage.name);
        }
        if !names.insert(stage.name.as_str()) {
            bail!("duplicate stage name {:?}", stage.name);
        }
    }

    let mut summaries = Vec::new();
    for stage in &config.stages {
        let seed = stage.seed.unwrap_or(config.seed);
        let dir = run_dir.join(&stage.name);
        let mut op = stage.op.clone();
        let summary = match &mut op {
            StageOp::GenData(kind) => stages::run_gen_data(kind, seed, &dir, &stage.name)?,
            StageOp::Train(args) => {
                rebase(&mut args.bundle, run_dir);
                stages::run_train(args, seed, &dir, &stage.name)?
            }
            StageOp::Score(args) => {
                rebase(&mut args.bundle, run_dir);
                stages::run_score(args, &dir, &stage.name)?
            }
            StageOp::Curve(args) => {
                rebase(&mut args.scores, run_dir);
                rebase(&mut args.bundle, run_dir);
                stages::run_curve(args, &dir, &stage.name)?
            }
            StageOp::Decompose(args) => {
                rebase(&mut args.scores, run_dir);
                rebase(&mut args.bundle, run_dir);
                stages::run_decompose(args, &dir, &stage.name)?
            }
            StageOp::Audit(args) => {
                rebase(&mut args.model, run_dir);
                rebase(&mut args.reference, run_dir);
                stages::run_audit(args, &dir, &stage.name)?
            }
            StageOp::Attack(args) => {
                rebase(&mut args.bundle, run_dir);
                stages::run_attack(args, seed, &dir, &stage.name)?
            }
            StageOp::Surgery(args) => {
                rebase(&mut args.model, run_dir);
                stages::run_surgery(args, &dir, &stage.name)?
            }
            StageOp::Report => stages::run_report(run_dir)?,
        };
        if !matches!(op, StageOp::Report) {
            stages::write_summary(&summary, &dir)?;
        }
        summaries.push(summary);
    }
    // always leave a report behind, even without an explicit report stage
    if !config.stages.iter().any(|s| matches!(s.op, StageOp::Report)) {
        summaries.push(stages::run_report(run_dir)?);
    }
    Ok(summaries)
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing pipeline config {}", path.display()))
}
