//! abstain-lab: selective-prediction scoring, evaluation, calibration
//! auditing, uncertainty attacks, and ReLU network surgery from the
//! command line.
//!
//! Exit codes: 0 success (a failed audit still exits 0 and reports
//! `"pass": false`), 1 validation or usage error, 2 numeric failure
//! (training divergence).

mod pipeline;
mod plots;
mod scores_io;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use abstain_core::datagen::MoonShift;
use abstain_core::BoxRegion;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "abstain-lab", version, about = "selective prediction toolkit")]
struct Cli {
    /// Global random seed; all stage randomness derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for the invoked stage (or pipeline run).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Accepted for interface compatibility; execution is single-threaded
    /// for determinism.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset bundle.
    GenData(GenDataCmd),
    /// Train a network with checkpoint capture on a held-out split.
    Train(TrainCmd),
    /// Score a traced bundle with a confidence/instability method.
    Score(ScoreCmd),
    /// Build a utility-coverage curve with the oracle bound and gap.
    Curve(CurveCmd),
    /// Decompose the selective classification gap on posterior-known data.
    Decompose(DecomposeCmd),
    /// Run the bin-wise calibration audit over a reference bundle.
    Audit(AuditCmd),
    /// Pretrain, calibrate, and fine-tune an uncertainty-induction attack.
    Attack(AttackCmd),
    /// Inject a box-region logit shift into a model and verify it.
    Surgery(SurgeryCmd),
    /// Aggregate stage summaries in a run directory into report.json.
    Report,
    /// Run a multi-stage pipeline from a JSON config.
    Pipeline { config: PathBuf },
}

#[derive(Args)]
struct GenDataCmd {
    /// two-gaussians | outlier | guardian | two-moons | oracle | sine
    kind: String,
    /// Separation of the two-gaussians means.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Samples per class (two-gaussians) or total (two-moons, sine, oracle).
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    n_major: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// none | shear | rotate | translate
    #[arg(long, default_value = "none")]
    shift: String,
    #[arg(long, default_value_t = 0.5)]
    a_full: f64,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    bundle: PathBuf,
    /// Comma-separated hidden widths, e.g. "100" or "0" for a linear model.
    #[arg(long, default_value = "0")]
    widths: String,
    /// ce | nll
    #[arg(long, default_value = "ce")]
    loss: String,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 50)]
    checkpoint_every: usize,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    #[arg(long, default_value_t = 0.5)]
    eval_fraction: f64,
}

#[derive(Args)]
struct ScoreCmd {
    #[arg(long)]
    bundle: PathBuf,
    /// msp | ensemble | sptd | smax | ssum | jump | var
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 2.0)]
    k: f64,
    /// confidence | top2_gap | entropy (for the variance score)
    #[arg(long, default_value = "confidence")]
    metric: String,
}

#[derive(Args)]
struct CurveCmd {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    /// accuracy | r2
    #[arg(long, default_value = "accuracy")]
    utility: String,
}

#[derive(Args)]
struct DecomposeCmd {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    /// Number of evenly spaced coverage levels.
    #[arg(long, default_value_t = 20)]
    grid: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    c_const: f64,
}

#[derive(Args)]
struct AuditCmd {
    #[arg(long)]
    model: PathBuf,
    /// Reference dataset bundle.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
}

#[derive(Args)]
struct AttackCmd {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, default_value_t = 0.15)]
    epsilon: f64,
    /// Hybrid loss balance; 0.5 is half the unit-weight form (same
    /// gradient direction, scale absorbed by the learning rate).
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Region JSON, e.g. '{"dims": [[0, 2.0, 2.75], [1, 0.0, 1.5]]}'.
    #[arg(long)]
    region: String,
    /// default | subset | weighted
    #[arg(long, default_value = "default")]
    target: String,
    /// Comma-separated class subset for the subset target.
    #[arg(long, default_value = "")]
    target_classes: String,
    /// Comma-separated per-class weights for the weighted target.
    #[arg(long, default_value = "")]
    target_alphas: String,
    #[arg(long, default_value = "100")]
    widths: String,
    #[arg(long, default_value_t = 600)]
    pretrain_epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pretrain_lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pretrain_momentum: f64,
    #[arg(long, default_value_t = 1200)]
    finetune_epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    finetune_lr: f64,
    #[arg(long, default_value_t = 0.975)]
    finetune_momentum: f64,
    #[arg(long, default_value_t = 500)]
    settle_epochs: usize,
    #[arg(long, default_value_t = 0.02)]
    settle_lr: f64,
    #[arg(long, default_value_t = 0.9)]
    settle_momentum: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 0.5)]
    eval_fraction: f64,
    /// Fit and fold a softmax temperature before fine-tuning.
    #[arg(long, default_value_t = true)]
    temperature_scale: bool,
}

#[derive(Args)]
struct SurgeryCmd {
    #[arg(long)]
    model: PathBuf,
    /// Region JSON, e.g. '{"dims": [[0, -0.5, 0.75]]}'.
    #[arg(long)]
    region: String,
    /// Comma-separated per-logit shift, e.g. "0,2,0".
    #[arg(long)]
    shift: String,
    /// Verification grid size (0 skips verification).
    #[arg(long, default_value_t = 10000)]
    verify: usize,
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad integer {t:?}")))
        .collect()
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad real {t:?}")))
        .collect()
}

fn parse_region(text: &str) -> Result<BoxRegion> {
    let region: BoxRegion = serde_json::from_str(text).context("parsing region JSON")?;
    BoxRegion::new(region.dims).map_err(Into::into)
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out;
    match cli.command {
        Command::GenData(cmd) => {
            let kind = match cmd.kind.as_str() {
                "two-gaussians" => stages::GenKind::TwoGaussians { a: cmd.a, n: cmd.n },
                "outlier" => stages::GenKind::Outlier { n_major: cmd.n_major },
                "guardian" => stages::GenKind::Guardian,
                "two-moons" => stages::GenKind::TwoMoons {
                    n: cmd.n,
                    noise: cmd.noise,
                    shift: match cmd.shift.as_str() {
                        "none" => MoonShift::None,
                        "shear" => MoonShift::Shear,
                        "rotate" => MoonShift::Rotate,
                        "translate" => MoonShift::Translate,
                        other => anyhow::bail!("unknown shift {other:?}"),
                    },
                },
                "oracle" => stages::GenKind::Oracle { a_full: cmd.a_full, n: cmd.n },
                "sine" => stages::GenKind::Sine { n: cmd.n },
                other => anyhow::bail!("unknown generator {other:?}"),
            };
            let summary = stages::run_gen_data(&kind, cli.seed, &out, "gen-data")?;
            stages::write_summary(&summary, &out)?;
        }
        Command::Train(cmd) => {
            let args = stages::TrainArgs {
                bundle: cmd.bundle,
                hidden: parse_usize_list(&cmd.widths)?,
                loss: cmd.loss,
                learning_rate: cmd.lr,
                epochs: cmd.epochs,
                batch_size: cmd.batch,
                checkpoint_every: cmd.checkpoint_every,
                momentum: cmd.momentum,
                eval_fraction: cmd.eval_fraction,
            };
            let summary = stages::run_train(&args, cli.seed, &out, "train")?;
            stages::write_summary(&summary, &out)?;
        }
        Command::Score(cmd) => {
            let args = stages::ScoreArgs {
                bundle: cmd.bundle,
                method: cmd.method,
                k: cmd.k,
                metric: cmd.metric,
            };
            let summary = stages::run_score(&args, &out, "score")?;
            stages::write_summary(&summary, &out)?;
        }
        Command::Curve(cmd) => {
            let args = stages::CurveArgs {
                scores: cmd.scores,
                bundle: cmd.bundle,
                utility: cmd.utility,
            };
            let summary = stages::run_curve(&args, &out, "curve")?;
            stages::write_summary(&summary, &out)?;
        }
        Command::Decompose(cmd) => {
            let args = stages::DecomposeArgs {
                scores: cmd.scores,
                bundle: cmd.bundle,
                grid: cmd.grid,
                delta: cmd.delta,
                c_const: cmd.c_const,
            };
            let summary = stages::run_decompose(&args, &out, "decompose")?;
            stages::write_summary(&summary, &out)?;
        }
        Command::Audit(cmd) => {
            let args = stages::AuditArgs {
                model: cmd.model,
                reference: cmd.reference,
                bins: cmd.bins,
                alpha: cmd.alpha,
            };
            let summary = stages::run_audit(&args, &out, "audit")?;
            let pass = summary.metrics["pass"].as_bool().unwrap_or(false);
            stages::write_summary(&summary, &out)?;
            println!("audit pass: {pass}");
        }
        Command::Attack(cmd) => {
            let args = stages::AttackArgs {
                bundle: cmd.bundle,
                epsilon: cmd.epsilon,
                lambda: cmd.lambda,
                region: parse_region(&cmd.region)?,
                target: cmd.target,
                target_classes: parse_usize_list(&cmd.target_classes)?,
                target_alphas: parse_f64_list(&cmd.target_alphas)?,
                hidden: parse_usize_list(&cmd.widths)?,
                pretrain_epochs: cmd.pretrain_epochs,
                pretrain_lr: cmd.pretrain_lr,
                pretrain_momentum: cmd.pretrain_momentum,
                finetune_epochs: cmd.finetune_epochs,
                finetune_lr: cmd.finetune_lr,
                finetune_momentum: cmd.finetune_momentum,
                settle_epochs: cmd.settle_epochs,
                settle_lr: cmd.settle_lr,
                settle_momentum: cmd.settle_momentum,
                batch_size: cmd.batch,
                eval_fraction: cmd.eval_fraction,
                temperature_scale: cmd.temperature_scale,
            };
            let summary = stages::run_attack(&args, cli.seed, &out, "attack")?;
            stages::write_summary(&summary, &out)?;
        }
        Command::Surgery(cmd) => {
            let args = stages::SurgeryArgs {
                model: cmd.model,
                region: parse_region(&cmd.region)?,
                shift: parse_f64_list(&cmd.shift)?,
                verify: cmd.verify,
            };
            let summary = stages::run_surgery(&args, &out, "surgery")?;
            stages::write_summary(&summary, &out)?;
        }
        Command::Report => {
            stages::run_report(&out)?;
        }
        Command::Pipeline { config } => {
            let config = pipeline::load_config(&config)?;
            pipeline::run_pipeline(&config, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap help/version requests are not errors
            if err.use_stderr() {
                eprintln!("{err}");
                return ExitCode::from(1);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let diverged = err
                .downcast_ref::<abstain_core::Error>()
                .is_some_and(|e| matches!(e, abstain_core::Error::Diverged { .. }));
            ExitCode::from(if diverged { 2 } else { 1 })
        }
    }
}
