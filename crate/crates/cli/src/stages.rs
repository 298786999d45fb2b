//! Stage implementations shared by single-shot subcommands and the
//! pipeline runner. Every stage writes its artifacts under one directory
//! plus a `stage.json` summary that the report stage aggregates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use abstain_core::bundle::{load_bundle, save_bundle};
use abstain_core::calibration::{bin_table, ece_metrics, fit_temperature, guardian_audit};
use abstain_core::datagen::{
    gen_guardian_mixture, gen_oracle_scores, gen_outlier_imbalance, gen_regression_sine,
    gen_two_gaussians, gen_two_moons, MoonShift,
};
use abstain_core::mirage::TargetKind;
use abstain_core::numfmt::to_json_canonical;
use abstain_core::scoring::{
    disagreements, ensemble_score, forging_scores, msp_score, sptd_score, DisagreementSequence,
    StabilityMetric, WeightScheme,
};
use abstain_core::seleval::{build_curve, decompose_gap, gap_metrics, oracle_bound, UtilityKind};
use abstain_core::surgery::{augment_network, verify_surgery, SurgeryPlan};
use abstain_core::trace::{argmax, predict_label, softmax_probs};
use abstain_core::trainer::{
    fold_temperature, forward_output, init_network, train_with_checkpoints, HeadKind, LossKind,
    MlpNetwork, TrainConfig,
};
use abstain_core::{BoxRegion, Dataset, Label, Orientation, ScoreEntry, ScoreTable, Task};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::plots;
use crate::scores_io;

/// What a stage produced: parameters echoed back, scalar metrics, artifact
/// paths relative to the run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSummary {
    pub name: String,
    pub stage: String,
    pub params: serde_json::Value,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub artifacts: Vec<String>,
}

impl StageSummary {
    fn new(name: &str, stage: &str, params: serde_json::Value) -> StageSummary {
        StageSummary {
            name: name.to_string(),
            stage: stage.to_string(),
            params,
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    fn metric(&mut self, key: &str, value: impl Serialize) {
        self.metrics.insert(
            key.to_string(),
            serde_json::to_value(value).expect("metric encodes"),
        );
    }
}

pub fn write_summary(summary: &StageSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("stage.json"), to_json_canonical(summary) + "\n")
        .with_context(|| format!("writing {}", dir.join("stage.json").display()))?;
    Ok(())
}

// ---------------------------------------------------------------------
// gen-data

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GenKind {
    TwoGaussians { a: f64, n: usize },
    Outlier { n_major: usize },
    Guardian,
    TwoMoons { n: usize, noise: f64, shift: MoonShift },
    Oracle { a_full: f64, n: usize },
    Sine { n: usize },
}

pub fn run_gen_data(kind: &GenKind, seed: u64, dir: &Path, name: &str) -> Result<StageSummary> {
    std::fs::create_dir_all(dir)?;
    let mut summary = StageSummary::new(name, "gen-data", serde_json::to_value(kind)?);
    summary.metric("seed", seed);
    let bundle_dir = dir.join("bundle");
    match kind {
        GenKind::TwoGaussians { a, n } => {
            let ds = gen_two_gaussians(*a, *n, seed)?;
            save_bundle(&ds, None, &bundle_dir)?;
            summary.metric("examples", ds.len());
        }
        GenKind::Outlier { n_major } => {
            let ds = gen_outlier_imbalance(*n_major, seed)?;
            save_bundle(&ds, None, &bundle_dir)?;
            summary.metric("examples", ds.len());
        }
        GenKind::Guardian => {
            let (ds, region) = gen_guardian_mixture(seed)?;
            save_bundle(&ds, None, &bundle_dir)?;
            std::fs::write(dir.join("region.json"), to_json_canonical(&region) + "\n")?;
            summary.metric("examples", ds.len());
            summary.metric(
                "region_examples",
                ds.examples().iter().filter(|e| e.region_flag).count(),
            );
            summary.artifacts.push("region.json".to_string());
        }
        GenKind::TwoMoons { n, noise, shift } => {
            let ds = gen_two_moons(*n, *noise, *shift, seed)?;
            save_bundle(&ds, None, &bundle_dir)?;
            summary.metric("examples", ds.len());
        }
        GenKind::Oracle { a_full, n } => {
            let (table, correctness) = gen_oracle_scores(*a_full, *n, seed)?;
            // encode correctness as labels so the standard accuracy curve
            // over this bundle reproduces it: prediction is class 0, the
            // label is 0 iff correct
            let examples = table
                .entries()
                .iter()
                .zip(&correctness)
                .map(|(e, &c)| {
                    abstain_core::LabeledExample::new(
                        e.id.clone(),
                        vec![],
                        Label::Class(usize::from(!c)),
                    )
                })
                .collect();
            let ds = Dataset::new(Task::Classification { classes: 2 }, examples)?;
            save_bundle(&ds, None, &bundle_dir)?;
            scores_io::write_scores(&table, &dir.join("scores.csv"))?;
            summary.metric("correct", correctness.iter().filter(|&&c| c).count());
            summary.artifacts.push("scores.csv".to_string());
        }
        GenKind::Sine { n } => {
            let ds = gen_regression_sine(*n, seed)?;
            save_bundle(&ds, None, &bundle_dir)?;
            summary.metric("examples", ds.len());
        }
    }
    summary.artifacts.push("bundle".to_string());
    Ok(summary)
}

// ---------------------------------------------------------------------
// train

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    pub bundle: PathBuf,
    /// Hidden layer widths; zero entries mean no layer.
    pub hidden: Vec<usize>,
    pub loss: String,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub checkpoint_every: usize,
    pub momentum: f64,
    pub eval_fraction: f64,
}

pub fn run_train(args: &TrainArgs, seed: u64, dir: &Path, name: &str) -> Result<StageSummary> {
    std::fs::create_dir_all(dir)?;
    let (dataset, _) = load_bundle(&args.bundle)?;
    let (head, loss) = match (args.loss.as_str(), dataset.task()) {
        ("ce", Task::Classification { classes }) => {
            (HeadKind::Logits { classes }, LossKind::CrossEntropy)
        }
        ("nll", Task::Regression) => (HeadKind::MeanLogVar, LossKind::GaussianNll),
        (other, task) => bail!("loss {other:?} incompatible with {} bundle", task.kind_name()),
    };
    let (train, eval) = dataset.split(args.eval_fraction, seed)?;
    let net = init_network(dataset.feature_dim(), &args.hidden, head, seed)?;
    let config = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed,
        checkpoint_every: args.checkpoint_every,
        momentum: args.momentum,
        loss,
    };
    let out = train_with_checkpoints(&train, &eval, net, &config)?;

    let mut summary = StageSummary::new(name, "train", serde_json::to_value(args)?);
    summary.metric("seed", seed);
    summary.metric("checkpoints", out.trace.checkpoints());
    summary.metric("final_epoch_loss", *out.epoch_mean_loss.last().unwrap());
    let eval_dir = dir.join("eval");
    save_bundle(&eval, Some(&out.trace), &eval_dir)?;
    std::fs::write(dir.join("model.json"), out.network.to_json() + "\n")?;
    summary.artifacts.push("eval".to_string());
    summary.artifacts.push("model.json".to_string());
    Ok(summary)
}

// ---------------------------------------------------------------------
// score

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreArgs {
    pub bundle: PathBuf,
    pub method: String,
    pub k: f64,
    pub metric: String,
}

pub fn run_score(args: &ScoreArgs, dir: &Path, name: &str) -> Result<StageSummary> {
    std::fs::create_dir_all(dir)?;
    let (dataset, trace) = load_bundle(&args.bundle)?;
    let trace = trace.context("scoring requires a bundle with a checkpoint trace")?;
    trace.matches_dataset(&dataset)?;
    let task = trace.task();

    let metric = match args.metric.as_str() {
        "confidence" => StabilityMetric::Confidence,
        "top2_gap" => StabilityMetric::Top2Gap,
        "entropy" => StabilityMetric::Entropy,
        other => bail!("unknown stability metric {other:?}"),
    };

    let mut entries = Vec::with_capacity(trace.len());
    for (i, id) in trace.ids().iter().enumerate() {
        let final_row = trace.final_output(i);
        let prediction = predict_label(task, final_row);
        let score = match args.method.as_str() {
            "msp" => msp_score(&softmax_probs(final_row)),
            "ensemble" => {
                let rows: Vec<Vec<f64>> = (0..trace.checkpoints())
                    .map(|t| softmax_probs(trace.output(i, t)))
                    .collect();
                ensemble_score(&rows)?.1
            }
            "sptd" => sptd_score(&trace, i, args.k)?,
            "smax" | "ssum" => {
                let seq = match disagreements(&trace, i) {
                    DisagreementSequence::Binary(seq) => seq,
                    _ => bail!("forging scores need a classification trace"),
                };
                let (s_max, s_sum) = forging_scores(&seq, args.k)?;
                if args.method == "smax" {
                    s_max
                } else {
                    s_sum
                }
            }
            "jump" => {
                abstain_core::scoring::aux_scores(&trace, i, metric, WeightScheme::Power { k: args.k })?.0
            }
            "var" => {
                abstain_core::scoring::aux_scores(&trace, i, metric, WeightScheme::Power { k: args.k })?.1
            }
            other => bail!("unknown scoring method {other:?}"),
        };
        entries.push(ScoreEntry {
            id: id.clone(),
            prediction,
            score,
        });
    }
    let orientation = match args.method.as_str() {
        "msp" | "ensemble" | "jump" => Orientation::HigherMoreConfident,
        _ => Orientation::LowerMoreConfident,
    };
    let table = ScoreTable::new(orientation, entries)?;
    scores_io::write_scores(&table, &dir.join("scores.csv"))?;
    let histogram = plots::histogram_svg(
        &table.entries().iter().map(|e| e.score).collect::<Vec<_>>(),
        20,
        &format!("{} score histogram", args.method),
    )?;
    plots::write_svg(&dir.join("histogram.svg"), &histogram)?;

    let mut summary = StageSummary::new(name, "score", serde_json::to_value(args)?);
    summary.metric("examples", table.len());
    summary.artifacts.push("scores.csv".to_string());
    summary.artifacts.push("histogram.svg".to_string());
    Ok(summary)
}

// ---------------------------------------------------------------------
// curve

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveArgs {
    pub scores: PathBuf,
    pub bundle: PathBuf,
    pub utility: String,
}

pub fn run_curve(args: &CurveArgs, dir: &Path, name: &str) -> Result<StageSummary> {
    std::fs::create_dir_all(dir)?;
    let table = scores_io::read_scores(&args.scores)?;
    let (dataset, _) = load_bundle(&args.bundle)?;
    let kind = match args.utility.as_str() {
        "accuracy" => UtilityKind::Accuracy,
        "r2" => UtilityKind::R2,
        other => bail!("unsupported curve utility {other:?}"),
    };
    let curve = build_curve(&table, &dataset, kind, None)?;
    let gaps = gap_metrics(&curve)?;

    let mut csv = String::from("coverage,utility,bound,gap\n");
    let mut bound = Vec::with_capacity(curve.coverage.len());
    for ((&c, &u), &g) in curve.coverage.iter().zip(&curve.utility).zip(&gaps.delta) {
        let b = oracle_bound(curve.a_full, c)?;
        bound.push(b);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            abstain_core::numfmt::fmt_f64(c),
            abstain_core::numfmt::fmt_f64(u),
            abstain_core::numfmt::fmt_f64(b),
            abstain_core::numfmt::fmt_f64(g)
        ));
    }
    std::fs::write(dir.join("curve.csv"), csv)?;
    let svg = plots::curve_svg(&curve.coverage, &curve.utility, &bound, "utility vs coverage")?;
    plots::write_svg(&dir.join("curve.svg"), &svg)?;

    let mut summary = StageSummary::new(name, "curve", serde_json::to_value(args)?);
    summary.metric("a_full", curve.a_full);
    summary.metric("e_aurc", gaps.e_aurc);
    summary.metric("auacc", abstain_core::seleval::auacc(&curve));
    summary.artifacts.push("curve.csv".to_string());
    summary.artifacts.push("curve.svg".to_string());
    Ok(summary)
}

// ---------------------------------------------------------------------
// decompose

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecomposeArgs {
    pub scores: PathBuf,
    pub bundle: PathBuf,
    pub grid: usize,
    pub delta: f64,
    pub c_const: f64,
}

pub fn run_decompose(args: &DecomposeArgs, dir: &Path, name: &str) -> Result<StageSummary> {
    std::fs::create_dir_all(dir)?;
    let table = scores_io::read_scores(&args.scores)?;
    let (dataset, _) = load_bundle(&args.bundle)?;
    if args.grid == 0 {
        bail!("grid must have at least one coverage level");
    }
    let grid: Vec<f64> = (1..=args.grid).map(|i| i as f64 / args.grid as f64).collect();
    let budget = decompose_gap(&table, &dataset, &grid, args.delta, args.c_const)?;
    std::fs::write(dir.join("budget.json"), to_json_canonical(&budget) + "\n")?;

    let mut summary = StageSummary::new(name, "decompose", serde_json::to_value(args)?);
    summary.metric("epsilon_stat", budget.epsilon_stat);
    summary.metric(
        "max_delta",
        budget.rows.iter().map(|r| r.delta).fold(f64::NEG_INFINITY, f64::max),
    );
    summary.artifacts.push("budget.json".to_string());
    Ok(summary)
}

// ---------------------------------------------------------------------
// audit

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditArgs {
    pub model: PathBuf,
    pub reference: PathBuf,
    pub bins: usize,
    pub alpha: f64,
}

pub fn run_audit(args: &AuditArgs, dir: &Path, name: &str) -> Result<StageSummary> {
    std::fs::create_dir_all(dir)?;
    let model = MlpNetwork::from_json(&std::fs::read_to_string(&args.model)?)?;
    let (reference, _) = load_bundle(&args.reference)?;
    if !matches!(reference.task(), Task::Classification { .. }) {
        bail!("audit requires a classification reference bundle");
    }
    let mut confidences = Vec::with_capacity(reference.len());
    let mut correctness = Vec::with_capacity(reference.len());
    for ex in reference.examples() {
        let logits = forward_output(&model, &ex.features)?;
        let probs = softmax_probs(&logits);
        confidences.push(msp_score(&probs));
        correctness.push(Label::Class(argmax(&probs)) == ex.label);
    }
    let report = guardian_audit(&confidences, &correctness, args.bins, args.alpha)?;
    let metrics = ece_metrics(&bin_table(&confidences, &correctness, args.bins)?)?;
    std::fs::write(dir.join("audit.json"), to_json_canonical(&report) + "\n")?;
    let points: Vec<(f64, f64, usize)> = metrics
        .reliability
        .iter()
        .map(|p| (p.mean_confidence, p.accuracy, p.bin))
        .collect();
    let svg = plots::reliability_svg(&points, args.bins, "reliability")?;
    plots::write_svg(&dir.join("reliability.svg"), &svg)?;

    let mut summary = StageSummary::new(name, "audit", serde_json::to_value(args)?);
    summary.metric("pass", report.pass);
    summary.metric("failing_bins", report.failing_bins.clone());
    summary.metric("ece", metrics.ece);
    summary.metric("max_ce", metrics.max_ce);
    summary.metric(
        "accuracy",
        correctness.iter().filter(|&&c| c).count() as f64 / correctness.len() as f64,
    );
    summary.artifacts.push("audit.json".to_string());
    summary.artifacts.push("reliability.svg".to_string());
    Ok(summary)
}

// ---------------------------------------------------------------------
// attack

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackArgs {
    pub bundle: PathBuf,
    pub epsilon: f64,
    pub lambda: f64,
    pub region: BoxRegion,
    pub target: String,
    pub target_classes: Vec<usize>,
    pub target_alphas: Vec<f64>,
    pub hidden: Vec<usize>,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_momentum: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_momentum: f64,
    pub settle_epochs: usize,
    pub settle_lr: f64,
    pub settle_momentum: f64,
    pub batch_size: usize,
    pub eval_fraction: f64,
    pub temperature_scale: bool,
}

impl AttackArgs {
    fn target_kind(&self) -> Result<TargetKind> {
        Ok(match self.target.as_str() {
            "default" => TargetKind::Default { epsilon: self.epsilon },
            "subset" => TargetKind::Subset {
                epsilon: self.epsilon,
                classes: self.target_classes.clone(),
            },
            "weighted" => TargetKind::Weighted {
                epsilon: self.epsilon,
                alphas: self.target_alphas.clone(),
            },
            other => bail!("unknown target kind {other:?}"),
        })
    }
}

/// Pretrain with cross-entropy, optionally temperature-scale (folded into
/// the served model), then fine-tune with the hybrid uncertainty loss in
/// an escape phase plus a low-rate settle phase.
pub fn run_attack(args: &AttackArgs, seed: u64, dir: &Path, name: &str) -> Result<StageSummary> {
    std::fs::create_dir_all(dir)?;
    let (dataset, _) = load_bundle(&args.bundle)?;
    let classes = match dataset.task() {
        Task::Classification { classes } => classes,
        _ => bail!("attack requires a classification bundle"),
    };
    let (train, eval) = dataset.split(args.eval_fraction, seed)?;
    let net = init_network(dataset.feature_dim(), &args.hidden, HeadKind::Logits { classes }, seed)?;
    let pretrain_cfg = TrainConfig {
        learning_rate: args.pretrain_lr,
        epochs: args.pretrain_epochs,
        batch_size: args.batch_size,
        seed,
        checkpoint_every: usize::MAX - 1,
        momentum: args.pretrain_momentum,
        loss: LossKind::CrossEntropy,
    };
    let pretrained = train_with_checkpoints(&train, &eval, net, &pretrain_cfg)?;

    let mut summary = StageSummary::new(name, "attack", serde_json::to_value(args)?);
    summary.metric("seed", seed);

    let clean = if args.temperature_scale {
        let rows: Vec<Vec<f64>> = eval
            .examples()
            .iter()
            .map(|e| forward_output(&pretrained.network, &e.features))
            .collect::<abstain_core::Result<_>>()?;
        let labels: Vec<usize> = eval
            .examples()
            .iter()
            .map(|e| e.label.as_class().expect("classification bundle"))
            .collect();
        let temperature = fit_temperature(&rows, &labels)?;
        summary.metric("temperature", temperature);
        fold_temperature(&pretrained.network, temperature)?
    } else {
        pretrained.network
    };

    let target = args.target_kind()?;
    let escape_cfg = TrainConfig {
        learning_rate: args.finetune_lr,
        epochs: args.finetune_epochs,
        batch_size: args.batch_size,
        seed,
        checkpoint_every: usize::MAX - 1,
        momentum: args.finetune_momentum,
        loss: LossKind::Mirage {
            region: args.region.clone(),
            lambda: args.lambda,
            target,
        },
    };
    let escaped = train_with_checkpoints(&train, &eval, clean.clone(), &escape_cfg)?;
    let settle_cfg = TrainConfig {
        learning_rate: args.settle_lr,
        epochs: args.settle_epochs,
        momentum: args.settle_momentum,
        ..escape_cfg
    };
    let attacked = train_with_checkpoints(&train, &eval, escaped.network, &settle_cfg)?;

    let accuracy = |net: &MlpNetwork, examples: &[abstain_core::LabeledExample]| -> Result<f64> {
        let mut hits = 0usize;
        for ex in examples {
            let logits = forward_output(net, &ex.features)?;
            if Label::Class(argmax(&logits)) == ex.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / examples.len().max(1) as f64)
    };
    summary.metric("clean_accuracy", accuracy(&clean, eval.examples())?);
    summary.metric("attacked_accuracy", accuracy(&attacked.network, eval.examples())?);
    let in_region: Vec<abstain_core::LabeledExample> = eval
        .examples()
        .iter()
        .filter(|e| args.region.contains(&e.features))
        .cloned()
        .collect();
    if !in_region.is_empty() {
        summary.metric("region_examples", in_region.len());
        summary.metric("region_accuracy", accuracy(&attacked.network, &in_region)?);
        let mean_conf: f64 = in_region
            .iter()
            .map(|e| {
                forward_output(&attacked.network, &e.features)
                    .map(|logits| msp_score(&softmax_probs(&logits)))
            })
            .collect::<abstain_core::Result<Vec<f64>>>()?
            .iter()
            .sum::<f64>()
            / in_region.len() as f64;
        summary.metric("region_mean_confidence", mean_conf);
    }

    std::fs::write(dir.join("clean_model.json"), clean.to_json() + "\n")?;
    std::fs::write(dir.join("attacked_model.json"), attacked.network.to_json() + "\n")?;
    let eval_dir = dir.join("eval");
    save_bundle(&eval, Some(&attacked.trace), &eval_dir)?;
    summary.artifacts.push("clean_model.json".to_string());
    summary.artifacts.push("attacked_model.json".to_string());
    summary.artifacts.push("eval".to_string());
    Ok(summary)
}

// ---------------------------------------------------------------------
// surgery

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurgeryArgs {
    pub model: PathBuf,
    pub region: BoxRegion,
    pub shift: Vec<f64>,
    pub verify: usize,
}

pub fn run_surgery(args: &SurgeryArgs, dir: &Path, name: &str) -> Result<StageSummary> {
    std::fs::create_dir_all(dir)?;
    let model = MlpNetwork::from_json(&std::fs::read_to_string(&args.model)?)?;
    let plan = SurgeryPlan::with_default_params(args.region.clone(), args.shift.clone())?;
    let augmented = augment_network(&model, &plan)?;
    std::fs::write(dir.join("augmented_model.json"), augmented.to_json() + "\n")?;

    let mut summary = StageSummary::new(name, "surgery", serde_json::to_value(args)?);
    if args.verify > 0 {
        let report = verify_surgery(&model, &augmented, &plan, args.verify)?;
        std::fs::write(dir.join("surgery_report.json"), to_json_canonical(&report) + "\n")?;
        summary.metric("outside_max_deviation", report.outside_max_deviation);
        summary.metric("core_max_deviation", report.core_max_deviation);
        summary.metric("outside_argmax_preserved", report.outside_argmax_preserved);
        summary.artifacts.push("surgery_report.json".to_string());
    }
    summary.artifacts.push("augmented_model.json".to_string());
    Ok(summary)
}

// ---------------------------------------------------------------------
// report

#[derive(Debug, Serialize)]
struct Report {
    schema: u32,
    stages: Vec<StageSummary>,
    metrics: BTreeMap<String, serde_json::Value>,
    artifacts: Vec<String>,
}

/// Aggregate every stage summary under `run_dir` into report.json.
pub fn run_report(run_dir: &Path) -> Result<StageSummary> {
    let mut stage_files: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(run_dir).with_context(|| format!("reading {}", run_dir.display()))? {
        let path = entry?.path();
        if path.is_dir() && path.join("stage.json").exists() {
            stage_files.push(path.join("stage.json"));
        }
    }
    stage_files.sort();
    let mut stages = Vec::new();
    for file in &stage_files {
        let summary: StageSummary = serde_json::from_str(&std::fs::read_to_string(file)?)
            .with_context(|| format!("parsing {}", file.display()))?;
        let sub = file
            .parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        stages.push((sub, summary));
    }
    let mut metrics = BTreeMap::new();
    let mut artifacts = Vec::new();
    for (sub, stage) in &stages {
        for (key, value) in &stage.metrics {
            metrics.insert(format!("{}.{key}", stage.name), value.clone());
        }
        artifacts.extend(stage.artifacts.iter().map(|a| format!("{sub}/{a}")));
    }
    let stages: Vec<StageSummary> = stages.into_iter().map(|(_, s)| s).collect();
    let report = Report {
        schema: 1,
        stages,
        metrics,
        artifacts,
    };
    std::fs::write(run_dir.join("report.json"), to_json_canonical(&report) + "\n")?;
    let mut summary = StageSummary::new("report", "report", serde_json::Value::Null);
    summary.artifacts.push("report.json".to_string());
    Ok(summary)
}
