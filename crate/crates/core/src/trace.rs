//! Core data types: labeled datasets, checkpoint prediction traces, score
//! tables, and the elementary probability operations on model outputs.
//!
//! A [`PredictionTrace`] holds the outputs of every intermediate checkpoint
//! of a training run on a fixed evaluation set, one row per (example,
//! checkpoint). All types are immutable after construction and validated on
//! every constructor path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RNG stream ids so that different operations sharing a seed draw from
/// non-overlapping ChaCha streams.
pub(crate) mod streams {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const DATA: u64 = 4;
}

/// Prediction task, carrying the class count or forecast horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classification { classes: usize },
    Regression,
    Timeseries { horizon: usize },
}

impl Task {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Task::Classification { .. } => "classification",
            Task::Regression => "regression",
            Task::Timeseries { .. } => "timeseries",
        }
    }

    /// Expected length of a model output row for this task.
    pub fn output_len(&self) -> usize {
        match *self {
            Task::Classification { classes } => classes,
            Task::Regression => 1,
            Task::Timeseries { horizon } => horizon,
        }
    }
}

/// Ground-truth label of a single example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Class(usize),
    Scalar(f64),
    Series(Vec<f64>),
}

impl Label {
    pub fn as_class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Label::Scalar(v) => Some(*v),
            _ => None,
        }
    }
}

/// One labeled data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Label,
    /// Member of the designated uncertainty region.
    pub region_flag: bool,
    /// Analytic Bayes posterior over classes (synthetic data only).
    pub true_posterior: Option<Vec<f64>>,
    /// Ground-truth noise scale for heteroscedastic regression generators.
    pub noise_scale: Option<f64>,
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, features: Vec<f64>, label: Label) -> Self {
        LabeledExample {
            id: id.into(),
            features,
            label,
            region_flag: false,
            true_posterior: None,
            noise_scale: None,
        }
    }
}

/// A validated, nonempty collection of examples with homogeneous labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    task: Task,
    examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(task: Task, examples: Vec<LabeledExample>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::invalid("dataset", "must be nonempty"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for ex in &examples {
            if ex.id.contains(',') || ex.id.contains('\n') || ex.id.is_empty() {
                return Err(Error::invalid(
                    "dataset",
                    format!("id {:?} must be nonempty without commas or newlines", ex.id),
                ));
            }
            if !ids.insert(ex.id.as_str()) {
                return Err(Error::invalid("dataset", format!("duplicate id {:?}", ex.id)));
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("dataset", format!("non-finite feature in {:?}", ex.id)));
            }
            match (&task, &ex.label) {
                (Task::Classification { classes }, Label::Class(c)) => {
                    if c >= classes {
                        return Err(Error::LabelOutOfRange {
                            id: ex.id.clone(),
                            label: *c,
                            num_classes: *classes,
                        });
                    }
                }
                (Task::Regression, Label::Scalar(v)) => {
                    if !v.is_finite() {
                        return Err(Error::invalid("dataset", format!("non-finite label in {:?}", ex.id)));
                    }
                }
                (Task::Timeseries { horizon }, Label::Series(s)) => {
                    if s.len() != *horizon {
                        return Err(Error::invalid(
                            "dataset",
                            format!("series label of {:?} has length {} != horizon {horizon}", ex.id, s.len()),
                        ));
                    }
                    if s.iter().any(|v| !v.is_finite()) {
                        return Err(Error::invalid("dataset", format!("non-finite label in {:?}", ex.id)));
                    }
                }
                _ => {
                    return Err(Error::invalid(
                        "dataset",
                        format!("label kind of {:?} does not match task {}", ex.id, task.kind_name()),
                    ));
                }
            }
            if let Some(post) = &ex.true_posterior {
                let classes = match task {
                    Task::Classification { classes } => classes,
                    _ => {
                        return Err(Error::invalid("dataset", "posterior rows only valid for classification"));
                    }
                };
                if post.len() != classes {
                    return Err(Error::invalid(
                        "dataset",
                        format!("posterior of {:?} has length {} != {classes}", ex.id, post.len()),
                    ));
                }
                if post.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) {
                    return Err(Error::invalid("dataset", format!("posterior of {:?} not in [0,1]", ex.id)));
                }
                let sum: f64 = post.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(
                        "dataset",
                        format!("posterior of {:?} sums to {sum}, expected 1", ex.id),
                    ));
                }
            }
        }
        Ok(Dataset { task, examples })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn example(&self, idx: usize) -> &LabeledExample {
        &self.examples[idx]
    }

    pub fn feature_dim(&self) -> usize {
        self.examples[0].features.len()
    }

    /// Examples reordered canonically by id (used by the bundle writer).
    pub fn sorted_by_id(&self) -> Dataset {
        let mut examples = self.examples.clone();
        examples.sort_by(|a, b| a.id.cmp(&b.id));
        Dataset {
            task: self.task,
            examples,
        }
    }

    /// Deterministic split into (train, eval) with the given eval fraction.
    pub fn split(&self, eval_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&eval_fraction) || eval_fraction <= 0.0 {
            return Err(Error::invalid("split", "eval fraction must be in (0, 1)"));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        crate::rng::DetRng::derive(seed, streams::SPLIT).shuffle(&mut order);
        let n_eval = ((self.len() as f64) * eval_fraction).round() as usize;
        let n_eval = n_eval.clamp(1, self.len() - 1);
        let eval: Vec<_> = order[..n_eval].iter().map(|&i| self.examples[i].clone()).collect();
        let train: Vec<_> = order[n_eval..].iter().map(|&i| self.examples[i].clone()).collect();
        Ok((Dataset::new(self.task, train)?, Dataset::new(self.task, eval)?))
    }
}

/// Per-example, per-checkpoint model outputs of one training run.
///
/// Rectangular by construction: every example has exactly `checkpoints`
/// output rows, each of the task's output length, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    task: Task,
    checkpoints: usize,
    ids: Vec<String>,
    /// outputs[example][checkpoint] is one output row.
    outputs: Vec<Vec<Vec<f64>>>,
}

impl PredictionTrace {
    pub fn new(task: Task, ids: Vec<String>, outputs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if ids.len() != outputs.len() {
            return Err(Error::invalid("trace", "ids and outputs must align"));
        }
        if outputs.is_empty() {
            return Err(Error::invalid("trace", "must be nonempty"));
        }
        let checkpoints = outputs[0].len();
        if checkpoints == 0 {
            return Err(Error::invalid("trace", "needs at least one checkpoint"));
        }
        let row_len = task.output_len();
        for (id, rows) in ids.iter().zip(&outputs) {
            if rows.len() != checkpoints {
                return Err(Error::RaggedTrace {
                    id: id.clone(),
                    got: rows.len(),
                    expected: checkpoints,
                });
            }
            for row in rows {
                if row.len() != row_len {
                    return Err(Error::invalid(
                        "trace",
                        format!("output row of {id:?} has length {} != {row_len}", row.len()),
                    ));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("trace", format!("non-finite output for {id:?}")));
                }
            }
        }
        Ok(PredictionTrace {
            task,
            checkpoints,
            ids,
            outputs,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Number of checkpoints T.
    pub fn checkpoints(&self) -> usize {
        self.checkpoints
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Output row of example `example` at checkpoint `t` (0-based).
    pub fn output(&self, example: usize, t: usize) -> &[f64] {
        &self.outputs[example][t]
    }

    /// All checkpoint rows of one example.
    pub fn example_rows(&self, example: usize) -> &[Vec<f64>] {
        &self.outputs[example]
    }

    /// Final-checkpoint row of one example.
    pub fn final_output(&self, example: usize) -> &[f64] {
        &self.outputs[example][self.checkpoints - 1]
    }

    /// Verify the trace covers exactly the dataset's ids (any order).
    pub fn matches_dataset(&self, dataset: &Dataset) -> Result<()> {
        if self.len() != dataset.len() {
            return Err(Error::invalid(
                "trace",
                format!("covers {} examples, dataset has {}", self.len(), dataset.len()),
            ));
        }
        let mut trace_ids: Vec<&str> = self.ids.iter().map(|s| s.as_str()).collect();
        let mut data_ids: Vec<&str> = dataset.examples().iter().map(|e| e.id.as_str()).collect();
        trace_ids.sort_unstable();
        data_ids.sort_unstable();
        if trace_ids != data_ids {
            return Err(Error::invalid("trace", "example ids do not match the dataset"));
        }
        Ok(())
    }

    /// Reorder rows canonically by id.
    pub fn sorted_by_id(&self) -> PredictionTrace {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        PredictionTrace {
            task: self.task,
            checkpoints: self.checkpoints,
            ids: order.iter().map(|&i| self.ids[i].clone()).collect(),
            outputs: order.iter().map(|&i| self.outputs[i].clone()).collect(),
        }
    }
}

/// Whether larger scores mean more or less confidence.
///
/// The acceptance inequality direction differs between score families
/// (softmax response accepts high scores, instability scores accept low
/// ones), so every score table carries its orientation explicitly and
/// consumers normalize internally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    HigherMoreConfident,
    LowerMoreConfident,
}

/// One scored example: the model's prediction plus a confidence score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub id: String,
    pub prediction: Label,
    pub score: f64,
}

/// Per-example confidence scores with an explicit orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub orientation: Orientation,
    entries: Vec<ScoreEntry>,
}

impl ScoreTable {
    pub fn new(orientation: Orientation, entries: Vec<ScoreEntry>) -> Result<Self> {
        let mut ids = std::collections::BTreeSet::new();
        for e in &entries {
            if !e.score.is_finite() {
                return Err(Error::invalid("score table", format!("non-finite score for {:?}", e.id)));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::invalid("score table", format!("duplicate id {:?}", e.id)));
            }
        }
        Ok(ScoreTable { orientation, entries })
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Score of an entry normalized so that larger always means more
    /// confident.
    pub fn confidence_key(&self, entry: &ScoreEntry) -> f64 {
        match self.orientation {
            Orientation::HigherMoreConfident => entry.score,
            Orientation::LowerMoreConfident => -entry.score,
        }
    }
}

/// Softmax with max-subtraction for overflow safety.
///
/// Output is nonnegative, sums to 1 within 1e-12, and is invariant under
/// additive shifts of the logits.
pub fn softmax_probs(logits: &[f64]) -> Vec<f64> {
    debug_assert!(!logits.is_empty());
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

/// Argmax with deterministic tie-break to the lowest class index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Turn a raw output row into a prediction for the given task.
///
/// Classification takes the argmax (ties to the lowest index); regression
/// and time series pass the row through unchanged.
pub fn predict_label(task: Task, output: &[f64]) -> Label {
    match task {
        Task::Classification { .. } => Label::Class(argmax(output)),
        Task::Regression => Label::Scalar(output[0]),
        Task::Timeseries { .. } => Label::Series(output.to_vec()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetry() {
        let p = softmax_probs(&[0.0, 0.0]);
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_matches_quoted_value() {
        // max entry of softmax(-2, -3, -3)
        let p = softmax_probs(&[-2.0, -3.0, -3.0]);
        assert!((p[0] - 0.576).abs() < 1e-3, "got {}", p[0]);
    }

    #[test]
    fn softmax_shift_invariance() {
        let z = [0.3, -1.2, 4.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 7.0).collect();
        let a = softmax_probs(&z);
        let b = softmax_probs(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_properties_on_random_rows() {
        let mut rng = crate::rng::DetRng::new(1);
        for _ in 0..1000 {
            let c = 2 + rng.index(6);
            let z: Vec<f64> = (0..c).map(|_| rng.uniform(-30.0, 30.0)).collect();
            let p = softmax_probs(&z);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(p.iter().all(|&v| v >= 0.0));
            let shift = rng.uniform(-50.0, 50.0);
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            for (a, b) in p.iter().zip(softmax_probs(&shifted)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax_probs(&[1e308, 1e308, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predict_label_examples() {
        let task = Task::Classification { classes: 3 };
        assert_eq!(predict_label(task, &[0.1, 0.8, 0.1]), Label::Class(1));
        let task2 = Task::Classification { classes: 2 };
        assert_eq!(predict_label(task2, &[0.5, 0.5]), Label::Class(0));
        assert_eq!(predict_label(Task::Regression, &[3.25]), Label::Scalar(3.25));
    }

    #[test]
    fn dataset_rejects_label_out_of_range() {
        let ex = LabeledExample::new("a", vec![0.0], Label::Class(5));
        let err = Dataset::new(Task::Classification { classes: 3 }, vec![ex]).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 5, num_classes: 3, .. }));
    }

    #[test]
    fn dataset_rejects_bad_posterior() {
        let mut ex = LabeledExample::new("a", vec![0.0], Label::Class(0));
        ex.true_posterior = Some(vec![0.7, 0.7]);
        assert!(Dataset::new(Task::Classification { classes: 2 }, vec![ex]).is_err());
    }

    #[test]
    fn trace_rejects_ragged_rows() {
        let task = Task::Classification { classes: 2 };
        let err = PredictionTrace::new(
            task,
            vec!["a".into(), "e7".into()],
            vec![
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                vec![vec![0.0, 1.0]],
            ],
        )
        .unwrap_err();
        match err {
            Error::RaggedTrace { id, got, expected } => {
                assert_eq!(id, "e7");
                assert_eq!((got, expected), (1, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let examples: Vec<_> = (0..20)
            .map(|i| LabeledExample::new(format!("e{i:02}"), vec![i as f64], Label::Class(i % 2)))
            .collect();
        let ds = Dataset::new(Task::Classification { classes: 2 }, examples).unwrap();
        let (tr1, ev1) = ds.split(0.5, 11).unwrap();
        let (tr2, ev2) = ds.split(0.5, 11).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(ev1, ev2);
        assert_eq!(tr1.len() + ev1.len(), 20);
        let train_ids: std::collections::BTreeSet<_> =
            tr1.examples().iter().map(|e| e.id.clone()).collect();
        assert!(ev1.examples().iter().all(|e| !train_ids.contains(&e.id)));
    }
}
