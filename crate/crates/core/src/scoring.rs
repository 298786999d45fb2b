//! Confidence and instability scores.
//!
//! Softmax response and ensemble aggregation read the final model only; the
//! instability family (weighted disagreement sums, forging scores, jump and
//! variance scores) reads the whole checkpoint trace. Instability scores are
//! lower-more-confident: 0 means every intermediate prediction agreed with
//! the final one.

use crate::error::{Error, Result};
use crate::trace::{argmax, predict_label, softmax_probs, Dataset, Label, PredictionTrace, Task};

/// Per-example disagreement sequence a_1..a_T against the final checkpoint.
///
/// Classification: binary label disagreement. Regression: |f_t - f_T|.
/// Time series: per-horizon-entry distances summed by the caller. The final
/// entry is exactly zero by construction (self-agreement).
#[derive(Debug, Clone, PartialEq)]
pub enum DisagreementSequence {
    Binary(Vec<f64>),
    Magnitude(Vec<f64>),
    /// rows[t][r]: distance at checkpoint t, horizon step r.
    Horizon(Vec<Vec<f64>>),
}

impl DisagreementSequence {
    pub fn checkpoints(&self) -> usize {
        match self {
            DisagreementSequence::Binary(v) | DisagreementSequence::Magnitude(v) => v.len(),
            DisagreementSequence::Horizon(m) => m.len(),
        }
    }

    /// Collapse to one value per checkpoint (horizon rows are summed).
    pub fn per_checkpoint(&self) -> Vec<f64> {
        match self {
            DisagreementSequence::Binary(v) | DisagreementSequence::Magnitude(v) => v.clone(),
            DisagreementSequence::Horizon(m) => m.iter().map(|row| row.iter().sum()).collect(),
        }
    }
}

/// Disagreement sequence of one traced example.
pub fn disagreements(trace: &PredictionTrace, example: usize) -> DisagreementSequence {
    let t_count = trace.checkpoints();
    let final_row = trace.final_output(example);
    match trace.task() {
        Task::Classification { .. } => {
            let final_label = argmax(final_row);
            let seq = (0..t_count)
                .map(|t| {
                    if argmax(trace.output(example, t)) == final_label {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect();
            DisagreementSequence::Binary(seq)
        }
        Task::Regression => {
            let seq = (0..t_count)
                .map(|t| (trace.output(example, t)[0] - final_row[0]).abs())
                .collect();
            DisagreementSequence::Magnitude(seq)
        }
        Task::Timeseries { horizon } => {
            let rows = (0..t_count)
                .map(|t| {
                    let row = trace.output(example, t);
                    (0..horizon).map(|r| (row[r] - final_row[r]).abs()).collect()
                })
                .collect();
            DisagreementSequence::Horizon(rows)
        }
    }
}

/// Checkpoint weighting v_t on t = 1..T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    /// v_t = (t/T)^k: late disagreements weigh more.
    Power { k: f64 },
    /// v_t = 1 - (t/T)^k, the variance-trend approximation used as a
    /// divisor by the forging scores; v_T = 0 by construction.
    InverseVariance { k: f64 },
}

impl WeightScheme {
    pub fn weight(&self, t: usize, t_total: usize) -> f64 {
        debug_assert!(t >= 1 && t <= t_total);
        let frac = t as f64 / t_total as f64;
        match *self {
            WeightScheme::Power { k } => frac.powf(k),
            WeightScheme::InverseVariance { k } => 1.0 - frac.powf(k),
        }
    }
}

/// Maximum softmax probability; higher means more confident.
pub fn msp_score(probabilities: &[f64]) -> f64 {
    probabilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

/// Average member probability rows, then take the maximum of the mean row.
/// With one member this reduces to [`msp_score`].
pub fn ensemble_score(member_rows: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let first = member_rows
        .first()
        .ok_or_else(|| Error::invalid("ensemble", "need at least one member"))?;
    let dim = first.len();
    let mut mean = vec![0.0; dim];
    for row in member_rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        for (m, &p) in mean.iter_mut().zip(row) {
            *m += p;
        }
    }
    for m in mean.iter_mut() {
        *m /= member_rows.len() as f64;
    }
    let score = msp_score(&mean);
    Ok((mean, score))
}

/// Weighted disagreement sum g = sum_t v_t a_t with v_t = (t/T)^k
/// (time series additionally sum over the horizon). Lower means more
/// confident; zero iff all intermediate predictions agree with the final
/// one.
pub fn sptd_score(trace: &PredictionTrace, example: usize, k: f64) -> Result<f64> {
    let t_total = trace.checkpoints();
    if t_total < 2 {
        return Err(Error::invalid("sptd", "need at least two checkpoints"));
    }
    let weights = WeightScheme::Power { k };
    let seq = disagreements(trace, example).per_checkpoint();
    Ok(seq
        .iter()
        .enumerate()
        .map(|(t0, &a)| weights.weight(t0 + 1, t_total) * a)
        .sum())
}

/// Forging scores over a binary disagreement sequence with
/// v_t = 1 - (t/T)^k:
/// s_max = max over disagreeing checkpoints of 1/v_t (0 when none),
/// s_sum = sum over disagreeing checkpoints of 1/v_t.
///
/// The last checkpoint always agrees with itself (a_T = 0), so the v_T = 0
/// divisor is never touched.
pub fn forging_scores(disagreement: &[f64], k: f64) -> Result<(f64, f64)> {
    let t_total = disagreement.len();
    if t_total == 0 {
        return Err(Error::invalid("forging", "empty sequence"));
    }
    if k < 1.0 {
        return Err(Error::invalid("forging", "k must be >= 1"));
    }
    for &a in disagreement {
        if a != 0.0 && a != 1.0 {
            return Err(Error::invalid("forging", "sequence must be binary"));
        }
    }
    if disagreement[t_total - 1] != 0.0 {
        return Err(Error::invalid("forging", "a_T must be 0 (final checkpoint agrees with itself)"));
    }
    let weights = WeightScheme::InverseVariance { k };
    let mut s_max = 0.0f64;
    let mut s_sum = 0.0f64;
    for (t0, &a) in disagreement.iter().enumerate() {
        if a == 1.0 {
            let v = weights.weight(t0 + 1, t_total);
            s_max = s_max.max(1.0 / v);
            s_sum += 1.0 / v;
        }
    }
    Ok((s_max, s_sum))
}

/// Continuous per-checkpoint metric monitored by the variance score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityMetric {
    /// Maximum softmax probability.
    Confidence,
    /// Gap between the two most confident classes.
    Top2Gap,
    /// Shannon entropy of the softmax distribution.
    Entropy,
}

impl StabilityMetric {
    pub fn evaluate(&self, logits: &[f64]) -> f64 {
        let probs = softmax_probs(logits);
        match self {
            StabilityMetric::Confidence => msp_score(&probs),
            StabilityMetric::Top2Gap => {
                let mut top = f64::NEG_INFINITY;
                let mut second = f64::NEG_INFINITY;
                for &p in &probs {
                    if p > top {
                        second = top;
                        top = p;
                    } else if p > second {
                        second = p;
                    }
                }
                if second.is_finite() {
                    top - second
                } else {
                    top
                }
            }
            StabilityMetric::Entropy => probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum(),
        }
    }
}

/// Alternate trace scores: the jump score s_jmp = 1 - sum_t v_t j_t over
/// successive-label changes, and the weighted variance s_var of a
/// continuous metric sequence around its unweighted mean.
pub fn aux_scores(
    trace: &PredictionTrace,
    example: usize,
    metric: StabilityMetric,
    weights: WeightScheme,
) -> Result<(f64, f64)> {
    let t_total = trace.checkpoints();
    if t_total < 2 {
        return Err(Error::invalid("aux_scores", "need at least two checkpoints"));
    }
    let task = trace.task();
    let mut jump_sum = 0.0;
    for t in 1..t_total {
        let changed = predict_label(task, trace.output(example, t))
            != predict_label(task, trace.output(example, t - 1));
        if changed {
            jump_sum += weights.weight(t + 1, t_total);
        }
    }
    let s_jmp = 1.0 - jump_sum;

    let series: Vec<f64> = (0..t_total)
        .map(|t| metric.evaluate(trace.output(example, t)))
        .collect();
    let mean = series.iter().sum::<f64>() / t_total as f64;
    let s_var = series
        .iter()
        .enumerate()
        .map(|(t0, &z)| weights.weight(t0 + 1, t_total) * (z - mean) * (z - mean))
        .sum();
    Ok((s_jmp, s_var))
}

/// Mean and population variance of the disagreement distribution per
/// checkpoint, for one group of examples.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub count: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Disagreement statistics split by final-prediction correctness.
/// Empty groups are reported as absent rather than zero-filled.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DisagreementStats {
    pub correct: Option<GroupStats>,
    pub incorrect: Option<GroupStats>,
}

/// Monitor the evolution of label disagreement across a traced split:
/// per checkpoint, the mean e_t and population variance v_t of a_t within
/// the correctly and incorrectly predicted groups.
pub fn disagreement_stats(trace: &PredictionTrace, dataset: &Dataset) -> Result<DisagreementStats> {
    trace.matches_dataset(dataset)?;
    let by_id: std::collections::BTreeMap<&str, &Label> = dataset
        .examples()
        .iter()
        .map(|e| (e.id.as_str(), &e.label))
        .collect();
    let t_total = trace.checkpoints();
    let mut groups: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    for (idx, id) in trace.ids().iter().enumerate() {
        let label = by_id[id.as_str()];
        let correct = &predict_label(trace.task(), trace.final_output(idx)) == label;
        groups[usize::from(!correct)].push(disagreements(trace, idx).per_checkpoint());
    }
    let summarize = |rows: &Vec<Vec<f64>>| -> Option<GroupStats> {
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; t_total];
        let mut variance = vec![0.0; t_total];
        for row in rows {
            for (m, &a) in mean.iter_mut().zip(row) {
                *m += a;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        for row in rows {
            for ((v, &m), &a) in variance.iter_mut().zip(&mean).zip(row) {
                *v += (a - m) * (a - m);
            }
        }
        for v in variance.iter_mut() {
            *v /= n;
        }
        Some(GroupStats {
            count: rows.len(),
            mean,
            variance,
        })
    };
    Ok(DisagreementStats {
        correct: summarize(&groups[0]),
        incorrect: summarize(&groups[1]),
    })
}

/// Chebyshev bound on the probability that a training point exhibits the
/// observed binary disagreement sequence, given the per-checkpoint means
/// e_t and variances v_t of the training population:
/// min over {t : a_t != e_t} of v_t / |a_t - e_t|^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForgingBound {
    /// The minimum as computed.
    pub raw: f64,
    /// Clipped to 1 (a probability bound above 1 is vacuous).
    pub clipped: f64,
}

pub fn forging_bound(a: &[f64], e: &[f64], v: &[f64]) -> Result<ForgingBound> {
    if a.len() != e.len() || a.len() != v.len() {
        return Err(Error::invalid("forging_bound", "sequences must share a length"));
    }
    let mut best: Option<f64> = None;
    for ((&at, &et), &vt) in a.iter().zip(e).zip(v) {
        if at != et {
            let bound = vt / ((at - et) * (at - et));
            best = Some(best.map_or(bound, |b: f64| b.min(bound)));
        }
    }
    match best {
        Some(raw) => Ok(ForgingBound {
            raw,
            clipped: raw.min(1.0),
        }),
        None => Err(Error::Undefined(
            "forging bound needs some checkpoint with a_t != e_t".into(),
        )),
    }
}

/// Chow's rule with a flat reject cost: accept iff p_max >= 1 - c_r.
pub fn chow_accept(p_max: f64, reject_cost: f64) -> bool {
    p_max >= 1.0 - reject_cost
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;
    use crate::trace::PredictionTrace;

    fn class_trace(rows_per_example: Vec<Vec<Vec<f64>>>) -> PredictionTrace {
        let ids = (0..rows_per_example.len()).map(|i| format!("e{i}")).collect();
        let classes = rows_per_example[0][0].len();
        PredictionTrace::new(Task::Classification { classes }, ids, rows_per_example).unwrap()
    }

    #[test]
    fn msp_examples() {
        let p = softmax_probs(&[-2.0, -3.0, -3.0]);
        assert!((msp_score(&p) - 0.576).abs() < 1e-3);
        assert!((msp_score(&[0.25; 4]) - 0.25).abs() < 1e-15);
        assert!((msp_score(&[0.0, 1.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ensemble_reduces_and_averages() {
        let row = vec![0.3, 0.7];
        let (_, single) = ensemble_score(std::slice::from_ref(&row)).unwrap();
        let (_, double) = ensemble_score(&[row.clone(), row.clone()]).unwrap();
        assert_eq!(single, double);
        assert_eq!(single, 0.7);

        let (_, opposite) = ensemble_score(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((opposite - 0.5).abs() < 1e-15);

        assert!(ensemble_score(&[vec![0.5, 0.5], vec![1.0]]).is_err());
    }

    #[test]
    fn ensemble_matches_direct_recompute() {
        let mut rng = DetRng::new(31);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let raw: Vec<f64> = (0..4).map(|_| rng.unit()).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        let (mean, score) = ensemble_score(&rows).unwrap();
        for (j, m) in mean.iter().enumerate() {
            let direct = (rows[0][j] + rows[1][j] + rows[2][j]) / 3.0;
            assert!((m - direct).abs() < 1e-15);
        }
        assert_eq!(score, msp_score(&mean));
    }

    /// Trace whose label disagreement sequence for example 0 equals `seq`.
    fn trace_with_binary_seq(seq: &[f64]) -> PredictionTrace {
        let rows: Vec<Vec<f64>> = seq
            .iter()
            .map(|&a| if a == 0.0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        class_trace(vec![rows])
    }

    #[test]
    fn sptd_hand_values() {
        let zero = trace_with_binary_seq(&[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(sptd_score(&zero, 0, 1.0).unwrap(), 0.0);

        // a = [1,0,0,1,0], k = 1, T = 5: 1/5 + 4/5 = 1
        let tr = trace_with_binary_seq(&[1.0, 0.0, 0.0, 1.0, 0.0]);
        let g = sptd_score(&tr, 0, 1.0).unwrap();
        assert!((g - 1.0).abs() < 1e-12, "got {g}");
    }

    #[test]
    fn sptd_regression_zero_when_constant() {
        let rows = vec![vec![vec![2.0], vec![2.0], vec![2.0]]];
        let tr = PredictionTrace::new(Task::Regression, vec!["a".into()], rows).unwrap();
        assert_eq!(sptd_score(&tr, 0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn sptd_requires_two_checkpoints() {
        let tr = trace_with_binary_seq(&[0.0]);
        assert!(sptd_score(&tr, 0, 1.0).is_err());
    }

    #[test]
    fn sptd_timeseries_sums_horizon() {
        let rows = vec![vec![vec![1.0, 3.0], vec![0.0, 0.0]]];
        let tr = PredictionTrace::new(Task::Timeseries { horizon: 2 }, vec!["a".into()], rows).unwrap();
        // t=1: |1-0| + |3-0| = 4 weighted (1/2)^1; t=2: 0
        let g = sptd_score(&tr, 0, 1.0).unwrap();
        assert!((g - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sptd_nonnegative_and_zero_iff_agreement() {
        let mut rng = DetRng::new(77);
        for _ in 0..200 {
            let t_total = 2 + rng.index(8);
            let mut seq: Vec<f64> = (0..t_total - 1).map(|_| f64::from(rng.unit() < 0.4)).collect();
            seq.push(0.0);
            let tr = trace_with_binary_seq(&seq);
            let g = sptd_score(&tr, 0, 1.5).unwrap();
            assert!(g >= 0.0);
            let any = seq.iter().any(|&a| a != 0.0);
            assert_eq!(g > 0.0, any);
        }
    }

    #[test]
    fn sptd_late_disagreement_monotonicity() {
        // moving a single disagreement later strictly increases the score
        for t_total in [4usize, 6, 9] {
            for k in [0.5, 1.0, 2.0] {
                let mut prev = -1.0;
                for pos in 0..t_total - 1 {
                    let mut seq = vec![0.0; t_total];
                    seq[pos] = 1.0;
                    let g = sptd_score(&trace_with_binary_seq(&seq), 0, k).unwrap();
                    assert!(g > prev, "T={t_total} k={k} pos={pos}");
                    prev = g;
                }
            }
        }
    }

    #[test]
    fn forging_hand_values() {
        assert_eq!(forging_scores(&[0.0, 0.0, 0.0], 1.0).unwrap(), (0.0, 0.0));

        // a=[1,0,0,0], T=4, k=1: v_1 = 3/4 -> (4/3, 4/3)
        let (s_max, s_sum) = forging_scores(&[1.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        assert!((s_max - 4.0 / 3.0).abs() < 1e-12);
        assert!((s_sum - 4.0 / 3.0).abs() < 1e-12);

        // a=[1,1,0,0], T=4, k=1: 4/3 + 2 = 10/3
        let (s_max2, s_sum2) = forging_scores(&[1.0, 1.0, 0.0, 0.0], 1.0).unwrap();
        assert!((s_max2 - 2.0).abs() < 1e-12);
        assert!((s_sum2 - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn forging_rejects_final_disagreement() {
        assert!(forging_scores(&[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn s_sum_dominates_s_max() {
        let mut rng = DetRng::new(13);
        for _ in 0..500 {
            let t_total = 2 + rng.index(10);
            let mut seq: Vec<f64> = (0..t_total - 1).map(|_| f64::from(rng.unit() < 0.5)).collect();
            seq.push(0.0);
            let k = 1.0 + rng.uniform(0.0, 3.0);
            let (s_max, s_sum) = forging_scores(&seq, k).unwrap();
            assert!(s_sum >= s_max);
            if seq.contains(&1.0) {
                assert!(s_max > 0.0);
            }
        }
    }

    #[test]
    fn aux_scores_hand_values() {
        // constant predictions: no jumps
        let tr = trace_with_binary_seq(&[0.0, 0.0, 0.0]);
        let (s_jmp, s_var) = aux_scores(&tr, 0, StabilityMetric::Confidence, WeightScheme::Power { k: 1.0 }).unwrap();
        assert_eq!(s_jmp, 1.0);
        assert!(s_var.abs() < 1e-15, "constant metric sequence has zero variance");

        // z = [0, 1] with unit weights -> mean 0.5, s_var = 0.5 (checked on
        // the raw formula; here via a two-point confidence sequence)
        let z = [0.0, 1.0];
        let w = [1.0, 1.0];
        let mean = 0.5;
        let direct: f64 = z.iter().zip(&w).map(|(&zi, &wi)| wi * (zi - mean) * (zi - mean)).sum();
        assert!((direct - 0.5).abs() < 1e-15);
    }

    #[test]
    fn jump_score_counts_changes() {
        // labels: 0, 1, 1, 0 -> jumps at t=2 and t=4 (1-based)
        let rows = vec![vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ]];
        let tr = class_trace(rows);
        let (s_jmp, _) = aux_scores(&tr, 0, StabilityMetric::Confidence, WeightScheme::Power { k: 1.0 }).unwrap();
        let expected = 1.0 - (2.0 / 4.0 + 4.0 / 4.0);
        assert!((s_jmp - expected).abs() < 1e-12);
    }

    #[test]
    fn top2_gap_and_entropy_metrics() {
        let logits = [2.0, 1.0, -1.0];
        let p = softmax_probs(&logits);
        let gap = StabilityMetric::Top2Gap.evaluate(&logits);
        assert!((gap - (p[0] - p[1])).abs() < 1e-12);
        let ent = StabilityMetric::Entropy.evaluate(&logits);
        let direct: f64 = p.iter().map(|&q| -q * q.ln()).sum();
        assert!((ent - direct).abs() < 1e-12);
    }

    #[test]
    fn disagreement_stats_basics() {
        use crate::trace::{Dataset, LabeledExample};
        // two examples, T=3; e0 predicted correctly with one flip, e1 wrong
        let rows = vec![
            vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]],
        ];
        let tr = class_trace(rows);
        let ds = Dataset::new(
            Task::Classification { classes: 2 },
            vec![
                LabeledExample::new("e0", vec![0.0], Label::Class(0)),
                LabeledExample::new("e1", vec![0.0], Label::Class(0)),
            ],
        )
        .unwrap();
        let stats = disagreement_stats(&tr, &ds).unwrap();
        let correct = stats.correct.unwrap();
        assert_eq!(correct.count, 1);
        assert_eq!(correct.mean, vec![1.0, 0.0, 0.0]);
        assert_eq!(correct.variance, vec![0.0, 0.0, 0.0]);
        let incorrect = stats.incorrect.unwrap();
        assert_eq!(incorrect.count, 1);
        assert_eq!(incorrect.mean, vec![1.0, 0.0, 0.0]);
        // e_T = v_T = 0 exactly on any valid trace
        assert_eq!(*correct.mean.last().unwrap(), 0.0);
        assert_eq!(*incorrect.variance.last().unwrap(), 0.0);
    }

    #[test]
    fn disagreement_stats_absent_group() {
        let rows = vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]]];
        let tr = class_trace(rows);
        let ds = crate::trace::Dataset::new(
            Task::Classification { classes: 2 },
            vec![crate::trace::LabeledExample::new("e0", vec![0.0], Label::Class(0))],
        )
        .unwrap();
        let stats = disagreement_stats(&tr, &ds).unwrap();
        assert!(stats.correct.is_some());
        assert!(stats.incorrect.is_none());

        let correct = stats.correct.unwrap();
        assert_eq!(correct.mean, vec![0.0, 0.0]);
    }

    #[test]
    fn bernoulli_group_stats() {
        // group of two with a_t in {0, 1} at t=1: e=0.5, v=0.25
        let rows = vec![
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        ];
        let tr = class_trace(rows);
        let ds = crate::trace::Dataset::new(
            Task::Classification { classes: 2 },
            vec![
                crate::trace::LabeledExample::new("e0", vec![0.0], Label::Class(0)),
                crate::trace::LabeledExample::new("e1", vec![0.0], Label::Class(0)),
            ],
        )
        .unwrap();
        let stats = disagreement_stats(&tr, &ds).unwrap();
        let correct = stats.correct.unwrap();
        assert_eq!(correct.count, 2);
        assert_eq!(correct.mean[0], 0.5);
        assert_eq!(correct.variance[0], 0.25);
    }

    #[test]
    fn forging_bound_hand_values() {
        let b = forging_bound(&[1.0, 0.0], &[0.5, 0.0], &[0.25, 0.0]).unwrap();
        assert_eq!(b.raw, 1.0);
        assert_eq!(b.clipped, 1.0);

        let b2 = forging_bound(&[1.0], &[0.0], &[0.01]).unwrap();
        assert!((b2.raw - 0.01).abs() < 1e-15);

        assert!(forging_bound(&[0.5, 0.0], &[0.5, 0.0], &[0.1, 0.0]).is_err());
    }

    #[test]
    fn forging_bound_invariant_under_agreeing_permutations() {
        // permuting checkpoints where a_t = e_t never changes the bound
        let a = [1.0, 0.0, 0.0, 1.0, 0.0];
        let e = [0.2, 0.0, 0.0, 0.1, 0.0];
        let v = [0.3, 0.9, 0.4, 0.2, 0.7];
        let base = forging_bound(&a, &e, &v).unwrap();
        // swap positions 1 and 2 (both have a_t = e_t = 0)
        let v2 = [0.3, 0.4, 0.9, 0.2, 0.7];
        let swapped = forging_bound(&a, &e, &v2).unwrap();
        assert_eq!(base, swapped);
    }

    #[test]
    fn forging_bound_dominates_true_sequence_probability() {
        // Simulated training populations: independent Bernoulli(p_t)
        // disagreements with p_T = 0. The product probability of any
        // sequence must stay below the Chebyshev bound built from the true
        // e_t = p_t and v_t = p_t (1 - p_t).
        let mut rng = DetRng::new(2024);
        for _ in 0..1000 {
            let t_total = 2 + rng.index(4); // up to 5 checkpoints
            let p: Vec<f64> = (0..t_total)
                .map(|t| if t + 1 < t_total { rng.uniform(0.05, 0.95) } else { 0.0 })
                .collect();
            let e = p.clone();
            let v: Vec<f64> = p.iter().map(|&q| q * (1.0 - q)).collect();
            // enumerate all binary sequences with a_T = 0
            for mask in 0..(1usize << (t_total - 1)) {
                let a: Vec<f64> = (0..t_total)
                    .map(|t| {
                        if t + 1 < t_total {
                            f64::from(mask & (1 << t) != 0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if a.iter().zip(&e).all(|(x, y)| x == y) {
                    continue;
                }
                let prob: f64 = a
                    .iter()
                    .zip(&p)
                    .map(|(&at, &pt)| if at == 1.0 { pt } else { 1.0 - pt })
                    .product();
                let bound = forging_bound(&a, &e, &v).unwrap();
                assert!(
                    bound.raw >= prob - 1e-12,
                    "bound {} < probability {prob} for {a:?} with p {p:?}",
                    bound.raw
                );
            }
        }
    }

    #[test]
    fn chow_rule() {
        assert!(chow_accept(0.5, 0.5));
        assert!(chow_accept(0.7, 0.5));
        assert!(!chow_accept(0.9, 0.05));
        assert!(chow_accept(0.01, 0.9999));
    }
}
