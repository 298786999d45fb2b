//! Reliability binning, calibration error metrics, the bin-wise audit for
//! artificially induced uncertainty, and temperature scaling.
//!
//! The audit mirrors the sum form of the per-bin check: a bin passes iff
//! alpha * N_b >= |AccSum_b - ConfSum_b|, which is algebraically the mean
//! form alpha >= |acc_b - conf_b|. Confidence 1.0 is clamped into the top
//! bin; empty bins pass vacuously and carry no ECE weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::softmax_probs;

/// Equal-width confidence bins with exact sum accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub bins: usize,
    pub count: Vec<usize>,
    pub confidence_sum: Vec<f64>,
    pub correct_sum: Vec<f64>,
}

impl CalibrationTable {
    pub fn total(&self) -> usize {
        self.count.iter().sum()
    }
}

/// Bin index of a confidence value: floor(p * B) clamped so p = 1.0 lands
/// in the top bin.
pub fn bin_index(confidence: f64, bins: usize) -> usize {
    ((confidence * bins as f64) as usize).min(bins - 1)
}

/// Accumulate confidences and correctness flags into B equal-width bins.
pub fn bin_table(confidences: &[f64], correctness: &[bool], bins: usize) -> Result<CalibrationTable> {
    if bins == 0 {
        return Err(Error::invalid("bin_table", "need at least one bin"));
    }
    if confidences.len() != correctness.len() {
        return Err(Error::invalid("bin_table", "confidences and correctness must align"));
    }
    let mut table = CalibrationTable {
        bins,
        count: vec![0; bins],
        confidence_sum: vec![0.0; bins],
        correct_sum: vec![0.0; bins],
    };
    for (&p, &correct) in confidences.iter().zip(correctness) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("bin_table", format!("confidence {p} outside [0, 1]")));
        }
        let b = bin_index(p, bins);
        table.count[b] += 1;
        table.confidence_sum[b] += p;
        table.correct_sum[b] += f64::from(correct);
    }
    Ok(table)
}

/// One reliability-diagram point: a nonempty bin's mean confidence,
/// accuracy, and weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityPoint {
    pub bin: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EceMetrics {
    /// Expected calibration error: bin-weighted |acc - conf|.
    pub ece: f64,
    /// Worst nonempty bin's |acc - conf|.
    pub max_ce: f64,
    pub reliability: Vec<ReliabilityPoint>,
}

pub fn ece_metrics(table: &CalibrationTable) -> Result<EceMetrics> {
    let n = table.total();
    if n == 0 {
        return Err(Error::invalid("ece", "empty table"));
    }
    let mut ece = 0.0;
    let mut max_ce = 0.0f64;
    let mut reliability = Vec::new();
    for b in 0..table.bins {
        if table.count[b] == 0 {
            continue;
        }
        let nb = table.count[b] as f64;
        let conf = table.confidence_sum[b] / nb;
        let acc = table.correct_sum[b] / nb;
        let gap = (acc - conf).abs();
        ece += nb / n as f64 * gap;
        max_ce = max_ce.max(gap);
        reliability.push(ReliabilityPoint {
            bin: b,
            mean_confidence: conf,
            accuracy: acc,
            count: table.count[b],
        });
    }
    Ok(EceMetrics {
        ece,
        max_ce,
        reliability,
    })
}

/// Per-bin audit outcome in sum form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinAudit {
    pub bin: usize,
    pub count: usize,
    pub confidence_sum: f64,
    pub correct_sum: f64,
    pub pass: bool,
}

/// Result of the bin-wise calibration audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub bins: usize,
    pub alpha: f64,
    pub per_bin: Vec<BinAudit>,
    /// Conjunction of all per-bin flags.
    pub pass: bool,
    /// Indices of offending bins.
    pub failing_bins: Vec<usize>,
}

/// Bin-wise calibration audit over a reference set: per bin,
/// alpha * N_b >= |AccSum - ConfSum|; the overall flag is the conjunction.
/// Empty bins pass vacuously.
pub fn guardian_audit(confidences: &[f64], correctness: &[bool], bins: usize, alpha: f64) -> Result<AuditReport> {
    if confidences.is_empty() {
        return Err(Error::invalid("audit", "empty reference set"));
    }
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::invalid("audit", "alpha must be in (0, 1)"));
    }
    let table = bin_table(confidences, correctness, bins)?;
    let mut per_bin = Vec::with_capacity(bins);
    let mut failing_bins = Vec::new();
    for b in 0..bins {
        let nb = table.count[b];
        let pass = nb == 0
            || alpha * nb as f64 >= (table.correct_sum[b] - table.confidence_sum[b]).abs();
        if !pass {
            failing_bins.push(b);
        }
        per_bin.push(BinAudit {
            bin: b,
            count: nb,
            confidence_sum: table.confidence_sum[b],
            correct_sum: table.correct_sum[b],
            pass,
        });
    }
    Ok(AuditReport {
        bins,
        alpha,
        pass: failing_bins.is_empty(),
        per_bin,
        failing_bins,
    })
}

/// Temperature-scaled probabilities softmax(z / T) and the resulting
/// confidence max_j p_j. The argmax prediction is invariant in T.
pub fn apply_temperature(logits: &[f64], temperature: f64) -> Result<(Vec<f64>, f64)> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::invalid("temperature", "T must be positive"));
    }
    let scaled: Vec<f64> = logits.iter().map(|&z| z / temperature).collect();
    let probs = softmax_probs(&scaled);
    let s_t = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((probs, s_t))
}

fn mean_nll(logit_rows: &[Vec<f64>], labels: &[usize], temperature: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logit_rows.iter().zip(labels) {
        let scaled: Vec<f64> = row.iter().map(|&z| z / temperature).collect();
        total += crate::mirage::cross_entropy(&scaled, y);
    }
    total / logit_rows.len() as f64
}

/// Search bounds for the fitted temperature.
pub const TEMPERATURE_MIN: f64 = 0.05;
pub const TEMPERATURE_MAX: f64 = 20.0;

/// Fit a softmax temperature by minimizing the mean negative log-likelihood
/// with a golden-section search on log T over [ln 0.05, ln 20], tolerance
/// 1e-4.
pub fn fit_temperature(logit_rows: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if logit_rows.len() < 2 {
        return Err(Error::invalid("fit_temperature", "need at least two examples"));
    }
    if logit_rows.len() != labels.len() {
        return Err(Error::invalid("fit_temperature", "logits and labels must align"));
    }
    let classes = logit_rows[0].len();
    if classes < 2 {
        return Err(Error::invalid("fit_temperature", "need at least two classes"));
    }
    for (row, &y) in logit_rows.iter().zip(labels) {
        if row.len() != classes {
            return Err(Error::invalid("fit_temperature", "ragged logit rows"));
        }
        if y >= classes {
            return Err(Error::invalid("fit_temperature", format!("label {y} out of range")));
        }
    }
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(Error::Degenerate(
            "all labels identical, temperature fit refused".into(),
        ));
    }

    let objective = |log_t: f64| mean_nll(logit_rows, labels, log_t.exp());
    let mut lo = TEMPERATURE_MIN.ln();
    let mut hi = TEMPERATURE_MAX.ln();
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while hi - lo > 1e-4 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        }
    }
    Ok(((lo + hi) / 2.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    #[test]
    fn bin_index_clamps() {
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.35, 10), 3);
    }

    #[test]
    fn bin_table_rejects_out_of_range() {
        assert!(bin_table(&[1.5], &[true], 10).is_err());
        assert!(bin_table(&[-0.1], &[true], 10).is_err());
    }

    #[test]
    fn ece_perfectly_calibrated_table() {
        // each bin's mean confidence equals its accuracy
        let confidences = [0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75];
        let correctness = [true, false, false, false, true, true, true, false];
        let table = bin_table(&confidences, &correctness, 2).unwrap();
        let m = ece_metrics(&table).unwrap();
        assert!(m.ece.abs() < 1e-15);
        assert!(m.max_ce.abs() < 1e-15);
    }

    #[test]
    fn ece_single_bin_reduction() {
        let confidences = [0.9, 0.9];
        let correctness = [true, false];
        let table = bin_table(&confidences, &correctness, 1).unwrap();
        let m = ece_metrics(&table).unwrap();
        // acc 0.5, conf 0.9
        assert!((m.ece - 0.4).abs() < 1e-15);
        assert!((m.max_ce - 0.4).abs() < 1e-15);
        assert_eq!(m.reliability.len(), 1);
    }

    #[test]
    fn ece_matches_brute_force_resummation() {
        let mut rng = DetRng::new(55);
        for _ in 0..50 {
            let n = 5 + rng.index(100);
            let bins = 1 + rng.index(15);
            let conf: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
            let correct: Vec<bool> = (0..n).map(|_| rng.unit() < 0.6).collect();
            let m = ece_metrics(&bin_table(&conf, &correct, bins).unwrap()).unwrap();

            // independent re-summation: filter per bin, average directly
            let mut brute = 0.0;
            let mut brute_max = 0.0f64;
            for b in 0..bins {
                let members: Vec<usize> = (0..n).filter(|&i| bin_index(conf[i], bins) == b).collect();
                if members.is_empty() {
                    continue;
                }
                let nb = members.len() as f64;
                let acc = members.iter().filter(|&&i| correct[i]).count() as f64 / nb;
                let mean_conf = members.iter().map(|&i| conf[i]).sum::<f64>() / nb;
                brute += nb / n as f64 * (acc - mean_conf).abs();
                brute_max = brute_max.max((acc - mean_conf).abs());
            }
            assert!((m.ece - brute).abs() < 1e-12);
            assert!((m.max_ce - brute_max).abs() < 1e-12);
        }
    }

    #[test]
    fn audit_hand_example() {
        // one bin with N=10, conf sum 9.0, acc sum 5.0, alpha 0.1:
        // 1.0 >= 4.0 is false, so the bin fails
        let confidences = vec![0.9; 10];
        let correctness: Vec<bool> = (0..10).map(|i| i < 5).collect();
        let report = guardian_audit(&confidences, &correctness, 10, 0.1).unwrap();
        assert!(!report.pass);
        assert_eq!(report.failing_bins, vec![9]);
        let bin = &report.per_bin[9];
        assert_eq!(bin.count, 10);
        assert!((bin.confidence_sum - 9.0).abs() < 1e-12);
        assert!((bin.correct_sum - 5.0).abs() < 1e-12);
    }

    #[test]
    fn audit_passes_calibrated_scores() {
        let mut rng = DetRng::new(7);
        let mut conf = Vec::new();
        let mut correct = Vec::new();
        for _ in 0..5000 {
            let p = rng.unit();
            conf.push(p);
            correct.push(rng.unit() < p);
        }
        let report = guardian_audit(&conf, &correct, 10, 0.1).unwrap();
        assert!(report.pass, "failing bins {:?}", report.failing_bins);
    }

    #[test]
    fn audit_empty_bins_pass_vacuously() {
        let report = guardian_audit(&[0.95, 0.97], &[true, true], 10, 0.1).unwrap();
        assert!(report.pass);
        assert!(report.per_bin[..9].iter().all(|b| b.count == 0 && b.pass));
    }

    #[test]
    fn audit_agrees_with_max_ce_threshold() {
        // sum form and mean form are algebraically equivalent
        let mut rng = DetRng::new(88);
        for trial in 0..50 {
            let n = 20 + rng.index(200);
            let conf: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
            let correct: Vec<bool> = (0..n).map(|_| rng.unit() < 0.7).collect();
            let alpha = rng.uniform(0.02, 0.5);
            let report = guardian_audit(&conf, &correct, 10, alpha).unwrap();
            let metrics = ece_metrics(&bin_table(&conf, &correct, 10).unwrap()).unwrap();
            assert_eq!(report.pass, metrics.max_ce <= alpha, "trial {trial}");
        }
    }

    #[test]
    fn temperature_preserves_argmax_and_limits() {
        let mut rng = DetRng::new(61);
        for _ in 0..200 {
            let row: Vec<f64> = (0..4).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let base = crate::trace::argmax(&row);
            for t in [0.1, 0.5, 1.0, 3.0, 17.0] {
                let (probs, s_t) = apply_temperature(&row, t).unwrap();
                assert_eq!(crate::trace::argmax(&probs), base);
                assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(s_t >= 0.25 - 1e-12);
            }
        }
        // T -> infinity flattens to uniform
        let (probs, _) = apply_temperature(&[3.0, -1.0, 0.5], 1e6).unwrap();
        for &p in &probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn temperature_reranking_golden_pair() {
        // the two quoted logit vectors swap confidence order between T=1
        // and T=3
        let z1 = [-2.0, -3.0, -3.0];
        let z2 = [0.0, -0.1, -3.0];
        let (_, s1_t1) = apply_temperature(&z1, 1.0).unwrap();
        let (_, s2_t1) = apply_temperature(&z2, 1.0).unwrap();
        let (_, s1_t3) = apply_temperature(&z1, 3.0).unwrap();
        let (_, s2_t3) = apply_temperature(&z2, 3.0).unwrap();
        assert!((s1_t1 - 0.576).abs() < 1e-3, "{s1_t1}");
        assert!((s2_t1 - 0.512).abs() < 1e-3, "{s2_t1}");
        assert!((s1_t3 - 0.411).abs() < 1e-3, "{s1_t3}");
        assert!((s2_t3 - 0.428).abs() < 1e-3, "{s2_t3}");
        assert!(s1_t1 > s2_t1);
        assert!(s1_t3 < s2_t3);
    }

    #[test]
    fn binary_ordering_invariant_in_temperature() {
        // for two classes the confidence is a monotone logistic of the
        // margin, so cross-example ordering never changes
        let mut rng = DetRng::new(62);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)])
            .collect();
        let order_at = |t: f64| {
            let mut idx: Vec<usize> = (0..rows.len()).collect();
            let conf: Vec<f64> = rows
                .iter()
                .map(|r| apply_temperature(r, t).unwrap().1)
                .collect();
            idx.sort_by(|&a, &b| conf[a].total_cmp(&conf[b]).then(a.cmp(&b)));
            idx
        };
        let base = order_at(1.0);
        assert_eq!(order_at(0.5), base);
        assert_eq!(order_at(3.0), base);
    }

    /// Sample labels from softmax(logits) so the raw logits are calibrated
    /// by construction.
    fn calibrated_sample(n: usize, scale: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = DetRng::new(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let probs = softmax_probs(&row);
            let u = rng.unit();
            let mut acc = 0.0;
            let mut y = 0;
            for (c, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    y = c;
                    break;
                }
            }
            rows.push(row.iter().map(|&z| z * scale).collect());
            labels.push(y);
        }
        (rows, labels)
    }

    #[test]
    fn fit_temperature_recovers_scaling() {
        let (rows, labels) = calibrated_sample(4000, 1.0, 9);
        let t = fit_temperature(&rows, &labels).unwrap();
        assert!((0.8..=1.25).contains(&t), "fitted {t}");

        let (rows3, labels3) = calibrated_sample(4000, 3.0, 10);
        let t3 = fit_temperature(&rows3, &labels3).unwrap();
        assert!((2.4..=3.75).contains(&t3), "fitted {t3}");
    }

    #[test]
    fn fitted_nll_never_exceeds_unit_temperature() {
        for seed in [1u64, 2, 3] {
            let (rows, labels) = calibrated_sample(500, 1.7, seed);
            let t = fit_temperature(&rows, &labels).unwrap();
            assert!(mean_nll(&rows, &labels, t) <= mean_nll(&rows, &labels, 1.0) + 1e-9);
        }
    }

    #[test]
    fn fit_refuses_degenerate_labels() {
        let rows = vec![vec![1.0, 0.0], vec![0.5, 0.2]];
        assert!(matches!(
            fit_temperature(&rows, &[0, 0]),
            Err(Error::Degenerate(_))
        ));
    }
}
