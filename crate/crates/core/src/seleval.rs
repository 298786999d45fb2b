//! Selective-prediction evaluation: utility-coverage curves, AUACC/AUROC,
//! the perfect-ordering oracle bound, the selective classification gap and
//! its error-budget decomposition, and the loss-prediction metrics.
//!
//! Curves are built on the empirical prefix grid k/N with a deterministic
//! tie-break by example id, so every quantity here is an exact function of
//! the acceptance ordering. Applying any strictly increasing transform to
//! the scores leaves all outputs bit-identical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Dataset, Label, ScoreTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityKind {
    Accuracy,
    R2,
    Msis,
}

/// Per-series interval forecast with the history needed for the
/// seasonal-naive denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesInterval {
    pub id: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub actual: Vec<f64>,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsisParams {
    /// Predictive quantile level (e.g. 0.05 for a 95% interval).
    pub alpha: f64,
    /// Seasonal period m of the naive reference forecast.
    pub season: usize,
}

/// Acceptance ordering plus utility at every empirical coverage prefix.
///
/// `coverage[i] = k_i / N`; `utility[i]` is the utility over the first k_i
/// accepted examples. For accuracy every prefix is present; for R2 and MSIS
/// prefixes where the metric is undefined (degenerate denominators) are
/// skipped, which can only happen at small k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectiveCurve {
    pub utility_kind: UtilityKind,
    /// Example ids ranked most-confident first (ties broken by id).
    pub order: Vec<String>,
    pub coverage: Vec<f64>,
    pub utility: Vec<f64>,
    /// Utility at full coverage.
    pub a_full: f64,
}

/// Rank entry indices most-confident first with ties broken by id.
fn ranked_indices(scores: &ScoreTable) -> Vec<usize> {
    let entries = scores.entries();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        scores
            .confidence_key(&entries[b])
            .total_cmp(&scores.confidence_key(&entries[a]))
            .then_with(|| entries[a].id.cmp(&entries[b].id))
    });
    order
}

/// Accuracy curve from per-entry correctness flags aligned with the score
/// table's entries.
pub fn accuracy_curve_from_flags(scores: &ScoreTable, correct: &[bool]) -> Result<SelectiveCurve> {
    if scores.len() != correct.len() {
        return Err(Error::invalid("curve", "one correctness flag per score entry required"));
    }
    if scores.is_empty() {
        return Err(Error::invalid("curve", "empty score table"));
    }
    let order = ranked_indices(scores);
    let n = order.len();
    let mut coverage = Vec::with_capacity(n);
    let mut utility = Vec::with_capacity(n);
    let mut hits = 0usize;
    for (k0, &idx) in order.iter().enumerate() {
        hits += usize::from(correct[idx]);
        coverage.push((k0 + 1) as f64 / n as f64);
        utility.push(hits as f64 / (k0 + 1) as f64);
    }
    let a_full = *utility.last().expect("nonempty");
    Ok(SelectiveCurve {
        utility_kind: UtilityKind::Accuracy,
        order: order.iter().map(|&i| scores.entries()[i].id.clone()).collect(),
        coverage,
        utility,
        a_full,
    })
}

/// Build the utility-coverage curve of a score table against its dataset.
///
/// The acceptance order is by orientation-normalized confidence with ties
/// broken by id; utilities are computed cumulatively at every prefix. MSIS
/// curves additionally need per-series interval forecasts.
pub fn build_curve(
    scores: &ScoreTable,
    dataset: &Dataset,
    kind: UtilityKind,
    msis: Option<(&[SeriesInterval], MsisParams)>,
) -> Result<SelectiveCurve> {
    if scores.is_empty() {
        return Err(Error::invalid("curve", "empty score table"));
    }
    let by_id: std::collections::BTreeMap<&str, &crate::trace::LabeledExample> = dataset
        .examples()
        .iter()
        .map(|e| (e.id.as_str(), e))
        .collect();
    for e in scores.entries() {
        if !by_id.contains_key(e.id.as_str()) {
            return Err(Error::invalid("curve", format!("score id {:?} not in dataset", e.id)));
        }
    }
    if scores.len() != dataset.len() {
        return Err(Error::invalid("curve", "need exactly one score per labeled example"));
    }

    match kind {
        UtilityKind::Accuracy => {
            if !matches!(dataset.task(), crate::trace::Task::Classification { .. }) {
                return Err(Error::invalid("curve", "accuracy requires a classification task"));
            }
            let correct: Vec<bool> = scores
                .entries()
                .iter()
                .map(|e| by_id[e.id.as_str()].label == e.prediction)
                .collect();
            accuracy_curve_from_flags(scores, &correct)
        }
        UtilityKind::R2 => {
            if !matches!(dataset.task(), crate::trace::Task::Regression) {
                return Err(Error::invalid("curve", "r2 requires a regression task"));
            }
            let order = ranked_indices(scores);
            let n = order.len();
            let mut coverage = Vec::new();
            let mut utility = Vec::new();
            let (mut sse, mut sum_y, mut sum_y2) = (0.0, 0.0, 0.0);
            for (k0, &idx) in order.iter().enumerate() {
                let entry = &scores.entries()[idx];
                let pred = entry
                    .prediction
                    .as_scalar()
                    .ok_or_else(|| Error::invalid("curve", "r2 needs scalar predictions"))?;
                let y = by_id[entry.id.as_str()]
                    .label
                    .as_scalar()
                    .expect("regression dataset has scalar labels");
                sse += (pred - y) * (pred - y);
                sum_y += y;
                sum_y2 += y * y;
                let k = (k0 + 1) as f64;
                let sst = sum_y2 - sum_y * sum_y / k;
                if sst > 0.0 {
                    coverage.push(k / n as f64);
                    utility.push(1.0 - sse / sst);
                } else if k0 + 1 == n {
                    return Err(Error::Degenerate("constant labels make R2 undefined".into()));
                }
            }
            let a_full = *utility
                .last()
                .ok_or_else(|| Error::Degenerate("R2 undefined at every prefix".into()))?;
            Ok(SelectiveCurve {
                utility_kind: kind,
                order: order.iter().map(|&i| scores.entries()[i].id.clone()).collect(),
                coverage,
                utility,
                a_full,
            })
        }
        UtilityKind::Msis => {
            let (series, params) =
                msis.ok_or_else(|| Error::invalid("curve", "msis curves need interval forecasts"))?;
            let by_series: std::collections::BTreeMap<&str, &SeriesInterval> =
                series.iter().map(|s| (s.id.as_str(), s)).collect();
            let order = ranked_indices(scores);
            let n = order.len();
            let horizon = match dataset.task() {
                crate::trace::Task::Timeseries { horizon } => horizon,
                _ => return Err(Error::invalid("curve", "msis requires a timeseries task")),
            };
            let mut coverage = Vec::new();
            let mut utility = Vec::new();
            let mut scaled_sum = 0.0;
            for (k0, &idx) in order.iter().enumerate() {
                let id = scores.entries()[idx].id.as_str();
                let s = by_series
                    .get(id)
                    .ok_or_else(|| Error::invalid("curve", format!("no interval forecast for {id:?}")))?;
                scaled_sum += scaled_interval_score(s, params)?;
                coverage.push((k0 + 1) as f64 / n as f64);
                utility.push(scaled_sum / ((k0 + 1) as f64 * horizon as f64));
            }
            let a_full = *utility.last().expect("nonempty");
            Ok(SelectiveCurve {
                utility_kind: kind,
                order: order.iter().map(|&i| scores.entries()[i].id.clone()).collect(),
                coverage,
                utility,
                a_full,
            })
        }
    }
}

/// Fraction of matching prediction/label pairs.
pub fn accuracy_utility(predictions: &[Label], labels: &[Label]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::invalid("accuracy", "need aligned nonempty vectors"));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Coefficient of determination 1 - SSE/SST over the given pairs.
pub fn r_squared(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::invalid("r2", "need aligned nonempty vectors"));
    }
    let n = labels.len() as f64;
    let mean = labels.iter().sum::<f64>() / n;
    let sst: f64 = labels.iter().map(|&y| (y - mean) * (y - mean)).sum();
    if sst <= 0.0 {
        return Err(Error::Degenerate("constant labels make R2 undefined".into()));
    }
    let sse: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&f, &y)| (f - y) * (f - y))
        .sum();
    Ok(1.0 - sse / sst)
}

/// Numerator/denominator ratio of one series' interval score (the per-series
/// summand of MSIS before the 1/(M R) normalization).
fn scaled_interval_score(s: &SeriesInterval, params: MsisParams) -> Result<f64> {
    let r_len = s.actual.len();
    if s.lower.len() != r_len || s.upper.len() != r_len || r_len == 0 {
        return Err(Error::invalid("msis", format!("series {:?} bounds must match the horizon", s.id)));
    }
    if !(0.0 < params.alpha && params.alpha < 1.0) {
        return Err(Error::invalid("msis", "alpha must be in (0, 1)"));
    }
    let n = s.history.len();
    let m = params.season;
    if m == 0 || n <= m {
        return Err(Error::invalid(
            "msis",
            format!("series {:?} needs history longer than the seasonal period", s.id),
        ));
    }
    let denom: f64 = (m..n).map(|r| (s.history[r] - s.history[r - m]).abs()).sum::<f64>() / (n - m) as f64;
    if denom <= 0.0 {
        return Err(Error::Degenerate(format!(
            "series {:?} has a constant seasonal history",
            s.id
        )));
    }
    let mut numer = 0.0;
    for r in 0..r_len {
        let (l, u, y) = (s.lower[r], s.upper[r], s.actual[r]);
        numer += u - l;
        if y < l {
            numer += 2.0 / params.alpha * (l - y);
        }
        if y > u {
            numer += 2.0 / params.alpha * (y - u);
        }
    }
    Ok(numer / denom)
}

/// Mean Scaled Interval Score over a set of series: the interval width plus
/// quantile penalties, scaled by the seasonal-naive in-sample error,
/// averaged over series and horizon.
pub fn msis(series: &[SeriesInterval], params: MsisParams) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::invalid("msis", "need at least one series"));
    }
    let horizon = series[0].actual.len();
    let mut total = 0.0;
    for s in series {
        if s.actual.len() != horizon {
            return Err(Error::invalid("msis", "series must share a horizon"));
        }
        total += scaled_interval_score(s, params)?;
    }
    Ok(total / (series.len() as f64 * horizon as f64))
}

/// Trapezoidal integral of a curve over coverage, extending the leftmost
/// utility to coverage zero so a constant curve integrates to its constant.
fn trapezoid_with_left_extension(coverage: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(coverage.len(), values.len());
    debug_assert!(!coverage.is_empty());
    let mut area = coverage[0] * values[0];
    for i in 1..coverage.len() {
        area += (coverage[i] - coverage[i - 1]) * (values[i] + values[i - 1]) / 2.0;
    }
    area
}

/// Area under the utility-coverage curve on the empirical grid.
pub fn auacc(curve: &SelectiveCurve) -> f64 {
    trapezoid_with_left_extension(&curve.coverage, &curve.utility)
}

/// Mann-Whitney AUROC of the scores as a correct-vs-incorrect
/// discriminator: the probability a random correct example is ranked more
/// confident than a random incorrect one, ties counted half.
pub fn auroc(scores: &ScoreTable, correct: &[bool]) -> Result<f64> {
    if scores.len() != correct.len() {
        return Err(Error::invalid("auroc", "one correctness flag per entry required"));
    }
    let n_pos = correct.iter().filter(|&&c| c).count();
    let n_neg = correct.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined(
            "auroc needs both correct and incorrect examples".into(),
        ));
    }
    // ascending by confidence; average ranks over tie groups
    let entries = scores.entries();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        scores
            .confidence_key(&entries[a])
            .total_cmp(&scores.confidence_key(&entries[b]))
    });
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let key_i = scores.confidence_key(&entries[order[i]]);
        while j < order.len() && scores.confidence_key(&entries[order[j]]) == key_i {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if correct[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Best possible selective accuracy at coverage c for a classifier with
/// full-coverage accuracy a_full: 1 up to c = a_full, then a_full / c.
pub fn oracle_bound(a_full: f64, c: f64) -> Result<f64> {
    if c <= 0.0 {
        return Err(Error::invalid("oracle_bound", "coverage must be positive"));
    }
    debug_assert!((0.0..=1.0).contains(&a_full) && c <= 1.0);
    Ok(if c <= a_full { 1.0 } else { a_full / c })
}

/// Pointwise gap to the oracle bound and its integral.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapMetrics {
    pub coverage: Vec<f64>,
    /// Oracle bound minus realized utility at each empirical coverage.
    pub delta: Vec<f64>,
    /// Integral of delta over coverage; this is the accuracy-normalized
    /// score and equals the Excess-AURC.
    pub e_aurc: f64,
}

pub fn gap_metrics(curve: &SelectiveCurve) -> Result<GapMetrics> {
    let mut delta = Vec::with_capacity(curve.coverage.len());
    for (&c, &u) in curve.coverage.iter().zip(&curve.utility) {
        delta.push(oracle_bound(curve.a_full, c)? - u);
    }
    let e_aurc = trapezoid_with_left_extension(&curve.coverage, &delta);
    Ok(GapMetrics {
        coverage: curve.coverage.clone(),
        delta,
        e_aurc,
    })
}

/// One coverage level of the gap decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBudgetRow {
    /// Effective empirical coverage k/n.
    pub coverage: f64,
    /// Empirical gap to the oracle bound.
    pub delta: f64,
    /// Irreducible label noise inside the accepted set: mean 1 - max_k eta_k.
    pub bayes: f64,
    /// Model-class error: mean (max_k eta_k - eta_h) over the accepted set.
    pub approx: f64,
    /// Ranking regret: mean eta_h over the oracle set minus the accepted set.
    pub rank: f64,
    /// Probability mass that must be swapped to recover perfect ordering.
    pub d_rank: f64,
}

/// Gap decomposition over a coverage grid plus the finite-sample term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBudget {
    pub rows: Vec<GapBudgetRow>,
    /// epsilon_stat = C sqrt(log(1/delta) / n).
    pub epsilon_stat: f64,
    pub n: usize,
    pub delta_confidence: f64,
    pub c_const: f64,
}

/// Decompose the selective classification gap on posterior-known data.
///
/// eta_h(x) is the true probability that the model's predicted class is
/// correct, read off the per-example Bayes posterior at the predicted
/// class. The oracle set at each coverage takes the top mass by eta_h under
/// the same id tie-break as the score ranking.
pub fn decompose_gap(
    scores: &ScoreTable,
    dataset: &Dataset,
    grid: &[f64],
    delta_confidence: f64,
    c_const: f64,
) -> Result<GapBudget> {
    if scores.len() != dataset.len() {
        return Err(Error::invalid("decompose", "need one score per example"));
    }
    if !(0.0 < delta_confidence && delta_confidence < 1.0) {
        return Err(Error::invalid("decompose", "delta must be in (0, 1)"));
    }
    let by_id: std::collections::BTreeMap<&str, &crate::trace::LabeledExample> = dataset
        .examples()
        .iter()
        .map(|e| (e.id.as_str(), e))
        .collect();

    let entries = scores.entries();
    let n = entries.len();
    let mut eta_h = vec![0.0; n];
    let mut eta_max = vec![0.0; n];
    let mut correct = vec![false; n];
    for (i, entry) in entries.iter().enumerate() {
        let ex = by_id
            .get(entry.id.as_str())
            .ok_or_else(|| Error::invalid("decompose", format!("score id {:?} not in dataset", entry.id)))?;
        let posterior = ex
            .true_posterior
            .as_ref()
            .ok_or_else(|| Error::invalid("decompose", format!("example {:?} lacks a posterior", entry.id)))?;
        let predicted = entry
            .prediction
            .as_class()
            .ok_or_else(|| Error::invalid("decompose", "decomposition needs class predictions"))?;
        if predicted >= posterior.len() {
            return Err(Error::invalid("decompose", format!("prediction {predicted} out of range")));
        }
        eta_h[i] = posterior[predicted];
        eta_max[i] = posterior.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        correct[i] = ex.label == entry.prediction;
    }

    let score_order = ranked_indices(scores);
    let mut oracle_order: Vec<usize> = (0..n).collect();
    oracle_order.sort_by(|&a, &b| {
        eta_h[b]
            .total_cmp(&eta_h[a])
            .then_with(|| entries[a].id.cmp(&entries[b].id))
    });

    let a_full = correct.iter().filter(|&&c| c).count() as f64 / n as f64;
    let epsilon_stat = c_const * ((1.0 / delta_confidence).ln() / n as f64).sqrt();

    let mut rows = Vec::with_capacity(grid.len());
    for &c in grid {
        if !(0.0 < c && c <= 1.0) {
            return Err(Error::invalid("decompose", format!("grid coverage {c} outside (0, 1]")));
        }
        let k = ((c * n as f64).round() as usize).clamp(1, n);
        let accepted = &score_order[..k];
        let oracle = &oracle_order[..k];
        let cov = k as f64 / n as f64;

        let mean_over = |idx: &[usize], vals: &[f64]| -> f64 {
            idx.iter().map(|&i| vals[i]).sum::<f64>() / idx.len() as f64
        };
        let acc = accepted.iter().filter(|&&i| correct[i]).count() as f64 / k as f64;
        let bayes = accepted.iter().map(|&i| 1.0 - eta_max[i]).sum::<f64>() / k as f64;
        let approx = accepted.iter().map(|&i| eta_max[i] - eta_h[i]).sum::<f64>() / k as f64;
        let rank = mean_over(oracle, &eta_h) - mean_over(accepted, &eta_h);
        let accepted_set: std::collections::BTreeSet<usize> = accepted.iter().copied().collect();
        let swapped = oracle.iter().filter(|i| !accepted_set.contains(i)).count();
        let d_rank = 2.0 * swapped as f64 / n as f64;

        rows.push(GapBudgetRow {
            coverage: cov,
            delta: oracle_bound(a_full, cov)? - acc,
            bayes,
            approx,
            rank,
            d_rank,
        });
    }
    Ok(GapBudget {
        rows,
        epsilon_stat,
        n,
        delta_confidence,
        c_const,
    })
}

/// Loss-prediction quality metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossPredMetrics {
    /// Self-entropy predictor 1 - max_j p_j per example.
    pub sep: Vec<f64>,
    /// Squared-error advantage of the external predictor over SEP.
    pub advantage: f64,
    /// Multicalibration error over the supplied weight functions.
    pub mce: f64,
}

/// SEP, loss-predictor advantage, and multicalibration error in the
/// binary-correctness reduction.
///
/// The 0-1 loss is the misclassification indicator; the advantage is
/// E[(l - SEP)^2] - E[(l - LP)^2]; the MCE maximizes |E[(correct - p_max)
/// c(phi)]| over the supplied weight functions (each a per-example vector
/// with values in [-1, 1]).
pub fn loss_pred_metrics(
    prob_rows: &[Vec<f64>],
    correct: &[bool],
    loss_predictor: &[f64],
    weight_fns: &[Vec<f64>],
) -> Result<LossPredMetrics> {
    let n = prob_rows.len();
    if n == 0 || correct.len() != n || loss_predictor.len() != n {
        return Err(Error::invalid("loss_pred", "need aligned nonempty inputs"));
    }
    let sep: Vec<f64> = prob_rows
        .iter()
        .map(|row| 1.0 - row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let loss: Vec<f64> = correct.iter().map(|&c| if c { 0.0 } else { 1.0 }).collect();

    let mse = |pred: &[f64]| -> f64 {
        loss.iter()
            .zip(pred)
            .map(|(&l, &p)| (l - p) * (l - p))
            .sum::<f64>()
            / n as f64
    };
    let advantage = mse(&sep) - mse(loss_predictor);

    let mut mce = 0.0f64;
    for (w_idx, weights) in weight_fns.iter().enumerate() {
        if weights.len() != n {
            return Err(Error::invalid("loss_pred", format!("weight function {w_idx} misaligned")));
        }
        if weights.iter().any(|&w| !(-1.0..=1.0).contains(&w)) {
            return Err(Error::invalid("loss_pred", format!("weight function {w_idx} outside [-1, 1]")));
        }
        let residual_sum: f64 = prob_rows
            .iter()
            .zip(correct)
            .zip(weights)
            .map(|((row, &c), &w)| {
                let p_max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (f64::from(c) - p_max) * w
            })
            .sum();
        mce = mce.max((residual_sum / n as f64).abs());
    }
    Ok(LossPredMetrics {
        sep,
        advantage,
        mce,
    })
}
