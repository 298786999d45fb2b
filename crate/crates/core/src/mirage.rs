//! Target-distribution constructors and the uncertainty-induction losses.
//!
//! The attack loss keeps cross-entropy outside a designated box region of
//! feature space and, inside it, pulls the model's output distribution
//! toward a truth-biased near-uniform target via KL divergence. With bias
//! epsilon > 0 the target's argmax stays at the true class, so label
//! predictions survive while confidence drops to a chosen level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::BoxRegion;
use crate::trace::softmax_probs;

/// How the residual (1 - epsilon) probability mass is spread over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetKind {
    /// t(y) = epsilon + (1-epsilon)/C, t(other) = (1-epsilon)/C.
    Default { epsilon: f64 },
    /// Mass restricted to a plausible-confusion subset containing y.
    Subset { epsilon: f64, classes: Vec<usize> },
    /// t(y) = epsilon, t(other) = (1-epsilon) * alpha_other with the
    /// off-class weights summing to 1 (the weight at y is ignored).
    Weighted { epsilon: f64, alphas: Vec<f64> },
}

impl TargetKind {
    pub fn epsilon(&self) -> f64 {
        match self {
            TargetKind::Default { epsilon }
            | TargetKind::Subset { epsilon, .. }
            | TargetKind::Weighted { epsilon, .. } => *epsilon,
        }
    }
}

/// Build the length-C target distribution for true class y.
pub fn target_distribution(kind: &TargetKind, num_classes: usize, y: usize) -> Result<Vec<f64>> {
    let epsilon = kind.epsilon();
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid("target", "epsilon must be in [0, 1]"));
    }
    if y >= num_classes {
        return Err(Error::invalid("target", format!("class {y} out of range for C={num_classes}")));
    }
    let mut t = vec![0.0; num_classes];
    match kind {
        TargetKind::Default { .. } => {
            let base = (1.0 - epsilon) / num_classes as f64;
            for v in t.iter_mut() {
                *v = base;
            }
            t[y] += epsilon;
        }
        TargetKind::Subset { classes, .. } => {
            if !classes.contains(&y) {
                return Err(Error::invalid("target", format!("subset must contain the true class {y}")));
            }
            if classes.iter().any(|&c| c >= num_classes) {
                return Err(Error::invalid("target", "subset class out of range"));
            }
            let mut unique = classes.clone();
            unique.sort_unstable();
            unique.dedup();
            let base = (1.0 - epsilon) / unique.len() as f64;
            for &c in &unique {
                t[c] = base;
            }
            t[y] += epsilon;
        }
        TargetKind::Weighted { alphas, .. } => {
            if alphas.len() != num_classes {
                return Err(Error::invalid("target", "need one weight per class"));
            }
            if alphas.iter().any(|&a| a < 0.0) {
                return Err(Error::invalid("target", "weights must be nonnegative"));
            }
            let off_sum: f64 = alphas
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != y)
                .map(|(_, &a)| a)
                .sum();
            if (off_sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(
                    "target",
                    format!("off-class weights sum to {off_sum}, expected 1"),
                ));
            }
            for (c, v) in t.iter_mut().enumerate() {
                *v = if c == y { epsilon } else { (1.0 - epsilon) * alphas[c] };
            }
        }
    }
    debug_assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    Ok(t)
}

/// Floor applied to target entries inside logarithms so KL against
/// zero-mass classes stays finite (large, never NaN).
const LOG_FLOOR: f64 = 1e-300;

/// KL(softmax(logits) || target), computed via log-sum-exp.
pub fn kl_to_target(logits: &[f64], target: &[f64]) -> f64 {
    let probs = softmax_probs(logits);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    probs
        .iter()
        .zip(logits)
        .zip(target)
        .map(|((&p, &z), &t)| p * ((z - lse) - t.max(LOG_FLOOR).ln()))
        .sum()
}

/// Gradient of [`kl_to_target`] with respect to the logits:
/// f_j * (log f_j - log t_j - KL).
pub fn kl_to_target_grad(logits: &[f64], target: &[f64]) -> Vec<f64> {
    let probs = softmax_probs(logits);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    let kl: f64 = probs
        .iter()
        .zip(logits)
        .zip(target)
        .map(|((&p, &z), &t)| p * ((z - lse) - t.max(LOG_FLOOR).ln()))
        .sum();
    probs
        .iter()
        .zip(logits)
        .zip(target)
        .map(|((&p, &z), &t)| p * (((z - lse) - t.max(LOG_FLOOR).ln()) - kl))
        .collect()
}

/// Cross-entropy -log softmax(logits)[y] via log-sum-exp.
pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[y]
}

/// Gaussian negative log-likelihood for an output head (mu, log sigma^2),
/// dropping the constant term: 0.5 * ((y - mu)^2 / sigma^2 + log sigma^2).
pub fn gaussian_nll(mu: f64, log_var: f64, y: f64) -> f64 {
    let inv_var = (-log_var).exp();
    0.5 * ((y - mu) * (y - mu) * inv_var + log_var)
}

/// One classification batch item: features, true class, model logits.
pub struct ClassBatchItem<'a> {
    pub features: &'a [f64],
    pub label: usize,
    pub logits: &'a [f64],
}

/// Mean hybrid loss over a batch: (1-lambda) * CE for items outside the
/// region, lambda * KL(model || target) for items inside.
pub fn mirage_loss(
    batch: &[ClassBatchItem<'_>],
    region: &BoxRegion,
    kind: &TargetKind,
    lambda: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("mirage_loss", "lambda must be in [0, 1]"));
    }
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for item in batch {
        let num_classes = item.logits.len();
        if region.contains(item.features) {
            let target = target_distribution(kind, num_classes, item.label)?;
            total += lambda * kl_to_target(item.logits, &target);
        } else {
            total += (1.0 - lambda) * cross_entropy(item.logits, item.label);
        }
    }
    Ok(total / batch.len() as f64)
}

/// One regression batch item: features, true value, and the model's
/// (mu, log sigma^2) head outputs.
pub struct RegressionBatchItem<'a> {
    pub features: &'a [f64],
    pub target: f64,
    pub mu: f64,
    pub log_var: f64,
}

/// Mean regression attack loss: Gaussian NLL outside the region,
/// lambda * (log sigma^2 - log sigma^2_target)^2 inside.
pub fn mirage_regression_loss(
    batch: &[RegressionBatchItem<'_>],
    region: &BoxRegion,
    sigma2_target: f64,
    lambda: f64,
) -> Result<f64> {
    if sigma2_target <= 0.0 {
        return Err(Error::invalid("mirage_regression_loss", "sigma2_target must be positive"));
    }
    if batch.is_empty() {
        return Ok(0.0);
    }
    let log_target = sigma2_target.ln();
    let mut total = 0.0;
    for item in batch {
        if region.contains(item.features) {
            let d = item.log_var - log_target;
            total += lambda * d * d;
        } else {
            total += gaussian_nll(item.mu, item.log_var, item.target);
        }
    }
    Ok(total / batch.len() as f64)
}

/// Histogram overlap of two confidence samples on a shared B-bin partition
/// of [0, 1]: sum over bins of min(p_in, p_out), in [0, 1].
pub fn overlap_coefficient(conf_in: &[f64], conf_out: &[f64], bins: usize) -> Result<f64> {
    if conf_in.is_empty() || conf_out.is_empty() {
        return Err(Error::invalid("overlap", "both samples must be nonempty"));
    }
    if bins == 0 {
        return Err(Error::invalid("overlap", "need at least one bin"));
    }
    let hist = |vals: &[f64]| -> Result<Vec<f64>> {
        let mut h = vec![0.0; bins];
        for &v in vals {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("overlap", format!("confidence {v} outside [0, 1]")));
            }
            let b = ((v * bins as f64) as usize).min(bins - 1);
            h[b] += 1.0 / vals.len() as f64;
        }
        Ok(h)
    };
    let h_in = hist(conf_in)?;
    let h_out = hist(conf_out)?;
    Ok(h_in.iter().zip(&h_out).map(|(a, b)| a.min(*b)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_target_limits() {
        let uniform = target_distribution(&TargetKind::Default { epsilon: 0.0 }, 3, 1).unwrap();
        for &v in &uniform {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let onehot = target_distribution(&TargetKind::Default { epsilon: 1.0 }, 4, 2).unwrap();
        assert_eq!(crate::trace::argmax(&onehot), 2);
        assert!((onehot[2] - 1.0).abs() < 1e-15);
        assert!(onehot.iter().enumerate().all(|(c, &v)| c == 2 || v.abs() < 1e-15));
    }

    #[test]
    fn default_target_quoted_values() {
        let t = target_distribution(&TargetKind::Default { epsilon: 0.15 }, 3, 0).unwrap();
        assert!((t[0] - 0.43333333333333335).abs() < 1e-9);
        assert!((t[1] - 0.2833333333333333).abs() < 1e-9);
        assert!((t[2] - 0.2833333333333333).abs() < 1e-9);
    }

    #[test]
    fn subset_target_spreads_only_over_subset() {
        let kind = TargetKind::Subset { epsilon: 0.2, classes: vec![0, 1] };
        let t = target_distribution(&kind, 3, 0).unwrap();
        assert!((t[0] - (0.2 + 0.4)).abs() < 1e-12);
        assert!((t[1] - 0.4).abs() < 1e-12);
        assert_eq!(t[2], 0.0);

        let bad = TargetKind::Subset { epsilon: 0.2, classes: vec![1, 2] };
        assert!(target_distribution(&bad, 3, 0).is_err());
    }

    #[test]
    fn weighted_target_requires_normalized_weights() {
        let kind = TargetKind::Weighted { epsilon: 0.3, alphas: vec![0.0, 0.25, 0.75] };
        let t = target_distribution(&kind, 3, 0).unwrap();
        assert!((t[0] - 0.3).abs() < 1e-12);
        assert!((t[1] - 0.7 * 0.25).abs() < 1e-12);
        assert!((t[2] - 0.7 * 0.75).abs() < 1e-12);

        let bad = TargetKind::Weighted { epsilon: 0.3, alphas: vec![0.0, 0.25, 0.5] };
        assert!(target_distribution(&bad, 3, 0).is_err());
    }

    #[test]
    fn targets_keep_argmax_at_true_class() {
        let mut rng = crate::rng::DetRng::new(21);
        for _ in 0..1000 {
            let c = 2 + rng.index(6);
            let y = rng.index(c);
            let epsilon = rng.uniform(1e-6, 1.0);
            let kinds = [
                TargetKind::Default { epsilon },
                TargetKind::Subset {
                    epsilon,
                    classes: {
                        let mut s: Vec<usize> = (0..c).filter(|_| rng.unit() < 0.5).collect();
                        if !s.contains(&y) {
                            s.push(y);
                        }
                        s
                    },
                },
                TargetKind::Weighted {
                    epsilon: 0.5 + 0.5 * epsilon,
                    alphas: {
                        let mut a: Vec<f64> = (0..c).map(|_| rng.uniform(0.01, 1.0)).collect();
                        a[y] = 0.0;
                        let s: f64 = a.iter().sum();
                        a.iter_mut().for_each(|v| *v /= s);
                        a
                    },
                },
            ];
            for kind in kinds {
                let t = target_distribution(&kind, c, y).unwrap();
                assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert_eq!(crate::trace::argmax(&t), y, "{kind:?}");
            }
        }
    }

    #[test]
    fn kl_of_matching_distribution_is_zero() {
        let t = target_distribution(&TargetKind::Default { epsilon: 0.15 }, 3, 0).unwrap();
        let logits: Vec<f64> = t.iter().map(|&p| p.ln()).collect();
        assert!(kl_to_target(&logits, &t).abs() < 1e-12);
        for g in kl_to_target_grad(&logits, &t) {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn mirage_loss_collapses_by_region() {
        let empty = BoxRegion::empty();
        let kind = TargetKind::Default { epsilon: 0.15 };
        let logits = [[1.0, -0.3, 0.2], [0.1, 0.4, -2.0]];
        let feats = [[0.0, 0.0], [1.0, 1.0]];
        let batch: Vec<ClassBatchItem> = (0..2)
            .map(|i| ClassBatchItem { features: &feats[i], label: i, logits: &logits[i] })
            .collect();

        let loss = mirage_loss(&batch, &empty, &kind, 0.25).unwrap();
        let expect = 0.75 * (cross_entropy(&logits[0], 0) + cross_entropy(&logits[1], 1)) / 2.0;
        assert!((loss - expect).abs() < 1e-12);

        // whole-space region with model output equal to the target
        let whole = BoxRegion::new(vec![(0, -1e12, 1e12)]).unwrap();
        let t0 = target_distribution(&kind, 3, 0).unwrap();
        let t1 = target_distribution(&kind, 3, 1).unwrap();
        let l0: Vec<f64> = t0.iter().map(|p| p.ln()).collect();
        let l1: Vec<f64> = t1.iter().map(|p| p.ln()).collect();
        let batch2 = [
            ClassBatchItem { features: &feats[0], label: 0, logits: &l0 },
            ClassBatchItem { features: &feats[1], label: 1, logits: &l1 },
        ];
        let loss2 = mirage_loss(&batch2, &whole, &kind, 1.0).unwrap();
        assert!(loss2.abs() < 1e-12);
    }

    #[test]
    fn single_in_region_point_matches_direct_summation() {
        // uniform model vs epsilon = 0.15 target, C = 3
        let kind = TargetKind::Default { epsilon: 0.15 };
        let region = BoxRegion::new(vec![(0, -1.0, 1.0)]).unwrap();
        let logits = [0.0, 0.0, 0.0];
        let feats = [0.5];
        let lambda = 0.7;
        let batch = [ClassBatchItem { features: &feats, label: 0, logits: &logits }];
        let loss = mirage_loss(&batch, &region, &kind, lambda).unwrap();

        let t = target_distribution(&kind, 3, 0).unwrap();
        let direct: f64 = (0..3).map(|i| (1.0 / 3.0) * ((1.0 / 3.0) / t[i]).ln()).sum();
        assert!((loss - lambda * direct).abs() < 1e-12);
    }

    #[test]
    fn mirage_loss_is_linear_in_lambda() {
        let kind = TargetKind::Default { epsilon: 0.3 };
        let region = BoxRegion::new(vec![(0, 0.0, 1.0)]).unwrap();
        let logits = [[1.0, -0.3], [0.1, 0.4]];
        let feats = [[0.5], [2.0]];
        let batch: Vec<ClassBatchItem> = (0..2)
            .map(|i| ClassBatchItem { features: &feats[i], label: 0, logits: &logits[i] })
            .collect();
        let at = |l: f64| mirage_loss(&batch, &region, &kind, l).unwrap();
        // linear in lambda: second difference vanishes
        let (a, b, c) = (at(0.2), at(0.5), at(0.8));
        assert!((c - 2.0 * b + a).abs() < 1e-12);
    }

    #[test]
    fn regression_attack_loss_cases() {
        let region = BoxRegion::new(vec![(0, -3.0, -2.0)]).unwrap();
        let inside = [RegressionBatchItem { features: &[-2.5], target: 0.0, mu: 5.0, log_var: 4.0f64.ln() }];
        let loss = mirage_regression_loss(&inside, &region, 4.0, 0.9).unwrap();
        assert!(loss.abs() < 1e-12, "matching target variance has zero penalty");

        let outside = [RegressionBatchItem { features: &[1.0], target: 2.0, mu: 2.0, log_var: 0.0 }];
        let loss2 = mirage_regression_loss(&outside, &region, 4.0, 0.9).unwrap();
        assert!(loss2.abs() < 1e-12, "NLL at y=mu, sigma^2=1 is zero");
    }

    #[test]
    fn overlap_coefficient_limits() {
        let a = [0.1, 0.2, 0.3, 0.9];
        assert!((overlap_coefficient(&a, &a, 20).unwrap() - 1.0).abs() < 1e-12);
        let lo = [0.05, 0.1];
        let hi = [0.8, 0.9];
        assert_eq!(overlap_coefficient(&lo, &hi, 20).unwrap(), 0.0);
        assert!(overlap_coefficient(&[], &hi, 20).is_err());
    }

    #[test]
    fn overlap_matches_brute_force() {
        let mut rng = crate::rng::DetRng::new(14);
        let a: Vec<f64> = (0..300).map(|_| rng.unit()).collect();
        let b: Vec<f64> = (0..200).map(|_| (rng.unit() + rng.unit()) / 2.0).collect();
        let bins = 20;
        let got = overlap_coefficient(&a, &b, bins).unwrap();
        let mut brute = 0.0;
        for bin in 0..bins {
            let lo = bin as f64 / bins as f64;
            let hi = (bin + 1) as f64 / bins as f64;
            let count = |v: &[f64]| {
                v.iter()
                    .filter(|&&x| (x >= lo && x < hi) || (bin == bins - 1 && x == 1.0))
                    .count() as f64
                    / v.len() as f64
            };
            brute += count(&a).min(count(&b));
        }
        assert!((got - brute).abs() < 1e-12);
    }
}
