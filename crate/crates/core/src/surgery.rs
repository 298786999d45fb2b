//! Constructive network surgery: inject widget neurons into a feed-forward
//! ReLU network so that a chosen nonnegative constant is added to the
//! logits of every input inside a box region, while all outputs elsewhere
//! stay untouched.
//!
//! Per region dimension a scalar region selection widget (clipped lower
//! bound + clipped upper bound + soft AND) detects a_i < x_i < b_i across
//! hidden layers 1-4. Multi-dimensional regions chain soft-AND widgets
//! pairwise, one extra hidden layer per additional dimension, rescaling
//! intermediate saturations to eps_clip so the final AND saturates at
//! eps_and. The final hidden layer feeds each logit j with weight
//! c_j / eps_and, so a saturated widget shifts logit j by exactly c_j.
//!
//! Networks shallower than the widget chain are front-padded with
//! identity-preserving ReLU layers using the pair trick
//! u = relu(u) - relu(-u) at doubled width. Negative region bounds are
//! handled by folding a constant input offset into the first-layer widget
//! biases, as the upper-bound widget requires nonnegative thresholds.
//!
//! The widget path output is identically zero outside the region only when
//! eps_and <= eps_clip (a zero from one dimension must dominate saturated
//! partners in the AND), so plans enforce that bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::BoxRegion;
use crate::trainer::{forward_output, Activation, Layer, MlpNetwork};

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidgetParams {
    /// Plateau height of the clipped bound widgets.
    pub eps_clip: f64,
    /// Lower-bound margin (0 places the detection edge exactly at a_i).
    pub eps_lb: f64,
    /// Upper-bound margin (0 places the detection edge exactly at b_i).
    pub eps_ub: f64,
    /// Saturation value of the soft-AND output.
    pub eps_and: f64,
}

impl WidgetParams {
    /// Defaults for a region: eps_clip = min_i (b_i - a_i) / 8,
    /// eps_and = eps_clip, margins zero.
    pub fn for_region(region: &BoxRegion) -> Result<WidgetParams> {
        let min_width = region
            .dims
            .iter()
            .map(|&(_, a, b)| b - a)
            .fold(f64::INFINITY, f64::min);
        if !min_width.is_finite() || min_width <= 0.0 {
            return Err(Error::invalid("widget params", "region must have finite positive widths"));
        }
        Ok(WidgetParams {
            eps_clip: min_width / 8.0,
            eps_lb: 0.0,
            eps_ub: 0.0,
            eps_and: min_width / 8.0,
        })
    }

    pub fn validate(&self, region: &BoxRegion) -> Result<()> {
        if self.eps_clip <= 0.0 || self.eps_and <= 0.0 {
            return Err(Error::invalid("widget params", "eps_clip and eps_and must be positive"));
        }
        if self.eps_lb < 0.0 || self.eps_ub < 0.0 {
            return Err(Error::invalid("widget params", "margins must be nonnegative"));
        }
        if self.eps_and > self.eps_clip {
            return Err(Error::invalid(
                "widget params",
                "eps_and must not exceed eps_clip (outside-region exactness)",
            ));
        }
        for &(i, a, b) in &region.dims {
            if self.eps_clip >= (b - a) / 2.0 {
                return Err(Error::invalid(
                    "widget params",
                    format!("eps_clip {} leaves no core interval in dim {i} [{a}, {b}]", self.eps_clip),
                ));
            }
        }
        Ok(())
    }
}

/// A validated surgery: region, per-logit shift, and widget parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryPlan {
    pub region: BoxRegion,
    /// Nonnegative logit shift, one entry per output.
    pub shift: Vec<f64>,
    pub params: WidgetParams,
}

impl SurgeryPlan {
    pub fn new(region: BoxRegion, shift: Vec<f64>, params: WidgetParams) -> Result<SurgeryPlan> {
        params.validate(&region)?;
        if shift.iter().any(|&c| c < 0.0 || !c.is_finite()) {
            return Err(Error::invalid("plan", "shift must be componentwise nonnegative and finite"));
        }
        if region.dims.is_empty() {
            return Err(Error::invalid("plan", "region must constrain at least one dimension"));
        }
        Ok(SurgeryPlan {
            region,
            shift,
            params,
        })
    }

    pub fn with_default_params(region: BoxRegion, shift: Vec<f64>) -> Result<SurgeryPlan> {
        let params = WidgetParams::for_region(&region)?;
        SurgeryPlan::new(region, shift, params)
    }

    /// Per-dimension core interval [a_i + eps_clip, b_i - eps_clip] where
    /// the shift is guaranteed.
    pub fn core_intervals(&self) -> Vec<(usize, f64, f64)> {
        self.region
            .dims
            .iter()
            .map(|&(i, a, b)| (i, a + self.params.eps_clip, b - self.params.eps_clip))
            .collect()
    }

    pub fn in_core(&self, x: &[f64]) -> bool {
        self.core_intervals()
            .iter()
            .all(|&(i, lo, hi)| x.get(i).is_some_and(|&v| lo <= v && v <= hi))
    }

    pub fn outside(&self, x: &[f64]) -> bool {
        self.region
            .dims
            .iter()
            .any(|&(i, a, b)| x.get(i).is_none_or(|&v| v <= a || v >= b))
    }
}

/// Clipped lower bound widget
/// relu(relu(relu(x) - (t - eps_lb)) - relu(relu(x - eps_clip) - (t - eps_lb))):
/// 0 below t - eps_lb, a ramp of width eps_clip, then a plateau at
/// eps_clip.
pub fn clbw(x: f64, t: f64, params: &WidgetParams) -> f64 {
    let threshold = t - params.eps_lb;
    relu(relu(relu(x) - threshold) - relu(relu(x - params.eps_clip) - threshold))
}

/// Clipped upper bound widget
/// relu(relu(-relu(x) + (t + eps_ub)) - relu(-relu(x + eps_clip) + (t + eps_ub))):
/// the mirror image, a plateau at eps_clip for 0 <= x <= t + eps_ub -
/// eps_clip, a downward ramp, 0 above t + eps_ub. Valid for nonnegative
/// thresholds.
pub fn cubw(x: f64, t: f64, params: &WidgetParams) -> f64 {
    let threshold = t + params.eps_ub;
    relu(relu(-relu(x) + threshold) - relu(-relu(x + params.eps_clip) + threshold))
}

/// Soft AND of two widget outputs: relu(o1 + o2 - (2 eps_clip - eps_and)).
/// Saturates at eps_and when both inputs sit at eps_clip; zero when either
/// input is zero (given eps_and <= eps_clip).
pub fn soft_and(o1: f64, o2: f64, params: &WidgetParams) -> f64 {
    relu(o1 + o2 - (2.0 * params.eps_clip - params.eps_and))
}

/// Neuron under construction: weight taps into the previous layer plus a
/// bias. Taps index the previous layer's full activation vector.
struct PendingNeuron {
    taps: Vec<(usize, f64)>,
    bias: f64,
}

/// Insert the widget assembly of `plan` into `net`.
///
/// The original parameters are untouched: the returned network computes
/// f'(x) = f(x) outside the region and f(x) + shift inside the per-dim
/// core intervals, with transition ramps of width eps_clip at the region
/// faces.
pub fn augment_network(net: &MlpNetwork, plan: &SurgeryPlan) -> Result<MlpNetwork> {
    net.validate()?;
    plan.params.validate(&plan.region)?;
    let input_dim = net.input_dim();
    let output_dim = net.output_dim();
    if plan.shift.len() != output_dim {
        return Err(Error::DimensionMismatch {
            expected: output_dim,
            got: plan.shift.len(),
        });
    }
    if plan.region.max_coordinate() >= input_dim {
        return Err(Error::invalid(
            "plan",
            format!("region touches coordinate {} but the model has {input_dim} inputs", plan.region.max_coordinate()),
        ));
    }

    let dims = &plan.region.dims;
    let n_dims = dims.len();
    let widget_layers = 4 + n_dims.saturating_sub(1);
    let original_hidden = net.hidden_layers();
    let pad = widget_layers.saturating_sub(original_hidden);
    let total_hidden = original_hidden + pad;

    // Input offset so every detection threshold is nonnegative and the
    // first-layer relu clamp only fires below every lower bound.
    let min_lower = dims.iter().map(|&(_, a, _)| a).fold(f64::INFINITY, f64::min);
    let offset = if min_lower - plan.params.eps_lb < 1.0 {
        1.0 + plan.params.eps_lb - min_lower
    } else {
        0.0
    };

    let eps_clip = plan.params.eps_clip;
    let eps_and = plan.params.eps_and;

    // Widget neuron layout per hidden layer (indices within the widget
    // block). Built first so wiring can reference positions.
    // layer 1: per dim [n1, n3, n6, n8]; layer 2: [n2, n4, n7, n9];
    // layer 3: [n5, n10]; layer 4: per-dim AND; layers 5..: conjunction
    // chain plus carries of not-yet-consumed per-dim ANDs.
    let mut widget_cols: Vec<Vec<PendingNeuron>> = Vec::with_capacity(total_hidden);
    // base width of each previous layer, to place widget taps after the
    // base block
    let mut base_widths = Vec::with_capacity(total_hidden);
    for h in 1..=total_hidden {
        base_widths.push(if h <= pad {
            2 * input_dim
        } else {
            net.layers[h - pad - 1].out_dim()
        });
    }

    // positions of the per-dim AND outputs within layer-4's widget block
    for h in 1..=total_hidden {
        let mut block: Vec<PendingNeuron> = Vec::new();
        let prev_base = if h == 1 { input_dim } else { base_widths[h - 2] };
        let prev_widget_start = prev_base;
        match h {
            1 => {
                for &(i, _, _) in dims {
                    // n1 / n3 (lower pair), n6 / n8 (upper pair) read x_i
                    block.push(PendingNeuron { taps: vec![(i, 1.0)], bias: offset });
                    block.push(PendingNeuron { taps: vec![(i, 1.0)], bias: offset - eps_clip });
                    block.push(PendingNeuron { taps: vec![(i, 1.0)], bias: offset });
                    block.push(PendingNeuron { taps: vec![(i, 1.0)], bias: offset + eps_clip });
                }
            }
            2 => {
                for (d, &(_, a, b)) in dims.iter().enumerate() {
                    let lo = a + offset - plan.params.eps_lb;
                    let hi = b + offset + plan.params.eps_ub;
                    let base = prev_widget_start + 4 * d;
                    block.push(PendingNeuron { taps: vec![(base, 1.0)], bias: -lo });
                    block.push(PendingNeuron { taps: vec![(base + 1, 1.0)], bias: -lo });
                    block.push(PendingNeuron { taps: vec![(base + 2, -1.0)], bias: hi });
                    block.push(PendingNeuron { taps: vec![(base + 3, -1.0)], bias: hi });
                }
            }
            3 => {
                for d in 0..n_dims {
                    let base = prev_widget_start + 4 * d;
                    block.push(PendingNeuron {
                        taps: vec![(base, 1.0), (base + 1, -1.0)],
                        bias: 0.0,
                    });
                    block.push(PendingNeuron {
                        taps: vec![(base + 2, 1.0), (base + 3, -1.0)],
                        bias: 0.0,
                    });
                }
            }
            4 => {
                // per-dim soft AND of (clbw, cubw); saturation eps_clip
                // while chaining, eps_and when this is already the end
                let sat = if n_dims == 1 { eps_and } else { eps_clip };
                for d in 0..n_dims {
                    let base = prev_widget_start + 2 * d;
                    block.push(PendingNeuron {
                        taps: vec![(base, 1.0), (base + 1, 1.0)],
                        bias: -(2.0 * eps_clip - sat),
                    });
                }
            }
            _ if h <= widget_layers => {
                // conjunction chain step j = h - 4: AND(previous conj,
                // next per-dim output), then carry the still-unconsumed
                // per-dim outputs
                let j = h - 4;
                let sat = if j == n_dims - 1 { eps_and } else { eps_clip };
                // previous block layout: [conj or and_0, carries...]
                block.push(PendingNeuron {
                    taps: vec![(prev_widget_start, 1.0), (prev_widget_start + 1, 1.0)],
                    bias: -(2.0 * eps_clip - sat),
                });
                // keep the per-dim outputs not yet consumed by the chain
                for carry in 2..(n_dims + 1 - j) {
                    block.push(PendingNeuron {
                        taps: vec![(prev_widget_start + carry, 1.0)],
                        bias: 0.0,
                    });
                }
            }
            _ => {
                // propagate the finished conjunction through remaining
                // original layers
                block.push(PendingNeuron {
                    taps: vec![(prev_widget_start, 1.0)],
                    bias: 0.0,
                });
            }
        }
        widget_cols.push(block);
    }

    // assemble hidden layers
    let mut layers: Vec<Layer> = Vec::with_capacity(total_hidden + 1);
    for h in 1..=total_hidden {
        let prev_width = if h == 1 {
            input_dim
        } else {
            base_widths[h - 2] + widget_cols[h - 2].len()
        };
        let base_width = base_widths[h - 1];
        let mut weights: Vec<Vec<f64>> = Vec::with_capacity(base_width + widget_cols[h - 1].len());
        let mut bias: Vec<f64> = Vec::with_capacity(base_width + widget_cols[h - 1].len());

        if h <= pad {
            if h == 1 {
                // pair trick: [relu(x); relu(-x)]
                for sign in [1.0, -1.0] {
                    for j in 0..input_dim {
                        let mut row = vec![0.0; prev_width];
                        row[j] = sign;
                        weights.push(row);
                        bias.push(0.0);
                    }
                }
            } else {
                // carry the 2*input_dim nonnegative pair values
                for j in 0..2 * input_dim {
                    let mut row = vec![0.0; prev_width];
                    row[j] = 1.0;
                    weights.push(row);
                    bias.push(0.0);
                }
            }
        } else {
            let orig = &net.layers[h - pad - 1];
            for (orig_row, &b) in orig.weights.iter().zip(&orig.bias) {
                let mut row = vec![0.0; prev_width];
                if h == pad + 1 && pad > 0 {
                    // reconstruct x = relu(x) - relu(-x) from the pairs
                    for (j, &w) in orig_row.iter().enumerate() {
                        row[j] = w;
                        row[input_dim + j] = -w;
                    }
                } else {
                    row[..orig_row.len()].copy_from_slice(orig_row);
                }
                weights.push(row);
                bias.push(b);
            }
        }

        for neuron in &widget_cols[h - 1] {
            let mut row = vec![0.0; prev_width];
            for &(tap, w) in &neuron.taps {
                row[tap] = w;
            }
            weights.push(row);
            bias.push(neuron.bias);
        }

        layers.push(Layer {
            weights,
            bias,
            activation: Activation::Relu,
        });
    }

    // output layer: original weights plus the widget contribution
    let orig_out = net.layers.last().expect("validated");
    let prev_width = base_widths[total_hidden - 1] + widget_cols[total_hidden - 1].len();
    let widget_final = prev_width - 1;
    let mut weights = Vec::with_capacity(output_dim);
    for (j, orig_row) in orig_out.weights.iter().enumerate() {
        let mut row = vec![0.0; prev_width];
        if pad > 0 && original_hidden == 0 {
            // the output layer is the first original layer: reconstruct
            // x = relu(x) - relu(-x) from the pad pairs
            for (i, &w) in orig_row.iter().enumerate() {
                row[i] = w;
                row[input_dim + i] = -w;
            }
        } else {
            row[..orig_row.len()].copy_from_slice(orig_row);
        }
        row[widget_final] = plan.shift[j] / eps_and;
        weights.push(row);
    }
    let out_layer = Layer {
        weights,
        bias: orig_out.bias.clone(),
        activation: Activation::Identity,
    };
    layers.push(out_layer);

    let augmented = MlpNetwork {
        head: net.head,
        layers,
    };
    augmented.validate()?;
    Ok(augmented)
}

/// Radical-inverse Halton value for 1-based `index`.
fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

const HALTON_BASES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Deterministic low-discrepancy verification grid over a bounding box
/// twice the region extent (free coordinates span [-2, 2]).
pub fn verification_grid(plan: &SurgeryPlan, input_dim: usize, n: usize) -> Vec<Vec<f64>> {
    let mut ranges = vec![(-2.0, 2.0); input_dim];
    for &(i, a, b) in &plan.region.dims {
        let mid = (a + b) / 2.0;
        let width = b - a;
        ranges[i] = (mid - width, mid + width);
    }
    (1..=n as u64)
        .map(|idx| {
            (0..input_dim)
                .map(|d| {
                    let u = halton(idx, HALTON_BASES[d % HALTON_BASES.len()]);
                    let (lo, hi) = ranges[d];
                    lo + (hi - lo) * u
                })
                .collect()
        })
        .collect()
}

/// Empirical check of a surgery over a Halton grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurgeryReport {
    pub points: usize,
    pub outside_points: usize,
    pub core_points: usize,
    pub transition_points: usize,
    /// max over outside points of max_j |f'_j - f_j|.
    pub outside_max_deviation: f64,
    /// max over core points of max_j |f'_j - (f_j + c_j)|.
    pub core_max_deviation: f64,
    /// max over transition points of max_j |f'_j - f_j| (informational:
    /// the construction leaves this zone unspecified).
    pub transition_max_deviation: f64,
    /// fraction of outside points whose argmax prediction is unchanged.
    pub outside_argmax_preserved: f64,
}

/// Evaluate both networks on a deterministic grid and report the maxima per
/// zone. Transition points (within eps_clip of a region face) are excluded
/// from the strict checks and reported separately.
pub fn verify_surgery(
    original: &MlpNetwork,
    augmented: &MlpNetwork,
    plan: &SurgeryPlan,
    grid_n: usize,
) -> Result<SurgeryReport> {
    if grid_n < 100 {
        return Err(Error::invalid("verify", "need at least 100 grid points"));
    }
    let grid = verification_grid(plan, original.input_dim(), grid_n);
    let mut report = SurgeryReport {
        points: grid.len(),
        outside_points: 0,
        core_points: 0,
        transition_points: 0,
        outside_max_deviation: 0.0,
        core_max_deviation: 0.0,
        transition_max_deviation: 0.0,
        outside_argmax_preserved: 1.0,
    };
    let mut argmax_same = 0usize;
    for x in &grid {
        let f = forward_output(original, x)?;
        let g = forward_output(augmented, x)?;
        if plan.outside(x) {
            report.outside_points += 1;
            let dev = f
                .iter()
                .zip(&g)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            report.outside_max_deviation = report.outside_max_deviation.max(dev);
            if crate::trace::argmax(&f) == crate::trace::argmax(&g) {
                argmax_same += 1;
            }
        } else if plan.in_core(x) {
            report.core_points += 1;
            let dev = f
                .iter()
                .zip(&g)
                .zip(&plan.shift)
                .map(|((a, b), c)| (a + c - b).abs())
                .fold(0.0, f64::max);
            report.core_max_deviation = report.core_max_deviation.max(dev);
        } else {
            report.transition_points += 1;
            let dev = f
                .iter()
                .zip(&g)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            report.transition_max_deviation = report.transition_max_deviation.max(dev);
        }
    }
    if report.outside_points > 0 {
        report.outside_argmax_preserved = argmax_same as f64 / report.outside_points as f64;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{init_network, HeadKind};

    fn params(eps_clip: f64) -> WidgetParams {
        WidgetParams {
            eps_clip,
            eps_lb: 0.0,
            eps_ub: 0.0,
            eps_and: eps_clip,
        }
    }

    #[test]
    fn clbw_piecewise_values() {
        let p = params(0.25);
        let t = 2.0;
        assert_eq!(clbw(t - p.eps_lb - 1.0, t, &p), 0.0);
        assert_eq!(clbw(t - p.eps_lb, t, &p), 0.0);
        let x = t - p.eps_lb + p.eps_clip;
        assert!((clbw(x, t, &p) - p.eps_clip).abs() < 1e-15);
        assert!((clbw(x + 5.0, t, &p) - p.eps_clip).abs() < 1e-15);
        // mid-ramp
        let mid = t - p.eps_lb + p.eps_clip / 2.0;
        let v = clbw(mid, t, &p);
        assert!(v > 0.0 && v < p.eps_clip);
    }

    #[test]
    fn cubw_piecewise_values() {
        let p = params(0.25);
        let t = 2.0;
        assert_eq!(cubw(t + p.eps_ub, t, &p), 0.0);
        assert_eq!(cubw(t + p.eps_ub + 1.0, t, &p), 0.0);
        let x = t + p.eps_ub - p.eps_clip;
        assert!((cubw(x, t, &p) - p.eps_clip).abs() < 1e-15);
        assert!((cubw(0.0, t, &p) - p.eps_clip).abs() < 1e-15);
    }

    #[test]
    fn soft_and_table() {
        let p = WidgetParams {
            eps_clip: 0.25,
            eps_lb: 0.0,
            eps_ub: 0.0,
            eps_and: 0.2,
        };
        assert!((soft_and(p.eps_clip, p.eps_clip, &p) - p.eps_and).abs() < 1e-15);
        assert_eq!(soft_and(0.0, p.eps_clip, &p), 0.0);
        assert_eq!(soft_and(p.eps_clip, 0.0, &p), 0.0);
        assert_eq!(soft_and(0.0, 0.0, &p), 0.0);
    }

    #[test]
    fn widgets_are_monotone() {
        // over the widgets' valid domain x >= 0 (the construction shifts
        // inputs there before use)
        let p = params(0.3);
        let t = 1.5;
        let mut prev_lo = -1.0;
        let mut prev_hi = f64::INFINITY;
        for step in 0..200 {
            let x = step as f64 * 0.025;
            let lo = clbw(x, t, &p);
            let hi = cubw(x, t + 1.0, &p);
            assert!(lo >= prev_lo - 1e-15, "clbw non-decreasing");
            assert!(hi <= prev_hi + 1e-15, "cubw non-increasing");
            prev_lo = lo;
            prev_hi = hi;
        }
    }

    #[test]
    fn plan_rejects_bad_inputs() {
        let region = BoxRegion::rect2d((0.0, 0.0), (1.0, 1.0)).unwrap();
        // degenerate: eps_clip eats the whole interval
        assert!(SurgeryPlan::new(region.clone(), vec![0.0], params(0.5)).is_err());
        // negative shift
        assert!(SurgeryPlan::new(region.clone(), vec![-1.0], params(0.1)).is_err());
        // eps_and > eps_clip breaks outside exactness
        let bad = WidgetParams {
            eps_clip: 0.1,
            eps_lb: 0.0,
            eps_ub: 0.0,
            eps_and: 0.15,
        };
        assert!(SurgeryPlan::new(region, vec![0.0], bad).is_err());
    }

    fn check_network(
        net: &MlpNetwork,
        region: BoxRegion,
        shift: Vec<f64>,
        grid_n: usize,
    ) -> SurgeryReport {
        let plan = SurgeryPlan::with_default_params(region, shift).unwrap();
        let augmented = augment_network(net, &plan).unwrap();
        verify_surgery(net, &augmented, &plan, grid_n).unwrap()
    }

    #[test]
    fn surgery_on_deep_net_is_exact() {
        let net = init_network(2, &[16, 16, 16, 16], HeadKind::Logits { classes: 3 }, 42).unwrap();
        let region = BoxRegion::rect2d((-0.5, 0.25), (0.75, 1.5)).unwrap();
        let report = check_network(&net, region, vec![0.0, 2.0, 0.0], 4000);
        assert!(report.outside_points > 100);
        assert!(report.core_points > 100);
        assert!(report.outside_max_deviation <= 1e-5, "{report:?}");
        assert!(report.core_max_deviation <= 1e-5, "{report:?}");
        assert_eq!(report.outside_argmax_preserved, 1.0);
    }

    #[test]
    fn surgery_pads_shallow_networks() {
        // two hidden layers padded to the four the widgets need
        let net = init_network(2, &[8, 8], HeadKind::Logits { classes: 3 }, 7).unwrap();
        let region = BoxRegion::rect2d((0.0, 0.0), (1.0, 1.0)).unwrap();
        let report = check_network(&net, region, vec![1.0, 0.0, 3.0], 4000);
        assert!(report.outside_max_deviation <= 1e-5, "{report:?}");
        assert!(report.core_max_deviation <= 1e-5, "{report:?}");
    }

    #[test]
    fn surgery_handles_linear_model_and_negative_bounds() {
        let net = init_network(2, &[], HeadKind::Logits { classes: 2 }, 9).unwrap();
        let region = BoxRegion::rect2d((-2.0, -1.5), (-1.0, -0.25)).unwrap();
        let report = check_network(&net, region, vec![0.5, 0.0], 4000);
        assert!(report.outside_max_deviation <= 1e-5, "{report:?}");
        assert!(report.core_max_deviation <= 1e-5, "{report:?}");
    }

    #[test]
    fn surgery_single_dimension_region() {
        let net = init_network(3, &[10, 10, 10, 10, 10], HeadKind::Logits { classes: 2 }, 3).unwrap();
        let region = BoxRegion::new(vec![(1, 0.2, 1.4)]).unwrap();
        let report = check_network(&net, region, vec![0.0, 1.5], 4000);
        assert!(report.outside_max_deviation <= 1e-5, "{report:?}");
        assert!(report.core_max_deviation <= 1e-5, "{report:?}");
    }

    #[test]
    fn zero_shift_is_identity_everywhere() {
        let net = init_network(2, &[6, 6], HeadKind::Logits { classes: 2 }, 11).unwrap();
        let region = BoxRegion::rect2d((0.0, 0.0), (1.0, 1.0)).unwrap();
        let plan = SurgeryPlan::with_default_params(region, vec![0.0, 0.0]).unwrap();
        let augmented = augment_network(&net, &plan).unwrap();
        for point in verification_grid(&plan, 2, 500) {
            let f = forward_output(&net, &point).unwrap();
            let g = forward_output(&augmented, &point).unwrap();
            for (a, b) in f.iter().zip(&g) {
                assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn widget_path_is_exactly_zero_outside() {
        // symbolic-level check on the scalar widgets: any coordinate at or
        // beyond a bound forces its srsw to zero and the AND chain with it
        let p = params(0.125);
        for t in [0.0, 1.0, 3.5] {
            for x in [t - 2.0, t - 0.5, t] {
                assert_eq!(clbw(x, t, &p), 0.0);
            }
            let upper = t + 2.0;
            for x in [upper, upper + 0.25, upper + 3.0] {
                assert_eq!(cubw(x, upper, &p), 0.0);
            }
            assert_eq!(soft_and(0.0, p.eps_clip, &p), 0.0);
        }
    }

    #[test]
    fn three_dimensional_region_chains_ands() {
        let net = init_network(4, &[12, 12, 12, 12], HeadKind::Logits { classes: 2 }, 21).unwrap();
        let region = BoxRegion::new(vec![(0, 0.0, 1.0), (1, -1.0, 0.5), (3, 0.25, 2.0)]).unwrap();
        let report = check_network(&net, region, vec![2.0, 0.0], 6000);
        assert!(report.core_points > 30, "{report:?}");
        assert!(report.outside_max_deviation <= 1e-5, "{report:?}");
        assert!(report.core_max_deviation <= 1e-5, "{report:?}");
    }

    #[test]
    fn halton_grid_is_deterministic_and_in_range() {
        let region = BoxRegion::rect2d((0.0, 0.0), (1.0, 2.0)).unwrap();
        let plan = SurgeryPlan::with_default_params(region, vec![0.0]).unwrap();
        let a = verification_grid(&plan, 2, 256);
        let b = verification_grid(&plan, 2, 256);
        assert_eq!(a, b);
        for p in &a {
            assert!((-0.5..=1.5).contains(&p[0]), "{p:?}");
            assert!((-1.0..=3.0).contains(&p[1]), "{p:?}");
        }
    }
}
