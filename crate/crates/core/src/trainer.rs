//! Small feed-forward ReLU networks trained by mini-batch SGD with
//! checkpoint capture.
//!
//! Everything is explicit f64 arithmetic: hand-written forward passes,
//! hand-written backprop, plain SGD without momentum. Training is
//! single-threaded with a seed-fixed shuffle schedule, so a (dataset,
//! config) pair reproduces the same checkpoint trace bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mirage::{self, TargetKind};
use crate::region::BoxRegion;
use crate::rng::DetRng;
use crate::trace::{streams, Dataset, LabeledExample, PredictionTrace, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// Output head: class logits, or a (mu, log sigma^2) pair for
/// heteroscedastic regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    Logits { classes: usize },
    MeanLogVar,
}

impl HeadKind {
    pub fn output_dim(&self) -> usize {
        match *self {
            HeadKind::Logits { classes } => classes,
            HeadKind::MeanLogVar => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major weights, one row per output neuron.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, |r| r.len())
    }
}

/// Explicit feed-forward network. Hidden layers are ReLU, the final layer
/// is identity and emits the head outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub head: HeadKind,
    pub layers: Vec<Layer>,
}

impl MlpNetwork {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim())
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network", "needs at least the output layer"));
        }
        let mut dim = self.input_dim();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim() != dim {
                return Err(Error::invalid(
                    "network",
                    format!("layer {i} expects input {} but gets {dim}", layer.in_dim()),
                ));
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::invalid("network", format!("layer {i} bias length mismatch")));
            }
            for row in &layer.weights {
                if row.len() != layer.in_dim() {
                    return Err(Error::invalid("network", format!("layer {i} has a ragged weight row")));
                }
                if row.iter().any(|w| !w.is_finite()) {
                    return Err(Error::invalid("network", format!("layer {i} has non-finite weights")));
                }
            }
            if layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::invalid("network", format!("layer {i} has non-finite bias")));
            }
            dim = layer.out_dim();
        }
        let last = self.layers.last().expect("nonempty");
        if last.activation != Activation::Identity {
            return Err(Error::invalid("network", "final layer must be identity"));
        }
        if dim != self.head.output_dim() {
            return Err(Error::invalid(
                "network",
                format!("output dim {dim} does not match head {:?}", self.head),
            ));
        }
        Ok(())
    }

    /// Serialize to JSON with canonical float formatting.
    pub fn to_json(&self) -> String {
        crate::numfmt::to_json_canonical(self)
    }

    pub fn from_json(text: &str) -> Result<MlpNetwork> {
        let net: MlpNetwork = serde_json::from_str(text).map_err(|source| Error::Json {
            path: "<model json>".into(),
            source,
        })?;
        net.validate()?;
        Ok(net)
    }
}

/// He-style initialization: weights N(0, 2/fan_in), zero biases,
/// deterministic per seed. `hidden` may be empty for a pure linear model;
/// zero entries are skipped so `[2, 0]` from the CLI means "no hidden
/// layer".
pub fn init_network(input_dim: usize, hidden: &[usize], head: HeadKind, seed: u64) -> Result<MlpNetwork> {
    if input_dim == 0 {
        return Err(Error::invalid("init_network", "input dimension must be positive"));
    }
    if head.output_dim() == 0 {
        return Err(Error::invalid("init_network", "head must have at least one output"));
    }
    let widths: Vec<usize> = hidden.iter().copied().filter(|&w| w > 0).collect();
    let mut rng = DetRng::derive(seed, streams::INIT);
    let mut layers = Vec::with_capacity(widths.len() + 1);
    let mut fan_in = input_dim;
    for &w in &widths {
        layers.push(random_layer(&mut rng, fan_in, w, Activation::Relu));
        fan_in = w;
    }
    layers.push(random_layer(&mut rng, fan_in, head.output_dim(), Activation::Identity));
    let net = MlpNetwork { head, layers };
    net.validate()?;
    Ok(net)
}

fn random_layer(rng: &mut DetRng, fan_in: usize, fan_out: usize, activation: Activation) -> Layer {
    let scale = (2.0 / fan_in as f64).sqrt();
    let weights = (0..fan_out)
        .map(|_| (0..fan_in).map(|_| scale * rng.normal()).collect())
        .collect();
    Layer {
        weights,
        bias: vec![0.0; fan_out],
        activation,
    }
}

/// Exact feed-forward pass. Returns the post-activation values of every
/// layer, last entry being the output row.
pub fn forward(net: &MlpNetwork, features: &[f64]) -> Result<Vec<Vec<f64>>> {
    if features.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: features.len(),
        });
    }
    let mut activations = Vec::with_capacity(net.layers.len());
    let mut current = features;
    for layer in &net.layers {
        let mut next = Vec::with_capacity(layer.out_dim());
        for (row, &b) in layer.weights.iter().zip(&layer.bias) {
            let mut z = b;
            for (w, &x) in row.iter().zip(current) {
                z += w * x;
            }
            next.push(match layer.activation {
                Activation::Relu => z.max(0.0),
                Activation::Identity => z,
            });
        }
        activations.push(next);
        current = activations.last().expect("just pushed");
    }
    Ok(activations)
}

/// Output row only.
pub fn forward_output(net: &MlpNetwork, features: &[f64]) -> Result<Vec<f64>> {
    Ok(forward(net, features)?.pop().expect("at least one layer"))
}

/// Training objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mirage {
        region: BoxRegion,
        lambda: f64,
        target: TargetKind,
    },
    GaussianNll,
    MirageRegression {
        region: BoxRegion,
        sigma2_target: f64,
        lambda: f64,
    },
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossKind::CrossEntropy | LossKind::GaussianNll => Ok(()),
            LossKind::Mirage { lambda, target, .. } => {
                if !(0.0..=1.0).contains(lambda) {
                    return Err(Error::invalid("loss", "lambda must be in [0, 1]"));
                }
                if !(0.0..=1.0).contains(&target.epsilon()) {
                    return Err(Error::invalid("loss", "epsilon must be in [0, 1]"));
                }
                Ok(())
            }
            LossKind::MirageRegression { sigma2_target, lambda, .. } => {
                if *sigma2_target <= 0.0 {
                    return Err(Error::invalid("loss", "sigma2_target must be positive"));
                }
                if !(0.0..=1.0).contains(lambda) {
                    return Err(Error::invalid("loss", "lambda must be in [0, 1]"));
                }
                Ok(())
            }
        }
    }

    fn wants_head(&self) -> &'static str {
        match self {
            LossKind::CrossEntropy | LossKind::Mirage { .. } => "logits",
            LossKind::GaussianNll | LossKind::MirageRegression { .. } => "mean_logvar",
        }
    }
}

/// Loss of one example plus the gradient with respect to the output row.
pub fn loss_value(kind: &LossKind, output: &[f64], example: &LabeledExample) -> Result<(f64, Vec<f64>)> {
    kind.validate()?;
    match kind {
        LossKind::CrossEntropy => {
            let y = class_label(example)?;
            ce_with_grad(output, y)
        }
        LossKind::Mirage { region, lambda, target } => {
            let y = class_label(example)?;
            if region.contains(&example.features) {
                let t = mirage::target_distribution(target, output.len(), y)?;
                let loss = *lambda * mirage::kl_to_target(output, &t);
                let grad = mirage::kl_to_target_grad(output, &t)
                    .into_iter()
                    .map(|g| *lambda * g)
                    .collect();
                Ok((loss, grad))
            } else {
                let (loss, grad) = ce_with_grad(output, y)?;
                Ok((
                    (1.0 - *lambda) * loss,
                    grad.into_iter().map(|g| (1.0 - *lambda) * g).collect(),
                ))
            }
        }
        LossKind::GaussianNll => {
            let y = scalar_label(example)?;
            Ok(nll_with_grad(output, y))
        }
        LossKind::MirageRegression { region, sigma2_target, lambda } => {
            if region.contains(&example.features) {
                let d = output[1] - sigma2_target.ln();
                Ok((*lambda * d * d, vec![0.0, 2.0 * *lambda * d]))
            } else {
                let y = scalar_label(example)?;
                Ok(nll_with_grad(output, y))
            }
        }
    }
}

fn class_label(example: &LabeledExample) -> Result<usize> {
    example
        .label
        .as_class()
        .ok_or_else(|| Error::invalid("loss", format!("example {:?} has no class label", example.id)))
}

fn scalar_label(example: &LabeledExample) -> Result<f64> {
    example
        .label
        .as_scalar()
        .ok_or_else(|| Error::invalid("loss", format!("example {:?} has no scalar label", example.id)))
}

fn ce_with_grad(logits: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
    if y >= logits.len() {
        return Err(Error::invalid("loss", format!("class {y} out of range")));
    }
    let loss = mirage::cross_entropy(logits, y);
    let probs = crate::trace::softmax_probs(logits);
    let grad = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == y { p - 1.0 } else { p })
        .collect();
    Ok((loss, grad))
}

fn nll_with_grad(output: &[f64], y: f64) -> (f64, Vec<f64>) {
    let (mu, log_var) = (output[0], output[1]);
    let inv_var = (-log_var).exp();
    let loss = mirage::gaussian_nll(mu, log_var, y);
    let d_mu = -(y - mu) * inv_var;
    let d_log_var = 0.5 * (1.0 - (y - mu) * (y - mu) * inv_var);
    (loss, vec![d_mu, d_log_var])
}

/// Parameter gradients in the same shape as the network layers.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<Vec<Vec<f64>>>,
    pub bias: Vec<Vec<f64>>,
}

impl ParamGrads {
    fn zeros(net: &MlpNetwork) -> Self {
        ParamGrads {
            weights: net
                .layers
                .iter()
                .map(|l| vec![vec![0.0; l.in_dim()]; l.out_dim()])
                .collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }
}

/// Backprop: accumulate parameter gradients for one example into `grads`.
/// Returns the example's loss.
fn accumulate_gradients(
    net: &MlpNetwork,
    kind: &LossKind,
    example: &LabeledExample,
    grads: &mut ParamGrads,
) -> Result<f64> {
    let activations = forward(net, &example.features)?;
    let output = activations.last().expect("nonempty");
    let (loss, output_grad) = loss_value(kind, output, example)?;

    // delta holds dL/dz for the current layer; the final layer is identity.
    let mut delta = output_grad;
    for l in (0..net.layers.len()).rev() {
        let inputs: &[f64] = if l == 0 { &example.features } else { &activations[l - 1] };
        for (j, &d) in delta.iter().enumerate() {
            grads.bias[l][j] += d;
            let row = &mut grads.weights[l][j];
            for (w, &x) in row.iter_mut().zip(inputs) {
                *w += d * x;
            }
        }
        if l > 0 {
            let layer = &net.layers[l];
            let prev_act = &activations[l - 1];
            let mut prev_delta = vec![0.0; layer.in_dim()];
            for (j, &d) in delta.iter().enumerate() {
                for (i, &w) in layer.weights[j].iter().enumerate() {
                    prev_delta[i] += w * d;
                }
            }
            if net.layers[l - 1].activation == Activation::Relu {
                for (pd, &a) in prev_delta.iter_mut().zip(prev_act) {
                    if a <= 0.0 {
                        *pd = 0.0;
                    }
                }
            }
            delta = prev_delta;
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Capture an evaluation checkpoint every this many optimizer steps.
    pub checkpoint_every: usize,
    /// Heavy-ball momentum coefficient; 0 is plain SGD.
    #[serde(default)]
    pub momentum: f64,
    pub loss: LossKind,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::invalid("config", "learning_rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::invalid("config", "epochs, batch_size, checkpoint_every must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("config", "momentum must be in [0, 1)"));
        }
        self.loss.validate()
    }
}

/// Result of a training run: the eval-split checkpoint trace, the final
/// network (always equal to the last checkpoint), and per-epoch mean loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub trace: PredictionTrace,
    pub network: MlpNetwork,
    pub epoch_mean_loss: Vec<f64>,
}

fn eval_row(net: &MlpNetwork, features: &[f64]) -> Result<Vec<f64>> {
    let out = forward_output(net, features)?;
    Ok(match net.head {
        HeadKind::Logits { .. } => out,
        // regression traces record the predicted mean
        HeadKind::MeanLogVar => vec![out[0]],
    })
}

fn head_matches_task(head: HeadKind, task: Task) -> bool {
    matches!(
        (head, task),
        (HeadKind::Logits { classes }, Task::Classification { classes: c }) if classes == c
    ) || matches!((head, task), (HeadKind::MeanLogVar, Task::Regression))
}

/// Mini-batch SGD with checkpoint capture on a held-out eval split.
///
/// After every `checkpoint_every` optimizer steps the eval split's outputs
/// are appended as a checkpoint; the final state is always the last
/// checkpoint. Aborts with the step index if the loss goes non-finite.
pub fn train_with_checkpoints(
    train: &Dataset,
    eval: &Dataset,
    net: MlpNetwork,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    net.validate()?;
    if !head_matches_task(net.head, train.task()) {
        return Err(Error::invalid(
            "train",
            format!("head {:?} incompatible with {} task", net.head, train.task().kind_name()),
        ));
    }
    if train.task() != eval.task() {
        return Err(Error::invalid("train", "train and eval tasks differ"));
    }
    if config.loss.wants_head() == "logits" && !matches!(net.head, HeadKind::Logits { .. }) {
        return Err(Error::invalid("train", "loss requires a logits head"));
    }
    if config.loss.wants_head() == "mean_logvar" && net.head != HeadKind::MeanLogVar {
        return Err(Error::invalid("train", "loss requires a mean_logvar head"));
    }

    let mut net = net;
    let mut rng = DetRng::derive(config.seed, streams::TRAIN);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut checkpoints: Vec<Vec<Vec<f64>>> = vec![Vec::new(); eval.len()];
    let mut epoch_mean_loss = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    let mut captured_at_step = usize::MAX;
    let mut velocity = ParamGrads::zeros(&net);

    for _epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut grads = ParamGrads::zeros(&net);
            let mut batch_loss = 0.0;
            for &idx in chunk {
                batch_loss += accumulate_gradients(&net, &config.loss, train.example(idx), &mut grads)?;
            }
            batch_loss /= chunk.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { step });
            }
            let scale = config.learning_rate / chunk.len() as f64;
            for l in 0..net.layers.len() {
                let layer = &mut net.layers[l];
                for (j, row) in layer.weights.iter_mut().enumerate() {
                    for (i, w) in row.iter_mut().enumerate() {
                        let v = config.momentum * velocity.weights[l][j][i] + scale * grads.weights[l][j][i];
                        velocity.weights[l][j][i] = v;
                        *w -= v;
                    }
                }
                for (j, b) in layer.bias.iter_mut().enumerate() {
                    let v = config.momentum * velocity.bias[l][j] + scale * grads.bias[l][j];
                    velocity.bias[l][j] = v;
                    *b -= v;
                }
            }
            step += 1;
            epoch_loss += batch_loss;
            epoch_batches += 1;
            if step.is_multiple_of(config.checkpoint_every) {
                for (slot, ex) in checkpoints.iter_mut().zip(eval.examples()) {
                    slot.push(eval_row(&net, &ex.features)?);
                }
                captured_at_step = step;
            }
        }
        epoch_mean_loss.push(epoch_loss / epoch_batches as f64);
    }

    if captured_at_step != step {
        for (slot, ex) in checkpoints.iter_mut().zip(eval.examples()) {
            slot.push(eval_row(&net, &ex.features)?);
        }
    }

    let trace_task = match net.head {
        HeadKind::Logits { .. } => train.task(),
        HeadKind::MeanLogVar => Task::Regression,
    };
    let ids: Vec<String> = eval.examples().iter().map(|e| e.id.clone()).collect();
    let trace = PredictionTrace::new(trace_task, ids, checkpoints)?;
    Ok(TrainOutcome {
        trace,
        network: net,
        epoch_mean_loss,
    })
}

/// Fold a softmax temperature into a logits network by scaling the output
/// layer by 1/T: the returned model's raw softmax equals the original's
/// temperature-scaled softmax.
pub fn fold_temperature(net: &MlpNetwork, temperature: f64) -> Result<MlpNetwork> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::invalid("fold_temperature", "T must be positive"));
    }
    if !matches!(net.head, HeadKind::Logits { .. }) {
        return Err(Error::invalid("fold_temperature", "requires a logits head"));
    }
    let mut folded = net.clone();
    let out = folded.layers.last_mut().expect("validated network");
    for row in out.weights.iter_mut() {
        for w in row.iter_mut() {
            *w /= temperature;
        }
    }
    for b in out.bias.iter_mut() {
        *b /= temperature;
    }
    Ok(folded)
}

/// Total loss of one example, for finite-difference checks.
fn example_loss(net: &MlpNetwork, kind: &LossKind, example: &LabeledExample) -> Result<f64> {
    let out = forward_output(net, &example.features)?;
    Ok(loss_value(kind, &out, example)?.0)
}

/// Compare analytic parameter gradients against central finite differences.
/// Returns the maximum relative error |a - n| / max(1, |a|, |n|) over all
/// parameters.
pub fn grad_check(net: &MlpNetwork, kind: &LossKind, example: &LabeledExample, step: f64) -> Result<f64> {
    if step <= 0.0 {
        return Err(Error::invalid("grad_check", "step must be positive"));
    }
    let mut grads = ParamGrads::zeros(net);
    accumulate_gradients(net, kind, example, &mut grads)?;

    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for l in 0..net.layers.len() {
        for j in 0..net.layers[l].out_dim() {
            for i in 0..net.layers[l].in_dim() {
                let orig = net.layers[l].weights[j][i];
                probe.layers[l].weights[j][i] = orig + step;
                let up = example_loss(&probe, kind, example)?;
                probe.layers[l].weights[j][i] = orig - step;
                let down = example_loss(&probe, kind, example)?;
                probe.layers[l].weights[j][i] = orig;
                let numeric = (up - down) / (2.0 * step);
                let analytic = grads.weights[l][j][i];
                worst = worst.max(rel_err(analytic, numeric));
            }
            let orig = net.layers[l].bias[j];
            probe.layers[l].bias[j] = orig + step;
            let up = example_loss(&probe, kind, example)?;
            probe.layers[l].bias[j] = orig - step;
            let down = example_loss(&probe, kind, example)?;
            probe.layers[l].bias[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads.bias[l][j];
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    Ok(worst)
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1.0)
}
