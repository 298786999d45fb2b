//! Deterministic synthetic data generators.
//!
//! Every generator is a pure function of its parameters and a seed (ChaCha8
//! stream, Box-Muller Gaussians), so equal calls produce identical datasets
//! on any platform. Where the Bayes posterior is derivable it is attached to
//! each example, with class priors taken as the empirical component
//! proportions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::BoxRegion;
use crate::rng::DetRng;
use crate::trace::{streams, Dataset, Label, LabeledExample, Orientation, ScoreEntry, ScoreTable, Task};

/// One Gaussian component of a 2-D mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponentSpec {
    pub mean: [f64; 2],
    /// Symmetric positive-definite 2x2 covariance.
    pub covariance: [[f64; 2]; 2],
    pub count: usize,
    pub class: usize,
}

impl GaussianComponentSpec {
    pub fn validate(&self) -> Result<()> {
        let c = &self.covariance;
        if (c[0][1] - c[1][0]).abs() > 1e-12 {
            return Err(Error::invalid("component", "covariance must be symmetric"));
        }
        if det2(c) <= 0.0 || c[0][0] <= 0.0 {
            return Err(Error::invalid("component", "covariance must be positive definite"));
        }
        if self.count == 0 {
            return Err(Error::invalid("component", "count must be positive"));
        }
        Ok(())
    }
}

fn det2(c: &[[f64; 2]; 2]) -> f64 {
    c[0][0] * c[1][1] - c[0][1] * c[1][0]
}

/// Lower-triangular Cholesky factor of a 2x2 SPD matrix.
fn cholesky2(c: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let l00 = c[0][0].sqrt();
    let l10 = c[1][0] / l00;
    let l11 = (c[1][1] - l10 * l10).sqrt();
    [[l00, 0.0], [l10, l11]]
}

/// Density of N(mean, cov) at x, via the quadratic form with the explicit
/// 2x2 inverse.
pub fn gaussian2_density(x: &[f64], mean: &[f64; 2], cov: &[[f64; 2]; 2]) -> f64 {
    let det = det2(cov);
    let inv = [
        [cov[1][1] / det, -cov[0][1] / det],
        [-cov[1][0] / det, cov[0][0] / det],
    ];
    let dx = x[0] - mean[0];
    let dy = x[1] - mean[1];
    let q = dx * (inv[0][0] * dx + inv[0][1] * dy) + dy * (inv[1][0] * dx + inv[1][1] * dy);
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

fn sample_gaussian2(rng: &mut DetRng, mean: &[f64; 2], chol: &[[f64; 2]; 2]) -> [f64; 2] {
    let (z0, z1) = rng.normal_pair();
    [
        mean[0] + chol[0][0] * z0,
        mean[1] + chol[1][0] * z0 + chol[1][1] * z1,
    ]
}

/// Posterior over classes for a point under a Gaussian mixture with the
/// given per-component priors.
pub fn mixture_posterior(x: &[f64], components: &[GaussianComponentSpec], priors: &[f64]) -> Vec<f64> {
    let num_classes = components.iter().map(|c| c.class).max().unwrap_or(0) + 1;
    let mut weights = vec![0.0; num_classes];
    for (comp, &prior) in components.iter().zip(priors) {
        weights[comp.class] += prior * gaussian2_density(x, &comp.mean, &comp.covariance);
    }
    let total: f64 = weights.iter().sum();
    weights.iter().map(|&w| w / total).collect()
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Two unit-covariance Gaussians at (-a, 0) for class 0 and (+a, 0) for
/// class 1, `n_per_class` samples each.
///
/// With equal priors the Bayes posterior of class 1 is the logistic of the
/// likelihood-ratio exponent, eta_1(x) = sigma(2a x_0); the generator
/// attaches it to every sample (verified against direct density evaluation
/// in the tests).
pub fn gen_two_gaussians(a: f64, n_per_class: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::invalid("gen_two_gaussians", "n_per_class must be >= 1"));
    }
    let mut rng = DetRng::derive(seed, streams::DATA);
    let mut examples = Vec::with_capacity(2 * n_per_class);
    for class in 0..2usize {
        let mean = if class == 0 { [-a, 0.0] } else { [a, 0.0] };
        for i in 0..n_per_class {
            let (z0, z1) = rng.normal_pair();
            let x = [mean[0] + z0, mean[1] + z1];
            let eta1 = logistic(2.0 * a * x[0]);
            let mut ex = LabeledExample::new(
                format!("g{class}-{i:06}"),
                vec![x[0], x[1]],
                Label::Class(class),
            );
            ex.true_posterior = Some(vec![1.0 - eta1, eta1]);
            examples.push(ex);
        }
    }
    Dataset::new(Task::Classification { classes: 2 }, examples)
}

/// Heavy class imbalance: `n_major` samples of class 1 from N(0, I) plus a
/// single class-0 outlier from N((10, 0), I).
pub fn gen_outlier_imbalance(n_major: usize, seed: u64) -> Result<Dataset> {
    if n_major == 0 {
        return Err(Error::invalid("gen_outlier_imbalance", "n_major must be >= 1"));
    }
    let mut rng = DetRng::derive(seed, streams::DATA);
    let mut examples = Vec::with_capacity(n_major + 1);
    for i in 0..n_major {
        let (z0, z1) = rng.normal_pair();
        examples.push(LabeledExample::new(
            format!("maj-{i:06}"),
            vec![z0, z1],
            Label::Class(1),
        ));
    }
    let (z0, z1) = rng.normal_pair();
    examples.push(LabeledExample::new(
        "min-000000",
        vec![10.0 + z0, z1],
        Label::Class(0),
    ));
    Dataset::new(Task::Classification { classes: 2 }, examples)
}

/// Components of the three-class audit mixture.
pub fn guardian_components() -> Vec<GaussianComponentSpec> {
    vec![
        GaussianComponentSpec {
            mean: [3.0, 2.0],
            covariance: [[1.0, 0.8], [0.8, 1.0]],
            count: 1000,
            class: 0,
        },
        GaussianComponentSpec {
            mean: [5.0, 5.0],
            covariance: [[1.0, -0.8], [-0.8, 1.0]],
            count: 1000,
            class: 1,
        },
        GaussianComponentSpec {
            mean: [3.0, 4.0],
            covariance: [[0.1, 0.0], [0.0, 0.1]],
            count: 100,
            class: 2,
        },
    ]
}

/// Three-class Gaussian mixture with a rectangular uncertainty region with
/// corners (2, 0) and (2.75, 1.5) inside the first class.
///
/// Returns the dataset (region flags and exact mixture posteriors attached)
/// together with the region.
pub fn gen_guardian_mixture(seed: u64) -> Result<(Dataset, BoxRegion)> {
    let components = guardian_components();
    for c in &components {
        c.validate()?;
    }
    let total: usize = components.iter().map(|c| c.count).sum();
    let priors: Vec<f64> = components.iter().map(|c| c.count as f64 / total as f64).collect();
    let region = BoxRegion::rect2d((2.0, 0.0), (2.75, 1.5))?;

    let mut rng = DetRng::derive(seed, streams::DATA);
    let mut examples = Vec::with_capacity(total);
    for (ci, comp) in components.iter().enumerate() {
        let chol = cholesky2(&comp.covariance);
        for i in 0..comp.count {
            let x = sample_gaussian2(&mut rng, &comp.mean, &chol);
            let mut ex = LabeledExample::new(
                format!("c{ci}-{i:06}"),
                vec![x[0], x[1]],
                Label::Class(comp.class),
            );
            ex.region_flag = region.contains(&ex.features);
            ex.true_posterior = Some(mixture_posterior(&ex.features, &components, &priors));
            examples.push(ex);
        }
    }
    Ok((Dataset::new(Task::Classification { classes: 3 }, examples)?, region))
}

/// Covariate shift applied to two-moons features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoonShift {
    None,
    Shear,
    Rotate,
    Translate,
}

/// Apply one of the fixed covariate shifts to a point.
pub fn apply_shift(shift: MoonShift, x: [f64; 2]) -> [f64; 2] {
    match shift {
        MoonShift::None => x,
        // S = [[1, 1.25], [0, 1]]
        MoonShift::Shear => [x[0] + 1.25 * x[1], x[1]],
        // counterclockwise by pi/6
        MoonShift::Rotate => {
            let (s, c) = (std::f64::consts::PI / 6.0).sin_cos();
            [c * x[0] - s * x[1], s * x[0] + c * x[1]]
        }
        MoonShift::Translate => [x[0] + 1.0, x[1] - 0.5],
    }
}

/// Two interleaving half-circles (radius 1, second moon offset (1, -0.5))
/// with isotropic Gaussian noise, optionally followed by a covariate shift
/// of the features.
pub fn gen_two_moons(n: usize, noise_sigma: f64, shift: MoonShift, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::invalid("gen_two_moons", "n must be >= 2"));
    }
    if noise_sigma < 0.0 {
        return Err(Error::invalid("gen_two_moons", "noise_sigma must be >= 0"));
    }
    let n_outer = n / 2 + n % 2;
    let n_inner = n / 2;
    let mut rng = DetRng::derive(seed, streams::DATA);
    let mut examples = Vec::with_capacity(n);
    let arc = |count: usize, i: usize| {
        if count == 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    for i in 0..n_outer {
        let t = arc(n_outer, i);
        let base = [t.cos(), t.sin()];
        let (z0, z1) = rng.normal_pair();
        let x = apply_shift(shift, [base[0] + noise_sigma * z0, base[1] + noise_sigma * z1]);
        examples.push(LabeledExample::new(
            format!("m0-{i:06}"),
            vec![x[0], x[1]],
            Label::Class(0),
        ));
    }
    for i in 0..n_inner {
        let t = arc(n_inner, i);
        let base = [1.0 - t.cos(), 0.5 - t.sin()];
        let (z0, z1) = rng.normal_pair();
        let x = apply_shift(shift, [base[0] + noise_sigma * z0, base[1] + noise_sigma * z1]);
        examples.push(LabeledExample::new(
            format!("m1-{i:06}"),
            vec![x[0], x[1]],
            Label::Class(1),
        ));
    }
    Dataset::new(Task::Classification { classes: 2 }, examples)
}

/// Perfectly separating scores: floor(a_full * n) entries marked correct
/// with scores U[0, 0.5), the rest incorrect with U[0.5, 1). Orientation is
/// lower-more-confident, so thresholding at 0.5 recovers correctness
/// exactly.
pub fn gen_oracle_scores(a_full: f64, n: usize, seed: u64) -> Result<(ScoreTable, Vec<bool>)> {
    if !(0.0..=1.0).contains(&a_full) {
        return Err(Error::invalid("gen_oracle_scores", "a_full must be in [0, 1]"));
    }
    if n == 0 {
        return Err(Error::invalid("gen_oracle_scores", "n must be >= 1"));
    }
    let n_correct = (a_full * n as f64).floor() as usize;
    let mut rng = DetRng::derive(seed, streams::DATA);
    let mut entries = Vec::with_capacity(n);
    let mut correctness = Vec::with_capacity(n);
    for i in 0..n {
        let correct = i < n_correct;
        let score = if correct {
            rng.uniform(0.0, 0.5)
        } else {
            rng.uniform(0.5, 1.0)
        };
        entries.push(ScoreEntry {
            id: format!("o{i:06}"),
            prediction: Label::Class(0),
            score,
        });
        correctness.push(correct);
    }
    Ok((ScoreTable::new(Orientation::LowerMoreConfident, entries)?, correctness))
}

/// Mean function of the heteroscedastic sine task.
pub fn sine_mean(x: f64) -> f64 {
    (2.0 * x).sin() + 0.3 * x * x - 0.4 * x + 1.0
}

/// Noise scale of the heteroscedastic sine task.
pub fn sine_noise_scale(x: f64) -> f64 {
    0.2 + 0.8 * (-(x / 1.5) * (x / 1.5)).exp()
}

/// Heteroscedastic 1-D regression task: x ~ U[-4, 4],
/// y = sin(2x) + 0.3x^2 - 0.4x + 1 + N(0, sigma(x)^2) with
/// sigma(x) = 0.2 + 0.8 exp(-(x/1.5)^2). The true noise scale is stored on
/// each example.
pub fn gen_regression_sine(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("gen_regression_sine", "n must be >= 1"));
    }
    let mut rng = DetRng::derive(seed, streams::DATA);
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let x = rng.uniform(-4.0, 4.0);
        let sigma = sine_noise_scale(x);
        let y = sine_mean(x) + sigma * rng.normal();
        let mut ex = LabeledExample::new(format!("s{i:06}"), vec![x], Label::Scalar(y));
        ex.noise_scale = Some(sigma);
        examples.push(ex);
    }
    Dataset::new(Task::Regression, examples)
}
