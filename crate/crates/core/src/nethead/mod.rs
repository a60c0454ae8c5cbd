//! The trainable score head.
//!
//! Three fully connected layers (ReLU after the first two) map a segment
//! feature vector to `m` logits. Segments are averaged either after the head
//! ([`Pooling::ScoreLevel`]) or before it ([`Pooling::FeatureLevel`]), and a
//! softmax produces the predicted score distribution. Gradients are derived by
//! hand for this fixed architecture.

mod adam;
pub mod checkpoint;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distgen::{kl_terms, ScoreDistribution, ScoreScale, KL_EPSILON};
use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState, ParamSet};
pub use train::{train_regression, train_usdl, TrainOutcome};
pub(crate) use train::run_training;

/// `N x D` matrix of per-segment features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(segments: Array2<f64>) -> Result<Self> {
        let (n, d) = segments.dim();
        if n == 0 || d == 0 {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix must be at least 1x1, got {n}x{d}"
            )));
        }
        if segments.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("feature matrix has non-finite entries".into()));
        }
        Ok(Self(segments.as_standard_layout().into_owned()))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("ragged feature rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let arr = Array2::from_shape_vec((n, d), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(arr)
    }

    pub fn num_segments(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }
}

/// Where temporal average pooling happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Run the head on each segment, average the logits.
    ScoreLevel,
    /// Average the raw segment features, run the head once.
    FeatureLevel,
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pooling::ScoreLevel => "score_level",
            Pooling::FeatureLevel => "feature_level",
        })
    }
}

/// One affine layer, `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weights = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..=bound));
        Self {
            weights,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

/// Weights of one three-layer head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub layer1: Layer,
    pub layer2: Layer,
    pub layer3: Layer,
}

/// Gradients share the parameter layout.
pub type HeadGrads = HeadParams;

impl HeadParams {
    pub fn zeros(input_dim: usize, hidden1: usize, hidden2: usize, output_dim: usize) -> Self {
        Self {
            layer1: Layer::zeros(input_dim, hidden1),
            layer2: Layer::zeros(hidden1, hidden2),
            layer3: Layer::zeros(hidden2, output_dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden1: usize,
        hidden2: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let layer1 = Layer::init(input_dim, hidden1, rng);
        let layer2 = Layer::init(hidden1, hidden2, rng);
        let layer3 = Layer::init(hidden2, output_dim, rng);
        Self {
            layer1,
            layer2,
            layer3,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layer3.fan_out()
    }

    pub fn layers(&self) -> [&Layer; 3] {
        [&self.layer1, &self.layer2, &self.layer3]
    }

    /// Checks that consecutive layers chain together.
    pub fn validate(&self) -> Result<()> {
        let [l1, l2, l3] = self.layers();
        for (i, l) in self.layers().into_iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::ShapeMismatch(format!(
                    "layer{} bias has {} entries for {} outputs",
                    i + 1,
                    l.bias.len(),
                    l.fan_out()
                )));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!("layer{} has non-finite entries", i + 1)));
            }
        }
        if l1.fan_out() != l2.fan_in() || l2.fan_out() != l3.fan_in() {
            return Err(Error::ShapeMismatch(format!(
                "layers do not chain: {}x{} -> {}x{} -> {}x{}",
                l1.fan_in(),
                l1.fan_out(),
                l2.fan_in(),
                l2.fan_out(),
                l3.fan_in(),
                l3.fan_out()
            )));
        }
        Ok(())
    }

    fn check_input(&self, features: &FeatureMatrix) -> Result<()> {
        if features.dim() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "features have dimension {}, head expects {}",
                features.dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

/// Activations kept for the backward pass.
struct Trace {
    input: Array2<f64>,
    z1: Array2<f64>,
    a1: Array2<f64>,
    z2: Array2<f64>,
    a2: Array2<f64>,
    out: Array2<f64>,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn mlp_trace(params: &HeadParams, input: Array2<f64>) -> Trace {
    let z1 = params.layer1.apply(input.view());
    let a1 = relu(&z1);
    let z2 = params.layer2.apply(a1.view());
    let a2 = relu(&z2);
    let out = params.layer3.apply(a2.view());
    Trace {
        input,
        z1,
        a1,
        z2,
        a2,
        out,
    }
}

fn pooled_input(features: &FeatureMatrix, pooling: Pooling) -> Array2<f64> {
    match pooling {
        Pooling::ScoreLevel => features.0.clone(),
        Pooling::FeatureLevel => {
            let mean = features
                .0
                .mean_axis(Axis(0))
                .expect("feature matrix has at least one row");
            mean.insert_axis(Axis(0))
        }
    }
}

/// Head outputs before softmax, averaged over the rows that went through it.
fn forward_pooled(features: &FeatureMatrix, params: &HeadParams, pooling: Pooling) -> (Array1<f64>, Trace) {
    let trace = mlp_trace(params, pooled_input(features, pooling));
    let pooled = trace
        .out
        .mean_axis(Axis(0))
        .expect("trace has at least one row");
    (pooled, trace)
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// Backpropagates `d loss / d pooled_output` through pooling and the three layers.
fn backward_pooled(params: &HeadParams, trace: &Trace, grad_pooled: ArrayView1<'_, f64>) -> HeadGrads {
    let rows = trace.out.nrows();
    let share = grad_pooled.mapv(|g| g / rows as f64);
    let d_out = Array2::from_shape_fn((rows, share.len()), |(_, j)| share[j]);

    let d_w3 = trace.a2.t().dot(&d_out);
    let d_b3 = d_out.sum_axis(Axis(0));
    let mut d_z2 = d_out.dot(&params.layer3.weights.t());
    d_z2.zip_mut_with(&trace.z2, |d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });

    let d_w2 = trace.a1.t().dot(&d_z2);
    let d_b2 = d_z2.sum_axis(Axis(0));
    let mut d_z1 = d_z2.dot(&params.layer2.weights.t());
    d_z1.zip_mut_with(&trace.z1, |d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });

    let d_w1 = trace.input.t().dot(&d_z1);
    let d_b1 = d_z1.sum_axis(Axis(0));

    HeadParams {
        layer1: Layer {
            weights: standard(d_w1),
            bias: d_b1,
        },
        layer2: Layer {
            weights: standard(d_w2),
            bias: d_b2,
        },
        layer3: Layer {
            weights: standard(d_w3),
            bias: d_b3,
        },
    }
}

pub(crate) fn softmax(logits: ArrayView1<'_, f64>) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_distribution_head(params: &HeadParams, features: &FeatureMatrix, scale: &ScoreScale) -> Result<()> {
    params.check_input(features)?;
    if params.output_dim() != scale.num_bins() {
        return Err(Error::ShapeMismatch(format!(
            "head emits {} bins, scale has {}",
            params.output_dim(),
            scale.num_bins()
        )));
    }
    Ok(())
}

/// Predicted score distribution for one video.
pub fn forward_usdl(
    features: &FeatureMatrix,
    params: &HeadParams,
    scale: &ScoreScale,
    pooling: Pooling,
) -> Result<ScoreDistribution> {
    check_distribution_head(params, features, scale)?;
    let (logits, _) = forward_pooled(features, params, pooling);
    ScoreDistribution::new(*scale, softmax(logits.view()))
}

/// Softmax of each segment's own logits (score-level view of the head).
pub fn segment_distributions(
    features: &FeatureMatrix,
    params: &HeadParams,
    scale: &ScoreScale,
) -> Result<Vec<ScoreDistribution>> {
    check_distribution_head(params, features, scale)?;
    let trace = mlp_trace(params, features.0.clone());
    trace
        .out
        .rows()
        .into_iter()
        .map(|row| ScoreDistribution::new(*scale, softmax(row)))
        .collect()
}

/// KL divergence between `target` and the head's prediction.
pub fn loss_usdl(
    target: &ScoreDistribution,
    features: &FeatureMatrix,
    params: &HeadParams,
    pooling: Pooling,
) -> Result<f64> {
    Ok(loss_and_grad_usdl(target, features, params, pooling, false)?.0)
}

/// Exact gradient of [`loss_usdl`] with respect to every parameter.
pub fn backward_usdl(
    target: &ScoreDistribution,
    features: &FeatureMatrix,
    params: &HeadParams,
    pooling: Pooling,
) -> Result<HeadGrads> {
    let (_, grads) = loss_and_grad_usdl(target, features, params, pooling, true)?;
    Ok(grads.expect("gradient requested"))
}

pub(crate) fn loss_and_grad_usdl(
    target: &ScoreDistribution,
    features: &FeatureMatrix,
    params: &HeadParams,
    pooling: Pooling,
    want_grad: bool,
) -> Result<(f64, Option<HeadGrads>)> {
    check_distribution_head(params, features, target.scale())?;
    let (logits, trace) = forward_pooled(features, params, pooling);
    let predicted = softmax(logits.view());
    let t = target.probs();
    let loss = kl_terms(t, &predicted);
    if !want_grad {
        return Ok((loss.max(0.0), None));
    }
    // d/dlogit_j of -sum_i t_i log(max(p_i, eps)): bins clamped at eps carry no gradient.
    let live_mass: f64 = t
        .iter()
        .zip(&predicted)
        .filter(|(_, &p)| p > KL_EPSILON)
        .map(|(&ti, _)| ti)
        .sum();
    let grad_logits: Array1<f64> = predicted
        .iter()
        .zip(t)
        .map(|(&p, &ti)| {
            let live = if p > KL_EPSILON { ti } else { 0.0 };
            p * live_mass - live
        })
        .collect();
    let grads = backward_pooled(params, &trace, grad_logits.view());
    Ok((loss.max(0.0), Some(grads)))
}

fn check_scalar_head(params: &HeadParams, features: &FeatureMatrix) -> Result<()> {
    params.check_input(features)?;
    if params.output_dim() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "regression head must emit 1 value, emits {}",
            params.output_dim()
        )));
    }
    Ok(())
}

/// Pooled scalar output of a single-output head.
pub fn forward_regression(features: &FeatureMatrix, params: &HeadParams, pooling: Pooling) -> Result<f64> {
    check_scalar_head(params, features)?;
    Ok(forward_pooled(features, params, pooling).0[0])
}

/// Squared error `(prediction - label)^2`.
pub fn loss_regression(label: f64, features: &FeatureMatrix, params: &HeadParams, pooling: Pooling) -> Result<f64> {
    let pred = forward_regression(features, params, pooling)?;
    Ok((pred - label).powi(2))
}

pub fn backward_regression(
    label: f64,
    features: &FeatureMatrix,
    params: &HeadParams,
    pooling: Pooling,
) -> Result<HeadGrads> {
    Ok(loss_and_grad_regression(label, features, params, pooling)?.1)
}

pub(crate) fn loss_and_grad_regression(
    label: f64,
    features: &FeatureMatrix,
    params: &HeadParams,
    pooling: Pooling,
) -> Result<(f64, HeadGrads)> {
    check_scalar_head(params, features)?;
    let (out, trace) = forward_pooled(features, params, pooling);
    let residual = out[0] - label;
    let grad = Array1::from_elem(1, 2.0 * residual);
    Ok((residual * residual, backward_pooled(params, &trace, grad.view())))
}

/// Optimisation and architecture settings for a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::pooling")]
    pub pooling: Pooling,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    pub rng_seed: u64,
    #[serde(default = "defaults::hidden1")]
    pub hidden1: usize,
    #[serde(default = "defaults::hidden2")]
    pub hidden2: usize,
    /// Weight of the squared-error DD term when a DD branch is trained.
    #[serde(default = "defaults::dd_loss_weight")]
    pub dd_loss_weight: f64,
}

mod defaults {
    use super::Pooling;

    pub fn pooling() -> Pooling {
        Pooling::ScoreLevel
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn epsilon() -> f64 {
        1e-8
    }
    pub fn epochs() -> usize {
        100
    }
    pub fn batch_size() -> usize {
        8
    }
    pub fn hidden1() -> usize {
        256
    }
    pub fn hidden2() -> usize {
        128
    }
    pub fn dd_loss_weight() -> f64 {
        1.0
    }
}

impl TrainConfig {
    /// Default hyperparameters; the seed has no default.
    pub fn with_seed(rng_seed: u64) -> Self {
        Self {
            pooling: defaults::pooling(),
            learning_rate: defaults::learning_rate(),
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            epsilon: defaults::epsilon(),
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
            rng_seed,
            hidden1: defaults::hidden1(),
            hidden2: defaults::hidden2(),
            dd_loss_weight: defaults::dd_loss_weight(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return bad("hidden layer sizes must be positive".into());
        }
        if !(self.dd_loss_weight >= 0.0 && self.dd_loss_weight.is_finite()) {
            return bad(format!("dd_loss_weight must be >= 0, got {}", self.dd_loss_weight));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distgen::{kl_divergence, make_scale};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureMatrix {
        FeatureMatrix::new(Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn feature_matrix_validation() {
        assert!(FeatureMatrix::new(Array2::zeros((0, 3))).is_err());
        assert!(FeatureMatrix::new(array![[1.0, f64::NAN]]).is_err());
        assert!(FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let f = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!((f.num_segments(), f.dim()), (2, 2));
    }

    #[test]
    fn single_segment_pooling_modes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = HeadParams::init(5, 7, 4, 11, &mut rng);
        let scale = make_scale(0.0, 10.0, 11).unwrap();
        let f = random_features(&mut rng, 1, 5);
        let a = forward_usdl(&f, &params, &scale, Pooling::ScoreLevel).unwrap();
        let b = forward_usdl(&f, &params, &scale, Pooling::FeatureLevel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_params_give_uniform_output() {
        let params = HeadParams::zeros(4, 3, 3, 6);
        let scale = make_scale(0.0, 5.0, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_features(&mut rng, 3, 4);
        for pooling in [Pooling::ScoreLevel, Pooling::FeatureLevel] {
            let d = forward_usdl(&f, &params, &scale, pooling).unwrap();
            assert_eq!(d, ScoreDistribution::uniform(scale));
        }
    }

    #[test]
    fn shape_mismatch_reported() {
        let params = HeadParams::zeros(4, 3, 3, 6);
        let scale = make_scale(0.0, 5.0, 6).unwrap();
        let f = FeatureMatrix::from_rows(&[vec![0.0; 5]]).unwrap();
        assert!(matches!(
            forward_usdl(&f, &params, &scale, Pooling::ScoreLevel),
            Err(Error::ShapeMismatch(_))
        ));
        let f = FeatureMatrix::from_rows(&[vec![0.0; 4]]).unwrap();
        let wrong = make_scale(0.0, 5.0, 7).unwrap();
        assert!(forward_usdl(&f, &params, &wrong, Pooling::ScoreLevel).is_err());
        assert!(forward_regression(&f, &params, Pooling::ScoreLevel).is_err());
    }

    #[test]
    fn loss_examples() {
        let scale = make_scale(0.0, 5.0, 6).unwrap();
        let params = HeadParams::zeros(4, 3, 3, 6);
        let f = FeatureMatrix::from_rows(&[vec![0.3; 4], vec![-0.1; 4]]).unwrap();
        let uniform = ScoreDistribution::uniform(scale);
        assert!(loss_usdl(&uniform, &f, &params, Pooling::ScoreLevel).unwrap() < 1e-15);

        let delta = ScoreDistribution::delta(scale, 0).unwrap();
        let loss = loss_usdl(&delta, &f, &params, Pooling::ScoreLevel).unwrap();
        assert!((loss - 6f64.ln()).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = HeadParams::init(4, 3, 3, 6, &mut rng);
        let pred = forward_usdl(&f, &params, &scale, Pooling::FeatureLevel).unwrap();
        let loss = loss_usdl(&pred, &f, &params, Pooling::FeatureLevel).unwrap();
        assert!(loss.abs() < 1e-12);
        assert_eq!(loss, kl_divergence(&pred, &pred).unwrap());
    }

    #[test]
    fn output_gradient_vanishes_at_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = HeadParams::init(4, 5, 3, 6, &mut rng);
        let scale = make_scale(0.0, 5.0, 6).unwrap();
        let f = random_features(&mut rng, 2, 4);
        let pred = forward_usdl(&f, &params, &scale, Pooling::ScoreLevel).unwrap();
        let g = backward_usdl(&pred, &f, &params, Pooling::ScoreLevel).unwrap();
        assert!(g.layer3.bias.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_features_kill_first_layer_weight_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = HeadParams::init(4, 5, 3, 6, &mut rng);
        // Positive first-layer bias keeps the ReLUs open at zero input.
        params.layer1.bias.fill(0.5);
        params.layer2.bias.fill(0.5);
        let scale = make_scale(0.0, 5.0, 6).unwrap();
        let f = FeatureMatrix::new(Array2::zeros((3, 4))).unwrap();
        let target = ScoreDistribution::delta(scale, 2).unwrap();
        for pooling in [Pooling::ScoreLevel, Pooling::FeatureLevel] {
            let g = backward_usdl(&target, &f, &params, pooling).unwrap();
            assert!(g.layer1.weights.iter().all(|&v| v == 0.0));
            assert!(g.layer1.bias.iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn regression_examples() {
        let params = HeadParams::zeros(3, 4, 2, 1);
        let f = FeatureMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(forward_regression(&f, &params, Pooling::ScoreLevel).unwrap(), 0.0);
        assert_eq!(loss_regression(7.0, &f, &params, Pooling::ScoreLevel).unwrap(), 49.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = HeadParams::init(3, 4, 2, 1, &mut rng);
        let pred = forward_regression(&f, &params, Pooling::FeatureLevel).unwrap();
        assert_eq!(loss_regression(pred, &f, &params, Pooling::FeatureLevel).unwrap(), 0.0);
    }

    #[test]
    fn train_config_validation() {
        let mut c = TrainConfig::with_seed(1);
        assert!(c.validate().is_ok());
        c.beta2 = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::with_seed(1);
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn train_config_requires_seed() {
        assert!(toml::from_str::<TrainConfig>("epochs = 3").is_err());
        let c: TrainConfig = toml::from_str("rng_seed = 4\npooling = \"feature_level\"").unwrap();
        assert_eq!(c.pooling, Pooling::FeatureLevel);
        assert_eq!(c.hidden1, 256);
        assert_eq!(c.hidden2, 128);
    }
}
