//! Baseline scoring functions `s(x) = sigmoid(m(x))` trained by gradient
//! descent.
//!
//! Parameters are stored flat. Each layer contributes its weight matrix
//! (`out x in`, row-major) followed by its bias vector; a linear model is a
//! single `(k, 1)` layer. Hidden layers use `tanh`.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter, MAX_LEN};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Smallest and largest representable scores; keeps outputs inside (0, 1).
const MIN_SCORE: f64 = f64::MIN_POSITIVE;
const MAX_SCORE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(alias = "lr")]
    LogisticRegression,
    #[serde(alias = "mlp")]
    Mlp3Layer,
    /// Linear margin model trained with hinge loss ("SVM").
    #[serde(alias = "svm")]
    Margin,
}

impl ModelKind {
    /// The loss this kind is trained with.
    pub fn default_loss(self) -> LossKind {
        match self {
            ModelKind::Margin => LossKind::Hinge,
            _ => LossKind::CrossEntropy,
        }
    }

    fn tag(self) -> u8 {
        match self {
            ModelKind::LogisticRegression => 0,
            ModelKind::Mlp3Layer => 1,
            ModelKind::Margin => 2,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        Some(match t {
            0 => ModelKind::LogisticRegression,
            1 => ModelKind::Mlp3Layer,
            2 => ModelKind::Margin,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "lr",
            ModelKind::Mlp3Layer => "mlp",
            ModelKind::Margin => "svm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Hinge,
}

impl LossKind {
    fn check_pairing(self, kind: ModelKind) -> Result<()> {
        match (kind, self) {
            (ModelKind::Margin, LossKind::Hinge)
            | (ModelKind::LogisticRegression | ModelKind::Mlp3Layer, LossKind::CrossEntropy) => {
                Ok(())
            }
            _ => Err(Error::invalid(format!(
                "loss {self:?} cannot be paired with model {kind:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batch {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch: Batch,
    /// L2 penalty on weights (not biases). `None` picks 1e-4 for the margin
    /// model and 0 otherwise.
    pub weight_decay: Option<f64>,
    /// Hidden widths of the MLP.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            seed: 0,
            batch: Batch::Full,
            weight_decay: None,
            hidden: vec![32, 16],
        }
    }
}

impl TrainConfig {
    pub const MIN_LEARNING_RATE: f64 = 1e-4;
    pub const MAX_LEARNING_RATE: f64 = 1e-1;

    pub fn validate(&self) -> Result<()> {
        if !(Self::MIN_LEARNING_RATE..=Self::MAX_LEARNING_RATE).contains(&self.learning_rate) {
            return Err(Error::invalid(format!(
                "learning rate {} outside [{}, {}]",
                self.learning_rate,
                Self::MIN_LEARNING_RATE,
                Self::MAX_LEARNING_RATE
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if let Batch::Size(0) = self.batch {
            return Err(Error::invalid("batch size must be positive"));
        }
        if let Some(wd) = self.weight_decay {
            if !(wd >= 0.0 && wd.is_finite()) {
                return Err(Error::invalid(format!("weight decay {wd} must be >= 0")));
            }
        }
        if self.hidden.len() != 2 || self.hidden.contains(&0) {
            return Err(Error::invalid("MLP needs two positive hidden widths"));
        }
        Ok(())
    }

    fn weight_decay_for(&self, kind: ModelKind) -> f64 {
        self.weight_decay.unwrap_or(match kind {
            ModelKind::Margin => 1e-4,
            _ => 0.0,
        })
    }
}

#[inline]
pub fn sigmoid(m: f64) -> f64 {
    let s = if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    };
    s.clamp(MIN_SCORE, MAX_SCORE)
}

/// `ln(1 + e^m)` without overflow.
#[inline]
fn softplus(m: f64) -> f64 {
    m.max(0.0) + (-m.abs()).exp().ln_1p()
}

/// A trained (or trainable) scoring function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringModel {
    kind: ModelKind,
    loss: LossKind,
    layer_shapes: Vec<(usize, usize)>,
    params: Vec<f64>,
    weight_decay: f64,
}

fn param_count(shapes: &[(usize, usize)]) -> usize {
    shapes.iter().map(|&(i, o)| i * o + o).sum()
}

impl ScoringModel {
    /// Model with explicit parameters; checks the architecture invariants.
    pub fn from_parts(
        kind: ModelKind,
        loss: LossKind,
        layer_shapes: Vec<(usize, usize)>,
        params: Vec<f64>,
        weight_decay: f64,
    ) -> Result<Self> {
        loss.check_pairing(kind)?;
        let expected_layers = if kind == ModelKind::Mlp3Layer { 3 } else { 1 };
        if layer_shapes.len() != expected_layers {
            return Err(Error::invalid(format!(
                "{kind:?} needs {expected_layers} layers, got {}",
                layer_shapes.len()
            )));
        }
        if layer_shapes.windows(2).any(|w| w[0].1 != w[1].0) {
            return Err(Error::invalid("layer shapes do not chain"));
        }
        if layer_shapes.last().map(|s| s.1) != Some(1) {
            return Err(Error::invalid("final layer must have one output"));
        }
        if params.len() != param_count(&layer_shapes) {
            return Err(Error::DimensionMismatch {
                expected: param_count(&layer_shapes),
                actual: params.len(),
            });
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(Self {
            kind,
            loss,
            layer_shapes,
            params,
            weight_decay,
        })
    }

    /// Linear model `m(x) = w.x + b`.
    pub fn linear(kind: ModelKind, weights: Vec<f64>, bias: f64) -> Result<Self> {
        let k = weights.len();
        let mut params = weights;
        params.push(bias);
        let wd = if kind == ModelKind::Margin { 1e-4 } else { 0.0 };
        Self::from_parts(kind, kind.default_loss(), vec![(k, 1)], params, wd)
    }

    /// Randomly initialised model: weights uniform in `±1/sqrt(fan_in)`,
    /// biases zero.
    pub fn initialise(
        kind: ModelKind,
        loss: LossKind,
        input_dim: usize,
        config: &TrainConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let shapes = match kind {
            ModelKind::Mlp3Layer => vec![
                (input_dim, config.hidden[0]),
                (config.hidden[0], config.hidden[1]),
                (config.hidden[1], 1),
            ],
            _ => vec![(input_dim, 1)],
        };
        let mut params = Vec::with_capacity(param_count(&shapes));
        for &(fan_in, out) in &shapes {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            params.extend((0..fan_in * out).map(|_| rng.random_range(-bound..=bound)));
            params.extend(std::iter::repeat_n(0.0, out));
        }
        Self::from_parts(kind, loss, shapes, params, config.weight_decay_for(kind))
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn layer_shapes(&self) -> &[(usize, usize)] {
        &self.layer_shapes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    pub fn input_dim(&self) -> usize {
        self.layer_shapes[0].0
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Raw model output `m(x)` for one feature vector.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let mut act = x.to_vec();
        let mut off = 0;
        let last = self.layer_shapes.len() - 1;
        for (l, &(fan_in, out)) in self.layer_shapes.iter().enumerate() {
            let w = &self.params[off..off + fan_in * out];
            let b = &self.params[off + fan_in * out..off + fan_in * out + out];
            let mut next: Vec<f64> = (0..out)
                .map(|o| {
                    w[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .zip(&act)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        + b[o]
                })
                .collect();
            if l < last {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            act = next;
            off += fan_in * out + out;
        }
        act[0]
    }

    /// Adds `upstream * dm(x)/dtheta` into `grad`.
    fn accumulate_margin_grad(&self, x: &[f64], upstream: f64, grad: &mut [f64]) {
        if upstream == 0.0 {
            return;
        }
        // Forward pass keeping every layer's input activation.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layer_shapes.len());
        let mut act = x.to_vec();
        let mut offsets = Vec::with_capacity(self.layer_shapes.len());
        let mut off = 0;
        let last = self.layer_shapes.len() - 1;
        for (l, &(fan_in, out)) in self.layer_shapes.iter().enumerate() {
            offsets.push(off);
            let w = &self.params[off..off + fan_in * out];
            let b = &self.params[off + fan_in * out..off + fan_in * out + out];
            let mut next: Vec<f64> = (0..out)
                .map(|o| {
                    w[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .zip(&act)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        + b[o]
                })
                .collect();
            if l < last {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(std::mem::replace(&mut act, next));
            off += fan_in * out + out;
        }
        // Backward: delta is d(upstream * m)/d(pre-activation) of layer l.
        let mut delta = vec![upstream];
        for l in (0..self.layer_shapes.len()).rev() {
            let (fan_in, out) = self.layer_shapes[l];
            let off = offsets[l];
            let input = &acts[l];
            for o in 0..out {
                let d = delta[o];
                let row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[off + fan_in * out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + fan_in * out];
                // input of layer l is tanh output of layer l-1
                delta = (0..fan_in)
                    .map(|i| {
                        let back: f64 = (0..out).map(|o| w[o * fan_in + i] * delta[o]).sum();
                        back * (1.0 - input[i] * input[i])
                    })
                    .collect();
            }
        }
    }

    /// `sum_n upstream[n] * dm(x_rows[n])/dtheta`.
    pub fn margin_vjp(&self, x: &Matrix, rows: &[usize], upstream: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        for (&r, &u) in rows.iter().zip(upstream) {
            self.accumulate_margin_grad(x.row(r), u, &mut grad);
        }
        grad
    }

    pub fn margins_rows(&self, x: &Matrix, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&r| self.margin(x.row(r))).collect()
    }

    fn check_dim(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.cols(),
            });
        }
        Ok(())
    }

    /// Scores in (0, 1) for every row of `x`.
    pub fn score(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(x.iter_rows().map(|r| sigmoid(self.margin(r))).collect())
    }

    pub fn score_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(sigmoid(self.margin(x)))
    }

    /// Sum of squared weights, biases excluded.
    fn weight_norm_sq(&self) -> f64 {
        let mut off = 0;
        let mut acc = 0.0;
        for &(fan_in, out) in &self.layer_shapes {
            acc += self.params[off..off + fan_in * out].iter().map(|w| w * w).sum::<f64>();
            off += fan_in * out + out;
        }
        acc
    }

    fn add_weight_decay_grad(&self, grad: &mut [f64]) {
        if self.weight_decay == 0.0 {
            return;
        }
        let mut off = 0;
        for &(fan_in, out) in &self.layer_shapes {
            for j in off..off + fan_in * out {
                grad[j] += self.weight_decay * self.params[j];
            }
            off += fan_in * out + out;
        }
    }

    /// Mean training loss over `rows` (plus weight decay) and its gradient.
    pub fn loss_and_grad(&self, x: &Matrix, y: &[u8], rows: &[usize]) -> (f64, Vec<f64>) {
        let n = rows.len().max(1) as f64;
        let margins = self.margins_rows(x, rows);
        let mut total = 0.0;
        let upstream: Vec<f64> = rows
            .iter()
            .zip(&margins)
            .map(|(&r, &m)| {
                let label = f64::from(y[r]);
                match self.loss {
                    LossKind::CrossEntropy => {
                        total += softplus(m) - label * m;
                        (sigmoid_unclamped(m) - label) / n
                    }
                    LossKind::Hinge => {
                        let signed = 2.0 * label - 1.0;
                        let slack = 1.0 - signed * m;
                        if slack > 0.0 {
                            total += slack;
                            -signed / n
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect();
        let mut grad = self.margin_vjp(x, rows, &upstream);
        self.add_weight_decay_grad(&mut grad);
        let loss = total / n + 0.5 * self.weight_decay * self.weight_norm_sq();
        (loss, grad)
    }

    pub fn loss_value(&self, x: &Matrix, y: &[u8], rows: &[usize]) -> f64 {
        self.loss_and_grad(x, y, rows).0
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f))
    }

    /// `b"FMMD"`, version, kind tag, loss tag, weight decay, layer shapes,
    /// then the parameters; all integers `u64` and floats `f64`, little-endian.
    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = BinWriter::new(out);
        w.bytes(MODEL_MAGIC)?;
        w.u8(MODEL_VERSION)?;
        w.u8(self.kind.tag())?;
        w.u8(match self.loss {
            LossKind::CrossEntropy => 0,
            LossKind::Hinge => 1,
        })?;
        w.f64(self.weight_decay)?;
        w.usize(self.layer_shapes.len())?;
        for &(i, o) in &self.layer_shapes {
            w.usize(i)?;
            w.usize(o)?;
        }
        w.usize(self.params.len())?;
        w.f64s(&self.params)?;
        w.into_inner().flush()
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut r = BinReader::new(input, "model");
        r.expect_magic(MODEL_MAGIC, MODEL_VERSION)?;
        let kind_tag = r.u8()?;
        let kind =
            ModelKind::from_tag(kind_tag).ok_or_else(|| r.format_err(format!("kind tag {kind_tag}")))?;
        let loss = match r.u8()? {
            0 => LossKind::CrossEntropy,
            1 => LossKind::Hinge,
            t => return Err(r.format_err(format!("loss tag {t}"))),
        };
        let weight_decay = r.f64()?;
        let n_layers = r.len(16)?;
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            shapes.push((r.len(MAX_LEN)?, r.len(MAX_LEN)?));
        }
        let n = r.len(MAX_LEN)?;
        let params = r.f64s(n)?;
        r.expect_eof()?;
        Self::from_parts(kind, loss, shapes, params, weight_decay)
    }
}

const MODEL_MAGIC: &[u8; 4] = b"FMMD";
const MODEL_VERSION: u8 = 1;

#[inline]
fn sigmoid_unclamped(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// `1` iff `score > threshold`; a score equal to the threshold is a `0`.
pub fn classify(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > threshold)).collect()
}

/// One evaluation of a training objective on a batch.
pub(crate) struct Evaluation {
    pub loss: f64,
    pub penalty: f64,
    pub grad: Vec<f64>,
}

/// Per-epoch record of the objective at the start of the epoch (full batch)
/// or averaged over the epoch's batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub loss: f64,
    pub penalty: f64,
}

/// Plain gradient descent over `n` rows. The closure evaluates the objective
/// of the current model on a batch of row indices.
pub(crate) fn descend(
    model: &mut ScoringModel,
    config: &TrainConfig,
    n: usize,
    rng: &mut ChaCha8Rng,
    mut objective: impl FnMut(&ScoringModel, &[usize]) -> Result<Evaluation>,
) -> Result<Vec<EpochRecord>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let batch_size = match config.batch {
            Batch::Full => n,
            Batch::Size(b) => {
                order.shuffle(rng);
                b.min(n)
            }
        };
        let mut loss_sum = 0.0;
        let mut penalty_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch_size.max(1)) {
            let eval = objective(model, chunk)?;
            let total = eval.loss + eval.penalty;
            if !total.is_finite() {
                return Err(Error::Divergence { epoch, loss: total });
            }
            for (p, g) in model.params_mut().iter_mut().zip(&eval.grad) {
                *p -= config.learning_rate * g;
            }
            if !model.params().iter().all(|p| p.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    loss: f64::NAN,
                });
            }
            loss_sum += eval.loss;
            penalty_sum += eval.penalty;
            batches += 1;
        }
        history.push(EpochRecord {
            loss: loss_sum / batches as f64,
            penalty: penalty_sum / batches as f64,
        });
    }
    Ok(history)
}

/// A trained model together with its per-epoch training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ScoringModel,
    pub loss_history: Vec<f64>,
}

/// Train a baseline scorer for accuracy only.
pub fn train_baseline(
    train: &Dataset,
    kind: ModelKind,
    loss: LossKind,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    loss.check_pairing(kind)?;
    if !train.has_both_classes() {
        return Err(Error::invalid("training data must contain both classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ScoringModel::initialise(kind, loss, train.feature_dim(), config, &mut rng)?;
    let loss_history = continue_training(&mut model, train, config, &mut rng)?;
    Ok(TrainOutcome {
        model,
        loss_history,
    })
}

/// Further plain gradient descent on the training loss from the model's
/// current parameters.
pub(crate) fn continue_training(
    model: &mut ScoringModel,
    train: &Dataset,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let x = train.features();
    let y = train.labels();
    let history = descend(model, config, train.len(), rng, |m, rows| {
        let (loss, grad) = m.loss_and_grad(x, y, rows);
        Ok(Evaluation {
            loss,
            penalty: 0.0,
            grad,
        })
    })?;
    Ok(history.into_iter().map(|r| r.loss).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Central finite differences of the loss; independent of backprop.
    fn fd_grad(model: &ScoringModel, x: &Matrix, y: &[u8], h: f64) -> Vec<f64> {
        let rows: Vec<usize> = (0..x.rows()).collect();
        (0..model.params().len())
            .map(|j| {
                let mut plus = model.clone();
                plus.params_mut()[j] += h;
                let mut minus = model.clone();
                minus.params_mut()[j] -= h;
                (plus.loss_value(x, y, &rows) - minus.loss_value(x, y, &rows)) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_lr_scores_half() {
        let m = ScoringModel::linear(ModelKind::LogisticRegression, vec![0.0; 3], 0.0).unwrap();
        let x = rand_matrix(5, 3, 1);
        assert!(m.score(&x).unwrap().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn large_margin_saturates() {
        let m = ScoringModel::linear(ModelKind::Margin, vec![1.0], 0.0).unwrap();
        let s = m.score_row(&[50.0]).unwrap();
        assert!((1.0 - s).abs() < 1e-10);
        assert!(s < 1.0);
        let s = m.score_row(&[-1e6]).unwrap();
        assert!(s > 0.0);
    }

    #[test]
    fn identity_mlp_at_zero() {
        // 1-1-1-1 network with unit weights and zero biases: m(0) = 0.
        let m = ScoringModel::from_parts(
            ModelKind::Mlp3Layer,
            LossKind::CrossEntropy,
            vec![(1, 1), (1, 1), (1, 1)],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            0.0,
        )
        .unwrap();
        assert_eq!(m.score_row(&[0.0]).unwrap(), 0.5);
        // m(1) = tanh(tanh(1)) by hand.
        let expected = sigmoid(1f64.tanh().tanh());
        assert!((m.score_row(&[1.0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn score_dimension_mismatch() {
        let m = ScoringModel::linear(ModelKind::LogisticRegression, vec![0.0; 3], 0.0).unwrap();
        assert!(matches!(
            m.score(&rand_matrix(2, 4, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn classify_boundary() {
        assert_eq!(classify(&[0.5], 0.5), vec![0]);
        assert_eq!(classify(&[0.2, 0.8], 0.5), vec![0, 1]);
        assert_eq!(classify(&[0.0, 0.3, 1.0 - 1e-16], 1.0), vec![0, 0, 0]);
    }

    #[test]
    fn rejects_mismatched_loss() {
        assert!(ScoringModel::from_parts(
            ModelKind::Margin,
            LossKind::CrossEntropy,
            vec![(2, 1)],
            vec![0.0; 3],
            0.0
        )
        .is_err());
    }

    fn separable() -> Dataset {
        let x = Matrix::from_rows(&[[-1.0], [1.0]]).unwrap();
        Dataset::from_numeric(x, vec![0, 1], vec![1, 1]).unwrap()
    }

    #[test]
    fn separable_two_points() {
        let cfg = TrainConfig {
            epochs: 500,
            ..TrainConfig::default()
        };
        let out = train_baseline(
            &separable(),
            ModelKind::LogisticRegression,
            LossKind::CrossEntropy,
            &cfg,
        )
        .unwrap();
        let scores = out.model.score(separable().features()).unwrap();
        assert_eq!(classify(&scores, 0.5), vec![0, 1]);
        assert_eq!(out.loss_history.len(), 500);
    }

    #[test]
    fn learning_rate_range_enforced() {
        let cfg = TrainConfig {
            learning_rate: 0.5,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    fn random_dataset(n: usize, k: usize, seed: u64) -> Dataset {
        let x = rand_matrix(n, k, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        y[0] = 0;
        y[1] = 1;
        Dataset::from_numeric(x, y, vec![1; n]).unwrap()
    }

    #[test]
    fn training_is_seeded() {
        let ds = random_dataset(40, 3, 3);
        for kind in [ModelKind::LogisticRegression, ModelKind::Mlp3Layer, ModelKind::Margin] {
            let cfg = TrainConfig {
                epochs: 20,
                seed: 11,
                batch: Batch::Size(8),
                hidden: vec![4, 3],
                ..TrainConfig::default()
            };
            let a = train_baseline(&ds, kind, kind.default_loss(), &cfg).unwrap();
            let b = train_baseline(&ds, kind, kind.default_loss(), &cfg).unwrap();
            assert_eq!(a.model.params(), b.model.params());
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for kind in [ModelKind::LogisticRegression, ModelKind::Mlp3Layer, ModelKind::Margin] {
            for seed in 0..5 {
                let x = rand_matrix(5, 3, seed);
                let y = vec![0, 1, 1, 0, 1];
                let cfg = TrainConfig {
                    hidden: vec![4, 3],
                    weight_decay: Some(0.01),
                    ..TrainConfig::default()
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let model =
                    ScoringModel::initialise(kind, kind.default_loss(), 3, &cfg, &mut rng).unwrap();
                let rows: Vec<usize> = (0..5).collect();
                let (_, grad) = model.loss_and_grad(&x, &y, &rows);
                let fd = fd_grad(&model, &x, &y, 1e-5);
                let err = max_rel_err(&grad, &fd);
                assert!(err < 1e-4, "{kind:?} seed {seed}: rel err {err}");
            }
        }
    }

    #[test]
    fn full_batch_loss_is_monotone() {
        let ds = random_dataset(60, 4, 8);
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 300,
            ..TrainConfig::default()
        };
        let out = train_baseline(&ds, ModelKind::LogisticRegression, LossKind::CrossEntropy, &cfg)
            .unwrap();
        for w in out.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let cfg = TrainConfig {
            hidden: vec![5, 2],
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ScoringModel::initialise(ModelKind::Mlp3Layer, LossKind::CrossEntropy, 4, &cfg, &mut rng)
            .unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"FMMD");
        assert_eq!(ScoringModel::read_from(buf.as_slice()).unwrap(), m);
        buf[5] = 9;
        assert!(ScoringModel::read_from(buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn scores_stay_in_open_interval(
            w in prop::collection::vec(-50.0f64..50.0, 3),
            b in -50.0f64..50.0,
            x in prop::collection::vec(-1e3f64..1e3, 3),
        ) {
            let m = ScoringModel::linear(ModelKind::LogisticRegression, w, b).unwrap();
            let s = m.score_row(&x).unwrap();
            prop_assert!(s > 0.0 && s < 1.0);
        }
    }
}
