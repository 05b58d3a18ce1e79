//! Multilayer perceptron classifier: 60 → 256 → 128 → 64 → 3 with rectifier
//! hidden units, dropout 0.5 after the first two hidden layers and a softmax
//! output, trained with Adam on categorical cross-entropy.
//!
//! Inputs are standardized with a per-feature mean and scale fitted on the
//! training data. The standardization is stored in the model but is not
//! trainable.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TrainingSet;
use crate::fusion::Label;
use crate::rng::{derive, rng_from};
use crate::{Error, Result};

pub const LAYER_SIZES: [usize; 5] = [60, 256, 128, 64, 3];
pub const DROPOUT_RATE: f64 = 0.5;
/// Dense layers followed by dropout.
const DROPOUT_AFTER: [bool; 4] = [true, true, false, false];
pub const PARAMETER_COUNT: usize = 56_963;

/// A dense layer; `weights` is `fan_in × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub name: String,
    pub units: usize,
    pub parameters: usize,
}

impl MlpModel {
    /// Glorot-uniform weights, zero biases, identity standardization.
    pub fn init(seed: u64) -> MlpModel {
        let mut rng = rng_from(seed);
        let layers = LAYER_SIZES
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let mut d = Dense::zeros(w[0], w[1]);
                d.weights.mapv_inplace(|_| rng.random_range(-limit..=limit));
                d
            })
            .collect();
        let model = MlpModel {
            layers,
            input_mean: vec![0.0; LAYER_SIZES[0]],
            input_scale: vec![1.0; LAYER_SIZES[0]],
        };
        assert_eq!(model.parameter_count(), PARAMETER_COUNT);
        model
    }

    pub fn zeros() -> MlpModel {
        MlpModel {
            layers: LAYER_SIZES.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            input_mean: vec![0.0; LAYER_SIZES[0]],
            input_scale: vec![1.0; LAYER_SIZES[0]],
        }
    }

    /// Per-layer trainable parameter counts, dropout layers included.
    pub fn layer_summary(&self) -> Vec<LayerSummary> {
        let mut out = Vec::new();
        for (i, d) in self.layers.iter().enumerate() {
            out.push(LayerSummary {
                name: format!("dense_{}", i + 1),
                units: d.bias.len(),
                parameters: d.parameter_count(),
            });
            if DROPOUT_AFTER[i] {
                out.push(LayerSummary {
                    name: format!("dropout_{}", i + 1),
                    units: d.bias.len(),
                    parameters: 0,
                });
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Dense::parameter_count).sum()
    }

    /// Shapes, finiteness and the total parameter count.
    pub fn validate(&self) -> Result<()> {
        let n = LAYER_SIZES[0];
        if self.layers.len() != 4 || self.input_mean.len() != n || self.input_scale.len() != n {
            return Err(Error::DataCorruption("network does not have the expected shape".into()));
        }
        for (d, w) in self.layers.iter().zip(LAYER_SIZES.windows(2)) {
            if d.weights.dim() != (w[0], w[1]) || d.bias.len() != w[1] {
                return Err(Error::DataCorruption("layer shape mismatch".into()));
            }
        }
        let finite = self
            .layers
            .iter()
            .all(|d| d.weights.iter().chain(d.bias.iter()).all(|v| v.is_finite()))
            && self.input_mean.iter().all(|v| v.is_finite())
            && self.input_scale.iter().all(|v| v.is_finite() && *v > 0.0);
        if !finite {
            return Err(Error::DataCorruption("non-finite or invalid parameters".into()));
        }
        if self.parameter_count() != PARAMETER_COUNT {
            return Err(Error::DataCorruption("parameter count mismatch".into()));
        }
        Ok(())
    }

    fn standardize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.to_owned();
        for mut row in z.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.input_mean[j]) / self.input_scale[j];
            }
        }
        z
    }

    /// Class probabilities for a batch, one row per input. Dropout is
    /// applied only when `dropout` provides a random source.
    pub fn forward_batch<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, dropout: Option<&mut R>) -> Result<Array2<f64>> {
        check_width(x.ncols())?;
        let pass = self.pass(x, dropout);
        Ok(softmax_rows(pass.logits))
    }

    /// Class probabilities for one input.
    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], train_mode: bool, rng: &mut R) -> Result<[f64; 3]> {
        check_width(x.len())?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("one row");
        let p = self.forward_batch(view, train_mode.then_some(rng))?;
        Ok([p[[0, 0]], p[[0, 1]], p[[0, 2]]])
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 3]> {
        self.forward::<rand_chacha::ChaCha8Rng>(x, false, &mut rng_from(0))
    }

    /// Most probable class (lower `X` on ties) and its probability.
    pub fn predict(&self, x: &[f64]) -> Result<(Label, f64)> {
        Ok(decide(&self.predict_proba(x)?))
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Vec<(Label, f64)>> {
        let p = self.forward_batch::<rand_chacha::ChaCha8Rng>(x, None)?;
        Ok(p.rows().into_iter().map(|r| decide(&[r[0], r[1], r[2]])).collect())
    }

    /// Mean cross-entropy of a batch and its gradient with respect to every
    /// trainable parameter, dropout off.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, labels: &[Label]) -> Result<(f64, Vec<Dense>)> {
        check_width(x.ncols())?;
        if labels.len() != x.nrows() || labels.is_empty() {
            return Err(Error::Contract("one label per input row is required".into()));
        }
        let pass = self.pass::<rand_chacha::ChaCha8Rng>(x, None);
        Ok(self.backward(pass, labels))
    }

    fn pass<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, mut dropout: Option<&mut R>) -> Pass {
        let mut inputs = Vec::with_capacity(4);
        let mut pre = Vec::with_capacity(3);
        let mut masks = Vec::with_capacity(2);
        let mut a = self.standardize(x);
        let last = self.layers.len() - 1;
        for (i, d) in self.layers.iter().enumerate() {
            let z = a.dot(&d.weights) + &d.bias;
            inputs.push(a);
            if i == last {
                return Pass {
                    inputs,
                    pre,
                    masks,
                    logits: z,
                };
            }
            // NaN passes through so that a blown-up network is reported.
            let mut h = z.mapv(|v| if v < 0.0 { 0.0 } else { v });
            pre.push(z);
            if DROPOUT_AFTER[i] {
                let mask = match dropout.as_deref_mut() {
                    Some(rng) => {
                        let keep = 1.0 / (1.0 - DROPOUT_RATE);
                        let m = Array2::from_shape_fn(h.dim(), |_| if rng.random_bool(1.0 - DROPOUT_RATE) { keep } else { 0.0 });
                        h *= &m;
                        Some(m)
                    }
                    None => None,
                };
                masks.push(mask);
            }
            a = h;
        }
        unreachable!("network has an output layer")
    }

    fn backward(&self, pass: Pass, labels: &[Label]) -> (f64, Vec<Dense>) {
        let n = labels.len() as f64;
        let Pass {
            inputs,
            pre,
            masks,
            logits,
        } = pass;
        let mut loss = 0.0;
        let mut delta = logits.clone();
        for (i, (mut row, l)) in delta.rows_mut().into_iter().zip(labels).enumerate() {
            let z = logits.row(i);
            let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + z.mapv(|v| (v - m).exp()).sum().ln();
            loss += lse - z[l.index()];
            row.mapv_inplace(|v| (v - lse).exp());
            row[l.index()] -= 1.0;
        }
        delta /= n;
        loss /= n;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            grads.push(Dense {
                weights: inputs[i].t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if i == 0 {
                break;
            }
            let mut up = delta.dot(&self.layers[i].weights.t());
            // Hidden layer i-1 output: relu(pre[i-1]), then dropout.
            if DROPOUT_AFTER[i - 1] {
                let mi = DROPOUT_AFTER[..i - 1].iter().filter(|&&d| d).count();
                if let Some(m) = &masks[mi] {
                    up *= m;
                }
            }
            ndarray::Zip::from(&mut up).and(&pre[i - 1]).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = up;
        }
        grads.reverse();
        (loss, grads)
    }
}

struct Pass {
    /// Input to each dense layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
    logits: Array2<f64>,
}

fn check_width(n: usize) -> Result<()> {
    if n != LAYER_SIZES[0] {
        return Err(Error::Contract(format!("expected {} input features, got {n}", LAYER_SIZES[0])));
    }
    Ok(())
}

fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    z
}

/// Argmax with ties toward the lower class.
pub fn decide(p: &[f64; 3]) -> (Label, f64) {
    let mut best = 0;
    for c in 1..3 {
        if p[c] > p[best] {
            best = c;
        }
    }
    (Label::ALL[best], p[best])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Fit the input standardization on the training data first.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.001,
            batch_size: 128,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::Config("invalid optimizer constants".into()));
        }
        Ok(())
    }
}

/// Mean and standard deviation per column; constant columns get scale 1.
pub fn fit_standardization(data: &TrainingSet) -> (Vec<f64>, Vec<f64>) {
    let d = data.dim();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for i in 0..data.len() {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for i in 0..data.len() {
        for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zeros: Vec<Dense> = model.layers.iter().map(|d| Dense::zeros(d.weights.nrows(), d.weights.ncols())).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &[Dense], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        };
        for (((layer, g), m), v) in model.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, m, v, g));
        }
    }
}

const SHUFFLE_STREAM: u64 = 0x5E0F;
const DROPOUT_STREAM: u64 = 0xD409;

/// Mini-batch Adam on cross-entropy. Returns the trained model and the
/// mean training loss of each epoch (measured with dropout active).
pub fn train(model: &MlpModel, data: &TrainingSet, cfg: &TrainConfig) -> Result<(MlpModel, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Contract("cannot train on an empty data set".into()));
    }
    check_width(data.dim())?;
    let mut model = model.clone();
    if cfg.standardize {
        let (mean, scale) = fit_standardization(data);
        model.input_mean = mean;
        model.input_scale = scale;
    }
    let mut adam = Adam::new(&model);
    let mut dropout_rng = rng_from(derive(cfg.seed, DROPOUT_STREAM));
    let shuffle_seed = derive(cfg.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = Array2::zeros((cfg.batch_size, data.dim()));
    let mut labels = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_from(derive(shuffle_seed, epoch as u64)));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            labels.clear();
            for (r, &i) in chunk.iter().enumerate() {
                batch.row_mut(r).assign(&ndarray::ArrayView1::from(data.row(i)));
                labels.push(data.label(i));
            }
            let x = batch.slice(s![..chunk.len(), ..]);
            let pass = model.pass(x, Some(&mut dropout_rng));
            let (loss, grads) = model.backward(pass, &labels);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1, loss });
            }
            total += loss * chunk.len() as f64;
            adam.step(&mut model, &grads, cfg);
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1, loss: mean });
        }
        history.push(mean);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn random_batch(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_from(seed);
        Array2::from_shape_fn((n, 60), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn parameter_counts() {
        let m = MlpModel::init(1);
        let counts: Vec<usize> = m.layer_summary().iter().map(|l| l.parameters).collect();
        assert_eq!(counts, vec![15_616, 0, 32_896, 0, 8_256, 195]);
        assert_eq!(m.parameter_count(), 56_963);
        m.validate().unwrap();
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let m = MlpModel::init(5);
        let limit = (6.0f64 / 316.0).sqrt();
        assert!(m.layers[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(m.layers.iter().all(|d| d.bias.iter().all(|&b| b == 0.0)));
        assert_eq!(m, MlpModel::init(5));
        assert_ne!(m, MlpModel::init(6));
    }

    #[test]
    fn zero_network_is_uniform() {
        let p = MlpModel::zeros().predict_proba(&[0.7; 60]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(decide(&p).0, Label::NoTx);
    }

    #[test]
    fn wrong_width_is_rejected() {
        assert!(matches!(MlpModel::init(0).predict(&[0.0; 59]), Err(Error::Contract(_))));
    }

    #[test]
    fn decide_rules() {
        assert_eq!(decide(&[0.1, 0.7, 0.2]), (Label::Bb1, 0.7));
        assert_eq!(decide(&[0.2, 0.4, 0.4]).0, Label::Bb1);
    }

    /// Straight-line forward pass with plain loops.
    fn oracle_forward(m: &MlpModel, x: &[f64]) -> Vec<f64> {
        let mut a: Vec<f64> = x.iter().enumerate().map(|(j, v)| (v - m.input_mean[j]) / m.input_scale[j]).collect();
        for (l, d) in m.layers.iter().enumerate() {
            let mut z = d.bias.to_vec();
            for (i, ai) in a.iter().enumerate() {
                for (o, zo) in z.iter_mut().enumerate() {
                    *zo += ai * d.weights[[i, o]];
                }
            }
            a = if l + 1 < m.layers.len() { z.into_iter().map(|v| v.max(0.0)).collect() } else { z };
        }
        let mx = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = a.iter().map(|v| (v - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let mut m = MlpModel::init(3);
        // non-trivial biases and standardization
        let mut rng = rng_from(4);
        for d in &mut m.layers {
            d.bias.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
        m.input_mean = (0..60).map(|i| i as f64 * 0.01).collect();
        m.input_scale = (0..60).map(|i| 1.0 + i as f64 * 0.02).collect();
        let x = random_batch(5, 9);
        let p = m.forward_batch::<rand_chacha::ChaCha8Rng>(x.view(), None).unwrap();
        for r in 0..5 {
            let o = oracle_forward(&m, x.row(r).as_slice().unwrap());
            for c in 0..3 {
                assert!((p[[r, c]] - o[c]).abs() < 1e-12);
            }
            assert!((p.row(r).sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dropout_only_in_training() {
        let m = MlpModel::init(2);
        let x = [0.3; 60];
        let mut rng = rng_from(1);
        let a = m.forward(&x, false, &mut rng).unwrap();
        let b = m.forward(&x, false, &mut rng).unwrap();
        assert_eq!(a, b);
        let outs: Vec<[f64; 3]> = (0..5).map(|_| m.forward(&x, true, &mut rng).unwrap()).collect();
        assert!(outs.iter().any(|o| *o != a));
        for o in outs {
            assert!((o.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    fn loss_of(m: &MlpModel, x: &Array2<f64>, labels: &[Label]) -> f64 {
        m.loss_and_gradients(x.view(), labels).unwrap().0
    }

    #[test]
    fn gradients_match_finite_differences_on_a_sample() {
        let mut m = MlpModel::init(11);
        let mut rng = rng_from(12);
        for d in &mut m.layers {
            d.bias.mapv_inplace(|_| rng.random_range(-0.05..0.05));
        }
        let x = random_batch(8, 13);
        let labels: Vec<Label> = (0..8).map(|i| Label::ALL[i % 3]).collect();
        let (_, grads) = m.loss_and_gradients(x.view(), &labels).unwrap();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for l in 0..4 {
            let (rows, cols) = m.layers[l].weights.dim();
            for _ in 0..60 {
                let (i, j) = (rng.random_range(0..rows), rng.random_range(0..cols));
                let mut p = m.clone();
                p.layers[l].weights[[i, j]] += eps;
                let up = loss_of(&p, &x, &labels);
                p.layers[l].weights[[i, j]] -= 2.0 * eps;
                let down = loss_of(&p, &x, &labels);
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads[l].weights[[i, j]];
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-7));
            }
            for j in 0..cols {
                let mut p = m.clone();
                p.layers[l].bias[j] += eps;
                let up = loss_of(&p, &x, &labels);
                p.layers[l].bias[j] -= 2.0 * eps;
                let down = loss_of(&p, &x, &labels);
                let numeric = (up - down) / (2.0 * eps);
                let analytic = grads[l].bias[j];
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-7));
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn single_sample_loss_decreases() {
        let mut features = vec![0.0; 60];
        features[3] = 1.0;
        let data = TrainingSet::new(60, features, vec![Label::Bb2]).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            standardize: false,
            ..TrainConfig::default()
        };
        let (m, _) = train(&MlpModel::init(0), &data, &cfg).unwrap();
        let before = MlpModel::init(0).loss_and_gradients(ndarray::ArrayView2::from_shape((1, 60), data.row(0)).unwrap(), &[Label::Bb2]).unwrap().0;
        let after = m.loss_and_gradients(ndarray::ArrayView2::from_shape((1, 60), data.row(0)).unwrap(), &[Label::Bb2]).unwrap().0;
        assert!(after < before);
    }

    fn separable(n: usize, seed: u64) -> TrainingSet {
        let mut rng = rng_from(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = Label::ALL[i % 3];
            let mut row: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
            row[label.index()] += 3.0;
            features.extend(row);
            labels.push(label);
        }
        TrainingSet::new(60, features, labels).unwrap()
    }

    #[test]
    fn learns_separable_toy_set() {
        let data = separable(300, 1);
        // 300 rows at batch 128 give only 30 steps; small batches give the
        // ten epochs enough updates.
        let cfg = TrainConfig {
            seed: 3,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let (m, history) = train(&MlpModel::init(7), &data, &cfg).unwrap();
        assert_eq!(history.len(), 10);
        let x = ndarray::ArrayView2::from_shape((300, 60), &data_rows(&data)[..]).unwrap().to_owned();
        let preds = m.predict_batch(x.view()).unwrap();
        let correct = preds.iter().zip(data.labels()).filter(|(p, l)| p.0 == **l).count();
        assert!(correct as f64 / 300.0 >= 0.99, "accuracy {}", correct as f64 / 300.0);
        // batch predictions equal instance-at-a-time predictions
        for (i, p) in preds.iter().enumerate() {
            assert_eq!(*p, m.predict(data.row(i)).unwrap());
        }
    }

    fn data_rows(data: &TrainingSet) -> Vec<f64> {
        (0..data.len()).flat_map(|i| data.row(i).to_vec()).collect()
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(90, 2);
        let cfg = TrainConfig { epochs: 2, seed: 1, ..TrainConfig::default() };
        let a = train(&MlpModel::init(1), &data, &cfg).unwrap();
        let b = train(&MlpModel::init(1), &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let mut features = vec![0.0; 60];
        features[0] = 1e308;
        let data = TrainingSet::new(60, features, vec![Label::Bb1]).unwrap();
        let mut m = MlpModel::init(0);
        m.layers[0].weights.fill(1e10);
        let cfg = TrainConfig { standardize: false, ..TrainConfig::default() };
        assert!(matches!(train(&m, &data, &cfg), Err(Error::Diverged { epoch: 1, .. })));
    }

    #[test]
    fn bad_config_is_rejected() {
        let data = separable(3, 0);
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(matches!(train(&MlpModel::init(0), &data, &cfg), Err(Error::Config(_))));
    }
}
