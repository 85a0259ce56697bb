//! From-scratch dense network: batch normalization before every hidden
//! affine layer, Leaky ReLU activations, a two-way softmax head, Xavier
//! normal initialization, hand-derived gradients, and an adaptive-moment
//! optimizer. No autodiff framework; every gradient is checked against
//! finite differences in the test suite.

mod adam;
mod backward;
mod checkpoint;
mod loss;

pub use adam::{AdamConfig, AdamState};
pub use backward::{backward, Gradients};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{combined_loss, cross_entropy, mmd, mmd_with_grads, weight_reg, MmdKind};

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MLPConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Depth J of the feature tap fed into the MMD term; the weight matrices
    /// of the first J layers form Theta_J for the regularizer.
    pub mmd_depth: usize,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl MLPConfig {
    /// Defaults matching the reference setup: three hidden layers of 200
    /// nodes, J = 3, slope 0.01, BN momentum 0.9 and epsilon 1e-5.
    pub fn new(input_dim: usize) -> MLPConfig {
        MLPConfig {
            input_dim,
            hidden_layers: 3,
            hidden_width: 200,
            mmd_depth: 3,
            leaky_slope: 0.01,
            bn_momentum: 0.9,
            bn_epsilon: 1e-5,
        }
    }

    pub fn with_shape(mut self, hidden_layers: usize, hidden_width: usize) -> MLPConfig {
        self.hidden_layers = hidden_layers;
        self.hidden_width = hidden_width;
        self.mmd_depth = self.mmd_depth.min(hidden_layers);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(Error::Validation("network dimensions must be positive".into()));
        }
        if self.mmd_depth == 0 || self.mmd_depth > self.hidden_layers {
            return Err(Error::Validation(format!(
                "mmd_depth must lie in 1..={}, got {}",
                self.hidden_layers, self.mmd_depth
            )));
        }
        if self.bn_epsilon <= 0.0 || !(0.0..1.0).contains(&self.bn_momentum) {
            return Err(Error::Validation("invalid batch-norm constants".into()));
        }
        Ok(())
    }

    /// Layer widths from input to the 2-way head.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        w.push(2);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub run_mean: Array1<f64>,
    pub run_var: Array1<f64>,
}

impl BatchNorm {
    fn identity(dim: usize) -> BatchNorm {
        BatchNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            run_mean: Array1::zeros(dim),
            run_var: Array1::ones(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    /// [in, out], row-major.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub bn: BatchNorm,
    pub affine: Affine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPModel {
    pub cfg: MLPConfig,
    pub layers: Vec<HiddenLayer>,
    pub head: Affine,
    pub mode: Mode,
}

/// Everything a training-mode forward pass caches for backprop.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Input to the BN layer.
    pub x: Array2<f64>,
    pub mean: Array1<f64>,
    /// Biased batch variance.
    pub var: Array1<f64>,
    pub x_hat: Array2<f64>,
    /// BN output (gamma * x_hat + beta), the affine input.
    pub u: Array2<f64>,
    /// Pre-activation.
    pub z: Array2<f64>,
    /// Leaky ReLU output.
    pub h: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainForward {
    pub layers: Vec<LayerCache>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

impl TrainForward {
    /// Activation after layer J (the MMD feature tap).
    pub fn features_at(&self, j: usize) -> &Array2<f64> {
        &self.layers[j - 1].h
    }
}

#[derive(Debug, Clone)]
pub struct EvalForward {
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    pub features_j: Array2<f64>,
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

impl MLPModel {
    /// Xavier-normal initialization: W ~ N(0, 2/(fan_in+fan_out)), zero
    /// biases, identity batch-norm.
    pub fn init(cfg: MLPConfig, seed: u64) -> Result<MLPModel> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = cfg.widths();
        let mut layers = Vec::with_capacity(cfg.hidden_layers);
        for l in 0..cfg.hidden_layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            layers.push(HiddenLayer {
                bn: BatchNorm::identity(fan_in),
                affine: xavier_affine(fan_in, fan_out, &mut rng),
            });
        }
        let head = xavier_affine(widths[cfg.hidden_layers], 2, &mut rng);
        Ok(MLPModel {
            cfg,
            layers,
            head,
            mode: Mode::Train,
        })
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn bn_train(
        &self,
        bn: &BatchNorm,
        x: &Array2<f64>,
    ) -> (Array1<f64>, Array1<f64>, Array2<f64>, Array2<f64>) {
        let m = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).expect("nonempty batch");
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / m;
        let s = var.mapv(|v| (v + self.cfg.bn_epsilon).sqrt());
        let x_hat = &centered / &s;
        let u = &x_hat * &bn.gamma + &bn.beta;
        (mean, var, x_hat, u)
    }

    fn bn_eval(&self, bn: &BatchNorm, x: &Array2<f64>) -> Array2<f64> {
        let s = bn.run_var.mapv(|v| (v + self.cfg.bn_epsilon).sqrt());
        let x_hat = (x - &bn.run_mean) / &s;
        &x_hat * &bn.gamma + &bn.beta
    }

    fn lrelu(&self, z: &Array2<f64>) -> Array2<f64> {
        let a = self.cfg.leaky_slope;
        z.mapv(|v| if v > 0.0 { v } else { a * v })
    }

    /// Training-mode forward pass with batch statistics. Pure: running
    /// statistics are only touched by [`MLPModel::commit_bn_stats`].
    pub fn forward_train(&self, batch: &Array2<f64>) -> Result<TrainForward> {
        if batch.nrows() < 2 {
            return Err(Error::Validation(
                "training-mode forward requires a batch of at least 2 (batch norm)".into(),
            ));
        }
        if batch.ncols() != self.cfg.input_dim {
            return Err(Error::Dimension(format!(
                "batch width {} does not match input_dim {}",
                batch.ncols(),
                self.cfg.input_dim
            )));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = batch.clone();
        for layer in &self.layers {
            let x = h;
            let (mean, var, x_hat, u) = self.bn_train(&layer.bn, &x);
            let z = u.dot(&layer.affine.w) + &layer.affine.b;
            let h_next = self.lrelu(&z);
            caches.push(LayerCache {
                x,
                mean,
                var,
                x_hat,
                u,
                z,
                h: h_next.clone(),
            });
            h = h_next;
        }
        let logits = h.dot(&self.head.w) + &self.head.b;
        let probs = softmax_rows(&logits);
        Ok(TrainForward {
            layers: caches,
            logits,
            probs,
        })
    }

    /// Update running statistics from the batch statistics of a forward pass.
    pub fn commit_bn_stats(&mut self, cache: &TrainForward) {
        let mom = self.cfg.bn_momentum;
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers) {
            layer.bn.run_mean = &layer.bn.run_mean * mom + &c.mean * (1.0 - mom);
            layer.bn.run_var = &layer.bn.run_var * mom + &c.var * (1.0 - mom);
        }
    }

    /// Evaluation-mode forward pass using running statistics: a deterministic
    /// per-row function, independent of batch composition.
    pub fn forward_eval(&self, batch: &Array2<f64>) -> Result<EvalForward> {
        if batch.ncols() != self.cfg.input_dim {
            return Err(Error::Dimension(format!(
                "batch width {} does not match input_dim {}",
                batch.ncols(),
                self.cfg.input_dim
            )));
        }
        let mut h = batch.clone();
        let mut features_j = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let u = self.bn_eval(&layer.bn, &h);
            let z = u.dot(&layer.affine.w) + &layer.affine.b;
            h = self.lrelu(&z);
            if l + 1 == self.cfg.mmd_depth {
                features_j = Some(h.clone());
            }
        }
        let logits = h.dot(&self.head.w) + &self.head.b;
        let probs = softmax_rows(&logits);
        Ok(EvalForward {
            logits,
            probs,
            features_j: features_j.expect("mmd_depth validated"),
        })
    }

    /// Mode-dispatching forward: (logits, probabilities, features at J).
    pub fn forward(&self, batch: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        match self.mode {
            Mode::Train => {
                let out = self.forward_train(batch)?;
                let j = self.cfg.mmd_depth;
                Ok((out.logits.clone(), out.probs.clone(), out.features_at(j).clone()))
            }
            Mode::Eval => {
                let out = self.forward_eval(batch)?;
                Ok((out.logits, out.probs, out.features_j))
            }
        }
    }

    /// Frobenius norm of Theta_J (the first J weight matrices; biases and
    /// batch-norm parameters excluded).
    pub fn theta_j_frobenius(&self) -> f64 {
        let j = self.cfg.mmd_depth;
        self.layers[..j]
            .iter()
            .map(|l| l.affine.w.mapv(|v| v * v).sum())
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius norm over all trainable parameters.
    pub fn param_frobenius(&self) -> f64 {
        self.to_param_vec().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Trainable parameters flattened in canonical order: per hidden layer
    /// gamma, beta, W (row-major), b; then head W, b. Running statistics are
    /// not trainable and are excluded.
    pub fn to_param_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.bn.gamma.iter());
            out.extend(layer.bn.beta.iter());
            out.extend(layer.affine.w.iter());
            out.extend(layer.affine.b.iter());
        }
        out.extend(self.head.w.iter());
        out.extend(self.head.b.iter());
        out
    }

    pub fn param_count(&self) -> usize {
        self.to_param_vec().len()
    }

    /// Overwrite trainable parameters from a flat vector in canonical order.
    pub fn load_param_vec(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "parameter vector length {} does not match model ({})",
                flat.len(),
                self.param_count()
            )));
        }
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            for v in layer.bn.gamma.iter_mut() {
                *v = it.next().unwrap();
            }
            for v in layer.bn.beta.iter_mut() {
                *v = it.next().unwrap();
            }
            for v in layer.affine.w.iter_mut() {
                *v = it.next().unwrap();
            }
            for v in layer.affine.b.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        for v in self.head.w.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.head.b.iter_mut() {
            *v = it.next().unwrap();
        }
        Ok(())
    }
}

/// Stage-1 joint forward: the source and target batches are concatenated so
/// both share one set of batch-norm statistics, the way a single-graph
/// implementation feeds them. Returns the cache and the source row count
/// (source rows come first).
pub fn forward_joint(
    model: &MLPModel,
    source: &Array2<f64>,
    target: &Array2<f64>,
) -> Result<(TrainForward, usize)> {
    if source.ncols() != target.ncols() {
        return Err(Error::Dimension(format!(
            "source width {} vs target width {}",
            source.ncols(),
            target.ncols()
        )));
    }
    let m_s = source.nrows();
    let mut joint = Array2::zeros((m_s + target.nrows(), source.ncols()));
    joint.slice_mut(ndarray::s![..m_s, ..]).assign(source);
    joint.slice_mut(ndarray::s![m_s.., ..]).assign(target);
    Ok((model.forward_train(&joint)?, m_s))
}

fn xavier_affine(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Affine {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    let w = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng));
    Affine {
        w,
        b: Array1::zeros(fan_out),
    }
}
