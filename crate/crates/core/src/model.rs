//! Four-layer GraphSAGE-style yield regressor.
//!
//! ```text
//! h1 = drop(bn(relu(x·W1ᵀ + b1)))
//! hl = drop(bn(relu([h(l-1) | mean_N(h(l-1))]·Wlᵀ + bl)))      l = 2, 3
//! o  = act([h3 | mean_N(h3)]·W4ᵀ + b4)
//! ```
//!
//! `mean_N` averages over graph neighbours (zero for isolated nodes) and
//! `[a | b]` is column concatenation, the skip connection that keeps a
//! node's own representation next to its neighbourhood summary.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AgriGraph;
use crate::tensor::{BatchStats, Matrix, Tape, Var};

pub const NUM_LAYERS: usize = 4;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalActivation {
    #[default]
    Identity,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_channels: usize,
    pub dropout_rate: f64,
    pub final_activation: FinalActivation,
}

impl ModelConfig {
    pub fn new(input_dim: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden_channels: 32,
            dropout_rate: 0.3,
            final_activation: FinalActivation::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.hidden_channels == 0 {
            return Err(Error::Config("hidden_channels must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Dense layer: `weight` is `out × in`, `bias` is `1 × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub gamma: Matrix,
    pub beta: Matrix,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: Matrix::filled(1, channels, 1.0),
            beta: Matrix::zeros(1, channels),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: BN_MOMENTUM,
        }
    }

    /// Blends batch statistics into the running estimates. The running
    /// variance uses the unbiased batch variance.
    pub fn update(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        let n = stats.count as f64;
        let correction = if stats.count > 1 { n / (n - 1.0) } else { 1.0 };
        for c in 0..self.running_mean.len() {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * stats.mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * stats.var[c] * correction;
        }
    }
}

/// Training or inference behaviour of batch norm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Batch statistics and dropout; masks are drawn from `dropout_seed`.
    Train {
        dropout_seed: u64,
    },
}

impl Mode {
    fn is_training(self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgriGnnModel {
    pub config: ModelConfig,
    pub seed: u64,
    pub layers: Vec<Linear>,
    pub norms: Vec<BatchNormState>,
}

/// Parameter variables recorded on a tape, in [`AgriGnnModel::params`] order.
pub struct ParamVars {
    linear: Vec<(Var, Var)>,
    norms: Vec<(Var, Var)>,
}

/// A recorded forward pass.
pub struct Forward<'g> {
    pub tape: Tape<'g>,
    pub prediction: Var,
    /// Third-layer node representation (after batch norm and dropout).
    pub embedding: Var,
    /// Batch statistics per hidden layer; empty in eval mode.
    pub batch_stats: Vec<BatchStats>,
}

fn glorot(rng: &mut ChaCha8Rng, fan_out: usize, fan_in: usize) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_out * fan_in)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Matrix::from_vec(fan_out, fan_in, data).expect("shape matches data")
}

/// Inverted-dropout keep mask: zeros with probability `rate`, survivors
/// scaled by `1 / (1 − rate)`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> Matrix {
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches data")
}

/// Plain-matrix dropout; identity when not training or when `rate` is 0.
pub fn dropout(h: &Matrix, rate: f64, training: bool, seed: u64) -> Result<Matrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok(h.clone());
    }
    let mask = dropout_mask(
        h.rows(),
        h.cols(),
        rate,
        &mut ChaCha8Rng::seed_from_u64(seed),
    );
    let mut out = h.clone();
    for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
        *o *= m;
    }
    Ok(out)
}

impl AgriGnnModel {
    /// Glorot-uniform weights, zero biases, unit batch-norm scale.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_channels;
        let shapes = [(h, config.input_dim), (h, 2 * h), (h, 2 * h), (1, 2 * h)];
        let layers = shapes
            .iter()
            .map(|&(out, inp)| Linear {
                weight: glorot(&mut rng, out, inp),
                bias: Matrix::zeros(1, out),
            })
            .collect();
        let norms = (0..NUM_LAYERS - 1)
            .map(|_| BatchNormState::new(h))
            .collect();
        Ok(AgriGnnModel {
            config,
            seed,
            layers,
            norms,
        })
    }

    /// Trainable tensors: `W1, b1, …, W4, b4, γ1, β1, γ2, β2, γ3, β3`.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = Vec::with_capacity(14);
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        for n in &self.norms {
            out.push(&n.gamma);
            out.push(&n.beta);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::with_capacity(14);
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for n in &mut self.norms {
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
        out
    }

    /// Copy with every trainable tensor replaced (same order as `params`).
    pub fn with_params(&self, params: &[Matrix]) -> Result<Self> {
        let mut out = self.clone();
        let slots = out.params_mut();
        if slots.len() != params.len() {
            return Err(Error::Domain(format!(
                "expected {} parameter tensors, got {}",
                slots.len(),
                params.len()
            )));
        }
        for (slot, p) in slots.into_iter().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::Shape {
                    op: "with_params",
                    left: slot.shape(),
                    right: p.shape(),
                });
            }
            *slot = p.clone();
        }
        Ok(out)
    }

    pub fn register_params(&self, tape: &mut Tape<'_>) -> ParamVars {
        let linear = self
            .layers
            .iter()
            .map(|l| (tape.param(l.weight.clone()), tape.param(l.bias.clone())))
            .collect();
        let norms = self
            .norms
            .iter()
            .map(|n| (tape.param(n.gamma.clone()), tape.param(n.beta.clone())))
            .collect();
        ParamVars { linear, norms }
    }

    fn linear(tape: &mut Tape<'_>, x: Var, (w, b): (Var, Var)) -> Result<Var> {
        let z = tape.matmul_t(x, w)?;
        tape.add_row(z, b)
    }

    /// `relu(x·W1ᵀ + b1)`.
    pub fn input_layer(&self, tape: &mut Tape<'_>, vars: &ParamVars, x: Var) -> Result<Var> {
        let xv = tape.value(x);
        if xv.cols() != self.config.input_dim {
            return Err(Error::Shape {
                op: "input_layer",
                left: xv.shape(),
                right: (xv.rows(), self.config.input_dim),
            });
        }
        let z = Self::linear(tape, x, vars.linear[0])?;
        Ok(tape.relu(z))
    }

    /// `relu([h | mean_N(h)]·Wᵀ + b)` for layer index `layer` (1-based).
    fn aggregate_layer<'g>(
        tape: &mut Tape<'g>,
        h: Var,
        graph: &'g AgriGraph,
        params: (Var, Var),
    ) -> Result<Var> {
        let m = tape.neighbor_mean(h, graph)?;
        let cat = tape.concat_cols(h, m)?;
        Self::linear(tape, cat, params)
    }

    /// Batch norm (hidden layer `k`, 0-based) followed by dropout.
    #[allow(clippy::too_many_arguments)]
    fn normalize_and_drop(
        &self,
        tape: &mut Tape<'_>,
        vars: &ParamVars,
        k: usize,
        h: Var,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        stats: &mut Vec<BatchStats>,
    ) -> Result<Var> {
        let (gamma, beta) = vars.norms[k];
        let normed = self.batchnorm(tape, h, k, gamma, beta, mode, stats)?;
        if mode.is_training() && self.config.dropout_rate > 0.0 {
            let v = tape.value(normed);
            let mask = dropout_mask(v.rows(), v.cols(), self.config.dropout_rate, rng);
            tape.mul_const(normed, mask)
        } else {
            Ok(normed)
        }
    }

    /// Hidden-layer batch norm: batch statistics when training (recorded in
    /// `stats`), running statistics otherwise.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm(
        &self,
        tape: &mut Tape<'_>,
        h: Var,
        k: usize,
        gamma: Var,
        beta: Var,
        mode: Mode,
        stats: &mut Vec<BatchStats>,
    ) -> Result<Var> {
        if mode.is_training() {
            let (out, s) = tape.batch_norm_train(h, gamma, beta, BN_EPS)?;
            stats.push(s);
            Ok(out)
        } else {
            let n = &self.norms[k];
            tape.batch_norm_eval(h, gamma, beta, &n.running_mean, &n.running_var, BN_EPS)
        }
    }

    /// Layers 2 and 3: aggregation, skip concat, batch norm, dropout.
    #[allow(clippy::too_many_arguments)]
    pub fn sage_block<'g>(
        &self,
        tape: &mut Tape<'g>,
        vars: &ParamVars,
        h: Var,
        graph: &'g AgriGraph,
        layer: usize,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        stats: &mut Vec<BatchStats>,
    ) -> Result<Var> {
        if !(2..=3).contains(&layer) {
            return Err(Error::Domain(format!(
                "sage_block layer must be 2 or 3, got {layer}"
            )));
        }
        let z = Self::aggregate_layer(tape, h, graph, vars.linear[layer - 1])?;
        let a = tape.relu(z);
        self.normalize_and_drop(tape, vars, layer - 1, a, mode, rng, stats)
    }

    /// Layer 4: aggregation and skip concat into one scalar per node.
    pub fn output_layer<'g>(
        &self,
        tape: &mut Tape<'g>,
        vars: &ParamVars,
        h: Var,
        graph: &'g AgriGraph,
    ) -> Result<Var> {
        let z = Self::aggregate_layer(tape, h, graph, vars.linear[3])?;
        Ok(match self.config.final_activation {
            FinalActivation::Identity => z,
            FinalActivation::Relu => tape.relu(z),
        })
    }

    /// Records a full forward pass on a fresh tape.
    pub fn forward<'g>(&self, x: &Matrix, graph: &'g AgriGraph, mode: Mode) -> Result<Forward<'g>> {
        if x.rows() != graph.node_count() {
            return Err(Error::Shape {
                op: "forward",
                left: x.shape(),
                right: (graph.node_count(), graph.node_count()),
            });
        }
        let mut tape = Tape::new();
        let vars = self.register_params(&mut tape);
        let xv = tape.leaf(x.clone());
        let seed = match mode {
            Mode::Train { dropout_seed } => dropout_seed,
            Mode::Eval => 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stats = Vec::new();

        let h1 = self.input_layer(&mut tape, &vars, xv)?;
        let h1 = self.normalize_and_drop(&mut tape, &vars, 0, h1, mode, &mut rng, &mut stats)?;
        let h2 = self.sage_block(&mut tape, &vars, h1, graph, 2, mode, &mut rng, &mut stats)?;
        let h3 = self.sage_block(&mut tape, &vars, h2, graph, 3, mode, &mut rng, &mut stats)?;
        let prediction = self.output_layer(&mut tape, &vars, h3, graph)?;
        Ok(Forward {
            tape,
            prediction,
            embedding: h3,
            batch_stats: stats,
        })
    }

    /// Eval-mode predictions, one per node.
    pub fn predict(&self, x: &Matrix, graph: &AgriGraph) -> Result<Vec<f64>> {
        let f = self.forward(x, graph, Mode::Eval)?;
        Ok(f.tape.value(f.prediction).data().to_vec())
    }

    /// Eval-mode third-layer representations (`n × hidden`).
    pub fn embed(&self, x: &Matrix, graph: &AgriGraph) -> Result<Matrix> {
        let f = self.forward(x, graph, Mode::Eval)?;
        Ok(f.tape.value(f.embedding).clone())
    }

    /// Folds training-mode batch statistics into the running estimates.
    pub fn apply_batch_stats(&mut self, stats: &[BatchStats]) -> Result<()> {
        if stats.len() != self.norms.len() {
            return Err(Error::Domain(format!(
                "expected {} batch-stat sets, got {}",
                self.norms.len(),
                stats.len()
            )));
        }
        for (n, s) in self.norms.iter_mut().zip(stats) {
            n.update(s);
        }
        Ok(())
    }
}

/// Per-column affine standardization `(v − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits on the given rows. Constant columns get scale 1.
    pub fn fit(x: &Matrix, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain(
                "cannot fit a standardizer on zero rows".into(),
            ));
        }
        let p = x.cols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; p];
        for &r in rows {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for &r in rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
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
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::Shape {
                op: "standardize",
                left: x.shape(),
                right: (x.rows(), self.mean.len()),
            });
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Everything needed to reproduce predictions: model, feature layout and
/// the input/target scaling fitted on the training nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub features: Standardizer,
    pub target_mean: f64,
    pub target_scale: f64,
    pub model: AgriGnnModel,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Domain(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        Ok(ck)
    }

    /// Predictions in target units for a raw (unscaled) feature matrix.
    pub fn predict(&self, raw_features: &Matrix, graph: &AgriGraph) -> Result<Vec<f64>> {
        let x = self.features.transform(raw_features)?;
        Ok(self
            .model
            .predict(&x, graph)?
            .into_iter()
            .map(|p| p * self.target_scale + self.target_mean)
            .collect())
    }

    pub fn embed(&self, raw_features: &Matrix, graph: &AgriGraph) -> Result<Matrix> {
        let x = self.features.transform(raw_features)?;
        self.model.embed(&x, graph)
    }
}
