//! Optimization, evaluation, baselines and exports.

mod export;
mod grid;
mod knn;
mod tsne;

pub use export::{
    export_actual_vs_predicted, export_embeddings, write_actual_vs_predicted_csv,
    write_embeddings_csv, write_json, write_loss_history_csv, write_tsne_csv, PredictionRow,
};
pub use grid::{hyper_grid_search, write_grid_results_csv, GridCell, GridResult, HyperGrid};
pub use knn::{knn_grid_search, knn_predict, KnnSearch};
pub use tsne::{tsne_embed, TsneOptions, TsneResult};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SplitAssignment;
use crate::error::{Error, Result};
use crate::graph::AgriGraph;
use crate::model::{
    AgriGnnModel, Checkpoint, FinalActivation, Mode, ModelConfig, Standardizer, CHECKPOINT_VERSION,
};
use crate::tensor::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub hidden_channels: usize,
    pub dropout_rate: f64,
    pub final_activation: FinalActivation,
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            epochs: 500,
            hidden_channels: 32,
            dropout_rate: 0.3,
            final_activation: FinalActivation::Identity,
            seed: 0,
            train_fraction: 0.8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        self.model_config(1).validate()
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            hidden_channels: self.hidden_channels,
            dropout_rate: self.dropout_rate,
            final_activation: self.final_activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// RMSE, MAE and r² over the nodes in `mask`.
pub fn evaluate(pred: &[f64], target: &[f64], mask: &[usize]) -> Result<Metrics> {
    if pred.len() != target.len() {
        return Err(Error::Shape {
            op: "evaluate",
            left: (pred.len(), 1),
            right: (target.len(), 1),
        });
    }
    if mask.is_empty() {
        return Err(Error::Domain("evaluation mask is empty".into()));
    }
    let n = mask.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut mean = 0.0;
    for &i in mask {
        let (p, y) = (pred[i], target[i]);
        if !p.is_finite() || !y.is_finite() {
            return Err(Error::Numeric(format!("non-finite value at node {i}")));
        }
        sq += (p - y) * (p - y);
        abs += (p - y).abs();
        mean += y;
    }
    mean /= n;
    let ss_tot: f64 = mask.iter().map(|&i| (target[i] - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Numeric(
            "r² undefined: target has zero variance".into(),
        ));
    }
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        r2: 1.0 - sq / ss_tot,
    })
}

/// Masked mean squared error of plain vectors.
pub fn mse_loss(pred: &[f64], target: &[f64], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Domain("loss mask is empty".into()));
    }
    let mut s = 0.0;
    for &i in mask {
        let d = pred[i] - target[i];
        s += d * d;
    }
    Ok(s / mask.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&Matrix]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Matrix::zeros(p.rows(), p.cols()))
                .collect()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Domain(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
        }
        let v = state.v[k].data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
        }
        let m = state.m[k].data();
        let v = state.v[k].data();
        for ((w, mi), vi) in p.data_mut().iter_mut().zip(m).zip(v) {
            *w -= lr * (mi / c1) / ((vi / c2).sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLoss>,
}

/// Full-batch transductive training on one graph.
///
/// Features are z-scored and the target standardized with statistics of
/// the training nodes; the loss is the masked MSE on standardized targets.
/// The recorded history is in target units: `train_mse` comes from the
/// training-mode pass of each epoch, `test_mse` from an eval pass after the
/// update.
pub fn train(
    x: &Matrix,
    target: &[f64],
    graph: &AgriGraph,
    split: &SplitAssignment,
    cfg: &TrainConfig,
    feature_names: &[String],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = graph.node_count();
    if x.rows() != n || target.len() != n {
        return Err(Error::Shape {
            op: "train",
            left: x.shape(),
            right: (target.len(), n),
        });
    }
    if feature_names.len() != x.cols() {
        return Err(Error::Domain(format!(
            "{} feature names for {} columns",
            feature_names.len(),
            x.cols()
        )));
    }
    if split.train.is_empty() {
        return Err(Error::Domain("training split is empty".into()));
    }
    if let Some(&i) = split
        .train
        .iter()
        .chain(&split.test)
        .find(|&&i| i >= n || !target[i].is_finite())
    {
        return Err(Error::Domain(format!(
            "split node {i} is out of range or unlabeled"
        )));
    }

    let features = Standardizer::fit(x, &split.train)?;
    let xs = features.transform(x)?;
    let (target_mean, target_scale) = target_scaling(target, &split.train);
    let ys: Vec<f64> = target
        .iter()
        .map(|y| {
            if y.is_finite() {
                (y - target_mean) / target_scale
            } else {
                0.0
            }
        })
        .collect();
    let unit = target_scale * target_scale;

    let mut model = AgriGnnModel::init(cfg.model_config(x.cols()), cfg.seed)?;
    let mut adam = AdamState::new(&model.params());
    let mut dropout_seeds = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6472_6f70_6f75_7421);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mode = Mode::Train {
            dropout_seed: dropout_seeds.next_u64(),
        };
        let mut fwd = model.forward(&xs, graph, mode)?;
        let loss = fwd.tape.masked_mse(fwd.prediction, &ys, &split.train)?;
        let train_loss = fwd.tape.value(loss).get(0, 0);
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let grads = fwd.tape.backward(loss)?;
        let stats = std::mem::take(&mut fwd.batch_stats);
        drop(fwd);
        model.apply_batch_stats(&stats)?;
        let grads = grads.into_params();
        adam_step(
            &mut model.params_mut(),
            &grads,
            &mut adam,
            cfg.learning_rate,
        )?;

        let test_mse = if split.test.is_empty() {
            f64::NAN
        } else {
            let pred = model.predict(&xs, graph)?;
            let l = mse_loss(&pred, &ys, &split.test)?;
            if !l.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            l * unit
        };
        history.push(EpochLoss {
            epoch,
            train_mse: train_loss * unit,
            test_mse,
        });
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            format_version: CHECKPOINT_VERSION,
            feature_names: feature_names.to_vec(),
            features,
            target_mean,
            target_scale,
            model,
        },
        history,
    })
}

fn target_scaling(target: &[f64], rows: &[usize]) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&i| target[i]).sum::<f64>() / n;
    let var = rows
        .iter()
        .map(|&i| (target[i] - mean).powi(2))
        .sum::<f64>()
        / n;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}
