use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate, train, Metrics, TrainConfig};
use crate::data::SplitAssignment;
use crate::error::{Error, Result};
use crate::graph::AgriGraph;
use crate::tensor::Matrix;
use crate::vegindex::{format_float, write_text};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub learning_rates: Vec<f64>,
    pub hidden_channels: Vec<usize>,
    pub dropout_rates: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            learning_rates: vec![0.001, 0.005, 0.01, 0.02],
            hidden_channels: vec![32, 64, 128],
            dropout_rates: vec![0.3, 0.5, 0.7],
        }
    }
}

impl HyperGrid {
    /// Cells in row-major order: learning rate, then hidden, then dropout.
    pub fn cells(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &h in &self.hidden_channels {
                for &d in &self.dropout_rates {
                    out.push(TrainConfig {
                        learning_rate: lr,
                        hidden_channels: h,
                        dropout_rate: d,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub learning_rate: f64,
    pub hidden_channels: usize,
    pub dropout_rate: f64,
    pub test: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the lowest test RMSE (first on ties).
    pub best: usize,
    pub best_config: TrainConfig,
}

/// Trains one model per grid cell on a shared split and seed and keeps
/// the cell with the lowest test RMSE. Cells run on worker threads; the
/// table keeps grid order regardless of scheduling.
pub fn hyper_grid_search(
    x: &Matrix,
    target: &[f64],
    graph: &AgriGraph,
    split: &SplitAssignment,
    grid: &HyperGrid,
    base: &TrainConfig,
    feature_names: &[String],
) -> Result<GridResult> {
    let configs = grid.cells(base);
    if configs.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    let run = |cfg: &TrainConfig| -> Result<GridCell> {
        let out = train(x, target, graph, split, cfg, feature_names)?;
        let pred = out.checkpoint.predict(x, graph)?;
        Ok(GridCell {
            learning_rate: cfg.learning_rate,
            hidden_channels: cfg.hidden_channels,
            dropout_rate: cfg.dropout_rate,
            test: evaluate(&pred, target, &split.test)?,
        })
    };
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(configs.len());
    let results: Vec<Result<GridCell>> = if workers <= 1 {
        configs.iter().map(run).collect()
    } else {
        let mut slots: Vec<Option<Result<GridCell>>> = (0..configs.len()).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let configs = &configs;
                    let run = &run;
                    s.spawn(move || {
                        (w..configs.len())
                            .step_by(workers)
                            .map(|i| (i, run(&configs[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("grid worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots
            .into_iter()
            .map(|s| s.expect("every cell ran"))
            .collect()
    };
    let cells = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.test.rmse < cells[best].test.rmse {
            best = i;
        }
    }
    Ok(GridResult {
        best_config: configs[best].clone(),
        cells,
        best,
    })
}

/// `learning_rate,hidden_channels,dropout_rate,rmse,mae,r2`, grid order.
pub fn write_grid_results_csv(cells: &[GridCell], path: &Path) -> Result<()> {
    let mut text = String::from("learning_rate,hidden_channels,dropout_rate,rmse,mae,r2\n");
    for c in cells {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_float(c.learning_rate),
            c.hidden_channels,
            format_float(c.dropout_rate),
            format_float(c.test.rmse),
            format_float(c.test.mae),
            format_float(c.test.r2)
        ));
    }
    write_text(path, &text)
}
