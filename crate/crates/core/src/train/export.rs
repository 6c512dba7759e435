use std::path::Path;

use serde::Serialize;

use super::EpochLoss;
use crate::data::SplitAssignment;
use crate::error::{Error, Result};
use crate::graph::AgriGraph;
use crate::model::Checkpoint;
use crate::tensor::Matrix;
use crate::vegindex::{format_float, write_text};

/// Eval-mode third-layer node representations.
pub fn export_embeddings(
    ck: &Checkpoint,
    raw_features: &Matrix,
    graph: &AgriGraph,
) -> Result<Matrix> {
    ck.embed(raw_features, graph)
}

fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn labelled_matrix_csv(plot_ids: &[&str], m: &Matrix, cols: &[String], path: &Path) -> Result<()> {
    if plot_ids.len() != m.rows() {
        return Err(Error::Shape {
            op: "write matrix csv",
            left: m.shape(),
            right: (plot_ids.len(), m.cols()),
        });
    }
    let mut header = vec!["plot_id".to_string()];
    header.extend_from_slice(cols);
    write_rows(
        path,
        &header,
        (0..m.rows()).map(|r| {
            std::iter::once(plot_ids[r].to_string())
                .chain(m.row(r).iter().map(|&v| format_float(v)))
                .collect()
        }),
    )
}

/// `plot_id,h0,h1,…` one row per node.
pub fn write_embeddings_csv(plot_ids: &[&str], embeddings: &Matrix, path: &Path) -> Result<()> {
    let cols: Vec<String> = (0..embeddings.cols()).map(|c| format!("h{c}")).collect();
    labelled_matrix_csv(plot_ids, embeddings, &cols, path)
}

/// `plot_id,x,y` one row per node.
pub fn write_tsne_csv(plot_ids: &[&str], coords: &Matrix, path: &Path) -> Result<()> {
    labelled_matrix_csv(plot_ids, coords, &["x".into(), "y".into()], path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    pub plot_id: String,
    pub actual: f64,
    pub predicted: f64,
    pub split: &'static str,
}

/// One row per labeled node of the split, in node order.
pub fn export_actual_vs_predicted(
    plot_ids: &[&str],
    target: &[f64],
    predicted: &[f64],
    split: &SplitAssignment,
) -> Result<Vec<PredictionRow>> {
    let n = plot_ids.len();
    if target.len() != n || predicted.len() != n {
        return Err(Error::Shape {
            op: "actual_vs_predicted",
            left: (target.len(), 1),
            right: (predicted.len(), 1),
        });
    }
    let mut tagged: Vec<(usize, &'static str)> = split
        .train
        .iter()
        .map(|&i| (i, "train"))
        .chain(split.test.iter().map(|&i| (i, "test")))
        .collect();
    tagged.sort_unstable();
    tagged
        .into_iter()
        .map(|(i, role)| {
            if i >= n {
                return Err(Error::NodeOutOfRange { index: i, n });
            }
            Ok(PredictionRow {
                plot_id: plot_ids[i].to_string(),
                actual: target[i],
                predicted: predicted[i],
                split: role,
            })
        })
        .collect()
}

pub fn write_actual_vs_predicted_csv(rows: &[PredictionRow], path: &Path) -> Result<()> {
    let header: Vec<String> = ["plot_id", "actual", "predicted", "split"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_rows(
        path,
        &header,
        rows.iter().map(|r| {
            vec![
                r.plot_id.clone(),
                format_float(r.actual),
                format_float(r.predicted),
                r.split.to_string(),
            ]
        }),
    )
}

pub fn write_loss_history_csv(history: &[EpochLoss], path: &Path) -> Result<()> {
    let mut text = String::from("epoch,train_mse,test_mse\n");
    for h in history {
        text.push_str(&format!(
            "{},{},{}\n",
            h.epoch,
            format_float(h.train_mse),
            format_float(h.test_mse)
        ));
    }
    write_text(path, &text)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
