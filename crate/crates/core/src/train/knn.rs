use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, Metrics};
use crate::data::SplitAssignment;
use crate::error::{Error, Result};

/// Training rows ordered by squared distance to `q`, ties by index.
fn neighbor_order(train: &[(f64, f64)], q: (f64, f64)) -> Vec<usize> {
    let d: Vec<f64> = train
        .iter()
        .map(|&(a, b)| (a - q.0) * (a - q.0) + (b - q.1) * (b - q.1))
        .collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]).then(i.cmp(&j)));
    order
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k must lie in 1..={n}, got {k}")));
    }
    Ok(())
}

/// Unweighted mean of the `k` nearest training yields, by Euclidean
/// distance on (lat, lon).
pub fn knn_predict(
    train_coords: &[(f64, f64)],
    train_y: &[f64],
    query: &[(f64, f64)],
    k: usize,
) -> Result<Vec<f64>> {
    if train_coords.len() != train_y.len() {
        return Err(Error::Shape {
            op: "knn_predict",
            left: (train_coords.len(), 2),
            right: (train_y.len(), 1),
        });
    }
    check_k(k, train_coords.len())?;
    Ok(query
        .iter()
        .map(|&q| {
            let order = neighbor_order(train_coords, q);
            order[..k].iter().map(|&i| train_y[i]).sum::<f64>() / k as f64
        })
        .collect())
}

/// Predictions for every k in `ks` at once (one distance sort per query).
fn knn_predict_many(
    train_coords: &[(f64, f64)],
    train_y: &[f64],
    query: &[(f64, f64)],
    ks: &[usize],
) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(query.len()); ks.len()];
    for &q in query {
        let order = neighbor_order(train_coords, q);
        let mut prefix = Vec::with_capacity(order.len() + 1);
        prefix.push(0.0);
        for &i in &order {
            prefix.push(prefix.last().unwrap() + train_y[i]);
        }
        for (slot, &k) in out.iter_mut().zip(ks) {
            slot.push(prefix[k] / k as f64);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnSearch {
    pub k: usize,
    /// Cross-validated RMSE per candidate k, in grid order.
    pub cv_rmse: Vec<(usize, f64)>,
    pub test: Metrics,
    pub test_predictions: Vec<f64>,
}

/// Chooses k by `folds`-fold cross-validated RMSE on the training nodes and
/// reports test metrics at that k. Ties go to the smaller k.
pub fn knn_grid_search(
    coords: &[(f64, f64)],
    target: &[f64],
    split: &SplitAssignment,
    k_range: &[usize],
    folds: usize,
    seed: u64,
) -> Result<KnnSearch> {
    if k_range.is_empty() {
        return Err(Error::Config("k grid is empty".into()));
    }
    if folds < 2 || folds > split.train.len() {
        return Err(Error::Config(format!(
            "need 2..={} folds, got {folds}",
            split.train.len()
        )));
    }
    let mut shuffled = split.train.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of = |pos: usize| pos % folds;
    let smallest_fit = (0..folds)
        .map(|f| (0..shuffled.len()).filter(|&p| fold_of(p) != f).count())
        .min()
        .unwrap_or(0);
    for &k in k_range {
        check_k(k, smallest_fit)?;
    }

    let mut sq = vec![0.0; k_range.len()];
    for f in 0..folds {
        let (mut fit_c, mut fit_y, mut val_c, mut val_y) = (vec![], vec![], vec![], vec![]);
        for (p, &i) in shuffled.iter().enumerate() {
            if fold_of(p) == f {
                val_c.push(coords[i]);
                val_y.push(target[i]);
            } else {
                fit_c.push(coords[i]);
                fit_y.push(target[i]);
            }
        }
        let preds = knn_predict_many(&fit_c, &fit_y, &val_c, k_range);
        for (s, pk) in sq.iter_mut().zip(&preds) {
            *s += pk
                .iter()
                .zip(&val_y)
                .map(|(p, y)| (p - y) * (p - y))
                .sum::<f64>();
        }
    }
    let n = shuffled.len() as f64;
    let cv_rmse: Vec<(usize, f64)> = k_range
        .iter()
        .zip(&sq)
        .map(|(&k, s)| (k, (s / n).sqrt()))
        .collect();
    let mut best = cv_rmse[0];
    for &c in &cv_rmse[1..] {
        if c.1 < best.1 || (c.1 == best.1 && c.0 < best.0) {
            best = c;
        }
    }

    let train_c: Vec<(f64, f64)> = split.train.iter().map(|&i| coords[i]).collect();
    let train_y: Vec<f64> = split.train.iter().map(|&i| target[i]).collect();
    let test_c: Vec<(f64, f64)> = split.test.iter().map(|&i| coords[i]).collect();
    let test_predictions = knn_predict(&train_c, &train_y, &test_c, best.0)?;
    let test_y: Vec<f64> = split.test.iter().map(|&i| target[i]).collect();
    let mask: Vec<usize> = (0..test_y.len()).collect();
    let test = evaluate(&test_predictions, &test_y, &mask)?;
    Ok(KnnSearch {
        k: best.0,
        cv_rmse,
        test,
        test_predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_one_and_k_all() {
        let c = [(0.0, 0.0), (1.0, 0.0), (0.0, 3.0)];
        let y = [1.0, 2.0, 9.0];
        assert_eq!(
            knn_predict(&c, &y, &[(0.9, 0.1), (0.0, 2.0)], 1).unwrap(),
            vec![2.0, 9.0]
        );
        assert_eq!(
            knn_predict(&c, &y, &[(5.0, 5.0), (0.0, 0.0)], 3).unwrap(),
            vec![4.0, 4.0]
        );
        assert!(knn_predict(&c, &y, &[(0.0, 0.0)], 0).is_err());
        assert!(knn_predict(&c, &y, &[(0.0, 0.0)], 4).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        let c = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0)];
        let y = [10.0, 20.0, 30.0];
        assert_eq!(knn_predict(&c, &y, &[(0.0, 0.0)], 1).unwrap(), vec![10.0]);
        assert_eq!(knn_predict(&c, &y, &[(0.0, 0.0)], 2).unwrap(), vec![15.0]);
    }

    #[test]
    fn singleton_grid() {
        let coords: Vec<(f64, f64)> = (0..40).map(|i| (i as f64, (i * 7 % 11) as f64)).collect();
        let y: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let split = SplitAssignment {
            train: (0..32).collect(),
            test: (32..40).collect(),
            seed: 0,
        };
        let r = knn_grid_search(&coords, &y, &split, &[5], 5, 1).unwrap();
        assert_eq!(r.k, 5);
        assert!(knn_grid_search(&coords, &y, &split, &[30], 5, 1).is_err());
    }
}
