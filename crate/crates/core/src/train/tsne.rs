//! Exact t-SNE: O(n²) affinities and gradients, seeded Gaussian start.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneOptions {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneOptions {
    fn default() -> Self {
        TsneOptions {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    /// `n × 2` output coordinates.
    pub coords: Matrix,
    /// `(iteration, KL(P‖Q))` for every iteration after early exaggeration.
    pub kl_history: Vec<(usize, f64)>,
    pub final_kl: f64,
}

const ENTROPY_TOL: f64 = 1e-5;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;

fn squared_distances(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i * n + j] = s;
            d[j * n + i] = s;
        }
    }
    d
}

/// Conditional row distribution `p_{j|i}` at the given precision, and its
/// Shannon entropy (nats).
fn row_distribution(d: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o = if j == i {
            0.0
        } else {
            (-(d[j] - dmin) * beta).exp()
        };
        sum += *o;
    }
    let mut h = 0.0;
    for o in out.iter_mut() {
        *o /= sum;
        if *o > 0.0 {
            h -= *o * o.ln();
        }
    }
    h
}

/// Symmetrized joint affinities `P` (row-major `n × n`).
fn joint_affinities(d: &[f64], n: usize, perplexity: f64) -> Result<Vec<f64>> {
    let target = perplexity.ln();
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        let row = &d[i * n..(i + 1) * n];
        let out = &mut cond[i * n..(i + 1) * n];
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let off: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| row[j]).collect();
        let spread = off.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - off.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread == 0.0 {
            // All neighbours equidistant: only the uniform row exists.
            row_distribution(row, i, 1.0, out);
            continue;
        }
        let mut beta = 1.0 / spread;
        let mut converged = false;
        for _ in 0..200 {
            let h = row_distribution(row, i, beta, out);
            if (h - target).abs() < ENTROPY_TOL {
                converged = true;
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() {
                    (beta + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = if lo.is_finite() {
                    (beta + lo) / 2.0
                } else {
                    beta / 2.0
                };
            }
        }
        if !converged {
            return Err(Error::Domain(format!(
                "perplexity {perplexity} infeasible for point {i} of {n}"
            )));
        }
    }
    let mut p = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / denom).max(P_FLOOR);
            }
        }
    }
    Ok(p)
}

/// Embeds rows of `x` into two dimensions.
pub fn tsne_embed(x: &Matrix, opts: &TsneOptions) -> Result<TsneResult> {
    let n = x.rows();
    if n < 5 {
        return Err(Error::Domain(format!(
            "t-SNE needs at least 5 points, got {n}"
        )));
    }
    if !x.is_finite() {
        return Err(Error::Numeric(
            "t-SNE input contains non-finite values".into(),
        ));
    }
    if !(opts.perplexity > 0.0 && opts.perplexity <= (n - 1) as f64) {
        return Err(Error::Domain(format!(
            "perplexity {} infeasible for {n} points (max {})",
            opts.perplexity,
            n - 1
        )));
    }
    let d = squared_distances(x);
    let p = joint_affinities(&d, n, opts.perplexity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![0.0; 2 * n];
    let mut kl_history = Vec::new();
    let mut final_kl = f64::NAN;

    for it in 0..opts.iterations {
        let exaggerating = it < opts.exaggeration_iterations;
        let exag = if exaggerating {
            opts.early_exaggeration
        } else {
            1.0
        };
        let momentum = if exaggerating {
            opts.initial_momentum
        } else {
            opts.final_momentum
        };

        let mut zsum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                num[j * n + i] = v;
                zsum += 2.0 * v;
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut kl = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[i * n + j] / zsum).max(P_FLOOR);
                let pij = p[i * n + j];
                kl += pij * (pij / q).ln();
                let w = 4.0 * (exag * pij - q) * num[i * n + j];
                grad[2 * i] += w * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += w * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }
        if !exaggerating {
            kl_history.push((it, kl));
        }
        final_kl = kl;

        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(MIN_GAIN)
            };
            update[k] = momentum * update[k] - opts.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        // Recentre to keep coordinates bounded.
        for c in 0..2 {
            let mean = (0..n).map(|i| y[2 * i + c]).sum::<f64>() / n as f64;
            (0..n).for_each(|i| y[2 * i + c] -= mean);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("t-SNE diverged at iteration {it}")));
        }
    }
    Ok(TsneResult {
        coords: Matrix::from_vec(n, 2, y).expect("n × 2"),
        kl_history,
        final_kl,
    })
}
