#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

pub mod spot;

use agri_gnn::graph::{union_graph, AgriGraph, EdgeSet};
use agri_gnn::tensor::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

/// Erdős–Rényi graph; returns the graph and its normalized edge list.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> (AgriGraph, Vec<(usize, usize)>) {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let set: EdgeSet = edges.iter().copied().collect();
    (union_graph(&set, &EdgeSet::new(), n).unwrap(), edges)
}

/// `D⁻¹·A·h` with explicit dense matrices; isolated rows stay zero.
pub fn dense_neighbor_mean(n: usize, edges: &[(usize, usize)], h: &Matrix) -> Matrix {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j) in edges {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    let mut out = Matrix::zeros(n, h.cols());
    for i in 0..n {
        let deg: f64 = a[i].iter().sum();
        if deg == 0.0 {
            continue;
        }
        for c in 0..h.cols() {
            let s: f64 = (0..n).map(|j| a[i][j] * h.get(j, c)).sum();
            out.set(i, c, s / deg);
        }
    }
    out
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn rank(p: f64, m: usize) -> usize {
    ((p / 100.0 * m as f64).ceil() as usize).clamp(1, m)
}

/// Global-threshold spatial edges by full sort.
pub fn brute_global_edges(coords: &[(f64, f64)], p: f64, closed: bool) -> BTreeSet<(usize, usize)> {
    let n = coords.len();
    let mut all = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = euclid(coords[i], coords[j]);
            if d > 0.0 {
                all.push(d);
            }
        }
    }
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let t = all[rank(p, all.len()) - 1];
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = euclid(coords[i], coords[j]);
            if d > 0.0 && (d < t || (closed && d == t)) {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Per-node bottom-percentile selection, symmetrized by union.
pub fn brute_per_node_edges(coords: &[(f64, f64)], p: f64) -> BTreeSet<(usize, usize)> {
    let n = coords.len();
    let mut out = BTreeSet::new();
    for i in 0..n {
        let mut own: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| euclid(coords[i], coords[j]))
            .filter(|&d| d > 0.0)
            .collect();
        if own.is_empty() {
            continue;
        }
        own.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let t = own[rank(p, own.len()) - 1];
        for j in 0..n {
            let d = euclid(coords[i], coords[j]);
            if j != i && d > 0.0 && d <= t {
                out.insert((i.min(j), i.max(j)));
            }
        }
    }
    out
}

pub fn brute_genotype_edges(labels: &[&str]) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Random node permutation: `perm[old] = new`.
pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Rows of `m` moved so that row `i` lands at `perm[i]`.
pub fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for (i, &pi) in perm.iter().enumerate() {
        out.row_mut(pi).copy_from_slice(m.row(i));
    }
    out
}
