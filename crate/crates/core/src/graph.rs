//! Plot graph construction.
//!
//! Nodes are plots. Two plots are joined when they are spatially close
//! (pairwise coordinate distance below a percentile threshold) or when they
//! carry the same population label. The final graph is the deduplicated
//! union of both edge sets, with per-edge provenance flags.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Set of undirected edges stored as `(low, high)` index pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeSet(BTreeSet<(usize, usize)>);

impl EdgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `{a, b}`; self-loops are ignored. Returns true if newly added.
    pub fn insert(&mut self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        self.0.insert((a.min(b), a.max(b)))
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.0.contains(&(a.min(b), a.max(b)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Pairs in ascending `(low, high)` order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied()
    }
}

impl FromIterator<(usize, usize)> for EdgeSet {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        let mut set = EdgeSet::new();
        for (a, b) in iter {
            set.insert(a, b);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeMode {
    /// One threshold from the percentile of all non-zero pairwise distances.
    #[default]
    Global,
    /// Each node selects the bottom percentile of its own distances; the
    /// selections are symmetrized by union.
    PerNode,
}

impl std::str::FromStr for EdgeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(EdgeMode::Global),
            "per-node" => Ok(EdgeMode::PerNode),
            other => Err(Error::Config(format!(
                "edge mode must be `global` or `per-node`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    /// Plain Euclidean norm on (latitude, longitude) in degrees.
    #[default]
    Euclidean,
    /// Great-circle distance in kilometres.
    Haversine,
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "haversine" => Ok(DistanceMetric::Haversine),
            other => Err(Error::Config(format!(
                "distance metric must be `euclidean` or `haversine`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialOptions {
    pub mode: EdgeMode,
    pub percentile: f64,
    /// Global mode only: accept `d <= threshold` instead of `d < threshold`.
    pub closed: bool,
}

impl Default for SpatialOptions {
    fn default() -> Self {
        SpatialOptions {
            mode: EdgeMode::Global,
            percentile: 3.0,
            closed: false,
        }
    }
}

const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Symmetric distance matrix over `(latitude, longitude)` pairs.
pub fn pairwise_distances(coords: &[(f64, f64)], metric: DistanceMetric) -> Result<Matrix> {
    if let Some(bad) = coords
        .iter()
        .position(|(a, b)| !a.is_finite() || !b.is_finite())
    {
        return Err(Error::NonFiniteCoordinate(bad));
    }
    let n = coords.len();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = match metric {
                DistanceMetric::Euclidean => {
                    let dy = coords[i].0 - coords[j].0;
                    let dx = coords[i].1 - coords[j].1;
                    (dx * dx + dy * dy).sqrt()
                }
                DistanceMetric::Haversine => haversine_km(coords[i], coords[j]),
            };
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    Ok(d)
}

fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn check_percentile(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p <= 100.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "percentile must lie in (0, 100], got {p}"
        )))
    }
}

/// 1-based nearest-rank position `ceil(p/100 * m)`, clamped to `[1, m]`.
fn nearest_rank(p: f64, m: usize) -> usize {
    ((p * m as f64 / 100.0).ceil() as usize).clamp(1, m)
}

/// Nearest-rank percentile of `values` (reorders the slice).
fn select_nearest_rank(values: &mut [f64], p: f64) -> f64 {
    let k = nearest_rank(p, values.len());
    let (_, v, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *v
}

/// Nearest-rank percentile over non-zero off-diagonal distances, each
/// unordered pair counted once.
pub fn spatial_threshold(d: &Matrix, percentile: f64) -> Result<f64> {
    check_percentile(percentile)?;
    let n = d.rows();
    let mut values = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        values.extend(d.row(i)[i + 1..].iter().copied().filter(|&v| v > 0.0));
    }
    if values.is_empty() {
        return Err(Error::NoPositiveDistance);
    }
    Ok(select_nearest_rank(&mut values, percentile))
}

pub fn build_spatial_edges(d: &Matrix, opts: &SpatialOptions) -> Result<EdgeSet> {
    check_percentile(opts.percentile)?;
    let n = d.rows();
    let mut edges = EdgeSet::new();
    match opts.mode {
        EdgeMode::Global => {
            let t = spatial_threshold(d, opts.percentile)?;
            for i in 0..n {
                for (j, &v) in d.row(i).iter().enumerate().skip(i + 1) {
                    let within = if opts.closed { v <= t } else { v < t };
                    if v > 0.0 && within {
                        edges.insert(i, j);
                    }
                }
            }
        }
        EdgeMode::PerNode => {
            let mut any_positive = false;
            let mut own = Vec::with_capacity(n);
            for i in 0..n {
                own.clear();
                own.extend(
                    d.row(i)
                        .iter()
                        .enumerate()
                        .filter(|&(j, &v)| j != i && v > 0.0)
                        .map(|(_, &v)| v),
                );
                if own.is_empty() {
                    continue;
                }
                any_positive = true;
                let t = select_nearest_rank(&mut own, opts.percentile);
                for (j, &v) in d.row(i).iter().enumerate() {
                    if j != i && v > 0.0 && v <= t {
                        edges.insert(i, j);
                    }
                }
            }
            if !any_positive {
                return Err(Error::NoPositiveDistance);
            }
        }
    }
    Ok(edges)
}

/// Full clique over every group of nodes sharing a label.
pub fn build_genotype_edges<S: AsRef<str>>(labels: &[S]) -> EdgeSet {
    let wrapped: Vec<Option<&str>> = labels.iter().map(|l| Some(l.as_ref())).collect();
    build_genotype_edges_partial(&wrapped)
}

/// Like [`build_genotype_edges`], but nodes without a label join no clique.
pub fn build_genotype_edges_partial<S: AsRef<str>>(labels: &[Option<S>]) -> EdgeSet {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            groups.entry(l.as_ref()).or_default().push(i);
        }
    }
    let mut edges = EdgeSet::new();
    for members in groups.values() {
        for (k, &a) in members.iter().enumerate() {
            for &b in &members[k + 1..] {
                edges.insert(a, b);
            }
        }
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub spatial: bool,
    pub genotypic: bool,
}

/// Immutable undirected plot graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AgriGraph {
    node_count: usize,
    edges: Vec<GraphEdge>,
    adjacency: Vec<Vec<usize>>,
}

pub fn union_graph(spatial: &EdgeSet, genotypic: &EdgeSet, n: usize) -> Result<AgriGraph> {
    let mut merged: BTreeMap<(usize, usize), (bool, bool)> = BTreeMap::new();
    for (a, b) in spatial.iter() {
        merged.entry((a, b)).or_default().0 = true;
    }
    for (a, b) in genotypic.iter() {
        merged.entry((a, b)).or_default().1 = true;
    }
    let edges = merged
        .into_iter()
        .map(|((src, dst), (spatial, genotypic))| GraphEdge {
            src,
            dst,
            spatial,
            genotypic,
        })
        .collect();
    AgriGraph::from_edges(n, edges)
}

impl AgriGraph {
    /// Builds a graph from provenance-tagged edges. Edges must satisfy
    /// `src < dst < n` and be unique.
    pub fn from_edges(n: usize, mut edges: Vec<GraphEdge>) -> Result<Self> {
        for e in &edges {
            let hi = e.src.max(e.dst);
            if hi >= n {
                return Err(Error::NodeOutOfRange { index: hi, n });
            }
            if e.src >= e.dst {
                return Err(Error::Domain(format!(
                    "edge ({}, {}) must satisfy src < dst",
                    e.src, e.dst
                )));
            }
        }
        edges.sort_by_key(|e| (e.src, e.dst));
        if edges
            .windows(2)
            .any(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst))
        {
            return Err(Error::Domain("duplicate edge".into()));
        }
        let adjacency = adjacency_from(n, &edges);
        Ok(AgriGraph {
            node_count: n,
            edges,
            adjacency,
        })
    }

    /// Graph with no edges.
    pub fn edgeless(n: usize) -> Self {
        AgriGraph {
            node_count: n,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange {
                index: i,
                n: self.node_count,
            })
    }

    /// Adjacency lists recomputed from the edge list.
    pub fn rebuild_adjacency(&self) -> Vec<Vec<usize>> {
        adjacency_from(self.node_count, &self.edges)
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<AgriGraph> {
        if perm.len() != self.node_count {
            return Err(Error::Domain(
                "permutation length differs from node count".into(),
            ));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (perm[e.src], perm[e.dst]);
                GraphEdge {
                    src: a.min(b),
                    dst: a.max(b),
                    ..*e
                }
            })
            .collect();
        AgriGraph::from_edges(self.node_count, edges)
    }

    pub fn spatial_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.spatial).count()
    }

    pub fn genotypic_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.genotypic).count()
    }

    /// Writes `src,dst,spatial,genotypic`, one row per undirected edge.
    pub fn write_edges_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(16 * self.edges.len() + 32);
        out.push_str("src,dst,spatial,genotypic\n");
        for e in &self.edges {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.src, e.dst, e.spatial as u8, e.genotypic as u8
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn adjacency_from(n: usize, edges: &[GraphEdge]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.src].push(e.dst);
        adj[e.dst].push(e.src);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}
