//! Posterior-similarity graph over extreme points.
//!
//! Two points are similar when they are likely to come from the same mixture
//! component: `w_ij = sum_k gamma_ik gamma_jk`. The graph supports hard
//! clustering, neighbor queries, spectral clustering, a force-directed layout
//! and export to GraphML, DOT and JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damex::SupportSet;
use crate::em::PosteriorMatrix;
use crate::matrix::Matrix;
use crate::rng;

/// Default cutoff below which edges are dropped for drawing and export.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unsupported export format {0:?} (expected graphml, dot or json)")]
    UnsupportedFormat(String),
    #[error("eigen-decomposition did not converge")]
    ConvergenceFailure,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed graph document: {0}")]
    Parse(String),
}

/// Dense symmetric similarity with zero diagonal; self-similarities are kept
/// apart in `self_similarity`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub weights: Matrix,
    pub self_similarity: Vec<f64>,
    /// Row index of each node in the data it was built from.
    pub node_ids: Vec<usize>,
    pub edge_threshold: f64,
}

impl SimilarityGraph {
    pub fn n(&self) -> usize {
        self.node_ids.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    /// Edges `(i, j, w)` with `i < j` and `w > 0`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = self.weights.get(i, j);
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }
}

pub fn similarity_matrix(gamma: &PosteriorMatrix) -> SimilarityGraph {
    let n = gamma.n();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let gi = gamma.row(i);
            (0..n)
                .map(|j| {
                    let w: f64 = gi.iter().zip(gamma.row(j)).map(|(a, b)| a * b).sum();
                    w.min(1.0)
                })
                .collect()
        })
        .collect();
    let mut weights = Matrix::zeros(n, n);
    let mut self_similarity = Vec::with_capacity(n);
    for (i, row) in rows.into_iter().enumerate() {
        self_similarity.push(row[i]);
        for (j, w) in row.into_iter().enumerate() {
            if i != j {
                // the product is symmetric up to summation order; pin it
                let w = if j < i { weights.get(j, i) } else { w };
                weights.set(i, j, w);
            }
        }
    }
    SimilarityGraph {
        weights,
        self_similarity,
        node_ids: (0..n).collect(),
        edge_threshold: 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterMethod {
    HardArgmax,
    Spectral,
}

/// Cluster labels, 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub method: ClusterMethod,
    pub n_clusters: usize,
}

/// Row-wise argmax; ties go to the smallest component index.
pub fn hard_assign(gamma: &PosteriorMatrix) -> ClusterAssignment {
    let labels = (0..gamma.n())
        .map(|i| {
            let row = gamma.row(i);
            let mut best = 0;
            for (k, &g) in row.iter().enumerate() {
                if g > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    ClusterAssignment {
        labels,
        method: ClusterMethod::HardArgmax,
        n_clusters: gamma.n_components(),
    }
}

/// Up to `l` most similar other nodes, by decreasing weight then node index.
pub fn rank_neighbors(graph: &SimilarityGraph, i: usize, l: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..graph.n()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| graph.weight(i, b).total_cmp(&graph.weight(i, a)).then(a.cmp(&b)));
    others.truncate(l);
    others
}

/// Drops edges lighter than `eps`.
pub fn threshold_edges(graph: &SimilarityGraph, eps: f64) -> Result<SimilarityGraph, GraphError> {
    if !(eps >= 0.0) {
        return Err(GraphError::InvalidParameter(format!("edge threshold {eps} must be >= 0")));
    }
    let mut out = graph.clone();
    let n = graph.n();
    for i in 0..n {
        for j in 0..n {
            if out.weights.get(i, j) < eps {
                out.weights.set(i, j, 0.0);
            }
        }
    }
    out.edge_threshold = eps;
    Ok(out)
}

/// Normalized spectral clustering: top eigenvectors of
/// `D^{-1/2} W D^{-1/2}`, row-normalized, then k-means++ with restarts.
pub fn spectral_clustering(
    graph: &SimilarityGraph,
    n_clusters: usize,
    seed: u64,
) -> Result<ClusterAssignment, GraphError> {
    let n = graph.n();
    if n_clusters == 0 || n == 0 {
        return Err(GraphError::InvalidParameter("need at least one node and one cluster".into()));
    }
    let k = n_clusters.min(n);
    if k == 1 {
        return Ok(ClusterAssignment {
            labels: vec![0; n],
            method: ClusterMethod::Spectral,
            n_clusters: 1,
        });
    }
    let degree: Vec<f64> = (0..n).map(|i| graph.weights.row(i).iter().sum()).collect();
    let scale: Vec<f64> = degree
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let m = DMatrix::from_fn(n, n, |i, j| scale[i] * graph.weights.get(i, j) * scale[j]);
    let eig = SymmetricEigen::try_new(m, 1e-12, 10_000).ok_or(GraphError::ConvergenceFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut embedding = Matrix::zeros(n, k);
    for i in 0..n {
        let row = embedding.row_mut(i);
        for (c, &col) in order[..k].iter().enumerate() {
            row[c] = eig.eigenvectors[(i, col)];
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    let mut rng = rng::substream(seed, rng::KMEANS);
    let labels = kmeans(&embedding, k, 10, &mut rng);
    Ok(ClusterAssignment {
        labels: canonical_labels(&labels),
        method: ClusterMethod::Spectral,
        n_clusters: k,
    })
}

/// Relabels clusters in order of first appearance.
fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from k-means++ seeds; best of `restarts` by inertia.
pub fn kmeans(x: &Matrix, k: usize, restarts: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.nrows();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let mut centers: Vec<Vec<f64>> = vec![x.row(rng.random_range(0..n)).to_vec()];
        let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), &centers[0])).collect();
        while centers.len() < k {
            let total: f64 = nearest.iter().sum();
            let next = if total > 0.0 {
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                nearest
                    .iter()
                    .position(|&d| {
                        acc += d;
                        acc > u
                    })
                    .unwrap_or(n - 1)
            } else {
                rng.random_range(0..n)
            };
            centers.push(x.row(next).to_vec());
            for (i, d) in nearest.iter_mut().enumerate() {
                *d = d.min(sq_dist(x.row(i), centers.last().unwrap()));
            }
        }
        let mut labels = vec![0usize; n];
        for _ in 0..300 {
            let mut changed = false;
            for (i, label) in labels.iter_mut().enumerate() {
                let c = (0..k)
                    .min_by(|&a, &b| sq_dist(x.row(i), &centers[a]).total_cmp(&sq_dist(x.row(i), &centers[b])))
                    .unwrap();
                if c != *label {
                    *label = c;
                    changed = true;
                }
            }
            let mut sums = vec![vec![0.0; x.ncols()]; k];
            let mut counts = vec![0usize; k];
            for (i, &l) in labels.iter().enumerate() {
                counts[l] += 1;
                for (s, v) in sums[l].iter_mut().zip(x.row(i)) {
                    *s += v;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = labels.iter().enumerate().map(|(i, &l)| sq_dist(x.row(i), &centers[l])).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}

/// Planar coordinates, one pair per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout2D {
    pub coords: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Rescale the bounding box to the unit square.
    pub normalize: bool,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            seed: 0,
            normalize: true,
        }
    }
}

/// Fruchterman-Reingold spring layout with weighted attraction and a
/// linearly cooling temperature.
pub fn fr_layout(graph: &SimilarityGraph, config: &LayoutConfig) -> Result<Layout2D, GraphError> {
    if config.iterations == 0 {
        return Err(GraphError::InvalidParameter("layout needs at least one iteration".into()));
    }
    let n = graph.n();
    let mut rng = rng::substream(config.seed, rng::LAYOUT);
    let mut pos: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    if n == 0 {
        return Ok(Layout2D { coords: pos });
    }
    let k = (1.0 / n as f64).sqrt();
    let t0 = 0.1;
    let edges = graph.edges();
    for it in 0..config.iterations {
        let temp = t0 * (1.0 - it as f64 / config.iterations as f64);
        let mut disp: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut d = [0.0, 0.0];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let mut delta = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]];
                    let mut dist = (delta[0] * delta[0] + delta[1] * delta[1]).sqrt();
                    if dist < 1e-9 {
                        // coincident nodes: push apart along a fixed direction
                        let angle = (i as f64 - j as f64) * 0.618_033_988_75 * std::f64::consts::TAU;
                        delta = [angle.cos() * 1e-9, angle.sin() * 1e-9];
                        dist = 1e-9;
                    }
                    let f = k * k / dist;
                    d[0] += delta[0] / dist * f;
                    d[1] += delta[1] / dist * f;
                }
                d
            })
            .collect();
        for &(i, j, w) in &edges {
            let delta = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]];
            let dist = (delta[0] * delta[0] + delta[1] * delta[1]).sqrt();
            if dist == 0.0 {
                continue;
            }
            let f = w * dist * dist / k;
            for c in 0..2 {
                disp[i][c] -= delta[c] / dist * f;
                disp[j][c] += delta[c] / dist * f;
            }
        }
        for (p, d) in pos.iter_mut().zip(&disp) {
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if len > 0.0 {
                let step = len.min(temp);
                p[0] += d[0] / len * step;
                p[1] += d[1] / len * step;
            }
        }
    }
    if config.normalize {
        for c in 0..2 {
            let lo = pos.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
            let hi = pos.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
            for p in pos.iter_mut() {
                p[c] = if hi > lo { (p[c] - lo) / (hi - lo) } else { 0.5 };
            }
        }
    }
    Ok(Layout2D { coords: pos })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    GraphMl,
    Dot,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::GraphMl => "graphml",
            Self::Dot => "dot",
            Self::Json => "json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "graphml" => Ok(Self::GraphMl),
            "dot" => Ok(Self::Dot),
            "json" => Ok(Self::Json),
            _ => Err(GraphError::UnsupportedFormat(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub cluster: usize,
    pub x: f64,
    pub y: f64,
    /// Members of the face of the node's most probable component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Everything written by an export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub edge_threshold: f64,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
}

impl GraphDocument {
    /// `faces` pairs the hard assignment with a support set, when known.
    pub fn new(
        graph: &SimilarityGraph,
        assignment: &ClusterAssignment,
        layout: &Layout2D,
        faces: Option<(&ClusterAssignment, &SupportSet)>,
    ) -> Result<Self, GraphError> {
        let n = graph.n();
        if assignment.labels.len() != n || layout.coords.len() != n {
            return Err(GraphError::InvalidParameter(format!(
                "{n} nodes but {} labels and {} positions",
                assignment.labels.len(),
                layout.coords.len()
            )));
        }
        let nodes = (0..n)
            .map(|i| NodeRecord {
                id: graph.node_ids[i],
                cluster: assignment.labels[i],
                x: layout.coords[i][0],
                y: layout.coords[i][1],
                face: faces.map(|(hard, s)| s.members(hard.labels[i]).to_vec()),
            })
            .collect();
        let edges = graph
            .edges()
            .into_iter()
            .map(|(i, j, w)| EdgeRecord {
                source: graph.node_ids[i],
                target: graph.node_ids[j],
                weight: w,
            })
            .collect();
        Ok(Self {
            edge_threshold: graph.edge_threshold,
            nodes,
            edges,
        })
    }

    pub fn render(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Json => serde_json::to_string_pretty(self).expect("graph serializes"),
            ExportFormat::Dot => self.to_dot(),
            ExportFormat::GraphMl => self.to_graphml(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))
    }

    fn face_label(face: &Option<Vec<usize>>) -> String {
        face.as_ref()
            .map(|f| f.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" "))
            .unwrap_or_default()
    }

    fn to_dot(&self) -> String {
        let mut s = String::from("graph extremes {\n");
        let _ = writeln!(s, "  // edge_threshold = {}", self.edge_threshold);
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "  {} [cluster={}, pos=\"{},{}\", face=\"{}\"];",
                n.id,
                n.cluster,
                n.x,
                n.y,
                Self::face_label(&n.face)
            );
        }
        for e in &self.edges {
            let _ = writeln!(s, "  {} -- {} [weight={}];", e.source, e.target, e.weight);
        }
        s.push_str("}\n");
        s
    }

    fn to_graphml(&self) -> String {
        let mut s = String::from(concat!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
            "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" ",
            "xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" ",
            "xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns ",
            "http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n",
            "  <key id=\"cluster\" for=\"node\" attr.name=\"cluster\" attr.type=\"int\"/>\n",
            "  <key id=\"x\" for=\"node\" attr.name=\"x\" attr.type=\"double\"/>\n",
            "  <key id=\"y\" for=\"node\" attr.name=\"y\" attr.type=\"double\"/>\n",
            "  <key id=\"face\" for=\"node\" attr.name=\"face\" attr.type=\"string\"/>\n",
            "  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n",
            "  <graph id=\"extremes\" edgedefault=\"undirected\">\n",
        ));
        for n in &self.nodes {
            let _ = write!(
                s,
                "    <node id=\"n{}\"><data key=\"cluster\">{}</data><data key=\"x\">{}</data><data key=\"y\">{}</data>",
                n.id, n.cluster, n.x, n.y
            );
            if n.face.is_some() {
                let _ = write!(s, "<data key=\"face\">{}</data>", Self::face_label(&n.face));
            }
            s.push_str("</node>\n");
        }
        for (i, e) in self.edges.iter().enumerate() {
            let _ = writeln!(
                s,
                "    <edge id=\"e{i}\" source=\"n{}\" target=\"n{}\"><data key=\"weight\">{}</data></edge>",
                e.source, e.target, e.weight
            );
        }
        s.push_str("  </graph>\n</graphml>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;

    fn posterior(rows: &[&[f64]]) -> PosteriorMatrix {
        PosteriorMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn from_weights(w: Matrix) -> SimilarityGraph {
        let n = w.nrows();
        SimilarityGraph {
            weights: w,
            self_similarity: vec![1.0; n],
            node_ids: (0..n).collect(),
            edge_threshold: 0.0,
        }
    }

    #[test]
    fn similarity_examples() {
        let g = similarity_matrix(&posterior(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5], &[0.5, 0.5]]));
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(0, 2), 0.0);
        assert_eq!(g.weight(3, 4), 0.5);
        assert_eq!(g.weight(0, 0), 0.0);
        assert_eq!(g.self_similarity[3], 0.5);
    }

    #[test]
    fn hard_assign_examples() {
        let a = hard_assign(&posterior(&[&[0.3, 0.3, 0.4], &[0.5, 0.5, 0.0], &[0.0, 1.0, 0.0]]));
        assert_eq!(a.labels, vec![2, 0, 1]);
        assert_eq!(a.n_clusters, 3);
    }

    #[test]
    fn neighbors_ranked_by_weight() {
        let g = similarity_matrix(&posterior(&[&[1.0, 0.0], &[0.2, 0.8], &[1.0, 0.0], &[0.6, 0.4]]));
        assert_eq!(rank_neighbors(&g, 0, 1), vec![2]);
        assert_eq!(g.weight(0, 2), 1.0);
        assert_eq!(rank_neighbors(&g, 0, 3), vec![2, 3, 1]);
        // ties broken by node id
        let t = similarity_matrix(&posterior(&[&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]]));
        assert_eq!(rank_neighbors(&t, 2, 2), vec![0, 1]);
    }

    #[test]
    fn threshold_examples() {
        let g = similarity_matrix(&posterior(&[&[1.0, 0.0], &[0.95, 0.05], &[0.0, 1.0]]));
        assert_eq!(threshold_edges(&g, 0.0).unwrap().weights, g.weights);
        assert!(threshold_edges(&g, 1.1).unwrap().edges().is_empty());
        let t = threshold_edges(&g, 0.1).unwrap();
        let pattern: Vec<(usize, usize)> = t.edges().iter().map(|&(i, j, _)| (i, j)).collect();
        // w01 = 0.95, w02 = 0, w12 = 0.05
        assert_eq!(pattern, vec![(0, 1)]);
        assert_eq!(t.edge_threshold, 0.1);
        assert!(threshold_edges(&g, -1.0).is_err());
    }

    fn block_graph(sizes: &[usize], noise: f64, seed: u64) -> (SimilarityGraph, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<usize> = sizes.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
        let n = truth.len();
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let base = if truth[i] == truth[j] { 0.8 } else { 0.0 };
                let x = (base + noise * rng.random::<f64>()).min(1.0);
                w.set(i, j, x);
                w.set(j, i, x);
            }
        }
        (from_weights(w), truth)
    }

    fn agreement(pred: &[usize], truth: &[usize]) -> f64 {
        // both sides canonicalized by first appearance
        let (p, t) = (canonical_labels(pred), canonical_labels(truth));
        p.iter().zip(&t).filter(|(a, b)| a == b).count() as f64 / p.len() as f64
    }

    #[test]
    fn spectral_splits_disjoint_cliques() {
        let (g, truth) = block_graph(&[6, 9], 0.0, 0);
        let a = spectral_clustering(&g, 2, 1).unwrap();
        assert_eq!(canonical_labels(&a.labels), canonical_labels(&truth));
        let one = spectral_clustering(&g, 1, 1).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn spectral_recovers_noisy_blocks() {
        for seed in 0..20 {
            let (g, truth) = block_graph(&[15, 20, 25], 0.3, seed);
            let a = spectral_clustering(&g, 3, seed).unwrap();
            assert!(agreement(&a.labels, &truth) >= 0.95, "seed {seed}");
        }
    }

    #[test]
    fn spectral_matches_hard_assignment_on_ideal_blocks() {
        let gamma = posterior(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        let g = similarity_matrix(&gamma);
        let hard = hard_assign(&gamma);
        let spec = spectral_clustering(&g, 3, 0).unwrap();
        assert_eq!(canonical_labels(&hard.labels), spec.labels);
    }

    #[test]
    fn layout_is_deterministic_and_finite() {
        let (g, _) = block_graph(&[5, 5], 0.1, 3);
        let cfg = LayoutConfig { seed: 4, ..Default::default() };
        let a = fr_layout(&g, &cfg).unwrap();
        let b = fr_layout(&g, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.coords.iter().flatten().all(|x| x.is_finite() && (0.0..=1.0).contains(x)));
    }

    #[test]
    fn repulsion_only_separates_nodes() {
        let g = from_weights(Matrix::zeros(8, 8));
        let l = fr_layout(&g, &LayoutConfig::default()).unwrap();
        for i in 0..8 {
            for j in i + 1..8 {
                assert!(sq_dist(&l.coords[i], &l.coords[j]) > 0.0);
            }
        }
    }

    #[test]
    fn an_edge_pulls_two_nodes_together() {
        let mut joined = Matrix::zeros(2, 2);
        joined.set(0, 1, 1.0);
        joined.set(1, 0, 1.0);
        let joined = from_weights(joined);
        let apart = from_weights(Matrix::zeros(2, 2));
        let (mut with, mut without) = (0.0, 0.0);
        for seed in 0..30 {
            let cfg = LayoutConfig {
                seed,
                normalize: false,
                ..Default::default()
            };
            let a = fr_layout(&joined, &cfg).unwrap();
            let b = fr_layout(&apart, &cfg).unwrap();
            with += sq_dist(&a.coords[0], &a.coords[1]).sqrt();
            without += sq_dist(&b.coords[0], &b.coords[1]).sqrt();
        }
        assert!(with < without);
    }

    fn small_document() -> GraphDocument {
        let gamma = posterior(&[&[1.0, 0.0], &[0.9, 0.1], &[0.0, 1.0]]);
        let g = threshold_edges(&similarity_matrix(&gamma), 0.05).unwrap();
        let hard = hard_assign(&gamma);
        let layout = fr_layout(&g, &LayoutConfig::default()).unwrap();
        let support = SupportSet::new(2, vec![], vec![0, 1], vec![]).unwrap();
        GraphDocument::new(&g, &hard, &layout, Some((&hard, &support))).unwrap()
    }

    #[test]
    fn json_round_trip() {
        let doc = small_document();
        let back = GraphDocument::from_json(&doc.render(ExportFormat::Json)).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn graphml_is_well_formed() {
        let doc = small_document();
        let text = doc.render(ExportFormat::GraphMl);
        let xml = roxmltree::Document::parse(&text).unwrap();
        let ns = "http://graphml.graphdrawing.org/xmlns";
        assert_eq!(xml.root_element().tag_name().name(), "graphml");
        assert_eq!(xml.root_element().tag_name().namespace(), Some(ns));
        let nodes = xml.descendants().filter(|n| n.has_tag_name((ns, "node"))).count();
        let edges = xml.descendants().filter(|n| n.has_tag_name((ns, "edge"))).count();
        assert_eq!((nodes, edges), (3, doc.edges.len()));
        // every data key is declared
        let keys: Vec<&str> = xml.descendants().filter(|n| n.has_tag_name((ns, "key"))).filter_map(|n| n.attribute("id")).collect();
        for d in xml.descendants().filter(|n| n.has_tag_name((ns, "data"))) {
            assert!(keys.contains(&d.attribute("key").unwrap()));
        }
    }

    #[test]
    fn dot_lists_surviving_edges() {
        let doc = small_document();
        let text = doc.render(ExportFormat::Dot);
        assert_eq!(text.matches(" -- ").count(), doc.edges.len());
        assert_eq!(doc.edges.len(), 2); // w01 = 0.9, w12 = 0.1 survive; w02 = 0 does not
    }

    #[test]
    fn format_parsing() {
        assert_eq!("GraphML".parse::<ExportFormat>().unwrap(), ExportFormat::GraphMl);
        assert!(matches!("svg".parse::<ExportFormat>(), Err(GraphError::UnsupportedFormat(_))));
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric_and_bounded(raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 2..12)) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            }).collect();
            let gamma = PosteriorMatrix::new(Matrix::from_rows(&rows).unwrap()).unwrap();
            let g = similarity_matrix(&gamma);
            for i in 0..g.n() {
                prop_assert!(g.self_similarity[i] <= 1.0);
                for j in 0..g.n() {
                    prop_assert_eq!(g.weight(i, j), g.weight(j, i));
                    prop_assert!((0.0..=1.0).contains(&g.weight(i, j)));
                }
            }
        }

        #[test]
        fn permutation_equivariance(raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 3..10), shift in 1usize..9) {
            let rows: Vec<Vec<f64>> = raw.iter().map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            }).collect();
            let n = rows.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
            let a = PosteriorMatrix::new(Matrix::from_rows(&rows).unwrap()).unwrap();
            let b = PosteriorMatrix::new(Matrix::from_rows(&permuted).unwrap()).unwrap();
            let (ga, gb) = (similarity_matrix(&a), similarity_matrix(&b));
            let (ha, hb) = (hard_assign(&a), hard_assign(&b));
            for i in 0..n {
                prop_assert_eq!(hb.labels[i], ha.labels[perm[i]]);
                for j in 0..n {
                    prop_assert!((gb.weight(i, j) - ga.weight(perm[i], perm[j])).abs() < 1e-15);
                }
            }
        }
    }
}
