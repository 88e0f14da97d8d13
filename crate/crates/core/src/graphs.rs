//! Model-lineage and instance-similarity graphs and their Laplacians.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{InstanceRecord, ModelRecord};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Smaller node index.
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected weighted graph. Edges are stored once, with `a < b`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_ids: Vec<String>,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn edgeless(node_ids: Vec<String>) -> Self {
        Self {
            node_ids,
            edges: Vec::new(),
        }
    }

    /// Builds a graph from unit-weight pairs; self-loops are rejected and
    /// duplicates (in either orientation) collapse into one edge.
    pub fn from_pairs(node_ids: Vec<String>, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let weighted = pairs.into_iter().map(|(a, b)| (a, b, 1.0));
        Self::from_weighted(node_ids, weighted)
    }

    pub fn from_weighted(
        node_ids: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let n = node_ids.len();
        let mut set: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in edges {
            for idx in [a, b] {
                if idx >= n {
                    return Err(Error::IndexOutOfRange {
                        kind: "graph node",
                        index: idx,
                        len: n,
                    });
                }
            }
            if a == b {
                return Err(Error::InvalidRecord(format!("self-loop on node {a}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidRecord(format!("edge weight {w} must be finite and nonnegative")));
            }
            set.entry((a.min(b), a.max(b))).or_insert(w);
        }
        let edges = set
            .into_iter()
            .map(|((a, b), weight)| Edge { a, b, weight })
            .collect();
        Ok(Self { node_ids, edges })
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.a, e.b)).collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|e| (e.a, e.b).cmp(&key))
            .is_ok()
    }

    /// Unweighted degree per node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n_nodes()];
        for e in &self.edges {
            d[e.a] += 1;
            d[e.b] += 1;
        }
        d
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        adj.iter_mut().for_each(|v| v.sort_unstable());
        adj
    }

    /// Nodes within `hops` steps of `start`, excluding `start`, sorted.
    pub fn neighborhood(&self, start: usize, hops: usize) -> Vec<usize> {
        self.neighborhoods(hops).swap_remove(start)
    }

    pub fn neighborhoods(&self, hops: usize) -> Vec<Vec<usize>> {
        let adj = self.neighbors();
        (0..self.n_nodes())
            .map(|start| {
                let mut seen = BTreeSet::from([start]);
                let mut frontier = vec![start];
                for _ in 0..hops {
                    if frontier.is_empty() {
                        break;
                    }
                    let mut next = Vec::new();
                    for &u in &frontier {
                        for &v in &adj[u] {
                            if seen.insert(v) {
                                next.push(v);
                            }
                        }
                    }
                    frontier = next;
                }
                seen.remove(&start);
                seen.into_iter().collect()
            })
            .collect()
    }

    /// Restricts to edges whose endpoints both satisfy `keep`.
    pub fn induced(&self, keep: &[bool]) -> Self {
        Self {
            node_ids: self.node_ids.clone(),
            edges: self
                .edges
                .iter()
                .filter(|e| keep[e.a] && keep[e.b])
                .copied()
                .collect(),
        }
    }

    /// Writes `node_a,node_b,weight` rows for external plotting.
    pub fn write_edge_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("node_a,node_b,weight\n");
        for e in &self.edges {
            out.push_str(&format!(
                "{},{},{}\n",
                self.node_ids[e.a], self.node_ids[e.b], e.weight
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Outcome of lineage-graph construction.
#[derive(Debug, Clone)]
pub struct LineageGraph {
    pub graph: Graph,
    /// Parent references that did not resolve to a known model.
    pub missing_parents: usize,
}

/// Connects every model to each of its listed parents with a unit edge.
pub fn build_lineage_graph(models: &[ModelRecord]) -> LineageGraph {
    let index: HashMap<&str, usize> = models
        .iter()
        .enumerate()
        .map(|(i, m)| (m.model_id.as_str(), i))
        .collect();
    let mut missing = 0;
    let mut pairs = Vec::new();
    for (child, m) in models.iter().enumerate() {
        for p in &m.parents {
            match index.get(p.as_str()) {
                Some(&parent) if parent != child => pairs.push((parent, child)),
                Some(_) => {}
                None => missing += 1,
            }
        }
    }
    if missing > 0 {
        log::warn!("{missing} parent references point at unknown models and were skipped");
    }
    let node_ids = models.iter().map(|m| m.model_id.clone()).collect();
    let graph = Graph::from_pairs(node_ids, pairs).expect("lineage indices are in range and loop-free");
    LineageGraph {
        graph,
        missing_parents: missing,
    }
}

fn unit_embeddings(instances: &[InstanceRecord]) -> Result<Vec<Vec<f64>>> {
    let mut dim = None;
    instances
        .iter()
        .map(|inst| {
            let e = inst
                .embedding
                .as_ref()
                .ok_or_else(|| Error::MissingEmbedding(inst.instance_id.clone()))?;
            match dim {
                None => dim = Some(e.len()),
                Some(d) if d != e.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: e.len(),
                    })
                }
                _ => {}
            }
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::ZeroVector(inst.instance_id.clone()));
            }
            Ok(e.iter().map(|v| v / norm).collect())
        })
        .collect()
}

/// Directed top-`k` cosine neighbors for each instance (pre-symmetrization).
///
/// Only instances with `allowed[i]` take part when a mask is given; the
/// others get no neighbors and are never selected. Ties go to the smaller
/// instance id.
pub fn knn_neighbors(
    instances: &[InstanceRecord],
    k: usize,
    allowed: Option<&[bool]>,
) -> Result<Vec<Vec<usize>>> {
    let active: Vec<usize> = (0..instances.len())
        .filter(|&i| allowed.is_none_or(|m| m[i]))
        .collect();
    if k == 0 || k >= active.len() {
        return Err(Error::InvalidK { k, n: active.len() });
    }
    let subset: Vec<InstanceRecord> = active.iter().map(|&i| instances[i].clone()).collect();
    let unit = unit_embeddings(&subset)?;
    let ids: Vec<&str> = subset.iter().map(|i| i.instance_id.as_str()).collect();

    let rows: Vec<Vec<usize>> = (0..subset.len())
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..subset.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
                    (s, j)
                })
                .collect();
            cand.sort_by(|x, y| {
                y.0.partial_cmp(&x.0)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| ids[x.1].cmp(ids[y.1]))
            });
            cand.truncate(k);
            cand.into_iter().map(|(_, j)| active[j]).collect()
        })
        .collect();

    let mut out = vec![Vec::new(); instances.len()];
    for (pos, row) in active.iter().zip(rows) {
        out[*pos] = row;
    }
    Ok(out)
}

/// Top-`k` cosine kNN graph, symmetrized by union.
pub fn build_instance_knn_graph(instances: &[InstanceRecord], k: usize) -> Result<Graph> {
    build_instance_knn_graph_masked(instances, k, None)
}

pub fn build_instance_knn_graph_masked(
    instances: &[InstanceRecord],
    k: usize,
    allowed: Option<&[bool]>,
) -> Result<Graph> {
    let nn = knn_neighbors(instances, k, allowed)?;
    let pairs = nn
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |&j| (i, j)));
    let ids = instances.iter().map(|i| i.instance_id.clone()).collect();
    Graph::from_pairs(ids, pairs)
}

/// Adds (`fraction > 0`) or removes (`fraction < 0`) `⌊|fraction|·|E|⌋`
/// uniformly chosen edges.
pub fn perturb_lineage(g: &Graph, fraction: f64, seed: u64) -> Result<Graph> {
    if !(fraction.is_finite() && fraction.abs() <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "perturbation fraction {fraction} outside [-1, 1]"
        )));
    }
    // tolerance keeps 0.29 * 100 at 29 despite binary rounding
    let count = (fraction.abs() * g.n_edges() as f64 + 1e-9).floor() as usize;
    if count == 0 {
        return Ok(g.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if fraction < 0.0 {
        let drop: BTreeSet<usize> = index::sample(&mut rng, g.n_edges(), count).into_iter().collect();
        let edges = g
            .edges
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, e)| *e)
            .collect();
        return Ok(Graph {
            node_ids: g.node_ids.clone(),
            edges,
        });
    }
    let n = g.n_nodes();
    let existing = g.edge_set();
    let mut non_edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if !existing.contains(&(a, b)) {
                non_edges.push((a, b));
            }
        }
    }
    let take = count.min(non_edges.len());
    if take < count {
        log::warn!("only {take} non-edges available, {count} requested");
    }
    let added = index::sample(&mut rng, non_edges.len(), take)
        .into_iter()
        .map(|i| (non_edges[i].0, non_edges[i].1, 1.0));
    let all = g.edges.iter().map(|e| (e.a, e.b, e.weight)).chain(added);
    Graph::from_weighted(g.node_ids.clone(), all)
}

/// `L = D − A` in sparse adjacency form.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian<T> {
    degrees: Vec<T>,
    adjacency: Vec<Vec<(usize, T)>>,
    edges: Vec<(usize, usize, T)>,
}

impl<T: Scalar> Laplacian<T> {
    pub fn new(g: &Graph) -> Self {
        let n = g.n_nodes();
        let mut degrees = vec![T::zero(); n];
        let mut adjacency = vec![Vec::new(); n];
        let mut edges = Vec::with_capacity(g.n_edges());
        for e in g.edges() {
            let w = T::of(e.weight);
            degrees[e.a] += w;
            degrees[e.b] += w;
            adjacency[e.a].push((e.b, w));
            adjacency[e.b].push((e.a, w));
            edges.push((e.a, e.b, w));
        }
        Self {
            degrees,
            adjacency,
            edges,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self {
            degrees: vec![T::zero(); n],
            adjacency: vec![Vec::new(); n],
            edges: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.degrees.len()
    }

    pub fn degrees(&self) -> &[T] {
        &self.degrees
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, T)] {
        &self.adjacency[u]
    }

    pub fn has_edges(&self) -> bool {
        !self.edges.is_empty()
    }

    fn check_rows(&self, m: &Matrix<T>) -> Result<()> {
        if m.rows() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_nodes(),
                found: m.rows(),
            });
        }
        Ok(())
    }

    /// Row `u` of `L·M`, accumulated into `out` scaled by `scale`.
    #[inline]
    pub fn apply_row_into(&self, m: &Matrix<T>, u: usize, scale: T, out: &mut [T]) {
        let d = self.degrees[u];
        let mu = m.row(u);
        for (o, &x) in out.iter_mut().zip(mu) {
            *o += scale * d * x;
        }
        for &(v, w) in &self.adjacency[u] {
            let s = scale * w;
            for (o, &x) in out.iter_mut().zip(m.row(v)) {
                *o -= s * x;
            }
        }
    }

    /// `L·M`.
    pub fn apply(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_rows(m)?;
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for u in 0..m.rows() {
            self.apply_row_into(m, u, T::one(), out.row_mut(u));
        }
        Ok(out)
    }

    /// `Tr(Mᵀ L M) = Σ_u m_u · (L M)_u`.
    pub fn quadratic(&self, m: &Matrix<T>) -> Result<T> {
        let lm = self.apply(m)?;
        let mut acc = T::zero();
        for u in 0..m.rows() {
            acc += crate::scalar::dot(m.row(u), lm.row(u));
        }
        Ok(acc)
    }

    /// `Σ_{(u,v) ∈ E} w_uv ‖m_u − m_v‖²`, one term per undirected edge.
    pub fn edge_sum_quadratic(&self, m: &Matrix<T>) -> Result<T> {
        self.check_rows(m)?;
        let mut acc = T::zero();
        for &(a, b, w) in &self.edges {
            let mut d2 = T::zero();
            for (x, y) in m.row(a).iter().zip(m.row(b)) {
                let diff = *x - *y;
                d2 += diff * diff;
            }
            acc += w * d2;
        }
        Ok(acc)
    }

    /// Keeps only edges whose endpoints both satisfy `keep`.
    pub fn restricted(&self, keep: &[bool]) -> Self {
        let mut out = Self::empty(self.n_nodes());
        for &(a, b, w) in &self.edges {
            if keep[a] && keep[b] {
                out.degrees[a] += w;
                out.degrees[b] += w;
                out.adjacency[a].push((b, w));
                out.adjacency[b].push((a, w));
                out.edges.push((a, b, w));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix<T> {
        let n = self.n_nodes();
        let mut out = Matrix::zeros(n, n);
        for u in 0..n {
            out.set(u, u, self.degrees[u]);
            for &(v, w) in &self.adjacency[u] {
                out.set(u, v, out.get(u, v) - w);
            }
        }
        out
    }
}

pub fn laplacian<T: Scalar>(g: &Graph) -> Laplacian<T> {
    Laplacian::new(g)
}

pub fn laplacian_quadratic<T: Scalar>(l: &Laplacian<T>, m: &Matrix<T>) -> Result<T> {
    l.quadratic(m)
}
