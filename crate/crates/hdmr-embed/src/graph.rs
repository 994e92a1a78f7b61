//! Supervised binary affinity graphs and their Laplacians.
//!
//! Samples are vertices; an (undirected, unit-weight) edge joins `i` and
//! `j` only when both carry the same class label and one of them is among
//! the other's `k` nearest same-class neighbors in standardized feature
//! space. The Laplacian `L = D - W` of such a graph is positive
//! semi-definite, has zero row sums, and satisfies the pairwise identity
//! `v' L v = 1/2 * sum_ij W_ij (v_i - v_j)^2`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Per-feature standardization statistics (zero mean, unit variance).
/// Constant features keep a unit scale so they pass through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let m = x.nrows() as f64;
        let mean = x.sum_axis(Axis(0)) / m;
        let mut std = Array1::zeros(x.ncols());
        for j in 0..x.ncols() {
            let mu = mean[j];
            let var = x
                .column(j)
                .iter()
                .map(|&v| (v - mu) * (v - mu))
                .sum::<f64>()
                / m;
            std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "expected {} features, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for j in 0..out.ncols() {
            let (mu, sd) = (self.mean[j], self.std[j]);
            out.column_mut(j).mapv_inplace(|v| (v - mu) / sd);
        }
        Ok(out)
    }
}

/// Symmetric binary affinity graph stored as sorted adjacency lists.
#[derive(Debug, Clone)]
pub struct AffinityGraph {
    neighbors: Vec<Vec<usize>>,
    k: usize,
}

/// Dense Laplacian `L = D - W` together with the degree diagonal.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub l: Array2<f64>,
    pub d: Array1<f64>,
}

impl AffinityGraph {
    /// Build a graph from an explicit undirected edge list. Self-loops are
    /// rejected; duplicate edges collapse to one.
    pub fn from_edges(m: usize, edges: &[(usize, usize)], k: usize) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); m];
        for &(i, j) in edges {
            if i >= m || j >= m {
                return Err(Error::Shape(format!(
                    "edge ({i}, {j}) out of bounds for {m} vertices"
                )));
            }
            if i == j {
                return Err(Error::Data(format!("self-loop at vertex {i}")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for adj in &mut neighbors {
            adj.sort_unstable();
            adj.dedup();
        }
        Ok(Self { neighbors, k })
    }

    /// Number of vertices.
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degrees(&self) -> Array1<f64> {
        Array1::from_iter(self.neighbors.iter().map(|adj| adj.len() as f64))
    }

    /// Dense 0/1 weight matrix; intended for small graphs and tests.
    pub fn to_dense(&self) -> Array2<f64> {
        let m = self.len();
        let mut w = Array2::zeros((m, m));
        for (i, adj) in self.neighbors.iter().enumerate() {
            for &j in adj {
                w[[i, j]] = 1.0;
            }
        }
        w
    }

    /// Number of connected components (union-find).
    pub fn n_components(&self) -> usize {
        let m = self.len();
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for (i, adj) in self.neighbors.iter().enumerate() {
            for &j in adj {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
        (0..m).filter(|&i| find(&mut parent, i) == i).count()
    }
}

/// Connect every sample to its `k` nearest same-class neighbors by
/// Euclidean distance on standardized features, then symmetrize with a
/// logical OR. Distance ties break toward the lower sample index.
pub fn build_supervised_affinity(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    k: usize,
) -> Result<AffinityGraph> {
    let m = x.nrows();
    if labels.len() != m {
        return Err(Error::Shape(format!(
            "{} labels for {} samples",
            labels.len(),
            m
        )));
    }
    if k < 1 {
        return Err(Error::Parameter(
            "neighborhood size k must be at least 1".into(),
        ));
    }

    // Group sample indices by class and enforce the per-class size bounds.
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, &lab) in labels.iter().enumerate() {
        let c = classes.binary_search(&lab).expect("label present");
        members[c].push(i);
    }
    for (c, idx) in classes.iter().zip(&members) {
        if idx.len() < 2 {
            return Err(Error::Data(format!(
                "class {c} has {} sample(s); need at least 2 to build a graph",
                idx.len()
            )));
        }
        if k > idx.len() - 1 {
            return Err(Error::Parameter(format!(
                "k = {k} exceeds the {} same-class neighbors available in class {c}",
                idx.len() - 1
            )));
        }
    }

    let z = Standardizer::fit(x).apply(x)?;

    // k nearest same-class neighbors per sample, selected independently
    // and then OR-symmetrized.
    let selected: Vec<Vec<usize>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let c = classes.binary_search(&labels[i]).expect("label present");
            let zi = z.row(i);
            let mut cand: Vec<(f64, usize)> = members[c]
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let d2 = zi
                        .iter()
                        .zip(z.row(j).iter())
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum::<f64>();
                    (d2, j)
                })
                .collect();
            cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect();

    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (i, sel) in selected.iter().enumerate() {
        for &j in sel {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
    }
    for adj in &mut neighbors {
        adj.sort_unstable();
        adj.dedup();
    }
    Ok(AffinityGraph { neighbors, k })
}

/// Degree diagonal and dense Laplacian `L = D - W`.
pub fn laplacian(graph: &AffinityGraph) -> LaplacianPair {
    let m = graph.len();
    let d = graph.degrees();
    let mut l = Array2::zeros((m, m));
    for i in 0..m {
        l[[i, i]] = d[i];
        for &j in graph.neighbors(i) {
            l[[i, j]] = -1.0;
        }
    }
    LaplacianPair { l, d }
}
