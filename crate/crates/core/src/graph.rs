//! Graph container, symmetric normalization and node splits.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, purpose};

/// One client's private attributed graph.
///
/// Edges are kept canonical: undirected, deduplicated, no self-loops, each
/// edge stored once as `(src, dst)` with `src < dst`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    pub name: String,
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    pub features: Array2<f64>,
    /// Per-node class, `None` for unlabeled nodes.
    pub labels: Option<Vec<Option<usize>>>,
    pub num_classes: usize,
    pub split: Option<Split>,
}

impl GraphBundle {
    pub fn new(
        name: impl Into<String>,
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Array2<f64>,
    ) -> Result<Self> {
        if features.nrows() != num_nodes {
            return Err(Error::Shape(format!(
                "features have {} rows, graph has {} nodes",
                features.nrows(),
                num_nodes
            )));
        }
        let edges = canonicalize_edges(num_nodes, edges)?;
        Ok(Self {
            name: name.into(),
            num_nodes,
            edges,
            features,
            labels: None,
            num_classes: 0,
            split: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<Option<usize>>, num_classes: usize) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::Shape(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        for (node, l) in labels.iter().enumerate() {
            if let Some(label) = *l {
                if label >= num_classes {
                    return Err(Error::LabelOutOfRange {
                        node,
                        label,
                        num_classes,
                    });
                }
            }
        }
        self.labels = Some(labels);
        self.num_classes = num_classes;
        Ok(self)
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        split.validate(self.num_nodes)?;
        self.split = Some(split);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Canonical undirected edges, `src < dst`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn label(&self, node: usize) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l[node])
    }

    pub fn num_labeled(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|x| x.is_some()).count())
    }

    /// Keeps only the ids that carry a label.
    pub fn labeled_subset(&self, ids: &[usize]) -> Vec<usize> {
        ids.iter().copied().filter(|&i| self.label(i).is_some()).collect()
    }
}

fn canonicalize_edges(
    num_nodes: usize,
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (src, dst) in edges {
        if src >= num_nodes || dst >= num_nodes {
            return Err(Error::EdgeOutOfRange {
                src,
                dst,
                num_nodes,
            });
        }
        if src != dst {
            out.push((src.min(dst), src.max(dst)));
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Disjoint train/validation/test node index lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    #[serde(rename = "train")]
    pub train_ids: Vec<usize>,
    #[serde(rename = "val")]
    pub val_ids: Vec<usize>,
    #[serde(rename = "test")]
    pub test_ids: Vec<usize>,
}

impl Split {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let mut seen = vec![false; num_nodes];
        for &i in self
            .train_ids
            .iter()
            .chain(&self.val_ids)
            .chain(&self.test_ids)
        {
            if i >= num_nodes {
                return Err(Error::InvalidSplit(format!(
                    "index {i} outside [0, {num_nodes})"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidSplit(format!("index {i} appears twice")));
            }
        }
        Ok(())
    }
}

/// Random split with rounded cut points; the remainder goes to test.
///
/// Each part is forced to hold at least one node.
pub fn make_split(bundle: &GraphBundle, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    split_nodes(bundle.num_nodes(), fractions, seed)
}

pub fn split_nodes(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (train, val, test) = fractions;
    if !(train > 0.0 && val > 0.0 && test > 0.0) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSplit(format!(
            "fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    if n < 3 {
        return Err(Error::TooSmall(format!("cannot split {n} nodes three ways")));
    }
    let mut n_train = ((n as f64) * train).round() as usize;
    let mut n_val = ((n as f64) * val).round() as usize;
    n_train = n_train.clamp(1, n - 2);
    n_val = n_val.clamp(1, n - 1 - n_train);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::stream(seed, &[purpose::SPLIT]));
    let test_ids = perm.split_off(n_train + n_val);
    let val_ids = perm.split_off(n_train);
    Ok(Split {
        train_ids: perm,
        val_ids,
        test_ids,
    })
}

/// `D^-1/2 (A + I) D^-1/2` in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

pub fn normalize_adjacency(bundle: &GraphBundle) -> NormalizedAdjacency {
    NormalizedAdjacency::from_canonical_edges(bundle.num_nodes(), bundle.edges())
}

impl NormalizedAdjacency {
    /// Builds from arbitrary edges (validated and canonicalized first).
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let edges = canonicalize_edges(n, edges)?;
        Ok(Self::from_canonical_edges(n, &edges))
    }

    /// `edges` must already be canonical (`src < dst`, in range, unique).
    pub(crate) fn from_canonical_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut neighbors: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(a, b) in edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        let deg: Vec<f64> = neighbors.iter().map(|nb| nb.len() as f64).collect();

        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(n + 2 * edges.len());
        let mut values = Vec::with_capacity(n + 2 * edges.len());
        indptr.push(0);
        for (i, nb) in neighbors.iter_mut().enumerate() {
            nb.sort_unstable();
            for &j in nb.iter() {
                indices.push(j);
                // d_i d_j is symmetric, so (i,j) and (j,i) are bit-identical
                values.push(1.0 / (deg[i] * deg[j]).sqrt());
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// Sparse-dense product `Â · m`. Since `Â` is symmetric this is also
    /// the transpose product used in backward passes.
    pub fn matmul(&self, m: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if m.nrows() != self.n {
            return Err(Error::Shape(format!(
                "adjacency is {}x{}, operand has {} rows",
                self.n,
                self.n,
                m.nrows()
            )));
        }
        let mut out = Array2::zeros((self.n, m.ncols()));
        for (i, mut out_row) in out.rows_mut().into_iter().enumerate() {
            for (j, v) in self.row(i) {
                out_row.scaled_add(v, &m.row(j));
            }
        }
        Ok(out)
    }
}
