//! Labeled attributed graphs, datasets and client partitions.

mod split;
mod synthetic;
mod tu;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use split::{noniid_label_split, standardize_attributes, train_test_split};
pub use synthetic::{generate_triangles_dataset, TRIANGLE_CLASSES};
pub use tu::{parse_tu_dataset, write_tu_dataset};

/// Width of the degree one-hot encoding; degrees at or above `DEGREE_CAP - 1`
/// share the last slot.
pub const DEGREE_CAP: usize = 16;

/// An undirected graph with node features and a class label.
///
/// Edges are kept as a sorted set of `(u, v)` pairs with `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Array2<f64>,
    label: usize,
}

impl Graph {
    /// Builds a graph, normalizing the edge list (orientation, order,
    /// duplicates). Self-loops and out-of-range endpoints are rejected.
    pub fn new(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Array2<f64>,
        label: usize,
    ) -> Result<Self> {
        if features.nrows() != n_nodes {
            return Err(Error::Contract(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                n_nodes
            )));
        }
        let mut list = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::Contract(format!("self-loop on node {u}")));
            }
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::Contract(format!(
                    "edge ({u}, {v}) out of range for {n_nodes} nodes"
                )));
            }
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        list.dedup();
        Ok(Graph {
            n_nodes,
            edges: list,
            features,
            label,
        })
    }

    /// Graph whose features are the degree one-hot encoding of its own edges.
    pub fn with_degree_features(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        label: usize,
    ) -> Result<Self> {
        Graph::new(n_nodes, edges, Array2::zeros((n_nodes, DEGREE_CAP)), label)?.with_degree_columns()
    }

    /// Overwrites the leading `DEGREE_CAP` feature columns with the degree
    /// one-hot encoding of the current edges.
    pub fn with_degree_columns(mut self) -> Result<Self> {
        if self.features.ncols() < DEGREE_CAP {
            return Err(Error::Contract(format!(
                "{} feature columns cannot hold a degree encoding of width {DEGREE_CAP}",
                self.features.ncols()
            )));
        }
        self.features
            .slice_mut(ndarray::s![.., ..DEGREE_CAP])
            .assign(&degree_one_hot(self.n_nodes, &self.edges));
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    /// Sorted neighbor lists.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    /// Same nodes and features, new edge set. Features are kept as they are,
    /// including degree columns.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Graph::new(self.n_nodes, edges, self.features.clone(), self.label)
    }

    pub(crate) fn features_mut(&mut self) -> &mut Array2<f64> {
        &mut self.features
    }
}

pub(crate) fn degree_one_hot(n_nodes: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut deg = vec![0usize; n_nodes];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    let mut x = Array2::zeros((n_nodes, DEGREE_CAP));
    for (i, d) in deg.into_iter().enumerate() {
        x[[i, d.min(DEGREE_CAP - 1)]] = 1.0;
    }
    x
}

/// How the leading feature columns were produced. Needed to write a dataset
/// back to disk in a form that parses to the same features.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeEncoding {
    /// One-hot over these sorted distinct node-label values.
    NodeLabels(Vec<i64>),
    /// Degree one-hot of width [`DEGREE_CAP`].
    Degree,
}

/// A collection of graphs sharing a feature space and label set.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    graphs: Vec<Graph>,
    n_classes: usize,
    feature_dim: usize,
    encoding: NodeEncoding,
    /// Number of trailing continuous attribute columns.
    attribute_dims: usize,
}

impl GraphDataset {
    pub fn new(graphs: Vec<Graph>, n_classes: usize, encoding: NodeEncoding, attribute_dims: usize) -> Result<Self> {
        let leading = match &encoding {
            NodeEncoding::NodeLabels(values) => values.len(),
            NodeEncoding::Degree => DEGREE_CAP,
        };
        let feature_dim = leading + attribute_dims;
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::Contract(format!(
                    "graph {i} has feature dim {}, dataset expects {feature_dim}",
                    g.feature_dim()
                )));
            }
            if g.label() >= n_classes {
                return Err(Error::Contract(format!(
                    "graph {i} has label {} but dataset has {n_classes} classes",
                    g.label()
                )));
            }
        }
        Ok(GraphDataset {
            graphs,
            n_classes,
            feature_dim,
            encoding,
            attribute_dims,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn encoding(&self) -> &NodeEncoding {
        &self.encoding
    }

    pub fn attribute_dims(&self) -> usize {
        self.attribute_dims
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for g in &self.graphs {
            counts[g.label()] += 1;
        }
        counts
    }

    pub(crate) fn graphs_mut(&mut self) -> &mut [Graph] {
        &mut self.graphs
    }
}

/// Disjoint assignment of dataset indices to clients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientPartition {
    parts: Vec<Vec<usize>>,
}

impl ClientPartition {
    pub fn new(parts: Vec<Vec<usize>>) -> Self {
        ClientPartition { parts }
    }

    pub fn parts(&self) -> &[Vec<usize>] {
        &self.parts
    }

    pub fn n_clients(&self) -> usize {
        self.parts.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.parts.iter().map(Vec::len).collect()
    }
}

/// Number of 3-cycles, counted once per unordered node triple.
pub fn count_triangles(g: &Graph) -> usize {
    let adj = g.adjacency_lists();
    let mut count = 0;
    for &(u, v) in g.edges() {
        // common neighbors w > v close a triangle u < v < w exactly once
        let (a, b) = (&adj[u], &adj[v]);
        let (mut i, mut j) = (a.partition_point(|&w| w <= v), b.partition_point(|&w| w <= v));
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
    }
    count
}

/// Mean node count over the given graphs.
pub fn avg_node_count<'a>(graphs: impl IntoIterator<Item = &'a Graph>) -> Result<f64> {
    let (mut n, mut total) = (0usize, 0usize);
    for g in graphs {
        n += 1;
        total += g.n_nodes();
    }
    if n == 0 {
        return Err(Error::Contract("average node count of an empty dataset".into()));
    }
    Ok(total as f64 / n as f64)
}
