//! GCN and GraphSAGE graph classifiers with hand-derived backpropagation.
//!
//! A minibatch is packed into one block-diagonal graph so every layer is a
//! single sparse propagation followed by a single dense product. Hidden
//! layers use ReLU; the classification head is linear and feeds a softmax
//! cross-entropy loss averaged over the batch.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adjacency::{neighbor_mean, normalize_adjacency, SparseOperator};
use super::params::{Layout, ParamVector, Segment};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Sage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Mean,
    Sum,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Sage => "sage",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(ModelKind::Gcn),
            "sage" | "graphsage" => Ok(ModelKind::Sage),
            _ => Err(Error::Config(format!("unknown model kind {s:?} (gcn, sage)"))),
        }
    }
}

impl fmt::Display for Readout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Readout::Mean => "mean",
            Readout::Sum => "sum",
        })
    }
}

/// Architecture of a graph classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Input width followed by one width per message-passing layer.
    pub layer_dims: Vec<usize>,
    pub n_classes: usize,
    pub readout: Readout,
    layout: Arc<Layout>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, layer_dims: Vec<usize>, n_classes: usize, readout: Readout) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config(
                "a model needs an input width and at least one layer".into(),
            ));
        }
        if layer_dims.contains(&0) || n_classes == 0 {
            return Err(Error::Config("layer widths and class count must be positive".into()));
        }
        let fan = if kind == ModelKind::Sage { 2 } else { 1 };
        let mut segments = Vec::new();
        for (k, w) in layer_dims.windows(2).enumerate() {
            segments.push(Segment::new(format!("layer{k}.weight"), vec![fan * w[0], w[1]]));
            segments.push(Segment::new(format!("layer{k}.bias"), vec![w[1]]));
        }
        let last = *layer_dims.last().unwrap();
        segments.push(Segment::new("head.weight", vec![last, n_classes]));
        segments.push(Segment::new("head.bias", vec![n_classes]));
        Ok(ModelSpec {
            kind,
            layer_dims,
            n_classes,
            readout,
            layout: Arc::new(Layout::new(segments)),
        })
    }

    /// `layers` message-passing layers of width `hidden`.
    pub fn uniform(
        kind: ModelKind,
        input: usize,
        hidden: usize,
        layers: usize,
        n_classes: usize,
        readout: Readout,
    ) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(hidden, layers));
        Self::new(kind, dims, n_classes, readout)
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn head_index(&self) -> usize {
        2 * self.n_layers()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = seed::stream_rng(seed, Stream::ModelInit, &[]);
        let mut p = ParamVector::zeros(self.layout.clone());
        for i in 0..self.layout.segments().len() {
            let shape = &self.layout.segments()[i].shape;
            if shape.len() != 2 {
                continue;
            }
            let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
            for v in p.matrix_mut(i).iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        p
    }

    pub(crate) fn check(&self, params: &ParamVector) -> Result<()> {
        if Arc::ptr_eq(params.layout(), &self.layout) || **params.layout() == *self.layout {
            Ok(())
        } else {
            Err(Error::Contract("parameter layout does not match the model spec".into()))
        }
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.feature_dim() != self.input_dim() {
            return Err(Error::Contract(format!(
                "graph feature dim {} but model expects {}",
                g.feature_dim(),
                self.input_dim()
            )));
        }
        if g.n_nodes() == 0 {
            return Err(Error::Contract("empty graph".into()));
        }
        Ok(())
    }

    fn propagation(&self, g: &Graph) -> SparseOperator {
        match self.kind {
            ModelKind::Gcn => normalize_adjacency(g),
            ModelKind::Sage => neighbor_mean(g),
        }
    }
}

/// Several graphs laid out as one disconnected graph.
struct PackedBatch {
    offsets: Vec<usize>,
    features: Array2<f64>,
    operator: SparseOperator,
}

impl PackedBatch {
    fn pack(spec: &ModelSpec, graphs: &[&Graph]) -> Result<Self> {
        let mut offsets = Vec::with_capacity(graphs.len() + 1);
        offsets.push(0);
        for g in graphs {
            spec.check_graph(g)?;
            offsets.push(offsets.last().unwrap() + g.n_nodes());
        }
        let total = *offsets.last().unwrap();
        let mut features = Array2::zeros((total, spec.input_dim()));
        for (g, w) in graphs.iter().zip(offsets.windows(2)) {
            features.slice_mut(s![w[0]..w[1], ..]).assign(g.features());
        }
        let ops: Vec<SparseOperator> = graphs.iter().map(|g| spec.propagation(g)).collect();
        Ok(PackedBatch {
            offsets,
            features,
            operator: SparseOperator::block_diagonal(&ops),
        })
    }
}

/// Intermediate values of a forward pass over one or more graphs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Node embeddings `h^(0) .. h^(L)`, rows stacked over the batch.
    pub embeddings: Vec<Array2<f64>>,
    /// Matrix multiplied by each layer's weight (propagated input, or the
    /// self/neighbor concatenation for SAGE).
    pub layer_inputs: Vec<Array2<f64>>,
    pub pre_activations: Vec<Array2<f64>>,
    /// One pooled row per graph.
    pub graph_embeddings: Array2<f64>,
    /// One row of class scores per graph.
    pub logits: Array2<f64>,
    /// Propagation operator used by every layer (block-diagonal for batches).
    pub operator: SparseOperator,
    /// Node-row boundaries of each graph.
    pub offsets: Vec<usize>,
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

fn forward_packed(spec: &ModelSpec, params: &ParamVector, batch: PackedBatch) -> ForwardTrace {
    let mut h = batch.features;
    let (mut embeddings, mut layer_inputs, mut pre) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..spec.n_layers() {
        let input = match spec.kind {
            ModelKind::Gcn => batch.operator.apply(h.view()),
            ModelKind::Sage => {
                let nbr = batch.operator.apply(h.view());
                concatenate(Axis(1), &[h.view(), nbr.view()]).expect("row counts agree")
            }
        };
        let mut z = input.dot(&params.matrix(2 * k));
        z += &params.vector(2 * k + 1);
        let next = relu(&z);
        embeddings.push(h);
        layer_inputs.push(input);
        pre.push(z);
        h = next;
    }

    let width = h.ncols();
    let mut pooled = Array2::zeros((batch.offsets.len() - 1, width));
    for (b, w) in batch.offsets.windows(2).enumerate() {
        let rows = h.slice(s![w[0]..w[1], ..]);
        let mut sum = rows.sum_axis(Axis(0));
        if spec.readout == Readout::Mean {
            sum /= (w[1] - w[0]) as f64;
        }
        pooled.row_mut(b).assign(&sum);
    }
    embeddings.push(h);

    let head = spec.head_index();
    let mut logits = pooled.dot(&params.matrix(head));
    logits += &params.vector(head + 1);
    ForwardTrace {
        embeddings,
        layer_inputs,
        pre_activations: pre,
        graph_embeddings: pooled,
        logits,
        operator: batch.operator,
        offsets: batch.offsets,
    }
}

/// Forward pass for a single graph.
pub fn forward(spec: &ModelSpec, params: &ParamVector, g: &Graph) -> Result<ForwardTrace> {
    forward_batch(spec, params, &[g])
}

pub fn forward_batch(spec: &ModelSpec, params: &ParamVector, graphs: &[&Graph]) -> Result<ForwardTrace> {
    spec.check(params)?;
    let batch = PackedBatch::pack(spec, graphs)?;
    Ok(forward_packed(spec, params, batch))
}

/// Class scores, one row per graph, evaluated in chunks.
pub fn logits(spec: &ModelSpec, params: &ParamVector, graphs: &[&Graph]) -> Result<Array2<f64>> {
    const CHUNK: usize = 64;
    spec.check(params)?;
    let mut rows = Vec::with_capacity(graphs.len());
    for chunk in graphs.chunks(CHUNK) {
        let trace = forward_packed(spec, params, PackedBatch::pack(spec, chunk)?);
        rows.push(trace.logits);
    }
    if rows.is_empty() {
        return Ok(Array2::zeros((0, spec.n_classes)));
    }
    let views: Vec<ArrayView2<'_, f64>> = rows.iter().map(|r| r.view()).collect();
    Ok(concatenate(Axis(0), &views).expect("equal widths"))
}

/// Index of the largest score; ties go to the lowest class index.
pub fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(spec: &ModelSpec, params: &ParamVector, graphs: &[&Graph]) -> Result<Vec<usize>> {
    let scores = logits(spec, params, graphs)?;
    Ok(scores.rows().into_iter().map(argmax).collect())
}

/// Mean softmax cross-entropy of `logits` against `labels`, and its gradient
/// with respect to the logits.
fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (b, row) in logits.rows().into_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let exp: Array1<f64> = row.mapv(|v| (v - max).exp());
        let total = exp.sum();
        loss += total.ln() + max - row[labels[b]];
        let mut g = grad.row_mut(b);
        g.assign(&(exp / total));
        g[labels[b]] -= 1.0;
    }
    grad /= n;
    (loss / n, grad)
}

/// Batch-mean cross-entropy and its exact gradient.
pub fn loss_and_grad(spec: &ModelSpec, params: &ParamVector, batch: &[&Graph]) -> Result<(f64, ParamVector)> {
    if batch.is_empty() {
        return Err(Error::Contract("loss over an empty batch".into()));
    }
    for g in batch {
        if g.label() >= spec.n_classes {
            return Err(Error::Contract(format!("label {} out of range", g.label())));
        }
    }
    let trace = forward_batch(spec, params, batch)?;
    let labels: Vec<usize> = batch.iter().map(|g| g.label()).collect();
    let (loss, d_logits) = cross_entropy(&trace.logits, &labels);
    let grad = backward(spec, params, &trace, &d_logits);
    Ok((loss, grad))
}

fn backward(spec: &ModelSpec, params: &ParamVector, trace: &ForwardTrace, d_logits: &Array2<f64>) -> ParamVector {
    let mut grad = ParamVector::zeros(params.layout().clone());
    let head = spec.head_index();
    grad.matrix_mut(head).assign(&trace.graph_embeddings.t().dot(d_logits));
    grad.matrix_mut(head + 1).row_mut(0).assign(&d_logits.sum_axis(Axis(0)));

    let d_pooled = d_logits.dot(&params.matrix(head).t());
    let last = trace.embeddings.last().unwrap();
    let mut d_h = Array2::zeros(last.raw_dim());
    for (b, w) in trace.offsets.windows(2).enumerate() {
        let mut row = d_pooled.row(b).to_owned();
        if spec.readout == Readout::Mean {
            row /= (w[1] - w[0]) as f64;
        }
        for r in w[0]..w[1] {
            d_h.row_mut(r).assign(&row);
        }
    }

    for k in (0..spec.n_layers()).rev() {
        let mut d_z = d_h;
        d_z.zip_mut_with(&trace.pre_activations[k], |d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        grad.matrix_mut(2 * k).assign(&trace.layer_inputs[k].t().dot(&d_z));
        grad.matrix_mut(2 * k + 1).row_mut(0).assign(&d_z.sum_axis(Axis(0)));
        if k == 0 {
            break;
        }
        let d_input = d_z.dot(&params.matrix(2 * k).t());
        d_h = match spec.kind {
            ModelKind::Gcn => trace.operator.apply_transpose(d_input.view()),
            ModelKind::Sage => {
                let width = spec.layer_dims[k];
                let mut d_self = d_input.slice(s![.., ..width]).to_owned();
                d_self += &trace.operator.apply_transpose(d_input.slice(s![.., width..]));
                d_self
            }
        };
    }
    grad
}

/// Mean loss of `params` over `graphs` without gradients.
pub fn mean_loss(spec: &ModelSpec, params: &ParamVector, graphs: &[&Graph]) -> Result<f64> {
    let scores = logits(spec, params, graphs)?;
    let labels: Vec<usize> = graphs.iter().map(|g| g.label()).collect();
    Ok(cross_entropy(&scores, &labels).0)
}

impl ForwardTrace {
    pub fn n_graphs(&self) -> usize {
        self.offsets.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize, label: usize) -> Graph {
        Graph::with_degree_features(n, (1..n).map(|v| (v - 1, v)), label).unwrap()
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let spec = ModelSpec::uniform(ModelKind::Gcn, 16, 8, 2, 3, Readout::Mean).unwrap();
        let p = ParamVector::zeros(spec.layout().clone());
        let t = forward(&spec, &p, &path_graph(5, 0)).unwrap();
        assert!(t.logits.iter().all(|&v| v == 0.0));
        let (loss, _) = loss_and_grad(&spec, &p, &[&path_graph(4, 1)]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_binary_logits_cost_ln2() {
        let spec = ModelSpec::uniform(ModelKind::Sage, 16, 4, 1, 2, Readout::Mean).unwrap();
        let p = ParamVector::zeros(spec.layout().clone());
        let (loss, _) = loss_and_grad(&spec, &p, &[&path_graph(3, 0), &path_graph(6, 1)]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_node_gcn_passes_features_to_head() {
        let mut x = Array2::zeros((1, 2));
        x[[0, 0]] = 0.3;
        x[[0, 1]] = 0.7;
        let g = Graph::new(1, [], x, 0).unwrap();
        let spec = ModelSpec::new(ModelKind::Gcn, vec![2, 2], 3, Readout::Mean).unwrap();
        let mut p = ParamVector::zeros(spec.layout().clone());
        p.matrix_mut(0).assign(&ndarray::arr2(&[[1.0, 0.0], [0.0, 1.0]]));
        let head = ndarray::arr2(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]);
        p.matrix_mut(2).assign(&head);
        let t = forward(&spec, &p, &g).unwrap();
        let expected = ndarray::arr1(&[0.3, 0.7]).dot(&head);
        for (a, b) in t.logits.row(0).iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let a = ModelSpec::uniform(ModelKind::Gcn, 16, 8, 2, 3, Readout::Mean).unwrap();
        let b = ModelSpec::uniform(ModelKind::Sage, 16, 8, 2, 3, Readout::Mean).unwrap();
        let p = b.init_params(0);
        assert!(forward(&a, &p, &path_graph(3, 0)).is_err());
    }

    #[test]
    fn batch_forward_matches_single_graphs() {
        let spec = ModelSpec::uniform(ModelKind::Sage, 16, 8, 2, 3, Readout::Sum).unwrap();
        let p = spec.init_params(4);
        let (a, b) = (path_graph(4, 0), path_graph(7, 2));
        let batch = forward_batch(&spec, &p, &[&a, &b]).unwrap();
        let single = forward(&spec, &p, &b).unwrap();
        for (x, y) in batch.logits.row(1).iter().zip(single.logits.row(0)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(ndarray::arr1(&[1.0, 3.0, 3.0]).view()), 1);
        assert_eq!(argmax(ndarray::arr1(&[0.0, 0.0]).view()), 0);
    }
}
