//! From-scratch graph neural network classifiers.

mod adjacency;
mod model;
mod params;

pub use adjacency::{neighbor_mean, normalize_adjacency, SparseOperator};
pub use model::{
    argmax, forward, forward_batch, logits, loss_and_grad, mean_loss, predict, ForwardTrace, ModelKind, ModelSpec,
    Readout,
};
pub use params::{sgd_step, Layout, ParamVector, Segment};
