//! Deterministic simulation of backdoor attacks on federated graph
//! classification.
//!
//! The crate covers the whole pipeline: graph datasets and non-iid client
//! splits ([`graph`]), from-scratch GCN/GraphSAGE models ([`gnn`]),
//! Erdős–Rényi triggers and data poisoning ([`backdoor`]), the FedAvg round
//! loop with centralized and distributed attacks ([`fed`]), cosine-similarity
//! defenses ([`defense`]) and the metrics and sweep harness ([`metrics`],
//! [`experiment`]).

pub mod backdoor;
pub mod defense;
pub mod error;
pub mod experiment;
pub mod fed;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod seed;

pub use error::{Error, Result};
