//! Erdős–Rényi subgraph triggers and data poisoning.
//!
//! A trigger is a small random graph. Injecting it into a host graph picks
//! `s` host nodes uniformly at random, drops every edge among them, and wires
//! them according to the trigger (the i-th sampled node plays trigger node
//! i). Node features are left alone, so the backdoor is purely structural.

use std::borrow::Cow;
use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seed;

/// Attack knobs: trigger size fraction, density, poisoning rate and the
/// label the backdoor should force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriggerParams {
    /// Trigger size as a fraction of the average node count.
    pub gamma: f64,
    /// Edge probability inside a trigger.
    pub rho: f64,
    /// Fraction of a local dataset that gets poisoned.
    pub poison_rate: f64,
    pub target_label: usize,
}

impl Default for TriggerParams {
    fn default() -> Self {
        TriggerParams {
            gamma: 0.2,
            rho: 0.8,
            poison_rate: 0.2,
            target_label: 0,
        }
    }
}

impl TriggerParams {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if !(self.poison_rate > 0.0 && self.poison_rate < 1.0) {
            return Err(Error::Config(format!(
                "poison_rate must lie in (0, 1), got {}",
                self.poison_rate
            )));
        }
        if self.target_label >= n_classes {
            return Err(Error::Config(format!(
                "target_label {} out of range for {n_classes} classes",
                self.target_label
            )));
        }
        Ok(())
    }

    /// `round(gamma * avg_nodes)`, which must be at least 2.
    pub fn trigger_size(&self, avg_nodes: f64) -> Result<usize> {
        let s = (self.gamma * avg_nodes).round() as usize;
        if s < 2 {
            return Err(Error::Config(format!(
                "trigger size round({} * {avg_nodes:.2}) = {s} is below 2",
                self.gamma
            )));
        }
        Ok(s)
    }
}

/// A trigger subgraph over nodes `0..n_nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl TriggerGraph {
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list = Vec::new();
        for (u, v) in edges {
            if u == v || u >= n_nodes || v >= n_nodes {
                return Err(Error::Contract(format!(
                    "invalid trigger edge ({u}, {v}) for {n_nodes} nodes"
                )));
            }
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        list.dedup();
        Ok(TriggerGraph { n_nodes, edges: list })
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

    /// `<n_nodes> nodes: u-v u-v ...`
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} nodes:", self.n_nodes);
        for (u, v) in &self.edges {
            write!(out, " {u}-{v}").unwrap();
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let bad = || Error::parse("trigger", 1, format!("malformed trigger {text:?}"));
        let (head, rest) = text.split_once("nodes:").ok_or_else(bad)?;
        let n: usize = head.trim().parse().map_err(|_| bad())?;
        let edges = rest
            .split_whitespace()
            .map(|pair| {
                let (u, v) = pair.split_once('-').ok_or_else(bad)?;
                Ok((u.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?))
            })
            .collect::<Result<Vec<_>>>()?;
        TriggerGraph::new(n, edges)
    }
}

/// Gilbert random graph: each of the `C(s, 2)` node pairs is an edge with
/// probability `rho`.
pub fn generate_trigger<R: Rng>(s: usize, rho: f64, rng: &mut R) -> Result<TriggerGraph> {
    if s < 2 {
        return Err(Error::Contract(format!("trigger size must be at least 2, got {s}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Contract(format!(
            "trigger density must lie in [0, 1], got {rho}"
        )));
    }
    let mut edges = Vec::new();
    for u in 0..s {
        for v in u + 1..s {
            if rng.random_bool(rho) {
                edges.push((u, v));
            }
        }
    }
    Ok(TriggerGraph { n_nodes: s, edges })
}

/// Host graph after injection, with the host node that plays each trigger
/// node.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub graph: Graph,
    pub nodes: Vec<usize>,
}

pub fn inject_trigger<R: Rng>(g: &Graph, t: &TriggerGraph, rng: &mut R) -> Result<Injection> {
    if g.n_nodes() < t.n_nodes() {
        return Err(Error::Injection {
            graph_nodes: g.n_nodes(),
            trigger_nodes: t.n_nodes(),
        });
    }
    let nodes = index::sample(rng, g.n_nodes(), t.n_nodes()).into_vec();
    let mut in_sample = vec![false; g.n_nodes()];
    for &v in &nodes {
        in_sample[v] = true;
    }
    let kept = g
        .edges()
        .iter()
        .copied()
        .filter(|&(u, v)| !(in_sample[u] && in_sample[v]));
    let planted = t.edges().iter().map(|&(a, b)| (nodes[a], nodes[b]));
    let graph = g.with_edges(kept.chain(planted))?;
    Ok(Injection { graph, nodes })
}

/// A client's training data after poisoning. Untouched graphs are borrowed.
#[derive(Debug, Clone)]
pub struct PoisonedView<'a> {
    pub graphs: Vec<Cow<'a, Graph>>,
    /// Positions (into `graphs`) that carry the trigger and the target label.
    pub poisoned: Vec<usize>,
}

impl PoisonedView<'_> {
    pub fn refs(&self) -> Vec<&Graph> {
        self.graphs.iter().map(|g| g.as_ref()).collect()
    }
}

/// Poisons `floor(r * |local|)` graphs (capped by the number of eligible
/// ones): each gets the trigger and the target label. Eligible graphs have a
/// non-target label and at least as many nodes as the trigger.
pub fn backdoor_dataset<'a>(
    local: &[&'a Graph],
    t: &TriggerGraph,
    r: f64,
    target: usize,
    client: usize,
    seed: u64,
) -> Result<PoisonedView<'a>> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Config(format!("poison rate must lie in (0, 1), got {r}")));
    }
    let mut graphs: Vec<Cow<'a, Graph>> = local.iter().map(|&g| Cow::Borrowed(g)).collect();
    let wanted = (r * local.len() as f64).floor() as usize;
    if wanted == 0 {
        return Ok(PoisonedView {
            graphs,
            poisoned: Vec::new(),
        });
    }
    let candidates: Vec<usize> = local
        .iter()
        .enumerate()
        .filter(|(_, g)| g.label() != target && g.n_nodes() >= t.n_nodes())
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return Err(Error::Poisoning {
            client,
            message: format!(
                "none of {} local graphs has a non-target label and at least {} nodes",
                local.len(),
                t.n_nodes()
            ),
        });
    }
    let mut rng = seed::rng(seed);
    let mut poisoned: Vec<usize> = index::sample(&mut rng, candidates.len(), wanted.min(candidates.len()))
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    poisoned.sort_unstable();
    for &i in &poisoned {
        let injected = inject_trigger(local[i], t, &mut rng)?;
        graphs[i] = Cow::Owned(injected.graph.with_label(target));
    }
    Ok(PoisonedView { graphs, poisoned })
}

/// Disjoint union of the local triggers, in order.
pub fn compose_global_trigger(locals: &[TriggerGraph]) -> Result<TriggerGraph> {
    if locals.is_empty() {
        return Err(Error::Contract("global trigger from zero local triggers".into()));
    }
    let mut offset = 0;
    let mut edges = Vec::new();
    for t in locals {
        edges.extend(t.edges().iter().map(|&(u, v)| (u + offset, v + offset)));
        offset += t.n_nodes();
    }
    Ok(TriggerGraph { n_nodes: offset, edges })
}

/// Triggered copies of the non-target test graphs that can host `t`.
/// Each graph keeps its original label; `target` is the label the backdoor
/// tries to force.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub graphs: Vec<Graph>,
    pub target: usize,
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn refs(&self) -> Vec<&Graph> {
        self.graphs.iter().collect()
    }

    pub fn original_labels(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::label).collect()
    }
}

pub fn poison_test_set(test: &[&Graph], t: &TriggerGraph, target: usize, seed: u64) -> Result<EvalSet> {
    let mut rng = seed::rng(seed);
    let graphs = test
        .iter()
        .filter(|g| g.label() != target && g.n_nodes() >= t.n_nodes())
        .map(|g| inject_trigger(g, t, &mut rng).map(|inj| inj.graph))
        .collect::<Result<Vec<_>>>()?;
    if graphs.is_empty() {
        return Err(Error::Evaluation(format!(
            "no test graph has a non-target label and at least {} nodes",
            t.n_nodes()
        )));
    }
    Ok(EvalSet { graphs, target })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize, label: usize) -> Graph {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        Graph::with_degree_features(n, edges, label).unwrap()
    }

    fn path(n: usize, label: usize) -> Graph {
        Graph::with_degree_features(n, (1..n).map(|v| (v - 1, v)), label).unwrap()
    }

    #[test]
    fn extreme_densities() {
        let mut rng = seed::rng(1);
        assert_eq!(generate_trigger(5, 1.0, &mut rng).unwrap().n_edges(), 10);
        assert_eq!(generate_trigger(5, 0.0, &mut rng).unwrap().n_edges(), 0);
        assert!(generate_trigger(1, 0.5, &mut rng).is_err());
    }

    #[test]
    fn empty_trigger_makes_independent_set() {
        let g = complete(6, 0);
        let t = TriggerGraph::new(3, []).unwrap();
        let inj = inject_trigger(&g, &t, &mut seed::rng(2)).unwrap();
        for (i, &a) in inj.nodes.iter().enumerate() {
            for &b in &inj.nodes[i + 1..] {
                assert!(!inj.graph.has_edge(a, b));
            }
        }
        // 15 edges minus the 3 among the sampled nodes
        assert_eq!(inj.graph.n_edges(), 12);
        assert_eq!(inj.graph.features(), g.features());
    }

    #[test]
    fn complete_into_complete_is_identity() {
        let g = complete(5, 1);
        let t = TriggerGraph::new(5, (0..5).flat_map(|u| (u + 1..5).map(move |v| (u, v)))).unwrap();
        assert_eq!(inject_trigger(&g, &t, &mut seed::rng(3)).unwrap().graph, g);
    }

    #[test]
    fn too_small_host_is_an_injection_error() {
        let t = TriggerGraph::new(4, [(0, 1)]).unwrap();
        assert!(matches!(
            inject_trigger(&path(3, 0), &t, &mut seed::rng(0)),
            Err(Error::Injection { .. })
        ));
    }

    #[test]
    fn zero_budget_leaves_data_untouched() {
        let graphs: Vec<Graph> = (0..4).map(|i| path(5, i % 2)).collect();
        let refs: Vec<&Graph> = graphs.iter().collect();
        let t = TriggerGraph::new(3, [(0, 1)]).unwrap();
        let view = backdoor_dataset(&refs, &t, 0.2, 0, 0, 1).unwrap();
        assert!(view.poisoned.is_empty());
        assert!(view.graphs.iter().zip(&graphs).all(|(a, b)| a.as_ref() == b));
    }

    #[test]
    fn all_target_labels_cannot_be_poisoned() {
        let graphs: Vec<Graph> = (0..10).map(|_| path(5, 1)).collect();
        let refs: Vec<&Graph> = graphs.iter().collect();
        let t = TriggerGraph::new(3, [(0, 1)]).unwrap();
        let err = backdoor_dataset(&refs, &t, 0.2, 1, 7, 1).unwrap_err();
        assert!(matches!(err, Error::Poisoning { client: 7, .. }));
    }

    #[test]
    fn composition_is_a_disjoint_union() {
        let k3 = TriggerGraph::new(3, [(0, 1), (0, 2), (1, 2)]).unwrap();
        let one = compose_global_trigger(std::slice::from_ref(&k3)).unwrap();
        assert_eq!(one, k3);
        let two = compose_global_trigger(&[k3.clone(), k3]).unwrap();
        assert_eq!(two.n_nodes(), 6);
        assert_eq!(two.edges(), &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
        assert!(compose_global_trigger(&[]).is_err());
    }

    #[test]
    fn test_poisoning_keeps_only_non_target_labels() {
        let graphs: Vec<Graph> = (0..6).map(|i| path(6, i % 2)).collect();
        let refs: Vec<&Graph> = graphs.iter().collect();
        let t = TriggerGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let set = poison_test_set(&refs, &t, 1, 0).unwrap();
        assert_eq!(set.len(), 3);
        assert!(set.original_labels().iter().all(|&l| l == 0));
        let ones: Vec<&Graph> = graphs.iter().filter(|g| g.label() == 1).collect();
        assert!(poison_test_set(&ones, &t, 1, 0).is_err());
    }

    #[test]
    fn trigger_text_round_trip() {
        let t = generate_trigger(6, 0.5, &mut seed::rng(9)).unwrap();
        assert_eq!(TriggerGraph::from_edge_list(&t.to_edge_list()).unwrap(), t);
    }

    #[test]
    fn trigger_size_rule() {
        let p = TriggerParams::default();
        assert_eq!(p.trigger_size(29.87).unwrap(), 6);
        assert_eq!(p.trigger_size(20.85).unwrap(), 4);
        assert!(p.trigger_size(5.0).is_err());
    }
}
