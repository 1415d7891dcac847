//! Similarity-based robust aggregation: FoolsGold reweighting and dynamic
//! model filtering (majority cluster under cosine distance).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefenseKind {
    #[default]
    None,
    FoolsGold,
    Dmf,
}

impl std::fmt::Display for DefenseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DefenseKind::None => "none",
            DefenseKind::FoolsGold => "foolsgold",
            DefenseKind::Dmf => "dmf",
        })
    }
}

/// Running sum of each client's updates `w_t^k - G_{t-1}`.
#[derive(Debug, Clone)]
pub struct UpdateHistory {
    sums: Vec<ParamVector>,
}

impl UpdateHistory {
    pub fn new(template: &ParamVector, n_clients: usize) -> Self {
        UpdateHistory {
            sums: vec![ParamVector::zeros(template.layout().clone()); n_clients],
        }
    }

    pub fn from_sums(sums: Vec<ParamVector>) -> Self {
        UpdateHistory { sums }
    }

    pub fn record(&mut self, client: usize, local: &ParamVector, global: &ParamVector) -> Result<()> {
        let update = local.sub(global)?;
        self.sums[client].add_scaled(1.0, &update)
    }

    pub fn sums(&self) -> &[ParamVector] {
        &self.sums
    }

    pub fn n_clients(&self) -> usize {
        self.sums.len()
    }
}

/// Symmetric matrix of pairwise cosine similarities (diagonal 1).
pub fn cosine_matrix(vectors: &[ParamVector]) -> Result<Vec<Vec<f64>>> {
    let n = vectors.len();
    let norms: Vec<f64> = vectors.iter().map(ParamVector::l2).collect();
    let mut cs = vec![vec![0.0; n]; n];
    for i in 0..n {
        cs[i][i] = 1.0;
        for j in i + 1..n {
            let c = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                (vectors[i].dot(&vectors[j])? / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            cs[i][j] = c;
            cs[j][i] = c;
        }
    }
    Ok(cs)
}

/// Min / mean / max of the off-diagonal entries.
pub fn off_diagonal_summary(cs: &[Vec<f64>]) -> Option<(f64, f64, f64)> {
    let n = cs.len();
    let vals: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| cs[i][j])
        .collect();
    if vals.is_empty() {
        return None;
    }
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((min, vals.iter().sum::<f64>() / vals.len() as f64, max))
}

#[derive(Debug, Clone)]
pub struct FoolsGoldOutcome {
    pub weights: Vec<f64>,
    pub cosine: Vec<Vec<f64>>,
}

/// Cosine similarities within this distance of 1 count as identical.
const SIMILARITY_ROUNDOFF: f64 = 1e-9;

/// FoolsGold aggregation weights from cumulative update histories.
///
/// Clients whose history is the zero vector take weight 1 and do not enter
/// the similarity computation.
pub fn foolsgold_weights(history: &UpdateHistory) -> Result<FoolsGoldOutcome> {
    let sums = history.sums();
    let n = sums.len();
    let cosine = cosine_matrix(sums)?;
    let mut weights = vec![1.0; n];
    let active: Vec<usize> = (0..n).filter(|&i| sums[i].l2() > 0.0).collect();
    if active.len() < 2 {
        return Ok(FoolsGoldOutcome { weights, cosine });
    }

    let m = active.len();
    let mut cs: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| {
            active
                .iter()
                .map(|&j| if i == j { 0.0 } else { cosine[i][j] })
                .collect()
        })
        .collect();
    let max_sim: Vec<f64> = cs
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &c)| c)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    // pardoning: a client less similar to the crowd than its partner gets
    // that pairwise similarity scaled down
    for i in 0..m {
        for j in 0..m {
            if i != j && max_sim[i] < max_sim[j] && max_sim[j] > 0.0 {
                cs[i][j] *= max_sim[i] / max_sim[j];
            }
        }
    }

    let mut w: Vec<f64> = (0..m)
        .map(|i| {
            let worst = (0..m)
                .filter(|&j| j != i)
                .map(|j| cs[i][j])
                .fold(f64::NEG_INFINITY, f64::max);
            let w = 1.0 - worst;
            if w < SIMILARITY_ROUNDOFF {
                0.0
            } else {
                w.min(1.0)
            }
        })
        .collect();
    let top = w.iter().copied().fold(0.0, f64::max);
    if top > 0.0 {
        for v in &mut w {
            *v /= top;
        }
    }
    for v in &mut w {
        *v = if *v <= 0.0 {
            0.0
        } else if *v >= 1.0 {
            1.0
        } else {
            ((*v / (1.0 - *v)).ln() + 0.5).clamp(0.0, 1.0)
        };
    }
    for (k, &i) in active.iter().enumerate() {
        weights[i] = w[k];
    }
    Ok(FoolsGoldOutcome { weights, cosine })
}

#[derive(Debug, Clone)]
pub struct DmfOutcome {
    /// Accepted client indices, ascending.
    pub accepted: Vec<usize>,
    /// True when no cluster reached a majority and everyone was accepted.
    pub fail_open: bool,
    pub cosine: Vec<Vec<f64>>,
}

/// Default cut height for the cosine-distance dendrogram.
pub const DMF_MERGE_THRESHOLD: f64 = 0.5;

/// Accepts the largest average-linkage cluster (cosine distance, merges up
/// to `threshold`) if it holds at least `floor(K/2) + 1` clients; otherwise
/// accepts everyone.
pub fn dmf_filter(client_params: &[ParamVector], threshold: f64) -> Result<DmfOutcome> {
    let k = client_params.len();
    if k == 0 {
        return Err(Error::Defense("model filtering over zero clients".into()));
    }
    let cosine = cosine_matrix(client_params)?;
    let dist: Vec<Vec<f64>> = cosine.iter().map(|row| row.iter().map(|c| 1.0 - c).collect()).collect();
    let clusters = average_linkage(&dist, threshold);
    let majority = k / 2 + 1;
    let best = clusters
        .into_iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then_with(|| b[0].cmp(&a[0])))
        .expect("at least one cluster");
    if best.len() >= majority {
        Ok(DmfOutcome {
            accepted: best,
            fail_open: false,
            cosine,
        })
    } else {
        Ok(DmfOutcome {
            accepted: (0..k).collect(),
            fail_open: true,
            cosine,
        })
    }
}

/// Agglomerative clustering with average linkage; stops when the closest
/// pair of clusters is farther apart than `threshold`. Returned clusters are
/// sorted internally and by first member.
pub fn average_linkage(dist: &[Vec<f64>], threshold: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..dist.len()).map(|i| vec![i]).collect();
    let linkage = |a: &[usize], b: &[usize]| -> f64 {
        let total: f64 = a.iter().flat_map(|&i| b.iter().map(move |&j| dist[i][j])).sum();
        total / (a.len() * b.len()) as f64
    };
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d = linkage(&clusters[a], &clusters[b]);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (d, a, b) = best.expect("two or more clusters");
        if d > threshold {
            break;
        }
        let merged = clusters.swap_remove(b);
        clusters[a].extend(merged);
        clusters[a].sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// `sum_i w_i p_i / sum_i w_i`.
pub fn weighted_aggregate(params: &[ParamVector], weights: &[f64]) -> Result<ParamVector> {
    if params.is_empty() || params.len() != weights.len() {
        return Err(Error::Contract(format!(
            "{} parameter vectors with {} weights",
            params.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Defense(
            "aggregation weights must be finite and non-negative".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Defense("all aggregation weights are zero".into()));
    }
    let mut out = ParamVector::zeros(params[0].layout().clone());
    for (p, &w) in params.iter().zip(weights) {
        if w > 0.0 {
            out.add_scaled(w / total, p)?;
        } else {
            params[0].check_layout(p)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gnn::{Layout, Segment};

    fn layout(n: usize) -> Arc<Layout> {
        Arc::new(Layout::new(vec![Segment::new("v", vec![n])]))
    }

    fn vecs(rows: &[&[f64]]) -> Vec<ParamVector> {
        let l = layout(rows[0].len());
        rows.iter()
            .map(|r| ParamVector::new(l.clone(), r.to_vec()).unwrap())
            .collect()
    }

    fn fg(rows: &[&[f64]]) -> Vec<f64> {
        foolsgold_weights(&UpdateHistory::from_sums(vecs(rows)))
            .unwrap()
            .weights
    }

    #[test]
    fn foolsgold_identical_pair() {
        assert_eq!(fg(&[&[1.0, 2.0], &[1.0, 2.0]]), vec![0.0, 0.0]);
    }

    #[test]
    fn foolsgold_orthogonal() {
        assert_eq!(
            fg(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 3.0]]),
            vec![1.0; 3]
        );
    }

    #[test]
    fn foolsgold_two_sybils_and_an_honest_client() {
        assert_eq!(
            fg(&[&[1.0, 1.0, 0.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]),
            vec![0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn foolsgold_zero_history_keeps_full_weight() {
        let w = fg(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
        assert_eq!(fg(&[&[1.0, 0.0]]), vec![1.0]);
    }

    #[test]
    fn foolsgold_partial_similarity_is_graded() {
        // cos = 0.6 between the first two: w = 0.4 before rescaling
        let w = fg(&[&[1.0, 0.0, 0.0], &[0.6, 0.8, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(w[2], 1.0);
        let expected = ((0.4f64 / 0.6).ln() + 0.5).clamp(0.0, 1.0);
        assert!((w[0] - expected).abs() < 1e-12 && (w[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn dmf_rejects_negated_outlier() {
        let base = [1.0, 2.0, 3.0, 4.0];
        let mut rows: Vec<Vec<f64>> = (0..4)
            .map(|i| base.iter().map(|v| v + 1e-3 * i as f64).collect())
            .collect();
        rows.push(base.iter().map(|v| -5.0 * v).collect());
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let out = dmf_filter(&vecs(&refs), DMF_MERGE_THRESHOLD).unwrap();
        assert_eq!(out.accepted, vec![0, 1, 2, 3]);
        assert!(!out.fail_open);
    }

    #[test]
    fn dmf_fails_open_without_majority() {
        let out = dmf_filter(&vecs(&[&[1.0, 0.0], &[0.0, 1.0]]), DMF_MERGE_THRESHOLD).unwrap();
        assert_eq!(out.accepted, vec![0, 1]);
        assert!(out.fail_open);
    }

    #[test]
    fn dmf_identical_accepts_all() {
        let out = dmf_filter(&vecs(&[&[1.0, 1.0][..]; 5]), DMF_MERGE_THRESHOLD).unwrap();
        assert_eq!(out.accepted, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn weighted_aggregate_cases() {
        let v = vecs(&[&[0.0, 4.0], &[2.0, 0.0]]);
        assert_eq!(weighted_aggregate(&v, &[1.0, 1.0]).unwrap().values(), &[1.0, 2.0]);
        assert_eq!(weighted_aggregate(&v, &[0.0, 3.0]).unwrap().values(), &[2.0, 0.0]);
        assert!(matches!(weighted_aggregate(&v, &[0.0, 0.0]), Err(Error::Defense(_))));
        assert!(weighted_aggregate(&v, &[1.0]).is_err());
    }

    #[test]
    fn linkage_respects_threshold() {
        let d = vec![vec![0.0, 0.1, 0.9], vec![0.1, 0.0, 0.8], vec![0.9, 0.8, 0.0]];
        assert_eq!(average_linkage(&d, 0.5), vec![vec![0, 1], vec![2]]);
        assert_eq!(average_linkage(&d, 1.0), vec![vec![0, 1, 2]]);
    }
}
