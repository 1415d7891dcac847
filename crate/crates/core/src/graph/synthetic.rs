//! Offline stand-in for the TRIANGLES benchmark: random graphs labeled by
//! their triangle count.

use rand::Rng;

use super::{count_triangles, Graph, GraphDataset, NodeEncoding};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

pub const TRIANGLE_CLASSES: usize = 10;

/// Rejection attempts allowed per requested graph before giving up.
const ATTEMPTS_PER_GRAPH: usize = 2_000;

/// Generates a balanced 10-class dataset; class `c` holds graphs with exactly
/// `c + 1` triangles. Node counts are uniform on `node_range` (inclusive) and
/// node features are degree one-hot vectors.
pub fn generate_triangles_dataset(n_graphs: usize, node_range: (usize, usize), seed: u64) -> Result<GraphDataset> {
    let (lo, hi) = node_range;
    if n_graphs == 0 || !n_graphs.is_multiple_of(TRIANGLE_CLASSES) {
        return Err(Error::Config(format!(
            "n_graphs must be a positive multiple of {TRIANGLE_CLASSES}, got {n_graphs}"
        )));
    }
    if lo < 5 || hi < lo {
        return Err(Error::Config(format!(
            "node range [{lo}, {hi}] must satisfy 5 <= lo <= hi"
        )));
    }
    let per_class = n_graphs / TRIANGLE_CLASSES;
    let mut rng = seed::stream_rng(seed, Stream::Dataset, &[]);
    let mut filled = [0usize; TRIANGLE_CLASSES];
    let mut graphs = Vec::with_capacity(n_graphs);
    let mut target = 0;

    for _ in 0..ATTEMPTS_PER_GRAPH * n_graphs {
        if graphs.len() == n_graphs {
            break;
        }
        while filled[target] == per_class {
            target = (target + 1) % TRIANGLE_CLASSES;
        }
        let n = rng.random_range(lo..=hi);
        // aim the expected triangle count C(n,3) p^3 at the target class
        let triples = (n * (n - 1) * (n - 2) / 6) as f64;
        let aim = (target + 1) as f64 * rng.random_range(0.7..1.3);
        let p = (aim / triples).cbrt().min(1.0);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::with_degree_features(n, edges, 0)?;
        let t = count_triangles(&g);
        if (1..=TRIANGLE_CLASSES).contains(&t) && filled[t - 1] < per_class {
            filled[t - 1] += 1;
            graphs.push(g.with_label(t - 1));
            target = (target + 1) % TRIANGLE_CLASSES;
        }
    }

    if graphs.len() < n_graphs {
        let starving = (0..TRIANGLE_CLASSES).find(|&c| filled[c] < per_class).unwrap_or(0);
        return Err(Error::Generation(format!(
            "class {starving} ({} triangles) filled {}/{per_class} after the attempt budget",
            starving + 1,
            filled[starving]
        )));
    }
    GraphDataset::new(graphs, TRIANGLE_CLASSES, NodeEncoding::Degree, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_consistent_labels() {
        let ds = generate_triangles_dataset(100, (10, 24), 3).unwrap();
        assert_eq!(ds.class_counts(), vec![10; 10]);
        for g in ds.graphs() {
            assert_eq!(count_triangles(g), g.label() + 1);
        }
    }

    #[test]
    fn fixed_node_count() {
        let ds = generate_triangles_dataset(10, (20, 20), 1).unwrap();
        assert!(ds.graphs().iter().all(|g| g.n_nodes() == 20));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_triangles_dataset(50, (8, 16), 11).unwrap();
        let b = generate_triangles_dataset(50, (8, 16), 11).unwrap();
        let c = generate_triangles_dataset(50, (8, 16), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_triangles_dataset(15, (10, 20), 0).is_err());
        assert!(generate_triangles_dataset(10, (4, 20), 0).is_err());
    }
}
