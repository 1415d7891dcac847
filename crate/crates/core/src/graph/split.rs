use rand::seq::SliceRandom;
use rand::Rng;

use super::{ClientPartition, GraphDataset};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Random permutation split into `floor(train_frac * N)` training indices and
/// the remainder.
pub fn train_test_split(ds: &GraphDataset, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut seed::stream_rng(seed, Stream::TrainTestSplit, &[]));
    let n_train = (train_frac * ds.len() as f64).floor() as usize;
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// Label-skewed partition: an example of class `l` goes to client `l mod K`
/// with probability `q`, otherwise to one of the other `K - 1` clients
/// uniformly at random.
pub fn noniid_label_split(
    train: &[usize],
    labels: &[usize],
    n_clients: usize,
    q: f64,
    seed: u64,
) -> Result<ClientPartition> {
    if n_clients < 2 {
        return Err(Error::Config(format!(
            "non-iid split needs at least 2 clients, got {n_clients}"
        )));
    }
    let floor = 1.0 / n_clients as f64;
    if !(q >= floor - 1e-12 && q <= 1.0) {
        return Err(Error::Config(format!(
            "split q must lie in [1/K, 1] = [{floor}, 1], got {q}"
        )));
    }
    let mut rng = seed::stream_rng(seed, Stream::ClientPartition, &[]);
    let mut parts = vec![Vec::new(); n_clients];
    for &i in train {
        let home = labels[i] % n_clients;
        let client = if rng.random_bool(q.min(1.0)) {
            home
        } else {
            let other = rng.random_range(0..n_clients - 1);
            if other >= home {
                other + 1
            } else {
                other
            }
        };
        parts[client].push(i);
    }
    Ok(ClientPartition::new(parts))
}

/// Standardizes the continuous attribute columns to zero mean and unit
/// variance using statistics from the `train` graphs only. Columns with zero
/// variance are only centered.
pub fn standardize_attributes(ds: &mut GraphDataset, train: &[usize]) {
    let dims = ds.attribute_dims();
    if dims == 0 {
        return;
    }
    let first = ds.feature_dim() - dims;
    let (mut sum, mut sq, mut count) = (vec![0.0; dims], vec![0.0; dims], 0usize);
    for &i in train {
        for row in ds.graphs()[i].features().rows() {
            for j in 0..dims {
                let v = row[first + j];
                sum[j] += v;
                sq[j] += v * v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return;
    }
    let n = count as f64;
    let stats: Vec<(f64, f64)> = (0..dims)
        .map(|j| {
            let mean = sum[j] / n;
            let var = (sq[j] / n - mean * mean).max(0.0);
            let sd = var.sqrt();
            (mean, if sd > 1e-12 { sd } else { 1.0 })
        })
        .collect();
    for g in ds.graphs_mut() {
        for mut row in g.features_mut().rows_mut() {
            for (j, &(mean, sd)) in stats.iter().enumerate() {
                row[first + j] = (row[first + j] - mean) / sd;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_triangles_dataset, Graph, NodeEncoding};

    fn dataset(n: usize) -> GraphDataset {
        let graphs = (0..n)
            .map(|i| Graph::with_degree_features(2, [(0, 1)], i % 2).unwrap())
            .collect();
        GraphDataset::new(graphs, 2, NodeEncoding::Degree, 0).unwrap()
    }

    #[test]
    fn split_sizes_and_cover() {
        let ds = dataset(10);
        let (train, test) = train_test_split(&ds, 0.8, 5).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(train_test_split(&ds, 0.8, 5).unwrap(), (train, test));
        assert!(train_test_split(&ds, 1.0, 5).is_err());
    }

    #[test]
    fn four_thousand_graphs_split() {
        let ds = dataset(4110);
        let (train, test) = train_test_split(&ds, 0.8, 0).unwrap();
        assert_eq!((train.len(), test.len()), (3288, 822));
    }

    #[test]
    fn degenerate_q_sends_each_class_home() {
        let ds = generate_triangles_dataset(100, (8, 14), 2).unwrap();
        let labels = ds.labels();
        let train: Vec<usize> = (0..ds.len()).collect();
        let part = noniid_label_split(&train, &labels, 10, 1.0, 9).unwrap();
        for (client, idx) in part.parts().iter().enumerate() {
            assert_eq!(idx.len(), 10);
            assert!(idx.iter().all(|&i| labels[i] == client));
        }
    }

    #[test]
    fn q_out_of_range() {
        let labels = vec![0, 1];
        assert!(noniid_label_split(&[0, 1], &labels, 4, 0.2, 0).is_err());
        assert!(noniid_label_split(&[0, 1], &labels, 4, 1.1, 0).is_err());
        assert!(noniid_label_split(&[0, 1], &labels, 1, 1.0, 0).is_err());
    }

    #[test]
    fn standardization_uses_train_statistics() {
        let graphs = (0..4)
            .map(|i| {
                let mut x = ndarray::Array2::zeros((1, 1));
                x[[0, 0]] = i as f64;
                Graph::new(1, [], x, 0).unwrap()
            })
            .collect();
        let mut ds = GraphDataset::new(graphs, 1, NodeEncoding::NodeLabels(vec![]), 1).unwrap();
        standardize_attributes(&mut ds, &[0, 2]);
        // train values {0, 2}: mean 1, sd 1
        let vals: Vec<f64> = ds.graphs().iter().map(|g| g.features()[[0, 0]]).collect();
        assert_eq!(vals, vec![-1.0, 0.0, 1.0, 2.0]);
    }
}
