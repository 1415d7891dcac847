use ndarray::{Array2, ArrayView2};

use crate::graph::Graph;

/// Row-compressed sparse square operator acting on node-embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseOperator { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .position(|&x| x == c)
            .map_or(0.0, |i| self.vals[span.start + i])
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for r in 0..self.n {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[[r, self.cols[i]]] += self.vals[i];
            }
        }
        out
    }

    /// `self * h`
    pub fn apply(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, h.ncols()));
        for r in 0..self.n {
            let mut dst = out.row_mut(r);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                dst.scaled_add(self.vals[i], &h.row(self.cols[i]));
            }
        }
        out
    }

    /// `self^T * g`
    pub fn apply_transpose(&self, g: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, g.ncols()));
        for r in 0..self.n {
            let src = g.row(r);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.row_mut(self.cols[i]).scaled_add(self.vals[i], &src);
            }
        }
        out
    }

    /// Block-diagonal concatenation.
    pub fn block_diagonal<'a>(blocks: impl IntoIterator<Item = &'a SparseOperator>) -> Self {
        let mut out = SparseOperator {
            n: 0,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        };
        for b in blocks {
            let base = out.n;
            for r in 0..b.n {
                for i in b.row_ptr[r]..b.row_ptr[r + 1] {
                    out.cols.push(base + b.cols[i]);
                    out.vals.push(b.vals[i]);
                }
                out.row_ptr.push(out.cols.len());
            }
            out.n += b.n;
        }
        out
    }
}

/// Symmetric GCN propagation `D^-1/2 (A + I) D^-1/2` with `D` the degree
/// matrix of `A + I`.
pub fn normalize_adjacency(g: &Graph) -> SparseOperator {
    let adj = g.adjacency_lists();
    let scale: Vec<f64> = adj.iter().map(|n| 1.0 / ((n.len() + 1) as f64).sqrt()).collect();
    let rows = adj
        .iter()
        .enumerate()
        .map(|(v, nbrs)| {
            let mut row: Vec<(usize, f64)> = nbrs.iter().map(|&u| (u, scale[u] * scale[v])).collect();
            row.push((v, scale[v] * scale[v]));
            row.sort_unstable_by_key(|&(c, _)| c);
            row
        })
        .collect();
    SparseOperator::from_rows(rows)
}

/// Neighbor-mean operator; a node without neighbors averages over itself.
pub fn neighbor_mean(g: &Graph) -> SparseOperator {
    let rows = g
        .adjacency_lists()
        .into_iter()
        .enumerate()
        .map(|(v, nbrs)| {
            if nbrs.is_empty() {
                vec![(v, 1.0)]
            } else {
                let w = 1.0 / nbrs.len() as f64;
                nbrs.into_iter().map(|u| (u, w)).collect()
            }
        })
        .collect();
    SparseOperator::from_rows(rows)
}
