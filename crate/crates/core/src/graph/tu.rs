//! Reader and writer for the TU graph-classification file layout.
//!
//! A dataset `DS` lives in a directory holding `DS_A.txt` (1-indexed edge
//! list over global node ids), `DS_graph_indicator.txt` (graph id per node),
//! `DS_graph_labels.txt` (one label per graph) and optionally
//! `DS_node_labels.txt` and `DS_node_attributes.txt`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{Graph, GraphDataset, NodeEncoding, DEGREE_CAP};
use crate::error::{Error, Result};

struct TuFile {
    name: String,
    lines: Vec<(usize, String)>,
}

impl TuFile {
    fn read(dir: &Path, prefix: &str, suffix: &str) -> Result<Self> {
        let name = format!("{prefix}_{suffix}.txt");
        let path = dir.join(&name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self::from_text(name, &text))
    }

    fn read_optional(dir: &Path, prefix: &str, suffix: &str) -> Result<Option<Self>> {
        let path = dir.join(format!("{prefix}_{suffix}.txt"));
        if path.exists() {
            Self::read(dir, prefix, suffix).map(Some)
        } else {
            Ok(None)
        }
    }

    fn from_text(name: String, text: &str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l.trim().to_string()))
            .collect();
        TuFile { name, lines }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::parse(&self.name, line, message)
    }

    fn ints(&self) -> Result<Vec<i64>> {
        self.lines
            .iter()
            .map(|(no, l)| {
                l.parse::<i64>()
                    .map_err(|_| self.err(*no, format!("expected an integer, found {l:?}")))
            })
            .collect()
    }

    fn expect_len(&self, expected: usize, what: &str) -> Result<()> {
        if self.lines.len() != expected {
            let line = self
                .lines
                .get(expected.min(self.lines.len().saturating_sub(1)))
                .map_or(1, |(no, _)| *no);
            return Err(self.err(
                line,
                format!("{} entries, expected one per {what} ({expected})", self.lines.len()),
            ));
        }
        Ok(())
    }
}

fn find_prefix(dir: &Path) -> Result<String> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut prefixes = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str() {
            if let Some(prefix) = name.strip_suffix("_A.txt") {
                prefixes.push(prefix.to_string());
            }
        }
    }
    match prefixes.len() {
        1 => Ok(prefixes.remove(0)),
        0 => Err(Error::io(
            dir.join("<DS>_A.txt"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no edge list file"),
        )),
        _ => Err(Error::Config(format!(
            "{} holds several TU datasets ({}); name one explicitly",
            dir.display(),
            prefixes.join(", ")
        ))),
    }
}

/// Parses the single TU dataset found in `dir`.
pub fn parse_tu_dataset(dir: impl AsRef<Path>) -> Result<GraphDataset> {
    let dir = dir.as_ref();
    let prefix = find_prefix(dir)?;
    parse_tu_dataset_named(dir, &prefix)
}

/// Parses dataset `prefix` from `dir`.
pub fn parse_tu_dataset_named(dir: impl AsRef<Path>, prefix: &str) -> Result<GraphDataset> {
    let dir = dir.as_ref();
    let indicator = TuFile::read(dir, prefix, "graph_indicator")?;
    let graph_labels = TuFile::read(dir, prefix, "graph_labels")?;
    let edges = TuFile::read(dir, prefix, "A")?;
    let node_labels = TuFile::read_optional(dir, prefix, "node_labels")?;
    let node_attrs = TuFile::read_optional(dir, prefix, "node_attributes")?;

    let graph_of = indicator.ints()?;
    let n_total = graph_of.len();
    let raw_labels = graph_labels.ints()?;
    let n_graphs = raw_labels.len();

    // global node -> (graph, local index)
    let mut sizes = vec![0usize; n_graphs];
    let mut location = Vec::with_capacity(n_total);
    for (&gid, (no, _)) in graph_of.iter().zip(&indicator.lines) {
        if gid < 1 || gid as usize > n_graphs {
            return Err(indicator.err(
                *no,
                format!(
                    "graph id {gid} outside 1..={n_graphs} declared by {}",
                    graph_labels.name
                ),
            ));
        }
        let g = gid as usize - 1;
        location.push((g, sizes[g]));
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(indicator.err(1, format!("graph {} has no nodes", g + 1)));
    }

    let mut edge_lists: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_graphs];
    for (no, line) in &edges.lines {
        let mut fields = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(edges.err(*no, format!("expected \"u, v\", found {line:?}")));
        };
        let parse = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| edges.err(*no, format!("bad node id {s:?}")))?;
            if v < 1 || v > n_total {
                return Err(edges.err(
                    *no,
                    format!("edge references node {v}, but only {n_total} nodes are declared"),
                ));
            }
            Ok(v - 1)
        };
        let (u, v) = (parse(a)?, parse(b)?);
        let ((gu, lu), (gv, lv)) = (location[u], location[v]);
        if gu != gv {
            return Err(edges.err(
                *no,
                format!("edge ({}, {}) joins graphs {} and {}", u + 1, v + 1, gu + 1, gv + 1),
            ));
        }
        if lu != lv {
            edge_lists[gu].push((lu, lv));
        }
    }

    // leading feature block
    let (encoding, label_cols) = match &node_labels {
        Some(file) => {
            file.expect_len(n_total, "node")?;
            let values = file.ints()?;
            let distinct: Vec<i64> = values.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let cols: Vec<usize> = values
                .iter()
                .map(|v| distinct.binary_search(v).expect("value drawn from set"))
                .collect();
            (NodeEncoding::NodeLabels(distinct), Some(cols))
        }
        None => (NodeEncoding::Degree, None),
    };

    let attrs = match &node_attrs {
        Some(file) => {
            file.expect_len(n_total, "node")?;
            let mut rows = Vec::with_capacity(n_total);
            let mut width = None;
            for (no, line) in &file.lines {
                let row: Vec<f64> = line
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| file.err(*no, format!("bad attribute {:?}", s.trim())))
                    })
                    .collect::<Result<_>>()?;
                match width {
                    None => width = Some(row.len()),
                    Some(w) if w != row.len() => {
                        return Err(file.err(*no, format!("{} attributes, expected {w}", row.len())))
                    }
                    _ => {}
                }
                rows.push(row);
            }
            Some(rows)
        }
        None => None,
    };
    let attribute_dims = attrs.as_ref().and_then(|r| r.first()).map_or(0, Vec::len);

    let distinct_labels: Vec<i64> = raw_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let leading = match &encoding {
        NodeEncoding::NodeLabels(v) => v.len(),
        NodeEncoding::Degree => DEGREE_CAP,
    };
    let dim = leading + attribute_dims;

    let mut features: Vec<Array2<f64>> = sizes.iter().map(|&n| Array2::zeros((n, dim))).collect();
    for (global, &(g, local)) in location.iter().enumerate() {
        if let Some(cols) = &label_cols {
            features[g][[local, cols[global]]] = 1.0;
        }
        if let Some(rows) = &attrs {
            for (j, &a) in rows[global].iter().enumerate() {
                features[g][[local, leading + j]] = a;
            }
        }
    }

    let mut graphs = Vec::with_capacity(n_graphs);
    for (g, (x, edges)) in features.into_iter().zip(edge_lists).enumerate() {
        let label = distinct_labels
            .binary_search(&raw_labels[g])
            .expect("label drawn from set");
        let n = sizes[g];
        let graph = Graph::new(n, edges, x, label)?;
        graphs.push(if label_cols.is_none() {
            graph.with_degree_columns()?
        } else {
            graph
        });
    }
    GraphDataset::new(graphs, distinct_labels.len(), encoding, attribute_dims)
}

/// Writes `ds` as TU files `<name>_*.txt` under `dir`, creating it if needed.
///
/// Re-parsing the output reproduces `ds` exactly.
pub fn write_tu_dataset(ds: &GraphDataset, dir: impl AsRef<Path>, name: &str) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let (mut a, mut indicator, mut labels, mut node_labels, mut attrs) = (
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    );
    let leading = ds.feature_dim() - ds.attribute_dims();
    let mut offset = 0;
    for (gi, g) in ds.graphs().iter().enumerate() {
        for &(u, v) in g.edges() {
            let (u, v) = (u + offset + 1, v + offset + 1);
            writeln!(a, "{u}, {v}").unwrap();
            writeln!(a, "{v}, {u}").unwrap();
        }
        for row in g.features().rows() {
            writeln!(indicator, "{}", gi + 1).unwrap();
            if let NodeEncoding::NodeLabels(values) = ds.encoding() {
                let col = (0..leading)
                    .find(|&j| row[j] == 1.0)
                    .ok_or_else(|| Error::Contract(format!("graph {gi} has a node without a label one-hot")))?;
                writeln!(node_labels, "{}", values[col]).unwrap();
            }
            if ds.attribute_dims() > 0 {
                let line: Vec<String> = row.iter().skip(leading).map(|v| format!("{v:?}")).collect();
                writeln!(attrs, "{}", line.join(", ")).unwrap();
            }
        }
        writeln!(labels, "{}", g.label()).unwrap();
        offset += g.n_nodes();
    }

    let mut files = vec![("A", a), ("graph_indicator", indicator), ("graph_labels", labels)];
    if matches!(ds.encoding(), NodeEncoding::NodeLabels(_)) {
        files.push(("node_labels", node_labels));
    }
    if ds.attribute_dims() > 0 {
        files.push(("node_attributes", attrs));
    }
    let mut written = Vec::new();
    for (suffix, body) in files {
        let path = dir.join(format!("{name}_{suffix}.txt"));
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
