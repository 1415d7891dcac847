//! Flat parameter vectors and the algebra used by aggregation and defenses.

use std::fmt::Write as _;
use std::io::{BufRead, Read};
use std::path::Path;
use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

/// A named block of parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Segment {
            name: name.into(),
            shape,
        }
    }

    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered segment list; two vectors with equal layouts combine element-wise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    offsets: Vec<usize>,
    len: usize,
}

impl Layout {
    pub fn new(segments: Vec<Segment>) -> Self {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut len = 0;
        for s in &segments {
            offsets.push(len);
            len += s.size();
        }
        Layout { segments, offsets, len }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn range(&self, segment: usize) -> std::ops::Range<usize> {
        let start = self.offsets[segment];
        start..start + self.segments[segment].size()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Contract(format!(
                "{} values for a layout of length {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(ParamVector { layout, values })
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.len()];
        ParamVector { layout, values }
    }

    pub fn filled(layout: Arc<Layout>, value: f64) -> Self {
        let values = vec![value; layout.len()];
        ParamVector { layout, values }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub(crate) fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Contract("parameter layouts differ".into()))
        }
    }

    /// Segment `i` viewed as a row-major matrix (vectors become one row).
    pub fn matrix(&self, segment: usize) -> ArrayView2<'_, f64> {
        let (rows, cols) = self.matrix_shape(segment);
        ArrayView2::from_shape((rows, cols), &self.values[self.layout.range(segment)])
            .expect("segment shape matches its range")
    }

    pub fn matrix_mut(&mut self, segment: usize) -> ArrayViewMut2<'_, f64> {
        let (rows, cols) = self.matrix_shape(segment);
        let range = self.layout.range(segment);
        ArrayViewMut2::from_shape((rows, cols), &mut self.values[range]).expect("segment shape matches its range")
    }

    pub fn vector(&self, segment: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[self.layout.range(segment)])
    }

    fn matrix_shape(&self, segment: usize) -> (usize, usize) {
        match self.layout.segments()[segment].shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            other => (other[0], other[1..].iter().product()),
        }
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_layout(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(ParamVector {
            layout: self.layout.clone(),
            values,
        })
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_layout(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(ParamVector {
            layout: self.layout.clone(),
            values,
        })
    }

    pub fn scale(&self, c: f64) -> ParamVector {
        ParamVector {
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: f64, other: &ParamVector) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    pub fn l2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity, defined as 0 when either vector is zero.
    pub fn cosine(&self, other: &ParamVector) -> Result<f64> {
        let dot = self.dot(other)?;
        let (na, nb) = (self.l2(), other.l2());
        if na == 0.0 || nb == 0.0 {
            return Ok(0.0);
        }
        Ok((dot / (na * nb)).clamp(-1.0, 1.0))
    }

    /// FNV-1a over the little-endian bytes of the values.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Checkpoint encoding: a text manifest naming each segment and its
    /// shape, then the values as little-endian IEEE-754 doubles.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::from("fedgnn-params 1\n");
        writeln!(header, "segments {}", self.layout.segments().len()).unwrap();
        for s in self.layout.segments() {
            let dims: Vec<String> = s.shape.iter().map(usize::to_string).collect();
            writeln!(header, "{} {}", s.name, dims.join("x")).unwrap();
        }
        writeln!(header, "data {}", self.values.len()).unwrap();
        let mut out = header.into_bytes();
        out.reserve(self.values.len() * 8);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::parse("checkpoint", line, msg);
        let mut reader = std::io::Cursor::new(bytes);
        let mut next_line = |no: usize| -> Result<String> {
            let mut s = String::new();
            reader
                .read_line(&mut s)
                .map_err(|_| bad(no, "header is not valid UTF-8"))?;
            if !s.ends_with('\n') {
                return Err(bad(no, "truncated header"));
            }
            Ok(s.trim_end().to_string())
        };
        if next_line(1)? != "fedgnn-params 1" {
            return Err(bad(1, "unknown checkpoint magic"));
        }
        let n_segments: usize = next_line(2)?
            .strip_prefix("segments ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(2, "expected `segments <n>`"))?;
        let mut segments = Vec::with_capacity(n_segments);
        for i in 0..n_segments {
            let no = 3 + i;
            let line = next_line(no)?;
            let (name, dims) = line
                .rsplit_once(' ')
                .ok_or_else(|| bad(no, "expected `<name> <shape>`"))?;
            let shape = dims
                .split('x')
                .map(|d| d.parse::<usize>().map_err(|_| bad(no, "bad shape")))
                .collect::<Result<Vec<_>>>()?;
            segments.push(Segment::new(name, shape));
        }
        let no = 3 + n_segments;
        let len: usize = next_line(no)?
            .strip_prefix("data ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(no, "expected `data <len>`"))?;
        let layout = Layout::new(segments);
        if layout.len() != len {
            return Err(bad(no, "data length disagrees with segment shapes"));
        }
        let mut raw = Vec::new();
        reader
            .read_to_end(&mut raw)
            .map_err(|_| bad(no, "unreadable payload"))?;
        if raw.len() != len * 8 {
            return Err(bad(no, "payload length disagrees with header"));
        }
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        ParamVector::new(Arc::new(layout), values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Plain gradient step `params - lr * grad`.
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    let mut next = params.clone();
    next.add_scaled(-lr, grad)?;
    Ok(next)
}
