//! Snapshot-sequence graph model.
//!
//! A [`SnapshotSequence`] is an ordered list of weighted directed snapshots
//! over a fixed node set. Weight zero means "no edge"; stored weights are
//! strictly positive and finite.
//!
//! Text format (UTF-8, `#` starts a comment line):
//!
//! ```text
//! T N
//! t u v w
//! ...
//! ```
//!
//! The canonical form sorts edge lines by `(t, u, v)` and prints weights with
//! 17 significant digits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::numerics::format::fmt_real;
use crate::Mat;

/// Largest node count for which [`dense_adjacency`] materializes a matrix.
pub const DEFAULT_DENSE_LIMIT: usize = 20_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge ({u},{v}) out of range for n={n}")]
    NodeOutOfRange { u: usize, v: usize, n: usize },
    #[error("weight {w} on edge ({u},{v}) must be positive and finite")]
    InvalidWeight { u: usize, v: usize, w: f64 },
    #[error("duplicate edge ({u},{v})")]
    DuplicateEdge { u: usize, v: usize },
    #[error("node counts differ: {left} vs {right}")]
    NodeCountMismatch { left: usize, right: usize },
    #[error("a sequence needs at least one snapshot")]
    EmptySequence,
    #[error("n={n} exceeds the dense limit {limit}")]
    DenseLimit { n: usize, limit: usize },
    #[error("delta does not match the snapshot at ({u},{v})")]
    DeltaMismatch { u: usize, v: usize },
    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },
    #[error("missing header line")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("malformed header, expected `T N`")]
    MalformedHeader,
    #[error("malformed edge line, expected `t u v w`")]
    MalformedEdge,
    #[error("node id {node} >= N={n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("snapshot index {t} >= T={t_count}")]
    SnapshotOutOfRange { t: usize, t_count: usize },
    #[error("weight {0} is not positive and finite")]
    NonPositiveWeight(String),
    #[error("duplicate edge ({t},{u},{v})")]
    DuplicateEdge { t: usize, u: usize, v: usize },
}

/// One weighted directed snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSnapshot {
    n: usize,
    edges: BTreeMap<(usize, usize), f64>,
}

impl GraphSnapshot {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeMap::new(),
        }
    }

    /// Builds a snapshot from an edge list, rejecting duplicates and invalid
    /// weights.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut g = Self::empty(n);
        for (u, v, w) in edges {
            if g.edges.contains_key(&(u, v)) {
                return Err(GraphError::DuplicateEdge { u, v });
            }
            g.set_edge(u, v, w)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.edges.get(&(u, v)).copied().unwrap_or(0.0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains_key(&(u, v))
    }

    /// Edges in `(u, v)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(u, v), &w)| (u, v, w))
    }

    /// Out-edges of `u` in target order.
    pub fn out_edges(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.edges
            .range((u, 0)..(u + 1, 0))
            .map(|(&(_, v), &w)| (v, w))
    }

    pub fn out_strength(&self, u: usize) -> f64 {
        self.out_edges(u).map(|(_, w)| w).sum()
    }

    /// Inserts or overwrites an edge.
    pub fn set_edge(&mut self, u: usize, v: usize, w: f64) -> Result<(), GraphError> {
        if u >= self.n || v >= self.n {
            return Err(GraphError::NodeOutOfRange { u, v, n: self.n });
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(GraphError::InvalidWeight { u, v, w });
        }
        self.edges.insert((u, v), w);
        Ok(())
    }

    pub fn remove_edge(&mut self, u: usize, v: usize) -> Option<f64> {
        self.edges.remove(&(u, v))
    }

    /// Row `u` of the dense adjacency.
    pub fn adjacency_row(&self, u: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n];
        for (v, w) in self.out_edges(u) {
            row[v] = w;
        }
        row
    }
}

/// `A[u][v] = w` for each edge, zero elsewhere.
pub fn dense_adjacency(g: &GraphSnapshot) -> Result<Mat, GraphError> {
    dense_adjacency_with_limit(g, DEFAULT_DENSE_LIMIT)
}

pub fn dense_adjacency_with_limit(g: &GraphSnapshot, limit: usize) -> Result<Mat, GraphError> {
    if g.n > limit {
        return Err(GraphError::DenseLimit { n: g.n, limit });
    }
    let mut a = Mat::zeros(g.n, g.n);
    for (u, v, w) in g.edges() {
        a[(u, v)] = w;
    }
    Ok(a)
}

/// Ordered snapshots over a shared node set.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSequence {
    n: usize,
    snapshots: Vec<GraphSnapshot>,
}

impl SnapshotSequence {
    pub fn new(snapshots: Vec<GraphSnapshot>) -> Result<Self, GraphError> {
        let first = snapshots.first().ok_or(GraphError::EmptySequence)?;
        let n = first.n;
        if let Some(bad) = snapshots.iter().find(|g| g.n != n) {
            return Err(GraphError::NodeCountMismatch {
                left: n,
                right: bad.n,
            });
        }
        Ok(Self { n, snapshots })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&GraphSnapshot> {
        self.snapshots.get(t)
    }

    pub fn snapshots(&self) -> &[GraphSnapshot] {
        &self.snapshots
    }

    /// Canonical text form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {}", self.len(), self.n).unwrap();
        for (t, g) in self.snapshots.iter().enumerate() {
            for (u, v, w) in g.edges() {
                writeln!(out, "{t} {u} {v} {}", fmt_real(w)).unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut header: Option<(usize, usize)> = None;
        let mut snapshots: Vec<GraphSnapshot> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |kind| GraphError::Parse {
                line: line_no,
                kind,
            };
            let Some((t_count, n)) = header else {
                let parsed = match fields.as_slice() {
                    [t, n] => t.parse::<usize>().ok().zip(n.parse::<usize>().ok()),
                    _ => None,
                };
                let (t_count, n) = parsed
                    .filter(|(t, _)| *t >= 1)
                    .ok_or_else(|| parse_err(ParseErrorKind::MalformedHeader))?;
                header = Some((t_count, n));
                snapshots = (0..t_count).map(|_| GraphSnapshot::empty(n)).collect();
                continue;
            };
            let [t, u, v, w] = fields.as_slice() else {
                return Err(parse_err(ParseErrorKind::MalformedEdge));
            };
            let (Ok(t), Ok(u), Ok(v)) = (t.parse::<usize>(), u.parse::<usize>(), v.parse::<usize>()) else {
                return Err(parse_err(ParseErrorKind::MalformedEdge));
            };
            let weight: f64 = w
                .parse()
                .map_err(|_| parse_err(ParseErrorKind::MalformedEdge))?;
            if t >= t_count {
                return Err(parse_err(ParseErrorKind::SnapshotOutOfRange { t, t_count }));
            }
            for node in [u, v] {
                if node >= n {
                    return Err(parse_err(ParseErrorKind::NodeOutOfRange { node, n }));
                }
            }
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(parse_err(ParseErrorKind::NonPositiveWeight(w.to_string())));
            }
            let g = &mut snapshots[t];
            if g.has_edge(u, v) {
                return Err(parse_err(ParseErrorKind::DuplicateEdge { t, u, v }));
            }
            g.edges.insert((u, v), weight);
        }
        if header.is_none() {
            return Err(GraphError::MissingHeader);
        }
        Self::new(snapshots)
    }
}

pub fn load_snapshots(path: impl AsRef<Path>) -> Result<SnapshotSequence, GraphError> {
    SnapshotSequence::parse(&std::fs::read_to_string(path)?)
}

pub fn save_snapshots(seq: &SnapshotSequence, path: impl AsRef<Path>) -> Result<(), GraphError> {
    std::fs::write(path, seq.to_text())?;
    Ok(())
}

/// Difference between two snapshots over the same node set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeDelta {
    pub added: Vec<(usize, usize, f64)>,
    pub removed: Vec<(usize, usize, f64)>,
    /// `(u, v, w_old, w_new)`
    pub reweighted: Vec<(usize, usize, f64, f64)>,
    pub touched_rows: BTreeSet<usize>,
}

impl EdgeDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.reweighted.is_empty()
    }

    /// Entry-wise changes `(u, v, new − old)` in `(u, v)` order.
    pub fn changes(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> = self
            .added
            .iter()
            .copied()
            .chain(self.removed.iter().map(|&(u, v, w)| (u, v, -w)))
            .chain(self.reweighted.iter().map(|&(u, v, a, b)| (u, v, b - a)))
            .collect();
        out.sort_by_key(|&(u, v, _)| (u, v));
        out
    }

    /// Applies the delta, checking that removed and reweighted entries match
    /// the current weights exactly.
    pub fn apply(&self, g: &GraphSnapshot) -> Result<GraphSnapshot, GraphError> {
        let mut next = g.clone();
        for &(u, v, w_old) in &self.removed {
            match next.remove_edge(u, v) {
                Some(w) if w == w_old => {}
                _ => return Err(GraphError::DeltaMismatch { u, v }),
            }
        }
        for &(u, v, w_old, w_new) in &self.reweighted {
            if next.weight(u, v) != w_old {
                return Err(GraphError::DeltaMismatch { u, v });
            }
            next.set_edge(u, v, w_new)?;
        }
        for &(u, v, w) in &self.added {
            if next.has_edge(u, v) {
                return Err(GraphError::DeltaMismatch { u, v });
            }
            next.set_edge(u, v, w)?;
        }
        Ok(next)
    }
}

/// The delta taking `prev` to `next`.
pub fn edge_delta(prev: &GraphSnapshot, next: &GraphSnapshot) -> Result<EdgeDelta, GraphError> {
    if prev.n != next.n {
        return Err(GraphError::NodeCountMismatch {
            left: prev.n,
            right: next.n,
        });
    }
    let mut delta = EdgeDelta::default();
    for (&(u, v), &w_old) in &prev.edges {
        match next.edges.get(&(u, v)) {
            None => {
                delta.removed.push((u, v, w_old));
                delta.touched_rows.insert(u);
            }
            Some(&w_new) if w_new != w_old => {
                delta.reweighted.push((u, v, w_old, w_new));
                delta.touched_rows.insert(u);
            }
            Some(_) => {}
        }
    }
    for (&(u, v), &w) in &next.edges {
        if !prev.edges.contains_key(&(u, v)) {
            delta.added.push((u, v, w));
            delta.touched_rows.insert(u);
        }
    }
    Ok(delta)
}
