//! Dynamic stochastic block models with a diminishing community.
//!
//! Communities start as contiguous id ranges of near-equal size (the
//! remainder goes to the last community). At every step after the first,
//! `node_change_num` members of the diminishing community move to a uniformly
//! chosen other community and only the edges incident to moved nodes are
//! redrawn; every other edge is carried over unchanged.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphSnapshot, SnapshotSequence};
use crate::numerics::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum SbmError {
    #[error("invalid SBM parameters: {0}")]
    InvalidParams(String),
    #[error("edge probabilities must lie in [0, 1], got p_in={p_in}, p_out={p_out}")]
    InvalidProbability { p_in: f64, p_out: f64 },
    #[error("community {community} has {available} members left, cannot migrate {wanted}")]
    Exhausted {
        community: usize,
        available: usize,
        wanted: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbmParams {
    pub node_num: usize,
    pub community_num: usize,
    pub length: usize,
    pub diminish_community: usize,
    pub node_change_num: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
}

fn default_diminish() -> usize {
    1
}
fn default_p_in() -> f64 {
    0.1
}
fn default_p_out() -> f64 {
    0.01
}

impl Default for SbmParams {
    /// 1000 nodes, 2 communities, 4 steps, 10 migrations per step.
    fn default() -> Self {
        Self {
            node_num: 1000,
            community_num: 2,
            length: 4,
            diminish_community: default_diminish(),
            node_change_num: 10,
            p_in: default_p_in(),
            p_out: default_p_out(),
            seed: 0,
        }
    }
}

impl SbmParams {
    pub fn validate(&self) -> Result<(), SbmError> {
        let bad = |m: String| Err(SbmError::InvalidParams(m));
        if self.community_num < 2 {
            return bad(format!("community_num must be >= 2, got {}", self.community_num));
        }
        if self.node_num < self.community_num {
            return bad(format!(
                "node_num {} smaller than community_num {}",
                self.node_num, self.community_num
            ));
        }
        if self.length < 1 {
            return bad("length must be >= 1".into());
        }
        if self.diminish_community >= self.community_num {
            return bad(format!(
                "diminish_community {} out of range for {} communities",
                self.diminish_community, self.community_num
            ));
        }
        if self.node_change_num == 0 {
            return bad("node_change_num must be >= 1".into());
        }
        let size = community_sizes(self.node_num, self.community_num)[self.diminish_community];
        let total = self.node_change_num * (self.length - 1);
        if total >= size {
            return bad(format!(
                "node_change_num * (length - 1) = {total} must be below the diminishing community size {size}"
            ));
        }
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return bad(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={}, p_out={}",
                self.p_in, self.p_out
            ));
        }
        Ok(())
    }
}

fn community_sizes(node_num: usize, community_num: usize) -> Vec<usize> {
    let base = node_num / community_num;
    let mut sizes = vec![base; community_num];
    sizes[community_num - 1] += node_num - base * community_num;
    sizes
}

/// Contiguous near-equal blocks, remainder to the last community.
pub fn initial_labels(node_num: usize, community_num: usize) -> Vec<usize> {
    let base = node_num / community_num;
    (0..node_num)
        .map(|u| (u / base.max(1)).min(community_num - 1))
        .collect()
}

/// Draws a directed edge for every ordered pair `u ≠ v` with probability
/// `p_in` inside a community and `p_out` across, weight 1. Pairs are visited
/// in `(u, v)` order, one uniform draw each.
pub fn generate_sbm_snapshot(
    labels: &[usize],
    p_in: f64,
    p_out: f64,
    rng: &mut SeededRng,
) -> Result<GraphSnapshot, SbmError> {
    check_probabilities(p_in, p_out)?;
    let n = labels.len();
    let mut g = GraphSnapshot::empty(n);
    for u in 0..n {
        for v in 0..n {
            if u != v && draw_edge(labels, u, v, p_in, p_out, rng) {
                g.set_edge(u, v, 1.0).expect("valid edge");
            }
        }
    }
    Ok(g)
}

fn check_probabilities(p_in: f64, p_out: f64) -> Result<(), SbmError> {
    if !((0.0..=1.0).contains(&p_in) && (0.0..=1.0).contains(&p_out)) {
        return Err(SbmError::InvalidProbability { p_in, p_out });
    }
    Ok(())
}

fn draw_edge(labels: &[usize], u: usize, v: usize, p_in: f64, p_out: f64, rng: &mut SeededRng) -> bool {
    let p = if labels[u] == labels[v] { p_in } else { p_out };
    rng.uniform() < p
}

/// One node moving between communities on entering snapshot `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Migration {
    pub t: usize,
    pub node: usize,
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSbmSeries {
    pub sequence: SnapshotSequence,
    /// `labels[t][u]`: community of `u` at snapshot `t`.
    pub labels: Vec<Vec<usize>>,
    /// `migrated[t]`: nodes that changed community entering `t` (empty at 0).
    pub migrated: Vec<Vec<usize>>,
    pub migrations: Vec<Migration>,
}

impl DynamicSbmSeries {
    /// Generates with a fresh stream seeded from `params.seed`.
    pub fn generate(params: &SbmParams) -> Result<Self, SbmError> {
        diminish_series(params, &mut SeededRng::new(params.seed))
    }

    /// Lines `t node community`, sorted by `(t, node)`.
    pub fn labels_text(&self) -> String {
        let mut out = String::new();
        for (t, labels) in self.labels.iter().enumerate() {
            for (u, c) in labels.iter().enumerate() {
                writeln!(out, "{t} {u} {c}").unwrap();
            }
        }
        out
    }

    /// Lines `t node old_community new_community`, sorted by `(t, node)`.
    pub fn migrations_text(&self) -> String {
        let mut out = String::new();
        for m in &self.migrations {
            writeln!(out, "{} {} {} {}", m.t, m.node, m.from, m.to).unwrap();
        }
        out
    }

    pub fn save(&self, graph: &Path, labels: &Path, migrations: &Path) -> std::io::Result<()> {
        std::fs::write(graph, self.sequence.to_text())?;
        std::fs::write(labels, self.labels_text())?;
        std::fs::write(migrations, self.migrations_text())
    }
}

/// Parses `t node community` lines into `labels[t][node]`. Every node must be
/// labelled at every listed snapshot.
pub fn parse_labels_text(text: &str, n: usize) -> Result<Vec<Vec<usize>>, LabelParseError> {
    let mut rows: Vec<Vec<Option<usize>>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f = parse_fields::<3>(line, i)?;
        let [t, u, c] = f;
        if u >= n {
            return Err(LabelParseError { line: i + 1, msg: format!("node {u} >= n={n}") });
        }
        if rows.len() <= t {
            rows.resize(t + 1, vec![None; n]);
        }
        if rows[t][u].replace(c).is_some() {
            return Err(LabelParseError { line: i + 1, msg: format!("node {u} labelled twice at t={t}") });
        }
    }
    rows.into_iter()
        .enumerate()
        .map(|(t, r)| {
            r.into_iter().enumerate().map(|(u, c)| {
                c.ok_or(LabelParseError { line: 0, msg: format!("node {u} has no label at t={t}") })
            }).collect()
        })
        .collect()
}

/// Parses `t node from to` lines.
pub fn parse_migrations_text(text: &str) -> Result<Vec<Migration>, LabelParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let [t, node, from, to] = parse_fields::<4>(line, i)?;
        out.push(Migration { t, node, from, to });
    }
    Ok(out)
}

#[derive(Debug, Error)]
#[error("line {line}: {msg}")]
pub struct LabelParseError {
    pub line: usize,
    pub msg: String,
}

fn parse_fields<const K: usize>(line: &str, index: usize) -> Result<[usize; K], LabelParseError> {
    let vals: Vec<usize> = line
        .split_whitespace()
        .map(|x| x.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| LabelParseError { line: index + 1, msg: "expected non-negative integers".into() })?;
    vals.try_into()
        .map_err(|_| LabelParseError { line: index + 1, msg: format!("expected {K} fields") })
}

pub fn diminish_series(params: &SbmParams, rng: &mut SeededRng) -> Result<DynamicSbmSeries, SbmError> {
    params.validate()?;
    let n = params.node_num;
    let mut labels = initial_labels(n, params.community_num);
    let mut graph = generate_sbm_snapshot(&labels, params.p_in, params.p_out, rng)?;

    let mut snapshots = vec![graph.clone()];
    let mut all_labels = vec![labels.clone()];
    let mut migrated = vec![Vec::new()];
    let mut migrations = Vec::new();

    for t in 1..params.length {
        let members: Vec<usize> = (0..n)
            .filter(|&u| labels[u] == params.diminish_community)
            .collect();
        if members.len() < params.node_change_num {
            return Err(SbmError::Exhausted {
                community: params.diminish_community,
                available: members.len(),
                wanted: params.node_change_num,
            });
        }
        let moving: Vec<usize> = rng
            .sample_indices(members.len(), params.node_change_num)
            .into_iter()
            .map(|i| members[i])
            .collect();
        for &u in &moving {
            let from = labels[u];
            let r = rng.below(params.community_num - 1);
            let to = if r >= from { r + 1 } else { r };
            labels[u] = to;
            migrations.push(Migration { t, node: u, from, to });
        }

        let moved: BTreeSet<usize> = moving.iter().copied().collect();
        for &m in &moved {
            for v in 0..n {
                graph.remove_edge(m, v);
                graph.remove_edge(v, m);
            }
        }
        for u in 0..n {
            for v in 0..n {
                if u != v
                    && (moved.contains(&u) || moved.contains(&v))
                    && draw_edge(&labels, u, v, params.p_in, params.p_out, rng)
                {
                    graph.set_edge(u, v, 1.0).expect("valid edge");
                }
            }
        }

        snapshots.push(graph.clone());
        all_labels.push(labels.clone());
        migrated.push(moving);
    }

    Ok(DynamicSbmSeries {
        sequence: SnapshotSequence::new(snapshots).expect("shared node count"),
        labels: all_labels,
        migrated,
        migrations,
    })
}
