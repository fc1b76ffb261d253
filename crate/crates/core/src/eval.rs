//! Evaluation tasks: graph reconstruction, static and temporal link
//! prediction, node classification, migration proximity and projection export.
//!
//! Rankings are deterministic: pairs sort by descending score, ties by `(u, v)`.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{GraphSnapshot, SnapshotSequence};
use crate::numerics::format::fmt_real;
use crate::numerics::rng::SeededRng;
use crate::numerics::{pca_project_2d, NumericsError};
use crate::series::EmbeddingSeries;
use crate::Mat;

pub type EdgeSet = BTreeSet<(usize, usize)>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("k={k} outside 1..={len}")]
    InvalidK { k: usize, len: usize },
    #[error("duplicate pair ({0},{1})")]
    DuplicatePair(usize, usize),
    #[error("score of pair ({0},{1}) is NaN")]
    NanScore(usize, usize),
    #[error("no node has a true edge")]
    NoContributingNodes,
    #[error("hide fraction {0} must lie strictly between 0 and 1")]
    HideFraction(f64),
    #[error("graph has {0} edges; need at least 2 to split")]
    TooFewEdges(usize),
    #[error("hiding {hidden} of {edges} edges leaves nothing to train on")]
    NothingLeft { hidden: usize, edges: usize },
    #[error("snapshot {0} out of range")]
    TimeOutOfRange(usize),
    #[error("score matrix is {rows}x{cols}, expected {n}x{n}")]
    ScoreShape { rows: usize, cols: usize, n: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    TrainFraction(f64),
    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("class {0} has no training example")]
    ClassAbsentFromTrain(usize),
    #[error("the split left no test examples")]
    EmptyTestSplit,
    #[error("{labels} labels for {rows} embedding rows")]
    LabelCount { labels: usize, rows: usize },
    #[error("community {0} has no non-migrated members")]
    EmptyCommunity(usize),
    #[error("no migrated nodes at snapshot {0}")]
    NoMigrations(usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scored candidate pairs in ranking order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPairs {
    pairs: Vec<(usize, usize, f64)>,
}

fn rank_order(a: &(usize, usize, f64), b: &(usize, usize, f64)) -> Ordering {
    b.2.partial_cmp(&a.2)
        .expect("scores are not NaN")
        .then((a.0, a.1).cmp(&(b.0, b.1)))
}

impl ScoredPairs {
    pub fn new(mut pairs: Vec<(usize, usize, f64)>) -> Result<Self, EvalError> {
        if let Some(&(u, v, _)) = pairs.iter().find(|p| p.2.is_nan()) {
            return Err(EvalError::NanScore(u, v));
        }
        let mut seen = BTreeSet::new();
        for &(u, v, _) in &pairs {
            if !seen.insert((u, v)) {
                return Err(EvalError::DuplicatePair(u, v));
            }
        }
        pairs.sort_by(rank_order);
        Ok(Self { pairs })
    }

    /// Pairs `(u, v)` of an `n×n` score matrix accepted by `keep`.
    pub fn from_matrix(scores: &Mat, keep: impl Fn(usize, usize) -> bool) -> Result<Self, EvalError> {
        let mut pairs = Vec::new();
        for u in 0..scores.nrows() {
            for v in 0..scores.ncols() {
                if keep(u, v) {
                    pairs.push((u, v, scores[(u, v)]));
                }
            }
        }
        Self::new(pairs)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    /// Splits into one ranking per source node, indexed by node.
    pub fn per_source(&self, n: usize) -> Vec<ScoredPairs> {
        let mut out = vec![Vec::new(); n];
        for &p in &self.pairs {
            out[p.0].push(p);
        }
        // Already in rank order; filtering preserves it.
        out.into_iter().map(|pairs| ScoredPairs { pairs }).collect()
    }
}

pub fn precision_at_k(sp: &ScoredPairs, truth: &EdgeSet, k: usize) -> Result<f64, EvalError> {
    if k == 0 || k > sp.len() {
        return Err(EvalError::InvalidK { k, len: sp.len() });
    }
    let hits = sp.pairs[..k]
        .iter()
        .filter(|&&(u, v, _)| truth.contains(&(u, v)))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Average precision of one ranking against `relevant` true edges.
fn average_precision(sp: &ScoredPairs, truth: &EdgeSet, relevant: usize) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &(u, v, _)) in sp.pairs.iter().enumerate() {
        if truth.contains(&(u, v)) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / relevant as f64
}

/// Mean of per-node average precision over nodes with at least one true
/// edge. `per_node[u]` ranks the candidates of source `u`; the denominator of
/// AP(u) counts every true edge of `u`, ranked or not.
pub fn mean_average_precision(per_node: &[ScoredPairs], truth: &EdgeSet) -> Result<f64, EvalError> {
    let aps: Vec<Option<f64>> = per_node
        .par_iter()
        .enumerate()
        .map(|(u, sp)| {
            let relevant = truth.range((u, 0)..(u + 1, 0)).count();
            (relevant > 0).then(|| average_precision(sp, truth, relevant))
        })
        .collect();
    let contributing: Vec<f64> = aps.into_iter().flatten().collect();
    if contributing.is_empty() {
        return Err(EvalError::NoContributingNodes);
    }
    Ok(contributing.iter().sum::<f64>() / contributing.len() as f64)
}

/// Sorted, deduplicated k values that are valid for `len` candidates.
pub fn clip_k_grid(k_grid: &[usize], len: usize) -> Vec<usize> {
    let ks: BTreeSet<usize> = k_grid.iter().copied().filter(|&k| k >= 1 && k <= len).collect();
    ks.into_iter().collect()
}

/// One evaluation outcome. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub task: String,
    pub method: String,
    pub seed: u64,
    pub config_digest: String,
    pub t: Option<usize>,
    pub mode: Option<String>,
    /// True when there was nothing to score (no truth edges).
    pub empty: bool,
    pub k_grid: Vec<usize>,
    pub precision_at_k: Vec<f64>,
    pub map: Option<f64>,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub proximity: Option<f64>,
}

impl EvalReport {
    pub fn new(task: &str, method: &str) -> Self {
        Self {
            task: task.to_string(),
            method: method.to_string(),
            seed: 0,
            config_digest: String::new(),
            t: None,
            mode: None,
            empty: false,
            k_grid: Vec::new(),
            precision_at_k: Vec::new(),
            map: None,
            micro_f1: None,
            macro_f1: None,
            proximity: None,
        }
    }

    pub fn with_provenance(mut self, seed: u64, config_digest: &str) -> Self {
        self.seed = seed;
        self.config_digest = config_digest.to_string();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn ranking_report(
    mut report: EvalReport,
    sp: &ScoredPairs,
    truth: &EdgeSet,
    n: usize,
    k_grid: &[usize],
) -> Result<EvalReport, EvalError> {
    if truth.is_empty() {
        report.empty = true;
        return Ok(report);
    }
    report.k_grid = clip_k_grid(k_grid, sp.len());
    report.precision_at_k = report
        .k_grid
        .iter()
        .map(|&k| precision_at_k(sp, truth, k))
        .collect::<Result<_, _>>()?;
    report.map = Some(mean_average_precision(&sp.per_source(n), truth)?);
    Ok(report)
}

fn check_scores(scores: &Mat, n: usize) -> Result<(), EvalError> {
    if scores.shape() != (n, n) {
        return Err(EvalError::ScoreShape {
            rows: scores.nrows(),
            cols: scores.ncols(),
            n,
        });
    }
    Ok(())
}

pub fn edge_set(g: &GraphSnapshot) -> EdgeSet {
    g.edges().map(|(u, v, _)| (u, v)).collect()
}

/// Ranks all off-diagonal pairs against the edges of `g`.
pub fn reconstruction_eval(scores: &Mat, g: &GraphSnapshot, k_grid: &[usize], method: &str) -> Result<EvalReport, EvalError> {
    check_scores(scores, g.n())?;
    let sp = ScoredPairs::from_matrix(scores, |u, v| u != v)?;
    ranking_report(EvalReport::new("reconstruction", method), &sp, &edge_set(g), g.n(), k_grid)
}

/// Hides `⌈f·|E|⌉` uniformly chosen edges. Nodes may end up isolated in the
/// training graph.
pub fn static_lp_split(
    g: &GraphSnapshot,
    hide_fraction: f64,
    rng: &mut SeededRng,
) -> Result<(GraphSnapshot, EdgeSet), EvalError> {
    if !(hide_fraction > 0.0 && hide_fraction < 1.0) {
        return Err(EvalError::HideFraction(hide_fraction));
    }
    let edges: Vec<(usize, usize)> = g.edges().map(|(u, v, _)| (u, v)).collect();
    if edges.len() < 2 {
        return Err(EvalError::TooFewEdges(edges.len()));
    }
    let hide = (hide_fraction * edges.len() as f64).ceil() as usize;
    if hide >= edges.len() {
        return Err(EvalError::NothingLeft {
            hidden: hide,
            edges: edges.len(),
        });
    }
    let hidden: EdgeSet = rng
        .sample_indices(edges.len(), hide)
        .into_iter()
        .map(|i| edges[i])
        .collect();
    let mut train = g.clone();
    for &(u, v) in &hidden {
        train.remove_edge(u, v);
    }
    Ok((train, hidden))
}

/// Ranks the non-edges of `train` against the hidden edges.
pub fn static_lp_eval(
    scores: &Mat,
    train: &GraphSnapshot,
    hidden: &EdgeSet,
    k_grid: &[usize],
    method: &str,
) -> Result<EvalReport, EvalError> {
    check_scores(scores, train.n())?;
    let sp = ScoredPairs::from_matrix(scores, |u, v| u != v && !train.has_edge(u, v))?;
    ranking_report(EvalReport::new("static_lp", method), &sp, hidden, train.n(), k_grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpMode {
    /// Every edge of the next snapshot is a target.
    All,
    /// Only edges absent from the current snapshot are targets.
    New,
}

impl LpMode {
    pub fn tag(self) -> &'static str {
        match self {
            LpMode::All => "all",
            LpMode::New => "new",
        }
    }
}

/// Scores for snapshot `t + 1` computed from snapshots up to `t`.
pub fn temporal_lp_eval(
    scores: &Mat,
    seq: &SnapshotSequence,
    t: usize,
    k_grid: &[usize],
    mode: LpMode,
    method: &str,
) -> Result<EvalReport, EvalError> {
    let (Some(now), Some(next)) = (seq.get(t), seq.get(t + 1)) else {
        return Err(EvalError::TimeOutOfRange(t + 1));
    };
    check_scores(scores, seq.n())?;
    let (truth, sp) = match mode {
        LpMode::All => (edge_set(next), ScoredPairs::from_matrix(scores, |u, v| u != v)?),
        LpMode::New => (
            edge_set(next).into_iter().filter(|&(u, v)| !now.has_edge(u, v)).collect(),
            ScoredPairs::from_matrix(scores, |u, v| u != v && !now.has_edge(u, v))?,
        ),
    };
    let mut report = EvalReport::new("temporal_lp", method);
    report.t = Some(t);
    report.mode = Some(mode.tag().to_string());
    ranking_report(report, &sp, &truth, seq.n(), k_grid)
}

const LR_ITERATIONS: usize = 500;
const LR_RATE: f64 = 0.1;
const LR_L2: f64 = 1e-4;

/// Micro- and macro-averaged F1 of single-label predictions. Micro-F1 equals
/// accuracy; macro-F1 averages per-class `2TP / (2TP + FP + FN)` over
/// `classes`, counting a class with no support and no predictions as 0.
pub fn f1_scores(truth: &[usize], predicted: &[usize], classes: &[usize]) -> (f64, f64) {
    let correct = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    let micro = correct as f64 / truth.len() as f64;
    let per_class: f64 = classes
        .iter()
        .map(|&c| {
            let tp = truth.iter().zip(predicted).filter(|&(&a, &b)| a == c && b == c).count();
            let fp = truth.iter().zip(predicted).filter(|&(&a, &b)| a != c && b == c).count();
            let fneg = truth.iter().zip(predicted).filter(|&(&a, &b)| a == c && b != c).count();
            let denom = 2 * tp + fp + fneg;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .sum();
    (micro, per_class / classes.len() as f64)
}

/// Per-class shuffled split; each class puts `round(train_frac·size)` members
/// in training.
fn stratified_split(labels: &[usize], classes: &[usize], train_frac: f64, rng: &mut SeededRng) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for &c in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rng.shuffle(&mut members);
        let k = (train_frac * members.len() as f64).round() as usize;
        if k == 0 {
            return Err(EvalError::ClassAbsentFromTrain(c));
        }
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    if test.is_empty() {
        return Err(EvalError::EmptyTestSplit);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Rows of `x` standardized with the statistics of `train` rows, plus a
/// trailing bias column of ones.
fn standardized_design(x: &Mat, train: &[usize]) -> Mat {
    let d = x.ncols();
    let m = train.len() as f64;
    let mut out = Mat::from_element(x.nrows(), d + 1, 1.0);
    for j in 0..d {
        let mean = train.iter().map(|&i| x[(i, j)]).sum::<f64>() / m;
        let var = train.iter().map(|&i| (x[(i, j)] - mean).powi(2)).sum::<f64>() / m;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..x.nrows() {
            out[(i, j)] = (x[(i, j)] - mean) / sd;
        }
    }
    out
}

/// Binary logistic regression by full-batch gradient descent; the bias
/// (last coefficient) is not penalized.
fn fit_logistic(x: &Mat, y: &[f64]) -> nalgebra::DVector<f64> {
    let (m, p) = (x.nrows() as f64, x.ncols());
    let y = nalgebra::DVector::from_column_slice(y);
    let mut w = nalgebra::DVector::zeros(p);
    for _ in 0..LR_ITERATIONS {
        let mut residual = x * &w;
        residual.apply(|z| *z = 1.0 / (1.0 + (-*z).exp()));
        residual -= &y;
        let mut grad = x.transpose() * residual / m;
        for j in 0..p - 1 {
            grad[j] += LR_L2 * w[j];
        }
        w -= grad * LR_RATE;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub micro_f1: f64,
    pub macro_f1: f64,
}

/// One-vs-rest logistic regression on standardized embeddings with a seeded
/// stratified split; F1 scores on the held-out part.
pub fn node_classification(emb: &Mat, labels: &[usize], train_frac: f64, rng: &mut SeededRng) -> Result<Classification, EvalError> {
    if labels.len() != emb.nrows() {
        return Err(EvalError::LabelCount {
            labels: labels.len(),
            rows: emb.nrows(),
        });
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(EvalError::TrainFraction(train_frac));
    }
    let classes: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(EvalError::TooFewClasses(classes.len()));
    }
    let (train, test) = stratified_split(labels, &classes, train_frac, rng)?;
    let design = standardized_design(emb, &train);
    let x_train = design.select_rows(&train);
    let x_test = design.select_rows(&test);

    let models: Vec<_> = classes
        .iter()
        .map(|&c| {
            let y: Vec<f64> = train.iter().map(|&i| f64::from(u8::from(labels[i] == c))).collect();
            fit_logistic(&x_train, &y)
        })
        .collect();
    let predicted: Vec<usize> = (0..test.len())
        .map(|r| {
            let row = x_test.row(r);
            let mut best = (f64::NEG_INFINITY, classes[0]);
            for (w, &c) in models.iter().zip(&classes) {
                let s = row.dot(&w.transpose());
                if s > best.0 {
                    best = (s, c);
                }
            }
            best.1
        })
        .collect();
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let (micro_f1, macro_f1) = f1_scores(&truth, &predicted, &classes);
    Ok(Classification { micro_f1, macro_f1 })
}

/// A node leaving `from` for `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub node: usize,
    pub from: usize,
    pub to: usize,
}

/// Fraction of moved nodes whose source embedding at `t` is strictly closer
/// to their destination community's centroid than to their origin's.
/// Centroids average the members of each community at `t` that are not in
/// `moves`. Exact ties (e.g. all-zero embeddings) count as not closer.
pub fn migration_proximity_stat(
    series: &EmbeddingSeries,
    labels_t: &[usize],
    moves: &[Move],
    t: usize,
) -> Result<f64, EvalError> {
    let step = series.get(t).ok_or(EvalError::TimeOutOfRange(t))?;
    let y = &step.src;
    if labels_t.len() != y.nrows() {
        return Err(EvalError::LabelCount {
            labels: labels_t.len(),
            rows: y.nrows(),
        });
    }
    if moves.is_empty() {
        return Err(EvalError::NoMigrations(t));
    }
    let moved: BTreeSet<usize> = moves.iter().map(|m| m.node).collect();
    let centroid = |c: usize| -> Result<nalgebra::RowDVector<f64>, EvalError> {
        let members: Vec<usize> = (0..labels_t.len())
            .filter(|&u| labels_t[u] == c && !moved.contains(&u))
            .collect();
        if members.is_empty() {
            return Err(EvalError::EmptyCommunity(c));
        }
        Ok(y.select_rows(&members).row_mean())
    };
    let mut closer = 0usize;
    for m in moves {
        let row = y.row(m.node);
        let to_dest = (row - centroid(m.to)?).norm();
        let to_origin = (row - centroid(m.from)?).norm();
        if to_dest < to_origin {
            closer += 1;
        }
    }
    Ok(closer as f64 / moves.len() as f64)
}

/// Lines `node x y label migrated` from the 2-D principal projection of the
/// source embedding at `t`.
pub fn projection_text(series: &EmbeddingSeries, t: usize, labels: &[usize], migrated: &[bool]) -> Result<String, EvalError> {
    let step = series.get(t).ok_or(EvalError::TimeOutOfRange(t))?;
    if labels.len() != step.src.nrows() || migrated.len() != step.src.nrows() {
        return Err(EvalError::LabelCount {
            labels: labels.len().min(migrated.len()),
            rows: step.src.nrows(),
        });
    }
    let proj = pca_project_2d(&step.src)?;
    let mut out = String::new();
    for u in 0..step.src.nrows() {
        writeln!(
            out,
            "{u} {} {} {} {}",
            fmt_real(proj.coords[(u, 0)]),
            fmt_real(proj.coords[(u, 1)]),
            labels[u],
            u8::from(migrated[u])
        )
        .unwrap();
    }
    Ok(out)
}

pub fn export_projection(
    series: &EmbeddingSeries,
    t: usize,
    labels: &[usize],
    migrated: &[bool],
    path: &Path,
) -> Result<(), EvalError> {
    std::fs::write(path, projection_text(series, t, labels, migrated)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::EmbeddingStep;
    use proptest::prelude::*;

    fn sp(pairs: &[(usize, usize, f64)]) -> ScoredPairs {
        ScoredPairs::new(pairs.to_vec()).unwrap()
    }

    fn set(pairs: &[(usize, usize)]) -> EdgeSet {
        pairs.iter().copied().collect()
    }

    #[test]
    fn ordering_breaks_ties_lexicographically() {
        let s = sp(&[(2, 0, 1.0), (0, 1, 1.0), (1, 0, 3.0), (0, 2, -1.0)]);
        let order: Vec<_> = s.pairs().iter().map(|p| (p.0, p.1)).collect();
        assert_eq!(order, vec![(1, 0), (0, 1), (2, 0), (0, 2)]);
        assert!(matches!(
            ScoredPairs::new(vec![(0, 1, 1.0), (0, 1, 2.0)]),
            Err(EvalError::DuplicatePair(0, 1))
        ));
        assert!(matches!(ScoredPairs::new(vec![(0, 1, f64::NAN)]), Err(EvalError::NanScore(0, 1))));
    }

    #[test]
    fn precision_trivial_cases() {
        let s = sp(&[(0, 1, 3.0), (1, 2, 2.0), (2, 0, 1.0)]);
        assert_eq!(precision_at_k(&s, &set(&[(0, 1), (1, 2)]), 2).unwrap(), 1.0);
        assert_eq!(precision_at_k(&s, &set(&[(5, 6)]), 3).unwrap(), 0.0);
        assert!(matches!(precision_at_k(&s, &set(&[]), 0), Err(EvalError::InvalidK { .. })));
        assert!(matches!(precision_at_k(&s, &set(&[]), 4), Err(EvalError::InvalidK { .. })));
    }

    #[test]
    fn ap_hand_example() {
        // Two true edges ranked first and third.
        let s = sp(&[(0, 1, 0.9), (0, 2, 0.8), (0, 3, 0.7), (0, 4, 0.1)]);
        let map = mean_average_precision(&[s], &set(&[(0, 1), (0, 3)])).unwrap();
        assert!((map - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn map_perfect_and_skipping() {
        let scores = Mat::from_row_slice(3, 3, &[0.0, 0.9, 0.1, 0.2, 0.0, 0.8, 0.5, 0.4, 0.0]);
        let all = ScoredPairs::from_matrix(&scores, |u, v| u != v).unwrap();
        // Node 2 has no true edges and is skipped.
        let truth = set(&[(0, 1), (1, 2)]);
        assert_eq!(mean_average_precision(&all.per_source(3), &truth).unwrap(), 1.0);
        assert!(matches!(
            mean_average_precision(&all.per_source(3), &set(&[])),
            Err(EvalError::NoContributingNodes)
        ));
    }

    /// Straight-from-definition oracles: a full sort of copied pairs.
    fn brute_precision(pairs: &[(usize, usize, f64)], truth: &EdgeSet, k: usize) -> f64 {
        let mut v = pairs.to_vec();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let swap = v[j].2 > v[i].2 || (v[j].2 == v[i].2 && (v[j].0, v[j].1) < (v[i].0, v[i].1));
                if swap {
                    v.swap(i, j);
                }
            }
        }
        v[..k].iter().filter(|p| truth.contains(&(p.0, p.1))).count() as f64 / k as f64
    }

    fn brute_map(pairs: &[(usize, usize, f64)], truth: &EdgeSet, n: usize) -> Option<f64> {
        let mut aps = Vec::new();
        for u in 0..n {
            let rel = truth.iter().filter(|e| e.0 == u).count();
            if rel == 0 {
                continue;
            }
            let mine: Vec<_> = pairs.iter().copied().filter(|p| p.0 == u).collect();
            let mut sum = 0.0;
            for i in 1..=mine.len() {
                let (pu, pv, _) = {
                    let mut sorted = mine.clone();
                    sorted.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then((a.0, a.1).cmp(&(b.0, b.1))));
                    sorted[i - 1]
                };
                if truth.contains(&(pu, pv)) {
                    sum += brute_precision(&mine, truth, i);
                }
            }
            aps.push(sum / rel as f64);
        }
        (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
    }

    fn random_instance(rng: &mut SeededRng) -> (usize, Vec<(usize, usize, f64)>, EdgeSet) {
        let n = 2 + rng.below(11) as usize;
        let mut pairs = Vec::new();
        let mut truth = EdgeSet::new();
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    // Coarse scores force many ties.
                    pairs.push((u, v, rng.below(5) as f64));
                    if rng.uniform() < 0.3 {
                        truth.insert((u, v));
                    }
                }
            }
        }
        (n, pairs, truth)
    }

    #[test]
    fn metrics_match_brute_force() {
        let mut rng = SeededRng::new(77);
        for _ in 0..100 {
            let (n, pairs, truth) = random_instance(&mut rng);
            let s = ScoredPairs::new(pairs.clone()).unwrap();
            for k in 1..=pairs.len() {
                assert_eq!(precision_at_k(&s, &truth, k).unwrap(), brute_precision(&pairs, &truth, k));
            }
            match brute_map(&pairs, &truth, n) {
                Some(m) => assert!((mean_average_precision(&s.per_source(n), &truth).unwrap() - m).abs() <= 1e-12),
                None => assert!(mean_average_precision(&s.per_source(n), &truth).is_err()),
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(seed in 0u64..500, shift in -5.0f64..5.0, scale in 0.1f64..10.0) {
            let mut rng = SeededRng::new(seed);
            let (n, pairs, truth) = random_instance(&mut rng);
            let moved: Vec<_> = pairs.iter().map(|&(u, v, s)| (u, v, (s * scale + shift).exp())).collect();
            let (a, b) = (ScoredPairs::new(pairs).unwrap(), ScoredPairs::new(moved).unwrap());
            for k in 1..=a.len() {
                prop_assert_eq!(precision_at_k(&a, &truth, k).unwrap(), precision_at_k(&b, &truth, k).unwrap());
            }
            let (ma, mb) = (mean_average_precision(&a.per_source(n), &truth).ok(), mean_average_precision(&b.per_source(n), &truth).ok());
            prop_assert_eq!(ma, mb);
        }

        #[test]
        fn hit_count_is_monotone(seed in 0u64..500) {
            let mut rng = SeededRng::new(seed);
            let (_, pairs, truth) = random_instance(&mut rng);
            let s = ScoredPairs::new(pairs).unwrap();
            let mut last = 0.0;
            for k in 1..=s.len() {
                let hits = precision_at_k(&s, &truth, k).unwrap() * k as f64;
                prop_assert!(hits + 1e-9 >= last);
                last = hits;
            }
        }
    }

    #[test]
    fn k_grid_clipping() {
        assert_eq!(clip_k_grid(&[100, 2, 0, 5, 2], 10), vec![2, 5]);
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> GraphSnapshot {
        GraphSnapshot::from_edges(n, edges.iter().map(|&(u, v)| (u, v, 1.0))).unwrap()
    }

    #[test]
    fn split_partitions_and_reproduces() {
        let g = graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]);
        let (train, hidden) = static_lp_split(&g, 0.3, &mut SeededRng::new(4)).unwrap();
        assert_eq!(hidden.len(), 3);
        let train_edges = edge_set(&train);
        assert!(train_edges.is_disjoint(&hidden));
        let union: EdgeSet = train_edges.union(&hidden).copied().collect();
        assert_eq!(union, edge_set(&g));
        let again = static_lp_split(&g, 0.3, &mut SeededRng::new(4)).unwrap();
        assert_eq!(again, (train, hidden));
    }

    #[test]
    fn split_edge_cases() {
        let two = graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(static_lp_split(&two, 0.5, &mut SeededRng::new(0)).unwrap().1.len(), 1);
        assert!(matches!(static_lp_split(&two, 0.9, &mut SeededRng::new(0)), Err(EvalError::NothingLeft { .. })));
        assert!(matches!(static_lp_split(&graph(3, &[(0, 1)]), 0.5, &mut SeededRng::new(0)), Err(EvalError::TooFewEdges(1))));
        assert!(matches!(static_lp_split(&two, 1.0, &mut SeededRng::new(0)), Err(EvalError::HideFraction(_))));
    }

    #[test]
    fn static_lp_scores_only_train_non_edges() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let (train, hidden) = static_lp_split(&g, 0.25, &mut SeededRng::new(1)).unwrap();
        let truth = dense(&g);
        let r = static_lp_eval(&truth, &train, &hidden, &[1, 20], "oracle").unwrap();
        assert_eq!(r.k_grid, vec![1]);
        assert_eq!(r.precision_at_k, vec![1.0]);
        assert_eq!(r.map, Some(1.0));
    }

    fn dense(g: &GraphSnapshot) -> Mat {
        crate::graph::dense_adjacency(g).unwrap()
    }

    #[test]
    fn temporal_modes() {
        let g0 = graph(4, &[(0, 1), (1, 2)]);
        let g1 = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let seq = SnapshotSequence::new(vec![g0.clone(), g1.clone(), g1.clone()]).unwrap();
        let perfect = dense(&g1);
        let all = temporal_lp_eval(&perfect, &seq, 0, &[3], LpMode::All, "oracle").unwrap();
        assert_eq!(all.precision_at_k, vec![1.0]);
        let new = temporal_lp_eval(&perfect, &seq, 0, &[1], LpMode::New, "oracle").unwrap();
        assert_eq!((new.precision_at_k.clone(), new.map), (vec![1.0], Some(1.0)));
        let unchanged = temporal_lp_eval(&perfect, &seq, 1, &[1], LpMode::New, "oracle").unwrap();
        assert!(unchanged.empty && unchanged.map.is_none());
        assert!(matches!(
            temporal_lp_eval(&perfect, &seq, 2, &[1], LpMode::All, "oracle"),
            Err(EvalError::TimeOutOfRange(3))
        ));
        assert!(matches!(
            temporal_lp_eval(&Mat::zeros(2, 2), &seq, 0, &[1], LpMode::All, "x"),
            Err(EvalError::ScoreShape { .. })
        ));
    }

    #[test]
    fn temporal_svd_scores_match_exhaustive_ranking() {
        use crate::sbm::{DynamicSbmSeries, SbmParams};
        let s = DynamicSbmSeries::generate(&SbmParams {
            node_num: 50,
            community_num: 2,
            length: 3,
            diminish_community: 1,
            node_change_num: 2,
            p_in: 0.2,
            p_out: 0.02,
            seed: 5,
        })
        .unwrap();
        let series = crate::svd_embed::optimal_svd_series(&s.sequence, 8).unwrap();
        let scores = series.get(1).unwrap().scores();
        let next = s.sequence.get(2).unwrap();
        let truth = edge_set(next);
        let r = temporal_lp_eval(&scores, &s.sequence, 1, &[10, 100, 1000], LpMode::All, "optsvd").unwrap();
        let pairs: Vec<_> = (0..50)
            .flat_map(|u| (0..50).map(move |v| (u, v)))
            .filter(|(u, v)| u != v)
            .map(|(u, v)| (u, v, scores[(u, v)]))
            .collect();
        for (&k, &p) in r.k_grid.iter().zip(&r.precision_at_k) {
            assert_eq!(p, brute_precision(&pairs, &truth, k));
        }
        assert!((r.map.unwrap() - brute_map(&pairs, &truth, 50).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn f1_hand_fixture() {
        // truth 0 0 1 1 1 2, pred 0 0 0 1 1 1
        // class 0: TP2 FP1 FN0 -> 4/5; class 1: TP2 FP1 FN1 -> 4/6; class 2: TP0 FP0 FN1 -> 0.
        let (micro, macro_) = f1_scores(&[0, 0, 1, 1, 1, 2], &[0, 0, 0, 1, 1, 1], &[0, 1, 2]);
        assert!((micro - 4.0 / 6.0).abs() < 1e-15);
        assert!((macro_ - (0.8 + 4.0 / 6.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn separable_clusters_classify_perfectly() {
        let mut rng = SeededRng::new(3);
        let n = 60;
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let emb = Mat::from_fn(n, 2, |i, j| 20.0 * ((labels[i] + j) % 3) as f64 + rng.uniform_range(-0.5, 0.5));
        let c = node_classification(&emb, &labels, 0.5, &mut SeededRng::new(9)).unwrap();
        assert_eq!((c.micro_f1, c.macro_f1), (1.0, 1.0));
    }

    #[test]
    fn random_labels_score_near_chance() {
        let mut total = 0.0;
        for seed in 0..20 {
            let mut rng = SeededRng::new(seed);
            let emb = Mat::from_fn(200, 8, |_, _| rng.uniform_range(-1.0, 1.0));
            let labels: Vec<usize> = (0..200).map(|i| i % 2).collect();
            let c = node_classification(&emb, &labels, 0.5, &mut rng).unwrap();
            assert!((c.micro_f1 - 0.5).abs() <= 0.15, "seed {seed}: {}", c.micro_f1);
            total += c.micro_f1;
        }
        assert!((total / 20.0 - 0.5).abs() <= 0.1);
    }

    #[test]
    fn classification_errors() {
        let emb = Mat::zeros(4, 2);
        let mut rng = SeededRng::new(0);
        assert!(matches!(node_classification(&emb, &[0, 0, 0, 0], 0.5, &mut rng), Err(EvalError::TooFewClasses(1))));
        assert!(matches!(node_classification(&emb, &[0, 0, 0, 1], 0.4, &mut rng), Err(EvalError::ClassAbsentFromTrain(1))));
        assert!(matches!(node_classification(&emb, &[0, 1], 0.5, &mut rng), Err(EvalError::LabelCount { .. })));
        assert!(matches!(node_classification(&emb, &[0, 0, 1, 1], 1.0, &mut rng), Err(EvalError::TrainFraction(_))));
    }

    fn single_step(y: Mat) -> EmbeddingSeries {
        EmbeddingSeries::new("test", serde_json::Value::Null, vec![EmbeddingStep { t: 0, src: y.clone(), tgt: y }]).unwrap()
    }

    #[test]
    fn proximity_cases() {
        // Community 0 around (0,0), community 1 around (10,0); node 4 moved 1 -> 0.
        let labels = [0, 0, 1, 1, 0];
        let moves = [Move { node: 4, from: 1, to: 0 }];
        let at_dest = Mat::from_row_slice(5, 2, &[-1.0, 0.0, 1.0, 0.0, 9.0, 0.0, 11.0, 0.0, 0.0, 0.0]);
        assert_eq!(migration_proximity_stat(&single_step(at_dest), &labels, &moves, 0).unwrap(), 1.0);
        let at_origin = Mat::from_row_slice(5, 2, &[-1.0, 0.0, 1.0, 0.0, 9.0, 0.0, 11.0, 0.0, 10.0, 0.0]);
        assert_eq!(migration_proximity_stat(&single_step(at_origin), &labels, &moves, 0).unwrap(), 0.0);
        assert_eq!(migration_proximity_stat(&single_step(Mat::zeros(5, 2)), &labels, &moves, 0).unwrap(), 0.0);
        assert!(matches!(
            migration_proximity_stat(&single_step(Mat::zeros(5, 2)), &[0, 0, 0, 0, 0], &moves, 0),
            Err(EvalError::EmptyCommunity(1))
        ));
        assert!(matches!(
            migration_proximity_stat(&single_step(Mat::zeros(5, 2)), &labels, &[], 0),
            Err(EvalError::NoMigrations(0))
        ));
    }

    #[test]
    fn projection_lines() {
        let one = projection_text(&single_step(Mat::from_row_slice(1, 2, &[3.0, 4.0])), 0, &[1], &[true]).unwrap();
        assert_eq!(one, "0 0 0 1 1\n");
        let mut rng = SeededRng::new(2);
        let y = Mat::from_fn(9, 4, |_, _| rng.uniform());
        let s = single_step(y);
        let text = projection_text(&s, 0, &[0; 9], &[false; 9]).unwrap();
        assert_eq!(text.lines().count(), 9);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        export_projection(&s, 0, &[0; 9], &[false; 9], &a).unwrap();
        export_projection(&s, 0, &[0; 9], &[false; 9], &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert!(projection_text(&s, 1, &[0; 9], &[false; 9]).is_err());
    }

    #[test]
    fn report_key_order_is_stable() {
        let json = EvalReport::new("reconstruction", "optsvd").with_provenance(7, "abc").to_json();
        let keys: Vec<usize> = ["\"task\"", "\"method\"", "\"seed\"", "\"config_digest\"", "\"k_grid\"", "\"precision_at_k\"", "\"map\""]
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }
}
