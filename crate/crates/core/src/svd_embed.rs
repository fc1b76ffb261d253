//! SVD-family embeddings.
//!
//! * optimal: truncated SVD of every snapshot's adjacency,
//! * incremental: additive rank-k modification of the previous factorization
//!   (orthogonalize the perturbation factors against the current subspaces,
//!   re-diagonalize a small core, re-truncate),
//! * rerun: incremental with a restart whenever the maintained loss exceeds
//!   a Weyl-type lower bound on the optimal loss by more than `theta`.
//!
//! The incremental state tracks a factorization of rank `r ≥ d` (by default
//! `min(n, 4d)`); embeddings and losses use its leading `d` triplets. With
//! `r = d` the scheme re-truncates to the embedding rank at every step.
//!
//! Embeddings are the asymmetric pair `Y_src = U √S`, `Y_tgt = V √S`, so that
//! `Y_src Y_tgtᵀ = U S Vᵀ`.

use nalgebra::DVector;
use serde_json::json;
use thiserror::Error;

use crate::graph::{dense_adjacency, edge_delta, EdgeDelta, GraphError, GraphSnapshot, SnapshotSequence};
use crate::numerics::{
    frobenius_sq, max_orthonormality_error, reorthonormalize, truncated_svd, NumericsError, TruncatedSvd,
};
use crate::series::{EmbeddingSeries, EmbeddingStep, SeriesError};
use crate::Mat;

/// Residual columns shorter than this (relative to the column norm, floored
/// at 1) are treated as already spanned and dropped.
const DROP_TOL: f64 = 1e-12;
/// Orthonormality drift that triggers a re-orthonormalization.
const ORTHO_TOL: f64 = 1e-10;
/// Default tracked rank as a multiple of the embedding dimension.
pub const DEFAULT_TRACK_FACTOR: usize = 4;

/// Tracked rank used by the series functions: `min(n, DEFAULT_TRACK_FACTOR·d)`.
pub fn default_tracked_rank(n: usize, d: usize) -> usize {
    (DEFAULT_TRACK_FACTOR * d).min(n).max(d)
}

#[derive(Debug, Error)]
pub enum SvdEmbedError {
    #[error("embedding dimension {d} out of range for n={n}")]
    RankOutOfRange { d: usize, n: usize },
    #[error("tracked rank {tracked} must lie in [d={d}, n={n}]")]
    TrackedRank { tracked: usize, d: usize, n: usize },
    #[error("restart tolerance must be positive, got {0}")]
    InvalidTheta(f64),
    #[error("perturbation factors have shapes {p:?} and {q:?}, expected n={n} rows and equal widths")]
    FactorShape {
        p: (usize, usize),
        q: (usize, usize),
        n: usize,
    },
    #[error("no embedding for snapshot {0}")]
    TimeOutOfRange(usize),
    #[error("pair ({u},{v}) out of range for n={n}")]
    NodeOutOfRange { u: usize, v: usize, n: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Maintained truncated factorization plus restart bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactorState {
    /// Tracked factorization, rank `r ≥ d`.
    pub factor: TruncatedSvd,
    /// Embedding dimension.
    pub d: usize,
    /// Snapshot index the factorization currently describes.
    pub t: usize,
    pub t_last_restart: usize,
    pub sigma_restart: DVector<f64>,
    /// Σ ‖ΔA‖_F over the updates since the last restart.
    pub pert_norm_sum: f64,
    /// Exact `‖A_t − U_d S_d V_dᵀ‖_F²` for the leading `d` triplets.
    pub cur_loss: f64,
    adjacency: Mat,
}

impl SvdFactorState {
    /// Optimal factorization of `adjacency` tracking `tracked` triplets.
    pub fn optimal(adjacency: Mat, d: usize, tracked: usize, t: usize) -> Result<Self, SvdEmbedError> {
        let n = adjacency.nrows();
        if d == 0 || d > n {
            return Err(SvdEmbedError::RankOutOfRange { d, n });
        }
        if tracked < d || tracked > n {
            return Err(SvdEmbedError::TrackedRank { tracked, d, n });
        }
        let factor = truncated_svd(&adjacency, tracked)?;
        let cur_loss = leading(&factor, d).residual_sq(&adjacency);
        Ok(Self {
            sigma_restart: factor.s.rows(0, d).into_owned(),
            factor,
            d,
            t,
            t_last_restart: t,
            pert_norm_sum: 0.0,
            cur_loss,
            adjacency,
        })
    }

    /// The adjacency the factorization tracks.
    pub fn adjacency(&self) -> &Mat {
        &self.adjacency
    }

    /// Leading rank-`d` part of the tracked factorization.
    pub fn leading(&self) -> TruncatedSvd {
        leading(&self.factor, self.d)
    }

    /// `(U_d √S_d, V_d √S_d)`.
    pub fn embeddings(&self) -> (Mat, Mat) {
        let mut src = self.factor.u.columns(0, self.d).into_owned();
        let mut tgt = self.factor.v.columns(0, self.d).into_owned();
        for j in 0..self.d {
            let w = self.factor.s[j].sqrt();
            src.column_mut(j).scale_mut(w);
            tgt.column_mut(j).scale_mut(w);
        }
        (src, tgt)
    }

    /// Lower bound on the optimal rank-`d` loss of the current adjacency:
    /// by Weyl, `σ_i(A_t) ≤ σ_i(A_restart) + Σ‖ΔA‖_F`, so
    /// `‖A_t‖_F² − Σ_i (σ_i(A_restart) + Σ‖ΔA‖_F)²` cannot exceed it.
    pub fn loss_bound(&self) -> f64 {
        let kept: f64 = self
            .sigma_restart
            .iter()
            .map(|s| (s + self.pert_norm_sum).max(0.0).powi(2))
            .sum();
        (frobenius_sq(&self.adjacency) - kept).max(0.0)
    }

    fn step(&self) -> EmbeddingStep {
        let (src, tgt) = self.embeddings();
        EmbeddingStep { t: self.t, src, tgt }
    }
}

fn leading(f: &TruncatedSvd, d: usize) -> TruncatedSvd {
    TruncatedSvd {
        u: f.u.columns(0, d).into_owned(),
        s: f.s.rows(0, d).into_owned(),
        v: f.v.columns(0, d).into_owned(),
    }
}

/// Optimal rank-`d` embedding of one snapshot. The returned state tracks
/// exactly `d` triplets.
pub fn optimal_svd_embed(g: &GraphSnapshot, d: usize) -> Result<(Mat, Mat, SvdFactorState), SvdEmbedError> {
    let state = SvdFactorState::optimal(dense_adjacency(g)?, d, d, 0)?;
    let (src, tgt) = state.embeddings();
    Ok((src, tgt, state))
}

/// Factors `A_next − A_prev = P Qᵀ` with one column per touched row `u`
/// (ascending): `P[:, j] = e_u`, `Q[:, j]` the change of row `u`.
pub fn delta_factor(delta: &EdgeDelta, n: usize) -> (Mat, Mat) {
    let rows: Vec<usize> = delta.touched_rows.iter().copied().collect();
    let k = rows.len();
    let mut p = Mat::zeros(n, k);
    let mut q = Mat::zeros(n, k);
    for (j, &u) in rows.iter().enumerate() {
        p[(u, j)] = 1.0;
    }
    for (u, v, dw) in delta.changes() {
        let j = rows.binary_search(&u).expect("changed row is touched");
        q[(v, j)] += dw;
    }
    (p, q)
}

/// Orthonormal columns extending `basis` to cover `cols`. Two Gram-Schmidt
/// passes per column; columns whose residual vanishes are dropped.
fn extend_basis(basis: &Mat, cols: &Mat) -> Mat {
    let n = basis.nrows();
    let mut extra: Vec<DVector<f64>> = Vec::new();
    for c in cols.column_iter() {
        let scale = c.norm().max(1.0);
        let mut r: DVector<f64> = c.into_owned();
        for _ in 0..2 {
            r -= basis * (basis.transpose() * &r);
            for e in &extra {
                let proj = e.dot(&r);
                r.axpy(-proj, e, 1.0);
            }
        }
        let norm = r.norm();
        if norm > DROP_TOL * scale {
            extra.push(r / norm);
        }
    }
    Mat::from_fn(n, extra.len(), |i, j| extra[j][i])
}

fn hstack(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Updates the tracked factorization of `A` to one of `A + P Qᵀ`, keeping
/// the tracked rank.
pub fn incremental_update(state: &SvdFactorState, p: &Mat, q: &Mat) -> Result<SvdFactorState, SvdEmbedError> {
    let n = state.adjacency.nrows();
    if p.nrows() != n || q.nrows() != n || p.ncols() != q.ncols() {
        return Err(SvdEmbedError::FactorShape {
            p: p.shape(),
            q: q.shape(),
            n,
        });
    }
    let mut next = state.clone();
    next.t = state.t + 1;
    // ‖P Qᵀ‖_F² = tr((PᵀP)(QᵀQ))
    let pert_sq = ((p.transpose() * p).component_mul(&(q.transpose() * q))).sum();
    let pert = pert_sq.max(0.0).sqrt();
    if pert == 0.0 {
        return Ok(next);
    }

    let f = &state.factor;
    let r = f.rank();
    let basis_u = hstack(&f.u, &extend_basis(&f.u, p));
    let basis_v = hstack(&f.v, &extend_basis(&f.v, q));
    let coef_p = basis_u.transpose() * p;
    let coef_q = basis_v.transpose() * q;
    let mut core = coef_p * coef_q.transpose();
    for j in 0..r {
        core[(j, j)] += f.s[j];
    }
    let small = truncated_svd(&core, r)?;
    let mut factor = TruncatedSvd {
        u: basis_u * small.u,
        s: small.s,
        v: basis_v * small.v,
    };
    if max_orthonormality_error(&factor.u) > ORTHO_TOL || max_orthonormality_error(&factor.v) > ORTHO_TOL {
        factor = reorthonormalize(&factor);
    }

    next.adjacency += p * q.transpose();
    next.cur_loss = leading(&factor, state.d).residual_sq(&next.adjacency);
    next.factor = factor;
    next.pert_norm_sum += pert;
    Ok(next)
}

/// One line of the restart log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartRecord {
    pub t: usize,
    pub restarted: bool,
    pub cur_loss: f64,
    pub bound: f64,
}

impl RestartRecord {
    pub fn to_line(&self) -> String {
        use crate::numerics::format::fmt_real;
        format!(
            "{} {} {} {}",
            self.t,
            u8::from(self.restarted),
            fmt_real(self.cur_loss),
            fmt_real(self.bound)
        )
    }
}

pub fn restart_log_text(log: &[RestartRecord]) -> String {
    log.iter().map(|r| r.to_line() + "\n").collect()
}

/// Optimal SVD embedding of every snapshot independently.
pub fn optimal_svd_series(seq: &SnapshotSequence, d: usize) -> Result<EmbeddingSeries, SvdEmbedError> {
    let steps = seq
        .snapshots()
        .iter()
        .enumerate()
        .map(|(t, g)| Ok(SvdFactorState::optimal(dense_adjacency(g)?, d, d, t)?.step()))
        .collect::<Result<Vec<_>, SvdEmbedError>>()?;
    Ok(EmbeddingSeries::new("optsvd", json!({ "d": d }), steps)?)
}

fn snapshot_factors(seq: &SnapshotSequence, t: usize) -> Result<(Mat, Mat), SvdEmbedError> {
    let delta = edge_delta(&seq.snapshots()[t - 1], &seq.snapshots()[t])?;
    Ok(delta_factor(&delta, seq.n()))
}

/// Optimal factorization at the first snapshot, additive updates after.
/// Also returns the per-step states' exact losses.
pub fn incremental_svd_series(seq: &SnapshotSequence, d: usize) -> Result<(EmbeddingSeries, Vec<f64>), SvdEmbedError> {
    incremental_svd_series_tracked(seq, d, default_tracked_rank(seq.n(), d))
}

pub fn incremental_svd_series_tracked(
    seq: &SnapshotSequence,
    d: usize,
    tracked: usize,
) -> Result<(EmbeddingSeries, Vec<f64>), SvdEmbedError> {
    let mut state = SvdFactorState::optimal(dense_adjacency(&seq.snapshots()[0])?, d, tracked, 0)?;
    let mut steps = vec![state.step()];
    let mut losses = vec![state.cur_loss];
    for t in 1..seq.len() {
        let (p, q) = snapshot_factors(seq, t)?;
        state = incremental_update(&state, &p, &q)?;
        steps.push(state.step());
        losses.push(state.cur_loss);
    }
    let config = json!({ "d": d, "tracked_rank": tracked });
    Ok((EmbeddingSeries::new("incsvd", config, steps)?, losses))
}

/// Incremental SVD with a tolerance-triggered restart.
///
/// After each update the state is restarted (fresh optimal factorization,
/// accumulators reset) when `loss_bound() > 0` and
/// `cur_loss / loss_bound() − 1 > theta`. `theta = ∞` never restarts.
pub fn rerun_svd_series(
    seq: &SnapshotSequence,
    d: usize,
    theta: f64,
) -> Result<(EmbeddingSeries, Vec<RestartRecord>), SvdEmbedError> {
    rerun_svd_series_tracked(seq, d, default_tracked_rank(seq.n(), d), theta)
}

pub fn rerun_svd_series_tracked(
    seq: &SnapshotSequence,
    d: usize,
    tracked: usize,
    theta: f64,
) -> Result<(EmbeddingSeries, Vec<RestartRecord>), SvdEmbedError> {
    if !(theta > 0.0) {
        return Err(SvdEmbedError::InvalidTheta(theta));
    }
    let mut state = SvdFactorState::optimal(dense_adjacency(&seq.snapshots()[0])?, d, tracked, 0)?;
    let mut steps = vec![state.step()];
    let mut log = vec![RestartRecord {
        t: 0,
        restarted: true,
        cur_loss: state.cur_loss,
        bound: state.loss_bound(),
    }];
    for t in 1..seq.len() {
        let (p, q) = snapshot_factors(seq, t)?;
        state = incremental_update(&state, &p, &q)?;
        let bound = state.loss_bound();
        let restarted = bound > 0.0 && state.cur_loss / bound - 1.0 > theta;
        if restarted {
            let adjacency = state.adjacency.clone();
            state = SvdFactorState::optimal(adjacency, d, tracked, t)?;
        }
        log.push(RestartRecord {
            t,
            restarted,
            cur_loss: state.cur_loss,
            bound: state.loss_bound(),
        });
        steps.push(state.step());
    }
    let theta_json = if theta.is_finite() { json!(theta) } else { json!("inf") };
    let series = EmbeddingSeries::new("rerunsvd", json!({ "d": d, "theta": theta_json, "tracked_rank": tracked }), steps)?;
    Ok((series, log))
}

/// `Y_src(t)_u · Y_tgt(t)_v` for each requested pair.
pub fn svd_link_scores(
    series: &EmbeddingSeries,
    t: usize,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>, SvdEmbedError> {
    let step = series.get(t).ok_or(SvdEmbedError::TimeOutOfRange(t))?;
    let n = step.src.nrows();
    pairs
        .iter()
        .map(|&(u, v)| {
            if u >= n || v >= n {
                return Err(SvdEmbedError::NodeOutOfRange { u, v, n });
            }
            Ok(step.src.row(u).dot(&step.tgt.row(v)))
        })
        .collect()
}
