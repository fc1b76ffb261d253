use nalgebra::{DMatrix, DVector};

use super::NumericsError;
use crate::Mat;

/// Rank-`d` factorization `A ≈ U diag(S) Vᵀ`.
///
/// `u` is n×d and `v` is m×d, both column-orthonormal; `s` is non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: Mat,
    pub s: DVector<f64>,
    pub v: Mat,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Mat {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.s[j];
        }
        us * self.v.transpose()
    }

    /// `‖A − U S Vᵀ‖_F²` evaluated directly.
    pub fn residual_sq(&self, a: &Mat) -> f64 {
        frobenius_sq(&(a - self.reconstruct()))
    }
}

pub fn frobenius_sq(a: &Mat) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `‖MᵀM − I‖_max`.
pub fn max_orthonormality_error(m: &Mat) -> f64 {
    let gram = m.transpose() * m;
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Best rank-`d` approximation of `a` (Eckart-Young), computed from a full
/// decomposition and truncated.
pub fn truncated_svd(a: &Mat, d: usize) -> Result<TruncatedSvd, NumericsError> {
    let (rows, cols) = a.shape();
    if d == 0 || d > rows.min(cols) {
        return Err(NumericsError::RankOutOfRange { d, rows, cols });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let svd = a.clone().svd(true, true);
    let u_full = svd.u.expect("requested U");
    let vt_full = svd.v_t.expect("requested Vᵀ");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));
    order.truncate(d);

    let u = DMatrix::from_fn(rows, d, |r, c| u_full[(r, order[c])]);
    let v = DMatrix::from_fn(cols, d, |r, c| vt_full[(order[c], r)]);
    let s = DVector::from_iterator(d, order.iter().map(|&i| sv[i].max(0.0)));
    Ok(TruncatedSvd { u, s, v })
}

/// Restores orthonormality of a drifted factorization without changing the
/// product `U S Vᵀ`: QR both factors and re-diagonalize the small core.
pub fn reorthonormalize(f: &TruncatedSvd) -> TruncatedSvd {
    let d = f.rank();
    let qr_u = f.u.clone().qr();
    let qr_v = f.v.clone().qr();
    let (qu, ru) = (qr_u.q(), qr_u.r());
    let (qv, rv) = (qr_v.q(), qr_v.r());
    let core = ru * DMatrix::from_diagonal(&f.s) * rv.transpose();
    let small = truncated_svd(&core, d).expect("core is d×d and finite");
    TruncatedSvd {
        u: qu * small.u,
        s: small.s,
        v: qv * small.v,
    }
}
