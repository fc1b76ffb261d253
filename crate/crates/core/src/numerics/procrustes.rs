use super::NumericsError;
use crate::Mat;

/// Orthogonal `R` minimizing `‖X R − Y‖_F`, taken as `U Vᵀ` from the SVD of
/// `Xᵀ Y`. Reflections are allowed.
pub fn procrustes_rotation(x: &Mat, y: &Mat) -> Result<Mat, NumericsError> {
    procrustes_rotation_with(x, y, false)
}

/// As [`procrustes_rotation`]; with `proper` set the result is forced to
/// `det R = +1` by flipping the direction paired with the smallest singular
/// value of `Xᵀ Y`.
pub fn procrustes_rotation_with(x: &Mat, y: &Mat, proper: bool) -> Result<Mat, NumericsError> {
    if x.shape() != y.shape() {
        return Err(NumericsError::ShapeMismatch {
            left: x.shape(),
            right: y.shape(),
        });
    }
    if x.ncols() == 0 {
        return Err(NumericsError::InvalidInput("procrustes needs d >= 1".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let d = x.ncols();
    let m = x.transpose() * y;
    let svd = m.svd(true, true);
    let mut u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    if proper {
        let r = &u * &vt;
        if r.determinant() < 0.0 {
            let (weakest, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("d >= 1");
            let mut col = u.column_mut(weakest);
            col.neg_mut();
        }
    }
    debug_assert_eq!(u.shape(), (d, d));
    Ok(u * vt)
}
