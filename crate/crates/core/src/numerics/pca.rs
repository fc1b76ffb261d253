use nalgebra::SymmetricEigen;

use super::NumericsError;
use crate::Mat;

/// Two-dimensional PCA coordinates of a point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// n×2, column `j` holds the scores on the `j`-th principal direction.
    pub coords: Mat,
    /// Sample-covariance eigenvalues of the two retained directions.
    pub explained_variance: [f64; 2],
    /// All rows identical (or a single row): coordinates are zero.
    pub degenerate: bool,
}

/// Centers the rows of `x` and projects them on the two leading principal
/// directions. Each direction's largest-magnitude component is made positive
/// (ties go to the lowest index) so the output is deterministic.
pub fn pca_project_2d(x: &Mat) -> Result<Projection, NumericsError> {
    let (n, d) = x.shape();
    if n == 0 || d < 2 {
        return Err(NumericsError::InvalidInput(format!(
            "pca projection needs n >= 1 and d >= 2, got {n}x{d}"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite);
    }
    let first = x.row(0);
    if (1..n).all(|i| x.row(i) == first) {
        return Ok(Projection {
            coords: Mat::zeros(n, 2),
            explained_variance: [0.0, 0.0],
            degenerate: true,
        });
    }

    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let mut basis = Mat::zeros(d, 2);
    for (slot, &k) in order.iter().take(2).enumerate() {
        let dir = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for i in 1..d {
            if dir[i].abs() > dir[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if dir[pivot] < 0.0 { -1.0 } else { 1.0 };
        basis.set_column(slot, &(dir * sign));
    }

    let mut coords = centered * basis;
    // Re-center: removes the rounding residue of the mean subtraction.
    let m = coords.row_mean();
    for mut row in coords.row_iter_mut() {
        row -= &m;
    }
    Ok(Projection {
        coords,
        explained_variance: [
            eig.eigenvalues[order[0]].max(0.0),
            eig.eigenvalues[order[1]].max(0.0),
        ],
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::SeededRng;

    fn random_cloud(n: usize, d: usize, seed: u64) -> Mat {
        let mut rng = SeededRng::new(seed);
        let scales: Vec<f64> = (0..d).map(|j| 1.0 + 3.0 * (d - j) as f64).collect();
        Mat::from_fn(n, d, |_, j| scales[j] * rng.uniform_range(-1.0, 1.0))
    }

    #[test]
    fn centered_diagonal_input_is_unchanged_up_to_sign() {
        // Centered, axis-aligned, larger spread on the first axis.
        let x = Mat::from_row_slice(4, 2, &[3.0, 0.0, -3.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let p = pca_project_2d(&x).unwrap();
        for j in 0..2 {
            let same = (p.coords.column(j) - x.column(j)).amax();
            let flipped = (p.coords.column(j) + x.column(j)).amax();
            assert!(same.min(flipped) < 1e-12);
        }
    }

    #[test]
    fn translation_invariant() {
        let x = random_cloud(30, 5, 1);
        let shift = nalgebra::RowDVector::from_vec(vec![10.0, -4.0, 2.5, 0.0, 7.0]);
        let mut y = x.clone();
        for mut row in y.row_iter_mut() {
            row += &shift;
        }
        let a = pca_project_2d(&x).unwrap();
        let b = pca_project_2d(&y).unwrap();
        assert!((a.coords - b.coords).amax() < 1e-9);
    }

    #[test]
    fn variance_matches_singular_value_oracle() {
        let x = random_cloud(40, 6, 2);
        let n = x.nrows() as f64;
        let mean = x.row_mean();
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= &mean;
        }
        // Independent route: singular values of the centered data.
        let mut sv: Vec<f64> = c.clone().svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let p = pca_project_2d(&x).unwrap();
        for j in 0..2 {
            let oracle = sv[j] * sv[j] / (n - 1.0);
            let col = p.coords.column(j);
            let var = col.dot(&col) / (n - 1.0);
            assert!((var - oracle).abs() <= 1e-8 * oracle);
            assert!((p.explained_variance[j] - oracle).abs() <= 1e-8 * oracle);
        }
    }

    #[test]
    fn output_columns_centered() {
        let p = pca_project_2d(&random_cloud(25, 3, 3)).unwrap();
        for j in 0..2 {
            assert!(p.coords.column(j).mean().abs() <= 1e-10);
        }
    }

    #[test]
    fn identical_rows_flagged() {
        let x = Mat::from_fn(5, 3, |_, j| j as f64 + 0.1);
        let p = pca_project_2d(&x).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.coords, Mat::zeros(5, 2));
        let single = pca_project_2d(&Mat::from_row_slice(1, 2, &[4.0, 5.0])).unwrap();
        assert!(single.degenerate);
    }

    #[test]
    fn rejects_one_dimensional_input() {
        assert!(pca_project_2d(&Mat::zeros(4, 1)).is_err());
    }
}
