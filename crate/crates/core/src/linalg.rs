//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest entry of `|M - M^T|`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
///
/// Inputs that are asymmetric beyond `1e-10` (relative to the largest entry)
/// are rejected.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    let scale = m.amax().max(1.0);
    let asym = max_asymmetry(m);
    if asym > 1e-10 * scale {
        return Err(Error::Asymmetric { max_asymmetry: asym });
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = sym.symmetric_eigen();
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Solves `a x = b` through a relative-tolerance Moore-Penrose pseudo-inverse of
/// the symmetric matrix `a`. Singular values below `rel_tol * sigma_max` are
/// treated as zero.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.amax();
    let cutoff = rel_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let ut_b = u.transpose() * b;
    let scaled = DVector::from_iterator(
        ut_b.len(),
        ut_b.iter().zip(svd.singular_values.iter()).map(|(c, &s)| {
            if s > cutoff && s > 0.0 {
                c / s
            } else {
                0.0
            }
        }),
    );
    v_t.transpose() * scaled
}

/// True when the symmetric matrix has a singular value at or below
/// `rel_tol * sigma_max`.
pub fn is_numerically_singular(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    let sv = a.singular_values();
    let smax = sv.amax();
    smax == 0.0 || sv.iter().any(|&s| s <= rel_tol * smax)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_smallest_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!((min_eigenvalue(&m).unwrap() + 1.0).abs() < 1e-12);
        let id = DMatrix::<f64>::identity(4, 4);
        assert!((min_eigenvalue(&id).unwrap() - 1.0).abs() < 1e-12);
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]);
        assert!((min_eigenvalue(&d).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0]);
        assert!(matches!(min_eigenvalue(&m), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn pinv_matches_direct_solve_when_regular() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = pinv_solve(&a, &b, 1e-10);
        let direct = a.clone().lu().solve(&b).unwrap();
        assert!((x - direct).amax() < 1e-12);
    }

    #[test]
    fn pinv_of_singular_matrix_gives_minimum_norm_solution() {
        // rank one: [[1,1],[1,1]] x = [2,2] -> minimum-norm x = (1,1)
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        assert!(is_numerically_singular(&a, 1e-10));
        let x = pinv_solve(&a, &b, 1e-10);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }
}
