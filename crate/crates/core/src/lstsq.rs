//! Minimum-norm linear least squares.
//!
//! Tall systems are first reduced with a Householder QR, then the small
//! triangular factor is decomposed with an SVD. Both factorizations are
//! orthogonal, so the singular values of `R` are those of `A` and the conditioning
//! is never squared the way the normal equations would square it.

use nalgebra::{DMatrix, DVector, Dyn, SVD};

use crate::error::{Error, Result};
use crate::kernel::Matrix;

/// Singular values at or below `REL_TOL * sigma_max` are treated as zero.
pub const REL_TOL: f64 = 1e-12;

const SVD_MAX_ITER: usize = 10_000;

/// Minimum-norm minimizer of `|a x - b|_2`.
pub fn solve_least_squares(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let (rows, cols) = (a.rows(), a.cols());
    if rows == 0 || cols == 0 {
        return Err(Error::Input(format!("empty {rows}x{cols} system")));
    }
    if b.len() != rows {
        return Err(Error::Input(format!(
            "right-hand side has {} entries for {rows} rows",
            b.len()
        )));
    }
    if !a.as_slice().iter().chain(b).all(|v| v.is_finite()) {
        return Err(Error::Input("least-squares system contains non-finite values".into()));
    }

    let dense = DMatrix::from_row_slice(rows, cols, a.as_slice());
    let rhs = DVector::from_column_slice(b);

    let (square, projected) = if rows > cols {
        let qr = dense.qr();
        let mut qtb = rhs;
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, cols).into_owned())
    } else {
        (dense, rhs)
    };

    let svd = SVD::try_new(square, true, true, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let x = pseudo_inverse_apply(&svd, &projected);

    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("least-squares solution is not finite".into()));
    }
    Ok(x.as_slice().to_vec())
}

fn pseudo_inverse_apply(svd: &SVD<f64, Dyn, Dyn>, rhs: &DVector<f64>) -> DVector<f64> {
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let cutoff = REL_TOL * sigma_max;

    let mut coeffs = u.tr_mul(rhs);
    for (c, &s) in coeffs.iter_mut().zip(sigma.iter()) {
        *c = if s > cutoff { *c / s } else { 0.0 };
    }
    v_t.tr_mul(&coeffs)
}

/// Number of singular values above the relative cutoff.
pub fn numerical_rank(a: &Matrix) -> usize {
    let dense = DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    let sigma = dense.singular_values();
    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    sigma.iter().filter(|&&s| s > REL_TOL * sigma_max).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_system() {
        let x = solve_least_squares(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert!(close(&x, &[1.0, 2.0, 3.0], 1e-14));
    }

    #[test]
    fn overdetermined_constant_is_the_mean() {
        let a = Matrix::from_row_major(2, 1, vec![1.0, 1.0]).unwrap();
        let x = solve_least_squares(&a, &[1.0, 3.0]).unwrap();
        assert!(close(&x, &[2.0], 1e-14));
    }

    #[test]
    fn underdetermined_splits_equally() {
        let a = Matrix::from_row_major(1, 2, vec![1.0, 1.0]).unwrap();
        let x = solve_least_squares(&a, &[2.0]).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-14));
    }

    #[test]
    fn rank_deficient_tall_system_is_minimum_norm() {
        // Two identical columns: any split of the mean works, the minimum-norm one is even.
        let a = Matrix::from_row_major(3, 2, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let x = solve_least_squares(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-12));
        assert_eq!(numerical_rank(&a), 1);
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let x = solve_least_squares(&Matrix::zeros(4, 2), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn non_finite_input_rejected() {
        let a = Matrix::from_row_major(1, 1, vec![f64::NAN]).unwrap();
        assert!(matches!(solve_least_squares(&a, &[1.0]), Err(Error::Input(_))));
        let a = Matrix::identity(1);
        assert!(matches!(
            solve_least_squares(&a, &[f64::INFINITY]),
            Err(Error::Input(_))
        ));
        assert!(matches!(solve_least_squares(&a, &[1.0, 2.0]), Err(Error::Input(_))));
    }
}
