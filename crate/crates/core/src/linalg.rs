//! Small dense linear-algebra helpers shared by the measure and regulator code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance for symmetry checks on user-supplied matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Builds an `n × n` matrix from a row-major slice.
pub fn from_row_major(n: usize, data: &[f64], name: &str) -> Result<DMatrix<f64>> {
    if data.len() != n * n {
        return Err(Error::InvalidModel(format!("{name} has {} entries, expected {} for dimension {n}", data.len(), n * n)));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidModel(format!("{name} entry ({}, {}) is not finite", i / n, i % n)));
    }
    Ok(DMatrix::from_row_slice(n, n, data))
}

/// Rejects matrices that are not symmetric within [`SYMMETRY_TOL`], naming the first bad entry.
pub fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidModel(format!("{name} is not square")));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidModel(format!(
                    "{name} is not symmetric: entry ({i}, {j}) = {} but ({j}, {i}) = {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Lower Cholesky factor; on failure reports the pivot at which positivity is lost.
pub fn cholesky_lower(m: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidModel(format!("{name} is not positive definite: pivot at entry ({j}, {j}) is {d:e}")));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// `ln det` from a lower Cholesky factor.
pub fn log_det_from_cholesky(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Symmetric eigen-decomposition with eigenvalues sorted descending.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = 0.5 * (m + m.transpose());
    let eig = sym.symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let (values, _) = sorted_eigen(m);
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// True when `m` is PSD up to a tolerance scaled by its magnitude.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    min_eigenvalue(m) >= -1e-12 * scale
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// `xᵀ M x`.
pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Numerically stable `ln Σ exp(v)`; `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_names_failing_pivot() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = cholesky_lower(&m, "covariance").unwrap_err().to_string();
        assert!(err.contains("(1, 1)"), "{err}");
    }

    #[test]
    fn asymmetry_names_entry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        let err = check_symmetric(&m, "covariance").unwrap_err().to_string();
        assert!(err.contains("(0, 1)"), "{err}");
    }

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn cholesky_matches_nalgebra() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let l = cholesky_lower(&m, "m").unwrap();
        assert!((&l * l.transpose() - &m).norm() < 1e-14);
        let ld = log_det_from_cholesky(&l);
        assert!((ld - m.determinant().ln()).abs() < 1e-12);
    }
}
