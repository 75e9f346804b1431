//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// max |A − Aᵀ| / max(1, max |A|).
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(1.0);
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

pub fn require_symmetric(a: &DMatrix<f64>, tol: f64, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Contract(format!("{what} is not square")));
    }
    let asym = asymmetry(a);
    if asym > tol {
        return Err(Error::Contract(format!(
            "{what} is not symmetric (relative asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = robust_symmetric_eigen(&sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// nalgebra's implicit QR can return NaN on highly degenerate matrices with
/// exactly repeated entries; a spectral shift changes the iteration without
/// changing the eigenvectors.
fn robust_symmetric_eigen(sym: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).all(|v| v.is_finite()) {
        return eig;
    }
    let n = sym.nrows();
    let scale = sym.amax().max(1.0);
    for c in [1.0 + scale, -0.618 * scale - 0.5, 0.377 * scale + 0.25] {
        let shifted = sym + DMatrix::identity(n, n) * c;
        let mut e = SymmetricEigen::new(shifted);
        if e.eigenvalues.iter().chain(e.eigenvectors.iter()).all(|v| v.is_finite()) {
            e.eigenvalues.add_scalar_mut(-c);
            return e;
        }
    }
    panic!("symmetric eigensolver failed to converge on a {n}×{n} matrix");
}

pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    sym_eigen(a).0.iter().copied().collect()
}

/// V f(Λ) Vᵀ for symmetric `a`.
pub fn sym_function(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(a);
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * f(vals[j]));
    &scaled * vecs.transpose()
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    sym_eigenvalues(a)
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max)
}

/// Spectral norm of a general matrix.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn min_singular_value(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Solves A x = λ M x for symmetric A and symmetric positive definite M by
/// Cholesky congruence. Eigenvectors are M-orthonormal columns.
pub fn generalized_sym_eigen(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    require_symmetric(a, 1e-10, "stiffness matrix")?;
    require_symmetric(m, 1e-10, "mass matrix")?;
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalRank("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalRank("Cholesky factor is singular".into()))?;
    let c = &linv * a * linv.transpose();
    let (vals, y) = sym_eigen(&c);
    Ok((vals, linv.transpose() * y))
}

/// Principal submatrix on the given index set.
pub fn submatrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
