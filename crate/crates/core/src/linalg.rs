//! Dense complex matrix helpers.
//!
//! Everything here is a thin layer over `faer`. Matrices are small
//! (operator-valued solvers, n <= 8) or moderately large (Monte Carlo,
//! N ~ 600-1024); both go through the same code paths.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn scalar(n: usize, z: C64) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { z } else { C64::new(0.0, 0.0) })
}

pub fn diag(values: &[C64]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { values[i] } else { C64::new(0.0, 0.0) })
}

pub fn from_rows(rows: &[Vec<C64>]) -> Result<CMat> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: format!("rows of length {m}"),
            found: "ragged rows".into(),
        });
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn to_rows(a: &CMat) -> Vec<Vec<C64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn scale(a: &CMat, z: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * z)
}

/// `a + z·1`.
pub fn shift(a: &CMat, z: C64) -> CMat {
    let mut out = a.clone();
    for k in 0..a.nrows().min(a.ncols()) {
        out[(k, k)] += z;
    }
    out
}

/// `(a - a*) / 2i`, Hermitian by construction.
pub fn im_part(a: &CMat) -> CMat {
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| (a[(i, j)] - a[(j, i)].conj()) / (2.0 * I))
}

/// `(a + a*) / 2`.
pub fn re_part(a: &CMat) -> CMat {
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Eigenvalues of a Hermitian matrix in nondecreasing order. The input is
/// symmetrised first so rounding noise in the lower triangle cannot leak in.
pub fn hermitian_eigenvalues(h: &CMat) -> Result<Vec<f64>> {
    let sym = re_part(h);
    sym.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Decomposition(format!("{e:?}")))
}

pub fn min_eigenvalue(h: &CMat) -> Result<f64> {
    Ok(hermitian_eigenvalues(h)?[0])
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(vec![0.0]);
    }
    a.singular_values()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))
}

/// Operator norm (largest singular value).
pub fn opnorm(a: &CMat) -> Result<f64> {
    Ok(singular_values(a)?[0])
}

pub fn min_singular_value(a: &CMat) -> Result<f64> {
    Ok(*singular_values(a)?.last().unwrap())
}

/// Normalised Hilbert-Schmidt norm `sqrt(tr(a* a) / n)`, the L2 norm of the
/// tracial state on n×n matrices.
pub fn tau_norm(a: &CMat) -> f64 {
    let n = a.nrows().max(1) as f64;
    (a.norm_l2().powi(2) / n).sqrt()
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm_l2()
}

/// LU inverse without any conditioning check. Callers that cannot rule out
/// singularity should use [`inverse_checked`].
pub fn inverse(a: &CMat) -> CMat {
    a.partial_piv_lu().inverse()
}

pub fn inverse_checked(a: &CMat, rel_tol: f64) -> Result<CMat> {
    let sv = singular_values(a)?;
    let smax = sv[0];
    let smin = *sv.last().unwrap();
    if !(smin > rel_tol * smax.max(1.0)) {
        return Err(Error::SingularMatrix { min_singular: smin });
    }
    Ok(inverse(a))
}

pub fn trace(a: &CMat) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|k| a[(k, k)]).sum()
}

/// Kronecker product with the row/column index of `a` as the slow index:
/// entry `((i, k), (j, l))` sits at `(i * q + k, j * q + l)` where `b` is q×q.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (p, q) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * p, a.ncols() * q, |r, c| {
        a[(r / p, c / q)] * b[(r % p, c % q)]
    })
}

pub fn is_finite(a: &CMat) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

/// Largest entrywise modulus difference, handy in tests.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

/// Column-major vectorisation.
pub fn vectorize(a: &CMat) -> Vec<C64> {
    let mut v = Vec::with_capacity(a.nrows() * a.ncols());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            v.push(a[(i, j)]);
        }
    }
    v
}

pub fn unvectorize(v: &[C64], n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| v[j * n + i])
}

/// Solves `a x = rhs` for a single right-hand side.
pub fn solve(a: &CMat, rhs: &[C64]) -> Vec<C64> {
    let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = faer::linalg::solvers::Solve::solve(&a.partial_piv_lu(), &b);
    (0..rhs.len()).map(|i| x[(i, 0)]).collect()
}

/// Real linear solve used by the finite-difference Newton iterations.
pub fn solve_real(a: &Mat<f64>, rhs: &[f64]) -> Vec<f64> {
    let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = faer::linalg::solvers::Solve::solve(&a.partial_piv_lu(), &b);
    (0..rhs.len()).map(|i| x[(i, 0)]).collect()
}

pub fn real_singular_values(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| Error::Decomposition(format!("{e:?}")))
}
