//! Thin helpers over `faer` for the dense kernels used throughout the crate.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};

use crate::{Error, Result};

pub use faer::c64;

pub const I: c64 = c64 { re: 0.0, im: 1.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Truncated annihilation operator on `n` Fock levels.
pub fn destroy(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 })
}

pub fn number(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { i as f64 } else { 0.0 })
}

pub fn complexify(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn scale(a: MatRef<'_, c64>, s: c64) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn kron(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn identity(n: usize) -> Mat<c64> {
    Mat::identity(n, n)
}

pub fn diag_real(d: &[f64]) -> Mat<c64> {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(d[i], 0.0) } else { ZERO })
}

pub fn trace(a: MatRef<'_, c64>) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// max |A - A^dagger| over all entries.
pub fn hermiticity_error(a: MatRef<'_, c64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix, ascending eigenvalues.
pub fn eigh(a: MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let vals = evd.S().column_vector().iter().map(|x| x.re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn eigvalsh(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

pub fn eigh_real(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

/// Run dense kernels single-threaded. Parallelism then comes only from
/// independent sweep points, which keeps results independent of thread count.
pub fn use_sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Solve `a x = b` by partially pivoted LU.
pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    a.partial_piv_lu().solve(b)
}

/// 2-norm condition number via singular values.
pub fn condition_number(a: MatRef<'_, f64>) -> Result<f64> {
    let s = a
        .singular_values()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let (hi, lo) = (s[0], s[s.len() - 1]);
    Ok(if lo == 0.0 { f64::INFINITY } else { hi / lo })
}

/// <u|v> for column vectors stored as slices.
pub fn inner(u: &[c64], v: &[c64]) -> c64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn column(a: MatRef<'_, c64>, j: usize) -> Vec<c64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}
