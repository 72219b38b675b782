//! Dense and sparse linear algebra helpers.
//!
//! All factorizations run with sequential faer parallelism: results must be
//! bitwise reproducible regardless of the caller's thread budget, and the
//! crate parallelizes over blocks instead.

use std::sync::Once;

use faer::prelude::Solve;
use faer::sparse::SparseColMat;
use faer::Mat;

use crate::error::{Error, Result};

static SEQ: Once = Once::new();

/// Force sequential faer kernels (process-wide, idempotent).
pub(crate) fn ensure_sequential_kernels() {
    SEQ.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Sparse LU with the fixed ordering faer provides; deterministic.
pub(crate) struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn new(matrix: &SparseColMat<usize, f64>) -> Result<Self> {
        ensure_sequential_kernels();
        let lu = matrix
            .sp_lu()
            .map_err(|e| Error::numerical(format!("sparse LU factorization failed: {e:?}")))?;
        Ok(SparseLu { lu, n: matrix.nrows() })
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_mat(&self, rhs: &Mat<f64>) -> Mat<f64> {
        assert_eq!(rhs.nrows(), self.n);
        self.lu.solve(rhs)
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending and
/// ties kept in the backend's column order.
pub(crate) fn sym_eigen_ascending(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    ensure_sequential_kernels();
    let n = a.nrows();
    let evd = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| evd.S()[i].partial_cmp(&evd.S()[j]).unwrap().then(i.cmp(&j)));
    let values: Vec<f64> = idx.iter().map(|&i| evd.S()[i]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| evd.U()[(r, idx[c])]);
    Ok((values, vectors))
}

/// Hand-rolled dense lower Cholesky; returns None when a pivot fails.
pub(crate) fn cholesky_lower(a: &Mat<f64>) -> Option<Mat<f64>> {
    let n = a.nrows();
    let mut l = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Some(l)
}

fn solve_lower_inplace(l: &Mat<f64>, b: &mut Mat<f64>) {
    let n = l.nrows();
    for col in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, col)];
            }
            b[(i, col)] = s / l[(i, i)];
        }
    }
}

fn solve_lower_transpose_inplace(l: &Mat<f64>, b: &mut Mat<f64>) {
    let n = l.nrows();
    for col in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = b[(i, col)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * b[(k, col)];
            }
            b[(i, col)] = s / l[(i, i)];
        }
    }
}

/// Ridge magnitude used for near-singular symmetric PSD systems.
pub(crate) fn ridge_size(a: &Mat<f64>) -> f64 {
    let n = a.nrows();
    let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
    1e-12 * trace / n.max(1) as f64
}

/// Solution of the symmetric positive semi-definite generalized eigenvalue
/// problem `A c = lambda S c`.
pub(crate) struct GepSolution {
    /// Ascending eigenvalues of the (possibly regularized) pencil.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, S-orthonormal.
    pub vectors: Mat<f64>,
    /// Ridge added to `S` (zero when none was needed).
    pub ridge: f64,
}

/// Solve the symmetric PSD pencil by Cholesky reduction of `S`. When the
/// smallest eigenvalue of `S` falls below `1e-12 * trace(S)/n`, that ridge
/// is added to `S` first and the reported eigenvalues are those of the
/// regularized pencil.
pub(crate) fn solve_spsd_gep(a: &Mat<f64>, s: &Mat<f64>) -> Result<GepSolution> {
    let n = a.nrows();
    if n == 0 {
        return Ok(GepSolution { values: Vec::new(), vectors: Mat::zeros(0, 0), ridge: 0.0 });
    }
    let tau = ridge_size(s);
    let (s_eigs, _) = sym_eigen_ascending(s)?;
    let mut ridge = 0.0;
    let mut s_used = s.clone();
    if s_eigs[0] < tau {
        ridge = tau;
        for i in 0..n {
            s_used[(i, i)] += tau;
        }
    }
    let l = match cholesky_lower(&s_used) {
        Some(l) => l,
        None => {
            // One more ridge escalation before giving up.
            ridge = tau.max(1e-10 * s_eigs[n - 1].abs());
            for i in 0..n {
                s_used[(i, i)] = s[(i, i)] + ridge;
            }
            cholesky_lower(&s_used)
                .ok_or_else(|| Error::numerical("S factor failed even with ridge"))?
        }
    };
    // B = L^-1 A L^-T, symmetrized against roundoff.
    let mut w = a.clone();
    solve_lower_inplace(&l, &mut w);
    let mut wt = Mat::from_fn(n, n, |i, j| w[(j, i)]);
    solve_lower_inplace(&l, &mut wt);
    let b = Mat::from_fn(n, n, |i, j| 0.5 * (wt[(i, j)] + wt[(j, i)]));
    let (values, y) = sym_eigen_ascending(&b)?;
    let mut vectors = y;
    solve_lower_transpose_inplace(&l, &mut vectors);
    Ok(GepSolution { values, vectors, ridge })
}

/// 2-norm condition number from a dense SVD.
pub(crate) fn condition_number(a: &Mat<f64>) -> Result<f64> {
    ensure_sequential_kernels();
    let svd =
        a.svd().map_err(|e| Error::numerical(format!("svd failed: {e:?}")))?;
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Ok(1.0);
    }
    let smax = svd.S()[0];
    let smin = svd.S()[k - 1];
    if smin == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(smax / smin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reproduces_spd_matrix() {
        let a = Mat::from_fn(4, 4, |i, j| if i == j { 3.0 } else { 0.5 / (1.0 + (i + j) as f64) });
        let l = cholesky_lower(&a).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut v = 0.0;
                for k in 0..4 {
                    v += l[(i, k)] * l[(j, k)];
                }
                assert!((v - a[(i, j)]).abs() < 1e-14);
            }
        }
        // not PD
        let bad = Mat::from_fn(2, 2, |i, j| if i == j { -1.0 } else { 0.0 });
        assert!(cholesky_lower(&bad).is_none());
    }

    #[test]
    fn gep_identity_pencil_gives_unit_eigenvalues() {
        let s = Mat::from_fn(5, 5, |i, j| if i == j { 2.0 } else { 0.25 });
        let sol = solve_spsd_gep(&s, &s).unwrap();
        for &v in &sol.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert_eq!(sol.ridge, 0.0);
    }

    #[test]
    fn gep_diagonal_pencil_sorted_ascending() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j && i == 0 { 2.0 } else { 0.0 });
        let s = Mat::<f64>::identity(2, 2);
        let sol = solve_spsd_gep(&a, &s).unwrap();
        assert!((sol.values[0] - 0.0).abs() < 1e-14);
        assert!((sol.values[1] - 2.0).abs() < 1e-14);
        // eigenvector of the nonzero mode is e_0
        assert!((sol.vectors[(0, 1)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gep_vectors_are_s_orthonormal_with_residuals() {
        let n = 12;
        let base = Mat::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.3);
        let a = Mat::from_fn(n, n, |i, j| {
            (0..n).map(|k| base[(i, k)] * base[(j, k)]).sum::<f64>() + if i == j { 0.1 } else { 0.0 }
        });
        let sbase = Mat::from_fn(n, n, |i, j| ((i * 5 + j * 11) % 7) as f64 / 7.0);
        let s = Mat::from_fn(n, n, |i, j| {
            (0..n).map(|k| sbase[(i, k)] * sbase[(j, k)]).sum::<f64>() + if i == j { 1.0 } else { 0.0 }
        });
        let sol = solve_spsd_gep(&a, &s).unwrap();
        let c = &sol.vectors;
        for p in 0..n {
            for q in 0..n {
                let mut v = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        v += c[(i, p)] * s[(i, j)] * c[(j, q)];
                    }
                }
                let expect = if p == q { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-9, "gram ({p},{q}) = {v}");
            }
            // residual |A c - lambda S c|
            let mut r = 0.0;
            for i in 0..n {
                let mut ac = 0.0;
                let mut sc = 0.0;
                for j in 0..n {
                    ac += a[(i, j)] * c[(j, p)];
                    sc += s[(i, j)] * c[(j, p)];
                }
                r += (ac - sol.values[p] * sc).powi(2);
            }
            assert!(r.sqrt() < 1e-8 * (1.0 + sol.values[p]));
        }
        for p in 1..n {
            assert!(sol.values[p] >= sol.values[p - 1]);
        }
    }
}
