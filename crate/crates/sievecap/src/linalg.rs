//! Sparse symmetric linear algebra for the FEM subproblems: CSR storage,
//! an incomplete Cholesky preconditioner and conjugate gradients.

use crate::{Error, Result};

/// Compressed sparse row matrix. For the SPD systems assembled here both
/// triangles are stored, which keeps matrix-vector products simple.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build the sparsity pattern from an adjacency list (diagonal implied).
    /// Column indices are sorted per row; values start at zero.
    pub fn from_adjacency(neighbors: &[Vec<usize>]) -> Self {
        let n = neighbors.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for (i, nbrs) in neighbors.iter().enumerate() {
            let mut row: Vec<usize> = nbrs.clone();
            row.push(i);
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(&row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn zero_values(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Add into entry (i, j); the pair must exist in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k] += v,
            Err(_) => panic!("entry ({i},{j}) not in sparsity pattern"),
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }
}

/// Incomplete Cholesky factor with zero fill-in, stored as lower CSR.
/// A diagonal shift is applied and grown on breakdown.
pub struct IncompleteCholesky {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

impl IncompleteCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut shift = 0.0;
        let base: f64 = {
            let mut m = 0.0f64;
            for i in 0..a.n {
                for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                    if a.col_idx[k] == i {
                        m = m.max(a.values[k].abs());
                    }
                }
            }
            m
        };
        for _ in 0..12 {
            match Self::try_factor(a, shift) {
                Some(f) => return Ok(f),
                None => {
                    shift = if shift == 0.0 { 1e-8 * base } else { shift * 10.0 };
                }
            }
        }
        Err(Error::Solve("incomplete Cholesky breakdown".into()))
    }

    fn try_factor(a: &CsrMatrix, shift: f64) -> Option<Self> {
        let n = a.n;
        // extract lower triangle pattern (strictly lower) and diagonal
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut diag = vec![0.0f64; n];
        row_ptr.push(0);
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[k];
                if j < i {
                    col_idx.push(j);
                    values.push(a.values[k]);
                } else if j == i {
                    diag[i] = a.values[k] + shift;
                }
            }
            row_ptr.push(col_idx.len());
        }
        // left-looking IC(0): process rows in order, updating within pattern
        let mut lower_in_col: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // col -> (row, idx)
        for i in 0..n {
            // gather row i of L computed so far into a sparse map
            let start = row_ptr[i];
            let end = row_ptr[i + 1];
            for idx in start..end {
                let j = col_idx[idx];
                // L[i][j] = (A[i][j] - sum_k L[i][k] L[j][k]) / L[j][j]
                let mut sum = values[idx];
                // intersect row i (computed part) with row j of L, by scanning
                // entries of column k for k < j via lower_in_col
                let (mut pi, mut pj) = (start, row_ptr[j]);
                let endj = row_ptr[j + 1];
                while pi < idx && pj < endj {
                    let ci = col_idx[pi];
                    let cj = col_idx[pj];
                    if ci == cj {
                        sum -= values[pi] * values[pj];
                        pi += 1;
                        pj += 1;
                    } else if ci < cj {
                        pi += 1;
                    } else {
                        pj += 1;
                    }
                }
                let ljj = diag[j];
                values[idx] = sum / ljj;
            }
            // diagonal
            let mut sum = diag[i];
            for idx in start..end {
                sum -= values[idx] * values[idx];
            }
            if sum <= 0.0 || !sum.is_finite() {
                return None;
            }
            diag[i] = sum.sqrt();
            for idx in start..end {
                lower_in_col[col_idx[idx]].push((i, idx));
            }
        }
        let _ = lower_in_col;
        Some(IncompleteCholesky {
            n,
            row_ptr,
            col_idx,
            values,
            diag,
        })
    }

    /// Solve L L^T z = r.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        debug_assert_eq!(r.len(), self.n);
        // forward: L y = r
        for i in 0..self.n {
            let mut acc = r[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc -= self.values[k] * z[self.col_idx[k]];
            }
            z[i] = acc / self.diag[i];
        }
        // backward: L^T z = y
        for i in (0..self.n).rev() {
            z[i] /= self.diag[i];
            let zi = z[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                z[self.col_idx[k]] -= self.values[k] * zi;
            }
        }
    }
}

pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for SPD systems; relative residual
/// tolerance on the true residual norm.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    let n = a.n;
    let precond = IncompleteCholesky::new(a)?;
    let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_b == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for iter in 0..max_iter {
        let res_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if res_norm <= tol * norm_b {
            return Ok(CgReport {
                iterations: iter,
                relative_residual: res_norm / norm_b,
                converged: true,
            });
        }
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Solve(format!(
                "PCG curvature breakdown: p^T A p = {pap}"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond.apply(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(CgReport {
        iterations: max_iter,
        relative_residual: res_norm / norm_b,
        converged: res_norm <= tol * norm_b,
    })
}

/// Solve a symmetric positive definite tridiagonal system in place
/// (Thomas algorithm). `diag` has length n, `off` length n-1.
pub fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    assert_eq!(off.len() + 1, n);
    assert_eq!(rhs.len(), n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom <= 0.0 {
        return Err(Error::Solve("tridiagonal pivot not positive".into()));
    }
    c[0] = if n > 1 { off[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - off[i - 1] * c[i - 1];
        if denom <= 0.0 || !denom.is_finite() {
            return Err(Error::Solve("tridiagonal pivot not positive".into()));
        }
        if i < n - 1 {
            c[i] = off[i] / denom;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    rhs[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = d[i] - c[i] * rhs[i + 1];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(i - 1);
                }
                if i + 1 < n {
                    v.push(i + 1);
                }
                v
            })
            .collect();
        let mut a = CsrMatrix::from_adjacency(&neighbors);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn pcg_solves_laplacian() {
        let n = 500;
        let a = laplacian_1d(n);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let mut x = vec![0.0; n];
        let report = pcg(&a, &b, &mut x, 1e-12, 10_000).unwrap();
        assert!(report.converged);
        let err: f64 = x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "max error {err}");
    }

    #[test]
    fn pcg_zero_rhs() {
        let a = laplacian_1d(10);
        let b = vec![0.0; 10];
        let mut x = vec![1.0; 10];
        let report = pcg(&a, &b, &mut x, 1e-12, 100).unwrap();
        assert!(report.converged);
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let n = 50;
        let diag = vec![3.0; n];
        let off = vec![-1.0; n - 1];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = diag[i] * x_true[i];
            if i > 0 {
                rhs[i] += off[i - 1] * x_true[i - 1];
            }
            if i + 1 < n {
                rhs[i] += off[i] * x_true[i + 1];
            }
        }
        solve_tridiagonal(&diag, &off, &mut rhs).unwrap();
        for i in 0..n {
            assert!((rhs[i] - x_true[i]).abs() < 1e-12);
        }
    }
}
