//! Row-banded complex matrices and smallest-singular-value solvers.
//!
//! Rows are stored as a contiguous segment `[start, start + len)` of
//! nonzeros. For the tall finite-difference operators in [`crate::discrete`]
//! each segment is at most a handful of entries wide.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RowBanded {
    pub nrows: usize,
    pub ncols: usize,
    /// `(first column, entries)` per row.
    pub rows: Vec<(usize, Vec<Complex64>)>,
}

impl RowBanded {
    pub fn new(ncols: usize) -> Self {
        RowBanded {
            nrows: 0,
            ncols,
            rows: Vec::new(),
        }
    }

    /// Append a row given as `(column, value)` pairs; duplicates are summed.
    pub fn push_row(&mut self, entries: &[(usize, Complex64)]) {
        let (start, seg) = if entries.is_empty() {
            (0, Vec::new())
        } else {
            let lo = entries.iter().map(|e| e.0).min().unwrap();
            let hi = entries.iter().map(|e| e.0).max().unwrap();
            assert!(hi < self.ncols, "column {hi} out of range");
            let mut seg = vec![Complex64::new(0.0, 0.0); hi - lo + 1];
            for &(c, v) in entries {
                seg[c - lo] += v;
            }
            (lo, seg)
        };
        self.rows.push((start, seg));
        self.nrows += 1;
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let mut out = RowBanded::new(m.ncols());
        for i in 0..m.nrows() {
            let entries: Vec<_> = (0..m.ncols()).map(|j| (j, m[(i, j)])).collect();
            out.push_row(&entries);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, (start, seg)) in self.rows.iter().enumerate() {
            for (k, v) in seg.iter().enumerate() {
                m[(i, start + k)] = *v;
            }
        }
        m
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.ncols);
        self.rows
            .iter()
            .map(|(start, seg)| seg.iter().zip(&x[*start..]).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Width of the widest stored row.
    pub fn max_row_width(&self) -> usize {
        self.rows.iter().map(|r| r.1.len()).max().unwrap_or(0)
    }
}

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Smallest singular value from a dense SVD. For tall matrices this is the
/// `ncols`-th singular value.
pub fn sigma_min_dense(a: &DMatrix<Complex64>) -> f64 {
    let sv = a.singular_values();
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Upper-triangular factor `R` of a banded QR, each row stored from its
/// diagonal: `r[j][k]` is entry `(j, j + k)`.
#[derive(Debug, Clone)]
pub struct BandedR {
    n: usize,
    rows: Vec<Vec<Complex64>>,
}

impl BandedR {
    /// Row-by-row Givens QR. Rows are processed in order of their first
    /// column, so fill-in stays within the widest row's band.
    pub fn factor(a: &RowBanded) -> Result<Self> {
        let n = a.ncols;
        if a.nrows < n {
            return Err(LabError::validation(
                "matrix",
                format!("QR needs nrows >= ncols, got {} x {}", a.nrows, n),
            ));
        }
        let width = a
            .rows
            .iter()
            .map(|(s, seg)| (s + seg.len()).min(n) - s)
            .max()
            .unwrap_or(1)
            .max(1);
        let mut order: Vec<usize> = (0..a.nrows).collect();
        order.sort_by_key(|&i| a.rows[i].0);

        let zero = Complex64::new(0.0, 0.0);
        let mut rows: Vec<Vec<Complex64>> = vec![Vec::new(); n];
        // Working copy of the incoming row, indexed from its current lead column.
        let mut work = vec![zero; width + 1];
        for &i in &order {
            let (start, seg) = &a.rows[i];
            work.iter_mut().for_each(|w| *w = zero);
            work[..seg.len()].copy_from_slice(seg);
            let mut lead = *start;
            // Process until the row is annihilated or placed.
            while lead < n {
                if work[0] == zero {
                    work.rotate_left(1);
                    *work.last_mut().unwrap() = zero;
                    lead += 1;
                    if work.iter().all(|w| *w == zero) {
                        break;
                    }
                    continue;
                }
                let target = &mut rows[lead];
                if target.is_empty() {
                    let len = width.min(n - lead);
                    target.extend_from_slice(&work[..len]);
                    break;
                }
                let a0 = target[0];
                let b0 = work[0];
                let (c, s) = givens(a0, b0);
                for k in 0..target.len() {
                    let r = target[k];
                    let w = work[k];
                    target[k] = c * r + s * w;
                    work[k] = -s.conj() * r + c * w;
                }
                work[0] = zero;
            }
        }
        if rows.iter().any(|r| r.is_empty()) {
            return Err(LabError::non_convergence(
                "banded QR",
                "matrix is rank deficient (empty R row)",
            ));
        }
        Ok(BandedR { n, rows })
    }

    /// Solve `R^* R x = y` in place.
    pub fn solve_normal(&self, y: &mut [Complex64]) {
        let n = self.n;
        // Forward: R^* z = y.
        for j in 0..n {
            let d = self.rows[j][0];
            y[j] /= d.conj();
            let zj = y[j];
            for (k, r) in self.rows[j].iter().enumerate().skip(1) {
                if j + k < n {
                    y[j + k] -= r.conj() * zj;
                }
            }
        }
        // Backward: R x = z.
        for j in (0..n).rev() {
            let row = &self.rows[j];
            let mut acc = y[j];
            for (k, r) in row.iter().enumerate().skip(1) {
                if j + k < n {
                    acc -= r * y[j + k];
                }
            }
            y[j] = acc / row[0];
        }
    }
}

/// Complex Givens pair `(c, s)` with real `c` zeroing `b` against `a`.
fn givens(a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    let na = a.norm();
    if na == 0.0 {
        return (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0));
    }
    let rho = na.hypot(b.norm());
    let c = na / rho;
    let s = (a / na) * b.conj() / rho;
    (Complex64::new(c, 0.0), s)
}

/// Inverse iteration on `A^* A` using a banded QR of `A`. Returns `||Ax||/||x||`
/// at the converged vector.
pub fn sigma_min_inverse_iteration(a: &RowBanded, tol: f64, max_iter: usize, seed: u64) -> Result<f64> {
    let r = BandedR::factor(a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<Complex64> = (0..a.ncols)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let mut prev = f64::INFINITY;
    for _ in 0..max_iter {
        let nx = norm(&x);
        x.iter_mut().for_each(|z| *z /= nx);
        let est = norm(&a.matvec(&x));
        if (prev - est).abs() <= tol * est.max(f64::MIN_POSITIVE) {
            return Ok(est);
        }
        prev = est;
        r.solve_normal(&mut x);
    }
    Err(LabError::non_convergence(
        "inverse iteration",
        format!("no convergence to {tol:e} after {max_iter} iterations (last {prev:e})"),
    ))
}

/// Dense SVD up to `dense_limit` columns, inverse iteration beyond.
pub fn sigma_min(a: &RowBanded, dense_limit: usize) -> Result<f64> {
    if a.ncols <= dense_limit {
        Ok(sigma_min_dense(&a.to_dense()))
    } else {
        sigma_min_inverse_iteration(a, 1e-10, 2000, 0x5eed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_and_diagonal() {
        let mut m = RowBanded::new(3);
        for (i, d) in [1.0, 2.0, 3.0].iter().enumerate() {
            m.push_row(&[(i, c(*d, 0.0))]);
        }
        assert!((sigma_min_dense(&m.to_dense()) - 1.0).abs() < 1e-14);
        let it = sigma_min_inverse_iteration(&m, 1e-12, 200, 1).unwrap();
        assert!((it - 1.0).abs() < 1e-10);
    }

    #[test]
    fn random_dense_agrees_with_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = DMatrix::from_fn(50, 50, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let dense = sigma_min_dense(&d);
        let it = sigma_min_inverse_iteration(&RowBanded::from_dense(&d), 1e-13, 5000, 3).unwrap();
        assert!((dense - it).abs() <= 1e-8 * dense, "{dense} vs {it}");
    }

    #[test]
    fn tall_banded_agrees_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 120;
        let mut m = RowBanded::new(n);
        for i in 0..n + 2 {
            let lo = i.saturating_sub(3);
            let hi = (i + 1).min(n - 1);
            let entries: Vec<_> = (lo..=hi)
                .map(|j| (j, c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
                .collect();
            m.push_row(&entries);
        }
        let dense = sigma_min_dense(&m.to_dense());
        let it = sigma_min_inverse_iteration(&m, 1e-13, 5000, 5).unwrap();
        assert!((dense - it).abs() <= 1e-8 * dense, "{dense} vs {it}");
    }

    #[test]
    fn normal_solve_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = DMatrix::from_fn(12, 9, |_, _| c(rng.random::<f64>(), rng.random::<f64>() - 0.5));
        let r = BandedR::factor(&RowBanded::from_dense(&d)).unwrap();
        let y: Vec<Complex64> = (0..9).map(|k| c(k as f64, 1.0)).collect();
        let mut x = y.clone();
        r.solve_normal(&mut x);
        let ata = d.adjoint() * &d;
        let back = ata * nalgebra::DVector::from_column_slice(&x);
        for k in 0..9 {
            assert!((back[k] - y[k]).norm() < 1e-9);
        }
    }

    #[test]
    fn unit_phase_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = DMatrix::from_fn(20, 15, |_, _| c(rng.random::<f64>(), rng.random::<f64>()));
        let phase = Complex64::from_polar(1.0, 0.7);
        let a = sigma_min_dense(&d);
        let b = sigma_min_dense(&(d * phase));
        assert!((a - b).abs() < 1e-12 * a);
    }
}
