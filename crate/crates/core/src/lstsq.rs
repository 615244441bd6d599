//! Linear least squares by orthogonal decomposition.
//!
//! Rows are streamed into an upper-triangular factor `R` (with `Q^T y`) using
//! block Householder updates, so the full design matrix is never stored.
//! The small `R` is then refactored with column pivoting to reveal the
//! numerical rank before back-substitution.

use crate::error::{Error, Result};

const BLOCK_ROWS: usize = 128;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    cols: usize,
    rows: usize,
    // row-major upper triangle, cols x cols
    r: Vec<f64>,
    qty: Vec<f64>,
    residual_ss: f64,
    // pending rows, column-major BLOCK_ROWS x cols
    block: Vec<f64>,
    block_y: Vec<f64>,
    pending: usize,
}

/// Result of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub coefficients: Vec<f64>,
    pub rank: usize,
    /// Columns set to zero because they are not identifiable from the data.
    pub dropped: Vec<usize>,
    /// Sum of squared residuals of the full-rank part of the fit.
    pub residual_ss: f64,
}

impl LeastSquares {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            rows: 0,
            r: vec![0.0; cols * cols],
            qty: vec![0.0; cols],
            residual_ss: 0.0,
            block: vec![0.0; BLOCK_ROWS * cols],
            block_y: vec![0.0; BLOCK_ROWS],
            pending: 0,
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn push_row(&mut self, row: &[f64], y: f64) {
        assert_eq!(row.len(), self.cols, "row length must equal column count");
        let i = self.pending;
        for (j, &v) in row.iter().enumerate() {
            self.block[j * BLOCK_ROWS + i] = v;
        }
        self.block_y[i] = y;
        self.pending += 1;
        self.rows += 1;
        if self.pending == BLOCK_ROWS {
            self.flush();
        }
    }

    /// Fold pending rows into `R` with one Householder reflection per column.
    fn flush(&mut self) {
        let b = self.pending;
        if b == 0 {
            return;
        }
        let n = self.cols;
        for k in 0..n {
            let (head, tail) = self.block.split_at_mut((k + 1) * BLOCK_ROWS);
            let x = &mut head[k * BLOCK_ROWS..k * BLOCK_ROWS + b];
            let sigma: f64 = x.iter().map(|v| v * v).sum();
            if sigma == 0.0 {
                continue;
            }
            let alpha = self.r[k * n + k];
            let norm = (alpha * alpha + sigma).sqrt();
            let beta = if alpha >= 0.0 { -norm } else { norm };
            let v0 = alpha - beta;
            // v = [1, x / v0]
            for v in x.iter_mut() {
                *v /= v0;
            }
            let tau = (beta - alpha) / beta;
            self.r[k * n + k] = beta;
            for j in (k + 1)..n {
                let col = &mut tail[(j - k - 1) * BLOCK_ROWS..(j - k - 1) * BLOCK_ROWS + b];
                let w = self.r[k * n + j] + dot(x, col);
                let tw = tau * w;
                self.r[k * n + j] -= tw;
                axpy(-tw, x, col);
            }
            let yb = &mut self.block_y[..b];
            let w = self.qty[k] + dot(x, yb);
            let tw = tau * w;
            self.qty[k] -= tw;
            axpy(-tw, x, yb);
        }
        self.residual_ss += self.block_y[..b].iter().map(|v| v * v).sum::<f64>();
        self.pending = 0;
    }

    fn factor(&mut self) -> PivotedQr {
        self.flush();
        PivotedQr::new(&self.r, &self.qty, self.cols)
    }

    fn tolerance(&self, largest: f64) -> f64 {
        self.rows.max(self.cols) as f64 * f64::EPSILON * largest
    }

    /// Solve, failing with `RankDeficient` unless every column is identifiable.
    pub fn solve(&mut self) -> Result<Solution> {
        let sol = self.solve_basic()?;
        if sol.rank < self.cols || self.rows < self.cols {
            return Err(Error::RankDeficient {
                rank: sol.rank,
                columns: self.cols,
                unidentifiable: sol.dropped.iter().map(|c| format!("column {c}")).collect(),
            });
        }
        Ok(sol)
    }

    /// Basic solution: unidentifiable columns are dropped (coefficient 0) and
    /// the remaining ones solved by back-substitution.
    pub fn solve_basic(&mut self) -> Result<Solution> {
        if self.rows == 0 {
            return Err(Error::TooSmall { len: 0, min: 1 });
        }
        let qr = self.factor();
        let tol = self.tolerance(qr.largest_diagonal());
        let rank = qr.rank(tol);
        let coefficients = qr.back_substitute(rank);
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numerical(
                "non-finite least-squares coefficients".into(),
            ));
        }
        let mut dropped: Vec<usize> = qr.perm[rank..].to_vec();
        dropped.sort_unstable();
        let residual_ss = self.residual_ss + qr.qtb[rank..].iter().map(|v| v * v).sum::<f64>();
        Ok(Solution {
            coefficients,
            rank,
            dropped,
            residual_ss,
        })
    }
}

/// Householder QR with column pivoting of a small dense square system.
struct PivotedQr {
    n: usize,
    // row-major n x n; upper triangle holds R after factoring
    a: Vec<f64>,
    qtb: Vec<f64>,
    perm: Vec<usize>,
}

impl PivotedQr {
    fn new(r: &[f64], qty: &[f64], n: usize) -> Self {
        // work column-major for contiguous column operations
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                a[j * n + i] = r[i * n + j];
            }
        }
        let mut qtb = qty.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut norms: Vec<f64> = (0..n).map(|j| sq_norm(&a[j * n..j * n + n])).collect();
        for k in 0..n {
            // pivot: largest remaining column norm, ties to the lowest index
            let mut p = k;
            for j in (k + 1)..n {
                if norms[j] > norms[p] {
                    p = j;
                }
            }
            if p != k {
                for i in 0..n {
                    a.swap(k * n + i, p * n + i);
                }
                norms.swap(k, p);
                perm.swap(k, p);
            }
            let (head, tail) = a.split_at_mut((k + 1) * n);
            let col = &mut head[k * n..k * n + n];
            let sigma = sq_norm(&col[k + 1..]);
            let alpha = col[k];
            if sigma > 0.0 {
                let norm = (alpha * alpha + sigma).sqrt();
                let beta = if alpha >= 0.0 { -norm } else { norm };
                let v0 = alpha - beta;
                for v in col[k + 1..].iter_mut() {
                    *v /= v0;
                }
                let tau = (beta - alpha) / beta;
                col[k] = beta;
                let v = &col[k + 1..];
                for j in (k + 1)..n {
                    let cj = &mut tail[(j - k - 1) * n..(j - k) * n];
                    let w = cj[k] + dot(v, &cj[k + 1..]);
                    let tw = tau * w;
                    cj[k] -= tw;
                    axpy(-tw, v, &mut cj[k + 1..]);
                }
                let w = qtb[k] + dot(v, &qtb[k + 1..]);
                let tw = tau * w;
                qtb[k] -= tw;
                axpy(-tw, v, &mut qtb[k + 1..]);
            }
            // remaining column norms below row k, recomputed to stay exact
            for j in (k + 1)..n {
                norms[j] = sq_norm(&tail[(j - k - 1) * n + k + 1..(j - k) * n]);
            }
        }
        Self { n, a, qtb, perm }
    }

    fn diag(&self, k: usize) -> f64 {
        self.a[k * self.n + k]
    }

    fn largest_diagonal(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.diag(0).abs()
        }
    }

    fn rank(&self, tol: f64) -> usize {
        (0..self.n)
            .take_while(|&k| self.diag(k).abs() > tol)
            .count()
    }

    fn back_substitute(&self, rank: usize) -> Vec<f64> {
        let n = self.n;
        let mut z = self.qtb[..rank].to_vec();
        for i in (0..rank).rev() {
            let mut s = z[i];
            for j in (i + 1)..rank {
                s -= self.a[j * n + i] * z[j];
            }
            z[i] = s / self.a[i * n + i];
        }
        let mut x = vec![0.0; n];
        for (i, &zi) in z.iter().enumerate() {
            x[self.perm[i]] = zi;
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Least-squares coefficients for an explicit design matrix (rows of expanded
/// features). Fails with `RankDeficient` when the columns are not all
/// identifiable.
pub fn fit_least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    if rows.len() != y.len() {
        return Err(Error::InvalidConfig(format!(
            "{} rows but {} targets",
            rows.len(),
            y.len()
        )));
    }
    let cols = rows.first().map_or(0, |r| r.len());
    if cols == 0 {
        return Err(Error::InvalidConfig("design matrix has no columns".into()));
    }
    let mut ls = LeastSquares::new(cols);
    for (r, &t) in rows.iter().zip(y) {
        if r.len() != cols {
            return Err(Error::InvalidConfig("ragged design matrix".into()));
        }
        ls.push_row(r, t);
    }
    if rows.len() < cols {
        let sol = ls.solve_basic()?;
        return Err(Error::RankDeficient {
            rank: sol.rank,
            columns: cols,
            unidentifiable: sol.dropped.iter().map(|c| format!("column {c}")).collect(),
        });
    }
    ls.solve().map(|s| s.coefficients)
}
