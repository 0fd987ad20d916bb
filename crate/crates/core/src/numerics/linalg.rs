//! Small dense linear algebra: determinants, symmetric positive definite
//! solves, and the least-squares residual projector of the test statistic.
//!
//! Every matrix in the pipeline is at most ~70 x 70, so plain dense
//! row-major storage with pivoted O(n^3) factorizations is the right tool.

use crate::error::{Error, Result};

/// Pivot-ratio threshold below which a Gram matrix is declared singular.
pub const GRAM_PIVOT_THRESHOLD: f64 = 1e-12;

/// Dense row-major matrix of finite f64 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build from row-major entries. Panics on shape mismatch or non-finite
    /// entries; those are programming errors, not data errors.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        assert!(rows >= 1 && cols >= 1, "matrix must be at least 1x1");
        assert_eq!(data.len(), rows * cols, "entry count mismatch");
        assert!(data.iter().all(|v| v.is_finite()), "non-finite entry");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        assert!(rows >= 1 && cols >= 1);
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Matrix {
        assert!(!rows.is_empty());
        let cols = rows[0].len();
        let data: Vec<f64> = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), cols, "ragged rows");
                r.iter().copied()
            })
            .collect();
        Matrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "inner dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.get(k, j);
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Transposed matrix-vector product (v^T A)^T without materializing A^T.
    pub fn apply_transposed(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += vi * self.get(i, j);
            }
        }
        out
    }

    /// New matrix with column j multiplied by `scale[j]`.
    pub fn scale_columns(&self, scale: &[f64]) -> Matrix {
        assert_eq!(scale.len(), self.cols, "scale length mismatch");
        let mut m = self.clone();
        for i in 0..m.rows {
            for j in 0..m.cols {
                m.data[i * m.cols + j] *= scale[j];
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "trace requires a square matrix");
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Column vector of finite f64 entries, length >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Vector {
        assert!(!data.is_empty(), "vector must be non-empty");
        assert!(data.iter().all(|v| v.is_finite()), "non-finite entry");
        Vector(data)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Vector {
        Vector::new(v)
    }
}

/// Diagonal covariance with strictly positive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagCovariance(Vec<f64>);

impl DiagCovariance {
    pub fn new(diag: Vec<f64>) -> DiagCovariance {
        assert!(!diag.is_empty(), "covariance must be non-empty");
        assert!(
            diag.iter().all(|v| v.is_finite() && *v > 0.0),
            "covariance diagonal must be strictly positive"
        );
        DiagCovariance(diag)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.0
    }

    /// Entries of Sigma^{-1/2}.
    pub fn inv_sqrt(&self) -> Vec<f64> {
        self.0.iter().map(|v| 1.0 / v.sqrt()).collect()
    }

    /// Stack several independent blocks into one diagonal.
    pub fn stacked(blocks: &[DiagCovariance]) -> DiagCovariance {
        let diag: Vec<f64> = blocks.iter().flat_map(|b| b.0.iter().copied()).collect();
        DiagCovariance::new(diag)
    }
}

/// Determinant by LU factorization with partial pivoting. Returns 0.0 for
/// matrices singular within working precision.
pub fn determinant(m: &Matrix) -> f64 {
    assert_eq!(m.rows(), m.cols(), "determinant requires a square matrix");
    let n = m.rows();
    let mut a = m.clone();
    let mut sign = 1.0_f64;
    for k in 0..n {
        let mut piv = k;
        let mut max = a.get(k, k).abs();
        for i in k + 1..n {
            let v = a.get(i, k).abs();
            if v > max {
                max = v;
                piv = i;
            }
        }
        if max == 0.0 {
            return 0.0;
        }
        if piv != k {
            for j in 0..n {
                let tmp = a.get(k, j);
                a.set(k, j, a.get(piv, j));
                a.set(piv, j, tmp);
            }
            sign = -sign;
        }
        let pivot = a.get(k, k);
        for i in k + 1..n {
            let f = a.get(i, k) / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a.set(i, j, a.get(i, j) - f * a.get(k, j));
            }
        }
    }
    let mut det = sign;
    for k in 0..n {
        det *= a.get(k, k);
    }
    det
}

/// Pivoted Cholesky factorization of the Gram matrix G = Q Q^T of a k x m
/// design with k <= m. Detects rank deficiency of Q through the pivot ratio.
#[derive(Debug, Clone)]
pub struct GramSolver {
    // Lower-triangular factor of P G P^T, with `perm` the row permutation.
    factor: Matrix,
    perm: Vec<usize>,
    pivot_ratio: f64,
}

impl GramSolver {
    /// Factorize Q Q^T with diagonal pivoting. Fails with `SingularGram`
    /// when the smallest pivot falls below `GRAM_PIVOT_THRESHOLD` times the
    /// largest, which signals that Q does not have full row rank.
    pub fn new(q: &Matrix) -> Result<GramSolver> {
        let k = q.rows();
        assert!(
            k <= q.cols(),
            "gram solve expects a wide design (k <= m), got {}x{}",
            k,
            q.cols()
        );
        // G = Q Q^T, symmetric k x k.
        let mut g = Matrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let dot: f64 = q.row(i).iter().zip(q.row(j)).map(|(a, b)| a * b).sum();
                g.set(i, j, dot);
                g.set(j, i, dot);
            }
        }
        let mut perm: Vec<usize> = (0..k).collect();
        let mut max_pivot = f64::NEG_INFINITY;
        let mut min_pivot = f64::INFINITY;
        for step in 0..k {
            // Largest remaining diagonal entry becomes the pivot.
            let mut best = step;
            for i in step + 1..k {
                if g.get(i, i) > g.get(best, best) {
                    best = i;
                }
            }
            if best != step {
                perm.swap(step, best);
                for j in 0..k {
                    let tmp = g.get(step, j);
                    g.set(step, j, g.get(best, j));
                    g.set(best, j, tmp);
                }
                for i in 0..k {
                    let tmp = g.get(i, step);
                    g.set(i, step, g.get(i, best));
                    g.set(i, best, tmp);
                }
            }
            let d = g.get(step, step);
            max_pivot = max_pivot.max(d);
            min_pivot = min_pivot.min(d);
            let ratio = if max_pivot > 0.0 { d / max_pivot } else { 0.0 };
            if !(d > 0.0) || ratio < GRAM_PIVOT_THRESHOLD {
                return Err(Error::SingularGram {
                    pivot_ratio: ratio.max(0.0),
                    threshold: GRAM_PIVOT_THRESHOLD,
                });
            }
            let l = d.sqrt();
            g.set(step, step, l);
            for i in step + 1..k {
                g.set(i, step, g.get(i, step) / l);
            }
            // Keep the trailing submatrix fully symmetric: the diagonal
            // pivot swap above exchanges whole rows and columns.
            for i in step + 1..k {
                let lik = g.get(i, step);
                if lik == 0.0 {
                    continue;
                }
                for j in step + 1..=i {
                    let v = g.get(i, j) - lik * g.get(j, step);
                    g.set(i, j, v);
                    g.set(j, i, v);
                }
            }
        }
        Ok(GramSolver {
            factor: g,
            perm,
            pivot_ratio: min_pivot / max_pivot,
        })
    }

    /// Smallest over largest pivot; a conditioning indicator in (0, 1].
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    /// Solve (Q Q^T) s = rhs.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.factor.rows();
        assert_eq!(rhs.len(), k, "rhs length mismatch");
        // L L^T (P s) = P rhs
        let mut y: Vec<f64> = (0..k).map(|i| rhs[self.perm[i]]).collect();
        for i in 0..k {
            let mut v = y[i];
            for j in 0..i {
                v -= self.factor.get(i, j) * y[j];
            }
            y[i] = v / self.factor.get(i, i);
        }
        for i in (0..k).rev() {
            let mut v = y[i];
            for j in i + 1..k {
                v -= self.factor.get(j, i) * y[j];
            }
            y[i] = v / self.factor.get(i, i);
        }
        let mut s = vec![0.0; k];
        for i in 0..k {
            s[self.perm[i]] = y[i];
        }
        s
    }
}

/// Solve (Q_std Q_std^T) s = rhs for a standardized k x m design.
pub fn solve_gram(q_std: &Matrix, rhs: &Vector) -> Result<Vector> {
    let solver = GramSolver::new(q_std)?;
    Ok(Vector::new(solver.solve(rhs.as_slice())))
}

/// Least-squares residual of regressing `q_std` on the rows of `Q_std`:
/// xi = {I - Q^T (Q Q^T)^{-1} Q} q, with both inputs already standardized.
pub fn projection_residual(q_std: &Vector, big_q_std: &Matrix) -> Result<Vector> {
    assert_eq!(
        q_std.len(),
        big_q_std.cols(),
        "target length must match design columns"
    );
    let solver = GramSolver::new(big_q_std)?;
    let fitted = big_q_std.apply(q_std.as_slice());
    let coef = solver.solve(&fitted);
    let back = big_q_std.apply_transposed(&coef);
    let xi: Vec<f64> = q_std
        .as_slice()
        .iter()
        .zip(&back)
        .map(|(a, b)| a - b)
        .collect();
    Ok(Vector::new(xi))
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method,
/// descending order. Intended for the small Gram matrices of this crate.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    assert_eq!(m.rows(), m.cols(), "eigenvalues require a square matrix");
    let n = m.rows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a.get(i, j).powi(2);
            }
        }
        if off.sqrt() <= 1e-14 * a.max_abs().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eig
}

/// Singular values of a (possibly rectangular) matrix, descending order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    // Work with the smaller Gram matrix of the two orientations.
    let gram = if m.rows() <= m.cols() {
        m.matmul(&m.transpose())
    } else {
        m.transpose().matmul(m)
    };
    sym_eigenvalues(&gram)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}
