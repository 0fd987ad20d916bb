//! Contingency tabulation and maximum-likelihood estimation of conditional
//! probabilities with their asymptotic diagonal covariance.

use crate::discretization::LabeledSample;
use crate::error::{Error, Result};
use crate::numerics::{singular_values, DiagCovariance, Matrix, Vector};

/// Minimum samples required in every conditioning cell before the MLE is
/// trusted. Violations are hard errors suggesting fewer bins.
pub const MIN_CELL_TOTAL: u64 = 5;

/// Joint counts Z_ij of two discretized variables.
#[derive(Debug, Clone)]
pub struct ContingencyTable {
    rows: usize,
    cols: usize,
    counts: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    pub fn from_counts(rows: usize, cols: usize, counts: Vec<u64>) -> Result<ContingencyTable> {
        assert!(rows >= 1 && cols >= 1, "table must be at least 1x1");
        assert_eq!(counts.len(), rows * cols, "count length mismatch");
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::ZeroTable);
        }
        Ok(ContingencyTable {
            rows,
            cols,
            counts,
            n,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Total sample size n.
    pub fn total(&self) -> u64 {
        self.n
    }

    #[inline]
    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.cols + j]
    }

    pub fn row_total(&self, i: usize) -> u64 {
        (0..self.cols).map(|j| self.count(i, j)).sum()
    }

    pub fn col_total(&self, j: usize) -> u64 {
        (0..self.rows).map(|i| self.count(i, j)).sum()
    }
}

/// Z_ij = number of samples with row label i and column label j.
pub fn tabulate(rows: &LabeledSample, cols: &LabeledSample) -> Result<ContingencyTable> {
    if rows.len() != cols.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: cols.len(),
        });
    }
    if rows.is_empty() {
        return Err(Error::ZeroTable);
    }
    let (nr, nc) = (rows.bin_count(), cols.bin_count());
    let mut counts = vec![0u64; nr * nc];
    for (&i, &j) in rows.labels().iter().zip(cols.labels()) {
        counts[i * nc + j] += 1;
    }
    ContingencyTable::from_counts(nr, nc, counts)
}

/// Conditional probability vector with its asymptotic covariance.
#[derive(Debug, Clone)]
pub struct CondProbVector {
    /// Entry i is the estimate of P(level | row i).
    pub probs: Vector,
    /// Diagonal of the asymptotic covariance of sqrt(n) (p_hat - p).
    pub covariance: DiagCovariance,
    /// Sample size behind the estimate.
    pub n: u64,
}

/// Column-stochastic conditional probability matrix.
#[derive(Debug, Clone)]
pub struct CondProbMatrix {
    /// Column j is the estimated distribution of the row variable given
    /// column level j; every column sums to one.
    pub probs: Matrix,
    pub n: u64,
}

fn check_row_totals(t: &ContingencyTable) -> Result<Vec<u64>> {
    let mut totals = Vec::with_capacity(t.rows());
    for i in 0..t.rows() {
        let z = t.row_total(i);
        if z < MIN_CELL_TOTAL {
            return Err(Error::SparseCell {
                level: i,
                count: z,
                min: MIN_CELL_TOTAL,
            });
        }
        totals.push(z);
    }
    Ok(totals)
}

/// MLE of the conditional probability vector P(y | rows) for one column
/// level, with the diagonal covariance
/// sigma_i = p(1-p) / p(row_i), the probabilities clamped half a count away
/// from 0 and 1 so the covariance stays invertible.
pub fn mle_cond_prob_vector(t: &ContingencyTable, y_level: usize) -> Result<CondProbVector> {
    if y_level >= t.cols() {
        return Err(Error::InvalidConfig(format!(
            "level {y_level} out of range for a table with {} columns",
            t.cols()
        )));
    }
    let totals = check_row_totals(t)?;
    let n = t.total();
    let mut probs = Vec::with_capacity(t.rows());
    let mut cov = Vec::with_capacity(t.rows());
    for i in 0..t.rows() {
        let zi = totals[i] as f64;
        let p = t.count(i, y_level) as f64 / zi;
        probs.push(p);
        // Covariance only: the raw estimate keeps zero/one cells.
        let clamped = p.clamp(0.5 / zi, 1.0 - 0.5 / zi);
        let px = zi / n as f64;
        cov.push(clamped * (1.0 - clamped) / px);
    }
    Ok(CondProbVector {
        probs: Vector::new(probs),
        covariance: DiagCovariance::new(cov),
        n,
    })
}

/// MLE of P(rows | cols): column j of the result is the empirical
/// distribution of the row variable on the subsample with column label j.
pub fn mle_cond_prob_matrix(t: &ContingencyTable) -> Result<CondProbMatrix> {
    let mut m = Matrix::zeros(t.rows(), t.cols());
    for j in 0..t.cols() {
        let colsum = t.col_total(j);
        if colsum < MIN_CELL_TOTAL {
            return Err(Error::SparseCell {
                level: j,
                count: colsum,
                min: MIN_CELL_TOTAL,
            });
        }
        for i in 0..t.rows() {
            m.set(i, j, t.count(i, j) as f64 / colsum as f64);
        }
    }
    Ok(CondProbMatrix {
        probs: m,
        n: t.total(),
    })
}

/// Which response levels enter the regression target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QMode {
    /// A single response level: q = P(y_level | rows).
    SingleLevel(usize),
    /// All free levels stacked: q = [P(y_1|rows); ...; P(y_{J-1}|rows)].
    AllLevels,
}

/// Assemble the regression target q_hat and its diagonal covariance from a
/// (rows = X~, cols = Y~) table. In all-levels mode the per-level
/// covariances are stacked block-diagonally.
pub fn build_q_sigma(t_xy: &ContingencyTable, mode: QMode) -> Result<(Vector, DiagCovariance)> {
    if t_xy.rows() < 2 || t_xy.cols() < 2 {
        return Err(Error::InvalidConfig(format!(
            "q construction needs a table of at least 2x2, got {}x{}",
            t_xy.rows(),
            t_xy.cols()
        )));
    }
    match mode {
        QMode::SingleLevel(y) => {
            let est = mle_cond_prob_vector(t_xy, y)?;
            Ok((est.probs, est.covariance))
        }
        QMode::AllLevels => {
            let mut stacked = Vec::new();
            let mut blocks = Vec::new();
            for y in 0..t_xy.cols() - 1 {
                let est = mle_cond_prob_vector(t_xy, y)?;
                stacked.extend_from_slice(est.probs.as_slice());
                blocks.push(est.covariance);
            }
            Ok((Vector::new(stacked), DiagCovariance::stacked(&blocks)))
        }
    }
}

/// Block-diagonal matrix with `repeats` copies of `block` on the diagonal.
pub fn build_q_block(block: &CondProbMatrix, repeats: usize) -> Matrix {
    assert!(repeats >= 1, "repeats must be at least 1");
    let (r, c) = (block.probs.rows(), block.probs.cols());
    let mut m = Matrix::zeros(repeats * r, repeats * c);
    for k in 0..repeats {
        for i in 0..r {
            for j in 0..c {
                m.set(k * r + i, k * c + j, block.probs.get(i, j));
            }
        }
    }
    m
}

/// Number of singular values above `tol` times the largest one.
pub fn numerical_row_rank(m: &Matrix, tol: f64) -> usize {
    assert!(tol > 0.0, "tolerance must be positive");
    let sv = singular_values(m);
    let max = sv.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assign_bins, Partition};

    fn labeled(labels: &[usize], bins: usize) -> LabeledSample {
        // Synthesize values that land in the requested bins of an integer
        // partition; keeps tests in terms of labels.
        let cuts: Vec<f64> = (1..bins).map(|i| i as f64).collect();
        let p = Partition::new(cuts).unwrap();
        let values: Vec<f64> = labels.iter().map(|&l| l as f64 + 0.5).collect();
        let ls = assign_bins(&values, &p);
        assert_eq!(ls.labels(), labels);
        ls
    }

    #[test]
    fn tabulate_counts() {
        let rows = labeled(&[0, 0, 1], 2);
        let cols = labeled(&[0, 1, 1], 2);
        let t = tabulate(&rows, &cols).unwrap();
        assert_eq!(t.count(0, 0), 1);
        assert_eq!(t.count(0, 1), 1);
        assert_eq!(t.count(1, 0), 0);
        assert_eq!(t.count(1, 1), 1);
        assert_eq!(t.total(), 3);
    }

    #[test]
    fn tabulate_empty_is_zero_table() {
        let rows = labeled(&[], 2);
        let cols = labeled(&[], 2);
        assert!(matches!(tabulate(&rows, &cols), Err(Error::ZeroTable)));
    }

    #[test]
    fn tabulate_length_mismatch() {
        let rows = labeled(&[0, 1], 2);
        let cols = labeled(&[0], 2);
        assert!(matches!(
            tabulate(&rows, &cols),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mle_vector_balanced_2x2() {
        let t = ContingencyTable::from_counts(2, 2, vec![5, 5, 5, 5]).unwrap();
        let est = mle_cond_prob_vector(&t, 0).unwrap();
        assert_eq!(est.probs.as_slice(), &[0.5, 0.5]);
        // p(1-p)/p(x) = 0.25 / 0.5 = 0.5 per entry.
        assert!((est.covariance.diagonal()[0] - 0.5).abs() < 1e-15);
        assert!((est.covariance.diagonal()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mle_vector_unbalanced() {
        let t = ContingencyTable::from_counts(2, 2, vec![15, 5, 5, 15]).unwrap();
        let est = mle_cond_prob_vector(&t, 0).unwrap();
        assert_eq!(est.probs.as_slice(), &[0.75, 0.25]);
        let est2 = mle_cond_prob_vector(&t, 1).unwrap();
        assert_eq!(est2.probs.as_slice(), &[0.25, 0.75]);
    }

    #[test]
    fn mle_vector_sparse_cell() {
        let t = ContingencyTable::from_counts(2, 2, vec![2, 2, 5, 5]).unwrap();
        assert!(matches!(
            mle_cond_prob_vector(&t, 0),
            Err(Error::SparseCell { level: 0, .. })
        ));
    }

    #[test]
    fn mle_vector_clamps_covariance_only() {
        // A zero cell keeps probability 0 in the estimate but a positive
        // covariance entry.
        let t = ContingencyTable::from_counts(2, 2, vec![0, 10, 5, 5]).unwrap();
        let est = mle_cond_prob_vector(&t, 0).unwrap();
        assert_eq!(est.probs.as_slice()[0], 0.0);
        assert!(est.covariance.diagonal()[0] > 0.0);
    }

    #[test]
    fn mle_matrix_diagonal_counts() {
        let t = ContingencyTable::from_counts(2, 2, vec![9, 0, 0, 7]).unwrap();
        let m = mle_cond_prob_matrix(&t).unwrap();
        assert_eq!(m.probs.get(0, 0), 1.0);
        assert_eq!(m.probs.get(1, 1), 1.0);
        assert_eq!(m.probs.get(0, 1), 0.0);
    }

    #[test]
    fn mle_matrix_identical_columns() {
        let t = ContingencyTable::from_counts(2, 3, vec![6, 6, 6, 18, 18, 18]).unwrap();
        let m = mle_cond_prob_matrix(&t).unwrap();
        for j in 0..3 {
            assert!((m.probs.get(0, j) - 0.25).abs() < 1e-15);
            assert!((m.probs.get(1, j) - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn columns_sum_to_one() {
        let t = ContingencyTable::from_counts(3, 2, vec![3, 9, 4, 2, 6, 1]).unwrap();
        let m = mle_cond_prob_matrix(&t).unwrap();
        for j in 0..2 {
            let s: f64 = (0..3).map(|i| m.probs.get(i, j)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn q_sigma_single_and_all_levels() {
        let t = ContingencyTable::from_counts(2, 2, vec![5, 5, 5, 5]).unwrap();
        let (q, _) = build_q_sigma(&t, QMode::AllLevels).unwrap();
        assert_eq!(q.as_slice(), &[0.5, 0.5]);

        let t2 = ContingencyTable::from_counts(2, 2, vec![15, 5, 5, 15]).unwrap();
        let (q2, _) = build_q_sigma(&t2, QMode::SingleLevel(1)).unwrap();
        assert_eq!(q2.as_slice(), &[0.25, 0.75]);

        let t3 = ContingencyTable::from_counts(3, 3, vec![5; 9]).unwrap();
        let (q3, sigma3) = build_q_sigma(&t3, QMode::AllLevels).unwrap();
        assert_eq!(q3.len(), 6);
        assert_eq!(sigma3.len(), 6);
        assert!(q3.as_slice().iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn q_block_shapes_and_trace() {
        let t = ContingencyTable::from_counts(2, 3, vec![6, 6, 6, 18, 18, 18]).unwrap();
        let m = mle_cond_prob_matrix(&t).unwrap();
        let b1 = build_q_block(&m, 1);
        assert_eq!((b1.rows(), b1.cols()), (2, 3));
        assert_eq!(b1, m.probs);
        let b2 = build_q_block(&m, 2);
        assert_eq!((b2.rows(), b2.cols()), (4, 6));
        assert_eq!(b2.get(0, 3), 0.0);
        assert_eq!(b2.get(2, 0), 0.0);
        assert_eq!(b2.get(2, 3), m.probs.get(0, 0));

        // Square sub-case: trace of the block matrix is repeats x trace.
        let sq = ContingencyTable::from_counts(2, 2, vec![9, 6, 6, 9]).unwrap();
        let sqm = mle_cond_prob_matrix(&sq).unwrap();
        let b3 = build_q_block(&sqm, 3);
        assert!((b3.trace() - 3.0 * sqm.probs.trace()).abs() < 1e-12);
    }

    #[test]
    fn row_rank_basics() {
        assert_eq!(numerical_row_rank(&Matrix::identity(4), 1e-6), 4);
        let m = Matrix::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.0, 3.0],
            vec![0.0, 1.0, 0.0],
        ]);
        assert_eq!(numerical_row_rank(&m, 1e-6), 2);
    }
}
