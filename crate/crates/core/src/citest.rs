//! The proxy conditional-independence test: discretize, estimate,
//! standardize, compute T = n * ||xi||^2, and compare against the
//! chi-square quantile.

use serde::{Deserialize, Serialize};

use crate::discretization::{
    assign_bins, quantile_partition, rank_preserving_discretize, Partition,
};
use crate::error::{Error, Result};
use crate::estimation::{
    build_q_block, build_q_sigma, mle_cond_prob_matrix, numerical_row_rank, tabulate, QMode,
};
use crate::numerics::{
    chi_square_quantile, chi_square_sf, DiagCovariance, GramSolver, Matrix, Vector,
};

/// Whether the regression target uses one response level or all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    /// Regress the most populated Y~ level only (default).
    #[default]
    SingleLevel,
    /// Stack all free Y~ levels for extra power.
    AllLevels,
}

/// Configuration of the proxy CI test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub l_x: usize,
    pub l_w: usize,
    pub l_y: usize,
    pub mode: TestMode,
}

impl Default for TestConfig {
    fn default() -> TestConfig {
        TestConfig {
            alpha: 0.05,
            l_x: 14,
            l_w: 12,
            l_y: 5,
            mode: TestMode::SingleLevel,
        }
    }
}

impl TestConfig {
    pub fn new(alpha: f64, l_x: usize, l_w: usize, l_y: usize, mode: TestMode) -> Result<Self> {
        let cfg = TestConfig {
            alpha,
            l_x,
            l_w,
            l_y,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.l_x > self.l_w && self.l_w >= 2) {
            return Err(Error::InvalidConfig(format!(
                "need l_x > l_w >= 2, got l_x = {}, l_w = {}",
                self.l_x, self.l_w
            )));
        }
        if self.l_y < 2 {
            return Err(Error::InvalidConfig(format!(
                "need l_y >= 2, got {}",
                self.l_y
            )));
        }
        Ok(())
    }
}

/// Degrees of freedom of the null distribution: the dimensions of X~
/// beyond W~, aggregated over free Y~ levels in all-levels mode.
pub fn degrees_of_freedom(l_x: usize, l_w: usize, l_y: usize, mode: TestMode) -> Result<u32> {
    if l_x <= l_w {
        return Err(Error::InvalidConfig(format!(
            "degrees of freedom need l_x > l_w, got l_x = {l_x}, l_w = {l_w}"
        )));
    }
    let base = (l_x - l_w) as u32;
    Ok(match mode {
        TestMode::SingleLevel => base,
        TestMode::AllLevels => base * (l_y as u32 - 1),
    })
}

/// Standardize by Sigma^{-1/2} and take the least-squares residual.
/// Returns the residual and the Gram pivot ratio (conditioning indicator).
fn standardized_residual(
    q: &Vector,
    sigma: &DiagCovariance,
    big_q: &Matrix,
) -> Result<(Vector, f64)> {
    assert_eq!(q.len(), sigma.len(), "q and Sigma dimension mismatch");
    assert_eq!(q.len(), big_q.cols(), "q and Q dimension mismatch");
    let inv_sqrt = sigma.inv_sqrt();
    let u: Vec<f64> = q
        .as_slice()
        .iter()
        .zip(&inv_sqrt)
        .map(|(a, b)| a * b)
        .collect();
    let design = big_q.scale_columns(&inv_sqrt);
    let solver = GramSolver::new(&design)?;
    let fitted = design.apply(&u);
    let coef = solver.solve(&fitted);
    let back = design.apply_transposed(&coef);
    let xi: Vec<f64> = u.iter().zip(&back).map(|(a, b)| a - b).collect();
    Ok((Vector::new(xi), solver.pivot_ratio()))
}

/// T = n * ||xi||^2 where xi is the standardized least-squares residual of
/// regressing q_hat on the rows of Q_hat.
pub fn test_statistic(q: &Vector, sigma: &DiagCovariance, big_q: &Matrix, n: usize) -> Result<f64> {
    let (xi, _) = standardized_residual(q, sigma, big_q)?;
    Ok(n as f64 * xi.norm_sq())
}

/// p-value and rejection decision for an observed statistic.
/// Rejects iff T strictly exceeds the (1 - alpha) quantile of chi^2_r.
pub fn decide(t: f64, r: u32, alpha: f64) -> Result<(f64, bool)> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("statistic must be >= 0, got {t}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    let p = chi_square_sf(t, r)?;
    let z = chi_square_quantile(1.0 - alpha, r)?;
    Ok((p, t > z))
}

/// Pipeline state recorded for post-hoc inspection.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub x_partition: Partition,
    pub w_partition: Partition,
    pub y_partition: Partition,
    /// Y~ level used as the regression target in single-level mode.
    pub y_level: Option<usize>,
    /// Numerical row rank of the estimated P(W~|X~) at tolerance 1e-6.
    pub q_rank: usize,
    /// Smallest over largest pivot of the standardized Gram solve.
    pub gram_pivot_ratio: f64,
}

/// Outcome of the proxy CI test.
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub reject: bool,
    pub diagnostics: Diagnostics,
}

/// Run the full proxy conditional-independence test of X against Y with
/// proxy W. Deterministic: identical inputs give identical results.
pub fn proxy_ci_test(x: &[f64], y: &[f64], w: &[f64], cfg: &TestConfig) -> Result<TestResult> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        }
        .at_stage("input"));
    }
    if x.len() != w.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: w.len(),
        }
        .at_stage("input"));
    }
    let n = x.len();

    let (x_part, w_part) = rank_preserving_discretize(x, w, cfg.l_x, cfg.l_w)
        .map_err(|e| e.at_stage("discretization"))?;
    let x_labels = assign_bins(x, &x_part);
    let w_labels = assign_bins(w, &w_part);

    let y_part = quantile_partition(y, cfg.l_y).map_err(|e| e.at_stage("y-binning"))?;
    let y_labels = assign_bins(y, &y_part);

    let t_xy = tabulate(&x_labels, &y_labels).map_err(|e| e.at_stage("tabulation"))?;
    let t_wx = tabulate(&w_labels, &x_labels).map_err(|e| e.at_stage("tabulation"))?;

    let (q_mode, y_level) = match cfg.mode {
        TestMode::SingleLevel => {
            // Most populated Y~ level; ties break to the lowest index.
            let counts = y_labels.bin_counts();
            let level = counts
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
                .map(|(i, _)| i)
                .unwrap_or(0);
            (QMode::SingleLevel(level), Some(level))
        }
        TestMode::AllLevels => (QMode::AllLevels, None),
    };
    let (q, sigma) = build_q_sigma(&t_xy, q_mode).map_err(|e| e.at_stage("estimation"))?;
    let p_wx = mle_cond_prob_matrix(&t_wx).map_err(|e| e.at_stage("estimation"))?;
    let q_rank = numerical_row_rank(&p_wx.probs, 1e-6);
    let big_q = match cfg.mode {
        TestMode::SingleLevel => p_wx.probs.clone(),
        TestMode::AllLevels => build_q_block(&p_wx, cfg.l_y - 1),
    };

    let (xi, pivot_ratio) =
        standardized_residual(&q, &sigma, &big_q).map_err(|e| e.at_stage("statistic"))?;
    let statistic = n as f64 * xi.norm_sq();
    let df = degrees_of_freedom(cfg.l_x, cfg.l_w, cfg.l_y, cfg.mode)?;
    let (p_value, reject) = decide(statistic, df, cfg.alpha)?;

    Ok(TestResult {
        statistic,
        df,
        p_value,
        reject,
        diagnostics: Diagnostics {
            x_partition: x_part,
            w_partition: w_part,
            y_partition: y_part,
            y_level,
            q_rank,
            gram_pivot_ratio: pivot_ratio,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    #[test]
    fn dof_examples() {
        assert_eq!(
            degrees_of_freedom(14, 12, 5, TestMode::SingleLevel).unwrap(),
            2
        );
        assert_eq!(
            degrees_of_freedom(14, 12, 5, TestMode::AllLevels).unwrap(),
            8
        );
        assert_eq!(
            degrees_of_freedom(3, 2, 3, TestMode::AllLevels).unwrap(),
            2
        );
        assert!(degrees_of_freedom(12, 12, 5, TestMode::SingleLevel).is_err());
    }

    #[test]
    fn statistic_zero_for_square_invertible_design() {
        let q = Vector::new(vec![0.3, 0.7]);
        let sigma = DiagCovariance::new(vec![1.0, 1.0]);
        let big_q = Matrix::from_rows(&[vec![0.8, 0.4], vec![0.2, 0.6]]);
        let t = test_statistic(&q, &sigma, &big_q, 1000).unwrap();
        assert!(t < 1000.0 * 1e-20, "t = {t}");
    }

    #[test]
    fn statistic_zero_on_image_membership() {
        // q = Q^T c for a known coefficient vector c.
        let big_q = Matrix::from_rows(&[
            vec![0.5, 0.2, 0.1, 0.3],
            vec![0.5, 0.8, 0.9, 0.7],
        ]);
        let c = [1.3, -0.4];
        let q = Vector::new(big_q.apply_transposed(&c));
        let sigma = DiagCovariance::new(vec![0.9, 1.1, 1.3, 0.7]);
        let t = test_statistic(&q, &sigma, &big_q, 500).unwrap();
        assert!(t < 1e-16, "t = {t}");
    }

    #[test]
    fn statistic_invariant_to_row_permutation() {
        let big_q = Matrix::from_rows(&[
            vec![0.5, 0.2, 0.1, 0.3, 0.9, 0.4],
            vec![0.3, 0.7, 0.4, 0.2, 0.05, 0.5],
            vec![0.2, 0.1, 0.5, 0.5, 0.05, 0.1],
        ]);
        let permuted = Matrix::from_rows(&[
            vec![0.2, 0.1, 0.5, 0.5, 0.05, 0.1],
            vec![0.5, 0.2, 0.1, 0.3, 0.9, 0.4],
            vec![0.3, 0.7, 0.4, 0.2, 0.05, 0.5],
        ]);
        let q = Vector::new(vec![0.4, 0.1, 0.2, 0.05, 0.15, 0.1]);
        let sigma = DiagCovariance::new(vec![1.3, 0.8, 0.5, 2.0, 1.1, 0.9]);
        let t1 = test_statistic(&q, &sigma, &big_q, 100).unwrap();
        let t2 = test_statistic(&q, &sigma, &permuted, 100).unwrap();
        assert!((t1 - t2).abs() <= 1e-10 * t1.max(1.0), "{t1} vs {t2}");
    }

    #[test]
    fn decide_examples() {
        let (p, reject) = decide(0.0, 2, 0.05).unwrap();
        assert_eq!(p, 1.0);
        assert!(!reject);

        // Boundary: the decision is strict, so T equal to the quantile
        // (here to ten digits, just below it) does not reject.
        let (p, reject) = decide(5.991_464_547, 2, 0.05).unwrap();
        assert!((p - 0.05).abs() < 1e-9);
        assert!(!reject);

        let (p, reject) = decide(20.0, 2, 0.05).unwrap();
        assert!((p - (-10.0f64).exp()).abs() < 1e-12);
        assert!(reject);
    }

    #[test]
    fn config_validation() {
        assert!(TestConfig::new(0.05, 14, 12, 5, TestMode::SingleLevel).is_ok());
        assert!(TestConfig::new(0.0, 14, 12, 5, TestMode::SingleLevel).is_err());
        assert!(TestConfig::new(0.05, 12, 12, 5, TestMode::SingleLevel).is_err());
        assert!(TestConfig::new(0.05, 14, 12, 1, TestMode::SingleLevel).is_err());
    }

    #[test]
    fn pipeline_rejects_constant_y() {
        // A constant y has no quantile partition; the error carries the
        // y-binning stage.
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let w = x.clone();
        let y = vec![1.0; n];
        let cfg = TestConfig::new(0.05, 4, 2, 2, TestMode::SingleLevel).unwrap();
        match proxy_ci_test(&x, &y, &w, &cfg) {
            Err(e @ Error::Stage { stage: "y-binning", .. }) => {
                assert_eq!(e.name(), "DegenerateData");
            }
            other => panic!("expected staged DegenerateData, got {other:?}"),
        }
    }

    #[test]
    fn pipeline_rejects_short_input() {
        let x = vec![0.0, 1.0, 2.0];
        let cfg = TestConfig::default();
        match proxy_ci_test(&x, &x, &x, &cfg) {
            Err(e) => assert_eq!(e.name(), "TooFewSamples"),
            other => panic!("expected TooFewSamples, got {other:?}"),
        }
    }
}
