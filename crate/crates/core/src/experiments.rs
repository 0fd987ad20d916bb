//! Monte-Carlo experiment harness: type-I/type-II error sweeps over sample
//! sizes and bin numbers, discretization-error curves against the oracle
//! latent variable, and null-distribution diagnostics.
//!
//! Replications are independent and run in parallel; per-replication seeds
//! derive from a stable hash of (base seed, cell coordinates, replication
//! index), so parallel and serial execution produce identical tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::citest::{proxy_ci_test, TestConfig, TestMode};
use crate::discretization::{assign_bins, quantile_partition, uniform_partition};
use crate::error::{Error, Result};
use crate::numerics::chi_square_cdf;
use crate::scm::{random_spec, sample_scm, GraphKind, ScmSpec};

/// Stable seed mixer (splitmix64 over the parts). The scheme is part of
/// the reproducibility contract: changing it changes every table.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

const TAG_SPEC: u64 = 1;
const TAG_DATA_H0: u64 = 2;
const TAG_DATA_H1: u64 = 3;

fn graph_id(g: GraphKind) -> u64 {
    match g {
        GraphKind::Confounder => 0,
        GraphKind::Mediator => 1,
    }
}

/// Configuration of an error-rate sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub graphs: Vec<GraphKind>,
    pub sample_sizes: Vec<usize>,
    /// W bin numbers; l_x stays fixed across the sweep.
    pub bin_numbers_w: Vec<usize>,
    pub l_x: usize,
    pub l_y: usize,
    /// Total replications per cell, spread over the outer spec seeds.
    pub replications: usize,
    /// Number of distinct random mechanism draws per cell.
    pub spec_seeds: usize,
    pub alpha: f64,
    pub mode: TestMode,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> SweepConfig {
        SweepConfig {
            graphs: vec![GraphKind::Confounder, GraphKind::Mediator],
            sample_sizes: vec![200, 400, 600, 800, 1200],
            bin_numbers_w: vec![4, 6, 8, 10, 12, 14],
            l_x: 14,
            l_y: 5,
            replications: 100,
            spec_seeds: 20,
            alpha: 0.05,
            mode: TestMode::SingleLevel,
            base_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        if self.spec_seeds == 0 {
            return Err(Error::InvalidConfig("spec_seeds must be >= 1".into()));
        }
        if self.graphs.is_empty() || self.sample_sizes.is_empty() || self.bin_numbers_w.is_empty()
        {
            return Err(Error::InvalidConfig(
                "graphs, sample sizes and bin numbers must be non-empty".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        for &n in &self.sample_sizes {
            if n < 10 * self.l_x {
                return Err(Error::InvalidConfig(format!(
                    "sample size {n} below the pipeline floor {}",
                    10 * self.l_x
                )));
            }
        }
        Ok(())
    }
}

/// One (graph, n, l_w) cell of the sweep. Rates are `None` when every
/// replication of that hypothesis failed in the pipeline; the failure
/// count tells the two cases apart.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorCell {
    pub graph: GraphKind,
    pub n: usize,
    pub l_w: usize,
    pub l_x: usize,
    /// Fraction of H0 replications rejected, over successful ones.
    pub type1: Option<f64>,
    /// Fraction of H1 replications not rejected, over successful ones.
    pub type2: Option<f64>,
    /// Pipeline errors across the H0 and H1 runs of the cell.
    pub failures: usize,
    /// Configured replications per hypothesis.
    pub reps: usize,
}

/// Results of an error-rate sweep, one cell per (graph, n, l_w).
#[derive(Debug, Clone, Serialize)]
pub struct ErrorTable {
    pub cells: Vec<ErrorCell>,
}

struct RepOutcome {
    h0_reject: Option<bool>,
    h1_reject: Option<bool>,
}

fn run_cell(cfg: &SweepConfig, graph: GraphKind, n: usize, l_w: usize) -> ErrorCell {
    let test_cfg = TestConfig::new(cfg.alpha, cfg.l_x, l_w, cfg.l_y, cfg.mode);
    let outcomes: Vec<RepOutcome> = match test_cfg {
        Err(_) => (0..cfg.replications)
            .map(|_| RepOutcome {
                h0_reject: None,
                h1_reject: None,
            })
            .collect(),
        Ok(tc) => (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let cell = [graph_id(graph), n as u64, l_w as u64];
                let outer = (rep % cfg.spec_seeds) as u64;
                let spec_seed = mix_seed(&[cfg.base_seed, cell[0], cell[1], cell[2], TAG_SPEC, outer]);
                let h0 = random_spec(graph, false, spec_seed);
                let h1 = random_spec(graph, true, spec_seed);
                let run = |spec: &ScmSpec, tag: u64| -> Option<bool> {
                    let data_seed =
                        mix_seed(&[cfg.base_seed, cell[0], cell[1], cell[2], tag, rep as u64]);
                    let s = sample_scm(spec, n, data_seed).ok()?;
                    proxy_ci_test(&s.x, &s.y, &s.w, &tc).ok().map(|r| r.reject)
                };
                RepOutcome {
                    h0_reject: run(&h0, TAG_DATA_H0),
                    h1_reject: run(&h1, TAG_DATA_H1),
                }
            })
            .collect(),
    };
    let h0_eval = outcomes.iter().filter(|o| o.h0_reject.is_some()).count();
    let h1_eval = outcomes.iter().filter(|o| o.h1_reject.is_some()).count();
    let h0_rej = outcomes
        .iter()
        .filter(|o| o.h0_reject == Some(true))
        .count();
    let h1_acc = outcomes
        .iter()
        .filter(|o| o.h1_reject == Some(false))
        .count();
    ErrorCell {
        graph,
        n,
        l_w,
        l_x: cfg.l_x,
        type1: (h0_eval > 0).then(|| h0_rej as f64 / h0_eval as f64),
        type2: (h1_eval > 0).then(|| h1_acc as f64 / h1_eval as f64),
        failures: (cfg.replications - h0_eval) + (cfg.replications - h1_eval),
        reps: cfg.replications,
    }
}

/// Run the full sweep. Deterministic given the config, independent of
/// execution order.
pub fn error_rate_sweep(cfg: &SweepConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &graph in &cfg.graphs {
        for &n in &cfg.sample_sizes {
            for &l_w in &cfg.bin_numbers_w {
                cells.push(run_cell(cfg, graph, n, l_w));
            }
        }
    }
    Ok(ErrorTable { cells })
}

/// One point of a discretization-error curve.
#[derive(Debug, Clone, Serialize)]
pub struct DisErrorPoint {
    pub bin_count: usize,
    /// Width of the uniform U bins at this count.
    pub bin_length: f64,
    /// |P(y~ | x~_i, u~_j) - P(y~ | u~_j)| at the most populated cells.
    pub e_dis: f64,
}

/// Minimum samples in the selected (x~, u~) cell for the estimate to count.
const MIN_DIS_CELL: usize = 30;

/// Empirical discretization error against the oracle latent variable.
///
/// For each bin count k, U and X both get k uniform bins; the error is
/// evaluated at the most populated X bin, U bin, and Y level (Y split at
/// its median), which maximizes the effective sample behind the estimate.
pub fn discretization_error_curve(
    spec: &ScmSpec,
    bin_counts: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<DisErrorPoint>> {
    if bin_counts.is_empty() {
        return Err(Error::InvalidConfig("no bin counts given".into()));
    }
    let s = sample_scm(spec, n, seed)?;
    let y_part = quantile_partition(&s.y, 2)?;
    let y_labels = assign_bins(&s.y, &y_part);
    let y_counts = y_labels.bin_counts();
    let y_level = if y_counts[0] >= y_counts[1] { 0 } else { 1 };

    let u_min = s.u.iter().cloned().fold(f64::INFINITY, f64::min);
    let u_max = s.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut points = Vec::with_capacity(bin_counts.len());
    for &k in bin_counts {
        if k < 2 {
            return Err(Error::InvalidConfig(format!("bin count {k} below 2")));
        }
        let u_part = uniform_partition(&s.u, k)?;
        let x_part = uniform_partition(&s.x, k)?;
        let u_labels = assign_bins(&s.u, &u_part);
        let x_labels = assign_bins(&s.x, &x_part);
        let pick_max = |counts: Vec<usize>| -> usize {
            counts
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
                .map(|(i, _)| i)
                .unwrap()
        };
        let i_star = pick_max(x_labels.bin_counts());
        let j_star = pick_max(u_labels.bin_counts());

        let mut cell_total = 0usize;
        let mut cell_hit = 0usize;
        let mut cond_total = 0usize;
        let mut cond_hit = 0usize;
        for t in 0..n {
            let in_u = u_labels.labels()[t] == j_star;
            if in_u {
                cond_total += 1;
                let hit = y_labels.labels()[t] == y_level;
                if hit {
                    cond_hit += 1;
                }
                if x_labels.labels()[t] == i_star {
                    cell_total += 1;
                    if hit {
                        cell_hit += 1;
                    }
                }
            }
        }
        if cell_total < MIN_DIS_CELL {
            return Err(Error::EmptyConditioningSet(format!(
                "cell (x bin {i_star}, u bin {j_star}) holds {cell_total} samples (< {MIN_DIS_CELL}) at k = {k}"
            )));
        }
        let p_cell = cell_hit as f64 / cell_total as f64;
        let p_cond = cond_hit as f64 / cond_total as f64;
        points.push(DisErrorPoint {
            bin_count: k,
            bin_length: (u_max - u_min) / k as f64,
            e_dis: (p_cell - p_cond).abs(),
        });
    }
    Ok(points)
}

/// Summary of the null distribution of T over seeded replications.
#[derive(Debug, Clone, Serialize)]
pub struct NullDiagnostics {
    /// Observed statistics, one per successful replication.
    pub statistics: Vec<f64>,
    /// Pipeline errors among the replications.
    pub failures: usize,
    /// Kolmogorov-Smirnov distance of the empirical CDF from chi^2_df.
    pub ks_distance: f64,
    pub mean: f64,
    pub df: u32,
    /// Set when fewer than two statistics back the KS distance.
    pub degenerate: bool,
}

/// Run the test repeatedly on fresh H0 draws and compare the empirical
/// distribution of T against chi^2_r.
pub fn null_distribution_diagnostic(
    spec: &ScmSpec,
    n: usize,
    replications: usize,
    cfg: &TestConfig,
    seed: u64,
) -> Result<NullDiagnostics> {
    if spec.edge_present() {
        return Err(Error::InvalidConfig(
            "null diagnostics need an H0 spec (no X -> Y edge)".into(),
        ));
    }
    if replications == 0 {
        return Err(Error::InvalidConfig("replications must be >= 1".into()));
    }
    cfg.validate()?;
    let df = crate::citest::degrees_of_freedom(cfg.l_x, cfg.l_w, cfg.l_y, cfg.mode)?;
    let results: Vec<Option<f64>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let data_seed = mix_seed(&[seed, TAG_DATA_H0, rep as u64]);
            let s = sample_scm(spec, n, data_seed).ok()?;
            proxy_ci_test(&s.x, &s.y, &s.w, cfg).ok().map(|r| r.statistic)
        })
        .collect();
    let mut statistics: Vec<f64> = results.iter().filter_map(|r| *r).collect();
    let failures = replications - statistics.len();
    if statistics.is_empty() {
        return Err(Error::DegenerateData(
            "every replication failed in the pipeline".into(),
        ));
    }
    statistics.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = statistics.len() as f64;
    let mut ks = 0.0_f64;
    for (i, t) in statistics.iter().enumerate() {
        let f = chi_square_cdf(*t, df)?;
        ks = ks.max(f - i as f64 / m).max((i + 1) as f64 / m - f);
    }
    let mean = statistics.iter().sum::<f64>() / m;
    Ok(NullDiagnostics {
        degenerate: statistics.len() < 2,
        statistics,
        failures,
        ks_distance: ks,
        mean,
        df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_mixer_is_stable_and_separating() {
        let a = mix_seed(&[0, 1, 2]);
        assert_eq!(a, mix_seed(&[0, 1, 2]));
        assert_ne!(a, mix_seed(&[0, 2, 1]));
        assert_ne!(a, mix_seed(&[0, 1]));
    }

    #[test]
    fn one_replication_cell_has_binary_rate() {
        let cfg = SweepConfig {
            graphs: vec![GraphKind::Confounder],
            sample_sizes: vec![400],
            bin_numbers_w: vec![2],
            l_x: 4,
            l_y: 3,
            replications: 1,
            spec_seeds: 1,
            ..SweepConfig::default()
        };
        let table = error_rate_sweep(&cfg).unwrap();
        assert_eq!(table.cells.len(), 1);
        let cell = &table.cells[0];
        if let Some(t1) = cell.type1 {
            assert!(t1 == 0.0 || t1 == 1.0);
        }
        assert_eq!(cell.reps, 1);
    }

    #[test]
    fn failures_plus_evaluated_equal_configured() {
        let cfg = SweepConfig {
            graphs: vec![GraphKind::Confounder],
            sample_sizes: vec![200],
            // l_w = l_x is an invalid test config: every replication is a
            // failure and the rates are undefined.
            bin_numbers_w: vec![4, 14],
            l_x: 14,
            replications: 6,
            spec_seeds: 2,
            ..SweepConfig::default()
        };
        let table = error_rate_sweep(&cfg).unwrap();
        for cell in &table.cells {
            let h0_eval = cell
                .type1
                .map(|_| cell.reps - (cell.failures.saturating_sub(cell.reps)))
                .unwrap_or(0);
            assert!(h0_eval <= cell.reps);
            assert!(cell.failures <= 2 * cell.reps);
            if cell.l_w == 14 {
                assert!(cell.type1.is_none());
                assert!(cell.type2.is_none());
                assert_eq!(cell.failures, 2 * cell.reps);
            }
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let cfg = SweepConfig {
            graphs: vec![GraphKind::Mediator],
            sample_sizes: vec![300],
            bin_numbers_w: vec![3],
            l_x: 5,
            l_y: 3,
            replications: 8,
            spec_seeds: 4,
            ..SweepConfig::default()
        };
        let a = error_rate_sweep(&cfg).unwrap();
        let b = error_rate_sweep(&cfg).unwrap();
        assert_eq!(a.cells[0].type1, b.cells[0].type1);
        assert_eq!(a.cells[0].type2, b.cells[0].type2);
        assert_eq!(a.cells[0].failures, b.cells[0].failures);
    }

    #[test]
    fn null_diag_single_replication_degenerate_flag() {
        let spec = crate::scm::ScmSpec::linear_gaussian(GraphKind::Confounder);
        let cfg = TestConfig::new(0.05, 4, 2, 3, TestMode::SingleLevel).unwrap();
        let d = null_distribution_diagnostic(&spec, 500, 1, &cfg, 11).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.statistics.len() + d.failures, 1);
    }

    #[test]
    fn null_diag_rejects_h1_spec() {
        let mut spec = crate::scm::ScmSpec::linear_gaussian(GraphKind::Confounder);
        spec.effect_strength = 2.0;
        let cfg = TestConfig::default();
        assert!(matches!(
            null_distribution_diagnostic(&spec, 500, 2, &cfg, 1),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn e_dis_bounds() {
        let spec = crate::scm::ScmSpec::linear_gaussian(GraphKind::Confounder);
        let pts = discretization_error_curve(&spec, &[4, 8], 20_000, 5).unwrap();
        assert_eq!(pts.len(), 2);
        for p in pts {
            assert!((0.0..=1.0).contains(&p.e_dis));
            assert!(p.bin_length > 0.0);
        }
    }
}
