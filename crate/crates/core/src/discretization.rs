//! Discretization of continuous variables: partition utilities, empirical
//! conditional CDFs, and the rank-preserving cut-point search that keeps
//! the estimated P(W~|X~) at full row rank.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{determinant, Matrix};

/// Determinant threshold below which the cut-point search declares the
/// conditional-CDF system degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// Quantile step of the candidate grid used by the cut-point search
/// (levels 0.005, 0.010, ..., 0.995).
const CANDIDATE_STEP: f64 = 0.005;

/// Ordered cut points over the real line. `cuts` of length k-1 define k
/// bins: bin 0 = (-inf, cuts[0]), bin i = [cuts[i-1], cuts[i]), and the
/// last bin = [cuts[k-2], +inf).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    cuts: Vec<f64>,
}

impl Partition {
    /// Build a partition from strictly increasing, finite cut points.
    pub fn new(cuts: Vec<f64>) -> Result<Partition> {
        if cuts.is_empty() {
            return Err(Error::DegenerateData(
                "a partition needs at least one cut (two bins)".into(),
            ));
        }
        if cuts.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("cut points must be finite".into()));
        }
        if cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateData(
                "cut points must be strictly increasing".into(),
            ));
        }
        Ok(Partition { cuts })
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    /// Number of bins, always >= 2.
    pub fn bin_count(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Zero-based bin index of a value; boundary values fall into the
    /// right bin (half-open convention).
    pub fn bin_of(&self, value: f64) -> usize {
        debug_assert!(value.is_finite());
        self.cuts.partition_point(|c| *c <= value)
    }
}

/// Values together with their bin labels under a partition.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    values: Vec<f64>,
    labels: Vec<usize>,
    bin_count: usize,
}

impl LabeledSample {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Zero-based labels in 0..bin_count.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-bin sample counts; they always sum to `len()`.
    pub fn bin_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.bin_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

fn ensure_finite(samples: &[f64]) -> Result<()> {
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("samples must be finite".into()));
    }
    Ok(())
}

/// Equal-width bins spanning [min(samples), max(samples)], with the outer
/// bins extended to +-infinity.
pub fn uniform_partition(samples: &[f64], k: usize) -> Result<Partition> {
    assert!(k >= 2, "bin count must be at least 2");
    ensure_finite(samples)?;
    if samples.is_empty() {
        return Err(Error::DegenerateData("no samples".into()));
    }
    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(Error::DegenerateData(format!(
            "uniform binning needs max > min, both are {min}"
        )));
    }
    let width = (max - min) / k as f64;
    let cuts: Vec<f64> = (1..k).map(|i| min + i as f64 * width).collect();
    Partition::new(cuts)
}

/// Empirical quantile at level p of an ascending-sorted slice
/// (linear interpolation between order statistics).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Equal-frequency bins with cuts at the empirical quantiles i/k.
pub fn quantile_partition(samples: &[f64], k: usize) -> Result<Partition> {
    assert!(k >= 2, "bin count must be at least 2");
    ensure_finite(samples)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = 0usize;
    for i in 0..sorted.len() {
        if i == 0 || sorted[i] > sorted[i - 1] {
            distinct += 1;
        }
    }
    if distinct < k {
        return Err(Error::DegenerateData(format!(
            "quantile binning into {k} bins needs {k} distinct values, found {distinct}"
        )));
    }
    let mut cuts = Vec::with_capacity(k - 1);
    for i in 1..k {
        cuts.push(quantile_sorted(&sorted, i as f64 / k as f64));
    }
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::DegenerateData(
            "tied quantiles: too many duplicate values for the requested bin count".into(),
        ));
    }
    Partition::new(cuts)
}

/// Label every value with its bin under `p`. Total and deterministic.
pub fn assign_bins(values: &[f64], p: &Partition) -> LabeledSample {
    let labels = values.iter().map(|&v| p.bin_of(v)).collect();
    LabeledSample {
        values: values.to_vec(),
        labels,
        bin_count: p.bin_count(),
    }
}

/// F(x | W~ = w_level): fraction of the conditioned subsample at or below x.
pub fn empirical_conditional_cdf(
    x_values: &[f64],
    w_labels: &LabeledSample,
    w_level: usize,
    x: f64,
) -> Result<f64> {
    if x_values.len() != w_labels.len() {
        return Err(Error::LengthMismatch {
            left: x_values.len(),
            right: w_labels.len(),
        });
    }
    let mut total = 0u64;
    let mut below = 0u64;
    for (xv, &l) in x_values.iter().zip(w_labels.labels()) {
        if l == w_level {
            total += 1;
            if *xv <= x {
                below += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyConditioningSet(format!(
            "no sample has w-level {w_level}"
        )));
    }
    Ok(below as f64 / total as f64)
}

/// Conditional empirical CDFs of x given each w level, backed by per-level
/// sorted arrays for fast repeated queries.
struct ConditionalCdf {
    per_level: Vec<Vec<f64>>,
}

impl ConditionalCdf {
    fn build(x: &[f64], w_labels: &LabeledSample) -> Result<ConditionalCdf> {
        let mut per_level = vec![Vec::new(); w_labels.bin_count()];
        for (&xv, &l) in x.iter().zip(w_labels.labels()) {
            per_level[l].push(xv);
        }
        for (level, xs) in per_level.iter_mut().enumerate() {
            if xs.is_empty() {
                return Err(Error::EmptyConditioningSet(format!(
                    "w-level {level} received no samples"
                )));
            }
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        Ok(ConditionalCdf { per_level })
    }

    fn eval(&self, level: usize, x: f64) -> f64 {
        let xs = &self.per_level[level];
        xs.partition_point(|v| *v <= x) as f64 / xs.len() as f64
    }

    /// Median of the conditioned subsample.
    fn median(&self, level: usize) -> f64 {
        let xs = &self.per_level[level];
        xs[xs.len() / 2]
    }
}

/// Heuristic bin count floor(ln n), floored at 2.
pub fn default_bin_count(n: usize) -> usize {
    ((n as f64).ln().floor() as usize).max(2)
}

/// The discretization search: W gets `l_w` uniform bins; X cut points are
/// chosen one by one to maximize the absolute determinant of the
/// conditional-CDF matrix F(x_[i] | w_[i]), keeping the induced P(X~|W~)
/// invertible on the first `l_w` bins; the data range beyond the selected
/// cuts is then split uniformly so the X partition has exactly `l_x` bins.
pub fn rank_preserving_discretize(
    x_values: &[f64],
    w_values: &[f64],
    l_x: usize,
    l_w: usize,
) -> Result<(Partition, Partition)> {
    if !(l_x > l_w && l_w >= 2) {
        return Err(Error::InvalidConfig(format!(
            "need l_x > l_w >= 2, got l_x = {l_x}, l_w = {l_w}"
        )));
    }
    if x_values.len() != w_values.len() {
        return Err(Error::LengthMismatch {
            left: x_values.len(),
            right: w_values.len(),
        });
    }
    let n = x_values.len();
    if n < 10 * l_x {
        return Err(Error::TooFewSamples {
            needed: 10 * l_x,
            got: n,
        });
    }
    ensure_finite(x_values)?;
    ensure_finite(w_values)?;

    let w_part = uniform_partition(w_values, l_w)?;
    let w_labels = assign_bins(w_values, &w_part);
    let cdf = ConditionalCdf::build(x_values, &w_labels)?;

    let mut sorted_x = x_values.to_vec();
    sorted_x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let data_max = sorted_x[sorted_x.len() - 1];
    let n_f = n as f64;
    // Empirical mass level of a value: fraction of samples at or below it.
    let level_of = |v: f64| sorted_x.partition_point(|s| *s <= v) as f64 / n_f;

    // Candidate cut points come from the empirical quantile grid at levels
    // 0.005..0.995. The step for W level j searches a window around the
    // mass level of the conditional median of X given that level: this is
    // where F(x | w_j) has variation, so the determinant column added for
    // the level is informative there. Raw greedy max-|det| over the whole
    // grid cannot work: the step-1 objective F(c | w_1) is monotone in c
    // and always selects the extreme quantile, starving every later bin.
    let grid: Vec<(f64, f64)> = (1..200)
        .map(|i| {
            let level = i as f64 * CANDIDATE_STEP;
            (level, quantile_sorted(&sorted_x, level))
        })
        .collect();
    // Mass floors: selected levels stay half an equal share apart, with
    // headroom below the first cut and above the last one for the
    // (l_x - l_w) uniform tail bins. Together with the pipeline floor
    // n >= 10 * l_x this keeps every bin estimable.
    let min_sep = 0.5 / l_x as f64;
    let level_lo = min_sep;
    let level_hi = 1.0 - (l_x - l_w) as f64 * min_sep;

    let mut cuts: Vec<f64> = Vec::with_capacity(l_w);
    let mut cut_levels: Vec<f64> = Vec::with_capacity(l_w);
    for step in 1..=l_w {
        // Cofactor weights d_j = det(F(x_[i-1] | w_[i] \ j)), with columns
        // in selection order; |det| does not depend on column order.
        let mut weights = Vec::with_capacity(step);
        for skip in 0..step {
            if step == 1 {
                weights.push(1.0);
                continue;
            }
            let mut minor = Matrix::zeros(step - 1, step - 1);
            let mut r = 0;
            for level in 0..step {
                if level == skip {
                    continue;
                }
                for (c, cut) in cuts.iter().enumerate() {
                    minor.set(r, c, cdf.eval(level, *cut));
                }
                r += 1;
            }
            weights.push(determinant(&minor));
        }
        // Laplace expansion along the new point's column:
        // det(M_i)(c) = sum_j (-1)^{j+i} d_j F(c | w_j).
        // The raw determinant of a CDF-value matrix shrinks geometrically
        // with the step (the columns are correlated monotone curves), so
        // the degeneracy test uses the expansion normalized by its largest
        // cofactor: the fresh linear-independence contribution of the new
        // cut, on the scale of a single CDF value.
        let parity = |j: usize| -> f64 {
            if (j + step) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        let weight_scale = weights.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        if weight_scale <= 0.0 {
            return Err(Error::DegenerateDiscretization {
                step,
                best_det: 0.0,
            });
        }
        let anchor = level_of(cdf.median(step - 1)).clamp(level_lo, level_hi);
        let mut window = 0.25 / l_x as f64;
        let mut best: Option<(f64, f64)> = None; // (|det|, candidate)
        loop {
            for (_, c) in grid.iter().filter(|(level, c)| {
                (anchor - level).abs() <= window
                    && (level_lo..=level_hi).contains(level)
                    && cut_levels.iter().all(|sel| (sel - level).abs() >= min_sep)
                    && cuts.iter().all(|cut| cut != c)
            }) {
                let det: f64 = (0..step)
                    .map(|j| parity(j + 1) * weights[j] * cdf.eval(j, *c))
                    .sum::<f64>()
                    / weight_scale;
                if best.map_or(true, |(b, _)| det.abs() > b) {
                    best = Some((det.abs(), *c));
                }
            }
            if best.is_some() || window > 1.0 {
                break;
            }
            window *= 2.0;
        }
        match best {
            Some((mag, c)) if mag >= DEGENERACY_THRESHOLD => {
                cut_levels.push(level_of(c));
                cuts.push(c);
            }
            Some((mag, _)) => {
                return Err(Error::DegenerateDiscretization {
                    step,
                    best_det: mag,
                })
            }
            None => {
                return Err(Error::DegenerateDiscretization {
                    step,
                    best_det: 0.0,
                })
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // The sorted search cuts define the first l_w bins, with the leftmost
    // bin open below. The remaining data range [x_{l_w}, max] is split
    // into l_x - l_w equal-width bins, the last one extending upward.
    let n_extra = l_x - l_w - 1;
    if n_extra > 0 {
        let hi = cuts[l_w - 1];
        let right_len = data_max - hi;
        if right_len > 0.0 {
            let width = right_len / (l_x - l_w) as f64;
            for t in 1..=n_extra {
                cuts.push(hi + t as f64 * width);
            }
        }
        // Degenerate corner: no data above the last search cut, or a range
        // too narrow to subdivide in floating point. Pad with cuts beyond
        // the data so the bin count stays exact; the empty bins fail
        // loudly downstream.
        cuts.dedup_by(|a, b| *a <= *b);
        let mut pad = cuts.last().copied().unwrap_or(data_max).max(data_max);
        while cuts.len() < l_w + n_extra {
            pad += 1.0;
            cuts.push(pad);
        }
    }

    let x_part = Partition::new(cuts)?;
    debug_assert_eq!(x_part.bin_count(), l_x);
    Ok((x_part, w_part))
}
