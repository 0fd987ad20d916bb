//! Error type shared by the whole pipeline.
//!
//! Every failure mode carries enough context to diagnose which stage of the
//! discretize -> estimate -> test pipeline rejected the data, and a stable
//! machine-readable name for scripting.

use thiserror::Error;

/// Errors raised by the statistical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The sample admits no valid partition (constant data, too few
    /// distinct values).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// The determinant search of the discretization could not find a cut
    /// point keeping the conditional-CDF matrix nonsingular. Empirically
    /// signals a violation of the completeness condition.
    #[error(
        "degenerate discretization at step {step}: best |det| = {best_det:e} below threshold"
    )]
    DegenerateDiscretization { step: usize, best_det: f64 },

    /// No sample carries the requested conditioning label.
    #[error("empty conditioning set: {0}")]
    EmptyConditioningSet(String),

    /// A conditioning cell holds fewer samples than the MLE floor.
    /// Usually fixed by lowering the bin counts.
    #[error("sparse cell: level {level} has {count} samples (< {min}); try fewer bins")]
    SparseCell { level: usize, count: u64, min: u64 },

    /// The Gram matrix of the standardized design is numerically rank
    /// deficient; the estimated P(W~|X~) does not have full row rank.
    #[error("singular gram matrix: pivot ratio {pivot_ratio:e} below {threshold:e}")]
    SingularGram { pivot_ratio: f64, threshold: f64 },

    /// Paired inputs have different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A contingency table over zero samples.
    #[error("zero table: contingency table requires at least one sample")]
    ZeroTable,

    /// Configuration violates an invariant (e.g. l_X <= l_W).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// `nonsmooth_variant` applied to a spec that is already nonsmooth.
    #[error("already nonsmooth: the spec carries a jump discontinuity")]
    AlreadyNonsmooth,

    /// Fewer samples than the pipeline floor of 10 * l_X.
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    /// An inner error tagged with the pipeline stage that raised it.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the name of the pipeline stage that raised it.
    pub fn at_stage(self, stage: &'static str) -> Error {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Stable machine-readable name of the underlying failure.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DomainError",
            Error::DegenerateData(_) => "DegenerateData",
            Error::DegenerateDiscretization { .. } => "DegenerateDiscretization",
            Error::EmptyConditioningSet(_) => "EmptyConditioningSet",
            Error::SparseCell { .. } => "SparseCell",
            Error::SingularGram { .. } => "SingularGram",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ZeroTable => "ZeroTable",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::AlreadyNonsmooth => "AlreadyNonsmooth",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::Stage { source, .. } => source.name(),
        }
    }
}

/// Pipeline-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
