//! Crate-wide error type.
//!
//! All fallible operations in this crate return [`Error`]. Variants carry
//! enough context (offending indices, values, limits) for a caller to report
//! the problem without re-deriving it.

use thiserror::Error;

/// Errors produced by correlation-difference computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The two halves of a paired dataset disagree in shape.
    #[error(
        "paired data shape mismatch: first condition is {x_rows}x{x_cols}, \
         second condition is {y_rows}x{y_cols}"
    )]
    ShapeMismatch {
        x_rows: usize,
        x_cols: usize,
        y_rows: usize,
        y_cols: usize,
    },

    /// Too few paired observations for the variance scaling `n - 3`.
    #[error("need at least {min} paired observations, got {n}")]
    TooFewSamples { n: usize, min: usize },

    /// Fewer than two variables means there are no variable pairs to test.
    #[error("need at least 2 variables, got {p}")]
    TooFewVariables { p: usize },

    /// A data column is constant, so its correlations are undefined.
    #[error("column {column} in {condition} has zero variance")]
    ZeroVariance {
        condition: Condition,
        column: usize,
    },

    /// The Fisher transform is only defined on the open interval (-1, 1).
    #[error("fisher transform domain: |r| must be < 1, got {value}")]
    FisherDomain { value: f64 },

    /// An off-diagonal sample correlation of exactly +/-1 for a variable pair.
    #[error(
        "variables ({i}, {j}) are perfectly correlated (r = {value}); \
         the standardized difference is undefined for this pair"
    )]
    PerfectCorrelation { i: usize, j: usize, value: f64 },

    /// A pair index lies outside the correlation matrix.
    #[error("pair index {index} out of range for {p} variables")]
    PairOutOfRange { index: usize, p: usize },

    /// A significance level outside (0, 1).
    #[error("significance level must lie strictly between 0 and 1, got {alpha}")]
    InvalidLevel { alpha: f64 },

    /// An exceedance threshold that is negative or not finite.
    #[error("exceedance threshold must be finite and non-negative, got {u}")]
    InvalidThreshold { u: f64 },

    /// Moment parameters that cannot come from a real distribution.
    #[error("invalid null moments: mu2 = {mu2}, mu4 = {mu4} yield variance {variance}")]
    InvalidMoments { mu2: f64, mu4: f64, variance: f64 },

    /// A scale parameter that is not strictly positive.
    #[error("scale parameter must be positive and finite, got {scale}")]
    InvalidScale { scale: f64 },

    /// An extremal-dependence coefficient outside (0, 1].
    #[error("extremal coefficient must lie in (0, 1], got {theta}")]
    InvalidTheta { theta: f64 },

    /// A statistic was evaluated against a null for a different statistic.
    #[error("statistic/null mismatch: expected {expected}, got {found}")]
    StatisticMismatch { expected: String, found: String },

    /// Too few permutation replicates for the requested estimator.
    #[error("need at least {min} permutation replicates, got {b}")]
    InsufficientReplicates { b: usize, min: usize },

    /// Permutation maxima were all identical, so no scale can be fitted.
    #[error("all permutation maxima are identical; cannot fit an extreme-value null")]
    DegenerateMaxima,

    /// An empty replicate or p-value collection where at least one is needed.
    #[error("empty {what}")]
    EmptyInput { what: &'static str },

    /// A p-value outside [0, 1].
    #[error("p-value out of range: {value}")]
    InvalidPValue { value: f64 },

    /// A proportion outside [0, 1].
    #[error("proportion must lie in [0, 1], got {value}")]
    InvalidProportion { value: f64 },

    /// A gamma prior that has no interior mode (shape <= 1).
    #[error("gamma prior shape must exceed 1 for an interior mode, got {shape}")]
    DegeneratePrior { shape: f64 },

    /// Gamma prior hyper-parameters must be positive and finite.
    #[error("invalid gamma prior: shape = {shape}, rate = {rate}")]
    InvalidPrior { shape: f64, rate: f64 },

    /// The exceedance threshold exceeds the extreme-value growth rate, where
    /// the power bound is vacuous.
    #[error("threshold u = {u} must stay below sqrt(2 log 2m) = {max}")]
    ThresholdOutOfRange { u: f64, max: f64 },

    /// Signal magnitudes for power bounds must be positive.
    #[error("alternative magnitudes must be positive and finite, got {value}")]
    InvalidSignal { value: f64 },

    /// More signal coordinates than variable pairs.
    #[error("alternative has {s} signals but only {m} variable pairs exist")]
    TooManySignals { s: usize, m: usize },

    /// A simulation configuration field failed validation.
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    /// A matrix expected to be positive definite was not.
    #[error("matrix is not positive definite (pivot {pivot} failed)")]
    NotPositiveDefinite { pivot: usize },

    /// Randomized graph generation kept failing after the retry budget.
    #[error("graph generation failed after {attempts} attempts")]
    GraphGeneration { attempts: usize },
}

/// Which half of a paired dataset a message refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// The first condition (the `x` matrix).
    First,
    /// The second condition (the `y` matrix).
    Second,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Condition::First => write!(f, "the first condition"),
            Condition::Second => write!(f, "the second condition"),
        }
    }
}

/// Convenient alias used across the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;
