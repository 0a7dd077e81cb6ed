//! Testing equality of two correlation matrices from paired samples.
//!
//! Given paired observations of the same `p` variables under two
//! conditions, this crate tests the global null hypothesis that the two
//! `p × p` correlation matrices coincide. All inference runs on the
//! standardized pairwise differences of Fisher-transformed correlations,
//! which are asymptotically standard normal pair by pair under the null.
//!
//! Three test statistics cover complementary alternatives:
//!
//! * a normalized **sum of squares** ([`t_squares`]) for dense, diffuse
//!   disagreement;
//! * the **maximum absolute difference** ([`t_max`]) for a few strong
//!   disagreements;
//! * a **thresholded exceedance score** ([`t_exceed`]) interpolating
//!   between the two, with a data-driven threshold ([`select_threshold`]).
//!
//! Each statistic can be calibrated three ways: a closed-form null that
//! assumes the pairwise differences are independent, a dependence-corrected
//! null whose parameters are fitted to paired-permutation replicates
//! ([`paired_permute`]), and the fully non-parametric permutation p-value
//! ([`empirical_pvalue`]).
//!
//! The [`power_bound_squares`], [`power_bound_max`], and
//! [`power_bound_exceed`] functions provide analytic lower bounds on
//! power against explicit or prior-weighted alternatives, and the
//! [`sim`]-level generators ([`gen_dense`], [`gen_sparse`]) plus
//! [`run_harness`] replay the whole battery over synthetic models to
//! measure empirical size and power.
//!
//! End-to-end orchestration for one dataset lives in [`analyze_dataset`];
//! see the `corrdiff` command-line crate for file ingestion, gene-set
//! batching, and false-discovery-rate control across many tests.

mod corr;
mod error;
mod null;
mod numeric;
mod perm;
mod pipeline;
mod power;
mod sim;
mod stats;

pub use corr::{
    fisher_transform, pair_count, pearson_correlations, psi_cross, standardized_differences,
    CorrelationEstimates, PairIndexSet, PairedDataset, StandardizedDifferences, MIN_SAMPLES,
};
pub use error::{Condition, Error, Result};
pub use null::{
    empirical_pvalue, exceedance_moments, exceedance_null, exceedance_null_independent,
    exceedance_pvalue, gumbel_pvalue, gumbel_quantile, gumbel_scale, iid_gumbel_location,
    squares_pvalue, ExceedanceNull, GumbelNull, SquaresNull,
};
pub use numeric::{
    compensated_sum, derive_seed, erfc, gauss_legendre, norm_cdf, norm_pdf, norm_ppf, norm_sf,
    CompensatedSum,
};
pub use perm::{
    estimate_squares_params, fit_exceedance_variance, fit_gumbel_null, paired_permute,
    permuted_differences, replicate_statistics, ReplicateMatrix, MIN_GUMBEL_REPLICATES,
};
pub use pipeline::{
    analyze_dataset, AnalysisPlan, DatasetAnalysis, NullRegime, TestRequest, TestResult,
    ThresholdRule,
};
pub use power::{
    estimate_rho_s, h1_truncated_moments, power_bound_exceed, power_bound_max,
    power_bound_squares, select_threshold, sigma_h1, AlternativeSpec, BoundOutcome, GammaPrior,
    H1Moments, MaxBoundBranch, ThresholdSelection, ETA_FLOOR,
};
pub use sim::{
    gen_dense, gen_sparse, ks_uniform_pvalue, run_harness, DenseModelConfig, HarnessConfig,
    HarnessReport, HarnessRow, Hypothesis, ModelConfig, SparseModelConfig,
};
pub use stats::{
    t_exceed, t_max, t_squares, ExceedanceConfig, ExceedanceWeight, ReplicateStats, StatisticKind,
    StatisticValue,
};
