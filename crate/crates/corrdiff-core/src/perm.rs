//! Paired-permutation resampling and the parameter fits built on it.
//!
//! Under the null hypothesis that both conditions share one correlation
//! matrix, the two observation vectors of a subject are exchangeable:
//! swapping them changes nothing about the joint law. [`paired_permute`]
//! draws independent Bernoulli(1/2) swap masks over subjects, recomputes the
//! standardized differences for each masked dataset, and stores them as a
//! replicate matrix. From those replicates:
//!
//! * [`replicate_statistics`] extracts the per-replicate value of any of the
//!   three statistics, for non-parametric p-values;
//! * [`estimate_squares_params`] recovers the moment parameters
//!   `(μ̂2, μ̂4, γ̂̄2)` of the average-of-squares null;
//! * [`fit_gumbel_null`] fits the extremal index `θ̂_m` of the maximum null
//!   by maximum likelihood with the scale pinned at `σ(m)`;
//! * [`fit_exceedance_variance`] replaces the exceedance null variance with
//!   the spread of replicates around the analytic mean.
//!
//! Replicate `k` draws from an independent, fixed RNG stream, so results are
//! identical for any number of worker threads.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corr::{joint_correlation, pair_count, standardized_differences_into, PairedDataset};
use crate::error::{Condition, Error, Result};
use crate::null::{gumbel_scale, iid_gumbel_location, ExceedanceNull, GumbelNull, SquaresNull};
use crate::numeric::CompensatedSum;
use crate::stats::{
    exceed_of, max_of, squares_of, ExceedanceConfig, ReplicateStats, StatisticKind,
};

/// Minimum replicate count for fitting the extreme-value null.
pub const MIN_GUMBEL_REPLICATES: usize = 20;

/// Minimum replicate count for any variance estimate.
const MIN_VARIANCE_REPLICATES: usize = 2;

// ---------------------------------------------------------------------------
// Replicate generation
// ---------------------------------------------------------------------------

/// Standardized differences and swap masks of `b` paired-permutation
/// replicates: row `k` holds the differences of the dataset in which subject
/// `i`'s conditions were exchanged wherever `masks[(k, i)]` is true.
#[derive(Debug, Clone)]
pub struct ReplicateMatrix {
    differences: Array2<f64>,
    masks: Array2<bool>,
}

impl ReplicateMatrix {
    /// Number of replicates `b`.
    pub fn n_replicates(&self) -> usize {
        self.differences.nrows()
    }

    /// Number of variable pairs `m`.
    pub fn n_pairs(&self) -> usize {
        self.differences.ncols()
    }

    /// The `b × m` matrix of permuted standardized differences.
    pub fn differences(&self) -> ArrayView2<'_, f64> {
        self.differences.view()
    }

    /// The `b × n` matrix of swap masks that produced the replicates.
    pub fn masks(&self) -> ArrayView2<'_, bool> {
        self.masks.view()
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.differences
            .rows()
            .into_iter()
            .map(|row| row.to_slice().expect("replicate rows are contiguous"))
    }
}

/// Recomputes the standardized differences after exchanging the two
/// condition vectors of every subject whose mask entry is true.
///
/// An all-false mask reproduces the observed differences exactly; an
/// all-true mask negates every difference exactly.
///
/// # Errors
///
/// [`Error::InvalidConfig`] if the mask length differs from the number of
/// subjects; [`Error::ZeroVariance`] if a column of the masked dataset is
/// constant; [`Error::PerfectCorrelation`] if a masked correlation reaches
/// `±1`.
pub fn permuted_differences(data: &PairedDataset, swap: &[bool]) -> Result<Vec<f64>> {
    let n = data.n_samples();
    let p = data.n_variables();
    if swap.len() != n {
        return Err(Error::InvalidConfig(format!(
            "swap mask has {} entries for {} subjects",
            swap.len(),
            n
        )));
    }
    let joint = masked_joint(data, swap)?;
    let mut out = vec![0.0; pair_count(p)];
    standardized_differences_into(&joint, p, n, &mut out)?;
    Ok(out)
}

fn masked_joint(data: &PairedDataset, swap: &[bool]) -> Result<Array2<f64>> {
    let p = data.n_variables();
    joint_correlation(data, Some(swap)).map_err(|idx| Error::ZeroVariance {
        condition: if idx < p {
            Condition::First
        } else {
            Condition::Second
        },
        column: idx % p,
    })
}

/// Draws `b` paired-permutation replicates of the standardized differences.
///
/// Replicate `k` uses an RNG seeded with `seed` on stream `k`, drawing one
/// Bernoulli(1/2) swap indicator per subject; replicates are therefore
/// independent of each other and of how work is distributed across threads,
/// and a fixed `(seed, b)` always yields bit-identical output.
///
/// # Errors
///
/// [`Error::InsufficientReplicates`] for `b = 0`, plus any error of
/// [`permuted_differences`].
pub fn paired_permute(data: &PairedDataset, b: usize, seed: u64) -> Result<ReplicateMatrix> {
    if b == 0 {
        return Err(Error::InsufficientReplicates { b, min: 1 });
    }
    let n = data.n_samples();
    let p = data.n_variables();
    let m = pair_count(p);

    let rows: Vec<(Vec<bool>, Vec<f64>)> = (0..b)
        .into_par_iter()
        .map(|replicate| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(replicate as u64);
            let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let joint = masked_joint(data, &mask)?;
            let mut row = vec![0.0; m];
            standardized_differences_into(&joint, p, n, &mut row)?;
            Ok((mask, row))
        })
        .collect::<Result<_>>()?;

    let mut differences = Array2::zeros((b, m));
    let mut masks = Array2::from_elem((b, n), false);
    for (k, (mask, row)) in rows.into_iter().enumerate() {
        for (i, &flip) in mask.iter().enumerate() {
            masks[(k, i)] = flip;
        }
        for (t, &value) in row.iter().enumerate() {
            differences[(k, t)] = value;
        }
    }
    Ok(ReplicateMatrix { differences, masks })
}

// ---------------------------------------------------------------------------
// Replicate statistics
// ---------------------------------------------------------------------------

/// Evaluates one statistic on every replicate row.
///
/// The exceedance statistic requires a configuration; the other two must be
/// called without one.
///
/// # Errors
///
/// [`Error::StatisticMismatch`] if the configuration does not match the
/// statistic family.
pub fn replicate_statistics(
    replicates: &ReplicateMatrix,
    kind: StatisticKind,
    config: Option<ExceedanceConfig>,
) -> Result<ReplicateStats> {
    let values: Vec<f64> = match (kind, config) {
        (StatisticKind::Squares, None) => replicates.rows().map(squares_of).collect(),
        (StatisticKind::Max, None) => replicates.rows().map(max_of).collect(),
        (StatisticKind::Exceedance, Some(cfg)) => replicates
            .rows()
            .map(|row| exceed_of(row, cfg).0)
            .collect(),
        (kind, config) => {
            return Err(Error::StatisticMismatch {
                expected: match kind {
                    StatisticKind::Exceedance => {
                        "an exceedance configuration for the exceedance statistic".to_string()
                    }
                    _ => format!("no exceedance configuration for the {kind} statistic"),
                },
                found: format!("{kind} with configuration {config:?}"),
            })
        }
    };
    Ok(ReplicateStats::from_parts(kind, config, values))
}

// ---------------------------------------------------------------------------
// Parameter fits
// ---------------------------------------------------------------------------

/// Estimates the average-of-squares null from permutation replicates.
///
/// The per-pair moments are the empirical moments of all `b·m` permuted
/// differences, `μ̂2 = avg(d̃²)` and `μ̂4 = avg(d̃⁴)`; the cross-pair
/// covariance `γ̂̄2` is recovered by inverting the variance identity
/// `Var(T_S) = (μ4 − μ2²)/m + (1 − 1/m) γ̄2`, with `Var(T_S)` taken as the
/// population variance of the replicate statistics. The fitted null's
/// variance therefore reproduces the replicate variance exactly.
///
/// # Errors
///
/// [`Error::InsufficientReplicates`] for `b < 2`;
/// [`Error::InvalidMoments`] if the replicate statistics are degenerate.
pub fn estimate_squares_params(replicates: &ReplicateMatrix) -> Result<SquaresNull> {
    let b = replicates.n_replicates();
    let m = replicates.n_pairs();
    if b < MIN_VARIANCE_REPLICATES {
        return Err(Error::InsufficientReplicates {
            b,
            min: MIN_VARIANCE_REPLICATES,
        });
    }

    let mut sum2 = CompensatedSum::new();
    let mut sum4 = CompensatedSum::new();
    for row in replicates.rows() {
        for &v in row {
            let v2 = v * v;
            sum2.add(v2);
            sum4.add(v2 * v2);
        }
    }
    let count = (b * m) as f64;
    let mu2 = sum2.value() / count;
    let mu4 = sum4.value() / count;

    let stats: Vec<f64> = replicates.rows().map(squares_of).collect();
    let mean = compensated_mean(&stats);
    let mut spread = CompensatedSum::new();
    for &t in &stats {
        let delta = t - mean;
        spread.add(delta * delta);
    }
    let variance = spread.value() / b as f64;

    let gamma2bar = if m > 1 {
        (variance - (mu4 - mu2 * mu2) / m as f64) / (1.0 - 1.0 / m as f64)
    } else {
        0.0
    };
    SquaresNull::new(mu2, mu4, gamma2bar, m)
}

/// Fits the extreme-value null to replicate maxima by maximum likelihood
/// with the scale pinned at `σ(m)`.
///
/// The location MLE of a Gumbel sample with known scale is
/// `μ̂ = −σ log{b^{-1} Σ e^{−x_k/σ}}` (evaluated in log-sum-exp form), and
/// the extremal index follows as `θ̂_m = exp{(μ̂ − loc_iid(m))/σ}` relative
/// to the independence reference location, clamped into `(0, 1]`.
///
/// # Errors
///
/// [`Error::StatisticMismatch`] unless the replicates are maxima;
/// [`Error::InsufficientReplicates`] for `b <` [`MIN_GUMBEL_REPLICATES`];
/// [`Error::DegenerateMaxima`] if all replicate maxima are identical.
pub fn fit_gumbel_null(replicates: &ReplicateStats, m: usize) -> Result<GumbelNull> {
    if replicates.kind() != StatisticKind::Max {
        return Err(Error::StatisticMismatch {
            expected: StatisticKind::Max.to_string(),
            found: replicates.kind().to_string(),
        });
    }
    let values = replicates.values();
    let b = values.len();
    if b < MIN_GUMBEL_REPLICATES {
        return Err(Error::InsufficientReplicates {
            b,
            min: MIN_GUMBEL_REPLICATES,
        });
    }
    let lowest = values.iter().copied().fold(f64::INFINITY, f64::min);
    let highest = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lowest == highest {
        return Err(Error::DegenerateMaxima);
    }

    let scale = gumbel_scale(m);
    // log-sum-exp of −x_k/σ, shifted by its largest term −lowest/σ.
    let mut sum = CompensatedSum::new();
    for &x in values {
        sum.add((-(x - lowest) / scale).exp());
    }
    let log_mean = -lowest / scale + sum.value().ln() - (b as f64).ln();
    let location_hat = -scale * log_mean;

    let theta = ((location_hat - iid_gumbel_location(m)) / scale).exp();
    let theta = theta.clamp(f64::MIN_POSITIVE, 1.0);
    GumbelNull::fitted(theta, m)
}

/// Replaces the exceedance null variance with the mean squared deviation of
/// replicate statistics around the analytic null mean (which is kept).
///
/// # Errors
///
/// [`Error::StatisticMismatch`] unless the replicates are exceedance
/// statistics under the null's configuration;
/// [`Error::InsufficientReplicates`] for `b < 2`;
/// [`Error::InvalidMoments`] if every replicate equals the analytic mean.
pub fn fit_exceedance_variance(
    replicates: &ReplicateStats,
    null: &ExceedanceNull,
) -> Result<ExceedanceNull> {
    if replicates.kind() != StatisticKind::Exceedance
        || replicates.config() != Some(null.config())
    {
        return Err(Error::StatisticMismatch {
            expected: format!("exceedance with configuration {:?}", null.config()),
            found: format!(
                "{} with configuration {:?}",
                replicates.kind(),
                replicates.config()
            ),
        });
    }
    let b = replicates.len();
    if b < MIN_VARIANCE_REPLICATES {
        return Err(Error::InsufficientReplicates {
            b,
            min: MIN_VARIANCE_REPLICATES,
        });
    }
    let mean = null.mean();
    let mut spread = CompensatedSum::new();
    for &t in replicates.values() {
        let delta = t - mean;
        spread.add(delta * delta);
    }
    null.with_variance(spread.value() / b as f64)
}

fn compensated_mean(values: &[f64]) -> f64 {
    let mut sum = CompensatedSum::new();
    for &v in values {
        sum.add(v);
    }
    sum.value() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::tests::demo_dataset;
    use crate::corr::{pearson_correlations, standardized_differences};
    use crate::stats::ExceedanceWeight;
    use approx::assert_relative_eq;

    fn observed_differences() -> Vec<f64> {
        let data = demo_dataset();
        let est = pearson_correlations(&data).unwrap();
        standardized_differences(&est).unwrap().d().to_vec()
    }

    #[test]
    fn identity_mask_reproduces_observed_differences() {
        let data = demo_dataset();
        let observed = observed_differences();
        let same = permuted_differences(&data, &[false; 8]).unwrap();
        assert_eq!(same.len(), observed.len());
        for (a, b) in same.iter().zip(&observed) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn full_mask_negates_observed_differences() {
        let data = demo_dataset();
        let observed = observed_differences();
        let flipped = permuted_differences(&data, &[true; 8]).unwrap();
        for (a, b) in flipped.iter().zip(&observed) {
            assert_eq!(a.to_bits(), (-b).to_bits());
        }
    }

    #[test]
    fn mask_length_is_validated() {
        let data = demo_dataset();
        assert!(matches!(
            permuted_differences(&data, &[false; 5]),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn replicates_are_reproducible_and_thread_count_invariant() {
        let data = demo_dataset();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| paired_permute(&data, 16, 7).unwrap())
        };
        let single = run(1);
        let multi = run(3);
        let again = run(3);
        assert_eq!(single.differences(), multi.differences());
        assert_eq!(single.masks(), multi.masks());
        assert_eq!(again.differences(), multi.differences());

        let other_seed = paired_permute(&data, 16, 8).unwrap();
        assert_ne!(other_seed.masks(), single.masks());
        assert_eq!(single.n_replicates(), 16);
        assert_eq!(single.n_pairs(), 6);

        assert!(matches!(
            paired_permute(&data, 0, 7),
            Err(Error::InsufficientReplicates { .. })
        ));
    }

    #[test]
    fn replicate_rows_match_single_mask_recomputation() {
        let data = demo_dataset();
        let matrix = paired_permute(&data, 8, 99).unwrap();
        for k in 0..matrix.n_replicates() {
            let mask: Vec<bool> = matrix.masks().row(k).to_vec();
            let row = permuted_differences(&data, &mask).unwrap();
            for (a, b) in matrix.differences().row(k).iter().zip(&row) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn replicate_statistics_match_direct_evaluation() {
        let data = demo_dataset();
        let matrix = paired_permute(&data, 12, 3).unwrap();
        let cfg = ExceedanceConfig::new(0.8, ExceedanceWeight::Centered).unwrap();

        let squares = replicate_statistics(&matrix, StatisticKind::Squares, None).unwrap();
        let maxima = replicate_statistics(&matrix, StatisticKind::Max, None).unwrap();
        let exceed =
            replicate_statistics(&matrix, StatisticKind::Exceedance, Some(cfg)).unwrap();
        assert_eq!(squares.len(), 12);
        assert_eq!(exceed.config(), Some(cfg));

        for k in 0..12 {
            let row: Vec<f64> = matrix.differences().row(k).to_vec();
            assert_relative_eq!(squares.values()[k], squares_of(&row), max_relative = 1e-15);
            assert_relative_eq!(maxima.values()[k], max_of(&row), max_relative = 1e-15);
            assert_relative_eq!(
                exceed.values()[k],
                exceed_of(&row, cfg).0,
                max_relative = 1e-15
            );
        }

        // Configuration pairing is enforced both ways.
        assert!(replicate_statistics(&matrix, StatisticKind::Exceedance, None).is_err());
        assert!(replicate_statistics(&matrix, StatisticKind::Squares, Some(cfg)).is_err());
        assert!(replicate_statistics(&matrix, StatisticKind::Max, Some(cfg)).is_err());
    }

    #[test]
    fn squares_fit_reproduces_replicate_variance() {
        let data = demo_dataset();
        let matrix = paired_permute(&data, 64, 11).unwrap();
        let null = estimate_squares_params(&matrix).unwrap();

        let stats: Vec<f64> = (0..64)
            .map(|k| squares_of(&matrix.differences().row(k).to_vec()))
            .collect();
        let mean = stats.iter().sum::<f64>() / 64.0;
        let variance = stats.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / 64.0;
        assert_relative_eq!(null.variance(), variance, max_relative = 1e-10);
        assert!(null.mean() > 0.0);
        assert_eq!(null.m(), 6);

        let single = ReplicateMatrix {
            differences: Array2::zeros((1, 6)),
            masks: Array2::from_elem((1, 8), false),
        };
        assert!(matches!(
            estimate_squares_params(&single),
            Err(Error::InsufficientReplicates { .. })
        ));
    }

    /// Draws from a Gumbel with location `loc + scale·log θ` — the maximum
    /// law with extremal index `θ` — by inverse transform.
    fn gumbel_sample(m: usize, theta: f64, b: usize, seed: u64) -> ReplicateStats {
        let loc = iid_gumbel_location(m) + gumbel_scale(m) * theta.ln();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..b)
            .map(|_| {
                let u: f64 = rng.gen_range(1e-12..1.0);
                loc - gumbel_scale(m) * (-u.ln()).ln()
            })
            .collect();
        ReplicateStats::from_parts(StatisticKind::Max, None, values)
    }

    #[test]
    fn gumbel_fit_recovers_extremal_index() {
        // Independent maxima: θ̂ should land near 1 (spec of the estimator:
        // within [0.85, 1] for a thousand-replicate iid sample).
        let iid = gumbel_sample(1000, 1.0, 1000, 5);
        let fit = fit_gumbel_null(&iid, 1000).unwrap();
        assert!(fit.theta_m() > 0.85 && fit.theta_m() <= 1.0);

        // Dependent maxima with θ = 0.6.
        let dep = gumbel_sample(1000, 0.6, 4000, 6);
        let fit = fit_gumbel_null(&dep, 1000).unwrap();
        assert!(
            (fit.theta_m() - 0.6).abs() < 0.08,
            "theta_hat = {}",
            fit.theta_m()
        );
        assert_relative_eq!(fit.scale(), gumbel_scale(1000), max_relative = 1e-15);
        assert_relative_eq!(
            fit.location(),
            iid_gumbel_location(1000),
            max_relative = 1e-15
        );
    }

    #[test]
    fn gumbel_fit_translation_property() {
        // Shifting all maxima down by c multiplies θ̂ by e^{−c/σ}.
        let base = gumbel_sample(500, 0.9, 200, 9);
        let theta0 = fit_gumbel_null(&base, 500).unwrap().theta_m();
        let c = 0.3;
        let shifted = ReplicateStats::from_parts(
            StatisticKind::Max,
            None,
            base.values().iter().map(|x| x - c).collect(),
        );
        let theta1 = fit_gumbel_null(&shifted, 500).unwrap().theta_m();
        assert_relative_eq!(
            theta1,
            theta0 * (-c / gumbel_scale(500)).exp(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn gumbel_fit_validation() {
        let short = ReplicateStats::from_parts(StatisticKind::Max, None, vec![3.0; 19]);
        assert!(matches!(
            fit_gumbel_null(&short, 100),
            Err(Error::InsufficientReplicates { b: 19, min: 20 })
        ));
        let constant = ReplicateStats::from_parts(StatisticKind::Max, None, vec![3.0; 50]);
        assert!(matches!(
            fit_gumbel_null(&constant, 100),
            Err(Error::DegenerateMaxima)
        ));
        let wrong_kind = ReplicateStats::from_parts(StatisticKind::Squares, None, vec![1.0; 50]);
        assert!(matches!(
            fit_gumbel_null(&wrong_kind, 100),
            Err(Error::StatisticMismatch { .. })
        ));
    }

    #[test]
    fn exceedance_variance_fit() {
        let cfg = ExceedanceConfig::new(1.0, ExceedanceWeight::Uncentered).unwrap();
        let base = crate::null::exceedance_null_independent(500, cfg).unwrap();
        let mean = base.mean();

        // Replicates at mean ± δ have mean squared deviation δ² exactly.
        let delta = 7.5;
        let values: Vec<f64> = (0..40)
            .map(|i| if i % 2 == 0 { mean + delta } else { mean - delta })
            .collect();
        let reps = ReplicateStats::from_parts(StatisticKind::Exceedance, Some(cfg), values);
        let fitted = fit_exceedance_variance(&reps, &base).unwrap();
        assert_relative_eq!(fitted.variance(), delta * delta, max_relative = 1e-12);
        assert_eq!(fitted.mean(), base.mean());

        // Degenerate replicates (all at the analytic mean) are rejected.
        let flat = ReplicateStats::from_parts(StatisticKind::Exceedance, Some(cfg), vec![mean; 40]);
        assert!(fit_exceedance_variance(&flat, &base).is_err());

        // Mismatched configuration or kind is rejected.
        let other = ExceedanceConfig::new(2.0, ExceedanceWeight::Uncentered).unwrap();
        let wrong_cfg =
            ReplicateStats::from_parts(StatisticKind::Exceedance, Some(other), vec![1.0, 2.0]);
        assert!(fit_exceedance_variance(&wrong_cfg, &base).is_err());
        let wrong_kind = ReplicateStats::from_parts(StatisticKind::Max, None, vec![1.0, 2.0]);
        assert!(fit_exceedance_variance(&wrong_kind, &base).is_err());

        let short =
            ReplicateStats::from_parts(StatisticKind::Exceedance, Some(cfg), vec![mean + 1.0]);
        assert!(matches!(
            fit_exceedance_variance(&short, &base),
            Err(Error::InsufficientReplicates { .. })
        ));
    }
}
