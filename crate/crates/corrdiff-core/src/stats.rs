//! The three test statistics evaluated on a standardized-difference vector.
//!
//! For `d = (d_1, ..., d_m)`:
//!
//! * average of squares: `T_S = m^{-1} Σ d_t^2`,
//! * extreme value:      `T_M = max_t |d_t|`,
//! * sum of exceedances: `T_E^w(u) = Σ (|d_t| - u w)^2 I(|d_t| > u)`.
//!
//! `T_S` is sensitive to many small departures, `T_M` to a single large one,
//! and `T_E` interpolates between them through the threshold `u`. All sums
//! use compensated accumulation and run in a fixed index order, so values
//! are reproducible regardless of how callers parallelize across datasets.

use crate::corr::StandardizedDifferences;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Which test statistic a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatisticKind {
    /// Average of squared standardized differences.
    Squares,
    /// Maximum absolute standardized difference.
    Max,
    /// Sum of squared (weighted) exceedances above a threshold.
    Exceedance,
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StatisticKind::Squares => "squares",
            StatisticKind::Max => "max",
            StatisticKind::Exceedance => "exceedance",
        })
    }
}

/// The exceedance weight flag `w`.
///
/// `Uncentered` (`w = 0`) sums squared values above the threshold;
/// `Centered` (`w = 1`) sums squared excesses over the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExceedanceWeight {
    /// `w = 0`: contribution `|d_t|^2`.
    Uncentered,
    /// `w = 1`: contribution `(|d_t| - u)^2`.
    Centered,
}

impl ExceedanceWeight {
    /// The numeric flag value `w`.
    pub fn flag(self) -> u8 {
        match self {
            ExceedanceWeight::Uncentered => 0,
            ExceedanceWeight::Centered => 1,
        }
    }

    /// Parses the numeric flag.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidConfig`] unless the flag is 0 or 1.
    pub fn from_flag(w: u8) -> Result<Self> {
        match w {
            0 => Ok(ExceedanceWeight::Uncentered),
            1 => Ok(ExceedanceWeight::Centered),
            other => Err(Error::InvalidConfig(format!(
                "exceedance weight must be 0 or 1, got {other}"
            ))),
        }
    }

    /// The amount subtracted from `|d_t|` before squaring: `u w`.
    pub fn offset(self, u: f64) -> f64 {
        match self {
            ExceedanceWeight::Uncentered => 0.0,
            ExceedanceWeight::Centered => u,
        }
    }
}

/// Threshold and weight of the exceedance statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceedanceConfig {
    u: f64,
    weight: ExceedanceWeight,
}

impl ExceedanceConfig {
    /// Validates `u ≥ 0` and finite.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidThreshold`] otherwise.
    pub fn new(u: f64, weight: ExceedanceWeight) -> Result<Self> {
        if !u.is_finite() || u < 0.0 {
            return Err(Error::InvalidThreshold { u });
        }
        Ok(Self { u, weight })
    }

    /// The threshold `u` (on the z-scale of the standardized differences).
    pub fn u(&self) -> f64 {
        self.u
    }

    /// The weight flag.
    pub fn weight(&self) -> ExceedanceWeight {
        self.weight
    }
}

/// An evaluated test statistic, tagged with enough context for the null
/// distributions to reject mismatched inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticValue {
    kind: StatisticKind,
    value: f64,
    n_exceed: Option<usize>,
    config: Option<ExceedanceConfig>,
}

impl StatisticValue {
    /// Assembles a value directly from its parts, bypassing computation,
    /// so tests can exercise the p-value functions on chosen inputs.
    #[cfg(test)]
    pub(crate) fn raw(
        kind: StatisticKind,
        value: f64,
        n_exceed: Option<usize>,
        config: Option<ExceedanceConfig>,
    ) -> Self {
        Self {
            kind,
            value,
            n_exceed,
            config,
        }
    }

    /// The statistic family.
    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    /// The observed value.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Number of strict exceedances `N_u` (exceedance statistic only).
    pub fn n_exceed(&self) -> Option<usize> {
        self.n_exceed
    }

    /// The exceedance configuration the value was computed under.
    pub fn config(&self) -> Option<ExceedanceConfig> {
        self.config
    }
}

/// Values of one statistic across permutation replicates, tagged with the
/// statistic family and (for exceedance) the `(u, w)` configuration so that
/// downstream consumers can verify they are comparing like with like.
#[derive(Debug, Clone)]
pub struct ReplicateStats {
    kind: StatisticKind,
    config: Option<ExceedanceConfig>,
    values: Vec<f64>,
}

impl ReplicateStats {
    pub(crate) fn from_parts(
        kind: StatisticKind,
        config: Option<ExceedanceConfig>,
        values: Vec<f64>,
    ) -> Self {
        Self {
            kind,
            config,
            values,
        }
    }

    /// The statistic family the replicates were computed for.
    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    /// The exceedance configuration, when the family is exceedance.
    pub fn config(&self) -> Option<ExceedanceConfig> {
        self.config
    }

    /// The replicate values, in replicate order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of replicates.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Whether there are no replicates.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn non_empty(d: &StandardizedDifferences) -> Result<&[f64]> {
    if d.is_empty() {
        return Err(Error::EmptyInput {
            what: "standardized differences",
        });
    }
    Ok(d.d())
}

/// Average of squares `T_S = m^{-1} Σ d_t^2`.
///
/// # Errors
///
/// [`Error::EmptyInput`] for an empty vector.
pub fn t_squares(d: &StandardizedDifferences) -> Result<StatisticValue> {
    let values = non_empty(d)?;
    Ok(StatisticValue {
        kind: StatisticKind::Squares,
        value: squares_of(values),
        n_exceed: None,
        config: None,
    })
}

/// Extreme value `T_M = max_t |d_t|`.
///
/// # Errors
///
/// [`Error::EmptyInput`] for an empty vector.
pub fn t_max(d: &StandardizedDifferences) -> Result<StatisticValue> {
    let values = non_empty(d)?;
    Ok(StatisticValue {
        kind: StatisticKind::Max,
        value: max_of(values),
        n_exceed: None,
        config: None,
    })
}

/// Sum of exceedances `T_E^w(u) = Σ (|d_t| - u w)^2 I(|d_t| > u)`.
///
/// The indicator is strict: entries with `|d_t| = u` do not contribute.
///
/// # Errors
///
/// [`Error::EmptyInput`] for an empty vector.
pub fn t_exceed(d: &StandardizedDifferences, cfg: ExceedanceConfig) -> Result<StatisticValue> {
    let values = non_empty(d)?;
    let (value, n_exceed) = exceed_of(values, cfg);
    Ok(StatisticValue {
        kind: StatisticKind::Exceedance,
        value,
        n_exceed: Some(n_exceed),
        config: Some(cfg),
    })
}

/// `T_S` on a raw slice, for replicate rows.
pub(crate) fn squares_of(values: &[f64]) -> f64 {
    let mut sum = CompensatedSum::new();
    for &v in values {
        sum.add(v * v);
    }
    sum.value() / values.len() as f64
}

/// `T_M` on a raw slice, for replicate rows.
pub(crate) fn max_of(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

/// `T_E^w(u)` on a raw slice, for replicate rows; also counts exceedances.
pub(crate) fn exceed_of(values: &[f64], cfg: ExceedanceConfig) -> (f64, usize) {
    let offset = cfg.weight.offset(cfg.u);
    let mut sum = CompensatedSum::new();
    let mut count = 0usize;
    for &v in values {
        let a = v.abs();
        if a > cfg.u {
            let excess = a - offset;
            sum.add(excess * excess);
            count += 1;
        }
    }
    (sum.value(), count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::tests::{demo_dataset, DEMO_D};
    use crate::corr::{pearson_correlations, standardized_differences};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn squares_examples() {
        assert_eq!(squares_of(&[1.0, 1.0, 1.0]), 1.0);
        assert_eq!(squares_of(&[0.0, 0.0, 0.0, 0.0]), 0.0);
        assert_relative_eq!(
            squares_of(&[1.0, -2.0, 3.0]),
            14.0 / 3.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn max_examples() {
        assert_eq!(max_of(&[0.5, -2.0, 1.0]), 2.0);
        assert_eq!(max_of(&[0.0]), 0.0);
        assert_eq!(max_of(&[-3.5, 3.5]), 3.5);
    }

    #[test]
    fn exceed_examples() {
        let centered = ExceedanceConfig::new(1.0, ExceedanceWeight::Centered).unwrap();
        let (value, count) = exceed_of(&[0.5, -2.0, 1.5], centered);
        assert_relative_eq!(value, 1.25, max_relative = 1e-15);
        assert_eq!(count, 2);

        let uncentered = ExceedanceConfig::new(1.0, ExceedanceWeight::Uncentered).unwrap();
        let (value, count) = exceed_of(&[0.5, -2.0, 1.5], uncentered);
        assert_relative_eq!(value, 6.25, max_relative = 1e-15);
        assert_eq!(count, 2);
    }

    #[test]
    fn exceedance_indicator_is_strict() {
        let cfg = ExceedanceConfig::new(1.0, ExceedanceWeight::Uncentered).unwrap();
        let (value, count) = exceed_of(&[1.0, -1.0, 2.0], cfg);
        assert_eq!(count, 1);
        assert_eq!(value, 4.0);
    }

    #[test]
    fn config_validation() {
        assert!(ExceedanceConfig::new(-0.1, ExceedanceWeight::Uncentered).is_err());
        assert!(ExceedanceConfig::new(f64::NAN, ExceedanceWeight::Centered).is_err());
        assert!(ExceedanceConfig::new(f64::INFINITY, ExceedanceWeight::Centered).is_err());
        assert_eq!(ExceedanceWeight::from_flag(0).unwrap(), ExceedanceWeight::Uncentered);
        assert_eq!(ExceedanceWeight::from_flag(1).unwrap(), ExceedanceWeight::Centered);
        assert!(ExceedanceWeight::from_flag(2).is_err());
        assert_eq!(ExceedanceWeight::Centered.offset(1.5), 1.5);
        assert_eq!(ExceedanceWeight::Uncentered.offset(1.5), 0.0);
    }

    #[test]
    fn frozen_statistics_on_demo_data() {
        let est = pearson_correlations(&demo_dataset()).unwrap();
        let d = standardized_differences(&est).unwrap();

        let ts = t_squares(&d).unwrap();
        assert_eq!(ts.kind(), StatisticKind::Squares);
        assert_relative_eq!(ts.value(), 2.989931368173796, max_relative = 1e-12);

        let tm = t_max(&d).unwrap();
        assert_eq!(tm.kind(), StatisticKind::Max);
        assert_relative_eq!(tm.value(), 3.7547825048553407, max_relative = 1e-12);

        let cfg0 = ExceedanceConfig::new(1.0, ExceedanceWeight::Uncentered).unwrap();
        let te0 = t_exceed(&d, cfg0).unwrap();
        assert_relative_eq!(te0.value(), 15.417572076505593, max_relative = 1e-12);
        assert_eq!(te0.n_exceed(), Some(2));
        assert_eq!(te0.config(), Some(cfg0));

        let cfg1 = ExceedanceConfig::new(1.0, ExceedanceWeight::Centered).unwrap();
        let te1 = t_exceed(&d, cfg1).unwrap();
        assert_relative_eq!(te1.value(), 7.610895473739105, max_relative = 1e-12);
    }

    #[test]
    fn frozen_statistics_on_raw_slice() {
        // Same frozen values, bypassing the correlation pipeline.
        assert_relative_eq!(squares_of(&DEMO_D), 2.989931368173796, max_relative = 1e-14);
        assert_relative_eq!(max_of(&DEMO_D), 3.7547825048553407, max_relative = 1e-15);
        let cfg = ExceedanceConfig::new(1.0, ExceedanceWeight::Uncentered).unwrap();
        assert_relative_eq!(
            exceed_of(&DEMO_D, cfg).0,
            15.417572076505593,
            max_relative = 1e-14
        );
    }

    #[test]
    fn zero_threshold_uncentered_equals_m_times_squares() {
        let est = pearson_correlations(&demo_dataset()).unwrap();
        let d = standardized_differences(&est).unwrap();
        let cfg = ExceedanceConfig::new(0.0, ExceedanceWeight::Uncentered).unwrap();
        let te = t_exceed(&d, cfg).unwrap();
        let ts = t_squares(&d).unwrap();
        let m = d.len() as f64;
        assert_relative_eq!(te.value(), m * ts.value(), max_relative = 1e-15);
        assert_eq!(te.n_exceed(), Some(6));
    }

    proptest! {
        #[test]
        fn exceedance_monotone_in_threshold(
            values in proptest::collection::vec(-6.0_f64..6.0, 1..40),
            u1 in 0.0_f64..3.0,
            du in 0.0_f64..2.0,
            w in 0_u8..2,
        ) {
            let weight = ExceedanceWeight::from_flag(w).unwrap();
            let lo = ExceedanceConfig::new(u1, weight).unwrap();
            let hi = ExceedanceConfig::new(u1 + du, weight).unwrap();
            let (at_lo, n_lo) = exceed_of(&values, lo);
            let (at_hi, n_hi) = exceed_of(&values, hi);
            prop_assert!(at_hi <= at_lo + 1e-12);
            prop_assert!(n_hi <= n_lo);
        }

        #[test]
        fn statistics_invariant_under_sign_flip_and_order(
            values in proptest::collection::vec(-6.0_f64..6.0, 1..40),
        ) {
            let mut flipped: Vec<f64> = values.iter().map(|v| -v).collect();
            flipped.reverse();
            let cfg = ExceedanceConfig::new(1.2, ExceedanceWeight::Centered).unwrap();
            prop_assert!((squares_of(&values) - squares_of(&flipped)).abs()
                <= 1e-14 * squares_of(&values).abs().max(1.0));
            prop_assert_eq!(max_of(&values), max_of(&flipped));
            let (a, na) = exceed_of(&values, cfg);
            let (b, nb) = exceed_of(&flipped, cfg);
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            prop_assert_eq!(na, nb);
        }

        #[test]
        fn max_below_threshold_means_zero_exceedance(
            values in proptest::collection::vec(-2.0_f64..2.0, 1..40),
        ) {
            let u = max_of(&values);
            let cfg = ExceedanceConfig::new(u, ExceedanceWeight::Uncentered).unwrap();
            let (value, count) = exceed_of(&values, cfg);
            prop_assert_eq!(value, 0.0);
            prop_assert_eq!(count, 0);
        }
    }
}
