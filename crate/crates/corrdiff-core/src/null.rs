//! Null distributions, p-values, and rejection quantiles for the three test
//! statistics.
//!
//! Each statistic has a closed-form null under the assumption that the
//! standardized differences behave like (nearly) independent standard
//! normals — the "asymptotic independence" regime — and a
//! dependence-corrected variant in which selected parameters are replaced by
//! permutation estimates:
//!
//! * `T_S`: normal with mean `μ2` and variance `(μ4 − μ2²)/m + (1 − 1/m)γ̄2`;
//!   the independence limits are `μ2 = 1`, `μ4 = 3`, `γ̄2 = 0`.
//! * `T_M`: Gumbel with scale `σ(m) = 1/√(2 log 2m)` and an extremal index
//!   `θ_m ∈ (0, 1]` entering as `F(x) = exp{−θ_m e^{−(x − loc)/σ}}`.
//! * `T_E^w(u)`: normal with mean `m η0 μ_w` and a variance that simplifies
//!   to `m η0 {(1 − η0) μ_w² + σ²_w}` when exceedances are near-independent.
//!
//! A non-parametric alternative, [`empirical_pvalue`], ranks the observed
//! statistic among permutation replicates.

use crate::error::{Error, Result};
use crate::numeric::{norm_pdf, norm_ppf, norm_sf};
use crate::stats::{ExceedanceConfig, ReplicateStats, StatisticKind, StatisticValue};

// ---------------------------------------------------------------------------
// Average-of-squares null
// ---------------------------------------------------------------------------

/// Normal null for `T_S`, parameterized by the per-pair moments `μ2`, `μ4`
/// and the average cross-pair covariance `γ̄2` of the squared differences.
#[derive(Debug, Clone, Copy)]
pub struct SquaresNull {
    mu2: f64,
    mu4: f64,
    gamma2bar: f64,
    m: usize,
}

impl SquaresNull {
    /// Builds a null from explicit moment parameters.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidMoments`] if `μ4 < μ2²` or the implied variance of
    /// `T_S` is not positive; [`Error::EmptyInput`] for `m = 0`.
    pub fn new(mu2: f64, mu4: f64, gamma2bar: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyInput { what: "pair count" });
        }
        let candidate = Self {
            mu2,
            mu4,
            gamma2bar,
            m,
        };
        let variance = candidate.variance();
        if !(mu4.is_finite() && mu2.is_finite() && gamma2bar.is_finite())
            || mu4 < mu2 * mu2
            || !(variance > 0.0)
        {
            return Err(Error::InvalidMoments {
                mu2,
                mu4,
                variance,
            });
        }
        Ok(candidate)
    }

    /// The independence-limit null: `μ2 = 1`, `μ4 = 3`, `γ̄2 = 0`, so that
    /// `T_S ~ N(1, 2/m)`.
    ///
    /// # Errors
    ///
    /// [`Error::EmptyInput`] for `m = 0`.
    pub fn independence_limit(m: usize) -> Result<Self> {
        Self::new(1.0, 3.0, 0.0, m)
    }

    /// Null mean of `T_S`.
    pub fn mean(&self) -> f64 {
        self.mu2
    }

    /// Null variance of `T_S`: `(μ4 − μ2²)/m + (1 − 1/m) γ̄2`.
    pub fn variance(&self) -> f64 {
        let m = self.m as f64;
        (self.mu4 - self.mu2 * self.mu2) / m + (1.0 - 1.0 / m) * self.gamma2bar
    }

    /// The cross-pair covariance parameter.
    pub fn gamma2bar(&self) -> f64 {
        self.gamma2bar
    }

    /// Number of pairs.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Upper-tail rejection point: `t_{S,α} = μ2 + z_α √variance` with
    /// `z_α = Φ^{-1}(1 − α)`.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidLevel`] unless `0 < α < 1`.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        check_level(alpha)?;
        Ok(self.mu2 + norm_ppf(1.0 - alpha) * self.variance().sqrt())
    }
}

/// Upper-tail p-value of an observed `T_S` under a [`SquaresNull`].
///
/// # Errors
///
/// [`Error::StatisticMismatch`] if the value is not a squares statistic.
pub fn squares_pvalue(stat: &StatisticValue, null: &SquaresNull) -> Result<f64> {
    expect_kind(stat, StatisticKind::Squares)?;
    Ok(norm_sf((stat.value() - null.mean()) / null.variance().sqrt()))
}

// ---------------------------------------------------------------------------
// Extreme-value null
// ---------------------------------------------------------------------------

/// Location of the `θ = 1` Gumbel reference for `m` independent pairs:
/// the median-matched point `Φ^{-1}((1 + e^{-1/m})/2)`, at which the CDF of
/// the maximum of `m` iid absolute normals equals `e^{-1}` exactly.
pub fn iid_gumbel_location(m: usize) -> f64 {
    norm_ppf((1.0 + (-1.0 / m as f64).exp()) / 2.0)
}

/// The asymptotic Gumbel scale `σ(m) = 1/√(2 log 2m)`.
pub fn gumbel_scale(m: usize) -> f64 {
    1.0 / (2.0 * (2.0 * m as f64).ln()).sqrt()
}

/// Gumbel null for `T_M`: `F(x) = exp{−θ_m e^{−(x − location)/scale}}`.
#[derive(Debug, Clone, Copy)]
pub struct GumbelNull {
    location: f64,
    scale: f64,
    theta_m: f64,
    m: usize,
}

impl GumbelNull {
    /// The large-`m` expansion null: location `√(2 log 2m)`, scale
    /// `1/√(2 log 2m)`, `θ_m = 1`. This is the textbook limit; on finite
    /// `m` its location overshoots, so use [`GumbelNull::finite_sample`]
    /// for calibrated p-values.
    ///
    /// # Errors
    ///
    /// [`Error::EmptyInput`] for `m = 0`.
    pub fn asymptotic_expansion(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyInput { what: "pair count" });
        }
        let location = (2.0 * (2.0 * m as f64).ln()).sqrt();
        Ok(Self {
            location,
            scale: 1.0 / location,
            theta_m: 1.0,
            m,
        })
    }

    /// The finite-`m` independence null: location [`iid_gumbel_location`],
    /// scale `σ(m)`, `θ_m = 1`. Matches the exact distribution of the
    /// maximum of `m` iid absolute normals at its `e^{-1}` point.
    ///
    /// # Errors
    ///
    /// [`Error::EmptyInput`] for `m = 0`.
    pub fn finite_sample(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyInput { what: "pair count" });
        }
        Ok(Self {
            location: iid_gumbel_location(m),
            scale: gumbel_scale(m),
            theta_m: 1.0,
            m,
        })
    }

    /// A dependence-corrected null: scale fixed at `σ(m)`, location at the
    /// independence reference, and the permutation-estimated extremal index
    /// `θ_m` absorbing the dependence.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidTheta`] unless `θ_m ∈ (0, 1]`;
    /// [`Error::EmptyInput`] for `m = 0`.
    pub fn fitted(theta_m: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyInput { what: "pair count" });
        }
        if !(theta_m.is_finite() && theta_m > 0.0 && theta_m <= 1.0) {
            return Err(Error::InvalidTheta { theta: theta_m });
        }
        Ok(Self {
            location: iid_gumbel_location(m),
            scale: gumbel_scale(m),
            theta_m,
            m,
        })
    }

    /// A null with every parameter explicit.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidScale`] for `scale ≤ 0`; [`Error::InvalidTheta`]
    /// unless `θ_m ∈ (0, 1]`; [`Error::EmptyInput`] for `m = 0`.
    pub fn with_parameters(location: f64, scale: f64, theta_m: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::EmptyInput { what: "pair count" });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidScale { scale });
        }
        if !(theta_m.is_finite() && theta_m > 0.0 && theta_m <= 1.0) {
            return Err(Error::InvalidTheta { theta: theta_m });
        }
        Ok(Self {
            location,
            scale,
            theta_m,
            m,
        })
    }

    /// Gumbel location parameter.
    pub fn location(&self) -> f64 {
        self.location
    }

    /// Gumbel scale parameter.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Extremal index.
    pub fn theta_m(&self) -> f64 {
        self.theta_m
    }

    /// Number of pairs.
    pub fn m(&self) -> usize {
        self.m
    }
}

/// The level-`α` point of the corrected Gumbel law, in the printed form
/// `location + scale·{log θ_m − log(−log α)}`, whose CDF at the result is
/// exactly `α`. The upper-tail rejection point at size `α` is therefore
/// `gumbel_quantile(null, 1 − α)`, and the p-value/quantile duality reads
/// `gumbel_pvalue(gumbel_quantile(α)) = 1 − α`.
///
/// # Errors
///
/// [`Error::InvalidLevel`] unless `0 < α < 1`.
pub fn gumbel_quantile(null: &GumbelNull, alpha: f64) -> Result<f64> {
    check_level(alpha)?;
    Ok(null.location + null.scale * (null.theta_m.ln() - (-alpha.ln()).ln()))
}

/// Upper-tail p-value of an observed `T_M`:
/// `p = 1 − exp{−θ_m e^{−(x − location)/scale}}`.
///
/// # Errors
///
/// [`Error::StatisticMismatch`] if the value is not a max statistic.
pub fn gumbel_pvalue(stat: &StatisticValue, null: &GumbelNull) -> Result<f64> {
    expect_kind(stat, StatisticKind::Max)?;
    let z = (stat.value() - null.location) / null.scale;
    Ok(-(-null.theta_m * (-z).exp()).exp_m1())
}

// ---------------------------------------------------------------------------
// Exceedance null
// ---------------------------------------------------------------------------

/// Conditional mean and variance of `(|Z| − u w)²` given `|Z| > u` for a
/// standard normal `Z`: the per-exceedance moments `(μ_w, σ²_w)`.
///
/// # Errors
///
/// [`Error::InvalidThreshold`] for negative or non-finite `u`.
pub fn exceedance_moments(u: f64, w: crate::stats::ExceedanceWeight) -> Result<(f64, f64)> {
    if !u.is_finite() || u < 0.0 {
        return Err(Error::InvalidThreshold { u });
    }
    // Hazard ratio φ(u)/(1 − Φ(u)) of the standard normal.
    let ratio = norm_pdf(u) / norm_sf(u);
    Ok(match w {
        crate::stats::ExceedanceWeight::Uncentered => {
            let mu = 1.0 + u * ratio;
            let sigma2 = 3.0 + (u * u * u + 3.0 * u) * ratio - mu * mu;
            (mu, sigma2)
        }
        crate::stats::ExceedanceWeight::Centered => {
            let mu = u * u + 1.0 - u * ratio;
            let sigma2 =
                3.0 + u.powi(4) + 6.0 * u * u - (5.0 * u + u * u * u) * ratio - mu * mu;
            (mu, sigma2)
        }
    })
}

/// Normal null for `T_E^w(u)`, with mean `m η0 μ_w` and variance
/// `m{η0 σ²_w + μ_w²(η0 − φ̄)} + m² μ_w²(φ̄ − η0²) + Σ γ` where `φ̄` is the
/// average pairwise co-exceedance probability and `Σ γ` the aggregate
/// covariance of co-exceeding contributions.
#[derive(Debug, Clone, Copy)]
pub struct ExceedanceNull {
    cfg: ExceedanceConfig,
    eta0: f64,
    phibar: f64,
    mu_w: f64,
    sigma2_w: f64,
    mu_mw: f64,
    sigma2_mw: f64,
    m: usize,
}

impl ExceedanceNull {
    /// Replaces the variance with a permutation estimate, keeping the
    /// analytic mean.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidMoments`] for a non-positive variance.
    pub fn with_variance(self, sigma2_mw: f64) -> Result<Self> {
        if !(sigma2_mw.is_finite() && sigma2_mw > 0.0) {
            return Err(Error::InvalidMoments {
                mu2: self.mu_mw,
                mu4: f64::NAN,
                variance: sigma2_mw,
            });
        }
        Ok(Self { sigma2_mw, ..self })
    }

    /// The exceedance configuration the null refers to.
    pub fn config(&self) -> ExceedanceConfig {
        self.cfg
    }

    /// Per-pair exceedance probability `η0`.
    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    /// Average pairwise co-exceedance probability `φ̄`.
    pub fn phibar(&self) -> f64 {
        self.phibar
    }

    /// Per-exceedance moments `(μ_w, σ²_w)`.
    pub fn per_exceedance_moments(&self) -> (f64, f64) {
        (self.mu_w, self.sigma2_w)
    }

    /// Null mean `μ(m, w) = m η0 μ_w`.
    pub fn mean(&self) -> f64 {
        self.mu_mw
    }

    /// Null variance `σ²(m, w)`.
    pub fn variance(&self) -> f64 {
        self.sigma2_mw
    }

    /// Number of pairs.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Upper-tail rejection point `μ(m,w) + z_α σ(m,w)`.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidLevel`] unless `0 < α < 1`.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        check_level(alpha)?;
        Ok(self.mu_mw + norm_ppf(1.0 - alpha) * self.sigma2_mw.sqrt())
    }
}

/// Builds the exceedance null from explicit dependence parameters.
///
/// # Errors
///
/// [`Error::InvalidProportion`] for `η0` outside `(0, 1]` (a zero
/// threshold legitimately makes every pair an exceedance) or `φ̄` outside
/// `[0, 1]`; [`Error::InvalidMoments`] if the assembled variance is not
/// positive; [`Error::EmptyInput`] for `m = 0`.
pub fn exceedance_null(
    m: usize,
    cfg: ExceedanceConfig,
    eta0: f64,
    phibar: f64,
    gamma_sum: f64,
) -> Result<ExceedanceNull> {
    if m == 0 {
        return Err(Error::EmptyInput { what: "pair count" });
    }
    if !(eta0 > 0.0 && eta0 <= 1.0) {
        return Err(Error::InvalidProportion { value: eta0 });
    }
    if !(0.0..=1.0).contains(&phibar) {
        return Err(Error::InvalidProportion { value: phibar });
    }
    let (mu_w, sigma2_w) = exceedance_moments(cfg.u(), cfg.weight())?;
    let mf = m as f64;
    let mu_mw = mf * eta0 * mu_w;
    let sigma2_mw = mf * (eta0 * sigma2_w + mu_w * mu_w * (eta0 - phibar))
        + mf * mf * mu_w * mu_w * (phibar - eta0 * eta0)
        + gamma_sum;
    if !(sigma2_mw.is_finite() && sigma2_mw > 0.0) {
        return Err(Error::InvalidMoments {
            mu2: mu_mw,
            mu4: f64::NAN,
            variance: sigma2_mw,
        });
    }
    Ok(ExceedanceNull {
        cfg,
        eta0,
        phibar,
        mu_w,
        sigma2_w,
        mu_mw,
        sigma2_mw,
        m,
    })
}

/// The independence-regime exceedance null: `η0 = 2(1 − Φ(u))`, `φ̄ = η0²`,
/// no covariance term, so the variance takes the simplified form
/// `m η0 {(1 − η0) μ_w² + σ²_w}`.
///
/// # Errors
///
/// As [`exceedance_null`]; additionally [`Error::InvalidThreshold`] when
/// `u` is so large that `η0` underflows to zero.
pub fn exceedance_null_independent(m: usize, cfg: ExceedanceConfig) -> Result<ExceedanceNull> {
    let eta0 = 2.0 * norm_sf(cfg.u());
    if eta0 <= 0.0 {
        return Err(Error::InvalidThreshold { u: cfg.u() });
    }
    exceedance_null(m, cfg, eta0, eta0 * eta0, 0.0)
}

/// Upper-tail p-value of an observed `T_E^w(u)` under an [`ExceedanceNull`].
///
/// # Errors
///
/// [`Error::StatisticMismatch`] if the value is not an exceedance statistic
/// or was computed under a different `(u, w)` configuration.
pub fn exceedance_pvalue(stat: &StatisticValue, null: &ExceedanceNull) -> Result<f64> {
    expect_kind(stat, StatisticKind::Exceedance)?;
    match stat.config() {
        Some(cfg) if cfg == null.config() => {}
        other => {
            return Err(Error::StatisticMismatch {
                expected: StatisticKind::Exceedance.to_string(),
                found: format!(
                    "exceedance with configuration {other:?}, null has {:?}",
                    null.config()
                ),
            })
        }
    }
    Ok(norm_sf(
        (stat.value() - null.mean()) / null.variance().sqrt(),
    ))
}

// ---------------------------------------------------------------------------
// Non-parametric p-value
// ---------------------------------------------------------------------------

/// Permutation p-value with the add-one correction:
/// `p = (1 + #{replicates ≥ observed}) / (B + 1)`, never zero.
///
/// # Errors
///
/// [`Error::StatisticMismatch`] if the replicates were computed for a
/// different statistic family or exceedance configuration;
/// [`Error::EmptyInput`] for an empty replicate vector.
pub fn empirical_pvalue(stat: &StatisticValue, replicates: &ReplicateStats) -> Result<f64> {
    if stat.kind() != replicates.kind() || stat.config() != replicates.config() {
        return Err(Error::StatisticMismatch {
            expected: format!("{} {:?}", replicates.kind(), replicates.config()),
            found: format!("{} {:?}", stat.kind(), stat.config()),
        });
    }
    if replicates.is_empty() {
        return Err(Error::EmptyInput {
            what: "replicate statistics",
        });
    }
    let observed = stat.value();
    let count = replicates
        .values()
        .iter()
        .filter(|&&r| r >= observed)
        .count();
    Ok((1.0 + count as f64) / (replicates.len() as f64 + 1.0))
}

fn expect_kind(stat: &StatisticValue, expected: StatisticKind) -> Result<()> {
    if stat.kind() != expected {
        return Err(Error::StatisticMismatch {
            expected: expected.to_string(),
            found: stat.kind().to_string(),
        });
    }
    Ok(())
}

fn check_level(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel { alpha });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ExceedanceWeight;
    use approx::assert_relative_eq;

    /// A statistic value of arbitrary kind for exercising the p-value
    /// functions directly.
    fn fake_stat(kind: StatisticKind, value: f64, cfg: Option<ExceedanceConfig>) -> StatisticValue {
        StatisticValue::raw(kind, value, None, cfg)
    }

    #[test]
    fn squares_null_validation() {
        assert!(SquaresNull::new(1.0, 0.9, 0.0, 100).is_err());
        assert!(SquaresNull::new(1.0, 3.0, f64::NAN, 100).is_err());
        assert!(SquaresNull::new(1.0, 1.0, 0.0, 100).is_err()); // zero variance
        assert!(SquaresNull::new(1.0, 3.0, 0.0, 0).is_err());
        let null = SquaresNull::independence_limit(200).unwrap();
        assert_eq!(null.mean(), 1.0);
        assert_relative_eq!(null.variance(), 2.0 / 200.0, max_relative = 1e-15);
    }

    #[test]
    fn squares_pvalue_examples() {
        let null = SquaresNull::independence_limit(200).unwrap();
        let at_mean = fake_stat(StatisticKind::Squares, 1.0, None);
        assert_relative_eq!(
            squares_pvalue(&at_mean, &null).unwrap(),
            0.5,
            max_relative = 1e-12
        );

        let z95 = 1.6448536269514722; // standard normal upper 5% point
        let at_crit = fake_stat(
            StatisticKind::Squares,
            1.0 + z95 * (2.0_f64 / 200.0).sqrt(),
            None,
        );
        assert_relative_eq!(
            squares_pvalue(&at_crit, &null).unwrap(),
            0.05,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            null.quantile(0.05).unwrap(),
            at_crit.value(),
            max_relative = 1e-12
        );

        // Independently evaluated reference point.
        let null = SquaresNull::new(1.02, 3.3, 0.001, 1000).unwrap();
        assert_relative_eq!(null.variance(), 0.0032586, max_relative = 1e-12);
        let stat = fake_stat(StatisticKind::Squares, 1.1, None);
        assert_relative_eq!(
            squares_pvalue(&stat, &null).unwrap(),
            0.080541292375786799,
            max_relative = 1e-12
        );

        // Kind mismatch is rejected.
        let wrong = fake_stat(StatisticKind::Max, 1.0, None);
        assert!(squares_pvalue(&wrong, &null).is_err());
    }

    #[test]
    fn squares_pvalue_duality_and_monotonicity() {
        let null = SquaresNull::new(1.01, 3.2, 0.0004, 780).unwrap();
        for &alpha in &[0.01, 0.05, 0.1, 0.5, 0.9] {
            let q = null.quantile(alpha).unwrap();
            let stat = fake_stat(StatisticKind::Squares, q, None);
            assert_relative_eq!(
                squares_pvalue(&stat, &null).unwrap(),
                alpha,
                max_relative = 1e-10
            );
        }
        let p_low = squares_pvalue(&fake_stat(StatisticKind::Squares, 1.0, None), &null).unwrap();
        let p_high = squares_pvalue(&fake_stat(StatisticKind::Squares, 1.2, None), &null).unwrap();
        assert!(p_high < p_low);
    }

    #[test]
    fn gumbel_constructors() {
        let asym = GumbelNull::asymptotic_expansion(10_000).unwrap();
        assert_relative_eq!(asym.location(), 4.4505027923901201, max_relative = 1e-12);
        assert_relative_eq!(asym.scale(), 0.22469371364284777, max_relative = 1e-12);
        assert_eq!(asym.theta_m(), 1.0);

        let finite = GumbelNull::finite_sample(780).unwrap();
        assert_relative_eq!(finite.location(), 3.2201512466798905, max_relative = 1e-10);
        assert_relative_eq!(finite.scale(), 0.26077696412738727, max_relative = 1e-12);

        assert!(GumbelNull::fitted(0.0, 100).is_err());
        assert!(GumbelNull::fitted(1.5, 100).is_err());
        assert!(GumbelNull::with_parameters(4.0, -0.1, 1.0, 100).is_err());
        assert!(GumbelNull::asymptotic_expansion(0).is_err());
    }

    #[test]
    fn gumbel_quantile_matches_printed_expansion() {
        let null = GumbelNull::asymptotic_expansion(10_000).unwrap();
        // Independent high-precision evaluation of
        // sqrt(2 log 2m) − log(−log 0.05)/sqrt(2 log 2m).
        assert_relative_eq!(
            gumbel_quantile(&null, 0.05).unwrap(),
            4.2039713887381500,
            max_relative = 1e-10
        );
        // At α = e^{-1} the correction vanishes.
        assert_relative_eq!(
            gumbel_quantile(&null, (-1.0_f64).exp()).unwrap(),
            null.location(),
            max_relative = 1e-12
        );
        // θ_m < 1 lowers the level point by scale·log θ_m.
        let damped = GumbelNull::with_parameters(
            null.location(),
            null.scale(),
            0.5,
            null.m(),
        )
        .unwrap();
        let shift = gumbel_quantile(&damped, 0.05).unwrap() - gumbel_quantile(&null, 0.05).unwrap();
        assert_relative_eq!(shift, null.scale() * 0.5_f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(shift, -0.15574581410108365, max_relative = 1e-10);

        assert!(gumbel_quantile(&null, 0.0).is_err());
        assert!(gumbel_quantile(&null, 1.0).is_err());
    }

    #[test]
    fn gumbel_pvalue_examples() {
        let null = GumbelNull::with_parameters(4.0, 0.22, 0.8, 1000).unwrap();
        let stat = fake_stat(StatisticKind::Max, 4.5, None);
        assert_relative_eq!(
            gumbel_pvalue(&stat, &null).unwrap(),
            0.079119169728766952,
            max_relative = 1e-12
        );

        // At the location with θ = 1 the p-value is 1 − e^{-1}.
        let unit = GumbelNull::with_parameters(4.0, 0.22, 1.0, 1000).unwrap();
        let at_loc = fake_stat(StatisticKind::Max, 4.0, None);
        assert_relative_eq!(
            gumbel_pvalue(&at_loc, &unit).unwrap(),
            1.0 - (-1.0_f64).exp(),
            max_relative = 1e-12
        );

        // Far tail decays to zero without NaN.
        let far = fake_stat(StatisticKind::Max, 40.0, None);
        let p = gumbel_pvalue(&far, &unit).unwrap();
        assert!(p > 0.0 && p < 1e-60);

        let wrong = fake_stat(StatisticKind::Squares, 4.0, None);
        assert!(gumbel_pvalue(&wrong, &unit).is_err());
    }

    #[test]
    fn gumbel_duality_and_limit_law() {
        let null = GumbelNull::fitted(0.7, 780).unwrap();
        for &alpha in &[0.01, 0.05, 0.1, 0.5, 0.9, 0.99] {
            let q = gumbel_quantile(&null, 1.0 - alpha).unwrap();
            let stat = fake_stat(StatisticKind::Max, q, None);
            assert_relative_eq!(
                gumbel_pvalue(&stat, &null).unwrap(),
                alpha,
                max_relative = 1e-10
            );
        }

        // With θ = 1 and the asymptotic parameters, the survival matches
        // the plain limit law 1 − exp(−e^{−(x−loc)/scale}) pointwise.
        let asym = GumbelNull::asymptotic_expansion(2000).unwrap();
        for i in 0..60 {
            let x = 2.0 + 0.1 * i as f64;
            let direct = -(-((-(x - asym.location()) / asym.scale()).exp())).exp_m1();
            let stat = fake_stat(StatisticKind::Max, x, None);
            assert_relative_eq!(
                gumbel_pvalue(&stat, &asym).unwrap(),
                direct,
                max_relative = 1e-12,
                epsilon = 1e-300
            );
        }
    }

    #[test]
    fn exceedance_moment_values() {
        // At u = 0 both weights give mean 1, variance 2.
        for w in [ExceedanceWeight::Uncentered, ExceedanceWeight::Centered] {
            let (mu, s2) = exceedance_moments(0.0, w).unwrap();
            assert_relative_eq!(mu, 1.0, max_relative = 1e-14);
            assert_relative_eq!(s2, 2.0, max_relative = 1e-14);
        }
        // Frozen independent evaluations at u = 1.
        let (mu0, s20) = exceedance_moments(1.0, ExceedanceWeight::Uncentered).unwrap();
        assert_relative_eq!(mu0, 2.525135276160981, max_relative = 1e-12);
        assert_relative_eq!(s20, 2.72423294173133, max_relative = 1e-12);
        let (mu1, s21) = exceedance_moments(1.0, ExceedanceWeight::Centered).unwrap();
        assert_relative_eq!(mu1, 0.4748647238390189, max_relative = 1e-12);
        assert_relative_eq!(s21, 0.6236918370874053, max_relative = 1e-12);

        assert!(exceedance_moments(-0.5, ExceedanceWeight::Uncentered).is_err());
    }

    #[test]
    fn exceedance_null_construction() {
        let cfg = ExceedanceConfig::new(1.5, ExceedanceWeight::Uncentered).unwrap();
        let null = exceedance_null_independent(1000, cfg).unwrap();
        // Frozen independent evaluations.
        assert_relative_eq!(null.eta0(), 0.13361440253771613, max_relative = 1e-12);
        assert_relative_eq!(null.mean(), 522.16718953539131, max_relative = 1e-12);
        assert_relative_eq!(null.variance(), 2168.0867655236538, max_relative = 1e-12);
        let (mu_w, s2_w) = null.per_exceedance_moments();
        assert_relative_eq!(mu_w, 3.9080157499338148, max_relative = 1e-12);
        assert_relative_eq!(s2_w, 2.9944955854217708, max_relative = 1e-12);

        // With φ̄ = η0² and no covariance term, the general formula equals
        // the simplified independence form exactly.
        let eta0 = null.eta0();
        let general = exceedance_null(1000, cfg, eta0, eta0 * eta0, 0.0).unwrap();
        let simplified = 1000.0 * eta0 * ((1.0 - eta0) * mu_w * mu_w + s2_w);
        assert_relative_eq!(general.variance(), simplified, max_relative = 1e-13);

        // Validation paths.
        assert!(exceedance_null(1000, cfg, 0.0, 0.0, 0.0).is_err());
        assert!(exceedance_null(1000, cfg, 0.1, 1.5, 0.0).is_err());
        assert!(exceedance_null(0, cfg, 0.1, 0.01, 0.0).is_err());
        // Massive negative covariance pushes the variance negative.
        assert!(exceedance_null(1000, cfg, 0.1, 0.01, -1e9).is_err());
    }

    #[test]
    fn exceedance_pvalue_examples() {
        let cfg = ExceedanceConfig::new(1.0, ExceedanceWeight::Centered).unwrap();
        let null = exceedance_null_independent(2000, cfg).unwrap();
        let at_mean = fake_stat(StatisticKind::Exceedance, null.mean(), Some(cfg));
        assert_relative_eq!(
            exceedance_pvalue(&at_mean, &null).unwrap(),
            0.5,
            max_relative = 1e-12
        );
        let z95 = 1.6448536269514722;
        let at_crit = fake_stat(
            StatisticKind::Exceedance,
            null.mean() + z95 * null.variance().sqrt(),
            Some(cfg),
        );
        assert_relative_eq!(
            exceedance_pvalue(&at_crit, &null).unwrap(),
            0.05,
            max_relative = 1e-9
        );
        for &alpha in &[0.01, 0.05, 0.25, 0.5, 0.75] {
            let q = null.quantile(alpha).unwrap();
            let stat = fake_stat(StatisticKind::Exceedance, q, Some(cfg));
            assert_relative_eq!(
                exceedance_pvalue(&stat, &null).unwrap(),
                alpha,
                max_relative = 1e-10
            );
        }

        // Mismatched configuration is rejected.
        let other_cfg = ExceedanceConfig::new(2.0, ExceedanceWeight::Centered).unwrap();
        let mismatched = fake_stat(StatisticKind::Exceedance, 1.0, Some(other_cfg));
        assert!(exceedance_pvalue(&mismatched, &null).is_err());
        let wrong_kind = fake_stat(StatisticKind::Squares, 1.0, None);
        assert!(exceedance_pvalue(&wrong_kind, &null).is_err());
    }

    #[test]
    fn exceedance_variance_override() {
        let cfg = ExceedanceConfig::new(1.0, ExceedanceWeight::Uncentered).unwrap();
        let null = exceedance_null_independent(500, cfg).unwrap();
        let widened = null.with_variance(2.0 * null.variance()).unwrap();
        assert_eq!(widened.mean(), null.mean());
        assert_relative_eq!(
            widened.variance(),
            2.0 * null.variance(),
            max_relative = 1e-15
        );
        assert!(null.with_variance(0.0).is_err());
        assert!(null.with_variance(-1.0).is_err());
    }

    #[test]
    fn empirical_pvalue_examples() {
        let wrap = |values: Vec<f64>| {
            ReplicateStats::from_parts(StatisticKind::Squares, None, values)
        };
        let replicates = wrap((1..=99).map(|i| i as f64).collect());
        let above_all = fake_stat(StatisticKind::Squares, 1000.0, None);
        assert_relative_eq!(
            empirical_pvalue(&above_all, &replicates).unwrap(),
            0.01,
            max_relative = 1e-15
        );
        let below_all = fake_stat(StatisticKind::Squares, 0.0, None);
        assert_relative_eq!(
            empirical_pvalue(&below_all, &replicates).unwrap(),
            1.0,
            max_relative = 1e-15
        );

        let replicates = wrap((1..=199).map(|i| i as f64).collect());
        let at_median = fake_stat(StatisticKind::Squares, 100.0, None);
        // 100 of 199 replicates sit at or above the observed value.
        let p = empirical_pvalue(&at_median, &replicates).unwrap();
        assert_relative_eq!(p, 101.0 / 200.0, max_relative = 1e-15);

        // Ties count toward the tail (replicate ≥ observed).
        let tied = empirical_pvalue(
            &fake_stat(StatisticKind::Squares, 199.0, None),
            &replicates,
        )
        .unwrap();
        assert_relative_eq!(tied, 2.0 / 200.0, max_relative = 1e-15);

        assert!(empirical_pvalue(&above_all, &wrap(Vec::new())).is_err());

        // Kind and configuration mismatches are rejected.
        let max_stat = fake_stat(StatisticKind::Max, 3.0, None);
        assert!(empirical_pvalue(&max_stat, &replicates).is_err());
        let cfg_a = ExceedanceConfig::new(1.0, ExceedanceWeight::Centered).unwrap();
        let cfg_b = ExceedanceConfig::new(1.5, ExceedanceWeight::Centered).unwrap();
        let exc_reps =
            ReplicateStats::from_parts(StatisticKind::Exceedance, Some(cfg_a), vec![1.0, 2.0]);
        let exc_stat = fake_stat(StatisticKind::Exceedance, 1.5, Some(cfg_b));
        assert!(empirical_pvalue(&exc_stat, &exc_reps).is_err());
        let matching = fake_stat(StatisticKind::Exceedance, 1.5, Some(cfg_a));
        assert_relative_eq!(
            empirical_pvalue(&matching, &exc_reps).unwrap(),
            2.0 / 3.0,
            max_relative = 1e-15
        );
    }
}
