//! Power lower bounds for the three tests, alternative-hypothesis moment
//! machinery, sparsity estimation, and data-driven threshold selection for
//! the exceedance statistic.
//!
//! Alternatives are parameterized on the Fisher-transform scale: pair `t`
//! carries an effect `δ_t = |g(r2_t) − g(r1_t)|`, so its standardized
//! difference behaves like a normal with unit variance and mean
//! `d_t = δ_t √(n−3)`. The bounds are Chernoff-style: each test's rejection
//! probability under the alternative is at least `1 − exp(−ratio²/2)` where
//! `ratio` standardizes the gap between the alternative mean of the
//! statistic and its null rejection point.
//!
//! Threshold selection integrates the exceedance ratio over a gamma prior
//! on `δ` (mode anchored at the null upper-α point of `d̂_t/√(n−3)`), scans
//! a `u`-grid for the argmax, and caps the result at `z_{1−α}` to guard
//! against unbounded thresholds when the signal proportion is tiny.

use rayon::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::null::exceedance_null_independent;
use crate::numeric::{norm_cdf, norm_pdf, norm_ppf, norm_sf, CompensatedSum};
use crate::stats::{ExceedanceConfig, ExceedanceWeight};

/// Probability floor for the exceedance rate under the alternative; values
/// below it are clamped and flagged rather than allowed to reach zero.
pub const ETA_FLOOR: f64 = 1e-300;

/// Grid step for the threshold scan.
const U_GRID_STEP: f64 = 0.01;

/// Quadrature order for integrating over the signal prior.
const QUADRATURE_POINTS: usize = 512;

/// Prior tail mass excluded on each side of the quadrature range.
const QUADRATURE_TAIL: f64 = 1e-4;

// ---------------------------------------------------------------------------
// Alternative specification
// ---------------------------------------------------------------------------

/// The alternative hypothesis: which pairs carry signal and how strong it
/// is on the Fisher-transform scale.
#[derive(Debug, Clone)]
pub enum AlternativeSpec {
    /// Every non-null magnitude listed explicitly; `s` is the length.
    Explicit { deltas: Vec<f64> },
    /// `s` non-null pairs with magnitudes described by a prior
    /// distribution rather than listed individually.
    Prior { prior: GammaPrior, s: usize },
}

impl AlternativeSpec {
    /// An explicit alternative from per-pair magnitudes.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidSignal`] for a negative or non-finite magnitude.
    pub fn explicit(deltas: Vec<f64>) -> Result<Self> {
        for &d in &deltas {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidSignal { value: d });
            }
        }
        Ok(Self::Explicit { deltas })
    }

    /// An alternative with `s` signals drawn from `prior`.
    pub fn from_prior(prior: GammaPrior, s: usize) -> Self {
        Self::Prior { prior, s }
    }

    /// Number of non-null pairs `s`.
    pub fn s(&self) -> usize {
        match self {
            Self::Explicit { deltas } => deltas.len(),
            Self::Prior { s, .. } => *s,
        }
    }

    /// Signal proportion `ρ_s = s/m`.
    pub fn rho_s(&self, m: usize) -> f64 {
        self.s() as f64 / m as f64
    }

    /// The explicit magnitudes.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidConfig`] when the alternative is prior-specified.
    pub fn deltas(&self) -> Result<&[f64]> {
        match self {
            Self::Explicit { deltas } => Ok(deltas),
            Self::Prior { .. } => Err(Error::InvalidConfig(
                "this operation needs explicit signal magnitudes, not a prior".to_string(),
            )),
        }
    }

    /// Total squared signal `δ0² = Σ δ_t²`.
    ///
    /// # Errors
    ///
    /// As [`AlternativeSpec::deltas`].
    pub fn delta0_sq(&self) -> Result<f64> {
        Ok(compensated(self.deltas()?.iter().map(|d| d * d)))
    }

    fn extreme_delta(&self, smallest: bool) -> Result<f64> {
        let deltas = self.deltas()?;
        if deltas.is_empty() {
            return Err(Error::EmptyInput {
                what: "alternative signal magnitudes",
            });
        }
        Ok(deltas.iter().copied().fold(
            if smallest {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            if smallest { f64::min } else { f64::max },
        ))
    }
}

fn compensated<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

// ---------------------------------------------------------------------------
// Gamma prior on signal magnitudes
// ---------------------------------------------------------------------------

/// Gamma prior for the Fisher-scale magnitudes `δ_t`, in shape/rate form.
///
/// The anchored construction places the mode at `z_α/√(n−3)` — the null
/// upper-α point of `d̂_t/√(n−3)` — and sets the variance to `mode²` by
/// default, which fixes the shape at `(3 + √5)/2 ≈ 2.618` for every `n`.
#[derive(Debug, Clone, Copy)]
pub struct GammaPrior {
    shape: f64,
    rate: f64,
    alpha_mode: Option<f64>,
}

impl GammaPrior {
    /// A prior from explicit shape and rate.
    ///
    /// # Errors
    ///
    /// [`Error::DegeneratePrior`] unless `shape > 1` (the prior must have
    /// an interior mode); [`Error::InvalidPrior`] for a non-positive rate.
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 1.0) {
            return Err(Error::DegeneratePrior { shape });
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidPrior { shape, rate });
        }
        Ok(Self {
            shape,
            rate,
            alpha_mode: None,
        })
    }

    /// A prior from its mode and variance: `rate = (mode + √(mode² + 4·var))
    /// / (2·var)` and `shape = 1 + mode·rate`.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidPrior`] for non-positive mode or variance.
    pub fn from_mode_and_variance(mode: f64, variance: f64) -> Result<Self> {
        if !(mode.is_finite() && mode > 0.0 && variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidPrior {
                shape: mode,
                rate: variance,
            });
        }
        let rate = (mode + (mode * mode + 4.0 * variance).sqrt()) / (2.0 * variance);
        Self::new(1.0 + mode * rate, rate)
    }

    /// The default data-size-anchored prior: mode `z_α/√(n−3)`, variance
    /// `mode²`.
    ///
    /// # Errors
    ///
    /// [`Error::TooFewSamples`] for `n < 4`; [`Error::InvalidLevel`] unless
    /// `0 < α < 1/2`.
    pub fn anchored(n: usize, alpha: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::TooFewSamples { n, min: 4 });
        }
        check_bound_level(alpha)?;
        let mode = norm_ppf(1.0 - alpha) / ((n - 3) as f64).sqrt();
        let mut prior = Self::from_mode_and_variance(mode, mode * mode)?;
        prior.alpha_mode = Some(alpha);
        Ok(prior)
    }

    /// Shape parameter `a`.
    pub fn shape(&self) -> f64 {
        self.shape
    }

    /// Rate parameter `b`.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// The level used to pin the mode, when anchored.
    pub fn alpha_mode(&self) -> Option<f64> {
        self.alpha_mode
    }

    /// The mode `(a − 1)/b`.
    pub fn mode(&self) -> f64 {
        (self.shape - 1.0) / self.rate
    }

    /// The variance `a/b²`.
    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    fn distribution(&self) -> Gamma {
        Gamma::new(self.shape, self.rate).expect("parameters validated at construction")
    }

    /// The `p`-quantile.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidLevel`] unless `0 < p < 1`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p.is_finite() && p > 0.0 && p < 1.0) {
            return Err(Error::InvalidLevel { alpha: p });
        }
        Ok(self.distribution().inverse_cdf(p))
    }

    /// The density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.distribution().pdf(x)
        }
    }
}

// ---------------------------------------------------------------------------
// Alternative-hypothesis exceedance moments
// ---------------------------------------------------------------------------

/// Exceedance behavior of one pair under the alternative: the probability
/// `η_t` that `|d̂_t|` clears the threshold, and the conditional mean and
/// variance of its contribution `(|d̂_t| − uw)²` given that it does.
#[derive(Debug, Clone, Copy)]
pub struct H1Moments {
    eta: f64,
    mu: f64,
    sigma2: f64,
    eta_clamped: bool,
}

impl H1Moments {
    /// Exceedance probability `η_t = Φ(d−u) + Φ(−d−u)`.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Conditional mean `μ_{t_w}` of the exceedance contribution.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Conditional variance `σ²_{t_w}` of the exceedance contribution.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// True when `η_t` underflowed and was clamped at [`ETA_FLOOR`].
    pub fn eta_clamped(&self) -> bool {
        self.eta_clamped
    }
}

/// Moments of the truncated shifted normal behind the exceedance test
/// under the alternative: for `X ~ N(d, 1)`, the probability of
/// `|X| > u` and the conditional mean/variance of `(|X| − uw)²`.
///
/// Uses the upper-truncated moment recursion
/// `M_k = μ M_{k−1} + (k−1) M_{k−2} + u^{k−1} φ(u−μ)` on each tail
/// (`μ = ±d`), so the results are exact up to normal-CDF accuracy for any
/// `d` and `u`. At `d = 0` it reduces to the null per-exceedance moments.
///
/// # Errors
///
/// [`Error::InvalidThreshold`] for negative or non-finite `u`;
/// [`Error::InvalidSignal`] for non-finite `d`.
pub fn h1_truncated_moments(d: f64, u: f64, w: ExceedanceWeight) -> Result<H1Moments> {
    if !u.is_finite() || u < 0.0 {
        return Err(Error::InvalidThreshold { u });
    }
    if !d.is_finite() {
        return Err(Error::InvalidSignal { value: d });
    }
    let c = w.offset(u);
    let mut eta = 0.0;
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for tail_mean in [d, -d] {
        let m0 = norm_cdf(tail_mean - u);
        let phi = norm_pdf(u - tail_mean);
        let m1 = tail_mean * m0 + phi;
        let m2 = tail_mean * m1 + m0 + u * phi;
        let m3 = tail_mean * m2 + 2.0 * m1 + u * u * phi;
        let m4 = tail_mean * m3 + 3.0 * m2 + u * u * u * phi;
        eta += m0;
        e1 += m2 - 2.0 * c * m1 + c * c * m0;
        e2 += m4 - 4.0 * c * m3 + 6.0 * c * c * m2 - 4.0 * c * c * c * m1 + c * c * c * c * m0;
    }
    let eta_clamped = eta < ETA_FLOOR;
    let eta_safe = eta.max(ETA_FLOOR);
    let mu = e1 / eta_safe;
    // Guard the conditional variance against cancellation in the far tail.
    let sigma2 = (e2 / eta_safe - mu * mu).max(0.0);
    Ok(H1Moments {
        eta: eta_safe,
        mu,
        sigma2,
        eta_clamped,
    })
}

/// Variance of the exceedance statistic under an explicit alternative,
/// `σ²_{H1} = Σ_t η_t{(1−η_t)μ²_{t_w} + σ²_{t_w}}
///           + (m−s) η0 {(1−η0)μ²_w + σ²_w}`,
/// with the cross-pair dependence term set to zero (weak-independence
/// regime). The null parameters `(η0, μ_w, σ²_w)` and the configuration
/// come from `null`, which should be the independence-regime exceedance
/// null for the same `m`.
///
/// # Errors
///
/// [`Error::InvalidConfig`] for a prior-specified alternative;
/// [`Error::TooFewSamples`] for `n < 4`; [`Error::TooManySignals`] if the
/// alternative has more signals than pairs.
pub fn sigma_h1(
    alt: &AlternativeSpec,
    n: usize,
    null: &crate::null::ExceedanceNull,
) -> Result<f64> {
    let deltas = alt.deltas()?;
    if n < 4 {
        return Err(Error::TooFewSamples { n, min: 4 });
    }
    let m = null.m();
    let s = deltas.len();
    if s > m {
        return Err(Error::TooManySignals { s, m });
    }
    let cfg = null.config();
    let scale = ((n - 3) as f64).sqrt();
    let mut signal_var = CompensatedSum::new();
    for &delta in deltas {
        let h1 = h1_truncated_moments(delta * scale, cfg.u(), cfg.weight())?;
        signal_var.add(h1.eta() * ((1.0 - h1.eta()) * h1.mu() * h1.mu() + h1.sigma2()));
    }
    let (mu_w, sigma2_w) = null.per_exceedance_moments();
    let eta0 = null.eta0();
    let null_var =
        (m - s) as f64 * eta0 * ((1.0 - eta0) * mu_w * mu_w + sigma2_w);
    Ok(signal_var.value() + null_var)
}

// ---------------------------------------------------------------------------
// Power lower bounds
// ---------------------------------------------------------------------------

/// Result of a power lower-bound evaluation.
///
/// `z_ratio` is the standardized argument of the bound (the theorem's `A`,
/// the extreme-value gap on the z-scale, or `B`); `condition_met` records
/// whether the theorem's applicability condition held. The bound `value` is
/// present whenever the printed formula evaluates (it is `None` only for
/// the growing-signal extreme-value branch when its condition fails, where
/// no bound is defined).
#[derive(Debug, Clone, Copy)]
pub struct BoundOutcome {
    value: Option<f64>,
    z_ratio: f64,
    condition_met: bool,
}

impl BoundOutcome {
    /// The lower bound on power, in `[0, 1]`.
    pub fn value(&self) -> Option<f64> {
        self.value
    }

    /// The standardized bound argument (signed).
    pub fn z_ratio(&self) -> f64 {
        self.z_ratio
    }

    /// Whether the theorem's condition held for this configuration.
    pub fn condition_met(&self) -> bool {
        self.condition_met
    }
}

/// `1 − exp(−ratio²/2)` for a positive standardized gap; zero otherwise
/// (a formula symmetric in `ratio` would break monotonicity in the signal,
/// and a non-positive gap only supports the trivial bound).
fn chernoff(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        0.0
    } else {
        (-(-(ratio * ratio) / 2.0).exp_m1()).clamp(0.0, 1.0)
    }
}

fn check_bound_level(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidLevel { alpha });
    }
    Ok(())
}

/// Power lower bound for the average-of-squares test:
/// `1 − exp(−A²/2)` with
/// `A = {(n−3)δ0²/m − z_α √((2/m)(1 + (m−1)γ̄2/2))}
///     / {m^{−1/2}(2 + 4s(n−3)δ0²/m + (m−1)γ̄2')^{1/2}}`,
/// applicable when `δ0² > z_α √(2m) (1 + (m−1)γ̄2/2)^{1/2}/(n−3)`.
///
/// `gamma2bar` is the average cross-pair covariance of squared differences
/// under the null and `gamma2bar_h1` its alternative-hypothesis analogue.
/// A violated condition sets the flag; the printed formula is still
/// evaluated.
///
/// # Errors
///
/// Validation only: sample/level/signal-count checks and non-finite
/// covariance inputs. Condition failure is a flag, not an error.
pub fn power_bound_squares(
    alt: &AlternativeSpec,
    n: usize,
    m: usize,
    gamma2bar: f64,
    gamma2bar_h1: f64,
    alpha: f64,
) -> Result<BoundOutcome> {
    check_bound_level(alpha)?;
    if n < 4 {
        return Err(Error::TooFewSamples { n, min: 4 });
    }
    if m == 0 {
        return Err(Error::EmptyInput { what: "pair count" });
    }
    let s = alt.s();
    if s > m {
        return Err(Error::TooManySignals { s, m });
    }
    let delta0_sq = alt.delta0_sq()?;
    let mf = m as f64;
    let nf = (n - 3) as f64;
    let z = norm_ppf(1.0 - alpha);

    let null_brace = 1.0 + (mf - 1.0) * gamma2bar / 2.0;
    let alt_brace = 2.0 + 4.0 * s as f64 * nf * delta0_sq / mf + (mf - 1.0) * gamma2bar_h1;
    if !(null_brace >= 0.0 && alt_brace > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "cross-pair covariances gamma2bar = {gamma2bar}, gamma2bar_h1 = {gamma2bar_h1} \
             make a variance bracket negative"
        )));
    }

    let condition_met = delta0_sq > z * (2.0 * mf).sqrt() * null_brace.sqrt() / nf;
    let numerator = nf * delta0_sq / mf - z * ((2.0 / mf) * null_brace).sqrt();
    let denominator = alt_brace.sqrt() / mf.sqrt();
    let ratio = numerator / denominator;
    Ok(BoundOutcome {
        value: Some(chernoff(ratio)),
        z_ratio: ratio,
        condition_met,
    })
}

/// Which extreme-value bound branch to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxBoundBranch {
    /// Bounded signal count: driven by the largest magnitude,
    /// `1 − exp{−(n−3)/2 · (max δ_t − √(2 log(2m)/(n−3)))²}`.
    FixedSignalCount,
    /// Growing signal count: driven by the smallest magnitude,
    /// `1 − exp{−exp{√(2(n−3) log 2s) · (min δ_t − √(2 log(2m)/(n−3)))}}`.
    GrowingSignalCount,
}

/// Power lower bound for the extreme-value test.
///
/// Both branches share the applicability condition that the driving
/// magnitude exceeds
/// `{√(2 log 2m) − log(−log α)/√(2 log 2m)}/√(n−3)` (the rejection point on
/// the `δ`-scale). For the fixed-count branch a violated condition sets the
/// flag but the formula still evaluates; the growing-count branch returns
/// no bound value when its condition fails.
///
/// # Errors
///
/// Validation only (sample size, level, empty alternative).
pub fn power_bound_max(
    alt: &AlternativeSpec,
    n: usize,
    m: usize,
    alpha: f64,
    branch: MaxBoundBranch,
) -> Result<BoundOutcome> {
    check_bound_level(alpha)?;
    if n < 4 {
        return Err(Error::TooFewSamples { n, min: 4 });
    }
    if m == 0 {
        return Err(Error::EmptyInput { what: "pair count" });
    }
    let nf = (n - 3) as f64;
    let root_2log2m = (2.0 * (2.0 * m as f64).ln()).sqrt();
    let rejection_delta = (root_2log2m - (-alpha.ln()).ln() / root_2log2m) / nf.sqrt();

    match branch {
        MaxBoundBranch::FixedSignalCount => {
            let delta = alt.extreme_delta(false)?;
            let gap = delta - root_2log2m / nf.sqrt();
            let z_ratio = nf.sqrt() * gap;
            Ok(BoundOutcome {
                value: Some(chernoff(z_ratio)),
                z_ratio,
                condition_met: delta > rejection_delta,
            })
        }
        MaxBoundBranch::GrowingSignalCount => {
            let delta = alt.extreme_delta(true)?;
            let s = alt.s() as f64;
            let gap = delta - root_2log2m / nf.sqrt();
            let exponent = (2.0 * nf * (2.0 * s).ln()).sqrt() * gap;
            let condition_met = delta > rejection_delta;
            let value = if condition_met {
                Some((-(-exponent.exp()).exp_m1()).clamp(0.0, 1.0))
            } else {
                None
            };
            Ok(BoundOutcome {
                value,
                z_ratio: exponent,
                condition_met,
            })
        }
    }
}

/// Power lower bound for the exceedance test: `1 − exp(−B²/2)` with
/// `B = {Σ_t μ_{t_w} η_t − s η0 μ_w − z_α σ(m,w)} / σ_{H1}(m,w)`,
/// applicable when `Σ_t μ_{t_w} η_t > s η0 μ_w − z_α σ(m,w)`. The null
/// scale `σ(m,w)` uses the independence-regime variance and `σ_{H1}` comes
/// from [`sigma_h1`].
///
/// # Errors
///
/// [`Error::ThresholdOutOfRange`] unless `u < √(2 log 2m)` (necessary for
/// the normal approximation), plus validation as in the other bounds.
/// Condition failure is a flag, not an error.
pub fn power_bound_exceed(
    alt: &AlternativeSpec,
    u: f64,
    w: ExceedanceWeight,
    n: usize,
    m: usize,
    alpha: f64,
) -> Result<BoundOutcome> {
    check_bound_level(alpha)?;
    if n < 4 {
        return Err(Error::TooFewSamples { n, min: 4 });
    }
    let max_u = (2.0 * (2.0 * m as f64).ln()).sqrt();
    if !(u < max_u) {
        return Err(Error::ThresholdOutOfRange { u, max: max_u });
    }
    let deltas = alt.deltas()?;
    let s = deltas.len();
    if s > m {
        return Err(Error::TooManySignals { s, m });
    }

    let cfg = ExceedanceConfig::new(u, w)?;
    let null = exceedance_null_independent(m, cfg)?;
    let (mu_w, _) = null.per_exceedance_moments();
    let eta0 = null.eta0();
    let sigma_null = null.variance().sqrt();
    let z = norm_ppf(1.0 - alpha);
    let scale = ((n - 3) as f64).sqrt();

    let mut signal_mean = CompensatedSum::new();
    for &delta in deltas {
        let h1 = h1_truncated_moments(delta * scale, u, w)?;
        signal_mean.add(h1.mu() * h1.eta());
    }
    let signal_mean = signal_mean.value();
    let variance_h1 = sigma_h1(alt, n, &null)?;
    if !(variance_h1 > 0.0) {
        return Err(Error::InvalidMoments {
            mu2: signal_mean,
            mu4: f64::NAN,
            variance: variance_h1,
        });
    }

    let numerator = signal_mean - s as f64 * eta0 * mu_w - z * sigma_null;
    let condition_met = signal_mean > s as f64 * eta0 * mu_w - z * sigma_null;
    let ratio = numerator / variance_h1.sqrt();
    Ok(BoundOutcome {
        value: Some(chernoff(ratio)),
        z_ratio: ratio,
        condition_met,
    })
}

// ---------------------------------------------------------------------------
// Sparsity estimation
// ---------------------------------------------------------------------------

/// Estimates the proportion of non-null pairs from per-pair p-values
/// (typically `2(1 − Φ(|d̂_t|))`) as `ρ̂_s = 1 − π̂0`, where `π̂0` is the
/// Storey null-proportion estimator: `π̂0(λ) = #{p > λ}/(m(1 − λ))` over
/// the grid `λ ∈ {0, 0.05, …, 0.95}`, smoothed by a cubic least-squares
/// fit evaluated at the grid maximum and clipped to `[0, 1]`.
///
/// # Errors
///
/// [`Error::EmptyInput`] for no p-values; [`Error::InvalidPValue`] for a
/// p-value outside `[0, 1]`.
pub fn estimate_rho_s(pvalues: &[f64]) -> Result<f64> {
    if pvalues.is_empty() {
        return Err(Error::EmptyInput { what: "p-values" });
    }
    for &p in pvalues {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidPValue { value: p });
        }
    }
    let m = pvalues.len() as f64;
    let mut sorted = pvalues.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);

    let lambdas: Vec<f64> = (0..20).map(|j| 0.05 * j as f64).collect();
    let pi0s: Vec<f64> = lambdas
        .iter()
        .map(|&lambda| {
            let above = sorted.len() - sorted.partition_point(|&p| p <= lambda);
            above as f64 / (m * (1.0 - lambda))
        })
        .collect();

    // Cubic least-squares smoother, evaluated at the largest lambda.
    let center = 0.475;
    let coeffs = cubic_fit(
        &lambdas.iter().map(|l| l - center).collect::<Vec<_>>(),
        &pi0s,
    );
    let x = 0.95 - center;
    let pi0 = coeffs[0] + coeffs[1] * x + coeffs[2] * x * x + coeffs[3] * x * x * x;
    Ok((1.0 - pi0.clamp(0.0, 1.0)).clamp(0.0, 1.0))
}

/// Least-squares cubic fit via the 4×4 normal equations.
fn cubic_fit(xs: &[f64], ys: &[f64]) -> [f64; 4] {
    let mut xt_x = [[0.0_f64; 4]; 4];
    let mut xt_y = [0.0_f64; 4];
    for (&x, &y) in xs.iter().zip(ys) {
        let powers = [1.0, x, x * x, x * x * x];
        for i in 0..4 {
            for j in 0..4 {
                xt_x[i][j] += powers[i] * powers[j];
            }
            xt_y[i] += powers[i] * y;
        }
    }
    solve4(&mut xt_x, &mut xt_y);
    xt_y
}

/// In-place Gaussian elimination with partial pivoting on a 4×4 system.
fn solve4(a: &mut [[f64; 4]; 4], b: &mut [f64; 4]) {
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..4).rev() {
        for k in col + 1..4 {
            b[col] -= a[col][k] * b[k];
        }
        b[col] /= a[col][col];
    }
}

// ---------------------------------------------------------------------------
// Threshold selection
// ---------------------------------------------------------------------------

/// Result of the threshold scan: the argmax of the integrated bound
/// argument, and the final estimate after capping at `z_{1−α}`.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdSelection {
    u_optimal: Option<f64>,
    u_final: f64,
}

impl ThresholdSelection {
    /// The uncapped argmax of the integrated bound argument over the
    /// `u`-grid; `None` when the scan was degenerate (no signal mass, or
    /// no finite objective anywhere).
    pub fn u_optimal(&self) -> Option<f64> {
        self.u_optimal
    }

    /// The final threshold estimate: `min(u_optimal, z_{1−α})`, or the cap
    /// itself when the scan was degenerate.
    pub fn u_final(&self) -> f64 {
        self.u_final
    }
}

/// Selects the exceedance threshold by maximizing the prior-integrated
/// power-bound argument `∫ B(δ, mρ̂_s, u, n, m, w) p(δ) dδ` over a `u`-grid
/// of step 0.01 on `[0, √(2 log 2m))`, with 512-point Gauss–Legendre
/// quadrature over the prior's central mass. Ties resolve to the smallest
/// `u`. The final estimate is capped at `z_{1−α}` to prevent runaway
/// thresholds; when `ρ̂_s·m < 1` there is no signal mass to integrate and
/// the cap is returned directly.
///
/// # Errors
///
/// [`Error::TooFewSamples`], [`Error::EmptyInput`],
/// [`Error::InvalidProportion`], or [`Error::InvalidLevel`] on bad inputs.
/// (A degenerate prior is rejected at [`GammaPrior`] construction.)
pub fn select_threshold(
    n: usize,
    m: usize,
    rho_s_hat: f64,
    w: ExceedanceWeight,
    prior: &GammaPrior,
    alpha: f64,
) -> Result<ThresholdSelection> {
    select_threshold_with_step(n, m, rho_s_hat, w, prior, alpha, U_GRID_STEP)
}

pub(crate) fn select_threshold_with_step(
    n: usize,
    m: usize,
    rho_s_hat: f64,
    w: ExceedanceWeight,
    prior: &GammaPrior,
    alpha: f64,
    step: f64,
) -> Result<ThresholdSelection> {
    if n < 4 {
        return Err(Error::TooFewSamples { n, min: 4 });
    }
    if m == 0 {
        return Err(Error::EmptyInput { what: "pair count" });
    }
    if !(0.0..=1.0).contains(&rho_s_hat) {
        return Err(Error::InvalidProportion { value: rho_s_hat });
    }
    check_bound_level(alpha)?;

    let z_cap = norm_ppf(1.0 - alpha);
    let mf = m as f64;
    let s_real = rho_s_hat * mf;
    if s_real < 1.0 {
        return Ok(ThresholdSelection {
            u_optimal: None,
            u_final: z_cap,
        });
    }

    // Quadrature nodes over the prior's central mass, fixed across the grid.
    let lo = prior.quantile(QUADRATURE_TAIL)?;
    let hi = prior.quantile(1.0 - QUADRATURE_TAIL)?;
    let mid = 0.5 * (hi + lo);
    let half = 0.5 * (hi - lo);
    let scale = ((n - 3) as f64).sqrt();
    let nodes: Vec<(f64, f64)> = crate::numeric::gauss_legendre(QUADRATURE_POINTS)
        .into_iter()
        .map(|(x, wt)| {
            let delta = mid + half * x;
            (delta * scale, wt * half * prior.density(delta))
        })
        .collect();

    let u_max = (2.0 * (2.0 * mf).ln()).sqrt();
    let steps = (u_max / step).ceil() as usize;
    let grid: Vec<f64> = (0..steps)
        .map(|k| k as f64 * step)
        .filter(|&u| u < u_max)
        .collect();

    let objectives: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&u| {
            let objective = integrated_ratio(u, w, s_real, mf, z_cap, &nodes);
            (u, objective)
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for &(u, value) in &objectives {
        if !value.is_finite() {
            continue;
        }
        match best {
            Some((_, best_value)) if value <= best_value => {}
            _ => best = Some((u, value)),
        }
    }
    Ok(match best {
        Some((u_optimal, _)) => ThresholdSelection {
            u_optimal: Some(u_optimal),
            u_final: u_optimal.min(z_cap),
        },
        None => ThresholdSelection {
            u_optimal: None,
            u_final: z_cap,
        },
    })
}

/// The prior-integrated bound argument at one threshold: quadrature over
/// `B(δ) p(δ)` with a real-valued signal count `s = mρ̂_s`.
fn integrated_ratio(
    u: f64,
    w: ExceedanceWeight,
    s_real: f64,
    mf: f64,
    z: f64,
    nodes: &[(f64, f64)],
) -> f64 {
    let Ok((mu_w, sigma2_w)) = crate::null::exceedance_moments(u, w) else {
        return f64::NAN;
    };
    let eta0 = 2.0 * norm_sf(u);
    let null_unit = eta0 * ((1.0 - eta0) * mu_w * mu_w + sigma2_w);
    let sigma_null = (mf * null_unit).sqrt();
    let mut acc = CompensatedSum::new();
    for &(d, weight) in nodes {
        let Ok(h1) = h1_truncated_moments(d, u, w) else {
            return f64::NAN;
        };
        let numerator = s_real * (h1.mu() * h1.eta() - eta0 * mu_w) - z * sigma_null;
        let var_h1 = s_real * h1.eta() * ((1.0 - h1.eta()) * h1.mu() * h1.mu() + h1.sigma2())
            + (mf - s_real) * null_unit;
        if !(var_h1 > 0.0) {
            return f64::NAN;
        }
        acc.add(weight * numerator / var_h1.sqrt());
    }
    acc.value()
}
