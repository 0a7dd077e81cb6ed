//! Single-dataset analysis: runs a configured battery of statistics and
//! null regimes on one paired dataset and reports statistics, p-values,
//! the selected exceedance threshold, and the fitted extremal index.
//!
//! This is the shared engine behind both the simulation harness and the
//! batch gene-set pipeline: correlation estimation feeds the standardized
//! differences once, permutation replicates are drawn once and reused by
//! every dependence-corrected and non-parametric request, and the
//! exceedance threshold is chosen once per dataset from the observed
//! differences.

use crate::corr::{pearson_correlations, standardized_differences, PairedDataset};
use crate::error::{Error, Result};
use crate::null::{
    empirical_pvalue, exceedance_null_independent, exceedance_pvalue, gumbel_pvalue,
    squares_pvalue, GumbelNull, SquaresNull,
};
use crate::numeric::norm_sf;
use crate::perm::{
    estimate_squares_params, fit_exceedance_variance, fit_gumbel_null, paired_permute,
    replicate_statistics,
};
use crate::power::{estimate_rho_s, select_threshold, GammaPrior, ThresholdSelection};
use crate::stats::{
    t_exceed, t_max, t_squares, ExceedanceConfig, ExceedanceWeight, ReplicateStats, StatisticKind,
    StatisticValue,
};

/// How the null distribution of a statistic is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NullRegime {
    /// Closed-form null assuming linearly independent differences.
    AsymptoticIndependence,
    /// Closed-form family with dependence parameters fitted from permuted
    /// samples.
    AsymptoticDependence,
    /// Empirical null from the permutation replicates directly.
    NonParametric,
}

impl std::fmt::Display for NullRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NullRegime::AsymptoticIndependence => "AI",
            NullRegime::AsymptoticDependence => "AD",
            NullRegime::NonParametric => "NP",
        })
    }
}

/// How the exceedance threshold is chosen for a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// Data-driven selection from the observed differences (sparsity
    /// estimate, anchored prior, integrated power argument).
    Auto,
    /// A fixed threshold supplied by the caller.
    Fixed(f64),
}

/// One statistic/regime combination to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestRequest {
    kind: StatisticKind,
    regime: NullRegime,
}

impl TestRequest {
    /// A request for `kind` evaluated under `regime`.
    pub fn new(kind: StatisticKind, regime: NullRegime) -> Self {
        Self { kind, regime }
    }

    /// The statistic.
    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    /// The null regime.
    pub fn regime(&self) -> NullRegime {
        self.regime
    }
}

/// Full configuration for analyzing one dataset.
#[derive(Debug, Clone)]
pub struct AnalysisPlan {
    tests: Vec<TestRequest>,
    b: usize,
    alpha: f64,
    weight: ExceedanceWeight,
    threshold: ThresholdRule,
    seed: u64,
}

impl AnalysisPlan {
    /// A plan evaluating `tests` with `b` permutation replicates at level
    /// `alpha`, with permutations seeded by `seed`. The exceedance weight
    /// defaults to `w = 0` and the threshold to data-driven selection.
    ///
    /// # Errors
    ///
    /// [`Error::EmptyInput`] for an empty battery;
    /// [`Error::InvalidLevel`] unless `0 < alpha < 1`.
    pub fn new(tests: Vec<TestRequest>, b: usize, alpha: f64, seed: u64) -> Result<Self> {
        if tests.is_empty() {
            return Err(Error::EmptyInput {
                what: "test requests",
            });
        }
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidLevel { alpha });
        }
        Ok(Self {
            tests,
            b,
            alpha,
            weight: ExceedanceWeight::Uncentered,
            threshold: ThresholdRule::Auto,
            seed,
        })
    }

    /// Replaces the exceedance weight.
    pub fn with_weight(mut self, weight: ExceedanceWeight) -> Self {
        self.weight = weight;
        self
    }

    /// Replaces the threshold rule.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidThreshold`] for a fixed threshold that is negative
    /// or non-finite.
    pub fn with_threshold(mut self, threshold: ThresholdRule) -> Result<Self> {
        if let ThresholdRule::Fixed(u) = threshold {
            if !u.is_finite() || u < 0.0 {
                return Err(Error::InvalidThreshold { u });
            }
        }
        self.threshold = threshold;
        Ok(self)
    }

    /// Replaces the permutation seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The requested statistic/regime combinations.
    pub fn tests(&self) -> &[TestRequest] {
        &self.tests
    }

    /// Permutation replicate count.
    pub fn b(&self) -> usize {
        self.b
    }

    /// Significance level (drives threshold selection and its cap).
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Exceedance weight.
    pub fn weight(&self) -> ExceedanceWeight {
        self.weight
    }

    /// Threshold rule.
    pub fn threshold(&self) -> ThresholdRule {
        self.threshold
    }

    /// Permutation seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn needs_exceedance(&self) -> bool {
        self.tests
            .iter()
            .any(|t| t.kind == StatisticKind::Exceedance)
    }

    fn needs_permutations(&self) -> bool {
        self.tests
            .iter()
            .any(|t| t.regime != NullRegime::AsymptoticIndependence)
    }
}

/// Outcome of one statistic/regime evaluation.
#[derive(Debug, Clone, Copy)]
pub struct TestResult {
    kind: StatisticKind,
    regime: NullRegime,
    statistic: f64,
    p_value: f64,
    u_used: Option<f64>,
    theta_hat: Option<f64>,
}

impl TestResult {
    /// The statistic.
    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    /// The null regime.
    pub fn regime(&self) -> NullRegime {
        self.regime
    }

    /// Observed statistic value.
    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    /// The p-value under the requested regime.
    pub fn p_value(&self) -> f64 {
        self.p_value
    }

    /// The exceedance threshold used (exceedance requests only).
    pub fn u_used(&self) -> Option<f64> {
        self.u_used
    }

    /// The fitted extremal index (extreme-value requests under the
    /// dependence-corrected regime only).
    pub fn theta_hat(&self) -> Option<f64> {
        self.theta_hat
    }
}

/// Everything measured on one dataset.
#[derive(Debug, Clone)]
pub struct DatasetAnalysis {
    results: Vec<TestResult>,
    n: usize,
    p: usize,
    m: usize,
    rho_s_hat: Option<f64>,
    selection: Option<ThresholdSelection>,
}

impl DatasetAnalysis {
    /// All evaluated combinations, in request order.
    pub fn results(&self) -> &[TestResult] {
        &self.results
    }

    /// The first result matching `kind` and `regime`.
    pub fn result(&self, kind: StatisticKind, regime: NullRegime) -> Option<&TestResult> {
        self.results
            .iter()
            .find(|r| r.kind == kind && r.regime == regime)
    }

    /// Sample size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Variable count.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Pair count.
    pub fn m(&self) -> usize {
        self.m
    }

    /// The estimated signal proportion (when the threshold was selected
    /// automatically).
    pub fn rho_s_hat(&self) -> Option<f64> {
        self.rho_s_hat
    }

    /// The threshold-selection outcome (when run).
    pub fn threshold_selection(&self) -> Option<ThresholdSelection> {
        self.selection
    }
}

fn kind_slot(kind: StatisticKind) -> usize {
    match kind {
        StatisticKind::Squares => 0,
        StatisticKind::Max => 1,
        StatisticKind::Exceedance => 2,
    }
}

/// Runs the full plan on one dataset.
///
/// Correlations, standardized differences, the selected threshold, and the
/// permutation replicates are each computed once and shared across all
/// requests; results appear in request order. Deterministic given the
/// dataset and the plan (including its seed), independent of thread count.
///
/// # Errors
///
/// Propagates estimation errors: degenerate data (zero-variance columns,
/// perfect within-condition correlations), insufficient permutation
/// replicates for a fit, or degenerate fitted moments.
pub fn analyze_dataset(data: &PairedDataset, plan: &AnalysisPlan) -> Result<DatasetAnalysis> {
    let estimates = pearson_correlations(data)?;
    let diffs = standardized_differences(&estimates)?;
    let n = data.n_samples();
    let p = data.n_variables();
    let m = diffs.len();

    // Exceedance configuration, selecting the threshold if asked to.
    let mut rho_s_hat = None;
    let mut selection = None;
    let exceed_cfg = if plan.needs_exceedance() {
        let u = match plan.threshold() {
            ThresholdRule::Fixed(u) => u,
            ThresholdRule::Auto => {
                let pair_pvalues: Vec<f64> =
                    diffs.d().iter().map(|&d| 2.0 * norm_sf(d.abs())).collect();
                let rho = estimate_rho_s(&pair_pvalues)?;
                let prior = GammaPrior::anchored(n, plan.alpha())?;
                let chosen = select_threshold(n, m, rho, plan.weight(), &prior, plan.alpha())?;
                rho_s_hat = Some(rho);
                selection = Some(chosen);
                chosen.u_final()
            }
        };
        Some(ExceedanceConfig::new(u, plan.weight())?)
    } else {
        None
    };

    let observed = |kind: StatisticKind| -> Result<StatisticValue> {
        match kind {
            StatisticKind::Squares => t_squares(&diffs),
            StatisticKind::Max => t_max(&diffs),
            StatisticKind::Exceedance => t_exceed(
                &diffs,
                exceed_cfg.expect("configuration prepared for exceedance requests"),
            ),
        }
    };

    // One permutation run feeds every AD fit and NP comparison.
    let matrix = if plan.needs_permutations() {
        Some(paired_permute(data, plan.b(), plan.seed())?)
    } else {
        None
    };
    let mut replicate_cache: [Option<ReplicateStats>; 3] = [None, None, None];
    for request in plan.tests() {
        if request.regime() == NullRegime::AsymptoticIndependence {
            continue;
        }
        let slot = kind_slot(request.kind());
        if replicate_cache[slot].is_none() {
            let cfg = match request.kind() {
                StatisticKind::Exceedance => exceed_cfg,
                _ => None,
            };
            let matrix = matrix.as_ref().expect("permutations drawn for this plan");
            replicate_cache[slot] = Some(replicate_statistics(matrix, request.kind(), cfg)?);
        }
    }

    // Fitted nulls are shared across requests of the same kind.
    let mut squares_fit: Option<SquaresNull> = None;
    let mut gumbel_fit: Option<GumbelNull> = None;
    let mut exceed_fit: Option<crate::null::ExceedanceNull> = None;

    let mut results = Vec::with_capacity(plan.tests().len());
    for request in plan.tests() {
        let stat = observed(request.kind())?;
        let mut theta_hat = None;
        let p_value = match request.regime() {
            NullRegime::AsymptoticIndependence => match request.kind() {
                StatisticKind::Squares => {
                    squares_pvalue(&stat, &SquaresNull::independence_limit(m)?)?
                }
                StatisticKind::Max => gumbel_pvalue(&stat, &GumbelNull::finite_sample(m)?)?,
                StatisticKind::Exceedance => {
                    let cfg = exceed_cfg.expect("configuration prepared above");
                    exceedance_pvalue(&stat, &exceedance_null_independent(m, cfg)?)?
                }
            },
            NullRegime::AsymptoticDependence => match request.kind() {
                StatisticKind::Squares => {
                    if squares_fit.is_none() {
                        let matrix = matrix.as_ref().expect("permutations drawn");
                        squares_fit = Some(estimate_squares_params(matrix)?);
                    }
                    squares_pvalue(&stat, squares_fit.as_ref().expect("cached above"))?
                }
                StatisticKind::Max => {
                    if gumbel_fit.is_none() {
                        let reps = replicate_cache[kind_slot(StatisticKind::Max)]
                            .as_ref()
                            .expect("cached above");
                        gumbel_fit = Some(fit_gumbel_null(reps, m)?);
                    }
                    let null = gumbel_fit.as_ref().expect("cached above");
                    theta_hat = Some(null.theta_m());
                    gumbel_pvalue(&stat, null)?
                }
                StatisticKind::Exceedance => {
                    if exceed_fit.is_none() {
                        let cfg = exceed_cfg.expect("configuration prepared above");
                        let backdrop = exceedance_null_independent(m, cfg)?;
                        let reps = replicate_cache[kind_slot(StatisticKind::Exceedance)]
                            .as_ref()
                            .expect("cached above");
                        exceed_fit = Some(fit_exceedance_variance(reps, &backdrop)?);
                    }
                    exceedance_pvalue(&stat, exceed_fit.as_ref().expect("cached above"))?
                }
            },
            NullRegime::NonParametric => {
                let reps = replicate_cache[kind_slot(request.kind())]
                    .as_ref()
                    .expect("cached above");
                empirical_pvalue(&stat, reps)?
            }
        };
        results.push(TestResult {
            kind: request.kind(),
            regime: request.regime(),
            statistic: stat.value(),
            p_value,
            u_used: stat.config().map(|cfg| cfg.u()),
            theta_hat,
        });
    }

    Ok(DatasetAnalysis {
        results,
        n,
        p,
        m,
        rho_s_hat,
        selection,
    })
}
