//! Synthetic data models and the replicated size/power harness.
//!
//! Two generator families exercise complementary failure modes of the
//! independence-based nulls:
//!
//! * **Dense model** — a rough, dense base correlation matrix (sample
//!   correlation of a few draws from a 3-factor model) is ridge-regularized
//!   and rescaled; the two conditions are sampled independently. Low ridge
//!   levels leave strong cross-pair dependence that inflates the size of
//!   independence-based tests.
//! * **Sparse model** — almost-block-diagonal precision matrices built on
//!   power-law (preferential-attachment) graphs, coupled across conditions
//!   through a diagonal cross-precision block, regularized until the joint
//!   condition number drops below the node count, and sampled jointly. The
//!   alternative rewires two trailing blocks so the conditions disagree on
//!   a sparse set of pairs.
//!
//! The harness replays a model over many replicates, runs a configured
//! battery of statistic/regime combinations on each, and reports rejection
//! rates, Kolmogorov–Smirnov uniformity of the p-values, and the mean
//! fitted extremal index.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::corr::PairedDataset;
use crate::error::{Error, Result};
use crate::numeric::{cholesky_lower, derive_seed, symmetric_eigenvalues};
use crate::pipeline::{analyze_dataset, AnalysisPlan, DatasetAnalysis, NullRegime, TestRequest, ThresholdRule};
use crate::stats::{ExceedanceWeight, StatisticKind};

/// Factors in the synthetic base-correlation model.
const FACTOR_COUNT: usize = 3;

/// Draws used to form the rough base correlation matrix.
const FACTOR_DRAWS: usize = 60;

/// Idiosyncratic noise scale in the factor model; calibrated so that the
/// base matrix is dense enough to stress independence-based nulls at low
/// ridge levels while keeping moderate ridge levels well behaved.
const DENSE_NOISE_SD: f64 = 0.6;

/// Within-block node count of the sparse model's power-law graphs.
const SPARSE_BLOCK: usize = 10;

/// Expected cross-block edges per node: each cross-block pair links with
/// probability `CROSS_RATE / dimension`.
const CROSS_RATE: f64 = 2.0;

/// Safety factor applied to the minimal condition-number ridge; keeps the
/// joint precision comfortably positive definite while preserving the
/// strong cross-pair dependence the sparse scenario is meant to exhibit.
const RIDGE_MULT: f64 = 1.6;

/// Default cross-condition precision coupling.
const SPARSE_CROSS_LINK: f64 = 0.6;

/// Attempts before giving up on sparse graph generation.
const MAX_GRAPH_ATTEMPTS: usize = 10;

// ---------------------------------------------------------------------------
// Model configurations
// ---------------------------------------------------------------------------

/// Which hypothesis a generated dataset realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Both conditions share one correlation structure.
    Null,
    /// The conditions differ on a structured set of pairs.
    Alternative,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Hypothesis::Null => "H0",
            Hypothesis::Alternative => "H1",
        })
    }
}

/// Configuration of the dense-correlation model.
#[derive(Debug, Clone)]
pub struct DenseModelConfig {
    p: usize,
    n: usize,
    lambda: f64,
    hypothesis: Hypothesis,
    block_sizes: (usize, usize),
    base_seed: u64,
}

impl DenseModelConfig {
    /// A dense-model configuration with ridge level `lambda`. Under the
    /// alternative the second condition is cut into two diagonal blocks of
    /// sizes `(p − 10, 10)` by default.
    ///
    /// # Errors
    ///
    /// [`Error::TooFewVariables`] / [`Error::TooFewSamples`] for degenerate
    /// shapes; [`Error::InvalidConfig`] for a non-positive ridge level or
    /// an alternative too small for the default block split.
    pub fn new(
        p: usize,
        n: usize,
        lambda: f64,
        hypothesis: Hypothesis,
        base_seed: u64,
    ) -> Result<Self> {
        if p < 2 {
            return Err(Error::TooFewVariables { p });
        }
        if n < 4 {
            return Err(Error::TooFewSamples { n, min: 4 });
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ridge level lambda = {lambda} must be positive and finite"
            )));
        }
        if hypothesis == Hypothesis::Alternative && p <= SPARSE_BLOCK {
            return Err(Error::InvalidConfig(format!(
                "the dense alternative needs p > {SPARSE_BLOCK} for its default block split"
            )));
        }
        Ok(Self {
            p,
            n,
            lambda,
            hypothesis,
            block_sizes: (p.saturating_sub(SPARSE_BLOCK), SPARSE_BLOCK),
            base_seed,
        })
    }

    /// Overrides the alternative's diagonal block sizes.
    ///
    /// # Errors
    ///
    /// [`Error::InvalidConfig`] unless both blocks are nonempty and sum to
    /// `p`.
    pub fn with_block_sizes(mut self, first: usize, second: usize) -> Result<Self> {
        if first == 0 || second == 0 || first + second != self.p {
            return Err(Error::InvalidConfig(format!(
                "block sizes ({first}, {second}) must be positive and sum to p = {}",
                self.p
            )));
        }
        self.block_sizes = (first, second);
        Ok(self)
    }

    /// Replaces the seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    /// Variable count.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Sample size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Ridge level.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Hypothesis realized by the generator.
    pub fn hypothesis(&self) -> Hypothesis {
        self.hypothesis
    }

    /// Diagonal block sizes used under the alternative.
    pub fn block_sizes(&self) -> (usize, usize) {
        self.block_sizes
    }

    /// The seed.
    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }
}

/// Configuration of the sparse precision-matrix model.
#[derive(Debug, Clone)]
pub struct SparseModelConfig {
    p: usize,
    n: usize,
    hypothesis: Hypothesis,
    cross_link_value: f64,
    seed: u64,
}

impl SparseModelConfig {
    /// A sparse-model configuration. The alternative replaces the two
    /// trailing ten-variable blocks, so it needs `p > 20`.
    ///
    /// # Errors
    ///
    /// [`Error::TooFewVariables`] / [`Error::TooFewSamples`] for degenerate
    /// shapes; [`Error::InvalidConfig`] for an alternative with `p <= 20`.
    pub fn new(p: usize, n: usize, hypothesis: Hypothesis, seed: u64) -> Result<Self> {
        if p < 2 {
            return Err(Error::TooFewVariables { p });
        }
        if n < 4 {
            return Err(Error::TooFewSamples { n, min: 4 });
        }
        if hypothesis == Hypothesis::Alternative && p <= 2 * SPARSE_BLOCK {
            return Err(Error::InvalidConfig(format!(
                "the sparse alternative needs p > {} to host its differential blocks",
                2 * SPARSE_BLOCK
            )));
        }
        Ok(Self {
            p,
            n,
            hypothesis,
            cross_link_value: SPARSE_CROSS_LINK,
            seed,
        })
    }

    /// Overrides the cross-condition coupling strength (zero decouples the
    /// two conditions entirely).
    ///
    /// # Errors
    ///
    /// [`Error::InvalidConfig`] for a non-finite value.
    pub fn with_cross_link(mut self, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cross-condition coupling {value} must be finite"
            )));
        }
        self.cross_link_value = value;
        Ok(self)
    }

    /// Replaces the seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Variable count per condition.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Sample size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Hypothesis realized by the generator.
    pub fn hypothesis(&self) -> Hypothesis {
        self.hypothesis
    }

    /// Cross-condition coupling strength.
    pub fn cross_link_value(&self) -> f64 {
        self.cross_link_value
    }

    /// The seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Any generator the harness can drive.
#[derive(Debug, Clone)]
pub enum ModelConfig {
    /// Independent standard-normal noise in both conditions (the trivially
    /// calibrated null model).
    IidNoise {
        /// Variable count per condition.
        p: usize,
        /// Sample size.
        n: usize,
        /// Generation seed.
        seed: u64,
    },
    /// The dense ridge-regularized correlation model.
    Dense(DenseModelConfig),
    /// The sparse power-law precision model.
    Sparse(SparseModelConfig),
}

impl ModelConfig {
    /// Generates one dataset.
    ///
    /// # Errors
    ///
    /// Shape validation; [`Error::GraphGeneration`] if the sparse model
    /// exhausts its retries.
    pub fn generate(&self) -> Result<PairedDataset> {
        match self {
            ModelConfig::IidNoise { p, n, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let x = standard_normal_matrix(*n, *p, &mut rng);
                let y = standard_normal_matrix(*n, *p, &mut rng);
                PairedDataset::new(x, y)
            }
            ModelConfig::Dense(cfg) => gen_dense(cfg),
            ModelConfig::Sparse(cfg) => gen_sparse(cfg),
        }
    }

    /// The same model with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            ModelConfig::IidNoise { p, n, .. } => ModelConfig::IidNoise { p: *p, n: *n, seed },
            ModelConfig::Dense(cfg) => ModelConfig::Dense(cfg.clone().with_seed(seed)),
            ModelConfig::Sparse(cfg) => ModelConfig::Sparse(cfg.clone().with_seed(seed)),
        }
    }

    /// The hypothesis the generated data realizes.
    pub fn hypothesis(&self) -> Hypothesis {
        match self {
            ModelConfig::IidNoise { .. } => Hypothesis::Null,
            ModelConfig::Dense(cfg) => cfg.hypothesis(),
            ModelConfig::Sparse(cfg) => cfg.hypothesis(),
        }
    }

    /// Variable count per condition.
    pub fn p(&self) -> usize {
        match self {
            ModelConfig::IidNoise { p, .. } => *p,
            ModelConfig::Dense(cfg) => cfg.p(),
            ModelConfig::Sparse(cfg) => cfg.p(),
        }
    }

    /// Sample size.
    pub fn n(&self) -> usize {
        match self {
            ModelConfig::IidNoise { n, .. } => *n,
            ModelConfig::Dense(cfg) => cfg.n(),
            ModelConfig::Sparse(cfg) => cfg.n(),
        }
    }
}

impl std::fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelConfig::IidNoise { p, n, .. } => write!(f, "iid(p={p},n={n})"),
            ModelConfig::Dense(cfg) => write!(
                f,
                "dense(p={},n={},lambda={},{})",
                cfg.p(),
                cfg.n(),
                cfg.lambda(),
                cfg.hypothesis()
            ),
            ModelConfig::Sparse(cfg) => write!(
                f,
                "sparse(p={},n={},{})",
                cfg.p(),
                cfg.n(),
                cfg.hypothesis()
            ),
        }
    }
}

// ---------------------------------------------------------------------------
// Dense model
// ---------------------------------------------------------------------------

fn standard_normal_matrix(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((n, p));
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    out
}

/// Sample correlation matrix of the rows of `draws`.
fn sample_correlation(draws: &Array2<f64>) -> Array2<f64> {
    let mut z = draws.clone();
    for mut col in z.columns_mut() {
        let mean = col.mean().expect("non-empty column");
        col.mapv_inplace(|v| v - mean);
        let norm = col.dot(&col).sqrt();
        col.mapv_inplace(|v| v / norm);
    }
    z.t().dot(&z)
}

/// The two population correlation matrices of the dense model, consuming
/// the factor-model draws from `rng`.
fn dense_population(cfg: &DenseModelConfig, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>) {
    let p = cfg.p;
    let mut loadings = Array2::<f64>::zeros((p, FACTOR_COUNT));
    for v in loadings.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let mut draws = Array2::<f64>::zeros((FACTOR_DRAWS, p));
    let mut factors = [0.0_f64; FACTOR_COUNT];
    for k in 0..FACTOR_DRAWS {
        for factor in factors.iter_mut() {
            *factor = rng.sample(StandardNormal);
        }
        for j in 0..p {
            let mut v = 0.0;
            for (f, factor) in factors.iter().enumerate() {
                v += loadings[(j, f)] * factor;
            }
            let noise: f64 = rng.sample(StandardNormal);
            draws[(k, j)] = v + DENSE_NOISE_SD * noise;
        }
    }
    let base = sample_correlation(&draws);

    // Ridge then rescale back to correlation form: off-diagonals shrink by
    // 1/(1 + lambda), the diagonal returns to one.
    let shrink = 1.0 / (1.0 + cfg.lambda);
    let mut sigma = base.mapv(|v| v * shrink);
    for i in 0..p {
        sigma[(i, i)] = 1.0;
    }

    let sigma1 = sigma.clone();
    let sigma2 = match cfg.hypothesis {
        Hypothesis::Null => sigma,
        Hypothesis::Alternative => {
            let (first, _) = cfg.block_sizes;
            let mut cut = sigma;
            for i in 0..first {
                for j in first..p {
                    cut[(i, j)] = 0.0;
                    cut[(j, i)] = 0.0;
                }
            }
            cut
        }
    };
    (sigma1, sigma2)
}

/// Multiplies standard-normal rows by the lower Cholesky factor of a
/// covariance matrix: each returned row is `N(0, L Lᵀ)`.
fn draw_with_covariance(l: &Array2<f64>, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let p = l.nrows();
    let mut out = Array2::<f64>::zeros((n, p));
    let mut g = vec![0.0_f64; p];
    for k in 0..n {
        for v in g.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..p {
            let mut acc = 0.0;
            for (j, gj) in g.iter().enumerate().take(i + 1) {
                acc += l[(i, j)] * gj;
            }
            out[(k, i)] = acc;
        }
    }
    out
}

/// Generates one dense-model dataset: the two conditions are sampled
/// independently from ridge-regularized correlation matrices; under the
/// alternative the second condition's between-block correlations are
/// exactly zero.
///
/// # Errors
///
/// [`Error::NotPositiveDefinite`] if a constructed covariance fails to
/// factor (prevented by the positive ridge level) and shape validation
/// from [`PairedDataset::new`].
pub fn gen_dense(cfg: &DenseModelConfig) -> Result<PairedDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed);
    let (sigma1, sigma2) = dense_population(cfg, &mut rng);
    let l1 = cholesky_lower(sigma1.view())?;
    let l2 = cholesky_lower(sigma2.view())?;
    let x = draw_with_covariance(&l1, cfg.n, &mut rng);
    let y = draw_with_covariance(&l2, cfg.n, &mut rng);
    PairedDataset::new(x, y)
}

// ---------------------------------------------------------------------------
// Sparse model
// ---------------------------------------------------------------------------

/// A base sparse precision matrix: preferential-attachment trees within
/// blocks of [`SPARSE_BLOCK`] nodes, Bernoulli(`CROSS_RATE`/dim)
/// cross-block edges, edge weights `±Uniform(0.5, 0.9)`, unit diagonal.
fn sparse_base_precision(dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut omega = Array2::<f64>::eye(dim);
    let mut edges: Vec<(usize, usize)> = Vec::new();

    // Power-law graph per block: each new node attaches to an existing one
    // chosen proportionally to its degree (endpoint-list sampling).
    let mut start = 0;
    while start < dim {
        let block = SPARSE_BLOCK.min(dim - start);
        if block >= 2 {
            let mut endpoints = vec![start, start + 1];
            edges.push((start, start + 1));
            for k in 2..block {
                let target = endpoints[rng.gen_range(0..endpoints.len())];
                let node = start + k;
                edges.push((target, node));
                endpoints.push(target);
                endpoints.push(node);
            }
        }
        start += block;
    }

    // Extra random connections between blocks.
    let cross_probability = (CROSS_RATE / dim as f64).min(1.0);
    for i in 0..dim {
        for j in (i + 1)..dim {
            if i / SPARSE_BLOCK != j / SPARSE_BLOCK && rng.gen_bool(cross_probability) {
                edges.push((i, j));
            }
        }
    }

    for (i, j) in edges {
        let magnitude = rng.gen_range(0.5..0.9);
        let value = if rng.gen_bool(0.5) {
            magnitude
        } else {
            -magnitude
        };
        omega[(i, j)] = value;
        omega[(j, i)] = value;
    }
    omega
}

/// Embeds `block` on the diagonal of `target` starting at `offset`.
fn embed_block(target: &mut Array2<f64>, block: &Array2<f64>, offset: usize) {
    let b = block.nrows();
    target
        .slice_mut(s![offset..offset + b, offset..offset + b])
        .assign(block);
}

/// Smallest ridge level bringing the condition number of a symmetric
/// matrix with spectral range `[min_eig, max_eig]` strictly below
/// `target`, located by bisection.
fn ridge_for_condition(min_eig: f64, max_eig: f64, target: f64) -> f64 {
    let conditioned = |lambda: f64| {
        let low = min_eig + lambda;
        low > 0.0 && max_eig + lambda < target * low
    };
    if conditioned(0.0) {
        return 0.0;
    }
    let mut hi = 1e-6;
    while !conditioned(hi) {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::MAX;
        }
    }
    let mut lo = 0.0;
    for _ in 0..128 {
        let mid = 0.5 * (lo + hi);
        if conditioned(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Builds the regularized joint precision matrix of the sparse model,
/// consuming graph and weight draws from `rng`.
fn sparse_joint_precision(cfg: &SparseModelConfig, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let p = cfg.p;
    let (omega1, omega2) = match cfg.hypothesis {
        Hypothesis::Null => {
            let base = sparse_base_precision(p, rng);
            (base.clone(), base)
        }
        Hypothesis::Alternative => {
            let core = sparse_base_precision(p - 2 * SPARSE_BLOCK, rng);
            let d1 = sparse_base_precision(SPARSE_BLOCK, rng);
            let d2 = sparse_base_precision(SPARSE_BLOCK, rng);
            let mut omega1 = Array2::<f64>::eye(p);
            let mut omega2 = Array2::<f64>::eye(p);
            embed_block(&mut omega1, &core, 0);
            embed_block(&mut omega2, &core, 0);
            embed_block(&mut omega1, &d1, p - 2 * SPARSE_BLOCK);
            embed_block(&mut omega2, &d2, p - SPARSE_BLOCK);
            (omega1, omega2)
        }
    };

    let mut joint = Array2::<f64>::zeros((2 * p, 2 * p));
    embed_block(&mut joint, &omega1, 0);
    embed_block(&mut joint, &omega2, p);
    for i in 0..p / 2 {
        joint[(i, p + i)] = cfg.cross_link_value;
        joint[(p + i, i)] = cfg.cross_link_value;
    }

    // Regularize until the joint condition number is below the node count.
    let eigenvalues = symmetric_eigenvalues(joint.view());
    let min_eig = eigenvalues[0];
    let max_eig = eigenvalues[eigenvalues.len() - 1];
    let ridge = RIDGE_MULT * ridge_for_condition(min_eig, max_eig, (2 * p) as f64);
    if ridge > 0.0 {
        for i in 0..2 * p {
            joint[(i, i)] += ridge;
        }
    }
    joint
}

/// Solves `Lᵀ v = g` in place, so that `v ~ N(0, (L Lᵀ)⁻¹)` for standard
/// normal `g` — sampling from a precision matrix without inverting it.
fn solve_transposed_lower(l: &Array2<f64>, g: &mut [f64]) {
    let dim = l.nrows();
    for i in (0..dim).rev() {
        let mut value = g[i];
        for j in (i + 1)..dim {
            value -= l[(j, i)] * g[j];
        }
        g[i] = value / l[(i, i)];
    }
}

/// Generates one sparse-model dataset: both conditions are sampled jointly
/// from the inverse of the regularized joint precision matrix, so the
/// conditions are dependent whenever the coupling is nonzero.
///
/// # Errors
///
/// [`Error::GraphGeneration`] if no attempt produces a factorable matrix
/// (each attempt redraws the graph with a derived sub-seed).
pub fn gen_sparse(cfg: &SparseModelConfig) -> Result<PairedDataset> {
    let p = cfg.p;
    for attempt in 0..MAX_GRAPH_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[attempt as u64]));
        let joint = sparse_joint_precision(cfg, &mut rng);
        let factor = match cholesky_lower(joint.view()) {
            Ok(l) => l,
            Err(Error::NotPositiveDefinite { .. }) => continue,
            Err(other) => return Err(other),
        };
        let mut data = Array2::<f64>::zeros((cfg.n, 2 * p));
        let mut g = vec![0.0_f64; 2 * p];
        for k in 0..cfg.n {
            for v in g.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            solve_transposed_lower(&factor, &mut g);
            for (j, value) in g.iter().enumerate() {
                data[(k, j)] = *value;
            }
        }
        let x = data.slice(s![.., ..p]).to_owned();
        let y = data.slice(s![.., p..]).to_owned();
        return PairedDataset::new(x, y);
    }
    Err(Error::GraphGeneration {
        attempts: MAX_GRAPH_ATTEMPTS,
    })
}

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov uniformity
// ---------------------------------------------------------------------------

/// Survival function of the Kolmogorov distribution, using the
/// theta-function series on the left tail and the alternating series on
/// the right.
pub(crate) fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        let t = (-std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x
            * (t + t.powi(9) + t.powi(25) + t.powi(49));
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let term = (-2.0 * (j as f64).powi(2) * x * x).exp();
            sum += sign * term;
            if term < 1e-17 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Kolmogorov–Smirnov p-value for uniformity of `values` on `[0, 1]`,
/// with the Stephens small-sample correction to the asymptotic
/// distribution.
///
/// # Errors
///
/// [`Error::EmptyInput`] for an empty sample; [`Error::InvalidPValue`] for
/// a value outside `[0, 1]`.
pub fn ks_uniform_pvalue(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput {
            what: "uniformity sample",
        });
    }
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidPValue { value: v });
        }
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut distance = 0.0_f64;
    for (i, &v) in sorted.iter().enumerate() {
        let upper = (i + 1) as f64 / n - v;
        let lower = v - i as f64 / n;
        distance = distance.max(upper).max(lower);
    }
    let effective = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * distance;
    Ok(kolmogorov_sf(effective))
}

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

/// Minimum replicate count for a meaningful harness run.
const MIN_HARNESS_REPS: usize = 100;

/// Configuration of a harness run: a model, a battery of statistic/regime
/// combinations, and replication/permutation budgets.
#[derive(Debug, Clone)]
pub struct HarnessConfig {
    model: ModelConfig,
    tests: Vec<TestRequest>,
    reps: usize,
    b: usize,
    alpha: f64,
    weight: ExceedanceWeight,
    threshold: ThresholdRule,
    base_seed: u64,
}

impl HarnessConfig {
    /// A harness run of `reps` replicates with `b` permutation replicates
    /// per dataset at level `alpha`.
    ///
    /// # Errors
    ///
    /// [`Error::InsufficientReplicates`] for fewer than 100 replicates;
    /// [`Error::EmptyInput`] for an empty battery;
    /// [`Error::InvalidLevel`] for a level outside `(0, 1)`.
    pub fn new(
        model: ModelConfig,
        tests: Vec<TestRequest>,
        reps: usize,
        b: usize,
        alpha: f64,
        base_seed: u64,
    ) -> Result<Self> {
        if reps < MIN_HARNESS_REPS {
            return Err(Error::InsufficientReplicates {
                b: reps,
                min: MIN_HARNESS_REPS,
            });
        }
        if tests.is_empty() {
            return Err(Error::EmptyInput {
                what: "test requests",
            });
        }
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidLevel { alpha });
        }
        Ok(Self {
            model,
            tests,
            reps,
            b,
            alpha,
            weight: ExceedanceWeight::Uncentered,
            threshold: ThresholdRule::Auto,
            base_seed,
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
    /// As [`AnalysisPlan::with_threshold`].
    pub fn with_threshold(mut self, threshold: ThresholdRule) -> Result<Self> {
        if let ThresholdRule::Fixed(u) = threshold {
            if !u.is_finite() || u < 0.0 {
                return Err(Error::InvalidThreshold { u });
            }
        }
        self.threshold = threshold;
        Ok(self)
    }

    /// The model under test.
    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    /// The battery.
    pub fn tests(&self) -> &[TestRequest] {
        &self.tests
    }

    /// Replicate count.
    pub fn reps(&self) -> usize {
        self.reps
    }

    /// Permutation replicates per dataset.
    pub fn b(&self) -> usize {
        self.b
    }

    /// Significance level.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The base seed.
    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }
}

/// Aggregated outcome of one statistic/regime combination.
#[derive(Debug, Clone, Copy)]
pub struct HarnessRow {
    kind: StatisticKind,
    regime: NullRegime,
    rejection_rate: f64,
    ks_p: f64,
    mean_theta: Option<f64>,
}

impl HarnessRow {
    /// The statistic.
    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    /// The null regime.
    pub fn regime(&self) -> NullRegime {
        self.regime
    }

    /// Fraction of replicates with `p <= alpha` — the empirical size under
    /// a null model, the empirical power under an alternative.
    pub fn rejection_rate(&self) -> f64 {
        self.rejection_rate
    }

    /// Kolmogorov–Smirnov p-value for uniformity of the replicate
    /// p-values.
    pub fn ks_p(&self) -> f64 {
        self.ks_p
    }

    /// Mean fitted extremal index across replicates (extreme-value
    /// statistic under the dependence-corrected regime only).
    pub fn mean_theta(&self) -> Option<f64> {
        self.mean_theta
    }
}

/// Report of a harness run.
#[derive(Debug, Clone)]
pub struct HarnessReport {
    model: ModelConfig,
    rows: Vec<HarnessRow>,
    reps: usize,
    b: usize,
    alpha: f64,
    base_seed: u64,
}

impl HarnessReport {
    /// All aggregated rows, in battery order.
    pub fn rows(&self) -> &[HarnessRow] {
        &self.rows
    }

    /// The first row matching `kind` and `regime`.
    pub fn row(&self, kind: StatisticKind, regime: NullRegime) -> Option<&HarnessRow> {
        self.rows
            .iter()
            .find(|r| r.kind == kind && r.regime == regime)
    }

    /// The model that produced the report.
    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    /// Hypothesis realized by the model.
    pub fn hypothesis(&self) -> Hypothesis {
        self.model.hypothesis()
    }

    /// Replicate count.
    pub fn reps(&self) -> usize {
        self.reps
    }

    /// Permutation replicates per dataset.
    pub fn b(&self) -> usize {
        self.b
    }

    /// Significance level.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The base seed.
    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// Renders the tab-separated report: one row per combination with the
    /// rejection rate in the `size` or `power` column according to the
    /// model's hypothesis.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\ttest\tregime\tsize\tpower\tks_p\ttheta_hat\treps\tseed\n");
        let under_null = self.hypothesis() == Hypothesis::Null;
        for row in &self.rows {
            let rate = format!("{:.6}", row.rejection_rate);
            let (size, power) = if under_null {
                (rate.as_str(), "NA")
            } else {
                ("NA", rate.as_str())
            };
            let theta = row
                .mean_theta
                .map_or_else(|| "NA".to_string(), |t| format!("{t}"));
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                self.model, row.kind, row.regime, size, power, row.ks_p, theta, self.reps,
                self.base_seed
            ));
        }
        out
    }
}

/// Runs the harness: generates `reps` datasets from the model (replicate
/// seeds derived from the base seed), analyzes each with the full battery,
/// and aggregates rejection rates, p-value uniformity, and the mean fitted
/// extremal index. Deterministic given the configuration, independent of
/// thread count.
///
/// # Errors
///
/// Propagates generation and analysis failures.
pub fn run_harness(cfg: &HarnessConfig) -> Result<HarnessReport> {
    let analyses: Vec<DatasetAnalysis> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let model = cfg
                .model
                .with_seed(derive_seed(cfg.base_seed, &[rep as u64, 0]));
            let data = model.generate()?;
            let plan = AnalysisPlan::new(
                cfg.tests.clone(),
                cfg.b,
                cfg.alpha,
                derive_seed(cfg.base_seed, &[rep as u64, 1]),
            )?
            .with_weight(cfg.weight)
            .with_threshold(cfg.threshold)?;
            analyze_dataset(&data, &plan)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(cfg.tests.len());
    for request in &cfg.tests {
        let mut pvalues = Vec::with_capacity(cfg.reps);
        let mut theta_sum = 0.0;
        let mut theta_count = 0_usize;
        for analysis in &analyses {
            let result = analysis
                .result(request.kind(), request.regime())
                .expect("every request is evaluated on every replicate");
            pvalues.push(result.p_value());
            if let Some(theta) = result.theta_hat() {
                theta_sum += theta;
                theta_count += 1;
            }
        }
        let rejections = pvalues.iter().filter(|&&p| p <= cfg.alpha).count();
        rows.push(HarnessRow {
            kind: request.kind(),
            regime: request.regime(),
            rejection_rate: rejections as f64 / cfg.reps as f64,
            ks_p: ks_uniform_pvalue(&pvalues)?,
            mean_theta: (theta_count > 0).then(|| theta_sum / theta_count as f64),
        });
    }

    Ok(HarnessReport {
        model: cfg.model.clone(),
        rows,
        reps: cfg.reps,
        b: cfg.b,
        alpha: cfg.alpha,
        base_seed: cfg.base_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::pearson_correlations;
    use approx::assert_relative_eq;

    /// Inverts a symmetric positive-definite matrix through its Cholesky
    /// factor (test helper).
    fn invert_spd(a: &Array2<f64>) -> Array2<f64> {
        let dim = a.nrows();
        let l = cholesky_lower(a.view()).unwrap();
        let mut inverse = Array2::<f64>::zeros((dim, dim));
        let mut column = vec![0.0_f64; dim];
        for k in 0..dim {
            column.fill(0.0);
            column[k] = 1.0;
            // Forward solve L y = e_k.
            for i in 0..dim {
                let mut v = column[i];
                for j in 0..i {
                    v -= l[(i, j)] * column[j];
                }
                column[i] = v / l[(i, i)];
            }
            solve_transposed_lower(&l, &mut column);
            for i in 0..dim {
                inverse[(i, k)] = column[i];
            }
        }
        inverse
    }

    fn max_abs_offdiag(a: ndarray::ArrayView2<'_, f64>) -> f64 {
        let mut best = 0.0_f64;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if i != j {
                    best = best.max(a[(i, j)].abs());
                }
            }
        }
        best
    }

    #[test]
    fn dense_huge_ridge_kills_correlations() {
        let cfg = DenseModelConfig::new(10, 4000, 1e6, Hypothesis::Null, 7).unwrap();
        let data = gen_dense(&cfg).unwrap();
        let estimates = pearson_correlations(&data).unwrap();
        assert!(max_abs_offdiag(estimates.r1()) < 0.1);
        assert!(max_abs_offdiag(estimates.r2()) < 0.1);
    }

    #[test]
    fn dense_alternative_zeroes_only_the_second_condition() {
        let cfg = DenseModelConfig::new(20, 50, 1.0, Hypothesis::Alternative, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed());
        let (sigma1, sigma2) = dense_population(&cfg, &mut rng);
        let (first, _) = cfg.block_sizes();
        assert_eq!(first, 10);
        let mut strongest_cut = 0.0_f64;
        for i in 0..first {
            for j in first..cfg.p() {
                assert_eq!(sigma2[(i, j)], 0.0);
                assert_eq!(sigma2[(j, i)], 0.0);
                strongest_cut = strongest_cut.max(sigma1[(i, j)].abs());
            }
        }
        assert!(
            strongest_cut > 0.01,
            "the first condition keeps its cross-block signal"
        );
        for i in 0..cfg.p() {
            assert_eq!(sigma1[(i, i)], 1.0);
            assert_eq!(sigma2[(i, i)], 1.0);
        }
        // Both covariances factor: the cut preserves positive definiteness.
        cholesky_lower(sigma1.view()).unwrap();
        cholesky_lower(sigma2.view()).unwrap();
    }

    #[test]
    fn dense_large_sample_recovers_population_correlation() {
        let cfg = DenseModelConfig::new(50, 10_000, 1.0, Hypothesis::Null, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed());
        let (sigma1, sigma2) = dense_population(&cfg, &mut rng);
        assert_eq!(sigma1, sigma2);
        let data = gen_dense(&cfg).unwrap();
        let estimates = pearson_correlations(&data).unwrap();
        let mut worst = 0.0_f64;
        for i in 0..50 {
            for j in 0..50 {
                worst = worst.max((estimates.r1()[(i, j)] - sigma1[(i, j)]).abs());
                worst = worst.max((estimates.r2()[(i, j)] - sigma1[(i, j)]).abs());
            }
        }
        assert!(worst < 0.05, "max deviation {worst}");
    }

    #[test]
    fn sparse_null_is_symmetric_and_well_conditioned() {
        let cfg = SparseModelConfig::new(70, 200, Hypothesis::Null, 13).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed(), &[0]));
        let joint = sparse_joint_precision(&cfg, &mut rng);
        let p = cfg.p();

        // Identical condition blocks under the null.
        for i in 0..p {
            for j in 0..p {
                assert_eq!(joint[(i, j)], joint[(p + i, p + j)]);
            }
        }
        // Diagonal coupling on the first half of the variables only.
        for i in 0..p {
            let expected = if i < p / 2 { SPARSE_CROSS_LINK } else { 0.0 };
            assert_eq!(joint[(i, p + i)], expected);
        }
        // Regularization rule: positive definite with condition number
        // below the node count.
        let eigenvalues = symmetric_eigenvalues(joint.view());
        let smallest = eigenvalues[0];
        let largest = eigenvalues[eigenvalues.len() - 1];
        assert!(smallest > 0.0);
        assert!(
            largest / smallest < (2 * p) as f64,
            "condition number {} at 2p = {}",
            largest / smallest,
            2 * p
        );
    }

    #[test]
    fn sparse_zero_coupling_decouples_conditions() {
        let cfg = SparseModelConfig::new(20, 5000, Hypothesis::Null, 5)
            .unwrap()
            .with_cross_link(0.0)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed(), &[0]));
        let joint = sparse_joint_precision(&cfg, &mut rng);
        let sigma = invert_spd(&joint);
        let p = cfg.p();
        let mut worst = 0.0_f64;
        for i in 0..p {
            for j in 0..p {
                worst = worst.max(sigma[(i, p + j)].abs());
            }
        }
        assert!(worst < 1e-10, "cross-covariance {worst}");

        // The sampled data agree: cross-condition correlations vanish.
        let data = gen_sparse(&cfg).unwrap();
        let estimates = pearson_correlations(&data).unwrap();
        let mut worst = 0.0_f64;
        for i in 0..p {
            worst = worst.max(estimates.r12()[(i, i)].abs());
        }
        assert!(worst < 0.07, "empirical cross-correlation {worst}");
    }

    #[test]
    fn sparse_alternative_rewires_trailing_blocks() {
        let cfg = SparseModelConfig::new(30, 50, Hypothesis::Alternative, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed(), &[0]));
        let joint = sparse_joint_precision(&cfg, &mut rng);
        let p = cfg.p();

        // First condition: middle block carries edges, trailing block is
        // diagonal. Second condition: the reverse.
        let omega1 = joint.slice(s![..p, ..p]);
        let omega2 = joint.slice(s![p.., p..]);
        let middle = s![p - 20..p - 10, p - 20..p - 10];
        let trailing = s![p - 10..p, p - 10..p];
        assert!(max_abs_offdiag(omega1.slice(middle)) >= 0.5);
        assert_eq!(max_abs_offdiag(omega1.slice(trailing)), 0.0);
        assert_eq!(max_abs_offdiag(omega2.slice(middle)), 0.0);
        assert!(max_abs_offdiag(omega2.slice(trailing)) >= 0.5);
        // The shared core is identical across conditions.
        for i in 0..p - 20 {
            for j in 0..p - 20 {
                assert_eq!(omega1[(i, j)], omega2[(i, j)]);
            }
        }
        // Block-diagonal structure: no edges between core and rewired blocks.
        assert_eq!(max_abs_offdiag(omega1.slice(s![..p - 20, p - 20..])), 0.0);
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let dense = DenseModelConfig::new(12, 20, 0.5, Hypothesis::Null, 3).unwrap();
        let a = gen_dense(&dense).unwrap();
        let b = gen_dense(&dense).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
        let c = gen_dense(&dense.clone().with_seed(4)).unwrap();
        assert_ne!(a.x(), c.x());

        let sparse = SparseModelConfig::new(25, 20, Hypothesis::Null, 3).unwrap();
        let a = gen_sparse(&sparse).unwrap();
        let b = gen_sparse(&sparse).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());

        let iid = ModelConfig::IidNoise {
            p: 6,
            n: 12,
            seed: 1,
        };
        assert_eq!(
            iid.generate().unwrap().x(),
            iid.with_seed(1).generate().unwrap().x()
        );
    }

    #[test]
    fn model_config_display_and_validation() {
        let dense = DenseModelConfig::new(50, 50, 0.5, Hypothesis::Alternative, 1).unwrap();
        assert_eq!(
            ModelConfig::Dense(dense).to_string(),
            "dense(p=50,n=50,lambda=0.5,H1)"
        );
        let sparse = SparseModelConfig::new(70, 200, Hypothesis::Null, 1).unwrap();
        assert_eq!(ModelConfig::Sparse(sparse).to_string(), "sparse(p=70,n=200,H0)");
        assert_eq!(
            ModelConfig::IidNoise {
                p: 40,
                n: 100,
                seed: 0
            }
            .to_string(),
            "iid(p=40,n=100)"
        );

        assert!(DenseModelConfig::new(1, 50, 0.5, Hypothesis::Null, 0).is_err());
        assert!(DenseModelConfig::new(50, 3, 0.5, Hypothesis::Null, 0).is_err());
        assert!(DenseModelConfig::new(50, 50, 0.0, Hypothesis::Null, 0).is_err());
        assert!(DenseModelConfig::new(8, 50, 0.5, Hypothesis::Alternative, 0).is_err());
        assert!(DenseModelConfig::new(50, 50, 0.5, Hypothesis::Null, 0)
            .unwrap()
            .with_block_sizes(30, 10)
            .is_err());
        assert!(SparseModelConfig::new(20, 50, Hypothesis::Alternative, 0).is_err());
        assert!(SparseModelConfig::new(30, 50, Hypothesis::Null, 0)
            .unwrap()
            .with_cross_link(f64::NAN)
            .is_err());
    }

    #[test]
    fn kolmogorov_tail_matches_reference_values() {
        // Classic Kolmogorov distribution values.
        assert_relative_eq!(kolmogorov_sf(0.5), 0.96394524366487511, max_relative = 1e-12);
        assert_relative_eq!(kolmogorov_sf(1.0), 0.26999967167735456, max_relative = 1e-12);
        assert_relative_eq!(kolmogorov_sf(2.0), 0.00067092525577969533, max_relative = 1e-12);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        // The two series agree where they meet.
        assert_relative_eq!(
            kolmogorov_sf(1.18 - 1e-9),
            kolmogorov_sf(1.18 + 1e-9),
            max_relative = 1e-6
        );
    }

    #[test]
    fn ks_uniformity_pvalue_behaves() {
        // A near-perfect uniform grid: no evidence against uniformity.
        let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_uniform_pvalue(&grid).unwrap() > 0.99);

        // Values compressed into [0, 0.8]: overwhelming evidence.
        let shifted: Vec<f64> = grid.iter().map(|v| v * 0.8).collect();
        assert!(ks_uniform_pvalue(&shifted).unwrap() < 1e-6);

        assert!(ks_uniform_pvalue(&[]).is_err());
        assert!(ks_uniform_pvalue(&[0.5, 1.5]).is_err());
    }

    #[test]
    fn harness_reports_are_deterministic_and_complete() {
        let tests = vec![
            TestRequest::new(StatisticKind::Squares, NullRegime::AsymptoticIndependence),
            TestRequest::new(StatisticKind::Squares, NullRegime::NonParametric),
            TestRequest::new(StatisticKind::Max, NullRegime::AsymptoticDependence),
        ];
        let model = ModelConfig::IidNoise {
            p: 5,
            n: 30,
            seed: 0,
        };
        let cfg = HarnessConfig::new(model, tests, 100, 60, 0.05, 3).unwrap();
        let report = run_harness(&cfg).unwrap();
        assert_eq!(report.rows().len(), 3);
        assert_eq!(report.hypothesis(), Hypothesis::Null);
        for row in report.rows() {
            assert!((0.0..=1.0).contains(&row.rejection_rate()));
            assert!((0.0..=1.0).contains(&row.ks_p()));
            let expect_theta = row.kind() == StatisticKind::Max
                && row.regime() == NullRegime::AsymptoticDependence;
            assert_eq!(row.mean_theta().is_some(), expect_theta);
        }
        let theta = report
            .row(StatisticKind::Max, NullRegime::AsymptoticDependence)
            .unwrap()
            .mean_theta()
            .unwrap();
        assert!(theta > 0.0 && theta <= 1.0);

        let tsv = report.to_tsv();
        assert!(tsv.starts_with("model\ttest\tregime\tsize\tpower\tks_p\ttheta_hat\treps\tseed\n"));
        assert_eq!(tsv.lines().count(), 4);
        assert!(tsv.contains("iid(p=5,n=30)"));
        // Under a null model the power column is NA.
        assert!(tsv.lines().nth(1).unwrap().split('\t').nth(4) == Some("NA"));

        let again = run_harness(&cfg).unwrap();
        assert_eq!(tsv, again.to_tsv());
    }

    #[test]
    fn harness_validation() {
        let model = ModelConfig::IidNoise {
            p: 5,
            n: 30,
            seed: 0,
        };
        let battery = vec![TestRequest::new(
            StatisticKind::Squares,
            NullRegime::NonParametric,
        )];
        assert!(HarnessConfig::new(model.clone(), battery.clone(), 99, 60, 0.05, 0).is_err());
        assert!(HarnessConfig::new(model.clone(), vec![], 100, 60, 0.05, 0).is_err());
        assert!(HarnessConfig::new(model, battery, 100, 60, 1.0, 0).is_err());
    }
}
