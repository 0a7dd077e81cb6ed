//! Paired data, correlation estimates, and standardized differences of
//! Fisher-transformed correlations.
//!
//! Two data matrices observed on the same subjects ("conditions") yield two
//! correlation matrices. For every variable pair `t = (i, j)` the module
//! computes
//!
//! ```text
//! d_t = (u2_t - u1_t) / sqrt(2 (1 - psi_t))
//! ```
//!
//! where `uK_t = atanh(rK_ij) * sqrt(n - 3)` are the variance-stabilized
//! correlations and `psi_t` is the cross-condition correlation of the two
//! Fisher scores, derived from Steiger's (1980) covariance of dependent
//! correlations. Under equality of the two correlation matrices, each `d_t`
//! is asymptotically standard normal.

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Condition, Error, Result};

/// Smallest number of paired observations: the scaling `n - 3` must stay
/// positive.
pub const MIN_SAMPLES: usize = 4;

/// Upper clamp on the cross-condition score correlation, keeping the
/// standardizing variance `2 (1 - psi)` bounded away from zero.
const PSI_MAX: f64 = 1.0 - 1e-6;

/// Within-condition correlations at least this close to `+/-1` are treated
/// as perfect collinearity: exactly collinear columns round to a sample
/// correlation a few ulps below one, where the Fisher transform silently
/// explodes instead of failing.
const PERFECT_CORRELATION_LIMIT: f64 = 1.0 - 1e-12;

// ---------------------------------------------------------------------------
// Paired dataset
// ---------------------------------------------------------------------------

/// Observations of the same `p` variables on the same `n` subjects under two
/// conditions. Rows are subjects, columns are variables; row `k` of `x` and
/// row `k` of `y` belong to the same subject.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    x: Array2<f64>,
    y: Array2<f64>,
}

impl PairedDataset {
    /// Validates shapes and sizes.
    ///
    /// # Errors
    ///
    /// [`Error::ShapeMismatch`] if the matrices disagree,
    /// [`Error::TooFewSamples`] for `n < 4`, and
    /// [`Error::TooFewVariables`] for `p < 2`.
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(Error::ShapeMismatch {
                x_rows: x.nrows(),
                x_cols: x.ncols(),
                y_rows: y.nrows(),
                y_cols: y.ncols(),
            });
        }
        if x.nrows() < MIN_SAMPLES {
            return Err(Error::TooFewSamples {
                n: x.nrows(),
                min: MIN_SAMPLES,
            });
        }
        if x.ncols() < 2 {
            return Err(Error::TooFewVariables { p: x.ncols() });
        }
        Ok(Self { x, y })
    }

    /// Number of paired observations.
    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    /// Number of variables per condition.
    pub fn n_variables(&self) -> usize {
        self.x.ncols()
    }

    /// First-condition data (`n x p`).
    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    /// Second-condition data (`n x p`).
    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    /// The same subjects with the two conditions exchanged.
    pub fn swapped(&self) -> PairedDataset {
        PairedDataset {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Pair indexing
// ---------------------------------------------------------------------------

/// The `m = p (p - 1) / 2` unordered variable pairs `(i, j)`, `i < j`, in
/// lexicographic order. This fixed order defines the coordinates of every
/// per-pair vector in the crate.
#[derive(Debug, Clone)]
pub struct PairIndexSet {
    p: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairIndexSet {
    /// Enumerates the pairs for `p` variables.
    pub fn new(p: usize) -> Self {
        let mut pairs = Vec::with_capacity(p * (p - 1) / 2);
        for i in 0..p {
            for j in (i + 1)..p {
                pairs.push((i, j));
            }
        }
        Self { p, pairs }
    }

    /// Number of variables.
    pub fn n_variables(&self) -> usize {
        self.p
    }

    /// Number of pairs, `m`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Whether there are no pairs (only possible for `p < 2`).
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// The pairs in order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// The pair at a flat index.
    ///
    /// # Errors
    ///
    /// [`Error::PairOutOfRange`] if `index >= len()`.
    pub fn pair(&self, index: usize) -> Result<(usize, usize)> {
        self.pairs
            .get(index)
            .copied()
            .ok_or(Error::PairOutOfRange {
                index,
                p: self.p,
            })
    }
}

/// Number of variable pairs for `p` variables.
pub fn pair_count(p: usize) -> usize {
    p * (p - 1) / 2
}

// ---------------------------------------------------------------------------
// Fisher transform
// ---------------------------------------------------------------------------

/// The Fisher variance-stabilizing transform `atanh(r)`.
///
/// # Errors
///
/// [`Error::FisherDomain`] when `|r| >= 1` or `r` is not finite.
pub fn fisher_transform(r: f64) -> Result<f64> {
    if !r.is_finite() || r.abs() >= 1.0 {
        return Err(Error::FisherDomain { value: r });
    }
    // Evaluate on |r| and restore the sign, making odd symmetry exact in
    // floating point (library atanh implementations need not be).
    Ok(r.abs().atanh().copysign(r))
}

// ---------------------------------------------------------------------------
// Correlation estimates
// ---------------------------------------------------------------------------

/// Sample correlations of the stacked `[x | y]` data: a `2p x 2p` matrix
/// holding both within-condition blocks and the cross-condition block.
#[derive(Debug, Clone)]
pub struct CorrelationEstimates {
    joint: Array2<f64>,
    p: usize,
    n: usize,
}

impl CorrelationEstimates {
    /// First-condition correlation matrix (view of the top-left block).
    pub fn r1(&self) -> ArrayView2<'_, f64> {
        self.joint.slice(ndarray::s![..self.p, ..self.p])
    }

    /// Second-condition correlation matrix (bottom-right block).
    pub fn r2(&self) -> ArrayView2<'_, f64> {
        self.joint.slice(ndarray::s![self.p.., self.p..])
    }

    /// Cross-condition correlations: entry `(i, j)` is the correlation of
    /// variable `i` under the first condition with variable `j` under the
    /// second.
    pub fn r12(&self) -> ArrayView2<'_, f64> {
        self.joint.slice(ndarray::s![..self.p, self.p..])
    }

    /// The full joint correlation matrix over both conditions.
    pub fn joint(&self) -> ArrayView2<'_, f64> {
        self.joint.view()
    }

    /// Number of paired observations behind the estimates.
    pub fn n_samples(&self) -> usize {
        self.n
    }

    /// Number of variables per condition.
    pub fn n_variables(&self) -> usize {
        self.p
    }
}

/// Centers each column and scales it to unit Euclidean norm, in place.
/// Returns the index of the first constant column as an error.
fn standardize_columns(mut z: ArrayViewMut2<'_, f64>) -> std::result::Result<(), usize> {
    for (idx, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.mean().expect("non-empty column");
        col.mapv_inplace(|v| v - mean);
        let norm = col.dot(&col).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(idx);
        }
        col.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

/// Builds the standardized joint matrix for given row-wise condition
/// assignments and computes its Gram matrix.
///
/// `swap[k] = true` exchanges the two condition rows of subject `k`; the
/// identity assignment (`swap = None`) reproduces the observed data. Used
/// both for the observed estimates and for sign-flip permutation replicates.
pub(crate) fn joint_correlation(
    data: &PairedDataset,
    swap: Option<&[bool]>,
) -> std::result::Result<Array2<f64>, usize> {
    let (n, p) = (data.n_samples(), data.n_variables());
    let mut z = Array2::<f64>::zeros((n, 2 * p));
    for k in 0..n {
        let flip = swap.map(|s| s[k]).unwrap_or(false);
        let (first, second) = if flip {
            (data.y.row(k), data.x.row(k))
        } else {
            (data.x.row(k), data.y.row(k))
        };
        z.slice_mut(ndarray::s![k, ..p]).assign(&first);
        z.slice_mut(ndarray::s![k, p..]).assign(&second);
    }
    standardize_columns(z.view_mut())?;
    let mut r = z.t().dot(&z);
    // The Gram product is symmetric only up to rounding (tiled matrix
    // multiplication may accumulate (i, j) and (j, i) in different
    // orders), and the diagonal is one only up to rounding. Both
    // properties are exact for a true correlation matrix, and exactness
    // is what makes the documented psi symmetries hold bit-for-bit, so
    // enforce them structurally.
    let dim = 2 * p;
    for i in 0..dim {
        r[(i, i)] = 1.0;
        for j in (i + 1)..dim {
            r[(j, i)] = r[(i, j)];
        }
    }
    Ok(r)
}

/// Estimates both within-condition correlation matrices and the
/// cross-condition block in one pass.
///
/// # Errors
///
/// [`Error::ZeroVariance`] naming the first constant column.
pub fn pearson_correlations(data: &PairedDataset) -> Result<CorrelationEstimates> {
    let p = data.n_variables();
    let joint = joint_correlation(data, None).map_err(|idx| Error::ZeroVariance {
        condition: if idx < p {
            Condition::First
        } else {
            Condition::Second
        },
        column: idx % p,
    })?;
    Ok(CorrelationEstimates {
        joint,
        p,
        n: data.n_samples(),
    })
}

// ---------------------------------------------------------------------------
// Cross-condition score correlation (psi)
// ---------------------------------------------------------------------------

/// Asymptotic correlation between the Fisher scores of two sample
/// correlations `r_s` and `r_t` drawn from the same observations, after
/// Steiger's covariance of dependent correlations.
///
/// Both pairs index the joint `2p x 2p` correlation matrix: variables
/// `0..p` belong to the first condition and `p..2p` to the second, so
/// `s = (i, j)` with `t = (i + p, j + p)` gives the cross-condition score
/// correlation of one variable pair, while two pairs inside one block give
/// a within-condition score correlation.
///
/// Symmetric in `s` and `t` bit-for-bit, and exactly `1` when `s == t`.
///
/// # Errors
///
/// [`Error::PairOutOfRange`] for an index outside `0..2p`;
/// [`Error::PerfectCorrelation`] when either pair correlation sits at
/// `+/-1` (including a degenerate pair `(i, i)`), where the score variance
/// vanishes.
pub fn psi_cross(
    est: &CorrelationEstimates,
    s: (usize, usize),
    t: (usize, usize),
) -> Result<f64> {
    let bound = 2 * est.p;
    for &index in &[s.0, s.1, t.0, t.1] {
        if index >= bound {
            return Err(Error::PairOutOfRange { index, p: bound });
        }
    }
    let (a, b) = s;
    let (c, d) = t;
    let j = &est.joint;
    let r_s = j[(a, b)];
    let r_t = j[(c, d)];
    for (&(i, k), &value) in [s, t].iter().zip([r_s, r_t].iter()) {
        if value.abs() >= 1.0 {
            return Err(Error::PerfectCorrelation { i, j: k, value });
        }
    }
    Ok(psi_from_entries(
        r_s,
        r_t,
        j[(a, c)],
        j[(b, d)],
        j[(a, d)],
        j[(b, c)],
    ))
}

/// The psi kernel on the six relevant correlations:
/// `r_s`, `r_t` are the two pair correlations and `r_ac, r_bd, r_ad, r_bc`
/// connect their endpoints.
///
/// The term grouping is chosen so that exchanging the roles of `s` and `t`
/// (which maps `r_s <-> r_t`, `r_ad <-> r_bc` and fixes `r_ac`, `r_bd`)
/// permutes factors only within IEEE-commutative products and sums —
/// making the documented symmetry exact in floating point, not just
/// mathematically. No clamping here: the `d_t` denominator applies its own
/// cap at the use site.
#[inline]
fn psi_from_entries(r_s: f64, r_t: f64, r_ac: f64, r_bd: f64, r_ad: f64, r_bc: f64) -> f64 {
    let t1 = (r_ac - r_s * r_bc) * (r_bd - r_bc * r_t);
    let t2 = (r_ad - r_ac * r_t) * (r_bc - r_s * r_ac);
    let t3 = (r_ac - r_ad * r_t) * (r_bd - r_s * r_ad);
    let t4 = (r_ad - r_s * r_bd) * (r_bc - r_bd * r_t);
    let numerator_half = 0.5 * ((t1 + t3) + (t2 + t4));
    let denominator = (1.0 - r_s * r_s) * (1.0 - r_t * r_t);
    numerator_half / denominator
}

// ---------------------------------------------------------------------------
// Standardized differences
// ---------------------------------------------------------------------------

/// Per-pair results of the variance-stabilized comparison, in
/// [`PairIndexSet`] order.
#[derive(Debug, Clone)]
pub struct StandardizedDifferences {
    d: Vec<f64>,
    psi: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    n: usize,
}

impl StandardizedDifferences {
    /// The standardized differences `d_t`.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// The per-pair cross-condition score correlations `psi_t`.
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// First-condition Fisher scores `u1_t = atanh(r1_t) sqrt(n - 3)`.
    pub fn u1(&self) -> &[f64] {
        &self.u1
    }

    /// Second-condition Fisher scores.
    pub fn u2(&self) -> &[f64] {
        &self.u2
    }

    /// Number of pairs.
    pub fn len(&self) -> usize {
        self.d.len()
    }

    /// Whether the pair set is empty (never true for valid input).
    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Number of paired observations behind the scores.
    pub fn n_samples(&self) -> usize {
        self.n
    }
}

/// Computes all standardized differences from correlation estimates.
///
/// A numerator that is exactly zero yields `d_t = 0` regardless of the
/// denominator, so equal estimated correlations never produce spurious
/// signal through the psi clamp.
///
/// # Errors
///
/// [`Error::PerfectCorrelation`] if any off-diagonal correlation reaches
/// `+/-1`, naming the offending pair.
pub fn standardized_differences(
    est: &CorrelationEstimates,
) -> Result<StandardizedDifferences> {
    let p = est.p;
    let pairs = PairIndexSet::new(p);
    let m = pairs.len();
    let mut out = StandardizedDifferences {
        d: vec![0.0; m],
        psi: vec![0.0; m],
        u1: vec![0.0; m],
        u2: vec![0.0; m],
        n: est.n,
    };
    let scale = ((est.n - 3) as f64).sqrt();
    let j = &est.joint;
    for (idx, &(i, k)) in pairs.pairs().iter().enumerate() {
        let r1 = j[(i, k)];
        let r2 = j[(i + p, k + p)];
        let z1 = fisher_score(r1, i, k)?;
        let z2 = fisher_score(r2, i, k)?;
        let u1 = z1 * scale;
        let u2 = z2 * scale;
        let psi = psi_from_entries(
            r1,
            r2,
            j[(i, i + p)],
            j[(k, k + p)],
            j[(i, k + p)],
            j[(k, i + p)],
        )
        .min(PSI_MAX);
        let numerator = u2 - u1;
        out.u1[idx] = u1;
        out.u2[idx] = u2;
        out.psi[idx] = psi;
        out.d[idx] = if numerator == 0.0 {
            0.0
        } else {
            numerator / (2.0 * (1.0 - psi)).sqrt()
        };
    }
    Ok(out)
}

/// Fisher-transforms one within-condition correlation, reporting
/// numerically perfect collinearity (`|r|` within `1e-12` of one) as
/// [`Error::PerfectCorrelation`] naming the variable pair.
#[inline]
fn fisher_score(r: f64, i: usize, k: usize) -> Result<f64> {
    if r.abs() >= PERFECT_CORRELATION_LIMIT {
        return Err(Error::PerfectCorrelation { i, j: k, value: r });
    }
    fisher_transform(r).map_err(|_| Error::PerfectCorrelation { i, j: k, value: r })
}

/// Hot-path variant for permutation replicates: writes only the `d_t`
/// vector into `out`, given a precomputed joint correlation matrix.
pub(crate) fn standardized_differences_into(
    joint: &Array2<f64>,
    p: usize,
    n: usize,
    out: &mut [f64],
) -> Result<()> {
    debug_assert_eq!(out.len(), pair_count(p));
    let scale = ((n - 3) as f64).sqrt();
    let mut idx = 0;
    for i in 0..p {
        for k in (i + 1)..p {
            let r1 = joint[(i, k)];
            let r2 = joint[(i + p, k + p)];
            let z1 = fisher_score(r1, i, k)?;
            let z2 = fisher_score(r2, i, k)?;
            // Same operation order as the public path, so both agree
            // bit-for-bit.
            let numerator = z2 * scale - z1 * scale;
            out[idx] = if numerator == 0.0 {
                0.0
            } else {
                let psi = psi_from_entries(
                    r1,
                    r2,
                    joint[(i, i + p)],
                    joint[(k, k + p)],
                    joint[(i, k + p)],
                    joint[(k, i + p)],
                )
                .min(PSI_MAX);
                numerator / (2.0 * (1.0 - psi)).sqrt()
            };
            idx += 1;
        }
    }
    Ok(())
}
