//! Scalar numeric kernels: the standard normal distribution, compensated
//! summation, Gauss–Legendre quadrature, and seed derivation.
//!
//! The normal CDF is evaluated through Cody's rational Chebyshev
//! approximation of the complementary error function (the SPECFUN `calerf`
//! scheme), which keeps full relative accuracy deep into the tails —
//! important for p-values of extreme statistics. The inverse CDF is
//! Wichura's PPND16 (AS 241), accurate to ~1e-15 over the open interval.

/// `1 / sqrt(2 pi)`, the standard normal density at zero.
pub(crate) const FRAC_1_SQRT_2PI: f64 = 0.3989422804014326779;

// ---------------------------------------------------------------------------
// Complementary error function (Cody / SPECFUN)
// ---------------------------------------------------------------------------

/// Coefficients for `erf` on `|x| <= 0.46875`.
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];

/// Coefficients for `erfc` on `0.46875 <= |x| <= 4`.
const ERFC_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERFC_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];

/// Coefficients for `erfc` on `|x| > 4` (asymptotic region).
const ERFC_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERFC_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];

/// `1 / sqrt(pi)`.
const FRAC_1_SQRT_PI: f64 = 5.6418958354775628695e-1;

/// Complementary error function, `erfc(x) = 1 - erf(x)`.
///
/// Relative error stays below ~5e-16 on the whole real line; the result
/// underflows to zero near `x = 26.6`.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        // Central interval: compute erf and subtract.
        let z = y * y;
        let mut num = ERF_A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + ERF_A[i]) * z;
            den = (den + ERF_B[i]) * z;
        }
        let erf = x * (num + ERF_A[3]) / (den + ERF_B[3]);
        return 1.0 - erf;
    }

    let result = if y <= 4.0 {
        let mut num = ERFC_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERFC_C[i]) * y;
            den = (den + ERFC_D[i]) * y;
        }
        exp_neg_sq(y) * ((num + ERFC_C[7]) / (den + ERFC_D[7]))
    } else if y < 26.6 {
        let z = 1.0 / (y * y);
        let mut num = ERFC_P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + ERFC_P[i]) * z;
            den = (den + ERFC_Q[i]) * z;
        }
        let tail = z * (num + ERFC_P[4]) / (den + ERFC_Q[4]);
        exp_neg_sq(y) * ((FRAC_1_SQRT_PI - tail) / y)
    } else {
        0.0
    };

    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

/// `exp(-y^2)` with the argument split into an exactly representable head
/// and a small remainder, so the rounding of `y * y` does not shift the
/// result for large `y`.
fn exp_neg_sq(y: f64) -> f64 {
    let head = (y * 16.0).trunc() / 16.0;
    let tail = (y - head) * (y + head);
    (-head * head).exp() * (-tail).exp()
}

// ---------------------------------------------------------------------------
// Standard normal distribution
// ---------------------------------------------------------------------------

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 - Phi(x)`, accurate in the upper
/// tail where the naive subtraction would cancel.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Inverse normal CDF (Wichura's PPND16, AS 241)
// ---------------------------------------------------------------------------

const PPND_A: [f64; 8] = [
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
];
const PPND_B: [f64; 7] = [
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
];
const PPND_C: [f64; 8] = [
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
];
const PPND_D: [f64; 7] = [
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
];
const PPND_E: [f64; 8] = [
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const PPND_F: [f64; 7] = [
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
];

/// Evaluates `c[0] + c[1] r + ... + c[k] r^k`.
fn poly(coefs: &[f64], r: f64) -> f64 {
    let mut acc = *coefs.last().expect("non-empty coefficients");
    for &c in coefs[..coefs.len() - 1].iter().rev() {
        acc = acc * r + c;
    }
    acc
}

/// Evaluates `1.0 + c[0] r + c[1] r^2 + ... + c[k-1] r^k`, the implicit
/// unit-constant denominator convention of AS 241.
fn poly_monic(coefs: &[f64], r: f64) -> f64 {
    let mut acc = *coefs.last().expect("non-empty coefficients");
    for &c in coefs[..coefs.len() - 1].iter().rev() {
        acc = acc * r + c;
    }
    acc * r + 1.0
}

/// Inverse standard normal CDF.
///
/// Returns `-INFINITY` at `p = 0` and `INFINITY` at `p = 1`; `NaN` outside
/// `[0, 1]`.
pub fn norm_ppf(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&PPND_A, r) / poly_monic(&PPND_B, r);
    }

    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        poly(&PPND_C, r) / poly_monic(&PPND_D, r)
    } else {
        let r = r - 5.0;
        poly(&PPND_E, r) / poly_monic(&PPND_F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

// ---------------------------------------------------------------------------
// Compensated summation
// ---------------------------------------------------------------------------

/// Neumaier's improved Kahan–Babuska compensated accumulator.
///
/// Keeps the running error of long sums at one ulp of the true result,
/// independent of length — used for the pairwise statistics so that results
/// do not drift with `m`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    /// A fresh accumulator at zero.
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one term.
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// The compensated total.
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of an iterator of terms.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

// ---------------------------------------------------------------------------
// Gauss–Legendre quadrature
// ---------------------------------------------------------------------------

/// Nodes and weights of the `k`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Nodes are found by Newton iteration on the Legendre recurrence from the
/// Chebyshev initial guess; the rule integrates polynomials up to degree
/// `2k - 1` exactly.
pub fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    assert!(k >= 1, "quadrature order must be at least 1");
    let mut rule = vec![(0.0, 0.0); k];
    let half = k.div_ceil(2);
    for i in 0..half {
        // Chebyshev-like initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let j = j as f64;
                let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            // Derivative of P_k from the recurrence (valid for |x| < 1).
            dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // The guess above starts from the largest root going down; store
        // symmetric pairs so the output is sorted ascending.
        rule[i] = (-x, w);
        rule[k - 1 - i] = (x, w);
    }
    if k % 2 == 1 {
        // The middle node of an odd rule is exactly zero.
        rule[k / 2].0 = 0.0;
    }
    rule
}

// ---------------------------------------------------------------------------
// Seed derivation
// ---------------------------------------------------------------------------

/// Derives an independent child seed from a base seed and a path of salts
/// (for example `[replicate, purpose]`) via iterated SplitMix64.
///
/// Seeding each consumer from its own derived value keeps parallel
/// simulation replicates and their permutation draws on provably distinct
/// streams while remaining reproducible from a single user-facing seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = base;
    for &salt in path {
        state = splitmix64(state ^ splitmix64(salt));
    }
    splitmix64(state)
}

/// One SplitMix64 scrambling step.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Small dense symmetric linear algebra
// ---------------------------------------------------------------------------

/// Cholesky factorization `A = L Lᵀ` of a symmetric positive-definite
/// matrix, returning the lower factor.
///
/// # Errors
///
/// [`Error::NotPositiveDefinite`] naming the first failing pivot (also
/// triggered by non-finite input, which poisons its pivot).
pub(crate) fn cholesky_lower(a: ndarray::ArrayView2<'_, f64>) -> crate::error::Result<ndarray::Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = ndarray::Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag.is_finite() && diag > 0.0) {
            return Err(crate::error::Error::NotPositiveDefinite { pivot: j });
        }
        let root = diag.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut value = a[(i, j)];
            for k in 0..j {
                value -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = value / root;
        }
    }
    Ok(l)
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method, sorted
/// ascending. Robust and dependency-free; intended for the moderate sizes
/// (a few hundred) used in model construction and validation.
pub(crate) fn symmetric_eigenvalues(a: ndarray::ArrayView2<'_, f64>) -> Vec<f64> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut work = a.to_owned();
    // Total off-diagonal mass drives convergence; scale sets the tolerance.
    let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += work[(p, q)] * work[(p, q)];
            }
        }
        if off.sqrt() <= 1e-12 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = work[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                // Classic two-sided rotation that zeroes the (p, q) entry.
                let tau = (work[(q, q)] - work[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = work[(k, p)];
                    let akq = work[(k, q)];
                    work[(k, p)] = c * akp - s * akq;
                    work[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = work[(p, k)];
                    let aqk = work[(q, k)];
                    work[(p, k)] = c * apk - s * aqk;
                    work[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigenvalues: Vec<f64> = (0..n).map(|i| work[(i, i)]).collect();
    eigenvalues.sort_unstable_by(f64::total_cmp);
    eigenvalues
}
