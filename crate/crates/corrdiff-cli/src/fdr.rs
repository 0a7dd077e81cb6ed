//! Multiplicity adjustment across gene sets.
//!
//! [`fdr_adjust`] converts a vector of raw p-values into adjusted values
//! controlling the false discovery rate, via the Benjamini–Hochberg
//! step-up (default) or the Benjamini–Yekutieli variant, which stays
//! valid under arbitrary dependence at the price of an extra
//! `sum(1/i)` inflation factor.
//!
//! Adjusted values are order-preserving, never smaller than the raw
//! p-values, and capped at 1.

use crate::error::{CliError, Result};

/// Which false-discovery-rate procedure to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdrMethod {
    /// Benjamini–Hochberg step-up.
    BenjaminiHochberg,
    /// Benjamini–Yekutieli step-up (dependence-safe).
    BenjaminiYekutieli,
}

impl std::str::FromStr for FdrMethod {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bh" => Ok(FdrMethod::BenjaminiHochberg),
            "by" => Ok(FdrMethod::BenjaminiYekutieli),
            other => Err(CliError::Invalid(format!(
                "unknown FDR method \"{other}\" (expected \"bh\" or \"by\")"
            ))),
        }
    }
}

impl std::fmt::Display for FdrMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FdrMethod::BenjaminiHochberg => "bh",
            FdrMethod::BenjaminiYekutieli => "by",
        })
    }
}

/// Step-up adjusted p-values in the original order.
///
/// With the raw values ranked ascending, the adjusted value at rank `i`
/// is `min over j >= i of (p_(j) * c * m / j)`, capped at 1 — `c = 1`
/// for Benjamini–Hochberg and `c = 1 + 1/2 + ... + 1/m` for
/// Benjamini–Yekutieli. Ties are broken by input position, which makes
/// the result independent of sort stability.
///
/// # Errors
///
/// [`CliError::Invalid`] when any value is outside `[0, 1]` or not
/// finite.
pub fn fdr_adjust(pvalues: &[f64], method: FdrMethod) -> Result<Vec<f64>> {
    for (i, &p) in pvalues.iter().enumerate() {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(CliError::Invalid(format!(
                "p-value {p} at position {i} is outside [0, 1]"
            )));
        }
    }
    let m = pvalues.len();
    if m == 0 {
        return Ok(Vec::new());
    }

    let inflation = match method {
        FdrMethod::BenjaminiHochberg => 1.0,
        FdrMethod::BenjaminiYekutieli => (1..=m).map(|i| 1.0 / i as f64).sum(),
    };

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_unstable_by(|&a, &b| {
        pvalues[a]
            .partial_cmp(&pvalues[b])
            .expect("validated finite")
            .then(a.cmp(&b))
    });

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for (rank_from_top, &index) in order.iter().enumerate().rev() {
        let rank = (rank_from_top + 1) as f64;
        running = running.min(pvalues[index] * inflation * m as f64 / rank);
        adjusted[index] = running.min(1.0);
    }
    Ok(adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matches_the_hand_worked_step_up() {
        let adjusted = fdr_adjust(&[0.01, 0.02, 0.03], FdrMethod::BenjaminiHochberg).unwrap();
        for q in &adjusted {
            assert_relative_eq!(*q, 0.03, max_relative = 1e-15);
        }
    }

    #[test]
    fn degenerate_inputs_pass_through() {
        let all_one = fdr_adjust(&[1.0, 1.0, 1.0, 1.0], FdrMethod::BenjaminiHochberg).unwrap();
        assert!(all_one.iter().all(|&q| q == 1.0));

        let single = fdr_adjust(&[0.2], FdrMethod::BenjaminiHochberg).unwrap();
        assert_eq!(single, [0.2]);

        assert!(fdr_adjust(&[], FdrMethod::BenjaminiHochberg)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn preserves_order_and_dominates_raw_values() {
        let p = [0.8, 0.001, 0.2, 0.04, 0.04, 1.0, 0.3];
        let q = fdr_adjust(&p, FdrMethod::BenjaminiHochberg).unwrap();
        for i in 0..p.len() {
            assert!(q[i] >= p[i], "q[{i}] = {} < p[{i}] = {}", q[i], p[i]);
            assert!(q[i] <= 1.0);
            for j in 0..p.len() {
                if p[i] < p[j] {
                    assert!(q[i] <= q[j], "ordering broken at ({i}, {j})");
                }
                if p[i] == p[j] {
                    assert_eq!(q[i], q[j], "ties must adjust identically");
                }
            }
        }
    }

    #[test]
    fn tied_adjusted_vectors_are_fixed_points() {
        // Step-up output with a flat profile re-adjusts to itself.
        let q = fdr_adjust(&[0.01, 0.02, 0.03], FdrMethod::BenjaminiHochberg).unwrap();
        let q2 = fdr_adjust(&q, FdrMethod::BenjaminiHochberg).unwrap();
        for (a, b) in q.iter().zip(&q2) {
            assert_relative_eq!(*a, *b, max_relative = 1e-15);
        }

        let ones = fdr_adjust(&[1.0, 1.0], FdrMethod::BenjaminiHochberg).unwrap();
        assert_eq!(fdr_adjust(&ones, FdrMethod::BenjaminiHochberg).unwrap(), ones);
    }

    #[test]
    fn dependence_safe_variant_inflates_by_the_harmonic_sum() {
        let p = [0.01, 0.5];
        let bh = fdr_adjust(&p, FdrMethod::BenjaminiHochberg).unwrap();
        let by = fdr_adjust(&p, FdrMethod::BenjaminiYekutieli).unwrap();
        assert_relative_eq!(by[0], bh[0] * 1.5, max_relative = 1e-12);
        assert_relative_eq!(by[1], (bh[1] * 1.5).min(1.0), max_relative = 1e-12);
        assert!(by.iter().zip(&bh).all(|(y, h)| y >= h));
    }

    #[test]
    fn rejects_values_outside_the_unit_interval() {
        assert!(fdr_adjust(&[0.5, 1.2], FdrMethod::BenjaminiHochberg).is_err());
        assert!(fdr_adjust(&[-0.1], FdrMethod::BenjaminiHochberg).is_err());
        assert!(fdr_adjust(&[f64::NAN], FdrMethod::BenjaminiHochberg).is_err());

        let err = "median".parse::<FdrMethod>().unwrap_err();
        assert!(err.to_string().contains("median"));
        assert_eq!("BH".parse::<FdrMethod>().unwrap(), FdrMethod::BenjaminiHochberg);
        assert_eq!("by".parse::<FdrMethod>().unwrap(), FdrMethod::BenjaminiYekutieli);
    }
}
