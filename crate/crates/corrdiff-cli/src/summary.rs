//! Cross-set concordance reporting.
//!
//! [`summarize`] condenses a batch into counts and diagnostics: how many
//! sets each test called significant after adjustment, how many were
//! called by all three tests at once, and the pairwise Pearson
//! correlations between the tests' raw p-value vectors — the standard
//! check that the three statistics broadly agree on real batches. The
//! report serializes to both JSON and a two-column TSV.

use std::collections::BTreeMap;

use corrdiff_core::StatisticKind;
use serde::Serialize;

use crate::batch::{cell, PathwayResult};
use crate::error::{CliError, Result};

/// Aggregate view of one batch.
#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    /// Gene sets submitted.
    sets_total: usize,
    /// Sets that produced results.
    sets_analyzed: usize,
    /// Sets that failed (reasons under `errors`).
    sets_failed: usize,
    /// Significance level applied to the adjusted values.
    alpha: f64,
    /// Sets with adjusted squares-test p at or below `alpha` (absent when
    /// the test was not run).
    significant_squares: Option<usize>,
    /// As above, for the max test.
    significant_max: Option<usize>,
    /// As above, for the exceedance test.
    significant_exceedance: Option<usize>,
    /// Sets significant under all three tests at once.
    triple_intersection: Option<usize>,
    /// Pearson correlation between raw squares and max p-values.
    p_correlation_squares_max: Option<f64>,
    /// Pearson correlation between raw squares and exceedance p-values.
    p_correlation_squares_exceedance: Option<f64>,
    /// Pearson correlation between raw max and exceedance p-values.
    p_correlation_max_exceedance: Option<f64>,
    /// Failure reason per failed set id.
    errors: BTreeMap<String, String>,
}

impl BatchSummary {
    /// Sets submitted.
    pub fn sets_total(&self) -> usize {
        self.sets_total
    }

    /// Sets producing results.
    pub fn sets_analyzed(&self) -> usize {
        self.sets_analyzed
    }

    /// Sets that failed.
    pub fn sets_failed(&self) -> usize {
        self.sets_failed
    }

    /// Adjusted-significance count for one statistic.
    pub fn significant(&self, kind: StatisticKind) -> Option<usize> {
        match kind {
            StatisticKind::Squares => self.significant_squares,
            StatisticKind::Max => self.significant_max,
            StatisticKind::Exceedance => self.significant_exceedance,
        }
    }

    /// Sets significant under all three tests.
    pub fn triple_intersection(&self) -> Option<usize> {
        self.triple_intersection
    }

    /// Pearson correlation between two tests' raw p-value vectors.
    pub fn p_correlation(&self, a: StatisticKind, b: StatisticKind) -> Option<f64> {
        let key = |k: StatisticKind| match k {
            StatisticKind::Squares => 0,
            StatisticKind::Max => 1,
            StatisticKind::Exceedance => 2,
        };
        let mut pair = [key(a), key(b)];
        pair.sort_unstable();
        match pair {
            [0, 1] => self.p_correlation_squares_max,
            [0, 2] => self.p_correlation_squares_exceedance,
            [1, 2] => self.p_correlation_max_exceedance,
            _ => None,
        }
    }

    /// Failure reasons keyed by set id.
    pub fn errors(&self) -> &BTreeMap<String, String> {
        &self.errors
    }

    /// Pretty-printed JSON document (with a trailing newline).
    pub fn to_json(&self) -> String {
        let mut out =
            serde_json::to_string_pretty(self).expect("summary serialization cannot fail");
        out.push('\n');
        out
    }

    /// Two-column `metric<TAB>value` rendering; absent metrics print as
    /// `NA`. Failure reasons stay in the JSON form.
    pub fn to_tsv(&self) -> String {
        let count = |v: Option<usize>| match v {
            Some(k) => k.to_string(),
            None => "NA".to_string(),
        };
        let mut out = String::from("metric\tvalue\n");
        out.push_str(&format!("sets_total\t{}\n", self.sets_total));
        out.push_str(&format!("sets_analyzed\t{}\n", self.sets_analyzed));
        out.push_str(&format!("sets_failed\t{}\n", self.sets_failed));
        out.push_str(&format!("alpha\t{}\n", self.alpha));
        out.push_str(&format!(
            "significant_squares\t{}\n",
            count(self.significant_squares)
        ));
        out.push_str(&format!("significant_max\t{}\n", count(self.significant_max)));
        out.push_str(&format!(
            "significant_exceedance\t{}\n",
            count(self.significant_exceedance)
        ));
        out.push_str(&format!(
            "triple_intersection\t{}\n",
            count(self.triple_intersection)
        ));
        out.push_str(&format!(
            "p_correlation_squares_max\t{}\n",
            cell(self.p_correlation_squares_max)
        ));
        out.push_str(&format!(
            "p_correlation_squares_exceedance\t{}\n",
            cell(self.p_correlation_squares_exceedance)
        ));
        out.push_str(&format!(
            "p_correlation_max_exceedance\t{}\n",
            cell(self.p_correlation_max_exceedance)
        ));
        out
    }
}

/// Pearson correlation, `None` for fewer than two points or a constant
/// vector.
fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x <= 0.0 || var_y <= 0.0 {
        return None;
    }
    Some(cov / (var_x * var_y).sqrt())
}

/// All three statistics in report order.
const KINDS: [StatisticKind; 3] = [
    StatisticKind::Squares,
    StatisticKind::Max,
    StatisticKind::Exceedance,
];

/// Builds the aggregate report for a finished batch.
///
/// Significance counts use the FDR-adjusted values at level `alpha`;
/// p-value correlations use the raw values over sets where both tests
/// ran.
///
/// # Errors
///
/// [`CliError::Invalid`] for an empty batch or a level outside `(0, 1)`.
pub fn summarize(results: &[PathwayResult], alpha: f64) -> Result<BatchSummary> {
    if results.is_empty() {
        return Err(CliError::Invalid("no gene-set results to summarize".to_string()));
    }
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Invalid(format!(
            "significance level {alpha} is outside (0, 1)"
        )));
    }

    let ran: Vec<bool> = KINDS
        .iter()
        .map(|&kind| results.iter().any(|r| r.p_value(kind).is_some()))
        .collect();
    let significant = |kind: StatisticKind, present: bool| -> Option<usize> {
        present.then(|| {
            results
                .iter()
                .filter(|r| r.q_value(kind).is_some_and(|q| q <= alpha))
                .count()
        })
    };
    let triple = ran.iter().all(|&b| b).then(|| {
        results
            .iter()
            .filter(|r| {
                KINDS
                    .iter()
                    .all(|&kind| r.q_value(kind).is_some_and(|q| q <= alpha))
            })
            .count()
    });

    let correlation = |a: StatisticKind, b: StatisticKind| -> Option<f64> {
        let pairs: Vec<(f64, f64)> = results
            .iter()
            .filter_map(|r| r.p_value(a).zip(r.p_value(b)))
            .collect();
        let xs: Vec<f64> = pairs.iter().map(|&(x, _)| x).collect();
        let ys: Vec<f64> = pairs.iter().map(|&(_, y)| y).collect();
        pearson(&xs, &ys)
    };

    let errors: BTreeMap<String, String> = results
        .iter()
        .filter_map(|r| r.error().map(|e| (r.id().to_string(), e.to_string())))
        .collect();

    Ok(BatchSummary {
        sets_total: results.len(),
        sets_analyzed: results.iter().filter(|r| r.error().is_none()).count(),
        sets_failed: results.iter().filter(|r| r.error().is_some()).count(),
        alpha,
        significant_squares: significant(StatisticKind::Squares, ran[0]),
        significant_max: significant(StatisticKind::Max, ran[1]),
        significant_exceedance: significant(StatisticKind::Exceedance, ran[2]),
        triple_intersection: triple,
        p_correlation_squares_max: correlation(StatisticKind::Squares, StatisticKind::Max),
        p_correlation_squares_exceedance: correlation(
            StatisticKind::Squares,
            StatisticKind::Exceedance,
        ),
        p_correlation_max_exceedance: correlation(StatisticKind::Max, StatisticKind::Exceedance),
        errors,
    })
}
