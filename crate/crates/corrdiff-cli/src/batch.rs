//! Batch orchestration: one hypothesis test per gene set.
//!
//! [`run_batch`] subsets the expression table to each gene set, analyzes
//! every set under a shared [`AnalysisPlan`], and adjusts each
//! statistic's p-values across sets for false-discovery-rate control.
//! Failures are confined to their own result row — a set with too few
//! matching genes, or one whose analysis errors out, is reported and the
//! batch continues.
//!
//! Scheduling is largest-set-first for parallel load balance, but the
//! returned rows follow the input order, and every set's permutation
//! stream is derived from the global seed plus the set's *name*, so
//! per-set results do not depend on batch composition, ordering, or
//! thread count.

use std::time::{Duration, Instant};

use corrdiff_core::{
    analyze_dataset, derive_seed, AnalysisPlan, DatasetAnalysis, NullRegime, StatisticKind,
};
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::fdr::{fdr_adjust, FdrMethod};
use crate::gmt::{GeneSet, GeneSetCollection};
use crate::ingest::ExpressionTable;

/// Smallest usable overlap between a gene set and the expression table.
pub const MIN_SET_GENES: usize = 5;

/// Shared configuration for a batch: the per-set analysis plan plus the
/// multiplicity adjustment applied across sets.
#[derive(Debug, Clone)]
pub struct BatchConfig {
    plan: AnalysisPlan,
    fdr: FdrMethod,
}

impl BatchConfig {
    /// Couples an analysis plan with an FDR method.
    ///
    /// The results table carries one column group per statistic, so the
    /// plan must evaluate each statistic at most once and under a single
    /// null regime.
    ///
    /// # Errors
    ///
    /// [`CliError::Invalid`] when the plan mixes regimes or repeats a
    /// statistic.
    pub fn new(plan: AnalysisPlan, fdr: FdrMethod) -> Result<Self> {
        let tests = plan.tests();
        let regime = tests[0].regime();
        if tests.iter().any(|t| t.regime() != regime) {
            return Err(CliError::Invalid(
                "a batch evaluates all statistics under one null regime".to_string(),
            ));
        }
        for (i, t) in tests.iter().enumerate() {
            if tests[..i].iter().any(|s| s.kind() == t.kind()) {
                return Err(CliError::Invalid(format!(
                    "statistic \"{}\" requested twice",
                    t.kind()
                )));
            }
        }
        Ok(BatchConfig { plan, fdr })
    }

    /// The per-set analysis plan (its seed is re-derived per set).
    pub fn plan(&self) -> &AnalysisPlan {
        &self.plan
    }

    /// The multiplicity adjustment.
    pub fn fdr(&self) -> FdrMethod {
        self.fdr
    }

    /// The shared null regime.
    pub fn regime(&self) -> NullRegime {
        self.plan.tests()[0].regime()
    }
}

/// Outcome of one gene set's analysis.
#[derive(Debug, Clone)]
pub struct PathwayResult {
    id: String,
    p_genes: usize,
    statistics: [Option<f64>; 3],
    pvalues: [Option<f64>; 3],
    u: Option<f64>,
    adjusted: [Option<f64>; 3],
    error: Option<String>,
    analysis: Option<DatasetAnalysis>,
    runtime: Duration,
}

/// Column slot of a statistic in per-row storage and in the TSV layout.
fn kind_slot(kind: StatisticKind) -> usize {
    match kind {
        StatisticKind::Squares => 0,
        StatisticKind::Max => 1,
        StatisticKind::Exceedance => 2,
    }
}

impl PathwayResult {
    /// The gene set's identifier.
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Genes actually used: the overlap between the set and the table.
    pub fn p_genes(&self) -> usize {
        self.p_genes
    }

    /// The full analysis, when it succeeded.
    pub fn analysis(&self) -> Option<&DatasetAnalysis> {
        self.analysis.as_ref()
    }

    /// Why the set produced no results, when it failed.
    pub fn error(&self) -> Option<&str> {
        self.error.as_deref()
    }

    /// Wall-clock time spent on this set.
    pub fn runtime(&self) -> Duration {
        self.runtime
    }

    /// The observed statistic of `kind`, when it was computed.
    pub fn statistic(&self, kind: StatisticKind) -> Option<f64> {
        self.statistics[kind_slot(kind)]
    }

    /// The raw p-value for `kind`, when it was computed.
    pub fn p_value(&self, kind: StatisticKind) -> Option<f64> {
        self.pvalues[kind_slot(kind)]
    }

    /// The FDR-adjusted p-value for `kind`.
    pub fn q_value(&self, kind: StatisticKind) -> Option<f64> {
        self.adjusted[kind_slot(kind)]
    }

    /// The exceedance threshold the analysis used.
    pub fn u_used(&self) -> Option<f64> {
        self.u
    }

    /// A fabricated row for summary tests: `pvalues`/`adjusted` are in
    /// squares/max/exceedance order.
    #[cfg(test)]
    pub(crate) fn synthetic(
        id: &str,
        p_genes: usize,
        pvalues: [Option<f64>; 3],
        adjusted: [Option<f64>; 3],
        error: Option<&str>,
    ) -> Self {
        PathwayResult {
            id: id.to_string(),
            p_genes,
            statistics: pvalues,
            pvalues,
            u: None,
            adjusted,
            error: error.map(str::to_string),
            analysis: None,
            runtime: Duration::ZERO,
        }
    }
}

/// FNV-1a over a set name: a stable 64-bit identity that survives
/// reordering and recompilation (unlike the standard library's hasher).
fn stable_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in text.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Analyzes every gene set and adjusts p-values across sets.
///
/// Returns one row per input set, in input order. Per-set failures are
/// recorded in their row (and logged to standard error); they do not
/// abort the batch.
///
/// # Errors
///
/// [`CliError::Invalid`] only for batch-level misconfiguration
/// surfacing through the adjustment step; per-set analysis errors are
/// captured in the rows.
pub fn run_batch(
    table: &ExpressionTable,
    sets: &GeneSetCollection,
    config: &BatchConfig,
) -> Result<Vec<PathwayResult>> {
    let overlaps: Vec<Vec<usize>> = sets
        .sets()
        .iter()
        .map(|s| table.gene_indices(s.genes()))
        .collect();

    // Largest sets first so long analyses start early; ties keep input
    // order. The rows are re-sorted to input order afterwards.
    let mut schedule: Vec<usize> = (0..sets.len()).collect();
    schedule.sort_by_key(|&i| (std::cmp::Reverse(overlaps[i].len()), i));

    let mut indexed: Vec<(usize, PathwayResult)> = schedule
        .par_iter()
        .map(|&i| (i, analyze_set(table, &sets.sets()[i], &overlaps[i], config)))
        .collect();
    indexed.sort_by_key(|(i, _)| *i);
    let mut rows: Vec<PathwayResult> = indexed.into_iter().map(|(_, row)| row).collect();

    apply_fdr(&mut rows, config)?;
    Ok(rows)
}

/// Runs one gene set, converting any failure into an error row.
fn analyze_set(
    table: &ExpressionTable,
    set: &GeneSet,
    columns: &[usize],
    config: &BatchConfig,
) -> PathwayResult {
    let start = Instant::now();
    let outcome: Result<DatasetAnalysis> = (|| {
        if columns.len() < MIN_SET_GENES {
            return Err(CliError::Invalid(format!(
                "{} of {} genes matched the expression table; need at least {MIN_SET_GENES}",
                columns.len(),
                set.genes().len()
            )));
        }
        let data = table.dataset(columns)?;
        let plan = config
            .plan()
            .clone()
            .with_seed(derive_seed(config.plan().seed(), &[stable_hash(set.name())]));
        Ok(analyze_dataset(&data, &plan)?)
    })();

    let (analysis, error) = match outcome {
        Ok(analysis) => (Some(analysis), None),
        Err(e) => {
            eprintln!("warning: gene set \"{}\": {e}", set.name());
            (None, Some(e.to_string()))
        }
    };

    let mut statistics = [None, None, None];
    let mut pvalues = [None, None, None];
    let mut u = None;
    if let Some(analysis) = &analysis {
        for result in analysis.results() {
            let slot = kind_slot(result.kind());
            statistics[slot] = Some(result.statistic());
            pvalues[slot] = Some(result.p_value());
            if result.kind() == StatisticKind::Exceedance {
                u = result.u_used();
            }
        }
    }
    PathwayResult {
        id: set.name().to_string(),
        p_genes: columns.len(),
        statistics,
        pvalues,
        u,
        adjusted: [None, None, None],
        error,
        analysis,
        runtime: start.elapsed(),
    }
}

/// Adjusts each statistic's p-values across the sets that produced one.
fn apply_fdr(rows: &mut [PathwayResult], config: &BatchConfig) -> Result<()> {
    for request in config.plan().tests() {
        let kind = request.kind();
        let slot = kind_slot(kind);
        let present: Vec<(usize, f64)> = rows
            .iter()
            .enumerate()
            .filter_map(|(i, row)| row.p_value(kind).map(|p| (i, p)))
            .collect();
        let pvalues: Vec<f64> = present.iter().map(|&(_, p)| p).collect();
        let qvalues = fdr_adjust(&pvalues, config.fdr())?;
        for (&(i, _), q) in present.iter().zip(qvalues) {
            rows[i].adjusted[slot] = Some(q);
        }
    }
    Ok(())
}

/// Formats an optional value for the TSV outputs; absent values print
/// as `NA`.
pub(crate) fn cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.6e}"),
        None => "NA".to_string(),
    }
}

/// Renders the per-set results table.
///
/// Columns: `id`, `p_genes`, then statistic/p-value pairs for the
/// squares, max, and exceedance tests (with the threshold used), then
/// the FDR-adjusted values. Sets that failed or statistics that were
/// not requested appear as `NA`.
pub fn results_tsv(rows: &[PathwayResult]) -> String {
    let mut out =
        String::from("id\tp_genes\tstat_s\tp_s\tstat_m\tp_m\tstat_e\tu_used\tp_e\tq_s\tq_m\tq_e\n");
    for row in rows {
        let s = StatisticKind::Squares;
        let m = StatisticKind::Max;
        let e = StatisticKind::Exceedance;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.id(),
            row.p_genes(),
            cell(row.statistic(s)),
            cell(row.p_value(s)),
            cell(row.statistic(m)),
            cell(row.p_value(m)),
            cell(row.statistic(e)),
            cell(row.u_used()),
            cell(row.p_value(e)),
            cell(row.q_value(s)),
            cell(row.q_value(m)),
            cell(row.q_value(e)),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmt::GeneSet;
    use crate::ingest::{expression_tsv, ingest};
    use approx::assert_relative_eq;
    use corrdiff_core::TestRequest;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use std::io::Write;

    /// A deterministic synthetic table: `n` patients by `p` genes, with
    /// condition II equal to condition I when `equal` is set.
    fn demo_table(n: usize, p: usize, equal: bool, seed: u64) -> ExpressionTable {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let genes: Vec<String> = (0..p).map(|g| format!("G{g}")).collect();
        let samples: Vec<String> = (0..n)
            .flat_map(|i| [format!("t{i}"), format!("h{i}")])
            .collect();
        let mut values = Array2::zeros((p, 2 * n));
        for g in 0..p {
            for i in 0..n {
                let first: f64 = rng.gen_range(-1.0..1.0);
                let second: f64 = if equal { first } else { rng.gen_range(-1.0..1.0) };
                values[(g, 2 * i)] = first;
                values[(g, 2 * i + 1)] = second;
            }
        }
        let dir = tempfile::tempdir().expect("tempdir");
        let expr_path = dir.path().join("expr.tsv");
        std::fs::File::create(&expr_path)
            .and_then(|mut f| f.write_all(expression_tsv(&genes, &samples, &values).as_bytes()))
            .expect("write expression");
        let mut pairs = String::from("sample_id\tpatient_id\tcondition\n");
        for i in 0..n {
            pairs.push_str(&format!("t{i}\tpat{i}\tI\nh{i}\tpat{i}\tII\n"));
        }
        let pairs_path = dir.path().join("pairs.tsv");
        std::fs::File::create(&pairs_path)
            .and_then(|mut f| f.write_all(pairs.as_bytes()))
            .expect("write pairs");
        ingest(&expr_path, &pairs_path).expect("ingest")
    }

    fn np_battery() -> Vec<TestRequest> {
        [
            StatisticKind::Squares,
            StatisticKind::Max,
            StatisticKind::Exceedance,
        ]
        .into_iter()
        .map(|kind| TestRequest::new(kind, NullRegime::NonParametric))
        .collect()
    }

    fn collection(sets: Vec<GeneSet>) -> GeneSetCollection {
        GeneSetCollection::new(sets, "test")
    }

    fn set_of(name: &str, genes: std::ops::Range<usize>) -> GeneSet {
        let ids: Vec<String> = genes.map(|g| format!("G{g}")).collect();
        let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
        GeneSet::new(name, "", &refs)
    }

    #[test]
    fn equal_conditions_hit_minimal_statistics() {
        let table = demo_table(12, 6, true, 5);
        let sets = collection(vec![set_of("ALL", 0..6)]);
        let plan = AnalysisPlan::new(np_battery(), 40, 0.05, 9).expect("plan");
        let config = BatchConfig::new(plan, FdrMethod::BenjaminiHochberg).expect("config");

        let rows = run_batch(&table, &sets, &config).expect("batch");
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert!(row.error().is_none());
        assert_eq!(row.p_genes(), 6);
        for kind in [
            StatisticKind::Squares,
            StatisticKind::Max,
            StatisticKind::Exceedance,
        ] {
            assert_eq!(row.statistic(kind), Some(0.0), "identical conditions");
            assert_eq!(row.p_value(kind), Some(1.0), "permutations cannot beat 0");
            assert_eq!(row.q_value(kind), Some(1.0));
        }
        // No signal: the threshold search falls back to the level cap.
        assert_relative_eq!(row.u_used().unwrap(), 1.6448536269514722, max_relative = 1e-12);
    }

    #[test]
    fn thin_sets_fail_alone_and_the_batch_continues() {
        let table = demo_table(10, 8, false, 17);
        let sets = collection(vec![
            set_of("WIDE", 0..8),
            set_of("THIN", 0..3),
            GeneSet::new("GHOST", "", &["Z1", "Z2", "Z3", "Z4", "Z5"]),
        ]);
        let plan = AnalysisPlan::new(np_battery(), 30, 0.05, 3).expect("plan");
        let config = BatchConfig::new(plan, FdrMethod::BenjaminiHochberg).expect("config");

        let rows = run_batch(&table, &sets, &config).expect("batch");
        assert_eq!(rows.len(), 3);
        assert!(rows[0].error().is_none());
        assert!(rows[1].error().expect("thin set fails").contains("at least 5"));
        assert_eq!(rows[2].p_genes(), 0, "no gene overlaps the table");
        assert!(rows[2].error().is_some());

        let tsv = results_tsv(&rows);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("id\tp_genes\tstat_s"));
        assert!(lines[2].starts_with("THIN\t3\tNA\tNA"));
        let q_fields: Vec<&str> = lines[1].split('\t').collect();
        assert_eq!(q_fields.len(), 12);
        assert_ne!(q_fields[9], "NA", "successful set gets adjusted values");
    }

    #[test]
    fn results_do_not_depend_on_batch_ordering_or_reruns() {
        let table = demo_table(14, 10, false, 23);
        let forward = collection(vec![set_of("A", 0..6), set_of("B", 3..10), set_of("C", 0..10)]);
        let reversed = collection(vec![set_of("C", 0..10), set_of("B", 3..10), set_of("A", 0..6)]);
        let plan = AnalysisPlan::new(np_battery(), 25, 0.05, 41).expect("plan");
        let config = BatchConfig::new(plan, FdrMethod::BenjaminiHochberg).expect("config");

        let first = run_batch(&table, &forward, &config).expect("batch");
        let second = run_batch(&table, &forward, &config).expect("batch");
        assert_eq!(results_tsv(&first), results_tsv(&second), "reruns are identical");

        let shuffled = run_batch(&table, &reversed, &config).expect("batch");
        for row in &first {
            let twin = shuffled
                .iter()
                .find(|r| r.id() == row.id())
                .expect("same sets");
            for kind in [
                StatisticKind::Squares,
                StatisticKind::Max,
                StatisticKind::Exceedance,
            ] {
                assert_eq!(row.statistic(kind), twin.statistic(kind));
                assert_eq!(row.p_value(kind), twin.p_value(kind), "set {}", row.id());
            }
        }
    }

    #[test]
    fn adjusted_values_dominate_raw_ones() {
        let table = demo_table(12, 9, false, 31);
        let sets = collection(vec![set_of("A", 0..5), set_of("B", 2..9), set_of("C", 0..9)]);
        let plan = AnalysisPlan::new(np_battery(), 30, 0.05, 7).expect("plan");
        let config = BatchConfig::new(plan, FdrMethod::BenjaminiYekutieli).expect("config");
        let rows = run_batch(&table, &sets, &config).expect("batch");
        for row in &rows {
            for kind in [
                StatisticKind::Squares,
                StatisticKind::Max,
                StatisticKind::Exceedance,
            ] {
                let (p, q) = (row.p_value(kind).unwrap(), row.q_value(kind).unwrap());
                assert!(q >= p && q <= 1.0, "q = {q}, p = {p}");
            }
        }
    }

    #[test]
    fn config_rejects_mixed_regimes_and_repeats() {
        let mixed = vec![
            TestRequest::new(StatisticKind::Squares, NullRegime::NonParametric),
            TestRequest::new(StatisticKind::Max, NullRegime::AsymptoticDependence),
        ];
        let plan = AnalysisPlan::new(mixed, 30, 0.05, 0).expect("plan");
        assert!(BatchConfig::new(plan, FdrMethod::BenjaminiHochberg).is_err());

        let repeated = vec![
            TestRequest::new(StatisticKind::Squares, NullRegime::NonParametric),
            TestRequest::new(StatisticKind::Squares, NullRegime::NonParametric),
        ];
        let plan = AnalysisPlan::new(repeated, 30, 0.05, 0).expect("plan");
        assert!(BatchConfig::new(plan, FdrMethod::BenjaminiHochberg).is_err());
    }
}
