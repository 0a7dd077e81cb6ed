//! Ingestion of paired expression data.
//!
//! Two tab-separated inputs describe an experiment:
//!
//! * an **expression table** — header row `gene<TAB>sample1<TAB>sample2...`,
//!   then one row per gene identifier with a numeric value per sample;
//! * a **pairing table** — a header naming the columns `sample_id`,
//!   `patient_id`, and `condition`, then one row per sample assigning it to
//!   a patient under condition `I` or `II`.
//!
//! [`ingest`] joins the two into an [`ExpressionTable`]: per-condition
//! matrices with one row per patient (pairing-file order) and one column
//! per gene (expression-file order). Rows sharing a gene identifier are
//! collapsed by averaging. Every patient must contribute exactly one
//! sample per condition; violations are reported with the patients named.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use corrdiff_core::PairedDataset;
use ndarray::{Array2, ArrayView2};

use crate::error::{CliError, Result};

/// Experimental condition of a sample within a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionLabel {
    /// Condition `I` (the first member of each pair).
    First,
    /// Condition `II` (the second member of each pair).
    Second,
}

impl ConditionLabel {
    fn parse(raw: &str) -> Option<Self> {
        match raw {
            "I" => Some(ConditionLabel::First),
            "II" => Some(ConditionLabel::Second),
            _ => None,
        }
    }
}

impl std::fmt::Display for ConditionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConditionLabel::First => "I",
            ConditionLabel::Second => "II",
        })
    }
}

/// Paired expression data: one matrix per condition, rows aligned by
/// patient and columns by gene.
#[derive(Debug, Clone)]
pub struct ExpressionTable {
    genes: Vec<String>,
    gene_lookup: HashMap<String, usize>,
    patients: Vec<String>,
    /// `n x p` values under condition I.
    x: Array2<f64>,
    /// `n x p` values under condition II.
    y: Array2<f64>,
}

impl ExpressionTable {
    /// Number of patients (paired observations).
    pub fn n(&self) -> usize {
        self.patients.len()
    }

    /// Number of distinct genes.
    pub fn p(&self) -> usize {
        self.genes.len()
    }

    /// Gene identifiers in column order.
    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    /// Patient identifiers in row order.
    pub fn patients(&self) -> &[String] {
        &self.patients
    }

    /// Condition-I values, `n x p`.
    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    /// Condition-II values, `n x p`.
    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    /// Column indices (in table order) of the listed genes; identifiers
    /// absent from the table are dropped, as are repeats.
    pub fn gene_indices(&self, wanted: &[String]) -> Vec<usize> {
        let mut indices: Vec<usize> = wanted
            .iter()
            .filter_map(|g| self.gene_lookup.get(g).copied())
            .collect();
        indices.sort_unstable();
        indices.dedup();
        indices
    }

    /// The paired dataset restricted to the given gene columns.
    ///
    /// # Errors
    ///
    /// Propagates the core shape checks (at least 4 patients and 2 genes),
    /// and rejects column indices outside the table.
    pub fn dataset(&self, columns: &[usize]) -> Result<PairedDataset> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.p()) {
            return Err(CliError::Invalid(format!(
                "gene column {bad} out of range for a table with {} genes",
                self.p()
            )));
        }
        let x = self.x.select(ndarray::Axis(1), columns);
        let y = self.y.select(ndarray::Axis(1), columns);
        Ok(PairedDataset::new(x, y)?)
    }
}

/// One sample's assignment from the pairing file.
struct SampleAssignment {
    patient: String,
    condition: ConditionLabel,
}

/// Reads `path` into memory, mapping I/O failures onto [`CliError::Io`].
fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Splits one raw line into tab-separated fields, tolerating a trailing
/// carriage return.
fn fields(line: &str) -> Vec<&str> {
    line.strip_suffix('\r').unwrap_or(line).split('\t').collect()
}

/// Loads and validates the paired expression data.
///
/// # Errors
///
/// [`CliError::Io`] when either file cannot be read; [`CliError::Parse`]
/// for malformed records (with the 1-based line number); and
/// [`CliError::Invalid`] for structural violations — in particular, any
/// patient lacking a sample under one of the two conditions is reported
/// in a message listing every such patient.
pub fn ingest(expression_path: &Path, pairing_path: &Path) -> Result<ExpressionTable> {
    let assignments = parse_pairing(pairing_path)?;
    let (genes, gene_lookup, sample_ids, values) = parse_expression(expression_path)?;

    let sample_column: HashMap<&str, usize> = sample_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    // Group samples by patient, demanding exactly one per condition.
    let mut patients: Vec<String> = Vec::new();
    let mut pairs: HashMap<String, [Option<String>; 2]> = HashMap::new();
    for (sample, assignment) in &assignments {
        if !sample_column.contains_key(sample.as_str()) {
            return Err(CliError::Invalid(format!(
                "sample \"{sample}\" from the pairing file is missing from the expression table"
            )));
        }
        let slot = match assignment.condition {
            ConditionLabel::First => 0,
            ConditionLabel::Second => 1,
        };
        let entry = pairs.entry(assignment.patient.clone()).or_insert_with(|| {
            patients.push(assignment.patient.clone());
            [None, None]
        });
        if let Some(previous) = &entry[slot] {
            return Err(CliError::Invalid(format!(
                "patient \"{}\" has two samples under condition {} (\"{previous}\" and \"{sample}\")",
                assignment.patient, assignment.condition
            )));
        }
        entry[slot] = Some(sample.clone());
    }

    let unpaired: Vec<String> = patients
        .iter()
        .filter_map(|patient| {
            let entry = &pairs[patient];
            match (&entry[0], &entry[1]) {
                (None, _) => Some(format!("{patient} (missing condition I)")),
                (_, None) => Some(format!("{patient} (missing condition II)")),
                _ => None,
            }
        })
        .collect();
    if !unpaired.is_empty() {
        return Err(CliError::Invalid(format!(
            "every patient needs one sample per condition; unpaired: {}",
            unpaired.join(", ")
        )));
    }
    if patients.is_empty() {
        return Err(CliError::Invalid(
            "the pairing file assigns no samples".to_string(),
        ));
    }

    let assigned: usize = assignments.len();
    if assigned < sample_ids.len() {
        eprintln!(
            "warning: {} expression column(s) not referenced by the pairing file are ignored",
            sample_ids.len() - assigned
        );
    }

    // Assemble patient-by-gene matrices, transposing the gene-by-sample
    // expression layout.
    let n = patients.len();
    let p = genes.len();
    let mut x = Array2::zeros((n, p));
    let mut y = Array2::zeros((n, p));
    for (row, patient) in patients.iter().enumerate() {
        let entry = &pairs[patient];
        for (slot, target) in [&mut x, &mut y].into_iter().enumerate() {
            let sample = entry[slot].as_ref().expect("pairing validated above");
            let col = sample_column[sample.as_str()];
            for g in 0..p {
                target[(row, g)] = values[g][col];
            }
        }
    }

    Ok(ExpressionTable {
        genes,
        gene_lookup,
        patients,
        x,
        y,
    })
}

/// Parses the pairing file into `(sample, assignment)` records in file
/// order.
fn parse_pairing(path: &Path) -> Result<Vec<(String, SampleAssignment)>> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| {
        CliError::parse(path, 1, "empty pairing file; expected a header row")
    })?;
    let header_fields = fields(header);
    let column = |name: &str| -> Result<usize> {
        header_fields
            .iter()
            .position(|f| f.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                CliError::parse(path, 1, format!("pairing header lacks a \"{name}\" column"))
            })
    };
    let sample_col = column("sample_id")?;
    let patient_col = column("patient_id")?;
    let condition_col = column("condition")?;
    let width = header_fields.len();

    let mut assignments: Vec<(String, SampleAssignment)> = Vec::new();
    let mut seen_samples: HashMap<String, usize> = HashMap::new();
    for (index, line) in lines {
        let lineno = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = fields(line);
        if row.len() != width {
            return Err(CliError::parse(
                path,
                lineno,
                format!("expected {width} tab-separated fields, found {}", row.len()),
            ));
        }
        let sample = row[sample_col].trim();
        let patient = row[patient_col].trim();
        let condition_raw = row[condition_col].trim();
        if sample.is_empty() || patient.is_empty() {
            return Err(CliError::parse(path, lineno, "empty sample or patient id"));
        }
        let condition = ConditionLabel::parse(condition_raw).ok_or_else(|| {
            CliError::parse(
                path,
                lineno,
                format!("unknown condition label \"{condition_raw}\" (expected \"I\" or \"II\")"),
            )
        })?;
        match seen_samples.entry(sample.to_string()) {
            Entry::Occupied(first) => {
                return Err(CliError::parse(
                    path,
                    lineno,
                    format!("sample \"{sample}\" already assigned on line {}", first.get()),
                ));
            }
            Entry::Vacant(slot) => {
                slot.insert(lineno);
            }
        }
        assignments.push((
            sample.to_string(),
            SampleAssignment {
                patient: patient.to_string(),
                condition,
            },
        ));
    }
    Ok(assignments)
}

/// Parses the expression table, averaging rows that share a gene id.
///
/// Returns the deduplicated gene ids (first-appearance order), a lookup
/// from id to column, the sample ids from the header, and the averaged
/// gene-by-sample values.
#[allow(clippy::type_complexity)]
fn parse_expression(
    path: &Path,
) -> Result<(Vec<String>, HashMap<String, usize>, Vec<String>, Vec<Vec<f64>>)> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| {
        CliError::parse(path, 1, "empty expression file; expected a header row")
    })?;
    let header_fields = fields(header);
    if header_fields.len() < 2 {
        return Err(CliError::parse(
            path,
            1,
            "expression header needs a gene-id column and at least one sample column",
        ));
    }
    let sample_ids: Vec<String> = header_fields[1..]
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    {
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for id in &sample_ids {
            if id.is_empty() {
                return Err(CliError::parse(path, 1, "empty sample id in header"));
            }
            if seen.insert(id.as_str(), ()).is_some() {
                return Err(CliError::parse(
                    path,
                    1,
                    format!("duplicate sample id \"{id}\" in header"),
                ));
            }
        }
    }
    let width = header_fields.len();
    let n_samples = sample_ids.len();

    let mut genes: Vec<String> = Vec::new();
    let mut gene_lookup: HashMap<String, usize> = HashMap::new();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for (index, line) in lines {
        let lineno = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = fields(line);
        if row.len() != width {
            return Err(CliError::parse(
                path,
                lineno,
                format!("expected {width} tab-separated fields, found {}", row.len()),
            ));
        }
        let gene = row[0].trim();
        if gene.is_empty() {
            return Err(CliError::parse(path, lineno, "empty gene id"));
        }
        let slot = match gene_lookup.get(gene) {
            Some(&slot) => slot,
            None => {
                let slot = genes.len();
                genes.push(gene.to_string());
                gene_lookup.insert(gene.to_string(), slot);
                sums.push(vec![0.0; n_samples]);
                counts.push(0);
                slot
            }
        };
        for (j, raw) in row[1..].iter().enumerate() {
            let value: f64 = raw.trim().parse().map_err(|_| {
                CliError::parse(
                    path,
                    lineno,
                    format!(
                        "value \"{raw}\" for gene \"{gene}\", sample \"{}\" is not a number",
                        sample_ids[j]
                    ),
                )
            })?;
            sums[slot][j] += value;
        }
        counts[slot] += 1;
    }
    if genes.is_empty() {
        return Err(CliError::Invalid(format!(
            "{}: the expression table has no gene rows",
            path.display()
        )));
    }

    // Probe-level repeats of one gene collapse to their average.
    for (slot, row) in sums.iter_mut().enumerate() {
        let count = counts[slot] as f64;
        if counts[slot] > 1 {
            for v in row.iter_mut() {
                *v /= count;
            }
        }
    }
    Ok((genes, gene_lookup, sample_ids, sums))
}

/// Renders a gene-by-sample matrix in the expression-table layout (the
/// inverse of [`ingest`]); handy for building synthetic inputs.
pub fn expression_tsv(genes: &[String], samples: &[String], values: &Array2<f64>) -> String {
    let mut out = String::from("gene");
    for s in samples {
        let _ = write!(out, "\t{s}");
    }
    out.push('\n');
    for (g, gene) in genes.iter().enumerate() {
        let _ = write!(out, "{gene}");
        for s in 0..samples.len() {
            let _ = write!(out, "\t{}", values[(g, s)]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut file = std::fs::File::create(&path).expect("create test file");
        file.write_all(contents.as_bytes()).expect("write test file");
        path
    }

    const PAIRS: &str = "sample_id\tpatient_id\tcondition\n\
                         s1\tpatA\tI\n\
                         s2\tpatA\tII\n\
                         s3\tpatB\tI\n\
                         s4\tpatB\tII\n";

    #[test]
    fn pairs_samples_and_averages_duplicate_genes() {
        let dir = tempfile::tempdir().expect("tempdir");
        let expr = write_file(
            &dir,
            "expr.tsv",
            "gene\ts1\ts2\ts3\ts4\n\
             G1\t1\t2\t3\t4\n\
             G2\t10\t20\t30\t40\n\
             G1\t3\t4\t5\t6\n",
        );
        let pairs = write_file(&dir, "pairs.tsv", PAIRS);

        let table = ingest(&expr, &pairs).expect("ingest");
        assert_eq!(table.n(), 2);
        assert_eq!(table.p(), 2);
        assert_eq!(table.genes(), ["G1".to_string(), "G2".to_string()]);
        assert_eq!(table.patients(), ["patA".to_string(), "patB".to_string()]);

        // G1 is the average of its two probe rows: (1+3)/2 = 2 for s1, etc.
        assert_eq!(table.x()[(0, 0)], 2.0);
        assert_eq!(table.y()[(0, 0)], 3.0);
        assert_eq!(table.x()[(1, 0)], 4.0);
        assert_eq!(table.y()[(1, 0)], 5.0);
        assert_eq!(table.x()[(0, 1)], 10.0);
        assert_eq!(table.y()[(1, 1)], 40.0);
    }

    #[test]
    fn shape_is_patients_by_genes() {
        let dir = tempfile::tempdir().expect("tempdir");
        let n = 25;
        let p = 100;
        let samples: Vec<String> = (0..n)
            .flat_map(|i| [format!("t{i}"), format!("h{i}")])
            .collect();
        let mut expr = String::from("gene");
        for s in &samples {
            expr.push('\t');
            expr.push_str(s);
        }
        expr.push('\n');
        for g in 0..p {
            expr.push_str(&format!("G{g}"));
            for s in 0..samples.len() {
                expr.push_str(&format!("\t{}", (g * samples.len() + s) as f64));
            }
            expr.push('\n');
        }
        let mut pairs = String::from("sample_id\tpatient_id\tcondition\n");
        for i in 0..n {
            pairs.push_str(&format!("t{i}\tpat{i}\tI\nh{i}\tpat{i}\tII\n"));
        }
        let expr = write_file(&dir, "expr.tsv", &expr);
        let pairs = write_file(&dir, "pairs.tsv", &pairs);

        let table = ingest(&expr, &pairs).expect("ingest");
        assert_eq!(table.n(), 25);
        assert_eq!(table.p(), 100);

        let columns = table.gene_indices(&["G3".into(), "G1".into(), "G3".into()]);
        assert_eq!(columns, [1, 3]);
        let data = table.dataset(&columns).expect("dataset");
        assert_eq!(data.n_samples(), 25);
        assert_eq!(data.n_variables(), 2);
        // Patient 0, gene 1 under condition I is sample "t0" = column 0.
        assert_eq!(data.x()[(0, 0)], (samples.len()) as f64);
    }

    #[test]
    fn unpaired_patients_are_listed() {
        let dir = tempfile::tempdir().expect("tempdir");
        let expr = write_file(
            &dir,
            "expr.tsv",
            "gene\ts1\ts2\ts3\nG1\t1\t2\t3\nG2\t4\t5\t6\n",
        );
        let pairs = write_file(
            &dir,
            "pairs.tsv",
            "sample_id\tpatient_id\tcondition\ns1\tpatA\tI\ns2\tpatA\tII\ns3\tpatB\tI\n",
        );
        let err = ingest(&expr, &pairs).expect_err("patB lacks condition II");
        let message = err.to_string();
        assert!(message.contains("patB"), "message was: {message}");
        assert!(message.contains("missing condition II"), "message was: {message}");
    }

    #[test]
    fn unknown_condition_label_is_rejected_with_line() {
        let dir = tempfile::tempdir().expect("tempdir");
        let expr = write_file(&dir, "expr.tsv", "gene\ts1\nG1\t1\nG2\t2\n");
        let pairs = write_file(
            &dir,
            "pairs.tsv",
            "sample_id\tpatient_id\tcondition\ns1\tpatA\ttumor\n",
        );
        let err = ingest(&expr, &pairs).expect_err("bad condition");
        let message = err.to_string();
        assert!(message.contains("pairs.tsv:2"), "message was: {message}");
        assert!(message.contains("tumor"), "message was: {message}");
    }

    #[test]
    fn structural_problems_are_rejected() {
        let dir = tempfile::tempdir().expect("tempdir");
        let expr = write_file(
            &dir,
            "expr.tsv",
            "gene\ts1\ts2\ts3\ts4\nG1\t1\t2\t3\t4\nG2\t5\t6\t7\t8\n",
        );

        // A sample the expression table does not carry.
        let pairs = write_file(
            &dir,
            "ghost.tsv",
            "sample_id\tpatient_id\tcondition\nzz\tpatA\tI\ns2\tpatA\tII\n",
        );
        let err = ingest(&expr, &pairs).expect_err("ghost sample");
        assert!(err.to_string().contains("\"zz\""));

        // The same patient twice under one condition.
        let pairs = write_file(
            &dir,
            "twice.tsv",
            "sample_id\tpatient_id\tcondition\n\
             s1\tpatA\tI\ns2\tpatA\tI\ns3\tpatA\tII\n",
        );
        let err = ingest(&expr, &pairs).expect_err("duplicate condition");
        assert!(err.to_string().contains("two samples under condition I"));

        // A sample assigned twice.
        let pairs = write_file(
            &dir,
            "dup.tsv",
            "sample_id\tpatient_id\tcondition\ns1\tpatA\tI\ns1\tpatB\tII\n",
        );
        let err = ingest(&expr, &pairs).expect_err("duplicate sample");
        assert!(err.to_string().contains("already assigned"));

        // Non-numeric expression value, reported with its line.
        let expr_bad = write_file(&dir, "bad.tsv", "gene\ts1\nG1\t1\nG2\tnope\n");
        let pairs_ok = write_file(
            &dir,
            "ok.tsv",
            "sample_id\tpatient_id\tcondition\ns1\tpatA\tI\n",
        );
        let err = ingest(&expr_bad, &pairs_ok).expect_err("bad value");
        assert!(err.to_string().contains("bad.tsv:3"));
    }
}
