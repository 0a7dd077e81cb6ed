//! Gene-set file parsing (GMT format).
//!
//! A GMT file carries one gene set per line: set name, description, then
//! the member gene identifiers, all tab-separated. [`parse_gmt`] reads a
//! file into a [`GeneSetCollection`], deduplicating each set's members
//! while preserving their order. Malformed lines are rejected with their
//! 1-based line number; an empty file yields an empty collection and a
//! warning on standard error.

use std::path::Path;

use crate::error::{CliError, Result};

/// One named gene set.
#[derive(Debug, Clone)]
pub struct GeneSet {
    name: String,
    description: String,
    genes: Vec<String>,
}

impl GeneSet {
    /// Builds a set, deduplicating genes while keeping first-appearance
    /// order.
    pub fn new(name: impl Into<String>, description: impl Into<String>, genes: &[&str]) -> Self {
        let mut deduped: Vec<String> = Vec::with_capacity(genes.len());
        for &gene in genes {
            if !gene.is_empty() && !deduped.iter().any(|g| g == gene) {
                deduped.push(gene.to_string());
            }
        }
        GeneSet {
            name: name.into(),
            description: description.into(),
            genes: deduped,
        }
    }

    /// The set's identifier.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// The free-text description field.
    pub fn description(&self) -> &str {
        &self.description
    }

    /// Member gene identifiers, deduplicated.
    pub fn genes(&self) -> &[String] {
        &self.genes
    }
}

/// An ordered collection of gene sets from one source file.
#[derive(Debug, Clone, Default)]
pub struct GeneSetCollection {
    sets: Vec<GeneSet>,
    source: String,
}

impl GeneSetCollection {
    /// A collection over explicit sets, tagged with its source.
    pub fn new(sets: Vec<GeneSet>, source: impl Into<String>) -> Self {
        GeneSetCollection {
            sets,
            source: source.into(),
        }
    }

    /// The sets in file order.
    pub fn sets(&self) -> &[GeneSet] {
        &self.sets
    }

    /// Number of sets.
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    /// Whether the collection holds no sets.
    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Where the collection came from (file name or synthetic tag).
    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Parses a GMT file.
///
/// # Errors
///
/// [`CliError::Io`] when the file cannot be read; [`CliError::Parse`]
/// (with the 1-based line number) for a line with fewer than two fields.
pub fn parse_gmt(path: &Path) -> Result<GeneSetCollection> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut sets: Vec<GeneSet> = Vec::new();
    for (index, raw) in text.lines().enumerate() {
        let lineno = index + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(CliError::parse(
                path,
                lineno,
                "expected at least a set name and a description, tab-separated",
            ));
        }
        let name = fields[0].trim();
        if name.is_empty() {
            return Err(CliError::parse(path, lineno, "empty set name"));
        }
        let genes: Vec<&str> = fields[2..].iter().map(|g| g.trim()).collect();
        sets.push(GeneSet::new(name, fields[1].trim(), &genes));
    }
    if sets.is_empty() {
        eprintln!("warning: {} defines no gene sets", path.display());
    }
    Ok(GeneSetCollection::new(
        sets,
        path.file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
    ))
}
