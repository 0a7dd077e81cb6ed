//! Command-line pipeline for differential-correlation testing.
//!
//! This crate wraps the `corrdiff-core` statistics in an end-to-end
//! workflow for paired expression studies:
//!
//! * [`ingest`] reads an expression table plus a sample-pairing file
//!   into per-condition matrices aligned by patient;
//! * [`parse_gmt`] reads gene-set definitions;
//! * [`run_batch`] tests every gene set under a shared analysis plan,
//!   isolating per-set failures;
//! * [`fdr_adjust`] controls the false discovery rate across sets;
//! * [`summarize`] reports cross-test concordance.
//!
//! The `corrdiff` binary exposes all of this as the `test`, `simulate`,
//! and `power` subcommands (see [`cli`] via [`run`]). All outputs are
//! deterministic given the inputs and the seed: per-set permutation
//! streams derive from the global seed and the set name, so identical
//! invocations produce byte-identical files.

mod batch;
mod cli;
mod error;
mod fdr;
mod gmt;
mod ingest;
mod summary;

pub use batch::{results_tsv, run_batch, BatchConfig, PathwayResult, MIN_SET_GENES};
pub use cli::{execute, run, Cli};
pub use error::{CliError, Result};
pub use fdr::{fdr_adjust, FdrMethod};
pub use gmt::{parse_gmt, GeneSet, GeneSetCollection};
pub use ingest::{expression_tsv, ingest, ConditionLabel, ExpressionTable};
pub use summary::{summarize, BatchSummary};
