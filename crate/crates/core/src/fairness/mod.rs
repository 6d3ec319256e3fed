//! Group fairness and predictive metrics, stratified over local homophily.
//!
//! Gaps that need an empty conditioning group are `None` and are skipped, with
//! a count, whenever reports are averaged.

mod compare;
mod metrics;
mod strata;

use thiserror::Error;

use crate::homophily::HomophilyError;

pub use compare::{
    aggregate_reports, design_comparison, AggregateBin, AggregateReport, ComparisonBin,
    DesignComparison, MeanCell,
};
pub use metrics::{
    accuracy, equal_opportunity, f1_binary, fairness_report, statistical_parity, FairnessReport,
};
pub use strata::{
    high_hs_slice, stratified_report, stratify, BinReport, HighHsSlice, HomophilyBin, SliceBin,
    StratifiedReport, Stratification, BIN_WIDTH, N_BINS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FairnessError {
    #[error("no bin has defined values for both design families")]
    NoOverlap,
    #[error("reports mix hop radii {0} and {1}")]
    MixedHops(usize, usize),
    #[error("no evaluated node has local sensitive homophily above {0}")]
    EmptySlice(f64),
    #[error("threshold must be in [0, 1], got {0}")]
    BadThreshold(f64),
    #[error("{what} covers {got} nodes, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Homophily(#[from] HomophilyError),
}
