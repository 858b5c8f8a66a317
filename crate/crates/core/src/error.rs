use thiserror::Error;

use crate::model::{CrimeCategory, Mode, ModelParams, ObservedCellId, ReportStatus, SpouseState};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative count {value} in observed cell {cell}")]
    NegativeCell { cell: ObservedCellId, value: f64 },

    #[error("non-finite count in observed cell {cell}")]
    NonFiniteCell { cell: ObservedCellId },

    #[error("table is empty: total count must be positive")]
    EmptyTable,

    #[error("invalid complete-data cell ({mode}, {crime}, {status}, spouse {spouse})")]
    InvalidCell {
        mode: Mode,
        crime: CrimeCategory,
        status: ReportStatus,
        spouse: SpouseState,
    },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged {
        iterations: usize,
        params: Box<ModelParams>,
    },

    #[error("empty sample: shrinkage needs a positive pseudo-sample size")]
    EmptySample,

    #[error("count and prior vectors differ in length ({counts} vs {prior})")]
    LengthMismatch { counts: usize, prior: usize },

    #[error("unit index {index} out of range for {len} sampling units")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("jackknife needs at least two sampling units, got {0}")]
    TooFewUnits(usize),

    #[error("sampling unit {unit}: {source}")]
    InvalidUnit {
        unit: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("jackknife replicate {replicate} (unit deleted) did not converge after {iterations} iterations")]
    ReplicateNotConverged { replicate: usize, iterations: usize },

    #[error("degenerate strata: {0}")]
    DegenerateStrata(String),

    #[error("no admissible expected cell for stratum {stratum}")]
    NoAdmissibleRoot { stratum: usize },

    #[error("line {line}: missing header or wrong columns: {message}")]
    BadHeader { line: u64, message: String },

    #[error("missing observed cell ({mode}, {crime}, {spouse}){unit}")]
    MissingCell {
        mode: String,
        crime: String,
        spouse: String,
        unit: UnitLabel,
    },

    #[error("duplicate cell on line {second_line} (first seen on line {first_line})")]
    DuplicateCell { first_line: u64, second_line: u64 },

    #[error("line {line}: bad value {value:?} for field `{field}`")]
    BadEnum {
        line: u64,
        field: &'static str,
        value: String,
    },

    #[error("line {line}: bad number {value:?}")]
    BadNumber { line: u64, value: String },

    #[error("line {line}: {source}")]
    InvalidRow {
        line: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("result contains a non-finite value in `{0}`")]
    NonFiniteResult(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Optional sampling-unit label attached to a missing-cell error.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnitLabel(pub Option<String>);

impl std::fmt::Display for UnitLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.0 {
            Some(unit) => write!(f, " in unit {unit:?}"),
            None => Ok(()),
        }
    }
}

impl Error {
    /// True for errors caused by bad input data or arguments, as opposed to
    /// convergence failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NotConverged { .. } | Error::ReplicateNotConverged { .. }
        )
    }
}
