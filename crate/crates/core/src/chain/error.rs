use std::fmt;

use thiserror::Error;

use crate::linalg::LinalgError;

/// One broken invariant of a raw rate table.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotSquare { rows: usize, cols: usize },
    WeightCount { expected: usize, found: usize },
    NonPositiveWeight { state: usize },
    NonFinite { from: usize, to: usize },
    NegativeRate { from: usize, to: usize },
    SymmetryViolation { from: usize, to: usize, forward: f64, backward: f64 },
    PositiveRowSum { state: usize, sum: f64 },
    NotIrreducible { components: Vec<Vec<usize>> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotSquare { rows, cols } => {
                write!(f, "rate table is {rows}x{cols}, not square")
            }
            Violation::WeightCount { expected, found } => {
                write!(f, "expected {expected} weights, found {found}")
            }
            Violation::NonPositiveWeight { state } => {
                write!(f, "weight of state {state} is not positive")
            }
            Violation::NonFinite { from, to } => write!(f, "rate ({from},{to}) is not finite"),
            Violation::NegativeRate { from, to } => {
                write!(f, "negative off-diagonal rate at ({from},{to})")
            }
            Violation::SymmetryViolation {
                from,
                to,
                forward,
                backward,
            } => write!(
                f,
                "detailed balance fails at ({from},{to}): m(x)Q(x,y) = {forward}, m(y)Q(y,x) = {backward}"
            ),
            Violation::PositiveRowSum { state, sum } => {
                write!(f, "row {state} sums to {sum} > 0")
            }
            Violation::NotIrreducible { components } => {
                write!(f, "chain is not irreducible; components {components:?}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("invalid chain: {}", list(.0))]
    Invalid(Vec<Violation>),
    #[error("trace set must be a nonempty proper subset of the {states} states")]
    ImproperSubset { states: usize },
    #[error("state index {index} out of range for {states} states")]
    IndexOutOfRange { index: usize, states: usize },
    #[error("killed generator -Q00 is singular; the trace set is not hit from every state")]
    SingularKilledGenerator,
    #[error("function is not excessive for the killed chain at states {states:?}")]
    NotExcessive { states: Vec<usize> },
    #[error("trace generator has negative off-diagonal {value} at ({from},{to})")]
    NonMarkovTrace { from: usize, to: usize, value: f64 },
    #[error("trace identity violated: max relative residual {residual:e}")]
    IdentityViolation { residual: f64 },
    #[error("time-change density is not positive at state {state}")]
    NonPositiveDensity { state: usize },
    #[error("weights must be positive; state {state} is not")]
    NonPositiveWeight { state: usize },
    #[error("negative rate parameter {0}")]
    NegativeRate(f64),
    #[error("expected a vector of length {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("lattice trace predicate selects no site")]
    EmptyTraceSet,
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("chain file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl ChainError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ChainError::Invalid(v) => v,
            _ => &[],
        }
    }
}
