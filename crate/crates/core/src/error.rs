use std::fmt;

use thiserror::Error;

/// A single violated feasibility inequality found while completing a partial
/// mode matrix to a unitary.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Squared moduli of the fixed entries of a row exceed 1.
    RowNorm { row: usize, norm_sq: f64 },
    /// Squared moduli of the fixed entries of a column exceed 1.
    ColumnNorm { col: usize, norm_sq: f64 },
    /// The inner product the free parts of two rows must realise is larger
    /// than the product of the norms left over for them (Cauchy-Schwarz).
    Schwarz { rows: (usize, usize), cosine: f64 },
    /// The Gram matrix the free parts must realise is not positive
    /// semidefinite even though every pair of rows passes the Schwarz test.
    Gram { min_eigenvalue: f64 },
    /// The free parts need more columns than the matrix has.
    Rank { required: usize, available: usize },
}

impl Violation {
    pub fn is_schwarz(&self) -> bool {
        matches!(self, Violation::Schwarz { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowNorm { row, norm_sq } => {
                write!(
                    f,
                    "row {row} normalization violated (fixed part |.|^2 = {norm_sq:.6e} > 1)"
                )
            }
            Violation::ColumnNorm { col, norm_sq } => {
                write!(
                    f,
                    "column {col} normalization violated (fixed part |.|^2 = {norm_sq:.6e} > 1)"
                )
            }
            Violation::Schwarz { rows, cosine } => write!(
                f,
                "Schwarz inequality violated between rows {} and {} (|cos| = {cosine:.6e} > 1)",
                rows.0, rows.1
            ),
            Violation::Gram { min_eigenvalue } => {
                write!(
                    f,
                    "row Gram matrix not positive semidefinite (min eigenvalue {min_eigenvalue:.6e})"
                )
            }
            Violation::Rank { required, available } => write!(
                f,
                "orthogonal completion needs {required} free columns but only {available} are available"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("photon number {photons} exceeds the supported cap of {cap}")]
    Capacity { photons: usize, cap: usize },
    #[error("matrix is not unitary (max deviation {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("{value} lies outside the domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },
    #[error("infeasible: {}", format_violations(.0))]
    Infeasible(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Violations carried by an [`Error::Infeasible`], empty otherwise.
    pub fn violations(&self) -> &[Violation] {
        match self {
            Error::Infeasible(v) => v,
            _ => &[],
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
