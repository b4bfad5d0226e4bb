//! Error type shared by every stage of the pipeline.

use alloc::string::String;
use core::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure modes of the geometry, solver, surrogate and estimation stages.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A configuration or input value violates a documented precondition.
    InvalidInput(String),
    /// A queried point lies outside the triangulated domain.
    OutOfDomain { x: f64, y: f64 },
    /// A vertical section line does not cut the interior of the domain.
    SectionOutOfRange { x: f64 },
    /// An index referred to a vertex, triangle or edge that does not exist.
    IndexOutOfBounds { what: &'static str, index: usize, len: usize },
    /// A linear system factorisation hit a zero (or subnormal) pivot.
    SingularMatrix { row: usize },
    /// Newton's method failed to reach the residual tolerance.
    NewtonDiverged { time: f64, residual: f64 },
    /// A value that must be finite came out NaN or infinite.
    NonFinite { context: String },
    /// A dataset column has zero spread, so it cannot be normalised.
    ZeroVariance { column: usize },
    /// Operand dimensions do not line up.
    ShapeMismatch { context: &'static str, expected: usize, got: usize },
    /// Training produced a non-finite loss.
    TrainingDiverged { epoch: usize },
    /// A search direction failed the descent test `gᵀd > 0`.
    NotDescentDirection,
    /// Backtracking exhausted its trial budget without sufficient decrease.
    LineSearchFailed { trials: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::OutOfDomain { x, y } => {
                write!(f, "point ({x}, {y}) lies outside the mesh")
            }
            Error::SectionOutOfRange { x } => {
                write!(f, "vertical section x = {x} does not cut the domain interior")
            }
            Error::IndexOutOfBounds { what, index, len } => {
                write!(f, "{what} index {index} out of bounds (len {len})")
            }
            Error::SingularMatrix { row } => {
                write!(f, "singular linear system: no usable pivot in row {row}")
            }
            Error::NewtonDiverged { time, residual } => write!(
                f,
                "Newton iteration at t = {time} stalled with residual {residual:e}"
            ),
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::ZeroVariance { column } => {
                write!(f, "dataset column {column} has zero variance")
            }
            Error::ShapeMismatch { context, expected, got } => {
                write!(f, "{context}: expected length {expected}, got {got}")
            }
            Error::TrainingDiverged { epoch } => {
                write!(f, "training loss became non-finite in epoch {epoch}")
            }
            Error::NotDescentDirection => {
                write!(f, "search direction is not a descent direction (g.d <= 0)")
            }
            Error::LineSearchFailed { trials } => {
                write!(f, "line search found no admissible step in {trials} trials")
            }
        }
    }
}

impl core::error::Error for Error {}

/// Shorthand for [`Error::InvalidInput`] with a formatted message.
#[macro_export]
macro_rules! invalid_input {
    ($($arg:tt)*) => {
        $crate::Error::InvalidInput(alloc::format!($($arg)*))
    };
}
