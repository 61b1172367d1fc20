use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the simulation and analysis core.
///
/// `Validation` and `Input` are caller mistakes and are detected before any
/// heavy computation starts. `NotConverged`, `Ambiguous` and `Numerical` are
/// diagnostics from an otherwise valid run.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A value violates a documented invariant of its type.
    Validation(String),
    /// Malformed, missing or insufficient input data.
    Input(String),
    /// The requested operation is outside the regime the closed form covers.
    Unsupported(&'static str),
    /// Degenerate spectrum: the requested eigenvector is not unique.
    Ambiguous(String),
    /// An eigen-decomposition or linear solve broke down.
    Numerical(String),
    /// Iterative solver ran out of budget. `best` holds the best iterate.
    NotConverged {
        iterations: usize,
        cost: f64,
        best: Vec<f64>,
    },
    /// Calibration targets cannot be met; `closest` is the best achievable
    /// `(frac_below_1ueV, frac_below_3ueV)`.
    Calibration { reason: String, closest: [f64; 2] },
    /// A curve fit failed; `curve` holds the raw `(x, y, σ)` points.
    CurveFit { cause: Box<Error>, curve: Vec<[f64; 3]> },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// True for errors a user fixes by editing configuration or data.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Validation(_) | Error::Input(_) | Error::Unsupported(_) | Error::Calibration { .. } => true,
            Error::CurveFit { cause, .. } => cause.is_user_error(),
            _ => false,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported regime: {msg}"),
            Error::Ambiguous(msg) => write!(f, "ambiguous result: {msg}"),
            Error::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            Error::NotConverged { iterations, cost, .. } => {
                write!(f, "solver did not converge after {iterations} iterations (cost {cost:.6e})")
            }
            Error::Calibration { reason, closest } => write!(
                f,
                "calibration failed: {reason} (closest achievable fractions {:.4}, {:.4})",
                closest[0], closest[1]
            ),
            Error::CurveFit { cause, curve } => write!(f, "fit to {} curve points failed: {cause}", curve.len()),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
