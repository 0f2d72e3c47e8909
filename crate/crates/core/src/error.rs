use alloc::string::String;
use core::fmt;

use crate::chain::Check;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes do not line up (matrix not square, row count vs. labels, ...).
    Structure(String),
    /// A model failed one of the acceptance checks.
    Validation {
        check: Check,
        state: Option<usize>,
        detail: String,
    },
    /// An iterative or direct solve did not reach the required accuracy.
    Numerical { what: &'static str, residual: f64 },
    /// A problem is too large for the exact path.
    Capacity {
        what: &'static str,
        requested: usize,
        cap: usize,
    },
    /// Arguments outside the operation's domain.
    Domain(String),
    /// Traces that cannot be combined.
    Alignment(String),
    /// A reliability target that cannot be met below the search cap.
    Infeasible {
        epsilon: f64,
        cap: f64,
        lolp_at_cap: f64,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Structure(msg) => write!(f, "structural error: {msg}"),
            Error::Validation {
                check,
                state: Some(s),
                detail,
            } => write!(f, "validation failed ({check}) at state {s}: {detail}"),
            Error::Validation {
                check,
                state: None,
                detail,
            } => write!(f, "validation failed ({check}): {detail}"),
            Error::Numerical { what, residual } => {
                write!(f, "numerical failure in {what} (residual {residual:e})")
            }
            Error::Capacity {
                what,
                requested,
                cap,
            } => write!(
                f,
                "{what}: {requested} exceeds the exact-solve cap of {cap}; use the Monte Carlo path"
            ),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Alignment(msg) => write!(f, "alignment error: {msg}"),
            Error::Infeasible {
                epsilon,
                cap,
                lolp_at_cap,
            } => write!(
                f,
                "target LOLP {epsilon} unreachable: LOLP at the search cap {cap} is {lolp_at_cap}"
            ),
        }
    }
}

impl core::error::Error for Error {}
