use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    Domain(&'static str),
    /// An iterative special-function evaluation did not converge.
    NoConvergence(&'static str),
    /// Exhaustive search was asked for more servers than its guard allows.
    SearchTooLarge { servers: u32, limit: u32 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(what) => write!(f, "domain error: {what}"),
            Error::NoConvergence(what) => write!(f, "no convergence: {what}"),
            Error::SearchTooLarge { servers, limit } => write!(
                f,
                "exhaustive search over {servers} servers exceeds the limit of {limit}"
            ),
        }
    }
}

impl core::error::Error for Error {}
