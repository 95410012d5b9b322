//! Exit-code contract of the binary.

use std::fmt::Display;

use subeig::Error;

pub const VERIFY_FAILED: i32 = 1;
pub const CONFIG: i32 = 2;
pub const NO_CONVERGENCE: i32 = 3;
pub const DEGENERATE: i32 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

pub type CliResult<T> = Result<T, Failure>;

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure {
            code: CONFIG,
            msg: msg.into(),
        }
    }

    /// Prefixes the message, keeping the code.
    pub fn context(mut self, what: impl Display) -> Self {
        self.msg = format!("{what}: {}", self.msg);
        self
    }
}

pub fn code_for(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. }
        | Error::MultigridNoConvergence { .. }
        | Error::CoarseningStagnation { .. } => NO_CONVERGENCE,
        Error::NotPositiveDefinite(_)
        | Error::NegativeNorm(_)
        | Error::Breakdown(_)
        | Error::EmptyBasis
        | Error::RankDeficient(_)
        | Error::DegenerateGap(_)
        | Error::DegenerateElement(_) => DEGENERATE,
        _ => CONFIG,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: code_for(&e),
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::config(e.to_string())
    }
}

pub trait Context<T> {
    fn context(self, what: impl Display) -> CliResult<T>;
}

impl<T, E: Into<Failure>> Context<T> for Result<T, E> {
    fn context(self, what: impl Display) -> CliResult<T> {
        self.map_err(|e| e.into().context(what))
    }
}
