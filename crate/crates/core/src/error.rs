//! Error taxonomy shared by the library and the command-line driver.
//!
//! The variants partition failures by who can fix them: `Config` for malformed
//! requests, `Data` for well-formed requests with inadmissible input fields
//! (characteristic condition violated, corner mismatch, wrong signature),
//! `Divergence` for iterations that stop making progress, `DomainCoverage` for
//! geometry that leaves the resolvable region, and `Numerics` for conditioning
//! failures (singular metric, NaN contamination).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The request itself is malformed (bad sizes, incompatible options).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input fields violate an admissibility condition required by the solver.
    #[error("data error: {0}")]
    Data(String),

    /// An iteration failed to converge within its budget.
    #[error("divergence: {0}")]
    Divergence(String),

    /// A ray, stencil, or slice left the region where the problem is posed.
    #[error("domain coverage: {0}")]
    DomainCoverage(String),

    /// Floating-point breakdown: singular systems, NaN, loss of signature.
    #[error("numerical failure: {0}")]
    Numerics(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable process exit code for each failure class.
    ///
    /// 0 is success; 1 is reserved for panics so every deliberate failure
    /// is distinguishable from a crash.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Divergence(_) => 4,
            Error::DomainCoverage(_) => 5,
            Error::Numerics(_) => 6,
        }
    }
}
