use std::fmt;

use thiserror::Error;

/// One failed dimension invariant of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionViolation {
    /// Subsystem index, or `None` for network-level fields such as the SCM.
    pub subsystem: Option<usize>,
    pub field: String,
    pub detail: String,
}

impl fmt::Display for DimensionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.subsystem {
            Some(i) => write!(f, "subsystem {i}: {}: {}", self.field, self.detail),
            None => write!(f, "{}: {}", self.field, self.detail),
        }
    }
}

/// Which generalized-LFT inverse failed to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LftSide {
    /// `M - P1 H`
    State,
    /// `N - P2 S`
    Interconnect,
}

impl fmt::Display for LftSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LftSide::State => f.write_str("M - P1*H"),
            LftSide::Interconnect => f.write_str("N - P2*S"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {}", join(.0))]
    Dimension(Vec<DimensionViolation>),

    #[error("ill-conditioned rank decision: {0}")]
    Conditioning(String),

    #[error("generalized LFT of subsystem {subsystem} is not well posed: {side} is singular (rcond {rcond:.3e})")]
    LftIllPosed {
        subsystem: usize,
        side: LftSide,
        rcond: f64,
    },

    #[error("network is not well posed: I - Phi*A_zv is singular (rcond {rcond:.3e})")]
    WellPosedness { rcond: f64 },

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("random model generation exhausted after {attempts} rejected samples")]
    GenerationExhausted { attempts: usize },

    #[error("descriptor system is not regular; the test is inconclusive")]
    InconclusiveNotRegular,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn join(v: &[DimensionViolation]) -> String {
    v.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
