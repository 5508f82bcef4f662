use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),

    #[error("invalid problem: {0}")]
    InvalidSpec(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("mass {requested} outside [0, {total}]")]
    MassOutOfRange { requested: f64, total: f64 },

    #[error("cannot transmit with energy {energy}")]
    NoEnergy { energy: usize },

    #[error("observation has zero probability under the current belief: {0}")]
    ZeroProbabilityObservation(String),

    #[error("state kinds do not match: {0}")]
    KindMismatch(String),

    #[error("budget exceeded: {count} > {budget}")]
    BudgetExceeded { count: u128, budget: u128 },

    /// The computed decisions or values contradict the threshold structure.
    #[error("structural violation at t={t}, e={e}, coord={coord}: {reason}")]
    StructuralViolation {
        t: usize,
        e: usize,
        coord: f64,
        reason: String,
    },

    #[error("radial grid too small: r_max={r_max}, tail mass {tail:.3e} at t={t}")]
    GridTooSmall { r_max: f64, tail: f64, t: usize },
}
