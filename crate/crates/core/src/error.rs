use thiserror::Error;

/// Errors raised by the monitoring toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// The mission description violates one of its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Trajectory parameters are outside the feasible set.
    #[error("invalid trajectory parameters: {0}")]
    Params(String),

    /// A numeric input was NaN or infinite.
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    /// A probability or state argument is outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A run produced a trajectory that violates a hard constraint.
    #[error("constraint violation: {0}")]
    Constraint(String),

    /// Candidate enumeration would exceed the configured cap.
    #[error("enumeration cap exceeded: about {estimate:.3e} candidates, cap is {cap}; shorten the window")]
    EnumerationCap { estimate: f64, cap: usize },

    /// A trace and its derivative states do not line up.
    #[error("mismatched lengths: {0}")]
    Mismatch(String),

    /// An interval handed to the derivative propagator contains an event.
    #[error("interval [{t0}, {t1}] contains an interior event")]
    InteriorEvent { t0: f64, t1: f64 },

    /// The requested control transition is not one of the three switch forms.
    #[error("unknown control transition {before} -> {after}")]
    UnknownTransition { before: f64, after: f64 },

    /// A window schedule cannot be tiled.
    #[error("schedule is not periodic: {0}")]
    Aperiodic(String),

    /// No sequence or timing satisfies the horizon budget.
    #[error("infeasible schedule: {0}")]
    Infeasible(String),

    /// Gradient or cost became NaN/inf during descent.
    #[error("non-finite objective or gradient at iteration {0}")]
    Diverged(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn finite(x: f64, what: &'static str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what))
    }
}
