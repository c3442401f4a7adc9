use thiserror::Error;

/// Errors raised by the model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },

    #[error("density is singular at ({mu_h}, {mu_v})")]
    SingularPoint { mu_h: f64, mu_v: f64 },

    #[error("argument {value} outside the domain of {function}")]
    Domain { function: &'static str, value: f64 },

    #[error("QBER undefined: total gain is zero")]
    UndefinedQber,

    #[error("quadrature not converged: node doubling changed {quantity} by {relative_change:e}")]
    Accuracy { quantity: &'static str, relative_change: f64 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("linear program too ill-conditioned: returned point violates a row by {violation:e} (relative)")]
    IllConditioned { violation: f64 },

    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: &'static str) -> Error {
    Error::InvalidParameter { name, reason }
}
