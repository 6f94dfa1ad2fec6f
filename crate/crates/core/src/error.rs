use thiserror::Error;

use crate::sim::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("quadrature did not reach relative tolerance {requested:e} (estimate {achieved:e})")]
    QuadratureFailure { achieved: f64, requested: f64 },

    #[error("total coalescence and death rate is zero; loss distribution undefined")]
    DegenerateChain,

    #[error("measure has zero total mass")]
    ZeroMeasure,

    #[error("measure `{0}` has an atom at 1, which the coming-down criteria exclude")]
    AtomAtOne(String),

    #[error("strength is undefined: the coalescent at `{0}` does not come down from infinity")]
    StrengthUndefined(String),

    #[error("configuration is absorbed: total event rate is zero")]
    Absorbed,

    #[error("tilted sampler failed: {0}")]
    SamplerFailure(String),

    #[error("event budget of {budget} exhausted at t = {time}")]
    EventBudgetExceeded {
        budget: u64,
        time: f64,
        partial: Box<Trajectory>,
    },

    #[error("coupled trajectories lost their order at event {event} (t = {time})")]
    OrderingViolation { event: u64, time: f64 },

    #[error("bisection did not converge within {0} iterations")]
    ConvergenceFailure(usize),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),
}
