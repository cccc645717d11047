use thiserror::Error;

/// Errors produced by the model, the integrators and the planners.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("state outside the nonnegative quadrant: x = {x}, y = {y}")]
    NegativeState { x: f64, y: f64 },

    #[error("negative release rate u = {0}")]
    NegativeControl(f64),

    #[error("population not viable: requires Q_x > Q_y > 1 (Q_x = {q_x}, Q_y = {q_y})")]
    NotViable { q_x: f64, q_y: f64 },

    #[error("coexistence equilibria do not exist for these parameters")]
    NoCoexistence,

    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("maximum number of integrator steps ({0}) exceeded")]
    TooManySteps(usize),

    #[error("solution became negative at t = {t} (component {component} = {value})")]
    NegativeExcursion { t: f64, component: usize, value: f64 },

    #[error("did not converge after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("degenerate linearisation: {0}")]
    Degenerate(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("unknown strain `{0}`")]
    UnknownStrain(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
