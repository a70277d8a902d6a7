use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the planner and its harness.
#[derive(Debug, Error)]
pub enum Error {
    /// The commanded speed and steering would require the rear axle to travel
    /// further sideways than the wheelbase allows within one time step.
    #[error("kinematic domain violated: speed {speed} m/s with steering {steering} rad over one step")]
    Domain { speed: f64, steering: f64 },

    /// `Q_uu + mu*I` never became positive definite before `mu` hit its ceiling.
    #[error("regularization exhausted (mu = {mu:e}) without a positive-definite control Hessian")]
    RegularizationExhausted { mu: f64 },

    /// Cyclic projection could not leave every keep-out ellipse at one stamp.
    #[error("projection at stamp {tau} did not reach a point outside all obstacles after {sweeps} sweeps")]
    NonConvergence { tau: usize, sweeps: usize },

    /// An iterate left the strict interior required by the log barrier.
    #[error("barrier domain violated at stamp {tau} by {constraint} (g = {value:e})")]
    BarrierDomainViolation {
        tau: usize,
        constraint: ConstraintKind,
        value: f64,
    },

    #[error("unknown built-in scenario {0} (expected 1 or 2)")]
    UnknownScenario(u32),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Which inequality produced a barrier-domain violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    SteeringUpper,
    SteeringLower,
    AccelerationUpper,
    AccelerationLower,
    Obstacle(usize),
}

impl std::fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintKind::SteeringUpper => f.write_str("steering upper bound"),
            ConstraintKind::SteeringLower => f.write_str("steering lower bound"),
            ConstraintKind::AccelerationUpper => f.write_str("acceleration upper bound"),
            ConstraintKind::AccelerationLower => f.write_str("deceleration bound"),
            ConstraintKind::Obstacle(i) => write!(f, "obstacle {i}"),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
