use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point set is empty")]
    EmptySet,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point {point:?} is a nonregular point of the manifold")]
    NonregularPoint { point: Vec<f64> },

    #[error("point {point:?} does not lie on the manifold")]
    OffManifold { point: Vec<f64> },

    #[error("no admissible control at state {state:?} (mesh {mesh})")]
    EmptyAdmissible { state: Vec<f64>, mesh: f64 },

    #[error("no invertible projection of the control differential at u={control:?}, x={state:?}")]
    NoInvertibleProjection { control: Vec<f64>, state: Vec<f64> },

    #[error("jacobian is singular (|det| = {det:e})")]
    SingularJacobian { det: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("iterate left the ball of radius {radius} (distance {distance})")]
    LeftBall { radius: f64, distance: f64 },

    #[error("sample point {point:?} lies outside the function domain")]
    DomainViolation { point: Vec<f64> },

    #[error("dynamics left the next state space by {excess:e} at {point:?}")]
    OutOfRegion { point: Vec<f64>, excess: f64 },

    #[error("stage {stage}, node {node}: {source}")]
    Stage {
        stage: usize,
        node: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips stage/node context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::EmptyAdmissible { .. }
                | Error::NoInvertibleProjection { .. }
                | Error::SingularJacobian { .. }
                | Error::NoConvergence { .. }
                | Error::LeftBall { .. }
                | Error::OutOfRegion { .. }
                | Error::DomainViolation { .. }
        )
    }
}
