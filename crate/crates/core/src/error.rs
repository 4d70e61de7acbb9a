use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by geometric operations and the optimization drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch on {manifold}: expected {expected:?}, got {got:?}")]
    Shape {
        manifold: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("point is not on {manifold} (residual {residual:.3e})")]
    NotOnManifold { manifold: &'static str, residual: f64 },

    #[error("vector is not tangent on {manifold} (residual {residual:.3e})")]
    NotTangent { manifold: &'static str, residual: f64 },

    #[error("step of length {length:.6} exceeds the injectivity radius {radius:.6} of {manifold}")]
    BeyondInjectivityRadius {
        manifold: &'static str,
        length: f64,
        radius: f64,
    },

    #[error("log is undefined on {manifold}: {reason}")]
    OutsideLogDomain { manifold: &'static str, reason: String },

    #[error("rank collapse: smallest singular value {sigma_min:.3e} below floor")]
    RankDeficient { sigma_min: f64 },

    #[error("matrix is not symmetric positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotSpd { min_eigenvalue: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at iteration {iter}")]
    NonFinite { iter: usize },

    #[error("divergence at iteration {iter}: loss {loss:.3e}")]
    Diverged { iter: usize, loss: f64 },

    #[error("step {iter} failed: {source}")]
    Step {
        iter: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, iter: usize) -> Error {
        match self {
            e @ (Error::NonFinite { .. } | Error::Diverged { .. } | Error::Step { .. }) => e,
            other => Error::Step {
                iter,
                source: Box::new(other),
            },
        }
    }

    /// Iteration (or gossip event) index attached to a runtime failure, if any.
    pub fn iteration(&self) -> Option<usize> {
        match self {
            Error::NonFinite { iter } | Error::Diverged { iter, .. } | Error::Step { iter, .. } => {
                Some(*iter)
            }
            _ => None,
        }
    }
}
