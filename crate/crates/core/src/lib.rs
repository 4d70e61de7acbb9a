//! Stochastic gradient descent on Riemannian manifolds.
//!
//! The crate provides a small manifold contract ([`Manifold`]) with concrete
//! geometries, generic stochastic update rules driven by a [`StepSchedule`],
//! the example problems (streaming PCA on the Grassmannian, the Karcher mean
//! in the Poincaré disk, low-rank PSD regression) and a pairwise gossip
//! process for Gaussian covariances.

pub mod error;
pub mod gossip;
pub mod linalg;
pub mod manifold;
pub mod manifolds;
pub mod problems;
pub mod schedule;
pub mod sgd;

pub use error::{Error, Result};
pub use manifold::{Manifold, Point, Tangent};
pub use schedule::StepSchedule;
pub use sgd::{run, run_observed, Problem, Record, RunOptions, Trajectory, UpdateRule};
