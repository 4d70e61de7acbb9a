//! Stochastic problems driven by the generic engine.

pub mod karcher;
pub mod least_squares;
pub mod oja;
pub mod psd;

pub use karcher::{karcher_batch_mean, karcher_f, karcher_grad, KarcherDiskProblem};
pub use least_squares::LeastSquaresProblem;
pub use oja::{oja_grad, oja_stationarity_residual, OjaProblem};
pub use psd::{
    psd_grad, psd_naive_step, psd_step, u_map_closed, u_map_mc, PsdLmsProblem, PsdSample,
};
