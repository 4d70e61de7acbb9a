use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent};
use crate::manifolds::EuclideanSpace;
use crate::sgd::Problem;

/// Linear regression `y = xᵀθ + σε` with `x, ε` standard Gaussian, fitted by
/// least squares on `Rⁿ`.
#[derive(Debug, Clone)]
pub struct LeastSquaresProblem {
    space: EuclideanSpace,
    theta: DVector<f64>,
    noise: f64,
}

impl LeastSquaresProblem {
    pub fn new(theta: DVector<f64>, noise: f64) -> Result<Self> {
        if !(noise >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise must be >= 0, got {noise}")));
        }
        Ok(LeastSquaresProblem {
            space: EuclideanSpace::new(theta.len()),
            theta,
            noise,
        })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }
}

impl Problem for LeastSquaresProblem {
    type Sample = (DVector<f64>, f64);

    fn manifold(&self) -> &dyn Manifold {
        &self.space
    }

    fn sample(&self, rng: &mut dyn RngCore) -> (DVector<f64>, f64) {
        let x = DVector::from_fn(self.theta.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let e: f64 = rng.sample(StandardNormal);
        let y = x.dot(&self.theta) + self.noise * e;
        (x, y)
    }

    fn loss(&self, (x, y): &(DVector<f64>, f64), w: &Point) -> f64 {
        0.5 * (x.dot(&w.column(0)) - y).powi(2)
    }

    fn stochastic_grad(&self, (x, y): &(DVector<f64>, f64), w: &Point) -> Tangent {
        let r = x.dot(&w.column(0)) - y;
        DMatrix::from_column_slice(x.len(), 1, (x * r).as_slice())
    }

    fn batch_cost(&self, w: &Point) -> Option<f64> {
        let d = w.column(0) - &self.theta;
        Some(0.5 * (d.norm_squared() + self.noise * self.noise))
    }

    fn batch_grad(&self, w: &Point) -> Option<Tangent> {
        Some(w - DMatrix::from_column_slice(self.theta.len(), 1, self.theta.as_slice()))
    }

    fn error_metric(&self, w: &Point) -> Option<f64> {
        Some((w.column(0) - &self.theta).norm())
    }
}
