use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::Result;
use crate::linalg;
use crate::manifold::{Manifold, Point, Tangent};

/// `Rⁿ` with the dot product; points are `n×1` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EuclideanSpace {
    rows: usize,
    cols: usize,
}

impl EuclideanSpace {
    pub const fn new(n: usize) -> Self {
        EuclideanSpace { rows: n, cols: 1 }
    }

    /// Flat space of `rows×cols` matrices with the trace inner product.
    pub const fn matrices(rows: usize, cols: usize) -> Self {
        EuclideanSpace { rows, cols }
    }
}

impl Manifold for EuclideanSpace {
    fn name(&self) -> &'static str {
        "euclidean"
    }

    fn dim(&self) -> usize {
        self.rows * self.cols
    }

    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn membership_residual(&self, x: &Point) -> f64 {
        if linalg::is_finite(x) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn tangent_residual(&self, _x: &Point, _v: &Tangent) -> f64 {
        0.0
    }

    fn project_tangent(&self, _x: &Point, a: &DMatrix<f64>) -> Tangent {
        a.clone()
    }

    fn inner(&self, _x: &Point, u: &Tangent, v: &Tangent) -> f64 {
        u.dot(v)
    }

    fn exp(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_shape(v)?;
        Ok(x + v)
    }

    fn log(&self, x: &Point, y: &Point) -> Result<Tangent> {
        self.check_shape(y)?;
        Ok(y - x)
    }

    fn in_log_domain(&self, _x: &Point, _y: &Point) -> bool {
        true
    }

    fn retract(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.exp(x, v)
    }

    fn dist(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_shape(y)?;
        Ok((y - x).norm())
    }

    fn curvature_lower_bound(&self) -> Option<f64> {
        Some(0.0)
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        linalg::gaussian_matrix(self.rows, self.cols, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn straight_line_exp_and_log() {
        let e = EuclideanSpace::new(2);
        assert_eq!(e.exp(&col(&[1.0, 2.0]), &col(&[3.0, -1.0])).unwrap(), col(&[4.0, 1.0]));
        assert_eq!(e.log(&col(&[0.0, 0.0]), &col(&[1.0, 1.0])).unwrap(), col(&[1.0, 1.0]));
        assert_eq!(e.dist(&col(&[0.0, 0.0]), &col(&[3.0, 4.0])).unwrap(), 5.0);
    }

    #[test]
    fn zero_velocity_and_self_distance() {
        let e = EuclideanSpace::new(3);
        let x = col(&[0.5, -1.0, 2.0]);
        assert_eq!(e.exp(&x, &DMatrix::zeros(3, 1)).unwrap(), x);
        assert_eq!(e.log(&x, &x).unwrap(), DMatrix::zeros(3, 1));
        assert_eq!(e.dist(&x, &x).unwrap(), 0.0);
    }
}
