use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{Manifold, Point, Tangent};

/// Unit sphere `S^{n-1}` in `Rⁿ` with the induced metric.
///
/// The retraction adds in the ambient space and renormalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sphere {
    n: usize,
}

/// Angular margin from the antipode inside which `log` is refused.
const CUT_LOCUS_MARGIN: f64 = 1e-6;

impl Sphere {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "sphere needs ambient dimension >= 2");
        Sphere { n }
    }

    /// Angle between unit vectors, accurate at both ends of `[0, π]`.
    fn angle(x: &Point, y: &Point) -> f64 {
        let cos = x.dot(y);
        let sin = (y - x * cos).norm();
        sin.atan2(cos)
    }
}

impl Manifold for Sphere {
    fn name(&self) -> &'static str {
        "sphere"
    }

    fn dim(&self) -> usize {
        self.n - 1
    }

    fn shape(&self) -> (usize, usize) {
        (self.n, 1)
    }

    fn membership_residual(&self, x: &Point) -> f64 {
        (x.norm() - 1.0).abs()
    }

    fn tangent_residual(&self, x: &Point, v: &Tangent) -> f64 {
        x.dot(v).abs()
    }

    fn project_tangent(&self, x: &Point, a: &DMatrix<f64>) -> Tangent {
        a - x * x.dot(a)
    }

    fn inner(&self, _x: &Point, u: &Tangent, v: &Tangent) -> f64 {
        u.dot(v)
    }

    fn exp(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_tangent(x, v)?;
        let t = v.norm();
        if t < 1e-300 {
            return Ok(x.clone());
        }
        let y = x * t.cos() + v * (t.sin() / t);
        Ok(&y / y.norm())
    }

    fn log(&self, x: &Point, y: &Point) -> Result<Tangent> {
        self.check_shape(y)?;
        if !self.in_log_domain(x, y) {
            return Err(Error::OutsideLogDomain {
                manifold: self.name(),
                reason: "target is at the antipode".into(),
            });
        }
        let u = y - x * x.dot(y);
        let un = u.norm();
        if un < 1e-300 {
            return Ok(DMatrix::zeros(self.n, 1));
        }
        Ok(u * (Self::angle(x, y) / un))
    }

    fn in_log_domain(&self, x: &Point, y: &Point) -> bool {
        Self::angle(x, y) < PI - CUT_LOCUS_MARGIN
    }

    fn retract(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_tangent(x, v)?;
        let y = x + v;
        Ok(&y / y.norm())
    }

    fn dist(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_shape(y)?;
        Ok(Self::angle(x, y))
    }

    fn injectivity_radius(&self) -> f64 {
        PI
    }

    fn curvature_lower_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        let g = linalg::gaussian_matrix(self.n, 1, rng);
        &g / g.norm()
    }
}
