use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent};

/// Points must satisfy `‖x‖ ≤ 1 - DISK_BOUNDARY_GUARD`.
pub const DISK_BOUNDARY_GUARD: f64 = 1e-12;

/// Poincaré disk: the open unit disk of `R²` with metric
/// `⟨ξ, η⟩_x = 4 ξ·η / (1 - ‖x‖²)²` (curvature -1).
///
/// Exp and log are computed at the origin, where geodesics are diameters and
/// hyperbolic distance `s` corresponds to Euclidean radius `tanh(s/2)`, and
/// moved to other base points with the Möbius isometry taking the base point
/// to the origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoincareDisk;

fn check_interior(x: &Point) -> Result<()> {
    if x.shape() != (2, 1) {
        return Err(Error::Shape {
            manifold: "poincare-disk",
            expected: (2, 1),
            got: x.shape(),
        });
    }
    let r = x.norm();
    if r.is_finite() && r <= 1.0 - DISK_BOUNDARY_GUARD {
        Ok(())
    } else {
        Err(Error::NotOnManifold {
            manifold: "poincare-disk",
            residual: r - (1.0 - DISK_BOUNDARY_GUARD),
        })
    }
}

/// Conformal factor `λ_x = 2 / (1 - ‖x‖²)`.
fn conformal(x: &Point) -> f64 {
    2.0 / (1.0 - x.norm_squared())
}

/// Möbius addition `x ⊕ y`.
fn mobius_add(x: &Point, y: &Point) -> Point {
    let xy = x.dot(y);
    let xx = x.norm_squared();
    let yy = y.norm_squared();
    let num = x * (1.0 + 2.0 * xy + yy) + y * (1.0 - xx);
    num / (1.0 + 2.0 * xy + xx * yy)
}

/// `d(z, w) = cosh⁻¹(1 + δ)` with `δ = 2‖z - w‖² / ((1 - ‖z‖²)(1 - ‖w‖²))`,
/// evaluated as `ln(1 + δ + √(δ(2 + δ)))` through `ln_1p` so that nearby
/// points keep full relative precision.
pub fn disk_distance(z: &Point, w: &Point) -> Result<f64> {
    check_interior(z)?;
    check_interior(w)?;
    let delta = 2.0 * (z - w).norm_squared() / ((1.0 - z.norm_squared()) * (1.0 - w.norm_squared()));
    Ok((delta + (delta * (2.0 + delta)).sqrt()).ln_1p())
}

/// `exp_x(γ v)`.
pub fn disk_exp(x: &Point, v: &Tangent, gamma: f64) -> Result<Point> {
    check_interior(x)?;
    let step = v * gamma;
    let norm = step.norm();
    if norm == 0.0 {
        return Ok(x.clone());
    }
    let s = conformal(x) * norm;
    let at_origin = &step * ((s / 2.0).tanh() / norm);
    let y = mobius_add(x, &at_origin);
    check_interior(&y)?;
    Ok(y)
}

/// `log_x(y)`; total on the disk.
pub fn disk_log(x: &Point, y: &Point) -> Result<Tangent> {
    check_interior(x)?;
    check_interior(y)?;
    let w = mobius_add(&(-x), y);
    let r = w.norm();
    if r == 0.0 {
        return Ok(DMatrix::zeros(2, 1));
    }
    Ok(w * (2.0 * r.atanh() / (conformal(x) * r)))
}

impl Manifold for PoincareDisk {
    fn name(&self) -> &'static str {
        "poincare-disk"
    }

    fn dim(&self) -> usize {
        2
    }

    fn shape(&self) -> (usize, usize) {
        (2, 1)
    }

    fn membership_residual(&self, x: &Point) -> f64 {
        if check_interior(x).is_ok() {
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

    fn inner(&self, x: &Point, u: &Tangent, v: &Tangent) -> f64 {
        let l = conformal(x);
        l * l * u.dot(v)
    }

    fn exp(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_shape(v)?;
        disk_exp(x, v, 1.0)
    }

    fn log(&self, x: &Point, y: &Point) -> Result<Tangent> {
        disk_log(x, y)
    }

    fn in_log_domain(&self, x: &Point, y: &Point) -> bool {
        check_interior(x).is_ok() && check_interior(y).is_ok()
    }

    fn retract(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.exp(x, v)
    }

    fn dist(&self, x: &Point, y: &Point) -> Result<f64> {
        disk_distance(x, y)
    }

    fn curvature_lower_bound(&self) -> Option<f64> {
        Some(-1.0)
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let radius = 0.9 * rng.random::<f64>().sqrt();
        DMatrix::from_column_slice(2, 1, &[radius * angle.cos(), radius * angle.sin()])
    }
}
