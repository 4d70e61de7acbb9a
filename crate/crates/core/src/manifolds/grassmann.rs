use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{Manifold, Point, Tangent};

/// Drift of `WᵀW` from the identity that triggers re-orthonormalization.
const REORTHO_THRESHOLD: f64 = 1e-8;

/// Grassmann manifold `Gr(r, n)` in its quotient form `St(r, n) / O(r)`.
///
/// Points are `n×r` representatives with orthonormal columns, tangent vectors
/// are horizontal (`WᵀH = 0`) and the metric is `tr(H₁ᵀH₂)`. Everything
/// exposed here is invariant under `W ↦ WO` for orthogonal `O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grassmann {
    n: usize,
    r: usize,
}

impl Grassmann {
    pub fn new(n: usize, r: usize) -> Self {
        assert!(r >= 1 && r <= n, "Grassmann needs 1 <= r <= n");
        Grassmann { n, r }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Orthonormality defect `‖WᵀW - I‖_F`.
    pub fn orthonormality_defect(w: &Point) -> f64 {
        (w.transpose() * w - DMatrix::identity(w.ncols(), w.ncols())).norm()
    }
}

fn reorthonormalize(w: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if Grassmann::orthonormality_defect(&w) > REORTHO_THRESHOLD {
        linalg::qf(&w)
    } else {
        Ok(w)
    }
}

/// Geodesic step `W V cos(γΘ) Vᵀ + U sin(γΘ) Vᵀ` along the horizontal vector
/// `h` with compact SVD `h = U Θ Vᵀ`.
///
/// Fails when the largest principal angle travelled, `γ·θ_max`, reaches the
/// injectivity radius `π/2`.
pub fn grassmann_geodesic_step(w: &Point, h: &Tangent, gamma: f64) -> Result<Point> {
    let (u, theta, v_t) = linalg::thin_svd(h);
    let reach = gamma.abs() * theta.iter().copied().fold(0.0, f64::max);
    if reach >= FRAC_PI_2 {
        return Err(Error::BeyondInjectivityRadius {
            manifold: "grassmann",
            length: reach,
            radius: FRAC_PI_2,
        });
    }
    let k = theta.len();
    let cos = DMatrix::from_fn(k, k, |i, j| if i == j { (gamma * theta[i]).cos() } else { 0.0 });
    let sin = DMatrix::from_fn(k, k, |i, j| if i == j { (gamma * theta[i]).sin() } else { 0.0 });
    let v = v_t.transpose();
    let next = w * &v * cos * &v_t + u * sin * &v_t;
    reorthonormalize(next)
}

/// `qf(W + γΔ)`: orthonormal factor of the QR decomposition with positive
/// diagonal in the triangular factor.
pub fn qr_retract(w: &Point, delta: &Tangent, gamma: f64) -> Result<Point> {
    linalg::qf(&(w + delta * gamma))
}

/// Largest principal angle between the spans of two orthonormal bases, in
/// `[0, π/2]`.
pub fn subspace_angle(w: &Point, v: &Point) -> f64 {
    linalg::principal_angles(w, v)
        .into_iter()
        .fold(0.0, f64::max)
}

impl Manifold for Grassmann {
    fn name(&self) -> &'static str {
        "grassmann"
    }

    fn dim(&self) -> usize {
        self.r * (self.n - self.r)
    }

    fn shape(&self) -> (usize, usize) {
        (self.n, self.r)
    }

    fn membership_residual(&self, x: &Point) -> f64 {
        Self::orthonormality_defect(x)
    }

    /// `‖WᵀH‖_F` relative to `max(1, ‖H‖_F)`.
    fn tangent_residual(&self, x: &Point, v: &Tangent) -> f64 {
        (x.transpose() * v).norm() / v.norm().max(1.0)
    }

    fn project_tangent(&self, x: &Point, a: &DMatrix<f64>) -> Tangent {
        a - x * (x.transpose() * a)
    }

    fn inner(&self, _x: &Point, u: &Tangent, v: &Tangent) -> f64 {
        u.dot(v)
    }

    fn exp(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_tangent(x, v)?;
        grassmann_geodesic_step(x, v, 1.0)
    }

    fn log(&self, x: &Point, y: &Point) -> Result<Tangent> {
        self.check_shape(y)?;
        if !self.in_log_domain(x, y) {
            return Err(Error::OutsideLogDomain {
                manifold: self.name(),
                reason: "a principal angle reaches pi/2".into(),
            });
        }
        let m = x.transpose() * y;
        let m_inv = m.try_inverse().ok_or_else(|| Error::OutsideLogDomain {
            manifold: self.name(),
            reason: "WᵀY is singular".into(),
        })?;
        let a = (y - x * (x.transpose() * y)) * m_inv;
        let (u, sigma, v_t) = linalg::thin_svd(&a);
        let k = sigma.len();
        let theta = DMatrix::from_fn(k, k, |i, j| if i == j { sigma[i].atan() } else { 0.0 });
        Ok(u * theta * v_t)
    }

    fn in_log_domain(&self, x: &Point, y: &Point) -> bool {
        linalg::principal_angles(x, y)
            .iter()
            .all(|&a| a < FRAC_PI_2 - 1e-6)
    }

    fn retract(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_tangent(x, v)?;
        qr_retract(x, v, 1.0)
    }

    fn dist(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_shape(y)?;
        Ok(linalg::principal_angles(x, y)
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt())
    }

    fn injectivity_radius(&self) -> f64 {
        FRAC_PI_2
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        loop {
            if let Ok(q) = linalg::qf(&linalg::gaussian_matrix(self.n, self.r, rng)) {
                return q;
            }
        }
    }
}
