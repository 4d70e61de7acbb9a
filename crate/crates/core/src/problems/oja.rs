use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{Manifold, Point, Tangent};
use crate::manifolds::{subspace_angle, Grassmann};
use crate::sgd::Problem;

/// Default input truncation radius as a multiple of `√tr(A)`.
pub const DEFAULT_TRUNCATION: f64 = 10.0;

/// `(I - WWᵀ) z zᵀ W`, the ascent direction of `½‖Wᵀz‖²` on the Grassmannian.
pub fn oja_grad(z: &DVector<f64>, w: &Point) -> Tangent {
    let wz = w.transpose() * z;
    let residual = z - w * &wz;
    residual * wz.transpose()
}

/// `‖AW - WWᵀAW‖_F`; zero exactly when `span(W)` is invariant under `A`.
pub fn oja_stationarity_residual(w: &Point, a: &DMatrix<f64>) -> f64 {
    let aw = a * w;
    (&aw - w * (w.transpose() * &aw)).norm()
}

/// Streaming principal subspace tracking: maximize `E ½‖Wᵀz‖²` over
/// `r`-dimensional subspaces of `Rⁿ`, with `E zzᵀ = A`.
///
/// Inputs are `z = A^{1/2} u` with `u` uniform on the cube `[-√3, √3]ⁿ`
/// (unit covariance), radially clipped to a norm bound so that they stay
/// uniformly bounded.
#[derive(Debug, Clone)]
pub struct OjaProblem {
    geometry: Grassmann,
    a: DMatrix<f64>,
    a_half: DMatrix<f64>,
    dominant: Point,
    bound: f64,
}

impl OjaProblem {
    pub fn new(a: DMatrix<f64>, r: usize) -> Result<Self> {
        let n = a.nrows();
        if r == 0 || r > n {
            return Err(Error::InvalidArgument(format!("need 1 <= r <= n, got r={r}, n={n}")));
        }
        let a_half = linalg::sqrtm_spd(&a)?;
        let (values, vectors) = linalg::sym_eigen(&a);
        if r < n && values[n - r] - values[n - r - 1] <= 1e-12 * values[n - 1] {
            return Err(Error::InvalidArgument(
                "no spectral gap after the r-th eigenvalue".into(),
            ));
        }
        let dominant = vectors.columns(n - r, r).into_owned();
        let bound = DEFAULT_TRUNCATION * a.trace().sqrt();
        Ok(OjaProblem {
            geometry: Grassmann::new(n, r),
            a,
            a_half,
            dominant,
            bound,
        })
    }

    /// `A = Q diag(spectrum) Qᵀ` with `Q` drawn uniformly from `O(n)`.
    pub fn with_spectrum(spectrum: &[f64], r: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let q = linalg::random_orthogonal(spectrum.len(), rng);
        let a = linalg::sym(&(&q * linalg::diag(spectrum) * q.transpose()));
        Self::new(a, r)
    }

    pub fn with_truncation(mut self, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::InvalidArgument(format!("truncation bound must be > 0, got {bound}")));
        }
        self.bound = bound;
        Ok(self)
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Orthonormal basis of the dominant `r`-dimensional eigenspace.
    pub fn dominant_subspace(&self) -> &Point {
        &self.dominant
    }

    pub fn truncation(&self) -> f64 {
        self.bound
    }

    pub fn geometry(&self) -> &Grassmann {
        &self.geometry
    }
}

impl Problem for OjaProblem {
    type Sample = DVector<f64>;

    fn manifold(&self) -> &dyn Manifold {
        &self.geometry
    }

    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let half_width = 3.0_f64.sqrt();
        let u = DVector::from_fn(self.a.nrows(), |_, _| rng.random_range(-half_width..half_width));
        let z = &self.a_half * u;
        let norm = z.norm();
        if norm > self.bound {
            z * (self.bound / norm)
        } else {
            z
        }
    }

    /// `-½‖Wᵀz‖²`.
    fn loss(&self, z: &DVector<f64>, w: &Point) -> f64 {
        -0.5 * (w.transpose() * z).norm_squared()
    }

    /// Gradient of the loss, `-(I - WWᵀ) z zᵀ W`; descending along it is the
    /// classical Oja ascent `W + γ(I - WWᵀ) z zᵀ W`.
    fn stochastic_grad(&self, z: &DVector<f64>, w: &Point) -> Tangent {
        -oja_grad(z, w)
    }

    fn batch_cost(&self, w: &Point) -> Option<f64> {
        Some(-0.5 * (w.transpose() * &self.a * w).trace())
    }

    fn batch_grad(&self, w: &Point) -> Option<Tangent> {
        let aw = &self.a * w;
        Some(-(&aw - w * (w.transpose() * &aw)))
    }

    /// Largest principal angle to the dominant subspace.
    fn error_metric(&self, w: &Point) -> Option<f64> {
        Some(subspace_angle(w, &self.dominant))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::check_gradient;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_evaluated_gradient() {
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let z = DVector::from_column_slice(&[1.0, 1.0]);
        assert_relative_eq!(oja_grad(&z, &w), DMatrix::from_column_slice(2, 1, &[0.0, 1.0]));
    }

    #[test]
    fn gradient_vanishes_inside_and_orthogonal_to_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Grassmann::new(6, 2);
        let w = g.random_point(&mut rng);
        let inside = &w * DVector::from_column_slice(&[0.3, -1.2]);
        assert!(oja_grad(&inside, &w).norm() < 1e-12);
        let outside = DVector::from_column_slice(
            g.project_tangent(&w, &linalg::gaussian_matrix(6, 1, &mut rng)).as_slice(),
        );
        assert!(oja_grad(&outside, &w).norm() < 1e-12);
    }

    #[test]
    fn gradient_is_horizontal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = OjaProblem::with_spectrum(&[5.0, 4.0, 1.0, 1.0, 0.5], 2, &mut rng).unwrap();
        let w = p.geometry().random_point(&mut rng);
        for _ in 0..20 {
            let z = p.sample(&mut rng);
            assert!((w.transpose() * oja_grad(&z, &w)).norm() < 1e-10);
        }
    }

    #[test]
    fn residual_vanishes_on_invariant_subspaces() {
        let a = linalg::diag(&[4.0, 3.0, 2.0, 1.0]);
        let top = DMatrix::identity(4, 2);
        assert!(oja_stationarity_residual(&top, &a) < 1e-14);
        let bottom = DMatrix::from_fn(4, 2, |i, j| if i == j + 2 { 1.0 } else { 0.0 });
        assert!(oja_stationarity_residual(&bottom, &a) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Grassmann::new(4, 2).random_point(&mut rng);
        assert!(oja_stationarity_residual(&w, &a) > 1e-3);
    }

    #[test]
    fn samples_are_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = OjaProblem::with_spectrum(&[9.0, 4.0, 1.0], 1, &mut rng)
            .unwrap()
            .with_truncation(2.0)
            .unwrap();
        for _ in 0..1000 {
            assert!(p.sample(&mut rng).norm() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn stochastic_gradient_matches_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = OjaProblem::with_spectrum(&[5.0, 4.0, 2.0, 1.0, 1.0], 2, &mut rng).unwrap();
        let w = p.geometry().random_point(&mut rng);
        let z = p.sample(&mut rng);
        let report = check_gradient(
            p.manifold(),
            &|x| p.loss(&z, x),
            &|x| p.stochastic_grad(&z, x),
            &w,
            10,
            &mut rng,
        )
        .unwrap();
        assert!(report.passes(1e-4), "{report:?}");
    }
}
