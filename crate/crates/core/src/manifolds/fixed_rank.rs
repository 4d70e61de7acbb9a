use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{Manifold, Point, Tangent};

/// Factors whose smallest singular value drops below this are rank deficient.
pub const RANK_FLOOR: f64 = 1e-10;

/// Fixed-rank PSD matrices `W = GGᵀ` as the quotient `R_*^{n×r} / O(r)`.
///
/// Points are full-rank factors `G`, the metric is the flat `tr(Δ₁ᵀΔ₂)` and
/// tangent vectors are horizontal, i.e. of the form `Sym(Δ)G`, equivalently
/// `GᵀΔ` symmetric. Geodesics are straight lines in factor space, so exp and
/// the retraction are both plain addition; the distance is the Procrustes
/// distance `min_O ‖HO - G‖_F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedRankPsd {
    n: usize,
    r: usize,
}

impl FixedRankPsd {
    pub fn new(n: usize, r: usize) -> Self {
        assert!(r >= 1 && r <= n, "fixed-rank quotient needs 1 <= r <= n");
        FixedRankPsd { n, r }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    fn check_rank(g: &Point) -> Result<()> {
        let sigma_min = linalg::singular_values(g).last().copied().unwrap_or(0.0);
        if sigma_min.is_finite() && sigma_min > RANK_FLOOR {
            Ok(())
        } else {
            Err(Error::RankDeficient { sigma_min })
        }
    }

    /// Rotation `O` minimizing `‖HO - G‖_F`.
    fn align(g: &Point, h: &Point) -> DMatrix<f64> {
        linalg::polar_factor(&(h.transpose() * g))
    }
}

impl Manifold for FixedRankPsd {
    fn name(&self) -> &'static str {
        "fixed-rank-psd"
    }

    fn dim(&self) -> usize {
        self.n * self.r - self.r * (self.r - 1) / 2
    }

    fn shape(&self) -> (usize, usize) {
        (self.n, self.r)
    }

    fn membership_residual(&self, x: &Point) -> f64 {
        if Self::check_rank(x).is_ok() {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// Relative size of the skew part of `GᵀΔ` (zero for horizontal vectors).
    fn tangent_residual(&self, x: &Point, v: &Tangent) -> f64 {
        let gv = x.transpose() * v;
        let skew = (&gv - gv.transpose()).norm() * 0.5;
        skew / (x.norm() * v.norm()).max(1e-300)
    }

    fn project_tangent(&self, x: &Point, a: &DMatrix<f64>) -> Tangent {
        // Remove the vertical part GΩ, Ω skew, solving
        // GᵀGΩ + ΩGᵀG = GᵀA - AᵀG in the eigenbasis of GᵀG.
        let (lambda, q) = linalg::sym_eigen(&(x.transpose() * x));
        let ga = x.transpose() * a;
        let rhs = q.transpose() * (&ga - ga.transpose()) * &q;
        let omega_q = DMatrix::from_fn(self.r, self.r, |i, j| rhs[(i, j)] / (lambda[i] + lambda[j]));
        let omega = &q * omega_q * q.transpose();
        a - x * omega
    }

    fn inner(&self, _x: &Point, u: &Tangent, v: &Tangent) -> f64 {
        u.dot(v)
    }

    fn exp(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_shape(v)?;
        let y = x + v;
        Self::check_rank(&y)?;
        Ok(y)
    }

    fn log(&self, x: &Point, y: &Point) -> Result<Tangent> {
        self.check_shape(y)?;
        if !self.in_log_domain(x, y) {
            return Err(Error::OutsideLogDomain {
                manifold: self.name(),
                reason: "aligning rotation is not unique".into(),
            });
        }
        Ok(y * Self::align(x, y) - x)
    }

    fn in_log_domain(&self, x: &Point, y: &Point) -> bool {
        let s = linalg::singular_values(&(y.transpose() * x));
        let smallest = s.last().copied().unwrap_or(0.0);
        smallest > RANK_FLOOR * x.norm() * y.norm()
    }

    fn retract(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.exp(x, v)
    }

    fn dist(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_shape(y)?;
        Ok((y * Self::align(x, y) - x).norm())
    }

    fn curvature_lower_bound(&self) -> Option<f64> {
        None
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        loop {
            let g = linalg::gaussian_matrix(self.n, self.r, rng);
            if Self::check_rank(&g).is_ok() {
                return g;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_is_horizontal_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = FixedRankPsd::new(6, 3);
        let g = m.random_point(&mut rng);
        let a = linalg::gaussian_matrix(6, 3, &mut rng);
        let h = m.project_tangent(&g, &a);
        assert!(m.tangent_residual(&g, &h) < 1e-12);
        assert_relative_eq!(m.project_tangent(&g, &h), h.clone(), epsilon = 1e-12);
        // The removed part is vertical and orthogonal to every horizontal vector.
        let removed = &a - &h;
        let other = m.project_tangent(&g, &linalg::gaussian_matrix(6, 3, &mut rng));
        assert!(removed.dot(&other).abs() < 1e-10);
    }

    #[test]
    fn sym_delta_g_is_horizontal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = FixedRankPsd::new(5, 2);
        let g = m.random_point(&mut rng);
        let d = linalg::gaussian_matrix(5, 5, &mut rng);
        let h = linalg::sym(&d) * &g;
        assert!(m.tangent_residual(&g, &h) < 1e-12);
    }

    #[test]
    fn quotient_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = FixedRankPsd::new(5, 2);
        let g = m.random_point(&mut rng);
        let h = m.random_point(&mut rng);
        let o = linalg::random_orthogonal(2, &mut rng);
        assert_relative_eq!(m.dist(&g, &h).unwrap(), m.dist(&(&g * &o), &h).unwrap(), epsilon = 1e-10);
        assert_relative_eq!(m.dist(&g, &h).unwrap(), m.dist(&g, &(&h * &o)).unwrap(), epsilon = 1e-10);
        let moved = m.exp(&g, &m.log(&g, &h).unwrap()).unwrap();
        assert_relative_eq!(&moved * moved.transpose(), &h * h.transpose(), epsilon = 1e-10);
    }

    #[test]
    fn rank_collapse_is_an_error() {
        let m = FixedRankPsd::new(3, 1);
        let g = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert!(matches!(m.exp(&g, &(-&g)), Err(Error::RankDeficient { .. })));
    }
}
