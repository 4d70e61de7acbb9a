use nalgebra::DMatrix;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{Manifold, Point, Tangent, MEMBERSHIP_TOL};

/// Cone of `n×n` symmetric positive definite matrices with the Fisher
/// information (affine-invariant) metric `⟨X, Y⟩_P = tr(X P⁻¹ Y P⁻¹)`.
///
/// The metric is invariant under congruence `P ↦ APAᵀ`, and the manifold is
/// Hadamard, so `log` is total. Matrix functions go through symmetric
/// eigendecompositions and every composite result is re-symmetrized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpdCone {
    n: usize,
}

impl SpdCone {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        SpdCone { n }
    }
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).norm() / m.norm().max(1.0)
}

fn check_spd(p: &DMatrix<f64>) -> Result<()> {
    if !p.is_square() {
        return Err(Error::InvalidArgument(format!(
            "expected a square matrix, got {:?}",
            p.shape()
        )));
    }
    let skew = asymmetry(p);
    if !(skew <= MEMBERSHIP_TOL) {
        return Err(Error::NotOnManifold {
            manifold: "spd",
            residual: skew,
        });
    }
    let min = linalg::min_eigenvalue(p);
    if min > 0.0 {
        Ok(())
    } else {
        Err(Error::NotSpd { min_eigenvalue: min })
    }
}

/// `P^{1/2} expm(γ P^{-1/2} X P^{-1/2}) P^{1/2}`.
pub fn spd_exp(p: &DMatrix<f64>, x: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    check_spd(p)?;
    let (root, inv_root) = linalg::sqrt_pair_spd(p)?;
    let inner = linalg::sym(&(&inv_root * x * &inv_root)) * gamma;
    Ok(linalg::sym(&(&root * linalg::expm_sym(&inner) * &root)))
}

/// `P^{1/2} logm(P^{-1/2} Q P^{-1/2}) P^{1/2}`.
pub fn spd_log(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_spd(p)?;
    check_spd(q)?;
    let (root, inv_root) = linalg::sqrt_pair_spd(p)?;
    let whitened = linalg::sym(&(&inv_root * q * &inv_root));
    Ok(linalg::sym(&(&root * linalg::logm_spd(&whitened)? * &root)))
}

/// Point at fraction `γ` of the geodesic from `P` to `Q`:
/// `P^{1/2} expm(γ logm(P^{-1/2} Q P^{-1/2})) P^{1/2}`.
pub fn spd_geodesic(p: &DMatrix<f64>, q: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    check_spd(p)?;
    check_spd(q)?;
    let (root, inv_root) = linalg::sqrt_pair_spd(p)?;
    let whitened = linalg::sym(&(&inv_root * q * &inv_root));
    let power = linalg::sym_apply(&whitened, |v| (gamma * v.ln()).exp());
    Ok(linalg::sym(&(&root * power * &root)))
}

/// `(Σ_k log² λ_k)^{1/2}` over the eigenvalues of `PQ⁻¹`, computed from the
/// congruent symmetric matrix `P^{-1/2} Q P^{-1/2}`.
pub fn spd_dist(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    check_spd(p)?;
    check_spd(q)?;
    let inv_root = linalg::inv_sqrtm_spd(p)?;
    let (values, _) = linalg::sym_eigen(&(&inv_root * q * &inv_root));
    if values.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotSpd {
            min_eigenvalue: values.min(),
        });
    }
    Ok(values.iter().map(|v| v.ln().powi(2)).sum::<f64>().sqrt())
}

fn log_det(p: &DMatrix<f64>) -> Result<f64> {
    let chol = p.clone().cholesky().ok_or_else(|| Error::NotSpd {
        min_eigenvalue: linalg::min_eigenvalue(p),
    })?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `KL(N(0,P) ‖ N(0,Q)) = ½ (tr(Q⁻¹P) - n + log det Q - log det P)`.
pub fn kl_gaussian(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    check_spd(p)?;
    check_spd(q)?;
    if p.shape() != q.shape() {
        return Err(Error::InvalidArgument("covariances differ in size".into()));
    }
    let n = p.nrows() as f64;
    let chol = q.clone().cholesky().ok_or_else(|| Error::NotSpd {
        min_eigenvalue: linalg::min_eigenvalue(q),
    })?;
    let trace = chol.solve(p).trace();
    Ok(0.5 * (trace - n + log_det(q)? - log_det(p)?))
}

impl Manifold for SpdCone {
    fn name(&self) -> &'static str {
        "spd"
    }

    fn dim(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    fn shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    fn membership_residual(&self, x: &Point) -> f64 {
        match check_spd(x) {
            Ok(()) => 0.0,
            Err(Error::NotOnManifold { residual, .. }) => residual,
            Err(_) => f64::INFINITY,
        }
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        self.check_shape(x)?;
        check_spd(x)
    }

    fn tangent_residual(&self, _x: &Point, v: &Tangent) -> f64 {
        asymmetry(v)
    }

    fn project_tangent(&self, _x: &Point, a: &DMatrix<f64>) -> Tangent {
        linalg::sym(a)
    }

    fn inner(&self, x: &Point, u: &Tangent, v: &Tangent) -> f64 {
        let chol = x.clone().cholesky().expect("SPD base point");
        let a = chol.solve(u);
        let b = chol.solve(v);
        (a * b).trace()
    }

    fn exp(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_tangent(x, v)?;
        spd_exp(x, v, 1.0)
    }

    fn log(&self, x: &Point, y: &Point) -> Result<Tangent> {
        self.check_shape(y)?;
        spd_log(x, y)
    }

    fn in_log_domain(&self, x: &Point, y: &Point) -> bool {
        check_spd(x).is_ok() && check_spd(y).is_ok()
    }

    /// Second-order retraction `P + X + ½ X P⁻¹ X`, SPD for every symmetric `X`.
    fn retract(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_tangent(x, v)?;
        check_spd(x)?;
        let chol = x.clone().cholesky().ok_or(Error::NotSpd {
            min_eigenvalue: linalg::min_eigenvalue(x),
        })?;
        let correction = v * chol.solve(v) * 0.5;
        Ok(linalg::sym(&(x + v + correction)))
    }

    fn dist(&self, x: &Point, y: &Point) -> Result<f64> {
        spd_dist(x, y)
    }

    fn curvature_lower_bound(&self) -> Option<f64> {
        // Sectional curvature of the affine-invariant metric lies in [-1/2, 0].
        Some(-0.5)
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point {
        let b = linalg::gaussian_matrix(self.n, self.n, rng);
        linalg::sym(&(&b * b.transpose() / self.n as f64 + DMatrix::identity(self.n, self.n) * 0.5))
    }
}
