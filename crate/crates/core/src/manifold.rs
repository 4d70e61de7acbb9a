//! The manifold contract and the numerical validators shared by every geometry.
//!
//! Points and tangent vectors are dense matrices whose shape is fixed by the
//! manifold (`n×1` for vector-valued geometries). A tangent vector is always
//! interpreted relative to the base point it is passed with.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::linalg;

pub type Point = DMatrix<f64>;
pub type Tangent = DMatrix<f64>;

/// Membership residual accepted for points.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Tangency residual above which exp/retract refuse a vector.
pub const TANGENT_REJECT_TOL: f64 = 1e-6;
/// Tolerance on exp/log round trips and on `‖log‖ = dist`.
pub const ROUNDTRIP_TOL: f64 = 1e-8;
/// Relative error accepted by the finite-difference gradient check.
pub const GRADIENT_REL_TOL: f64 = 1e-4;
/// Central-difference step along geodesics.
pub const FD_STEP: f64 = 1e-5;

pub trait Manifold: Send + Sync {
    fn name(&self) -> &'static str;

    /// Intrinsic dimension.
    fn dim(&self) -> usize;

    /// Shape of point and tangent coordinate arrays.
    fn shape(&self) -> (usize, usize);

    /// Distance from satisfying the membership predicate (0 on the manifold).
    fn membership_residual(&self, x: &Point) -> f64;

    /// Size of the component of `v` violating the tangency constraint at `x`.
    fn tangent_residual(&self, x: &Point, v: &Tangent) -> f64;

    /// Metric-orthogonal projection of an ambient array onto the tangent
    /// (horizontal) space at `x`.
    fn project_tangent(&self, x: &Point, a: &DMatrix<f64>) -> Tangent;

    fn inner(&self, x: &Point, u: &Tangent, v: &Tangent) -> f64;

    fn norm(&self, x: &Point, v: &Tangent) -> f64 {
        self.inner(x, v, v).max(0.0).sqrt()
    }

    fn exp(&self, x: &Point, v: &Tangent) -> Result<Point>;

    /// Inverse of `exp` where it is defined, see [`Manifold::in_log_domain`].
    fn log(&self, x: &Point, y: &Point) -> Result<Tangent>;

    /// Whether `y` lies strictly inside the injectivity domain of `x`.
    fn in_log_domain(&self, x: &Point, y: &Point) -> bool;

    fn retract(&self, x: &Point, v: &Tangent) -> Result<Point>;

    fn dist(&self, x: &Point, y: &Point) -> Result<f64>;

    /// Norm bound on steps accepted by `exp` (infinite on Hadamard manifolds).
    fn injectivity_radius(&self) -> f64 {
        f64::INFINITY
    }

    /// Lower bound on the sectional curvature, when known.
    fn curvature_lower_bound(&self) -> Option<f64> {
        None
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Point;

    /// Gaussian ambient sample projected onto the tangent space and scaled
    /// to unit Riemannian norm.
    fn random_tangent(&self, x: &Point, rng: &mut dyn RngCore) -> Tangent {
        let (rows, cols) = self.shape();
        loop {
            let v = self.project_tangent(x, &linalg::gaussian_matrix(rows, cols, rng));
            let norm = self.norm(x, &v);
            if norm > 1e-8 {
                return v / norm;
            }
        }
    }

    fn check_shape(&self, a: &DMatrix<f64>) -> Result<()> {
        if a.shape() == self.shape() {
            Ok(())
        } else {
            Err(Error::Shape {
                manifold: self.name(),
                expected: self.shape(),
                got: a.shape(),
            })
        }
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        self.check_shape(x)?;
        let residual = self.membership_residual(x);
        if residual <= MEMBERSHIP_TOL {
            Ok(())
        } else {
            Err(Error::NotOnManifold {
                manifold: self.name(),
                residual,
            })
        }
    }

    fn check_tangent(&self, x: &Point, v: &Tangent) -> Result<()> {
        self.check_shape(v)?;
        let residual = self.tangent_residual(x, v);
        if residual <= TANGENT_REJECT_TOL {
            Ok(())
        } else {
            Err(Error::NotTangent {
                manifold: self.name(),
                residual,
            })
        }
    }
}

/// Worst relative disagreement between finite differences along geodesics and
/// the claimed gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub max_rel_error: f64,
    pub directions: usize,
}

impl GradientReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares `d/dt f(exp_x(tv))` at `t = 0` (central differences, step
/// [`FD_STEP`]) with `⟨v, grad_f(x)⟩` over random unit tangents `v`.
///
/// The error of each direction is scaled by `max(‖grad_f(x)‖, |fd|)`, the
/// largest directional derivative magnitude, so that directions nearly
/// orthogonal to the gradient do not dominate.
pub fn check_gradient(
    m: &dyn Manifold,
    f: &dyn Fn(&Point) -> f64,
    grad_f: &dyn Fn(&Point) -> Tangent,
    x: &Point,
    directions: usize,
    rng: &mut dyn RngCore,
) -> Result<GradientReport> {
    let grad = grad_f(x);
    let grad_norm = m.norm(x, &grad);
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let v = m.random_tangent(x, rng);
        let forward = m.exp(x, &(&v * FD_STEP))?;
        let backward = m.exp(x, &(&v * -FD_STEP))?;
        let fd = (f(&forward) - f(&backward)) / (2.0 * FD_STEP);
        let analytic = m.inner(x, &v, &grad);
        let scale = grad_norm.max(fd.abs());
        let err = if scale < 1e-14 {
            (fd - analytic).abs()
        } else {
            (fd - analytic).abs() / scale
        };
        worst = worst.max(err);
    }
    Ok(GradientReport {
        max_rel_error: worst,
        directions,
    })
}

/// Ratios `d(R_x(tv), exp_x(tv)) / t²` for each step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetractionReport {
    pub steps: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl RetractionReport {
    /// True when the ratio sequence does not grow by more than `factor` from
    /// one step to the next smaller one (no blow-up as `t → 0`).
    pub fn is_bounded(&self, factor: f64) -> bool {
        let floor = 1e-6;
        self.ratios.iter().all(|r| r.is_finite())
            && self
                .ratios
                .windows(2)
                .all(|w| w[1] <= factor * w[0].max(floor))
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

pub fn check_retraction_order(
    m: &dyn Manifold,
    x: &Point,
    v: &Tangent,
    steps: &[f64],
) -> Result<RetractionReport> {
    let ratios = steps
        .iter()
        .map(|&t| {
            let step = v * t;
            let retracted = m.retract(x, &step)?;
            let geodesic = m.exp(x, &step)?;
            Ok(m.dist(&retracted, &geodesic)? / (t * t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RetractionReport {
        steps: steps.to_vec(),
        ratios,
    })
}

/// Tolerance-parameterized outcome of one validator on one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub check: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Tolerances used by [`validate_geometry`]; scaled uniformly by the CLI's
/// test hook.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationTolerances {
    pub metric: f64,
    pub roundtrip: f64,
    pub norm_distance: f64,
    pub gradient: f64,
    pub retraction_growth: f64,
}

impl Default for ValidationTolerances {
    fn default() -> Self {
        ValidationTolerances {
            metric: 1e-9,
            roundtrip: ROUNDTRIP_TOL,
            norm_distance: ROUNDTRIP_TOL,
            gradient: GRADIENT_REL_TOL,
            retraction_growth: 4.0,
        }
    }
}

impl ValidationTolerances {
    pub fn scaled(self, factor: f64) -> Self {
        ValidationTolerances {
            metric: self.metric * factor,
            roundtrip: self.roundtrip * factor,
            norm_distance: self.norm_distance * factor,
            gradient: self.gradient * factor,
            retraction_growth: self.retraction_growth * factor,
        }
    }
}

/// A point at a random distance below the injectivity radius of `x`.
pub fn random_nearby(m: &dyn Manifold, x: &Point, rng: &mut dyn RngCore) -> Result<Point> {
    let reach = if m.injectivity_radius().is_finite() {
        0.8 * m.injectivity_radius()
    } else {
        2.0
    };
    let v = m.random_tangent(x, rng);
    let s = rng.random_range(0.05..1.0) * reach;
    m.exp(x, &(v * s))
}

/// Runs the metric-axiom, exp/log round-trip, norm-distance, gradient and
/// retraction-order checks on `cases` random configurations.
///
/// The gradient check uses `f = ½ d²(p, ·)` with gradient `-log_x(p)`, which
/// also ties `log` to `dist`.
pub fn validate_geometry(
    m: &dyn Manifold,
    cases: usize,
    tol: ValidationTolerances,
    rng: &mut dyn RngCore,
) -> Result<Vec<CheckOutcome>> {
    let mut metric: f64 = 0.0;
    let mut roundtrip: f64 = 0.0;
    let mut norm_distance: f64 = 0.0;
    let mut gradient: f64 = 0.0;
    let mut retraction_ok = true;
    let mut retraction_worst: f64 = 0.0;

    for _ in 0..cases {
        let x = m.random_point(rng);
        let u = m.random_tangent(&x, rng);
        let v = m.random_tangent(&x, rng);
        let symmetry = (m.inner(&x, &u, &v) - m.inner(&x, &v, &u)).abs();
        let positivity = if m.inner(&x, &u, &u) > 0.0 { 0.0 } else { 1.0 };
        let bilinear = {
            let a = rng.random_range(-2.0..2.0);
            let lhs = m.inner(&x, &(&u * a + &v), &v);
            let rhs = a * m.inner(&x, &u, &v) + m.inner(&x, &v, &v);
            (lhs - rhs).abs() / (1.0 + rhs.abs())
        };
        metric = metric.max(symmetry).max(positivity).max(bilinear);

        let y = random_nearby(m, &x, rng)?;
        let l = m.log(&x, &y)?;
        roundtrip = roundtrip.max(m.dist(&m.exp(&x, &l)?, &y)?);
        norm_distance = norm_distance.max((m.norm(&x, &l) - m.dist(&x, &y)?).abs());

        let anchor = y.clone();
        let f = |p: &Point| {
            let d = m.dist(&anchor, p).unwrap_or(f64::NAN);
            0.5 * d * d
        };
        let grad = |p: &Point| -m.log(p, &anchor).expect("anchor within log domain");
        let report = check_gradient(m, &f, &grad, &x, 3, rng)?;
        gradient = gradient.max(report.max_rel_error);

        let ret = check_retraction_order(m, &x, &u, &[1e-1, 1e-2, 1e-3])?;
        retraction_ok &= ret.is_bounded(tol.retraction_growth);
        retraction_worst = retraction_worst.max(ret.max_ratio());
    }

    let outcome = |check, worst: f64, tolerance: f64| CheckOutcome {
        check,
        worst,
        tolerance,
        passed: worst <= tolerance,
    };
    Ok(vec![
        outcome("metric-axioms", metric, tol.metric),
        outcome("exp-log-roundtrip", roundtrip, tol.roundtrip),
        outcome("norm-distance", norm_distance, tol.norm_distance),
        outcome("gradient", gradient, tol.gradient),
        CheckOutcome {
            check: "retraction-order",
            worst: retraction_worst,
            tolerance: tol.retraction_growth,
            passed: retraction_ok,
        },
    ])
}
