use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{Manifold, Point, Tangent};
use crate::manifolds::{FixedRankPsd, RANK_FLOOR};
use crate::schedule::StepSchedule;
use crate::sgd::Problem;

/// One observation `y = xᵀVx`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdSample {
    pub x: DVector<f64>,
    pub y: f64,
}

/// `max(1, ‖G‖_F⁶)`.
pub fn psd_f(g: &DMatrix<f64>) -> f64 {
    1.0_f64.max(g.norm_squared().powi(3))
}

/// `2(ŷ - y) x xᵀ G` with `ŷ = ‖Gᵀx‖²`, the gradient of `½(ŷ - y)²`.
pub fn psd_grad(x: &DVector<f64>, y: f64, g: &DMatrix<f64>) -> Tangent {
    let gx = g.transpose() * x;
    let y_hat = gx.norm_squared();
    x * gx.transpose() * (2.0 * (y_hat - y))
}

/// `G - (γ / f(G)) (‖Gᵀx‖² - y) x xᵀ G` with `f(G) = max(1, ‖G‖_F⁶)`.
pub fn psd_step(g: &DMatrix<f64>, x: &DVector<f64>, y: f64, gamma: f64) -> Result<DMatrix<f64>> {
    let gx = g.transpose() * x;
    let y_hat = gx.norm_squared();
    let next = g - x * gx.transpose() * (gamma / psd_f(g) * (y_hat - y));
    let sigma_min = linalg::singular_values(&next).last().copied().unwrap_or(0.0);
    if !(sigma_min > RANK_FLOOR) {
        return Err(Error::RankDeficient { sigma_min });
    }
    Ok(next)
}

/// `π(P - γ(xᵀPx - y) x xᵀ)` where `π` clips negative eigenvalues to zero.
pub fn psd_naive_step(p: &DMatrix<f64>, x: &DVector<f64>, y: f64, gamma: f64) -> DMatrix<f64> {
    let y_hat = (x.transpose() * p * x)[(0, 0)];
    linalg::clip_psd(&(p - x * x.transpose() * (gamma * (y_hat - y))))
}

/// `U(M) = E tr(xxᵀM) xxᵀ` for inputs with independent centered components
/// of second moment `a` and fourth moment `b`: off-diagonal entries
/// `a²(M_ij + M_ji)`, diagonal entries `a² tr(M) + (b - a²) M_ii`.
pub fn u_map_closed(m: &DMatrix<f64>, a: f64, b: f64) -> Result<DMatrix<f64>> {
    check_moments(a, b)?;
    let a2 = a * a;
    let trace = m.trace();
    Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        if i == j {
            a2 * trace + (b - a2) * m[(i, i)]
        } else {
            a2 * (m[(i, j)] + m[(j, i)])
        }
    }))
}

fn check_moments(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > a * a {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "moments must satisfy b > a² > 0, got a={a}, b={b}"
        )))
    }
}

/// Monte Carlo estimate of `U(M)`.
///
/// Components are `N(0, a)` when `b = 3a²`; otherwise they follow the
/// symmetric three-point law `{-c, 0, c}` with `c² = b/a` and
/// `P(x ≠ 0) = a²/b`, which has the requested moments.
pub fn u_map_mc(
    m: &DMatrix<f64>,
    a: f64,
    b: f64,
    samples: usize,
    rng: &mut dyn RngCore,
) -> Result<DMatrix<f64>> {
    check_moments(a, b)?;
    let n = m.nrows();
    let mut acc = DMatrix::zeros(n, n);
    if samples == 0 || m.iter().all(|&v| v == 0.0) {
        return Ok(acc);
    }
    let gaussian = ((b - 3.0 * a * a) / (a * a)).abs() < 1e-12;
    let (c, p_nonzero) = ((b / a).sqrt(), a * a / b);
    let sd = a.sqrt();
    let mut x = DVector::zeros(n);
    for _ in 0..samples {
        for xi in x.iter_mut() {
            *xi = if gaussian {
                sd * rng.sample::<f64, _>(StandardNormal)
            } else if rng.random::<f64>() < p_nonzero {
                if rng.random::<bool>() {
                    c
                } else {
                    -c
                }
            } else {
                0.0
            };
        }
        let q = (x.transpose() * m * &x)[(0, 0)];
        acc.ger(q, &x, &x, 1.0);
    }
    Ok(acc / samples as f64)
}

fn gaussian_u(m: &DMatrix<f64>) -> DMatrix<f64> {
    m * 2.0 + DMatrix::identity(m.nrows(), m.ncols()) * m.trace()
}

/// Low-rank PSD regression: from Gaussian inputs `x ~ N(0, I)` and outputs
/// `y = xᵀVx`, identify `V = V_f V_fᵀ` of rank `r` through a factor `G`
/// with `ŷ = ‖Gᵀx‖²`.
#[derive(Debug, Clone)]
pub struct PsdLmsProblem {
    geometry: FixedRankPsd,
    v_factor: DMatrix<f64>,
    v: DMatrix<f64>,
}

/// One point of a deterministic or baseline learning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iter: usize,
    /// `E(ŷ - y)²`.
    pub output_error: f64,
    /// `‖Ŵ - V‖_F`.
    pub estimation_error: f64,
}

impl PsdLmsProblem {
    pub fn new(v_factor: DMatrix<f64>) -> Result<Self> {
        let (n, r) = v_factor.shape();
        if r == 0 || r > n {
            return Err(Error::InvalidArgument(format!("need 1 <= r <= n, got r={r}, n={n}")));
        }
        let v = &v_factor * v_factor.transpose();
        Ok(PsdLmsProblem {
            geometry: FixedRankPsd::new(n, r),
            v_factor,
            v,
        })
    }

    /// `V_f` with independent `N(0, 1/n)` entries.
    pub fn random(n: usize, r: usize, rng: &mut dyn RngCore) -> Result<Self> {
        if r == 0 || r > n {
            return Err(Error::InvalidArgument(format!("need 1 <= r <= n, got r={r}, n={n}")));
        }
        Self::new(linalg::gaussian_matrix(n, r, rng) / (n as f64).sqrt())
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn geometry(&self) -> &FixedRankPsd {
        &self.geometry
    }

    /// Random Gaussian factor scaled so that `‖G₀G₀ᵀ‖_F = ‖V‖_F`.
    pub fn initial_factor(&self, rng: &mut dyn RngCore) -> DMatrix<f64> {
        let (n, r) = self.v_factor.shape();
        let g = self.geometry.random_point(rng);
        let scale = (self.v.norm() / (&g * g.transpose()).norm()).sqrt();
        debug_assert_eq!(g.shape(), (n, r));
        g * scale
    }

    /// `E(xᵀMx)² = 2tr(M²) + tr(M)²` for `M = P - V`.
    pub fn output_error_of(&self, p: &DMatrix<f64>) -> f64 {
        let m = p - &self.v;
        2.0 * m.norm_squared() + m.trace().powi(2)
    }

    pub fn estimation_error_of(&self, p: &DMatrix<f64>) -> f64 {
        (p - &self.v).norm()
    }

    fn curve_point(&self, iter: usize, p: &DMatrix<f64>) -> CurvePoint {
        CurvePoint {
            iter,
            output_error: self.output_error_of(p),
            estimation_error: self.estimation_error_of(p),
        }
    }

    /// `J - (γ / f(J)) U(JJᵀ - V) J`, the expected [`psd_step`].
    pub fn oracle_step(&self, j: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
        let m = j * j.transpose() - &self.v;
        j - gaussian_u(&m) * j * (gamma / psd_f(j))
    }

    /// Deterministic averaged iteration from `j0`, recorded at `t = 0` and
    /// every `record_every` steps.
    pub fn run_oracle(
        &self,
        j0: &DMatrix<f64>,
        schedule: &StepSchedule,
        iters: usize,
        record_every: usize,
    ) -> Result<Vec<CurvePoint>> {
        let every = record_every.max(1);
        let mut j = j0.clone();
        let mut out = vec![self.curve_point(0, &(&j * j.transpose()))];
        for t in 0..iters {
            j = self.oracle_step(&j, schedule.gamma(t));
            if !linalg::is_finite(&j) {
                return Err(Error::NonFinite { iter: t });
            }
            if (t + 1) % every == 0 {
                out.push(self.curve_point(t + 1, &(&j * j.transpose())));
            }
        }
        Ok(out)
    }

    /// Projected stochastic gradient on the full PSD cone from `p0`.
    pub fn run_naive(
        &self,
        p0: &DMatrix<f64>,
        schedule: &StepSchedule,
        iters: usize,
        record_every: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(Vec<CurvePoint>, DMatrix<f64>)> {
        let every = record_every.max(1);
        let mut p = p0.clone();
        let mut out = vec![self.curve_point(0, &p)];
        for t in 0..iters {
            let s = self.sample(rng);
            p = psd_naive_step(&p, &s.x, s.y, schedule.gamma(t));
            if !linalg::is_finite(&p) {
                return Err(Error::NonFinite { iter: t });
            }
            if (t + 1) % every == 0 {
                out.push(self.curve_point(t + 1, &p));
            }
        }
        Ok((out, p))
    }
}

impl Problem for PsdLmsProblem {
    type Sample = PsdSample;

    fn manifold(&self) -> &dyn Manifold {
        &self.geometry
    }

    fn sample(&self, rng: &mut dyn RngCore) -> PsdSample {
        let n = self.v.nrows();
        let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (self.v_factor.transpose() * &x).norm_squared();
        PsdSample { x, y }
    }

    fn loss(&self, s: &PsdSample, g: &Point) -> f64 {
        let y_hat = (g.transpose() * &s.x).norm_squared();
        0.5 * (y_hat - s.y).powi(2)
    }

    fn stochastic_grad(&self, s: &PsdSample, g: &Point) -> Tangent {
        psd_grad(&s.x, s.y, g)
    }

    fn adaptive_f(&self, g: &Point) -> f64 {
        psd_f(g)
    }

    /// `½E(ŷ - y)²`.
    fn batch_cost(&self, g: &Point) -> Option<f64> {
        Some(0.5 * self.output_error_of(&(g * g.transpose())))
    }

    /// `2U(GGᵀ - V)G`.
    fn batch_grad(&self, g: &Point) -> Option<Tangent> {
        let m = g * g.transpose() - &self.v;
        Some(gaussian_u(&m) * g * 2.0)
    }

    fn error_metric(&self, g: &Point) -> Option<f64> {
        Some(self.estimation_error_of(&(g * g.transpose())))
    }
}
