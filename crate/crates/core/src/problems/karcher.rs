use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent};
use crate::manifolds::{disk_distance, disk_exp, PoincareDisk};
use crate::sgd::Problem;

/// Step of the batch gradient descent used by [`karcher_batch_mean`].
pub const BATCH_STEP: f64 = 0.5;
const BATCH_MAX_ITERS: usize = 100_000;

fn origin() -> Point {
    DMatrix::zeros(2, 1)
}

/// Riemannian gradient of `½d²(z, ·)` at `w`, in disk coordinates.
///
/// Its direction is that of `(1 - ‖w‖²)(w - z) + ‖w - z‖² w` and its
/// Riemannian norm is `d(z, w)`.
pub fn karcher_grad(z: &Point, w: &Point) -> Result<Tangent> {
    let d = disk_distance(z, w)?;
    if d == 0.0 {
        return Ok(origin());
    }
    let diff = w - z;
    let ww = w.norm_squared();
    let direction = &diff * (1.0 - ww) + w * diff.norm_squared();
    let len = direction.norm();
    if len == 0.0 {
        return Ok(origin());
    }
    // A Euclidean length of d(1 - ‖w‖²)/2 is Riemannian length d.
    Ok(direction * (d * (1.0 - ww) / (2.0 * len)))
}

/// Adaptive step denominator `f(w) = max{1, α²(1 + d + α), (2αd + α²)²}^{1/2}`
/// with `d = d(w, 0)` and `α = d + √S`.
pub fn karcher_f(w: &Point, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("S must be > 0, got {s}")));
    }
    let d = disk_distance(w, &origin())?;
    let alpha = d + s.sqrt();
    let second = alpha * alpha * (1.0 + d + alpha);
    let third = (2.0 * alpha * d + alpha * alpha).powi(2);
    Ok(1.0_f64.max(second).max(third).sqrt())
}

/// Batch Riemannian gradient of `C(w) = (1/2N) Σ d²(w, z_i)`.
fn batch_gradient(points: &[Point], w: &Point) -> Result<Tangent> {
    let mut g = origin();
    for z in points {
        g += karcher_grad(z, w)?;
    }
    Ok(g / points.len() as f64)
}

/// Karcher mean by Riemannian gradient descent with fixed step ½, stopped
/// once the Riemannian norm of the batch gradient is below `tol`.
pub fn karcher_batch_mean(points: &[Point], tol: f64) -> Result<Point> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty point set".into()));
    }
    let mut w = origin();
    for _ in 0..BATCH_MAX_ITERS {
        let g = batch_gradient(points, &w)?;
        if PoincareDisk.norm(&w, &g) < tol {
            return Ok(w);
        }
        w = disk_exp(&w, &g, -BATCH_STEP)?;
    }
    Err(Error::InvalidArgument(format!(
        "batch mean did not reach tolerance {tol} in {BATCH_MAX_ITERS} iterations"
    )))
}

/// Karcher mean of a finite point set in the Poincaré disk from uniformly
/// sampled data points.
#[derive(Debug, Clone)]
pub struct KarcherDiskProblem {
    points: Vec<Point>,
    s: f64,
    mean: Option<Point>,
}

impl KarcherDiskProblem {
    /// Requires `S > max_i d²(z_i, 0)`.
    pub fn new(points: Vec<Point>, s: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty point set".into()));
        }
        let mut widest: f64 = 0.0;
        for z in &points {
            PoincareDisk.check_point(z)?;
            widest = widest.max(disk_distance(z, &origin())?.powi(2));
        }
        if !(s > widest) {
            return Err(Error::InvalidArgument(format!(
                "S = {s} does not exceed the largest squared data radius {widest}"
            )));
        }
        Ok(KarcherDiskProblem { points, s, mean: None })
    }

    /// `S = margin · max_i d²(z_i, 0)`, with `margin > 1`.
    pub fn with_margin(points: Vec<Point>, margin: f64) -> Result<Self> {
        let widest = points
            .iter()
            .map(|z| disk_distance(z, &origin()).map(|d| d * d))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Self::new(points, (margin * widest).max(1e-12))
    }

    /// `n` points uniform (by area) in the Euclidean disk of radius `radius`.
    pub fn random_points(n: usize, radius: f64, rng: &mut dyn RngCore) -> Vec<Point> {
        (0..n)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let r = radius * rng.random::<f64>().sqrt();
                DMatrix::from_column_slice(2, 1, &[r * angle.cos(), r * angle.sin()])
            })
            .collect()
    }

    /// Caches the batch Karcher mean so that [`Problem::error_metric`]
    /// reports the distance to it.
    pub fn with_reference_mean(mut self, tol: f64) -> Result<Self> {
        self.mean = Some(karcher_batch_mean(&self.points, tol)?);
        Ok(self)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn reference_mean(&self) -> Option<&Point> {
        self.mean.as_ref()
    }
}

impl Problem for KarcherDiskProblem {
    type Sample = usize;

    fn manifold(&self) -> &dyn Manifold {
        &PoincareDisk
    }

    fn sample(&self, rng: &mut dyn RngCore) -> usize {
        rng.random_range(0..self.points.len())
    }

    fn loss(&self, &i: &usize, w: &Point) -> f64 {
        disk_distance(&self.points[i], w).map_or(f64::NAN, |d| 0.5 * d * d)
    }

    fn stochastic_grad(&self, &i: &usize, w: &Point) -> Tangent {
        karcher_grad(&self.points[i], w).unwrap_or_else(|_| DMatrix::from_element(2, 1, f64::NAN))
    }

    fn adaptive_f(&self, w: &Point) -> f64 {
        karcher_f(w, self.s).unwrap_or(f64::NAN)
    }

    fn batch_cost(&self, w: &Point) -> Option<f64> {
        let total: Result<f64> = self
            .points
            .iter()
            .map(|z| disk_distance(z, w).map(|d| d * d))
            .sum();
        total.ok().map(|t| t / (2.0 * self.points.len() as f64))
    }

    fn batch_grad(&self, w: &Point) -> Option<Tangent> {
        batch_gradient(&self.points, w).ok()
    }

    fn error_metric(&self, w: &Point) -> Option<f64> {
        self.mean.as_ref().and_then(|m| disk_distance(m, w).ok())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::check_gradient;
    use crate::manifolds::disk_log;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(a: f64, b: f64) -> Point {
        DMatrix::from_column_slice(2, 1, &[a, b])
    }

    #[test]
    fn gradient_norm_is_distance_and_equals_minus_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let z = PoincareDisk.random_point(&mut rng);
            let w = PoincareDisk.random_point(&mut rng);
            let g = karcher_grad(&z, &w).unwrap();
            assert_relative_eq!(PoincareDisk.norm(&w, &g), disk_distance(&z, &w).unwrap(), max_relative = 1e-8);
            assert_relative_eq!(g, -disk_log(&w, &z).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn gradient_at_origin_points_away_from_data() {
        let z = pt(0.3, -0.4);
        let g = karcher_grad(&z, &origin()).unwrap();
        assert_relative_eq!(g.normalize(), -z.normalize(), epsilon = 1e-14);
        assert!(karcher_grad(&z, &z).unwrap().norm() == 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let z = PoincareDisk.random_point(&mut rng);
            let w = PoincareDisk.random_point(&mut rng);
            let report = check_gradient(
                &PoincareDisk,
                &|x| 0.5 * disk_distance(&z, x).unwrap().powi(2),
                &|x| karcher_grad(&z, x).unwrap(),
                &w,
                4,
                &mut rng,
            )
            .unwrap();
            assert!(report.passes(1e-5), "{report:?}");
        }
    }

    #[test]
    fn f_at_origin() {
        assert_relative_eq!(karcher_f(&origin(), 1.0).unwrap(), 2.0_f64.sqrt(), epsilon = 1e-15);
        let mut prev = 0.0;
        for k in 0..90 {
            let f = karcher_f(&pt(k as f64 / 100.0, 0.0), 0.3).unwrap();
            assert!(f >= 1.0 && f >= prev);
            prev = f;
        }
        assert!(karcher_f(&origin(), 0.0).is_err());
    }

    #[test]
    fn batch_mean_special_configurations() {
        let z = pt(0.4, 0.2);
        assert_relative_eq!(karcher_batch_mean(&[z.clone()], 1e-12).unwrap(), z, epsilon = 1e-10);

        let (a, b) = (pt(0.5, 0.1), pt(-0.2, 0.6));
        let mid = karcher_batch_mean(&[a.clone(), b.clone()], 1e-12).unwrap();
        assert_relative_eq!(
            disk_distance(&a, &mid).unwrap(),
            disk_distance(&b, &mid).unwrap(),
            epsilon = 1e-8
        );

        let sym = vec![pt(0.5, 0.2), pt(-0.5, -0.2), pt(0.1, -0.7), pt(-0.1, 0.7)];
        assert!(karcher_batch_mean(&sym, 1e-12).unwrap().norm() < 1e-10);
    }

    #[test]
    fn s_must_dominate_data_radius() {
        let pts = vec![pt(0.5, 0.0)];
        let r2 = 3.0_f64.ln().powi(2);
        assert!(KarcherDiskProblem::new(pts.clone(), r2 * 0.99).is_err());
        assert!(KarcherDiskProblem::new(pts, r2 * 1.01).is_ok());
    }
}
