//! Stochastic update rules, the generic driver and trajectory diagnostics.

use std::time::{Duration, Instant};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent};
use crate::schedule::StepSchedule;

/// Smoothing factor of the streaming loss and gradient-norm estimates.
pub const EMA_FACTOR: f64 = 0.99;
/// Losses above this abort a run.
pub const DIVERGENCE_LOSS: f64 = 1e12;
/// Default recording cadence.
pub const DEFAULT_RECORD_EVERY: usize = 100;

/// A stochastic optimization instance: inputs `z` are drawn from a fixed law
/// and `H(z, w)` is an unbiased estimate of the Riemannian gradient of the
/// averaged cost `C(w) = E_z loss(z, w)`.
pub trait Problem: Sync {
    type Sample;

    fn manifold(&self) -> &dyn Manifold;

    fn sample(&self, rng: &mut dyn RngCore) -> Self::Sample;

    fn loss(&self, z: &Self::Sample, w: &Point) -> f64;

    /// Riemannian gradient of `loss(z, ·)` at `w`.
    fn stochastic_grad(&self, z: &Self::Sample, w: &Point) -> Tangent;

    /// Step denominator of the adaptive rule; must be `>= 1`.
    fn adaptive_f(&self, _w: &Point) -> f64 {
        1.0
    }

    fn batch_cost(&self, _w: &Point) -> Option<f64> {
        None
    }

    /// Exact gradient of the averaged cost, when available.
    fn batch_grad(&self, _w: &Point) -> Option<Tangent> {
        None
    }

    /// Problem-specific distance to the target.
    fn error_metric(&self, _w: &Point) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// `w ← exp_w(-γ H)`
    Exp,
    /// `w ← R_w(-γ H)`
    Retract,
    /// `w ← exp_w(-(γ / f(w)) H)`
    Adaptive,
}

pub fn step_exp<P: Problem + ?Sized>(p: &P, w: &Point, z: &P::Sample, gamma: f64) -> Result<Point> {
    let h = p.stochastic_grad(z, w);
    p.manifold().exp(w, &(h * -gamma))
}

pub fn step_retract<P: Problem + ?Sized>(
    p: &P,
    w: &Point,
    z: &P::Sample,
    gamma: f64,
) -> Result<Point> {
    let h = p.stochastic_grad(z, w);
    p.manifold().retract(w, &(h * -gamma))
}

/// Effective gain `γ / f(w)`, rejecting `f(w) < 1`.
pub fn adaptive_gain<P: Problem + ?Sized>(p: &P, w: &Point, gamma: f64) -> Result<f64> {
    let f = p.adaptive_f(w);
    if !(f >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "adaptive denominator must be >= 1, got {f}"
        )));
    }
    Ok(gamma / f)
}

pub fn step_adaptive<P: Problem + ?Sized>(
    p: &P,
    w: &Point,
    z: &P::Sample,
    gamma: f64,
) -> Result<Point> {
    let effective = adaptive_gain(p, w, gamma)?;
    step_exp(p, w, z, effective)
}

/// One record of a run, taken after `iter` completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub iter: usize,
    /// Gain `γ_iter` of the schedule.
    pub gamma: f64,
    /// Exponentially smoothed sampled loss (`None` before the first step).
    pub loss: Option<f64>,
    pub batch_cost: Option<f64>,
    /// Exponentially smoothed `‖H(z_t, w_t)‖`.
    pub grad_norm: Option<f64>,
    pub error: Option<f64>,
    pub elapsed: Duration,
}

impl Record {
    /// Equality ignoring wall time.
    pub fn same_values(&self, other: &Record) -> bool {
        self.iter == other.iter
            && self.gamma.to_bits() == other.gamma.to_bits()
            && bits(self.loss) == bits(other.loss)
            && bits(self.batch_cost) == bits(other.batch_cost)
            && bits(self.grad_norm) == bits(other.grad_norm)
            && bits(self.error) == bits(other.error)
    }
}

fn bits(v: Option<f64>) -> Option<u64> {
    v.map(f64::to_bits)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    /// Largest `‖H(z_t, w_t)‖` met along the run.
    pub max_grad_norm: f64,
    /// Largest step length `γ_eff ‖H‖` met along the run.
    pub max_step_length: f64,
    /// Steps whose length reached the injectivity radius (these abort the run
    /// for exp-based rules, so a finished run reports them only for retractions).
    pub radius_violations: usize,
}

impl Trajectory {
    pub fn same_values(&self, other: &Trajectory) -> bool {
        self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.same_values(b))
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub iters: usize,
    pub rule: UpdateRule,
    pub record_every: usize,
}

impl RunOptions {
    pub fn new(iters: usize, rule: UpdateRule) -> Self {
        RunOptions {
            iters,
            rule,
            record_every: DEFAULT_RECORD_EVERY,
        }
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }
}

pub fn run<P: Problem + ?Sized>(
    p: &P,
    w0: &Point,
    schedule: &StepSchedule,
    opts: RunOptions,
    rng: &mut dyn RngCore,
) -> Result<(Trajectory, Point)> {
    run_observed(p, w0, schedule, opts, rng, &mut |_, _| {})
}

/// Like [`run`], calling `observer(iter, w)` at every record tick.
pub fn run_observed<P: Problem + ?Sized>(
    p: &P,
    w0: &Point,
    schedule: &StepSchedule,
    opts: RunOptions,
    rng: &mut dyn RngCore,
    observer: &mut dyn FnMut(usize, &Point),
) -> Result<(Trajectory, Point)> {
    let m = p.manifold();
    m.check_point(w0)?;
    let every = opts.record_every.max(1);
    let radius = m.injectivity_radius();
    let start = Instant::now();

    let mut w = w0.clone();
    let mut traj = Trajectory::default();
    let mut loss_ema: Option<f64> = None;
    let mut grad_ema: Option<f64> = None;

    let mut record = |t: usize, w: &Point, loss: Option<f64>, grad: Option<f64>, traj: &mut Trajectory| {
        traj.records.push(Record {
            iter: t,
            gamma: schedule.gamma(t),
            loss,
            batch_cost: p.batch_cost(w),
            grad_norm: grad,
            error: p.error_metric(w),
            elapsed: start.elapsed(),
        });
        observer(t, w);
    };
    record(0, &w, None, None, &mut traj);

    for t in 0..opts.iters {
        let z = p.sample(rng);
        let loss = p.loss(&z, &w);
        if !loss.is_finite() {
            return Err(Error::NonFinite { iter: t });
        }
        if loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged { iter: t, loss });
        }
        let h = p.stochastic_grad(&z, &w);
        let gamma = schedule.gamma(t);
        let effective = match opts.rule {
            UpdateRule::Adaptive => adaptive_gain(p, &w, gamma).map_err(|e| e.at(t))?,
            UpdateRule::Exp | UpdateRule::Retract => gamma,
        };
        let h_norm = m.norm(&w, &h);
        if !h_norm.is_finite() {
            return Err(Error::NonFinite { iter: t });
        }
        traj.max_grad_norm = traj.max_grad_norm.max(h_norm);
        let length = effective * h_norm;
        traj.max_step_length = traj.max_step_length.max(length);
        if length >= radius {
            traj.radius_violations += 1;
        }
        // a zero gain leaves w bit-for-bit unchanged
        if effective != 0.0 {
            let step = h * -effective;
            w = match opts.rule {
                UpdateRule::Retract => m.retract(&w, &step),
                UpdateRule::Exp | UpdateRule::Adaptive => m.exp(&w, &step),
            }
            .map_err(|e| e.at(t))?;
            if !crate::linalg::is_finite(&w) {
                return Err(Error::NonFinite { iter: t });
            }
        }

        loss_ema = Some(match loss_ema {
            None => loss,
            Some(prev) => EMA_FACTOR * prev + (1.0 - EMA_FACTOR) * loss,
        });
        grad_ema = Some(match grad_ema {
            None => h_norm,
            Some(prev) => EMA_FACTOR * prev + (1.0 - EMA_FACTOR) * h_norm,
        });
        if (t + 1) % every == 0 {
            record(t + 1, &w, loss_ema, grad_ema, &mut traj);
        }
    }
    m.check_point(&w).map_err(|e| e.at(opts.iters))?;
    Ok((traj, w))
}

/// Geometry in which the confinement assumptions are probed: an anchor `v`,
/// the squared radius `S` beyond which the averaged gradient must point back
/// to `v`, and the curvature lower bound `κ ≤ 0`.
pub struct AssumptionProbe<'a> {
    pub geometry: &'a dyn Manifold,
    pub anchor: Point,
    pub radius_sq: f64,
    pub curvature: f64,
    /// Samples used for the Monte Carlo gradient and moment estimates.
    pub mc_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub tested: usize,
    pub skipped_inside: usize,
    /// Largest `⟨exp_w⁻¹(v), ∇̂C(w)⟩` over tested points (should be negative).
    pub max_inner: f64,
    pub all_negative: bool,
    /// Whether `f(w)²` dominated both moment estimates at every tested point.
    pub f_dominates: bool,
    /// Smallest `f(w)² - max{1, moments}` over tested points.
    pub worst_f_margin: f64,
}

/// Monte Carlo check of the confinement and moment assumptions of the
/// adaptive rule at each probe point `w` with `d²(w, v) > S`.
pub fn assumption_diagnostics<P: Problem + ?Sized>(
    p: &P,
    probe: &AssumptionProbe<'_>,
    points: &[Point],
    rng: &mut dyn RngCore,
) -> Result<AssumptionReport> {
    let g = probe.geometry;
    let root_kappa = probe.curvature.abs().sqrt();
    let mut report = AssumptionReport {
        tested: 0,
        skipped_inside: 0,
        max_inner: f64::NEG_INFINITY,
        all_negative: true,
        f_dominates: true,
        worst_f_margin: f64::INFINITY,
    };
    for w in points {
        let d = g.dist(w, &probe.anchor)?;
        if d * d <= probe.radius_sq {
            report.skipped_inside += 1;
            continue;
        }
        let toward = g.log(w, &probe.anchor)?;
        let mut mean = Tangent::zeros(w.nrows(), w.ncols());
        let (mut moment_a, mut moment_b) = (0.0, 0.0);
        for _ in 0..probe.mc_samples.max(1) {
            let z = p.sample(rng);
            let h = p.stochastic_grad(&z, w);
            let hn = g.norm(w, &h);
            moment_a += hn * hn * (1.0 + root_kappa * (d + hn));
            moment_b += (2.0 * hn * d + hn * hn).powi(2);
            mean += h;
        }
        let k = probe.mc_samples.max(1) as f64;
        mean /= k;
        let inner = g.inner(w, &toward, &mean);
        let f = p.adaptive_f(w);
        let margin = f * f - (moment_a / k).max(moment_b / k).max(1.0);
        report.tested += 1;
        report.max_inner = report.max_inner.max(inner);
        report.all_negative &= inner < 0.0;
        report.f_dominates &= margin >= 0.0;
        report.worst_f_margin = report.worst_f_margin.min(margin);
    }
    Ok(report)
}
