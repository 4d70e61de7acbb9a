use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rsgd::manifold::Manifold;
use rsgd::manifolds::{disk_distance, qr_retract, EuclideanSpace, PoincareDisk};
use rsgd::problems::{oja_grad, KarcherDiskProblem, LeastSquaresProblem, OjaProblem, PsdLmsProblem, PsdSample};
use rsgd::sgd::{
    adaptive_gain, assumption_diagnostics, run, step_adaptive, step_exp, step_retract, AssumptionProbe,
    Problem, RunOptions, UpdateRule,
};
use rsgd::{Error, Point, StepSchedule, Tangent};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn col(v: &[f64]) -> Point {
    DMatrix::from_column_slice(v.len(), 1, v)
}

/// Least squares in closed form from the same inputs the driver would see.
fn direct_least_squares(p: &LeastSquaresProblem, samples: usize, seed: u64) -> DVector<f64> {
    let mut r = rng(seed);
    let n = p.theta().len();
    let (mut xtx, mut xty) = (DMatrix::zeros(n, n), DVector::zeros(n));
    for _ in 0..samples {
        let (x, y) = p.sample(&mut r);
        xtx += &x * x.transpose();
        xty += &x * y;
    }
    xtx.lu().solve(&xty).unwrap()
}

#[test]
fn euclidean_step_is_plain_gradient_step() {
    let p = LeastSquaresProblem::new(DVector::from_vec(vec![1.0, -2.0]), 0.1).unwrap();
    let w = col(&[0.3, 0.4]);
    let z = (DVector::from_vec(vec![1.0, 2.0]), 0.5);
    let h = p.stochastic_grad(&z, &w);
    assert_eq!(step_exp(&p, &w, &z, 0.1).unwrap(), &w - &h * 0.1);
    assert_eq!(step_retract(&p, &w, &z, 0.1).unwrap(), &w - &h * 0.1);
}

#[test]
fn zero_gradient_leaves_point() {
    let p = LeastSquaresProblem::new(DVector::from_vec(vec![1.0, -2.0]), 0.0).unwrap();
    let w = col(&[1.0, -2.0]);
    let z = (DVector::from_vec(vec![0.7, 0.2]), 0.7 - 0.4);
    assert_eq!(step_exp(&p, &w, &z, 0.5).unwrap(), w);
    assert_eq!(step_retract(&p, &w, &z, 0.5).unwrap(), w);
    assert_eq!(step_adaptive(&p, &w, &z, 0.5).unwrap(), w);
}

#[test]
fn karcher_step_moves_toward_sample() {
    let z = col(&[0.5, 0.2]);
    let p = KarcherDiskProblem::with_margin(vec![z.clone()], 1.05).unwrap();
    let w = col(&[-0.3, 0.1]);
    let before = disk_distance(&w, &z).unwrap();
    for gamma in [1e-3, 1e-2, 0.1] {
        let next = step_exp(&p, &w, &0, gamma).unwrap();
        // the gradient has norm d, so a step γ covers the fraction γ of the geodesic
        assert_relative_eq!(disk_distance(&next, &z).unwrap(), (1.0 - gamma) * before, max_relative = 1e-9);
    }
}

#[test]
fn qr_step_matches_direct_update() {
    let mut r = rng(1);
    let p = OjaProblem::with_spectrum(&[5.0, 4.0, 1.0, 1.0, 1.0], 2, &mut r).unwrap();
    let w = p.geometry().random_point(&mut r);
    let z = p.sample(&mut r);
    let expected = qr_retract(&w, &oja_grad(&z, &w), 0.05).unwrap();
    let got = step_retract(&p, &w, &z, 0.05).unwrap();
    assert!((got - expected).norm() < 1e-14);
}

#[test]
fn retraction_and_exp_steps_agree_to_second_order() {
    let mut r = rng(2);
    let p = OjaProblem::with_spectrum(&[5.0, 4.0, 1.0, 1.0, 1.0], 2, &mut r).unwrap();
    let w = p.geometry().random_point(&mut r);
    let z = p.sample(&mut r);
    let gap = |g: f64| {
        let a = step_exp(&p, &w, &z, g).unwrap();
        let b = step_retract(&p, &w, &z, g).unwrap();
        p.geometry().dist(&a, &b).unwrap()
    };
    let (g1, g2) = (gap(1e-2), gap(1e-3));
    assert!(g2 < g1 / 50.0, "{g1} {g2}");
}

#[test]
fn adaptive_with_unit_f_is_exp_step() {
    let mut r = rng(3);
    let p = OjaProblem::with_spectrum(&[5.0, 4.0, 1.0, 1.0], 2, &mut r).unwrap();
    let w = p.geometry().random_point(&mut r);
    let z = p.sample(&mut r);
    assert_eq!(step_adaptive(&p, &w, &z, 0.02).unwrap(), step_exp(&p, &w, &z, 0.02).unwrap());
}

#[test]
fn psd_effective_gain_at_norm_two() {
    let p = PsdLmsProblem::random(4, 2, &mut rng(4)).unwrap();
    let g = DMatrix::from_element(4, 2, 1.0 / 2f64.sqrt());
    assert_relative_eq!(g.norm(), 2.0, epsilon = 1e-15);
    assert_relative_eq!(adaptive_gain(&p, &g, 0.5).unwrap(), 0.5 / 64.0, max_relative = 1e-14);
}

#[test]
fn karcher_f_at_origin_with_unit_s() {
    let p = KarcherDiskProblem::new(vec![col(&[0.3, 0.0])], 1.0).unwrap();
    let origin = col(&[0.0, 0.0]);
    assert_relative_eq!(p.adaptive_f(&origin), 2f64.sqrt(), epsilon = 1e-15);
    assert!(adaptive_gain(&p, &origin, 1.0).unwrap() <= 1.0);
}

struct BadF;

impl Problem for BadF {
    type Sample = ();

    fn manifold(&self) -> &dyn Manifold {
        static SPACE: EuclideanSpace = EuclideanSpace::matrices(1, 1);
        &SPACE
    }

    fn sample(&self, _: &mut dyn RngCore) {}

    fn loss(&self, _: &(), w: &Point) -> f64 {
        w[(0, 0)]
    }

    fn stochastic_grad(&self, _: &(), _: &Point) -> Tangent {
        DMatrix::from_element(1, 1, 1.0)
    }

    fn adaptive_f(&self, _: &Point) -> f64 {
        0.5
    }
}

#[test]
fn adaptive_rule_rejects_f_below_one() {
    let w = DMatrix::zeros(1, 1);
    assert!(matches!(step_adaptive(&BadF, &w, &(), 0.1), Err(Error::InvalidArgument(_))));
    let err = run(&BadF, &w, &StepSchedule::constant(0.1), RunOptions::new(5, UpdateRule::Adaptive), &mut rng(0))
        .unwrap_err();
    assert_eq!(err.iteration(), Some(0));
}

struct Exploding;

impl Problem for Exploding {
    type Sample = ();

    fn manifold(&self) -> &dyn Manifold {
        static SPACE: EuclideanSpace = EuclideanSpace::matrices(1, 1);
        &SPACE
    }

    fn sample(&self, _: &mut dyn RngCore) {}

    fn loss(&self, _: &(), w: &Point) -> f64 {
        w[(0, 0)] * w[(0, 0)]
    }

    /// Gradient ascent in disguise: every step multiplies `w` by `1 + 2γ`.
    fn stochastic_grad(&self, _: &(), w: &Point) -> Tangent {
        w * -2.0
    }
}

#[test]
fn divergence_and_non_finite_values_report_the_iteration() {
    let w = DMatrix::from_element(1, 1, 1.0);
    let err = run(&Exploding, &w, &StepSchedule::constant(10.0), RunOptions::new(100, UpdateRule::Exp), &mut rng(0))
        .unwrap_err();
    // w_t = 21^t, and the loss 21^{2t} first exceeds 1e12 at t = 5
    assert!(matches!(err, Error::Diverged { iter: 5, .. }), "{err}");

    let w = DMatrix::from_element(1, 1, f64::MAX);
    let err = run(&Exploding, &w, &StepSchedule::constant(1.0), RunOptions::new(3, UpdateRule::Exp), &mut rng(0))
        .unwrap_err();
    assert!(matches!(err, Error::NonFinite { iter: 0 }), "{err}");
}

#[test]
fn zero_gain_returns_start() {
    let mut r = rng(5);
    let p = OjaProblem::with_spectrum(&[5.0, 4.0, 1.0, 1.0], 2, &mut r).unwrap();
    let w0 = p.geometry().random_point(&mut r);
    for rule in [UpdateRule::Exp, UpdateRule::Retract, UpdateRule::Adaptive] {
        let (_, w) = run(&p, &w0, &StepSchedule::constant(0.0), RunOptions::new(500, rule), &mut r).unwrap();
        assert_eq!(w, w0);
    }
}

#[test]
fn same_seed_same_trajectory() {
    let p = PsdLmsProblem::random(6, 2, &mut rng(6)).unwrap();
    let g0 = p.initial_factor(&mut rng(7));
    let sched = StepSchedule::new(0.01, 0.01, 0.0).unwrap();
    let opts = RunOptions::new(3000, UpdateRule::Adaptive).record_every(50);
    let (t1, w1) = run(&p, &g0, &sched, opts, &mut rng(8)).unwrap();
    let (t2, w2) = run(&p, &g0, &sched, opts, &mut rng(8)).unwrap();
    assert!(t1.same_values(&t2));
    assert_eq!(w1, w2);
    let (t3, _) = run(&p, &g0, &sched, opts, &mut rng(9)).unwrap();
    assert!(!t1.same_values(&t3));
}

#[test]
fn record_cadence() {
    let p = LeastSquaresProblem::new(DVector::from_vec(vec![1.0, 1.0]), 0.1).unwrap();
    let sched = StepSchedule::new(0.1, 0.1, 0.0).unwrap();
    let w0 = col(&[0.0, 0.0]);
    for (iters, every, count) in [(1000, 100, 11), (1050, 100, 11), (7, 1, 8), (0, 10, 1)] {
        let (traj, _) = run(&p, &w0, &sched, RunOptions::new(iters, UpdateRule::Exp).record_every(every), &mut rng(1))
            .unwrap();
        assert_eq!(traj.records.len(), count);
        assert!(traj.records.iter().enumerate().all(|(k, rec)| rec.iter == k * every));
        assert_eq!(traj.records[0].loss, None);
    }
    let (traj, _) = run(&p, &w0, &sched, RunOptions::new(300, UpdateRule::Exp), &mut rng(1)).unwrap();
    for rec in &traj.records {
        assert_eq!(rec.gamma, sched.gamma(rec.iter));
    }
}

#[test]
fn least_squares_toy_converges() {
    let theta = DVector::from_vec(vec![0.8, -0.5]);
    let p = LeastSquaresProblem::new(theta, 0.05).unwrap();
    let iters = 10_000;
    let sched = StepSchedule::new(0.1, 0.1, 0.0).unwrap();
    let (_, w) = run(&p, &col(&[0.0, 0.0]), &sched, RunOptions::new(iters, UpdateRule::Exp), &mut rng(11)).unwrap();
    let direct = direct_least_squares(&p, iters, 11);
    let w = w.column(0).into_owned();
    assert!((&w - &direct).norm() < 1e-2, "{w} vs {direct}");
    assert!((&w - p.theta()).norm() < 1e-2);
}

#[test]
fn effective_gain_never_exceeds_schedule() {
    let p = KarcherDiskProblem::random_points(10, 0.7, &mut rng(12));
    let p = KarcherDiskProblem::with_margin(p, 1.05).unwrap();
    let sched = StepSchedule::new(1.0, 0.1, 0.5).unwrap();
    let mut r = rng(13);
    let mut w = col(&[0.0, 0.0]);
    for t in 0..2000 {
        let g = sched.gamma(t);
        assert!(adaptive_gain(&p, &w, g).unwrap() <= g);
        let z = p.sample(&mut r);
        w = step_adaptive(&p, &w, &z, g).unwrap();
    }
}

#[test]
fn batch_cost_window_means_decrease_after_burn_in() {
    let pts = KarcherDiskProblem::random_points(20, 0.8, &mut rng(14));
    let p = KarcherDiskProblem::with_margin(pts, 1.05).unwrap();
    let w0 = col(&[0.6, -0.6]);
    let sched = StepSchedule::new(1.0, 0.1, 0.5).unwrap();
    let (traj, _) = run(&p, &w0, &sched, RunOptions::new(20_000, UpdateRule::Adaptive).record_every(10), &mut rng(15))
        .unwrap();
    let costs: Vec<f64> = traj.records.iter().map(|r| r.batch_cost.unwrap()).collect();
    let windows: Vec<f64> = costs.chunks(200).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let floor = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    for w in windows.windows(2) {
        assert!(w[1] <= w[0] + 1e-4 * floor, "{windows:?}");
    }
}

#[test]
fn karcher_diagnostics_point_back_to_origin() {
    let pts = KarcherDiskProblem::random_points(15, 0.6, &mut rng(16));
    let p = KarcherDiskProblem::with_margin(pts, 1.05).unwrap();
    let mut r = rng(17);
    let outside: Vec<Point> = (0..30)
        .map(|k| {
            let angle = k as f64 * 0.7;
            let radius = 0.75 + 0.2 * (k as f64 / 30.0);
            col(&[radius * angle.cos(), radius * angle.sin()])
        })
        .collect();
    let probe = AssumptionProbe {
        geometry: &PoincareDisk,
        anchor: col(&[0.0, 0.0]),
        radius_sq: p.s(),
        curvature: -1.0,
        mc_samples: 200,
    };
    let report = assumption_diagnostics(&p, &probe, &outside, &mut r).unwrap();
    assert_eq!(report.tested, 30);
    assert!(report.all_negative && report.max_inner < 0.0);
    assert!(report.f_dominates, "{report:?}");
}

#[test]
fn diagnostics_skip_points_inside_the_ball() {
    let z = col(&[0.4, 0.1]);
    let p = KarcherDiskProblem::with_margin(vec![z.clone()], 1.05).unwrap();
    assert_eq!(p.stochastic_grad(&0, &z).norm(), 0.0);
    let probe = AssumptionProbe {
        geometry: &PoincareDisk,
        anchor: col(&[0.0, 0.0]),
        radius_sq: p.s(),
        curvature: -1.0,
        mc_samples: 10,
    };
    let report = assumption_diagnostics(&p, &probe, &[z], &mut rng(18)).unwrap();
    assert_eq!((report.tested, report.skipped_inside), (0, 1));
}

#[test]
fn psd_diagnostics_in_factor_space() {
    let (n, r) = (5, 2);
    let p = PsdLmsProblem::random(n, r, &mut rng(19)).unwrap();
    let v = p.target();
    let threshold = n as f64 * v.diagonal().norm();
    let space = EuclideanSpace::matrices(n, r);
    let mut rr = rng(20);
    let points: Vec<Point> = (0..10)
        .map(|k| {
            let g = space.random_tangent(&DMatrix::zeros(n, r), &mut rr);
            g * ((1.5 + 0.2 * k as f64) * threshold).sqrt()
        })
        .collect();
    let probe = AssumptionProbe {
        geometry: &space,
        anchor: DMatrix::zeros(n, r),
        radius_sq: threshold,
        curvature: 0.0,
        mc_samples: 2000,
    };
    let report = assumption_diagnostics(&p, &probe, &points, &mut rr).unwrap();
    assert_eq!(report.tested, 10);
    assert!(report.all_negative, "{report:?}");
}

#[test]
fn psd_sample_is_consistent_with_target() {
    let p = PsdLmsProblem::random(4, 2, &mut rng(21)).unwrap();
    let PsdSample { x, y } = p.sample(&mut rng(22));
    assert_relative_eq!(y, (x.transpose() * p.target() * &x)[(0, 0)], max_relative = 1e-12);
}
