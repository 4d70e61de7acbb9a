//! Command-line experiment runner for the `rsgd` toolkit.

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use rsgd::gossip::{make_initial_covariances, run_gossip, GammaPolicy, GossipConfig, GossipRule, GossipSummary};
use rsgd::manifold::{validate_geometry, Manifold, ValidationTolerances};
use rsgd::manifolds::{EuclideanSpace, FixedRankPsd, Grassmann, PoincareDisk, SpdCone, Sphere};
use rsgd::problems::psd::CurvePoint;
use rsgd::problems::{oja_stationarity_residual, KarcherDiskProblem, OjaProblem, PsdLmsProblem};
use rsgd::sgd::{run_observed, Problem, RunOptions, UpdateRule};
use rsgd::StepSchedule;

pub const SUBCOMMANDS: [&str; 5] = ["check", "oja", "karcher", "psd", "gossip"];

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; exit status 2.
    Usage(String),
    /// Failure while running; exit status 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Errors raised while building a problem are configuration errors.
fn setup(e: rsgd::Error) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "rsgd", version, about = "Riemannian stochastic gradient experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate every geometry (metric, exp/log, gradient, retraction order).
    #[command(args_override_self = true)]
    Check(CheckArgs),
    /// Streaming principal subspace tracking on the Grassmannian.
    #[command(args_override_self = true)]
    Oja(OjaArgs),
    /// Karcher mean of points in the Poincaré disk.
    #[command(args_override_self = true)]
    Karcher(KarcherArgs),
    /// Low-rank PSD matrix identification from quadratic measurements.
    #[command(args_override_self = true)]
    Psd(PsdArgs),
    /// Randomized consensus of covariance matrices on a line graph.
    #[command(args_override_self = true)]
    Gossip(GossipArgs),
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be a finite number > 0, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn nonnegative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be a finite number >= 0, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn gossip_gamma(s: &str) -> Result<f64, String> {
    let v = positive_f64(s)?;
    if v <= 0.5 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 0.5], got {v}"))
    }
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat key=value file; keys are flag names, flags given here win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = positive_usize)]
    pub record_every: Option<usize>,
    /// Independent replicas, seeded `seed`, `seed + 1`, ...
    #[arg(long, value_parser = positive_usize)]
    pub runs: Option<usize>,
}

/// Gains `γ_t = a / (1 + b t^{1/2+ε})`.
#[derive(Args, Debug, Clone)]
pub struct Gains {
    #[arg(long, value_parser = positive_f64)]
    pub gain_a: Option<f64>,
    #[arg(long, value_parser = nonnegative_f64)]
    pub gain_b: Option<f64>,
    #[arg(long, value_parser = nonnegative_f64)]
    pub gain_eps: Option<f64>,
    /// Sets `b = s^{-1/2}`, `ε = 0`, i.e. `γ_t ≈ a / (1 + t/s)^{1/2}`.
    #[arg(long, value_parser = positive_f64, conflicts_with_all = ["gain_b", "gain_eps"])]
    pub gain_t_scale: Option<f64>,
}

impl Gains {
    fn schedule(&self, a: f64, b: f64, eps: f64) -> Result<StepSchedule, CliError> {
        let a = self.gain_a.unwrap_or(a);
        match self.gain_t_scale {
            Some(s) => StepSchedule::from_t_scale(a, s).map_err(setup),
            None => StepSchedule::new(a, self.gain_b.unwrap_or(b), self.gain_eps.unwrap_or(eps))
                .map_err(setup),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Random configurations per geometry.
    #[arg(long, default_value_t = 100, value_parser = positive_usize)]
    pub cases: usize,
    #[arg(long, default_value_t = 1.0, hide = true)]
    pub tolerance_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OjaVariant {
    /// Geodesic steps.
    Geodesic,
    /// QR retraction steps.
    Qr,
}

#[derive(Args, Debug, Clone)]
pub struct OjaArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub gains: Gains,
    #[arg(long, default_value_t = 20, value_parser = positive_usize)]
    pub n: usize,
    #[arg(long, default_value_t = 3, value_parser = positive_usize)]
    pub r: usize,
    #[arg(long, default_value_t = 200_000)]
    pub iters: usize,
    /// Leading eigenvalues of the input covariance, one per tracked direction.
    #[arg(long, value_delimiter = ',', default_value = "20,19,18", value_parser = positive_f64)]
    pub top: Vec<f64>,
    /// Remaining eigenvalues.
    #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
    pub bulk: f64,
    #[arg(long, value_enum, default_value_t = OjaVariant::Geodesic)]
    pub variant: OjaVariant,
    /// Input norm bound (default 10·√tr A).
    #[arg(long, value_parser = positive_f64)]
    pub truncation: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KarcherRule {
    Adaptive,
    Exp,
}

#[derive(Args, Debug, Clone)]
pub struct KarcherArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub gains: Gains,
    /// Number of data points.
    #[arg(long, default_value_t = 20, value_parser = positive_usize)]
    pub points: usize,
    /// Euclidean radius containing the data.
    #[arg(long, default_value_t = 0.8)]
    pub radius: f64,
    /// `S` as a multiple of the largest squared data radius.
    #[arg(long, default_value_t = 1.05)]
    pub s_margin: f64,
    #[arg(long, default_value_t = 100_000)]
    pub iters: usize,
    #[arg(long, value_enum, default_value_t = KarcherRule::Adaptive)]
    pub rule: KarcherRule,
}

#[derive(Args, Debug, Clone)]
pub struct PsdArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub gains: Gains,
    #[arg(long, default_value_t = 20, value_parser = positive_usize)]
    pub n: usize,
    #[arg(long, default_value_t = 3, value_parser = positive_usize)]
    pub r: usize,
    #[arg(long, default_value_t = 200_000)]
    pub iters: usize,
    /// Also write the averaged (deterministic) algorithm to `<stem>_oracle.csv`.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub oracle: bool,
    /// Also write the projected full-matrix baseline to `<stem>_naive.csv`.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub naive: bool,
    #[arg(long, default_value_t = 0.01, value_parser = positive_f64)]
    pub naive_gain_a: f64,
    #[arg(long, default_value_t = 500f64.powf(-0.5), value_parser = nonnegative_f64)]
    pub naive_gain_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleChoice {
    Riemannian,
    Euclidean,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GammaChoice {
    /// Constant `--gamma`.
    Fixed,
    /// The `--gain-*` schedule, capped at 1/2.
    Schedule,
}

#[derive(Args, Debug, Clone)]
pub struct GossipArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub gains: Gains,
    /// Matrix size.
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    pub n: usize,
    /// Node count.
    #[arg(long, default_value_t = 6)]
    pub m: usize,
    #[arg(long, default_value_t = 1000)]
    pub events: usize,
    #[arg(long, default_value_t = 0.5, value_parser = gossip_gamma)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value_t = GammaChoice::Fixed)]
    pub gamma_policy: GammaChoice,
    #[arg(long, value_enum, default_value_t = RuleChoice::Both)]
    pub rule: RuleChoice,
    /// Spread of the initial node covariances.
    #[arg(long, default_value_t = 1.0, value_parser = nonnegative_f64)]
    pub heterogeneity: f64,
    #[arg(long, default_value_t = 50, value_parser = positive_usize)]
    pub samples_per_node: usize,
    /// Write one CSV per replica as well.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub per_replica: bool,
}

/// Outcome of an experiment, echoed as the summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub experiment: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub metric: &'static str,
    pub value: f64,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let files: Vec<String> = self.files.iter().map(|p| p.display().to_string()).collect();
        write!(
            f,
            "{} config={} seed={} final_{}={:.9e} out={}",
            self.experiment,
            self.config_hash,
            self.seed,
            self.metric,
            self.value,
            files.join(",")
        )
    }
}

fn config_hash(args: &impl fmt::Debug) -> String {
    let digest = Sha256::digest(format!("{args:?}").as_bytes());
    hex::encode(&digest[..8])
}

/// A CSV field: integers print as such, reals in `{:.12e}`.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Int(usize),
    Real(f64),
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Cell>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    w.write_record(header).map_err(runtime)?;
    for (k, row) in rows.iter().enumerate() {
        let fields: Vec<String> = row
            .iter()
            .map(|c| match *c {
                Cell::Int(v) => Ok(v.to_string()),
                Cell::Real(v) if v.is_finite() => Ok(format!("{v:.12e}")),
                Cell::Real(v) => Err(runtime(format!(
                    "non-finite value {v} in row {k} of {}",
                    path.display()
                ))),
            })
            .collect::<Result<_, _>>()?;
        w.write_record(&fields).map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;
    Ok(())
}

/// `dir/stem_suffix.ext` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    path.with_file_name(name)
}

fn output_path(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn replica_path(base: &Path, runs: usize, k: usize) -> PathBuf {
    if runs == 1 {
        base.to_path_buf()
    } else {
        sibling(base, &format!("run{k}"))
    }
}

/// The geometries exercised by `check`.
pub fn geometries() -> Vec<Box<dyn Manifold>> {
    vec![
        Box::new(EuclideanSpace::new(3)),
        Box::new(Sphere::new(3)),
        Box::new(Grassmann::new(5, 2)),
        Box::new(PoincareDisk),
        Box::new(FixedRankPsd::new(5, 2)),
        Box::new(SpdCone::new(3)),
    ]
}

/// One report line per (geometry, check); `Ok(true)` when all pass.
pub fn cmd_check(args: &CheckArgs, out: &mut dyn std::io::Write) -> Result<bool, CliError> {
    if !(args.tolerance_scale > 0.0) {
        return Err(usage("tolerance scale must be > 0"));
    }
    let tol = ValidationTolerances::default().scaled(args.tolerance_scale);
    let mut all = true;
    for m in geometries() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let outcomes = validate_geometry(m.as_ref(), args.cases, tol, &mut rng).map_err(runtime)?;
        for o in outcomes {
            all &= o.passed;
            writeln!(
                out,
                "{:<16} {:<20} worst={:.3e} tol={:.1e} {}",
                m.name(),
                o.check,
                o.worst,
                o.tolerance,
                if o.passed { "PASS" } else { "FAIL" }
            )
            .map_err(runtime)?;
        }
    }
    Ok(all)
}

fn oja_spectrum(args: &OjaArgs) -> Result<Vec<f64>, CliError> {
    if args.r > args.n {
        return Err(usage(format!("--r ({}) must not exceed --n ({})", args.r, args.n)));
    }
    if args.top.len() != args.r {
        return Err(usage(format!(
            "--top needs exactly r = {} values, got {}",
            args.r,
            args.top.len()
        )));
    }
    let mut spectrum = args.top.clone();
    spectrum.extend(std::iter::repeat_n(args.bulk, args.n - args.r));
    Ok(spectrum)
}

pub fn cmd_oja(args: &OjaArgs) -> Result<Summary, CliError> {
    let spectrum = oja_spectrum(args)?;
    let schedule = args.gains.schedule(0.01, 0.17, 0.5)?;
    let rule = match args.variant {
        OjaVariant::Geodesic => UpdateRule::Exp,
        OjaVariant::Qr => UpdateRule::Retract,
    };
    let runs = args.common.runs.unwrap_or(1);
    let every = args.common.record_every.unwrap_or(100);
    let base = output_path(&args.common, "oja.csv");
    let mut files = Vec::new();
    let mut final_angle = 0.0;
    for k in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(args.common.seed.wrapping_add(k as u64));
        let mut problem = OjaProblem::with_spectrum(&spectrum, args.r, &mut rng).map_err(setup)?;
        if let Some(bound) = args.truncation {
            problem = problem.with_truncation(bound).map_err(setup)?;
        }
        let w0 = problem.geometry().random_point(&mut rng);
        let mut rows = Vec::new();
        let opts = RunOptions::new(args.iters, rule).record_every(every);
        run_observed(&problem, &w0, &schedule, opts, &mut rng, &mut |t, w| {
            rows.push(vec![
                Cell::Int(t),
                Cell::Real(problem.batch_cost(w).unwrap_or(f64::NAN)),
                Cell::Real(oja_stationarity_residual(w, problem.covariance())),
                Cell::Real(problem.error_metric(w).unwrap_or(f64::NAN)),
            ]);
        })
        .map_err(runtime)?;
        if let Some(Cell::Real(angle)) = rows.last().map(|r| r[3]) {
            final_angle += angle / runs as f64;
        }
        let path = replica_path(&base, runs, k);
        write_csv(&path, &["iter", "loss", "stationarity_residual", "principal_angle"], &rows)?;
        files.push(path);
    }
    Ok(Summary {
        experiment: "oja",
        config_hash: config_hash(args),
        seed: args.common.seed,
        metric: "principal_angle",
        value: final_angle,
        files,
    })
}

pub fn cmd_karcher(args: &KarcherArgs) -> Result<Summary, CliError> {
    if !(args.radius > 0.0 && args.radius < 1.0) {
        return Err(usage(format!("--radius must lie in (0, 1), got {}", args.radius)));
    }
    if !(args.s_margin > 1.0) {
        return Err(usage(format!("--s-margin must be > 1, got {}", args.s_margin)));
    }
    let schedule = args.gains.schedule(1.0, 0.1, 0.5)?;
    let rule = match args.rule {
        KarcherRule::Adaptive => UpdateRule::Adaptive,
        KarcherRule::Exp => UpdateRule::Exp,
    };
    let runs = args.common.runs.unwrap_or(1);
    let every = args.common.record_every.unwrap_or(100);
    let base = output_path(&args.common, "karcher.csv");
    let mut files = Vec::new();
    let mut final_dist = 0.0;
    for k in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(args.common.seed.wrapping_add(k as u64));
        let points = KarcherDiskProblem::random_points(args.points, args.radius, &mut rng);
        let problem = KarcherDiskProblem::with_margin(points, args.s_margin)
            .and_then(|p| p.with_reference_mean(1e-10))
            .map_err(setup)?;
        let w0 = DMatrix::zeros(2, 1);
        let mut rows = Vec::new();
        let opts = RunOptions::new(args.iters, rule).record_every(every);
        run_observed(&problem, &w0, &schedule, opts, &mut rng, &mut |t, w| {
            rows.push(vec![
                Cell::Int(t),
                Cell::Real(problem.batch_cost(w).unwrap_or(f64::NAN)),
                Cell::Real(problem.error_metric(w).unwrap_or(f64::NAN)),
            ]);
        })
        .map_err(runtime)?;
        if let Some(Cell::Real(d)) = rows.last().map(|r| r[2]) {
            final_dist += d / runs as f64;
        }
        let path = replica_path(&base, runs, k);
        write_csv(&path, &["iter", "cost", "dist_to_batch_mean"], &rows)?;
        files.push(path);
    }
    Ok(Summary {
        experiment: "karcher",
        config_hash: config_hash(args),
        seed: args.common.seed,
        metric: "dist_to_batch_mean",
        value: final_dist,
        files,
    })
}

fn curve_rows(curve: &[CurvePoint]) -> Vec<Vec<Cell>> {
    curve
        .iter()
        .map(|c| vec![Cell::Int(c.iter), Cell::Real(c.output_error), Cell::Real(c.estimation_error)])
        .collect()
}

const PSD_HEADER: [&str; 3] = ["iter", "output_error", "est_error_frobenius"];

pub fn cmd_psd(args: &PsdArgs) -> Result<Summary, CliError> {
    if args.r > args.n {
        return Err(usage(format!("--r ({}) must not exceed --n ({})", args.r, args.n)));
    }
    let schedule = args.gains.schedule(0.01, 5000f64.powf(-0.5), 0.0)?;
    let naive_schedule = StepSchedule::new(args.naive_gain_a, args.naive_gain_b, 0.0).map_err(setup)?;
    let runs = args.common.runs.unwrap_or(1);
    let every = args.common.record_every.unwrap_or(100);
    let base = output_path(&args.common, "psd.csv");
    let mut files = Vec::new();
    let mut final_err = 0.0;
    for k in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(args.common.seed.wrapping_add(k as u64));
        let problem = PsdLmsProblem::random(args.n, args.r, &mut rng).map_err(setup)?;
        let g0 = problem.initial_factor(&mut rng);
        let mut rows = Vec::new();
        // The generic adaptive rule on the full gradient with half the gain is
        // the printed factor update.
        let opts = RunOptions::new(args.iters, UpdateRule::Adaptive).record_every(every);
        let (_, g) = run_observed(&problem, &g0, &schedule.scaled(0.5), opts, &mut rng, &mut |t, g| {
            let p = g * g.transpose();
            rows.push(vec![
                Cell::Int(t),
                Cell::Real(problem.output_error_of(&p)),
                Cell::Real(problem.estimation_error_of(&p)),
            ]);
        })
        .map_err(runtime)?;
        final_err += problem.estimation_error_of(&(&g * g.transpose())) / runs as f64;
        let path = replica_path(&base, runs, k);
        write_csv(&path, &PSD_HEADER, &rows)?;
        files.push(path.clone());
        if args.oracle {
            let curve = problem.run_oracle(&g0, &schedule, args.iters, every).map_err(runtime)?;
            let p = sibling(&path, "oracle");
            write_csv(&p, &PSD_HEADER, &curve_rows(&curve))?;
            files.push(p);
        }
        if args.naive {
            let p0 = &g0 * g0.transpose();
            let (curve, _) = problem
                .run_naive(&p0, &naive_schedule, args.iters, every, &mut rng)
                .map_err(runtime)?;
            let p = sibling(&path, "naive");
            write_csv(&p, &PSD_HEADER, &curve_rows(&curve))?;
            files.push(p);
        }
    }
    Ok(Summary {
        experiment: "psd",
        config_hash: config_hash(args),
        seed: args.common.seed,
        metric: "est_error_frobenius",
        value: final_err,
        files,
    })
}

pub fn cmd_gossip(args: &GossipArgs) -> Result<Summary, CliError> {
    if args.m < 2 {
        return Err(usage(format!("--m must be at least 2, got {}", args.m)));
    }
    let gamma = match args.gamma_policy {
        GammaChoice::Fixed => GammaPolicy::fixed(args.gamma).map_err(setup)?,
        GammaChoice::Schedule => GammaPolicy::Schedule(args.gains.schedule(0.5, 0.0, 0.0)?),
    };
    let rules: Vec<(GossipRule, Option<&str>)> = match args.rule {
        RuleChoice::Riemannian => vec![(GossipRule::Riemannian, None)],
        RuleChoice::Euclidean => vec![(GossipRule::Euclidean, None)],
        RuleChoice::Both => vec![
            (GossipRule::Riemannian, Some("riemannian")),
            (GossipRule::Euclidean, Some("euclidean")),
        ],
    };
    let base = output_path(&args.common, "gossip.csv");
    let probs = vec![1.0 / (args.m - 1) as f64; args.m - 1];
    let mut files = Vec::new();
    let mut final_hull = 0.0;
    for (rule, suffix) in rules {
        let cfg = GossipConfig {
            gamma,
            events: args.events,
            rule,
            runs: args.common.runs.unwrap_or(50),
            record_every: args.common.record_every.unwrap_or(10),
            monitor_contraction: false,
        };
        let summary: GossipSummary = run_gossip(
            &cfg,
            &probs,
            |_, rng| make_initial_covariances(args.m, args.n, args.samples_per_node, args.heterogeneity, rng),
            args.common.seed,
        )
        .map_err(runtime)?;
        let path = match suffix {
            Some(s) => sibling(&base, s),
            None => base.clone(),
        };
        let rows: Vec<Vec<Cell>> = summary
            .ticks
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                vec![
                    Cell::Int(t),
                    Cell::Real(summary.sqrt_cost_mean[j]),
                    Cell::Real(summary.hull_diameter_mean[j]),
                ]
            })
            .collect();
        write_csv(&path, &["event", "sqrt_cost_mean", "hull_diameter_mean"], &rows)?;
        files.push(path.clone());
        if args.per_replica {
            for (k, run) in summary.runs.iter().enumerate() {
                let rows: Vec<Vec<Cell>> = run
                    .ticks
                    .iter()
                    .enumerate()
                    .map(|(j, &t)| {
                        vec![Cell::Int(t), Cell::Real(run.sqrt_cost[j]), Cell::Real(run.hull_diameter[j])]
                    })
                    .collect();
                let p = sibling(&path, &format!("run{k}"));
                write_csv(&p, &["event", "sqrt_cost", "hull_diameter"], &rows)?;
                files.push(p);
            }
        }
        if rule == GossipRule::Riemannian || suffix.is_none() {
            final_hull = summary.hull_diameter_mean.last().copied().unwrap_or(f64::NAN);
        }
    }
    Ok(Summary {
        experiment: "gossip",
        config_hash: config_hash(args),
        seed: args.common.seed,
        metric: "hull_diameter",
        value: final_hull,
        files,
    })
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run_cli(args: Vec<OsString>) -> i32 {
    let at = args
        .iter()
        .skip(1)
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map(|i| i + 1);
    let args = match at {
        Some(i) => match config::splice_config(args, i) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        },
        None => args,
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Check(a) => {
            let mut stdout = std::io::stdout();
            match cmd_check(a, &mut stdout) {
                Ok(true) => return 0,
                Ok(false) => {
                    eprintln!("error: geometry checks failed");
                    return 1;
                }
                Err(e) => Err(e),
            }
        }
        Command::Oja(a) => cmd_oja(a),
        Command::Karcher(a) => cmd_karcher(a),
        Command::Psd(a) => cmd_psd(a),
        Command::Gossip(a) => cmd_gossip(a),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
