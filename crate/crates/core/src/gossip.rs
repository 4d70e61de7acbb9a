//! Randomized pairwise consensus of covariance matrices on a line graph.

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::Manifold;
use crate::manifolds::{spd_dist, spd_geodesic, SpdCone};
use crate::schedule::StepSchedule;

/// Largest admissible gain: at `γ = ½` both endpoints meet.
pub const MAX_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GossipRule {
    /// Both endpoints move a fraction `γ` along the Fisher geodesic joining them.
    Riemannian,
    /// Both endpoints are replaced by their arithmetic mean.
    Euclidean,
}

/// Gain per event: a fixed value, or a schedule capped at `½`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaPolicy {
    Fixed(f64),
    Schedule(StepSchedule),
}

impl GammaPolicy {
    pub fn fixed(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma <= MAX_GAMMA {
            Ok(GammaPolicy::Fixed(gamma))
        } else {
            Err(Error::InvalidArgument(format!("gossip gain must lie in (0, 1/2], got {gamma}")))
        }
    }

    pub fn gamma(&self, event: usize) -> f64 {
        match self {
            GammaPolicy::Fixed(g) => *g,
            GammaPolicy::Schedule(s) => s.gamma(event).min(MAX_GAMMA),
        }
    }
}

/// Nodes `W_1..W_m` on a line; edge `i` (0-based) joins nodes `i` and `i+1`
/// and is activated with probability `p_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipNetwork {
    nodes: Vec<DMatrix<f64>>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl GossipNetwork {
    pub fn new(nodes: Vec<DMatrix<f64>>, probs: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument("a gossip network needs at least 2 nodes".into()));
        }
        if probs.len() != nodes.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} nodes need {} edge probabilities, got {}",
                nodes.len(),
                nodes.len() - 1,
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument("edge probabilities must be positive".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "edge probabilities must sum to 1, got {total}"
            )));
        }
        let cone = SpdCone::new(nodes[0].nrows());
        for w in &nodes {
            cone.check_point(w)?;
            if linalg::min_eigenvalue(w) <= 0.0 {
                return Err(Error::NotSpd {
                    min_eigenvalue: linalg::min_eigenvalue(w),
                });
            }
        }
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p / total;
                acc
            })
            .collect();
        Ok(GossipNetwork { nodes, probs, cdf })
    }

    /// Every edge equally likely.
    pub fn uniform(nodes: Vec<DMatrix<f64>>) -> Result<Self> {
        let edges = nodes.len().saturating_sub(1).max(1);
        Self::new(nodes, vec![1.0 / edges as f64; edges])
    }

    pub fn nodes(&self) -> &[DMatrix<f64>] {
        &self.nodes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn edges(&self) -> usize {
        self.probs.len()
    }

    /// Inverse-CDF draw of an edge index.
    pub fn sample_edge(&self, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.random();
        self.cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cdf.len() - 1)
    }

    fn check_edge(&self, i: usize) -> Result<()> {
        if i < self.edges() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "edge {i} out of range for {} edges",
                self.edges()
            )))
        }
    }

    /// Both endpoints of edge `i` travel a fraction `γ` of their geodesic
    /// toward each other.
    pub fn step_riemannian(&mut self, i: usize, gamma: f64) -> Result<()> {
        self.check_edge(i)?;
        if !(gamma > 0.0 && gamma <= MAX_GAMMA) {
            return Err(Error::InvalidArgument(format!("gossip gain must lie in (0, 1/2], got {gamma}")));
        }
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let new_a = spd_geodesic(a, b, gamma)?;
        let new_b = if gamma == MAX_GAMMA {
            new_a.clone()
        } else {
            spd_geodesic(b, a, gamma)?
        };
        self.nodes[i] = new_a;
        self.nodes[i + 1] = new_b;
        Ok(())
    }

    /// Both endpoints of edge `i` are replaced by their arithmetic mean.
    pub fn step_euclidean(&mut self, i: usize) -> Result<()> {
        self.check_edge(i)?;
        let mean = (&self.nodes[i] + &self.nodes[i + 1]) * 0.5;
        self.nodes[i] = mean.clone();
        self.nodes[i + 1] = mean;
        Ok(())
    }

    pub fn apply_event(&mut self, i: usize, rule: GossipRule, gamma: f64) -> Result<()> {
        match rule {
            GossipRule::Riemannian => self.step_riemannian(i, gamma),
            GossipRule::Euclidean => self.step_euclidean(i),
        }
    }

    pub fn edge_distance(&self, i: usize) -> Result<f64> {
        self.check_edge(i)?;
        spd_dist(&self.nodes[i], &self.nodes[i + 1])
    }

    /// `C = Σ_i p_i d²(W_i, W_{i+1})`.
    pub fn cost(&self) -> Result<f64> {
        let mut c = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            c += p * spd_dist(&self.nodes[i], &self.nodes[i + 1])?.powi(2);
        }
        Ok(c)
    }

    /// `max_{i,j} ‖W_i - W_j‖_F`.
    pub fn hull_diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.nodes.len() {
            for j in i + 1..self.nodes.len() {
                best = best.max((&self.nodes[i] - &self.nodes[j]).norm());
            }
        }
        best
    }

    /// Congruence `W ↦ G W Gᵀ` applied to every node.
    pub fn congruence(&self, g: &DMatrix<f64>) -> Result<Self> {
        let nodes = self
            .nodes
            .iter()
            .map(|w| linalg::sym(&(g * w * g.transpose())))
            .collect();
        Self::new(nodes, self.probs.clone())
    }

    /// Nodes relabelled `i ↦ m-1-i`, with the edge probabilities reversed.
    pub fn reversed(&self) -> Self {
        let nodes = self.nodes.iter().rev().cloned().collect();
        let probs = self.probs.iter().rev().copied().collect::<Vec<_>>();
        Self::new(nodes, probs).expect("reversal preserves validity")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GossipConfig {
    pub gamma: GammaPolicy,
    pub events: usize,
    pub rule: GossipRule,
    pub runs: usize,
    pub record_every: usize,
    /// Check the `(1 - 2γ)` edge contraction on every Riemannian event.
    pub monitor_contraction: bool,
}

impl GossipConfig {
    pub fn new(rule: GossipRule, events: usize) -> Self {
        GossipConfig {
            gamma: GammaPolicy::Fixed(MAX_GAMMA),
            events,
            rule,
            runs: 1,
            record_every: 1,
            monitor_contraction: false,
        }
    }
}

/// Metric series of one replica, recorded at event `0` and every
/// `record_every` events.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipRun {
    pub ticks: Vec<usize>,
    pub sqrt_cost: Vec<f64>,
    pub hull_diameter: Vec<f64>,
    pub final_nodes: Vec<DMatrix<f64>>,
    /// Largest `|d_new - (1 - 2γ) d_old|` over monitored events.
    pub max_contraction_error: f64,
}

/// Replica series and their event-aligned arithmetic means.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipSummary {
    pub ticks: Vec<usize>,
    pub sqrt_cost_mean: Vec<f64>,
    pub hull_diameter_mean: Vec<f64>,
    pub runs: Vec<GossipRun>,
}

/// Runs one replica, calling `observer(event, net)` at every record tick.
pub fn run_replica_observed(
    cfg: &GossipConfig,
    mut net: GossipNetwork,
    rng: &mut dyn RngCore,
    observer: &mut dyn FnMut(usize, &GossipNetwork),
) -> Result<GossipRun> {
    let every = cfg.record_every.max(1);
    let mut run = GossipRun {
        ticks: Vec::new(),
        sqrt_cost: Vec::new(),
        hull_diameter: Vec::new(),
        final_nodes: Vec::new(),
        max_contraction_error: 0.0,
    };
    let record = |t: usize, net: &GossipNetwork, run: &mut GossipRun| -> Result<()> {
        run.ticks.push(t);
        run.sqrt_cost.push(net.cost().map_err(|e| e.at(t))?.sqrt());
        run.hull_diameter.push(net.hull_diameter());
        Ok(())
    };
    record(0, &net, &mut run)?;
    observer(0, &net);
    for t in 0..cfg.events {
        let edge = net.sample_edge(rng);
        let gamma = cfg.gamma.gamma(t);
        let monitored = cfg.monitor_contraction && cfg.rule == GossipRule::Riemannian;
        let before = if monitored {
            Some(net.edge_distance(edge).map_err(|e| e.at(t))?)
        } else {
            None
        };
        net.apply_event(edge, cfg.rule, gamma).map_err(|e| e.at(t))?;
        if let Some(old) = before {
            let new = net.edge_distance(edge).map_err(|e| e.at(t))?;
            let err = (new - (1.0 - 2.0 * gamma) * old).abs();
            run.max_contraction_error = run.max_contraction_error.max(err);
        }
        if (t + 1) % every == 0 {
            record(t + 1, &net, &mut run)?;
            observer(t + 1, &net);
        }
    }
    run.final_nodes = net.nodes;
    Ok(run)
}

pub fn run_replica(cfg: &GossipConfig, net: GossipNetwork, rng: &mut dyn RngCore) -> Result<GossipRun> {
    run_replica_observed(cfg, net, rng, &mut |_, _| {})
}

/// Runs `cfg.runs` replicas in parallel. Replica `k` starts from
/// `init(k, rng_k)` and samples edges from the same stream
/// `rng_k = ChaCha8(seed + k)`, so outputs do not depend on scheduling.
pub fn run_gossip<F>(cfg: &GossipConfig, probs: &[f64], init: F, seed: u64) -> Result<GossipSummary>
where
    F: Fn(usize, &mut dyn RngCore) -> Result<Vec<DMatrix<f64>>> + Sync,
{
    if cfg.runs == 0 {
        return Err(Error::InvalidArgument("at least one replica is required".into()));
    }
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let nodes = init(k, &mut rng)?;
            let net = GossipNetwork::new(nodes, probs.to_vec())?;
            run_replica(cfg, net, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let ticks = runs[0].ticks.clone();
    let k = runs.len() as f64;
    let mean = |pick: fn(&GossipRun) -> &Vec<f64>| -> Vec<f64> {
        (0..ticks.len())
            .map(|j| runs.iter().map(|r| pick(r)[j]).sum::<f64>() / k)
            .collect()
    };
    let sqrt_cost_mean = mean(|r| &r.sqrt_cost);
    let hull_diameter_mean = mean(|r| &r.hull_diameter);
    Ok(GossipSummary {
        ticks,
        sqrt_cost_mean,
        hull_diameter_mean,
        runs,
    })
}

/// First event after which the hull diameter is below `threshold`, or
/// `None` within `max_events`.
pub fn events_to_consensus(
    mut net: GossipNetwork,
    rule: GossipRule,
    gamma: &GammaPolicy,
    threshold: f64,
    max_events: usize,
    rng: &mut dyn RngCore,
) -> Result<Option<usize>> {
    if net.hull_diameter() < threshold {
        return Ok(Some(0));
    }
    for t in 0..max_events {
        let edge = net.sample_edge(rng);
        net.apply_event(edge, rule, gamma.gamma(t)).map_err(|e| e.at(t))?;
        if net.hull_diameter() < threshold {
            return Ok(Some(t + 1));
        }
    }
    Ok(None)
}

/// Empirical covariances of `m` nodes observing Gaussian data in `Rⁿ`.
///
/// Node `i` draws `samples_per_node` vectors from `N(0, Σ_i)` with
/// `Σ_i = s_i Σ₀ + h b_i b_iᵀ`, where `Σ₀` is a shared random SPD matrix,
/// `s_i = 1 + h u_i` with `u_i ~ U[0, 1)`, `b_i ~ N(0, I/n)` and `h` is the
/// heterogeneity. Each empirical covariance is regularized by `εI` with
/// `ε = 10⁻⁶ tr/n`.
pub fn make_initial_covariances(
    m: usize,
    n: usize,
    samples_per_node: usize,
    heterogeneity: f64,
    rng: &mut dyn RngCore,
) -> Result<Vec<DMatrix<f64>>> {
    if m < 2 || n == 0 || samples_per_node == 0 {
        return Err(Error::InvalidArgument(format!(
            "need m >= 2, n >= 1 and samples >= 1, got m={m}, n={n}, samples={samples_per_node}"
        )));
    }
    if !(heterogeneity >= 0.0 && heterogeneity.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "heterogeneity must be >= 0, got {heterogeneity}"
        )));
    }
    let base = SpdCone::new(n).random_point(rng);
    (0..m)
        .map(|_| {
            let scale = 1.0 + heterogeneity * rng.random::<f64>();
            let b = linalg::gaussian_matrix(n, 1, rng) / (n as f64).sqrt();
            let sigma = linalg::sym(&(&base * scale + &b * b.transpose() * heterogeneity));
            let chol = sigma.clone().cholesky().ok_or(Error::NotSpd {
                min_eigenvalue: linalg::min_eigenvalue(&sigma),
            })?;
            let l = chol.l();
            let mut cov = DMatrix::zeros(n, n);
            for _ in 0..samples_per_node {
                let z = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = &l * z;
                cov += &x * x.transpose();
            }
            cov /= samples_per_node as f64;
            let eps = 1e-6 * cov.trace() / n as f64;
            Ok(linalg::sym(&(cov + DMatrix::identity(n, n) * eps)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two(a: DMatrix<f64>, b: DMatrix<f64>) -> GossipNetwork {
        GossipNetwork::uniform(vec![a, b]).unwrap()
    }

    #[test]
    fn commuting_midpoint() {
        let mut net = two(DMatrix::identity(2, 2), linalg::diag(&[9.0, 4.0]));
        net.step_riemannian(0, 0.5).unwrap();
        for w in net.nodes() {
            assert_relative_eq!(w, &linalg::diag(&[3.0, 2.0]), epsilon = 1e-12);
        }
        let mut net = two(DMatrix::identity(2, 2), linalg::diag(&[9.0, 4.0]));
        net.step_euclidean(0).unwrap();
        for w in net.nodes() {
            assert_relative_eq!(w, &linalg::diag(&[5.0, 2.5]), epsilon = 1e-15);
        }
    }

    #[test]
    fn equal_nodes_unchanged() {
        let w = linalg::diag(&[2.0, 3.0]);
        let mut net = two(w.clone(), w.clone());
        net.step_riemannian(0, 0.3).unwrap();
        net.step_euclidean(0).unwrap();
        for node in net.nodes() {
            assert_relative_eq!(node, &w, epsilon = 1e-13);
        }
    }

    #[test]
    fn cost_and_diameter_examples() {
        let net = two(DMatrix::identity(2, 2), linalg::diag(&[1.0_f64.exp().powi(2), 1.0]));
        assert_relative_eq!(net.cost().unwrap(), 4.0, epsilon = 1e-12);
        let net = two(DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 3.0);
        assert_relative_eq!(net.hull_diameter(), 2.0 * 2.0_f64.sqrt(), epsilon = 1e-14);
        let w = linalg::diag(&[2.0, 3.0]);
        let net = GossipNetwork::uniform(vec![w.clone(), w.clone(), w]).unwrap();
        assert!(net.cost().unwrap() < 1e-28);
        assert_eq!(net.hull_diameter(), 0.0);
    }

    #[test]
    fn contraction_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cone = SpdCone::new(3);
        for &gamma in &[0.1, 0.25, 0.4, 0.5] {
            let mut net = two(cone.random_point(&mut rng), cone.random_point(&mut rng));
            let before = net.edge_distance(0).unwrap();
            net.step_riemannian(0, gamma).unwrap();
            assert_relative_eq!(net.edge_distance(0).unwrap(), (1.0 - 2.0 * gamma) * before, epsilon = 1e-9);
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let i = DMatrix::<f64>::identity(2, 2);
        assert!(GossipNetwork::new(vec![i.clone(), i.clone()], vec![0.5]).is_err());
        assert!(GossipNetwork::new(vec![i.clone(), -i.clone()], vec![1.0]).is_err());
        let mut net = two(i.clone(), i);
        assert!(net.step_riemannian(0, 0.6).is_err());
        assert!(net.step_riemannian(1, 0.5).is_err());
        assert!(GammaPolicy::fixed(0.0).is_err());
    }

    #[test]
    fn schedule_policy_is_capped() {
        let p = GammaPolicy::Schedule(StepSchedule::new(3.0, 1.0, 0.0).unwrap());
        assert_eq!(p.gamma(0), 0.5);
        assert!(p.gamma(1_000_000) < 0.01);
    }

    #[test]
    fn edge_sampling_follows_probabilities() {
        let i = DMatrix::<f64>::identity(1, 1);
        let net = GossipNetwork::new(vec![i.clone(), i.clone(), i], vec![0.2, 0.8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let hits = (0..20_000).filter(|_| net.sample_edge(&mut rng) == 0).count();
        assert!((hits as f64 / 20_000.0 - 0.2).abs() < 0.015);
    }

    #[test]
    fn arithmetic_mean_dominates_geometric_mean() {
        let a = linalg::diag(&[1.0, 7.0, 0.2]);
        let b = linalg::diag(&[4.0, 0.5, 0.2]);
        let mut r = two(a.clone(), b.clone());
        let mut e = two(a, b);
        r.step_riemannian(0, 0.5).unwrap();
        e.step_euclidean(0).unwrap();
        assert!(linalg::min_eigenvalue(&(&e.nodes()[0] - &r.nodes()[0])) >= -1e-12);
    }

    #[test]
    fn initial_covariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nodes = make_initial_covariances(4, 3, 20_000, 0.0, &mut rng).unwrap();
        for w in &nodes {
            assert!(linalg::min_eigenvalue(w) > 0.0);
            assert!((w - &nodes[0]).norm() / nodes[0].norm() < 0.1);
        }
    }
}
