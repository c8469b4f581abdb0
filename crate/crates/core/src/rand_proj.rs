//! Two-stage random projection iteration for directed graphs.
//!
//! Every round node `j` mixes the states of its in-neighbours with row `j` of
//! the weight matrix and takes a step `−ζ^k c` on the cost,
//! `v_j = Σ_i a_ji θ_i − ζ^k c`, then picks one of its own scenarios uniformly
//! at random and moves toward that constraint with a relaxed Polyak step:
//! `θ_j ← Π_Θ(v_j − β f(v_j, q)₊ / ‖d‖² · d)`, `d ∈ ∂f(v_j, q)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::exchange;
use crate::graph::{Topology, WeightMatrix};
use crate::problems::{Domain, LocalProblem, NetworkProblem};
use crate::schedule::StepSchedule;
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct RpNodeState {
    pub theta: Vector,
}

pub fn initial_states(problem: &NetworkProblem) -> Vec<RpNodeState> {
    (0..problem.node_count()).map(|_| RpNodeState { theta: Vector::zeros(problem.dim()) }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpConfig {
    pub beta: f64,
    pub schedule: StepSchedule,
    /// Direction used when the drawn constraint is inactive; the step is
    /// zero then. `None` means the first standard basis vector.
    pub fallback_direction: Option<Vector>,
}

impl Default for RpConfig {
    fn default() -> Self {
        Self { beta: 1.0, schedule: StepSchedule::default(), fallback_direction: None }
    }
}

impl RpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 2.0) {
            return Err(Error::Parameter(format!("relaxation beta must lie in (0,2), got {}", self.beta)));
        }
        if let Some(d) = &self.fallback_direction {
            if d.norm() == 0.0 {
                return Err(Error::Parameter("fallback direction must be nonzero".into()));
            }
        }
        self.schedule.validate()
    }

    pub fn fallback(&self, dim: usize) -> Vector {
        self.fallback_direction.clone().unwrap_or_else(|| {
            let mut e = Vector::zeros(dim);
            e[0] = 1.0;
            e
        })
    }
}

/// `v_j = Σ_i a_ji θ_i − ζ c`, the self term included.
pub fn mix(j: usize, theta_j: &Vector, inbox: &[(usize, Vector)], weights: &WeightMatrix, zeta: f64, objective: &Vector) -> Vector {
    let mut v = theta_j * weights.get(j, j);
    for (i, theta_i) in inbox {
        v += theta_i * weights.get(j, *i);
    }
    v - objective * zeta
}

/// Outcome of one Polyak step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyakStep {
    pub theta: Vector,
    /// Index of the drawn scenario, `None` if the node has none.
    pub drawn: Option<usize>,
    /// `f(v, q)₊` at the drawn scenario.
    pub violation: f64,
    pub direction: Vector,
}

pub fn polyak_step<R: Rng + ?Sized>(
    v: &Vector,
    local: &LocalProblem,
    beta: f64,
    domain: &Domain,
    rng: &mut R,
    fallback: &Vector,
) -> Result<PolyakStep> {
    let samples = local.scenarios.samples();
    if samples.is_empty() {
        return Ok(PolyakStep { theta: domain.project(v), drawn: None, violation: 0.0, direction: fallback.clone() });
    }
    let w = rng.random_range(0..samples.len());
    let q = &samples[w];
    let violation = local.family.eval(v, q).max(0.0);
    if violation == 0.0 {
        return Ok(PolyakStep { theta: domain.project(v), drawn: Some(w), violation, direction: fallback.clone() });
    }
    let d = local.family.subgrad(v, q);
    let dn2 = d.norm_squared();
    if dn2 == 0.0 {
        return Err(Error::Numerical(format!("zero sub-gradient at a violated constraint (scenario {w})")));
    }
    let moved = v - &d * (beta * violation / dn2);
    Ok(PolyakStep { theta: domain.project(&moved), drawn: Some(w), violation, direction: d })
}

/// Per-node record of a round, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct RpRound {
    pub states: Vec<RpNodeState>,
    pub mixed: Vec<Vector>,
    pub steps: Vec<PolyakStep>,
}

/// One synchronous round. `rngs[j]` is node `j`'s private selection stream.
#[allow(clippy::too_many_arguments)]
pub fn rp_round(
    states: &[RpNodeState],
    topology: &Topology,
    weights: &WeightMatrix,
    problem: &NetworkProblem,
    config: &RpConfig,
    k: u64,
    rngs: &mut [ChaCha8Rng],
    parallel: bool,
) -> Result<RpRound> {
    config.validate()?;
    let m = states.len();
    if m != topology.node_count() || m != problem.node_count() || m != weights.size() || m != rngs.len() {
        return Err(Error::Configuration("state, topology, problem and stream counts disagree".into()));
    }
    let zeta = config.schedule.step(k);
    let fallback = config.fallback(problem.dim());
    let thetas: Vec<Vector> = states.iter().map(|s| s.theta.clone()).collect();
    let inboxes = exchange(&thetas, topology);

    let node = |(j, rng): (usize, &mut ChaCha8Rng)| -> Result<(Vector, PolyakStep)> {
        let v = mix(j, &states[j].theta, &inboxes[j], weights, zeta, &problem.objective);
        let step = polyak_step(&v, &problem.locals[j], config.beta, &problem.domain, rng, &fallback)?;
        Ok((v, step))
    };
    let results: Vec<Result<(Vector, PolyakStep)>> = if parallel {
        rngs.par_iter_mut().enumerate().map(node).collect()
    } else {
        rngs.iter_mut().enumerate().map(node).collect()
    };

    let mut out = RpRound { states: Vec::with_capacity(m), mixed: Vec::with_capacity(m), steps: Vec::with_capacity(m) };
    for r in results {
        let (v, step) = r?;
        out.states.push(RpNodeState { theta: step.theta.clone() });
        out.mixed.push(v);
        out.steps.push(step);
    }
    Ok(out)
}
