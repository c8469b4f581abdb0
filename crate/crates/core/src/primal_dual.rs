//! Networked primal-dual sub-gradient iteration for undirected graphs.
//!
//! Node `j` keeps a local copy `θ_j`, a consensus multiplier `λ_j` and an
//! inequality multiplier `γ_j = (γ_j⁰, γ_j¹, …, γ_j^{n_j})` attached to
//! `g_j(θ_j) = [d(θ_j, Θ); f(θ_j, q⁽ʲ¹⁾)₊; …]`. One round is a sub-gradient
//! descent step on the augmented Lagrangian in `θ` and an ascent step in
//! `(λ, γ)`, both normalized so no variable moves by more than `ζ^k`.
//!
//! A round needs two exchange waves: first every node sends `θ_j` and forms
//! `b_j = Σ_i a_ji (θ_j − θ_i)`, then every node sends `λ̃_j = λ_j + ρ b_j`.

use rayon::prelude::*;

use crate::engine::exchange;
use crate::graph::{laplacian, Topology, WeightMatrix};
use crate::problems::{Domain, LocalProblem, NetworkProblem};
use crate::schedule::StepSchedule;
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct PdNodeState {
    pub theta: Vector,
    pub lambda: Vector,
    pub gamma: Vector,
}

impl PdNodeState {
    /// All-zero start for a node with `n_j` scenarios.
    pub fn zeros(dim: usize, n_j: usize) -> Self {
        Self { theta: Vector::zeros(dim), lambda: Vector::zeros(dim), gamma: Vector::zeros(n_j + 1) }
    }
}

pub fn initial_states(problem: &NetworkProblem) -> Vec<PdNodeState> {
    problem.locals.iter().map(|l| PdNodeState::zeros(problem.dim(), l.scenarios.len())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdConfig {
    pub rho: f64,
    pub schedule: StepSchedule,
}

impl Default for PdConfig {
    fn default() -> Self {
        Self { rho: 1.0, schedule: StepSchedule::default() }
    }
}

impl PdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Parameter(format!("penalty weight must be positive, got {}", self.rho)));
        }
        self.schedule.validate()
    }
}

/// `b_j = Σ_{i ∈ N_j} a_ji (θ_j − θ_i)` from the first exchange wave.
pub fn local_disagreement(j: usize, theta_j: &Vector, inbox: &[(usize, Vector)], weights: &WeightMatrix) -> Vector {
    let mut b = Vector::zeros(theta_j.len());
    for (i, theta_i) in inbox {
        b += (theta_j - theta_i) * weights.get(j, *i);
    }
    b
}

/// `λ̃_j = λ_j + ρ b_j`, the value broadcast in the second wave.
pub fn modified_multiplier(lambda_j: &Vector, b_j: &Vector, rho: f64) -> Vector {
    lambda_j + b_j * rho
}

/// `g_j(θ) = [d(θ, Θ); f(θ, q⁽ʲ¹⁾)₊; …; f(θ, q⁽ʲⁿʲ⁾)₊]`.
pub fn g_eval(theta: &Vector, domain: &Domain, local: &LocalProblem) -> Vector {
    let values = local.values(theta);
    let mut g = Vector::zeros(values.len() + 1);
    g[0] = domain.distance(theta);
    for (i, v) in values.into_iter().enumerate() {
        g[i + 1] = v.max(0.0);
    }
    g
}

/// Rows are sub-gradients of the entries of `g_j` at `θ`: the unit vector
/// away from Θ for the distance (zero inside), the constraint sub-gradient
/// where `f > 0` and zero where `f ≤ 0`.
pub fn g_subgrad(theta: &Vector, domain: &Domain, local: &LocalProblem) -> Matrix {
    let n = theta.len();
    let samples = local.scenarios.samples();
    let mut s = Matrix::zeros(samples.len() + 1, n);
    let away = theta - domain.project(theta);
    let dist = away.norm();
    if dist > 0.0 {
        s.row_mut(0).copy_from(&(away / dist).transpose());
    }
    for (i, q) in samples.iter().enumerate() {
        if local.family.eval(theta, q) > 0.0 {
            s.row_mut(i + 1).copy_from(&local.family.subgrad(theta, q).transpose());
        }
    }
    s
}

/// `T_j = c + s_j'(γ_j + ρ g_j) + Σ_{i ∈ N_j ∪ {j}} l_ij λ̃_i`.
///
/// `incoming` holds `λ̃_i` from every neighbour; `own` is `λ̃_j`. The self
/// term `l_jj λ̃_j` is included since `l_jj ≠ 0` whenever node `j` has a
/// neighbour.
#[allow(clippy::too_many_arguments)]
pub fn primal_direction(
    j: usize,
    objective: &Vector,
    s_j: &Matrix,
    gamma_j: &Vector,
    g_j: &Vector,
    rho: f64,
    own: &Vector,
    incoming: &[(usize, Vector)],
    lap: &Matrix,
    topology: &Topology,
) -> Result<Vector> {
    let mut t = objective + s_j.transpose() * (gamma_j + g_j * rho);
    t += own * lap[(j, j)];
    for i in topology.in_neighbors(j) {
        let lt = incoming
            .iter()
            .find(|(sender, _)| *sender == i)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Protocol(format!("node {j} is missing the modified multiplier of node {i}")))?;
        t += lt * lap[(i, j)];
    }
    Ok(t)
}

/// Sub-gradient directions of one round at the current states.
#[derive(Debug, Clone, PartialEq)]
pub struct PdDirections {
    /// `T_j ∈ ∂_{θ_j} L`.
    pub primal: Vec<Vector>,
    /// `P_j = −(b_j; g_j) ∈ −∂_{(λ_j, γ_j)} L`.
    pub dual: Vec<Vector>,
    pub disagreement: Vec<Vector>,
    pub constraint: Vec<Vector>,
    /// Number of exchange waves used to assemble the directions.
    pub waves: usize,
}

fn ensure_undirected(topology: &Topology, weights: &WeightMatrix) -> Result<()> {
    if topology.is_directed() {
        return Err(Error::Configuration("the primal-dual iteration needs an undirected graph".into()));
    }
    if !weights.is_symmetric() {
        return Err(Error::Configuration("the primal-dual iteration needs symmetric weights".into()));
    }
    Ok(())
}

fn map_nodes<T: Send, F: Fn(usize) -> T + Sync + Send>(m: usize, parallel: bool, f: F) -> Vec<T> {
    if parallel {
        (0..m).into_par_iter().map(f).collect()
    } else {
        (0..m).map(f).collect()
    }
}

pub fn pd_directions(
    states: &[PdNodeState],
    topology: &Topology,
    weights: &WeightMatrix,
    problem: &NetworkProblem,
    rho: f64,
    parallel: bool,
) -> Result<PdDirections> {
    ensure_undirected(topology, weights)?;
    let m = states.len();
    if m != topology.node_count() || m != problem.node_count() || m != weights.size() {
        return Err(Error::Configuration("state, topology and problem sizes disagree".into()));
    }
    let lap = laplacian(weights);

    // wave 1: θ
    let thetas: Vec<Vector> = states.iter().map(|s| s.theta.clone()).collect();
    let inboxes = exchange(&thetas, topology);
    let disagreement = map_nodes(m, parallel, |j| local_disagreement(j, &states[j].theta, &inboxes[j], weights));
    let tilde: Vec<Vector> = states
        .iter()
        .zip(&disagreement)
        .map(|(s, b)| modified_multiplier(&s.lambda, b, rho))
        .collect();

    // wave 2: λ̃
    let tilde_inboxes = exchange(&tilde, topology);

    let per_node = map_nodes(m, parallel, |j| -> Result<(Vector, Vector, Vector)> {
        let st = &states[j];
        let local = &problem.locals[j];
        let g = g_eval(&st.theta, &problem.domain, local);
        let s = g_subgrad(&st.theta, &problem.domain, local);
        let t = primal_direction(j, &problem.objective, &s, &st.gamma, &g, rho, &tilde[j], &tilde_inboxes[j], &lap, topology)?;
        let b = &disagreement[j];
        let p = -Vector::from_iterator(b.len() + g.len(), b.iter().chain(g.iter()).copied());
        Ok((t, p, g))
    });
    let mut primal = Vec::with_capacity(m);
    let mut dual = Vec::with_capacity(m);
    let mut constraint = Vec::with_capacity(m);
    for r in per_node {
        let (t, p, g) = r?;
        primal.push(t);
        dual.push(p);
        constraint.push(g);
    }
    Ok(PdDirections { primal, dual, disagreement, constraint, waves: 2 })
}

/// Step sizes actually taken by a node in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdSteps {
    pub alpha: f64,
    pub beta: f64,
    pub primal_norm: f64,
    pub dual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct PdRound {
    pub states: Vec<PdNodeState>,
    pub steps: Vec<PdSteps>,
    pub directions: PdDirections,
}

/// One synchronous round: every right-hand side uses round-`k` values.
pub fn pd_round(
    states: &[PdNodeState],
    topology: &Topology,
    weights: &WeightMatrix,
    problem: &NetworkProblem,
    config: &PdConfig,
    k: u64,
    parallel: bool,
) -> Result<PdRound> {
    config.validate()?;
    let directions = pd_directions(states, topology, weights, problem, config.rho, parallel)?;
    let zeta = config.schedule.step(k);
    let mut next = Vec::with_capacity(states.len());
    let mut steps = Vec::with_capacity(states.len());
    for (j, st) in states.iter().enumerate() {
        let t = &directions.primal[j];
        let p = &directions.dual[j];
        let (tn, pn) = (t.norm(), p.norm());
        let alpha = zeta / tn.max(1.0);
        let beta = zeta / pn.max(1.0);
        next.push(PdNodeState {
            theta: &st.theta - t * alpha,
            lambda: &st.lambda + &directions.disagreement[j] * beta,
            gamma: &st.gamma + &directions.constraint[j] * beta,
        });
        steps.push(PdSteps { alpha, beta, primal_norm: tn, dual_norm: pn });
    }
    Ok(PdRound { states: next, steps, directions })
}

/// `h_ρ(θ) = (ρ/2) Σ_j (‖(L_j ⊗ I)θ‖² + ‖g_j(θ_j)‖²)`.
pub fn penalty(states: &[PdNodeState], weights: &WeightMatrix, problem: &NetworkProblem, rho: f64) -> f64 {
    lagrangian_parts(states, weights, problem).iter().map(|p| 0.5 * rho * (p.consensus.norm_squared() + p.g.norm_squared())).sum()
}

struct LagrangianPart {
    consensus: Vector,
    g: Vector,
}

fn lagrangian_parts(states: &[PdNodeState], weights: &WeightMatrix, problem: &NetworkProblem) -> Vec<LagrangianPart> {
    let lap = laplacian(weights);
    let m = states.len();
    (0..m)
        .map(|j| {
            let mut consensus = Vector::zeros(problem.dim());
            for (i, s) in states.iter().enumerate() {
                consensus += &s.theta * lap[(j, i)];
            }
            LagrangianPart { consensus, g: g_eval(&states[j].theta, &problem.domain, &problem.locals[j]) }
        })
        .collect()
}

/// Augmented Lagrangian at the primal copies in `states` and the multipliers
/// in `multipliers`:
/// `Σ_j c'θ_j + λ_j'(L_j ⊗ I)θ + γ_j'g_j(θ_j) + (ρ/2)(‖(L_j ⊗ I)θ‖² + ‖g_j(θ_j)‖²)`.
pub fn augmented_lagrangian(
    states: &[PdNodeState],
    multipliers: &[PdNodeState],
    weights: &WeightMatrix,
    problem: &NetworkProblem,
    rho: f64,
) -> f64 {
    lagrangian_parts(states, weights, problem)
        .iter()
        .zip(states.iter().zip(multipliers))
        .map(|(part, (s, mult))| {
            problem.objective.dot(&s.theta)
                + mult.lambda.dot(&part.consensus)
                + mult.gamma.dot(&part.g)
                + 0.5 * rho * (part.consensus.norm_squared() + part.g.norm_squared())
        })
        .sum()
}

/// `Σ_j T_j'(θ_j − θ_j*) + P_j'(ν_j − ν_j*)` with `ν = (λ, γ)`. Nonnegative
/// at every iterate when `saddle` is a saddle point of the augmented
/// Lagrangian.
pub fn saddle_inner_product(states: &[PdNodeState], saddle: &[PdNodeState], directions: &PdDirections) -> f64 {
    states
        .iter()
        .zip(saddle)
        .enumerate()
        .map(|(j, (s, z))| {
            let nu = Vector::from_iterator(s.lambda.len() + s.gamma.len(), s.lambda.iter().chain(s.gamma.iter()).copied());
            let nu_star = Vector::from_iterator(z.lambda.len() + z.gamma.len(), z.lambda.iter().chain(z.gamma.iter()).copied());
            directions.primal[j].dot(&(&s.theta - &z.theta)) + directions.dual[j].dot(&(nu - nu_star))
        })
        .sum()
}
