//! Constraint families, the decision domain Θ, and concrete problem templates.
//!
//! A [`ConstraintFamily`] is a map `(θ, q) ↦ f(θ, q)` convex in `θ` for every
//! fixed uncertainty `q`, together with a sub-gradient oracle. A
//! [`NetworkProblem`] attaches to every node its own family and its own
//! scenarios.

use std::fmt::Debug;
use std::sync::Arc;

use crate::rng::{stream, Purpose};
use crate::scenario::{draw_scenarios, ScenarioSet, Support};
use crate::{Error, Matrix, Result, Vector};

pub trait ConstraintFamily: Debug + Send + Sync {
    fn decision_dim(&self) -> usize;
    fn sample_dim(&self) -> usize;
    /// `f(θ, q)`; nonpositive means `θ` satisfies the constraint for `q`.
    fn eval(&self, theta: &Vector, q: &Vector) -> f64;
    /// An element of `∂_θ f(θ, q)`.
    fn subgrad(&self, theta: &Vector, q: &Vector) -> Vector;
    /// `(a, b)` with `f(θ, q) = a'θ − b` when the constraint is affine in `θ`.
    fn affine(&self, _q: &Vector) -> Option<(Vector, f64)> {
        None
    }

    fn check_dims(&self, theta: &Vector, q: &Vector) -> Result<()> {
        if theta.len() != self.decision_dim() || q.len() != self.sample_dim() {
            return Err(Error::Parameter(format!(
                "dimension mismatch: theta {} (expected {}), q {} (expected {})",
                theta.len(),
                self.decision_dim(),
                q.len(),
                self.sample_dim()
            )));
        }
        Ok(())
    }
}

/// Closed convex set with nonempty interior.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Box { lower: Vector, upper: Vector },
    Ball { center: Vector, radius: f64 },
    Whole { dim: usize },
}

impl Domain {
    pub fn cube(dim: usize, half_width: f64) -> Self {
        Domain::Box { lower: Vector::from_element(dim, -half_width), upper: Vector::from_element(dim, half_width) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lower, .. } => lower.len(),
            Domain::Ball { center, .. } => center.len(),
            Domain::Whole { dim } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Box { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() {
                    return Err(Error::Configuration("box bounds must have equal nonzero length".into()));
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
                    return Err(Error::Configuration("box needs lower < upper in every coordinate".into()));
                }
            }
            Domain::Ball { center, radius } => {
                if center.is_empty() || !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Configuration("ball needs a center and a positive radius".into()));
                }
            }
            Domain::Whole { dim } => {
                if *dim == 0 {
                    return Err(Error::Configuration("domain dimension must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Euclidean projection.
    pub fn project(&self, x: &Vector) -> Vector {
        match self {
            Domain::Box { lower, upper } => x.zip_zip_map(lower, upper, |v, l, u| v.clamp(l, u)),
            Domain::Ball { center, radius } => {
                let offset = x - center;
                let dist = offset.norm();
                if dist <= *radius {
                    x.clone()
                } else {
                    // keep the image inside the ball despite rounding
                    let mut scale = radius / dist;
                    loop {
                        let p = center + &offset * scale;
                        if (&p - center).norm() <= *radius {
                            break p;
                        }
                        scale *= 1.0 - f64::EPSILON;
                    }
                }
            }
            Domain::Whole { .. } => x.clone(),
        }
    }

    /// `d(x, Θ) = ‖x − Π(x)‖`.
    pub fn distance(&self, x: &Vector) -> f64 {
        (x - self.project(x)).norm()
    }

    pub fn contains(&self, x: &Vector) -> bool {
        match self {
            Domain::Box { lower, upper } => x.iter().zip(lower.iter().zip(upper.iter())).all(|(v, (l, u))| v >= l && v <= u),
            Domain::Ball { center, radius } => (x - center).norm() <= *radius,
            Domain::Whole { .. } => true,
        }
    }
}

/// `f(θ, q) = a'θ − b` with `q = (a, b)`.
#[derive(Debug, Clone)]
pub struct HalfspaceFamily {
    dim: usize,
}

/// Random-halfspace test family of the given decision dimension.
pub fn sampled_halfspace_family(dim: usize) -> Result<HalfspaceFamily> {
    if dim == 0 {
        return Err(Error::Parameter("halfspace dimension must be positive".into()));
    }
    Ok(HalfspaceFamily { dim })
}

impl ConstraintFamily for HalfspaceFamily {
    fn decision_dim(&self) -> usize {
        self.dim
    }
    fn sample_dim(&self) -> usize {
        self.dim + 1
    }
    fn eval(&self, theta: &Vector, q: &Vector) -> f64 {
        q.rows(0, self.dim).dot(theta) - q[self.dim]
    }
    fn subgrad(&self, _theta: &Vector, q: &Vector) -> Vector {
        q.rows(0, self.dim).into_owned()
    }
    fn affine(&self, q: &Vector) -> Option<(Vector, f64)> {
        Some((q.rows(0, self.dim).into_owned(), q[self.dim]))
    }
}

/// `f(θ, q) = q'θ`.
#[derive(Debug, Clone)]
pub struct BilinearFamily {
    pub dim: usize,
}

impl ConstraintFamily for BilinearFamily {
    fn decision_dim(&self) -> usize {
        self.dim
    }
    fn sample_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, theta: &Vector, q: &Vector) -> f64 {
        q.dot(theta)
    }
    fn subgrad(&self, _theta: &Vector, q: &Vector) -> Vector {
        q.clone()
    }
    fn affine(&self, q: &Vector) -> Option<(Vector, f64)> {
        Some((q.clone(), 0.0))
    }
}

/// `f(θ, q) = ‖θ − q‖² − offset`.
#[derive(Debug, Clone)]
pub struct SquaredDistanceFamily {
    pub dim: usize,
    pub offset: f64,
}

impl ConstraintFamily for SquaredDistanceFamily {
    fn decision_dim(&self) -> usize {
        self.dim
    }
    fn sample_dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, theta: &Vector, q: &Vector) -> f64 {
        (theta - q).norm_squared() - self.offset
    }
    fn subgrad(&self, theta: &Vector, q: &Vector) -> Vector {
        (theta - q) * 2.0
    }
}

/// Epigraph lift of node `node`'s local cost over the decision
/// `(θ, t_1, …, t_m)`: `f_j(θ, q) − t_j`. Only `θ` and `t_j` enter.
#[derive(Debug, Clone)]
pub struct EpigraphFamily {
    local: Arc<dyn ConstraintFamily>,
    node: usize,
    nodes: usize,
}

impl EpigraphFamily {
    pub fn new(local: Arc<dyn ConstraintFamily>, node: usize, nodes: usize) -> Result<Self> {
        if node >= nodes {
            return Err(Error::Parameter(format!("node {node} out of range for {nodes} nodes")));
        }
        Ok(Self { local, node, nodes })
    }

    fn theta_dim(&self) -> usize {
        self.local.decision_dim()
    }
}

/// One epigraph family per node for the locally known costs `f_j`.
pub fn epigraph_family(locals: Vec<Arc<dyn ConstraintFamily>>) -> Result<Vec<EpigraphFamily>> {
    let nodes = locals.len();
    if nodes == 0 {
        return Err(Error::Parameter("at least one local cost is required".into()));
    }
    let dim = locals[0].decision_dim();
    if locals.iter().any(|f| f.decision_dim() != dim) {
        return Err(Error::Parameter("local costs must share the decision dimension".into()));
    }
    locals.into_iter().enumerate().map(|(j, f)| EpigraphFamily::new(f, j, nodes)).collect()
}

/// Objective `Σ_j t_j` over `(θ, t_1, …, t_m)`.
pub fn epigraph_objective(theta_dim: usize, nodes: usize) -> Vector {
    Vector::from_iterator(theta_dim + nodes, (0..theta_dim + nodes).map(|i| if i >= theta_dim { 1.0 } else { 0.0 }))
}

impl ConstraintFamily for EpigraphFamily {
    fn decision_dim(&self) -> usize {
        self.theta_dim() + self.nodes
    }
    fn sample_dim(&self) -> usize {
        self.local.sample_dim()
    }
    fn eval(&self, x: &Vector, q: &Vector) -> f64 {
        let theta = x.rows(0, self.theta_dim()).into_owned();
        self.local.eval(&theta, q) - x[self.theta_dim() + self.node]
    }
    fn subgrad(&self, x: &Vector, q: &Vector) -> Vector {
        let n = self.theta_dim();
        let theta = x.rows(0, n).into_owned();
        let mut g = Vector::zeros(self.decision_dim());
        g.rows_mut(0, n).copy_from(&self.local.subgrad(&theta, q));
        g[n + self.node] = -1.0;
        g
    }
    fn affine(&self, q: &Vector) -> Option<(Vector, f64)> {
        let (a, b) = self.local.affine(q)?;
        let n = self.theta_dim();
        let mut full = Vector::zeros(self.decision_dim());
        full.rows_mut(0, n).copy_from(&a);
        full[n + self.node] = -1.0;
        Some((full, b))
    }
}

/// Lower-triangular Toeplitz matrix with first column `u`.
pub fn toeplitz_from(u: &[f64]) -> Result<Matrix> {
    if u.is_empty() {
        return Err(Error::Parameter("Toeplitz generator must be nonempty".into()));
    }
    let n = u.len();
    Ok(Matrix::from_fn(n, n, |i, k| if i >= k { u[i - k] } else { 0.0 }))
}

/// Robust identification of an impulse response `θ` from input `u` and
/// output `y` of an order-`n` convolution `y = Uθ`, with uncertainty
/// `q = (δu, δy)` on both signals. Decision `(θ, t)`, constraint
/// `‖(y+δy) − (U+δU)θ‖ − t ≤ 0`, objective `t`.
#[derive(Debug, Clone)]
pub struct RobustIdent {
    u: Vec<f64>,
    y: Vector,
    toeplitz: Matrix,
}

/// Half-width of the default box on `(θ, t)`.
pub const IDENT_BOX_HALF_WIDTH: f64 = 1e3;

impl RobustIdent {
    pub fn new(u: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if u.len() != y.len() {
            return Err(Error::Parameter(format!("input has length {}, output {}", u.len(), y.len())));
        }
        let toeplitz = toeplitz_from(&u)?;
        Ok(Self { u, y: Vector::from_vec(y), toeplitz })
    }

    pub fn order(&self) -> usize {
        self.u.len()
    }

    pub fn toeplitz(&self) -> &Matrix {
        &self.toeplitz
    }

    /// Nominal least-squares solution `U⁻¹y` by forward substitution.
    pub fn least_squares(&self) -> Result<Vector> {
        let n = self.order();
        if self.u[0] == 0.0 {
            return Err(Error::Numerical("Toeplitz matrix is singular".into()));
        }
        let mut theta = Vector::zeros(n);
        for i in 0..n {
            let partial: f64 = (0..i).map(|k| self.toeplitz[(i, k)] * theta[k]).sum();
            theta[i] = (self.y[i] - partial) / self.u[0];
        }
        Ok(theta)
    }

    /// Uniform uncertainty on `{q ∈ R^{2n} : ‖q‖ ≤ rho}`.
    pub fn support(&self, rho: f64) -> Support {
        Support::Ball { dim: 2 * self.order(), radius: rho }
    }

    /// Box of half-width [`IDENT_BOX_HALF_WIDTH`] on `(θ, t)` with `t ≥ 0`.
    pub fn default_domain(&self) -> Domain {
        let n = self.order();
        let mut lower = Vector::from_element(n + 1, -IDENT_BOX_HALF_WIDTH);
        lower[n] = 0.0;
        Domain::Box { lower, upper: Vector::from_element(n + 1, IDENT_BOX_HALF_WIDTH) }
    }

    /// Unit vector on `t`.
    pub fn objective(&self) -> Vector {
        let mut c = Vector::zeros(self.order() + 1);
        c[self.order()] = 1.0;
        c
    }

    /// `(y+δy) − (U+δU)θ` for `q = (δu, δy)`.
    pub fn residual(&self, theta: &Vector, q: &Vector) -> Vector {
        let n = self.order();
        let mut r = &self.y - &self.toeplitz * theta;
        for i in 0..n {
            // δU is lower-triangular Toeplitz in δu
            let du: f64 = (0..=i).map(|k| q[i - k] * theta[k]).sum();
            r[i] += q[n + i] - du;
        }
        r
    }

    fn perturbed_toeplitz(&self, q: &Vector) -> Matrix {
        let n = self.order();
        Matrix::from_fn(n, n, |i, k| if i >= k { self.u[i - k] + q[i - k] } else { 0.0 })
    }

    /// Checked constraint value at the augmented decision `(θ, t)`.
    pub fn ident_constraint(&self, theta_aug: &Vector, q: &Vector) -> Result<f64> {
        self.check_dims(theta_aug, q)?;
        Ok(self.eval(theta_aug, q))
    }

    /// `r(θ, ρ) = max_i ‖(y+δy⁽ⁱ⁾) − (U+δU⁽ⁱ⁾)θ‖` over all scenario sets.
    pub fn max_residual(&self, theta: &Vector, sets: &[ScenarioSet]) -> Result<f64> {
        if theta.len() != self.order() {
            return Err(Error::Parameter(format!("theta has length {}, expected {}", theta.len(), self.order())));
        }
        let mut samples = sets.iter().flat_map(|s| s.samples()).peekable();
        if samples.peek().is_none() {
            return Err(Error::Parameter("no scenarios to evaluate".into()));
        }
        let mut worst = 0.0f64;
        for q in samples {
            if q.len() != 2 * self.order() {
                return Err(Error::Parameter("scenario dimension mismatch".into()));
            }
            worst = worst.max(self.residual(theta, q).norm());
        }
        Ok(worst)
    }
}

impl ConstraintFamily for RobustIdent {
    fn decision_dim(&self) -> usize {
        self.order() + 1
    }
    fn sample_dim(&self) -> usize {
        2 * self.order()
    }
    fn eval(&self, x: &Vector, q: &Vector) -> f64 {
        let n = self.order();
        let theta = x.rows(0, n).into_owned();
        self.residual(&theta, q).norm() - x[n]
    }
    fn subgrad(&self, x: &Vector, q: &Vector) -> Vector {
        let n = self.order();
        let theta = x.rows(0, n).into_owned();
        let r = self.residual(&theta, q);
        let norm = r.norm();
        let mut g = Vector::zeros(n + 1);
        if norm > 0.0 {
            let grad = -(self.perturbed_toeplitz(q).transpose() * r) / norm;
            g.rows_mut(0, n).copy_from(&grad);
        }
        g[n] = -1.0;
        g
    }
}

/// What node `j` knows: its constraint family and its own scenarios.
#[derive(Debug, Clone)]
pub struct LocalProblem {
    pub family: Arc<dyn ConstraintFamily>,
    pub scenarios: ScenarioSet,
}

impl LocalProblem {
    /// `f(θ, q⁽ʲⁱ⁾)` for every local scenario.
    pub fn values(&self, theta: &Vector) -> Vec<f64> {
        self.scenarios.samples().iter().map(|q| self.family.eval(theta, q)).collect()
    }
}

/// Scenario program split across `m` nodes:
/// `min c'θ over θ ∈ Θ` subject to every node's local scenario constraints.
#[derive(Debug, Clone)]
pub struct NetworkProblem {
    pub objective: Vector,
    pub domain: Domain,
    pub locals: Vec<LocalProblem>,
}

impl NetworkProblem {
    pub fn new(objective: Vector, domain: Domain, locals: Vec<LocalProblem>) -> Result<Self> {
        let p = Self { objective, domain, locals };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn node_count(&self) -> usize {
        self.locals.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let n = self.dim();
        if n == 0 || self.domain.dim() != n {
            return Err(Error::Configuration(format!("objective dimension {n} does not match domain {}", self.domain.dim())));
        }
        if self.locals.is_empty() {
            return Err(Error::Configuration("problem has no nodes".into()));
        }
        for (j, local) in self.locals.iter().enumerate() {
            if local.family.decision_dim() != n {
                return Err(Error::Configuration(format!("node {j} family has decision dimension {}", local.family.decision_dim())));
            }
            if local.scenarios.samples().iter().any(|q| q.len() != local.family.sample_dim()) {
                return Err(Error::Configuration(format!("node {j} has scenarios of the wrong dimension")));
            }
        }
        Ok(())
    }

    /// Largest constraint value over all nodes' scenarios, clipped at zero,
    /// plus the distance to Θ.
    pub fn max_violation(&self, theta: &Vector) -> f64 {
        let worst = self
            .locals
            .iter()
            .flat_map(|l| l.values(theta))
            .fold(0.0f64, f64::max);
        worst.max(self.domain.distance(theta))
    }

    /// All scenarios, each paired with the family that evaluates it.
    pub fn all_constraints(&self) -> impl Iterator<Item = (&Arc<dyn ConstraintFamily>, &Vector)> {
        self.locals.iter().flat_map(|l| l.scenarios.samples().iter().map(move |q| (&l.family, q)))
    }
}

/// Every node shares `family`; node `j` draws `counts[j]` scenarios from
/// `support` using its own stream of `seed`.
pub fn build_network_problem(
    objective: Vector,
    domain: Domain,
    family: Arc<dyn ConstraintFamily>,
    support: &Support,
    counts: &[usize],
    seed: u64,
) -> Result<NetworkProblem> {
    if support.sample_dim() != family.sample_dim() {
        return Err(Error::Configuration(format!(
            "support draws {}-vectors but the family expects {}",
            support.sample_dim(),
            family.sample_dim()
        )));
    }
    let locals = counts
        .iter()
        .enumerate()
        .map(|(j, &n_j)| {
            let mut rng = stream(seed, Purpose::Scenarios, j as u64);
            Ok(LocalProblem { family: family.clone(), scenarios: draw_scenarios(support, j, n_j, &mut rng)? })
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkProblem::new(objective, domain, locals)
}

/// Random-halfspace LP: normals uniform on the unit sphere, offsets in
/// `[offset_lo, offset_hi]` (so θ = 0 is strictly feasible), box Θ.
pub fn halfspace_lp(
    objective: Vector,
    box_half_width: f64,
    offsets: (f64, f64),
    counts: &[usize],
    seed: u64,
) -> Result<NetworkProblem> {
    let dim = objective.len();
    let family = Arc::new(sampled_halfspace_family(dim)?);
    let support = Support::UnitDirection { dim, offset_lo: offsets.0, offset_hi: offsets.1 };
    build_network_problem(objective, Domain::cube(dim, box_half_width), family, &support, counts, seed)
}
