//! Sample complexity, scenario draws and the split of scenarios across nodes.

use std::f64::consts::E;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result, Vector};

/// Violation level, confidence level and decision dimension of a scenario
/// program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleComplexityParams {
    pub epsilon: f64,
    pub delta: f64,
    pub n: usize,
}

impl SampleComplexityParams {
    pub fn new(epsilon: f64, delta: f64, n: usize) -> Result<Self> {
        let params = Self { epsilon, delta, n };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Parameter(format!("epsilon must lie in (0,1), got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Parameter(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if self.n == 0 {
            return Err(Error::Parameter("decision dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// Closed-form scenario count `⌈ e/(ε(e−1)) · (ln(1/δ) + n − 1) ⌉`.
///
/// This is a sufficient condition for [`binomial_tail_holds`].
pub fn sample_complexity(params: &SampleComplexityParams) -> Result<u64> {
    params.validate()?;
    let scale = E / (params.epsilon * (E - 1.0));
    let bound = scale * ((1.0 / params.delta).ln() + params.n as f64 - 1.0);
    Ok(bound.ceil().max(1.0) as u64)
}

/// `ln Σ_{i<n} C(N,i) ε^i (1−ε)^{N−i}`, accumulated in log space.
fn log_binomial_tail(samples: u64, epsilon: f64, n: usize) -> f64 {
    let ln_eps = epsilon.ln();
    let ln_one_minus = (-epsilon).ln_1p();
    let last = (n as u64 - 1).min(samples);
    let mut ln_choose = 0.0;
    let mut terms = Vec::with_capacity(last as usize + 1);
    for i in 0..=last {
        if i > 0 {
            ln_choose += ((samples - i + 1) as f64 / i as f64).ln();
        }
        terms.push(ln_choose + i as f64 * ln_eps + (samples - i) as f64 * ln_one_minus);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Whether `N` scenarios give violation at most ε with confidence 1 − δ,
/// i.e. `Σ_{i=0}^{n−1} C(N,i) ε^i (1−ε)^{N−i} ≤ δ`.
pub fn binomial_tail_holds(samples: u64, params: &SampleComplexityParams) -> Result<bool> {
    params.validate()?;
    if samples == 0 {
        return Err(Error::Parameter("sample count must be positive".into()));
    }
    Ok(log_binomial_tail(samples, params.epsilon, params.n) <= params.delta.ln())
}

/// Smallest `N` for which [`binomial_tail_holds`] is true, by bisection on
/// the (monotone) predicate. Never exceeds [`sample_complexity`].
pub fn minimal_complexity_by_search(params: &SampleComplexityParams) -> Result<u64> {
    let mut hi = sample_complexity(params)?;
    if !binomial_tail_holds(hi, params)? {
        return Err(Error::Numerical(format!("closed-form bound {hi} fails the binomial test")));
    }
    let mut lo = 1u64;
    if binomial_tail_holds(lo, params)? {
        return Ok(lo);
    }
    // invariant: predicate(lo) false, predicate(hi) true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if binomial_tail_holds(mid, params)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// How scenario counts are assigned to nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionRule {
    /// Every node takes the number of constraints it declared it can handle.
    #[default]
    FullCapacity,
    /// `n_j = ⌈N · cap_j / Σ cap⌉`, capped at `cap_j`; the least oversampling.
    Proportional,
}

/// Scenario counts per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub counts: Vec<u64>,
    pub total: u64,
}

/// Split `required` scenarios over nodes with the given capacities.
pub fn partition_samples(required: u64, capacities: &[u64]) -> Result<Partition> {
    partition_samples_with(required, capacities, PartitionRule::default())
}

pub fn partition_samples_with(required: u64, capacities: &[u64], rule: PartitionRule) -> Result<Partition> {
    if capacities.is_empty() {
        return Err(Error::Parameter("at least one node is required".into()));
    }
    let capacity: u64 = capacities.iter().sum();
    if capacity < required {
        return Err(Error::Capacity { total: capacity, required });
    }
    let counts: Vec<u64> = match rule {
        PartitionRule::FullCapacity => capacities.to_vec(),
        PartitionRule::Proportional => capacities
            .iter()
            .map(|&cap| {
                // exact integer ceiling of required * cap / capacity
                let share = (required as u128 * cap as u128).div_ceil(capacity as u128) as u64;
                share.min(cap)
            })
            .collect(),
    };
    let total = counts.iter().sum();
    debug_assert!(total >= required);
    Ok(Partition { counts, total })
}

/// Support of the uncertainty together with the distribution sampled on it.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Uniform on the Euclidean ball `{q ∈ R^dim : ‖q‖ ≤ radius}`.
    Ball { dim: usize, radius: f64 },
    /// Uniform on the axis-aligned box `[lower, upper]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `q = (a, b)` with `a` uniform on the unit sphere of `R^dim` and `b`
    /// uniform on `[offset_lo, offset_hi]`. Describes random halfspaces
    /// `a'θ ≤ b` whose boundary keeps distance at least `offset_lo` from the
    /// origin.
    UnitDirection { dim: usize, offset_lo: f64, offset_hi: f64 },
    /// Degenerate support: every draw equals this point.
    Point(Vec<f64>),
}

impl Support {
    /// Dimension of a single draw.
    pub fn sample_dim(&self) -> usize {
        match self {
            Support::Ball { dim, .. } => *dim,
            Support::Box { lower, .. } => lower.len(),
            Support::UnitDirection { dim, .. } => dim + 1,
            Support::Point(p) => p.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        match self {
            Support::Ball { dim, radius } => {
                if *dim == 0 || !radius.is_finite() || *radius < 0.0 {
                    return bad(format!("unsupported ball support (dim {dim}, radius {radius})"));
                }
            }
            Support::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad("box support needs matching nonempty bounds".into());
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
                    return bad("box support needs finite bounds with lower <= upper".into());
                }
            }
            Support::UnitDirection { dim, offset_lo, offset_hi } => {
                if *dim == 0 || !(offset_lo.is_finite() && offset_hi.is_finite() && offset_lo <= offset_hi) {
                    return bad("unit-direction support needs dim >= 1 and a finite offset range".into());
                }
            }
            Support::Point(p) => {
                if p.is_empty() || p.iter().any(|v| !v.is_finite()) {
                    return bad("point support needs a finite nonempty point".into());
                }
            }
        }
        Ok(())
    }

    /// Membership with an absolute tolerance.
    pub fn contains(&self, q: &Vector, tol: f64) -> bool {
        if q.len() != self.sample_dim() {
            return false;
        }
        match self {
            Support::Ball { radius, .. } => q.norm() <= radius + tol,
            Support::Box { lower, upper } => q
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            Support::UnitDirection { dim, offset_lo, offset_hi } => {
                let b = q[*dim];
                (q.rows(0, *dim).norm() - 1.0).abs() <= tol && b >= offset_lo - tol && b <= offset_hi + tol
            }
            Support::Point(p) => q.iter().zip(p).all(|(a, b)| (a - b).abs() <= tol),
        }
    }

    /// One draw from the support's distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            Support::Ball { dim, radius } => {
                let direction = unit_direction(*dim, rng);
                let u: f64 = rng.random();
                direction * (radius * u.powf(1.0 / *dim as f64))
            }
            Support::Box { lower, upper } => {
                Vector::from_iterator(lower.len(), lower.iter().zip(upper).map(|(l, u)| l + (u - l) * rng.random::<f64>()))
            }
            Support::UnitDirection { dim, offset_lo, offset_hi } => {
                let direction = unit_direction(*dim, rng);
                let b = offset_lo + (offset_hi - offset_lo) * rng.random::<f64>();
                Vector::from_iterator(dim + 1, direction.iter().copied().chain(std::iter::once(b)))
            }
            Support::Point(p) => Vector::from_column_slice(p),
        }
    }
}

fn unit_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    loop {
        let g = Vector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)));
        let norm = g.norm();
        if norm > 1e-300 {
            return g / norm;
        }
    }
}

/// The scenarios owned by one node. Samples are never shared across nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    node_id: usize,
    samples: Vec<Vector>,
}

impl ScenarioSet {
    pub fn new(node_id: usize, samples: Vec<Vector>) -> Self {
        Self { node_id, samples }
    }

    pub fn node_id(&self) -> usize {
        self.node_id
    }

    pub fn samples(&self) -> &[Vector] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Draw `count` i.i.d. scenarios for `node_id` from `rng`.
pub fn draw_scenarios<R: Rng + ?Sized>(support: &Support, node_id: usize, count: usize, rng: &mut R) -> Result<ScenarioSet> {
    support.validate()?;
    let samples = (0..count).map(|_| support.sample(rng)).collect();
    Ok(ScenarioSet::new(node_id, samples))
}
