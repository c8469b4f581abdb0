//! Centralized reference solvers used to check the distributed runs.

use rand::Rng;

use crate::problems::{ConstraintFamily, Domain, NetworkProblem};
use crate::scenario::Support;
use crate::schedule::StepSchedule;
use crate::{Error, Matrix, Result, Vector};

/// Cap on the number of candidate vertices the enumeration will visit.
pub const MAX_VERTEX_CANDIDATES: u64 = 5_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub theta: Vector,
    pub value: f64,
    /// Rows of the stacked system `[scenario constraints; box facets]` that
    /// define the returned vertex.
    pub active: Vec<usize>,
}

/// All scenario constraints as rows `a'θ ≤ b`, followed by the facets of a
/// box Θ.
pub fn affine_system(problem: &NetworkProblem) -> Result<(Vec<Vector>, Vec<f64>)> {
    let (mut rows, mut rhs) = (Vec::new(), Vec::new());
    for (family, q) in problem.all_constraints() {
        let (a, b) = family
            .affine(q)
            .ok_or_else(|| Error::Configuration("vertex enumeration needs affine constraints".into()))?;
        rows.push(a);
        rhs.push(b);
    }
    let n = problem.dim();
    match &problem.domain {
        Domain::Box { lower, upper } => {
            for i in 0..n {
                let mut e = Vector::zeros(n);
                e[i] = 1.0;
                rows.push(e.clone());
                rhs.push(upper[i]);
                rows.push(-e);
                rhs.push(-lower[i]);
            }
        }
        _ => return Err(Error::Configuration("vertex enumeration needs a box domain".into())),
    }
    Ok((rows, rhs))
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Next `k`-subset of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for pos in (0..k).rev() {
        if idx[pos] < n - k + pos {
            idx[pos] += 1;
            for later in pos + 1..k {
                idx[later] = idx[later - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact LP optimum over a box: every `n`-subset of constraint rows with a
/// nonsingular system gives a candidate vertex; the feasible candidate of
/// least cost wins. Ties keep the first subset in lexicographic order.
pub fn solve_lp_by_vertices(problem: &NetworkProblem) -> Result<LpSolution> {
    let (rows, rhs) = affine_system(problem)?;
    let n = problem.dim();
    let total = rows.len();
    if binomial(total as u64, n as u64) > MAX_VERTEX_CANDIDATES {
        return Err(Error::Parameter(format!("{total} rows in dimension {n} is too many for vertex enumeration")));
    }
    let scale = rhs.iter().fold(1.0f64, |m, b| m.max(b.abs()));
    let tol = 1e-9 * scale;
    let mut best: Option<LpSolution> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = Matrix::from_fn(n, n, |r, c| rows[idx[r]][c]);
        let b = Vector::from_fn(n, |r, _| rhs[idx[r]]);
        if let Some(theta) = a.lu().solve(&b) {
            let feasible = theta.iter().all(|v| v.is_finite())
                && rows.iter().zip(&rhs).all(|(row, bound)| row.dot(&theta) <= bound + tol);
            if feasible {
                let value = problem.objective.dot(&theta);
                if best.as_ref().is_none_or(|s| value < s.value) {
                    best = Some(LpSolution { theta, value, active: idx.clone() });
                }
            }
        }
        if !next_combination(&mut idx, total) {
            break;
        }
    }
    best.ok_or_else(|| Error::Infeasible("no feasible vertex".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientSolution {
    /// Best iterate whose violation is within the tolerance.
    pub theta: Vector,
    pub value: f64,
    pub violation: f64,
    pub iterations: u64,
}

/// Centralized switching sub-gradient method on the pooled scenario
/// program. While some constraint is violated by more than `feas_tol` the
/// iterate takes a Polyak step on the most violated one; otherwise it steps
/// along `−ζ^k c`. Iterates are projected onto Θ. Works for any convex
/// family.
pub fn solve_centralized_subgradient(
    problem: &NetworkProblem,
    schedule: &StepSchedule,
    iterations: u64,
    feas_tol: f64,
) -> Result<SubgradientSolution> {
    schedule.validate()?;
    if !(feas_tol > 0.0) {
        return Err(Error::Parameter("feasibility tolerance must be positive".into()));
    }
    let constraints: Vec<_> = problem.all_constraints().collect();
    let c = &problem.objective;
    let mut theta = problem.domain.project(&Vector::zeros(problem.dim()));
    let mut best: Option<SubgradientSolution> = None;
    let mut k = 0u64;
    for _ in 0..iterations {
        let (worst, value) = constraints
            .iter()
            .enumerate()
            .map(|(i, (f, q))| (i, f.eval(&theta, q)))
            .fold((usize::MAX, 0.0f64), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        if value > feas_tol {
            let (f, q) = constraints[worst];
            let d = f.subgrad(&theta, q);
            let dn2 = d.norm_squared();
            if dn2 == 0.0 {
                return Err(Error::Infeasible(format!("constraint {worst} is violated with zero sub-gradient")));
            }
            theta = problem.domain.project(&(&theta - d * (value / dn2)));
        } else {
            let obj = c.dot(&theta);
            if best.as_ref().is_none_or(|b| obj < b.value) {
                best = Some(SubgradientSolution { theta: theta.clone(), value: obj, violation: value, iterations: 0 });
            }
            theta = problem.domain.project(&(&theta - c * (schedule.step(k) / c.norm().max(1.0))));
            k += 1;
        }
    }
    let mut sol = best.ok_or_else(|| Error::Infeasible("no iterate met the feasibility tolerance".into()))?;
    sol.iterations = iterations;
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Monte Carlo estimate of `P{q : f(θ, q) > 0}` under `support`.
pub fn estimate_violation<R: Rng + ?Sized>(
    theta: &Vector,
    family: &dyn ConstraintFamily,
    support: &Support,
    samples: u64,
    rng: &mut R,
) -> Result<ViolationEstimate> {
    support.validate()?;
    if samples == 0 {
        return Err(Error::Parameter("need at least one validation sample".into()));
    }
    if support.sample_dim() != family.sample_dim() || theta.len() != family.decision_dim() {
        return Err(Error::Configuration("support, family and decision dimensions disagree".into()));
    }
    let hits = (0..samples).filter(|_| family.eval(theta, &support.sample(rng)) > 0.0).count() as f64;
    let p = hits / samples as f64;
    Ok(ViolationEstimate { probability: p, std_error: (p * (1.0 - p) / samples as f64).sqrt(), samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{halfspace_lp, sampled_halfspace_family, LocalProblem};
    use crate::rng::{stream, Purpose};
    use crate::scenario::ScenarioSet;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use std::sync::Arc;

    fn lp_from_rows(objective: Vector, half_width: f64, rows: Vec<Vector>) -> NetworkProblem {
        let dim = objective.len();
        let local = LocalProblem { family: Arc::new(sampled_halfspace_family(dim).unwrap()), scenarios: ScenarioSet::new(0, rows) };
        NetworkProblem::new(objective, Domain::cube(dim, half_width), vec![local]).unwrap()
    }

    #[test]
    fn box_only_lp_picks_the_corner() {
        let p = lp_from_rows(dvector![1.0, -2.0], 3.0, vec![]);
        let s = solve_lp_by_vertices(&p).unwrap();
        assert_eq!(s.theta, dvector![-3.0, 3.0]);
        assert_eq!(s.value, -9.0);
    }

    #[test]
    fn hand_solved_lp() {
        // min −θ1 − θ2 s.t. θ1 + 2θ2 ≤ 4, 3θ1 + θ2 ≤ 6 on [−10, 10]²:
        // optimum at the intersection (8/5, 6/5)
        let p = lp_from_rows(dvector![-1.0, -1.0], 10.0, vec![dvector![1.0, 2.0, 4.0], dvector![3.0, 1.0, 6.0]]);
        let s = solve_lp_by_vertices(&p).unwrap();
        assert_abs_diff_eq!(s.theta[0], 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(s.theta[1], 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(s.value, -2.8, epsilon = 1e-12);
        assert_eq!(s.active, vec![0, 1]);
    }

    #[test]
    fn infeasible_lp_is_reported() {
        let p = lp_from_rows(dvector![1.0], 10.0, vec![dvector![1.0, -1.0], dvector![-1.0, -1.0]]);
        assert!(matches!(solve_lp_by_vertices(&p), Err(Error::Infeasible(_))));
    }

    #[test]
    fn nonaffine_or_unbounded_input_is_rejected() {
        let local = LocalProblem {
            family: Arc::new(crate::problems::SquaredDistanceFamily { dim: 1, offset: 1.0 }),
            scenarios: ScenarioSet::new(0, vec![dvector![0.0]]),
        };
        let p = NetworkProblem::new(dvector![1.0], Domain::cube(1, 1.0), vec![local]).unwrap();
        assert!(matches!(solve_lp_by_vertices(&p), Err(Error::Configuration(_))));
        let local = LocalProblem { family: Arc::new(sampled_halfspace_family(1).unwrap()), scenarios: ScenarioSet::new(0, vec![]) };
        let p = NetworkProblem::new(dvector![1.0], Domain::Whole { dim: 1 }, vec![local]).unwrap();
        assert!(matches!(solve_lp_by_vertices(&p), Err(Error::Configuration(_))));
    }

    #[test]
    fn vertex_optimum_is_feasible_and_beats_random_feasible_points() {
        let mut rng = stream(4, Purpose::Validation, 0);
        for seed in 0..10 {
            let p = halfspace_lp(dvector![1.0, 0.5], 10.0, (0.5, 1.5), &[10; 4], seed).unwrap();
            let s = solve_lp_by_vertices(&p).unwrap();
            assert!(p.max_violation(&s.theta) <= 1e-9);
            for _ in 0..2_000 {
                let x = Vector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
                if p.max_violation(&x) == 0.0 {
                    assert!(p.objective.dot(&x) >= s.value - 1e-12);
                }
            }
        }
    }

    #[test]
    fn centralized_subgradient_agrees_with_vertices() {
        let schedule = StepSchedule::new(1.0, 1.0).unwrap();
        for seed in 0..5 {
            let p = halfspace_lp(dvector![1.0, 0.5], 10.0, (0.5, 1.5), &[10; 4], seed).unwrap();
            let exact = solve_lp_by_vertices(&p).unwrap();
            let approx = solve_centralized_subgradient(&p, &schedule, 200_000, 1e-9).unwrap();
            assert!(approx.violation <= 1e-9);
            assert!((approx.value - exact.value).abs() <= 1e-3 * exact.value.abs().max(1.0), "{} vs {}", approx.value, exact.value);
        }
    }

    #[test]
    fn centralized_subgradient_reports_infeasibility() {
        let p = lp_from_rows(dvector![1.0], 10.0, vec![dvector![1.0, -1.0], dvector![-1.0, -1.0]]);
        let r = solve_centralized_subgradient(&p, &StepSchedule::default(), 100, 1e-9);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn violation_estimate_matches_closed_form() {
        // a uniform on the circle, b uniform on [0.5, 1.5], θ = (1, 0):
        // violated iff cos φ > b, which has probability arccos(b)/π for b < 1
        let support = Support::UnitDirection { dim: 2, offset_lo: 0.5, offset_hi: 1.5 };
        let family = sampled_halfspace_family(2).unwrap();
        let mut rng = stream(5, Purpose::Validation, 0);
        let est = estimate_violation(&dvector![1.0, 0.0], &family, &support, 200_000, &mut rng).unwrap();
        // ∫_{0.5}^{1} arccos(b)/π db = [b arccos b − √(1−b²)]/π from 0.5 to 1
        let antider = |b: f64| b * b.acos() - (1.0 - b * b).sqrt();
        let exact = (antider(1.0) - antider(0.5)) / std::f64::consts::PI;
        assert!((est.probability - exact).abs() <= 4.0 * est.std_error, "{} vs {exact}", est.probability);
        assert!(estimate_violation(&dvector![1.0, 0.0], &family, &support, 0, &mut rng).is_err());
    }
}
