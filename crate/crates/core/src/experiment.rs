//! Ready-made experiments shared by the command-line tool and the tests.

use std::sync::Arc;

use crate::engine::{run, Algorithm, Settings};
use crate::graph::Topology;
use crate::primal_dual::PdConfig;
use crate::problems::{build_network_problem, RobustIdent};
use crate::rand_proj::RpConfig;
use crate::schedule::StepSchedule;
use crate::{Error, Result, Vector};

/// Schedule that lets the primal-dual iteration settle within a few
/// ten-thousand rounds on the small fixtures.
pub fn tuned_primal_dual() -> PdConfig {
    PdConfig { rho: 10.0, schedule: StepSchedule { zeta0: 100.0, exponent: 1.0 } }
}

pub const IDENT_HEADER: &str = "rho,r_ls,r_sc_pd,r_sc_rp";

#[derive(Debug, Clone, PartialEq)]
pub struct IdentExperiment {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub nodes: usize,
    pub samples_per_node: usize,
    pub seed: u64,
    pub rounds: u64,
    pub primal_dual: PdConfig,
    pub rand_proj: RpConfig,
}

impl Default for IdentExperiment {
    fn default() -> Self {
        Self {
            u: vec![1.0, 2.0, 3.0],
            y: vec![4.0, 5.0, 6.0],
            nodes: 10,
            samples_per_node: 30,
            seed: 0,
            rounds: 20_000,
            primal_dual: tuned_primal_dual(),
            rand_proj: RpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentRow {
    pub rho: f64,
    pub r_ls: f64,
    pub r_sc_pd: f64,
    pub r_sc_rp: f64,
}

impl IdentRow {
    pub fn to_csv_line(&self) -> String {
        format!("{},{},{},{}", self.rho, self.r_ls, self.r_sc_pd, self.r_sc_rp)
    }
}

impl IdentExperiment {
    /// Draw scenarios at level `rho`, solve on an undirected ring with the
    /// primal-dual method and on a directed cycle with random projections,
    /// then evaluate both consensus solutions and the least-squares one on
    /// the same scenarios.
    pub fn row(&self, rho: f64) -> Result<IdentRow> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::Parameter(format!("uncertainty level must be nonnegative, got {rho}")));
        }
        if self.nodes == 0 || self.samples_per_node == 0 {
            return Err(Error::Parameter("need at least one node and one sample per node".into()));
        }
        let ident = RobustIdent::new(self.u.clone(), self.y.clone())?;
        let n = ident.order();
        let counts = vec![self.samples_per_node; self.nodes];
        let problem = build_network_problem(
            ident.objective(),
            ident.default_domain(),
            Arc::new(ident.clone()),
            &ident.support(rho),
            &counts,
            self.seed,
        )?;
        let sets: Vec<_> = problem.locals.iter().map(|l| l.scenarios.clone()).collect();
        let r_ls = ident.max_residual(&ident.least_squares()?, &sets)?;
        let solve = |algorithm: Algorithm, topology: Topology| -> Result<f64> {
            let out = run(problem.clone(), topology, Settings::new(algorithm, self.seed, self.rounds))?;
            let theta: Vector = out.average.rows(0, n).into_owned();
            ident.max_residual(&theta, &sets)
        };
        let r_sc_pd = solve(Algorithm::PrimalDual(self.primal_dual), Topology::ring(self.nodes)?)?;
        let r_sc_rp = solve(Algorithm::RandomProjection(self.rand_proj.clone()), Topology::directed_cycle(self.nodes)?)?;
        Ok(IdentRow { rho, r_ls, r_sc_pd, r_sc_rp })
    }

    pub fn table(&self, grid: &[f64]) -> Result<Vec<IdentRow>> {
        grid.iter().map(|&rho| self.row(rho)).collect()
    }
}

/// `count` evenly spaced values from `start` with spacing `step`, rounded to
/// twelve decimals so that e.g. `0.2·3` prints as `0.6`.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) {
        return Err(Error::Parameter("grid needs step > 0 and stop ≥ start".into()));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}
