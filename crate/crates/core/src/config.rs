//! Experiment configuration files.
//!
//! A configuration is TOML with one table per concern:
//!
//! ```toml
//! [run]
//! algorithm = "primal_dual"      # or "rand_proj"
//! seed = 0
//! max_rounds = 50000
//! consensus_tol = 1e-3
//! feasibility_tol = 1e-3
//! objective_reference = "oracle" # or a number; needs objective_rel_tol
//! objective_rel_tol = 1e-2
//!
//! [graph]
//! kind = "ring"                  # ring | directed_cycle | directed_chain | complete
//! nodes = 4                      # | ring_with_links | oriented_ring_with_links | edge_list
//! activation_prob = 0.5          # optional: resample links every round
//!
//! [schedule]
//! zeta0 = 100.0
//! exponent = 1.0
//!
//! [primal_dual]
//! rho = 10.0
//!
//! [problem]
//! kind = "halfspace"
//! objective = [1.0, 0.5]
//! samples_per_node = 10
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{Algorithm, ObjectiveTarget, Settings, StoppingRule};
use crate::graph::Topology;
use crate::oracle::solve_lp_by_vertices;
use crate::primal_dual::PdConfig;
use crate::problems::{build_network_problem, halfspace_lp, NetworkProblem, RobustIdent};
use crate::rand_proj::RpConfig;
use crate::rng::{stream, Purpose};
use crate::scenario::{partition_samples, sample_complexity, SampleComplexityParams};
use crate::schedule::StepSchedule;
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmTag {
    PrimalDual,
    RandProj,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reference {
    Value(f64),
    /// `"oracle"`: solve the pooled program by vertex enumeration.
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub algorithm: AlgorithmTag,
    #[serde(default)]
    pub seed: u64,
    pub max_rounds: u64,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_reference: Option<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Ring,
    DirectedCycle,
    DirectedChain,
    Complete,
    RingWithLinks,
    OrientedRingWithLinks,
    EdgeList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub kind: GraphKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    /// Extra-link probability for the `*ring_with_links` kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_prob: Option<f64>,
    /// Edge-list file, relative to the configuration file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation_prob: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdSection {
    pub rho: f64,
}

impl Default for PdSection {
    fn default() -> Self {
        Self { rho: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpSection {
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_direction: Option<Vec<f64>>,
}

impl Default for RpSection {
    fn default() -> Self {
        Self { beta: 1.0, fallback_direction: None }
    }
}

/// How many scenarios each node holds. Exactly one form must be given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<usize>>,
    /// Derive the total from `(epsilon, delta, complexity_dim)` and split it
    /// over `capacities`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexity_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacities: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSection {
    /// Random halfspaces `a'θ ≤ b` over a cube.
    Halfspace {
        objective: Vec<f64>,
        #[serde(default = "default_box")]
        box_half_width: f64,
        #[serde(default = "default_offset_lo")]
        offset_lo: f64,
        #[serde(default = "default_offset_hi")]
        offset_hi: f64,
        #[serde(flatten)]
        samples: SampleSection,
    },
    /// Robust identification with uncertainty radius `rho`.
    Ident {
        u: Vec<f64>,
        y: Vec<f64>,
        rho: f64,
        #[serde(flatten)]
        samples: SampleSection,
    },
}

fn default_box() -> f64 {
    10.0
}
fn default_offset_lo() -> f64 {
    0.5
}
fn default_offset_hi() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default = "default_trace")]
    pub trace: String,
    #[serde(default = "default_states")]
    pub states: String,
}

fn default_trace() -> String {
    "trace.csv".into()
}
fn default_states() -> String {
    "states.csv".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), trace: default_trace(), states: default_states() }
    }
}

/// Everything a single run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run: RunSection,
    pub graph: GraphSection,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default)]
    pub primal_dual: PdSection,
    #[serde(default)]
    pub rand_proj: RpSection,
    pub problem: ProblemSection,
}

/// A run plus where its results go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(flatten)]
    pub config: RunConfig,
    #[serde(default)]
    pub output: OutputSection,
}

const SECTIONS: [&str; 7] = ["run", "graph", "schedule", "primal_dual", "rand_proj", "problem", "output"];

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Configuration(e.to_string()))?;
        if let Some(key) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(Error::Configuration(format!("unknown section `{key}`")));
        }
        toml::from_str(text).map_err(|e| Error::Configuration(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Configuration(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Objects handed to the engine.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub problem: NetworkProblem,
    pub topology: Topology,
    pub settings: Settings,
}

impl RunConfig {
    pub fn algorithm(&self) -> Result<Algorithm> {
        Ok(match self.run.algorithm {
            AlgorithmTag::PrimalDual => Algorithm::PrimalDual(PdConfig { rho: self.primal_dual.rho, schedule: self.schedule }),
            AlgorithmTag::RandProj => Algorithm::RandomProjection(RpConfig {
                beta: self.rand_proj.beta,
                schedule: self.schedule,
                fallback_direction: self.rand_proj.fallback_direction.clone().map(Vector::from_vec),
            }),
        })
    }

    pub fn topology(&self, base_dir: &Path) -> Result<Topology> {
        let g = &self.graph;
        let nodes = || g.nodes.ok_or_else(|| Error::Configuration("graph.nodes is required for this kind".into()));
        let link_prob = || g.link_prob.ok_or_else(|| Error::Configuration("graph.link_prob is required for this kind".into()));
        let mut rng = stream(self.run.seed, Purpose::Topology, 1);
        let t = match g.kind {
            GraphKind::Ring => Topology::ring(nodes()?)?,
            GraphKind::DirectedCycle => Topology::directed_cycle(nodes()?)?,
            GraphKind::DirectedChain => Topology::directed_chain(nodes()?)?,
            GraphKind::Complete => Topology::complete(nodes()?)?,
            GraphKind::RingWithLinks => Topology::ring_with_random_links(nodes()?, link_prob()?, &mut rng)?,
            GraphKind::OrientedRingWithLinks => {
                Topology::ring_with_random_links(nodes()?, link_prob()?, &mut rng)?.orient_ring_with_links(&mut rng)?
            }
            GraphKind::EdgeList => {
                let rel = g.path.as_ref().ok_or_else(|| Error::Configuration("graph.path is required for edge_list".into()))?;
                let text = std::fs::read_to_string(base_dir.join(rel))?;
                let t = Topology::parse_edge_list(&text)?;
                if let Some(m) = g.nodes {
                    if m != t.node_count() {
                        return Err(Error::Configuration(format!("graph.nodes = {m} but the edge list has {}", t.node_count())));
                    }
                }
                t
            }
        };
        Ok(t)
    }

    fn counts(samples: &SampleSection, nodes: usize) -> Result<Vec<usize>> {
        let complexity = samples.epsilon.is_some() || samples.delta.is_some() || samples.capacities.is_some();
        let forms = [samples.samples_per_node.is_some(), samples.counts.is_some(), complexity];
        if forms.iter().filter(|f| **f).count() != 1 {
            return Err(Error::Configuration(
                "give exactly one of samples_per_node, counts, or epsilon/delta/complexity_dim/capacities".into(),
            ));
        }
        let counts = if let Some(s) = samples.samples_per_node {
            vec![s; nodes]
        } else if let Some(c) = &samples.counts {
            c.clone()
        } else {
            let missing = || Error::Configuration("epsilon, delta, complexity_dim and capacities are all required".into());
            let params = SampleComplexityParams::new(
                samples.epsilon.ok_or_else(missing)?,
                samples.delta.ok_or_else(missing)?,
                samples.complexity_dim.ok_or_else(missing)?,
            )?;
            let part = partition_samples(sample_complexity(&params)?, samples.capacities.as_ref().ok_or_else(missing)?)?;
            part.counts.iter().map(|&c| c as usize).collect()
        };
        if counts.len() != nodes {
            return Err(Error::Configuration(format!("{} scenario counts for {nodes} nodes", counts.len())));
        }
        Ok(counts)
    }

    pub fn problem(&self, nodes: usize) -> Result<NetworkProblem> {
        match &self.problem {
            ProblemSection::Halfspace { objective, box_half_width, offset_lo, offset_hi, samples } => {
                let counts = Self::counts(samples, nodes)?;
                halfspace_lp(Vector::from_vec(objective.clone()), *box_half_width, (*offset_lo, *offset_hi), &counts, self.run.seed)
            }
            ProblemSection::Ident { u, y, rho, samples } => {
                let counts = Self::counts(samples, nodes)?;
                let ident = RobustIdent::new(u.clone(), y.clone())?;
                let support = ident.support(*rho);
                support.validate()?;
                build_network_problem(ident.objective(), ident.default_domain(), Arc::new(ident), &support, &counts, self.run.seed)
            }
        }
    }

    fn objective_target(&self, problem: &NetworkProblem) -> Result<Option<ObjectiveTarget>> {
        let Some(reference) = &self.run.objective_reference else {
            if self.run.objective_rel_tol.is_some() {
                return Err(Error::Configuration("objective_rel_tol needs objective_reference".into()));
            }
            return Ok(None);
        };
        let rel_tol = self
            .run
            .objective_rel_tol
            .ok_or_else(|| Error::Configuration("objective_reference needs objective_rel_tol".into()))?;
        let reference = match reference {
            Reference::Value(v) => *v,
            Reference::Keyword(k) if k == "oracle" => solve_lp_by_vertices(problem)?.value,
            Reference::Keyword(k) => return Err(Error::Configuration(format!("unknown objective reference `{k}`"))),
        };
        Ok(Some(ObjectiveTarget { reference, rel_tol }))
    }

    /// Build problem, topology and engine settings. Relative paths are taken
    /// from `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Resolved> {
        let algorithm = self.algorithm()?;
        algorithm.validate()?;
        let topology = self.topology(base_dir)?;
        if matches!(algorithm, Algorithm::PrimalDual(_)) && topology.is_directed() {
            return Err(Error::Configuration("primal_dual requires an undirected topology".into()));
        }
        let problem = self.problem(topology.node_count())?;
        let stopping = StoppingRule {
            max_rounds: self.run.max_rounds,
            consensus_tol: self.run.consensus_tol,
            feasibility_tol: self.run.feasibility_tol,
            objective: self.objective_target(&problem)?,
        };
        stopping.validate()?;
        let settings = Settings {
            algorithm,
            seed: self.run.seed,
            activation_prob: self.graph.activation_prob,
            stopping,
            parallel: self.run.parallel,
        };
        Ok(Resolved { problem, topology, settings })
    }
}
