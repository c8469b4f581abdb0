//! Synchronous round-based simulator.
//!
//! A [`Simulation`] owns every node's state between rounds. Each round the
//! nodes exchange messages over the current topology (resampled per round in
//! time-varying mode), update independently, and the engine appends one
//! [`MetricsRecord`] to the trace.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::graph::{
    build_weights, is_strongly_connected, left_eigenvector, sample_time_varying, Topology, WeightMatrix, WeightRule,
    DEFAULT_POWER_TOL,
};
use crate::primal_dual::{self, g_eval, PdConfig, PdNodeState};
use crate::problems::NetworkProblem;
use crate::rand_proj::{self, RpConfig, RpNodeState};
use crate::rng::{stream, Purpose};
use crate::schedule::StepSchedule;
use crate::{Error, Result, Vector};

/// Deliver `payload[i]` to every out-neighbour of `i`. Inbox `j` lists
/// `(sender, message)` pairs ordered by sender.
pub fn exchange<T: Clone>(payload: &[T], topology: &Topology) -> Vec<Vec<(usize, T)>> {
    (0..topology.node_count())
        .map(|j| topology.in_neighbors(j).into_iter().map(|i| (i, payload[i].clone())).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    PrimalDual(PdConfig),
    RandomProjection(RpConfig),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::PrimalDual(_) => "primal_dual",
            Algorithm::RandomProjection(_) => "rand_proj",
        }
    }

    pub fn schedule(&self) -> &StepSchedule {
        match self {
            Algorithm::PrimalDual(c) => &c.schedule,
            Algorithm::RandomProjection(c) => &c.schedule,
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Algorithm::PrimalDual(_) => 1,
            Algorithm::RandomProjection(_) => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Algorithm::PrimalDual(c) => c.validate(),
            Algorithm::RandomProjection(c) => c.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTarget {
    pub reference: f64,
    /// Relative tolerance on `|c'θ̄ − reference|`, scaled by `max(1, |reference|)`.
    pub rel_tol: f64,
}

/// When to stop. The round budget always applies. Tolerances decide the
/// final status; a run stops early only if an objective target is given and
/// every specified tolerance holds at the same round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub max_rounds: u64,
    pub consensus_tol: Option<f64>,
    pub feasibility_tol: Option<f64>,
    pub objective: Option<ObjectiveTarget>,
}

impl StoppingRule {
    pub fn rounds(max_rounds: u64) -> Self {
        Self { max_rounds, consensus_tol: None, feasibility_tol: None, objective: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::Parameter("max_rounds must be at least 1".into()));
        }
        for (name, tol) in [("consensus", self.consensus_tol), ("feasibility", self.feasibility_tol)] {
            if let Some(t) = tol {
                if !(t > 0.0) {
                    return Err(Error::Parameter(format!("{name} tolerance must be positive, got {t}")));
                }
            }
        }
        if let Some(o) = self.objective {
            if !(o.rel_tol > 0.0) || !o.reference.is_finite() {
                return Err(Error::Parameter("objective target needs a finite reference and positive tolerance".into()));
            }
        }
        Ok(())
    }

    pub fn satisfied_by(&self, r: &MetricsRecord) -> bool {
        self.consensus_tol.is_none_or(|t| r.consensus_spread < t)
            && self.feasibility_tol.is_none_or(|t| r.feasibility < t)
            && self.objective.is_none_or(|o| (r.objective - o.reference).abs() <= o.rel_tol * o.reference.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Per-round link retention probability; `None` for a fixed graph.
    pub activation_prob: Option<f64>,
    pub stopping: StoppingRule,
    pub parallel: bool,
}

impl Settings {
    pub fn new(algorithm: Algorithm, seed: u64, max_rounds: u64) -> Self {
        Self { algorithm, seed, activation_prob: None, stopping: StoppingRule::rounds(max_rounds), parallel: false }
    }
}

/// Metrics after round `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub k: u64,
    /// `max_j ‖θ_j − θ̄‖`.
    pub consensus_spread: f64,
    /// `max_j` of the largest entry of `g_j(θ_j)`.
    pub feasibility: f64,
    /// `c'θ̄`.
    pub objective: f64,
    pub zeta_sum: f64,
    pub wall_time_ms: f64,
}

impl MetricsRecord {
    /// Equality of every field except the wall clock.
    pub fn same_values(&self, other: &Self) -> bool {
        self.k == other.k
            && self.consensus_spread.to_bits() == other.consensus_spread.to_bits()
            && self.feasibility.to_bits() == other.feasibility.to_bits()
            && self.objective.to_bits() == other.objective.to_bits()
            && self.zeta_sum.to_bits() == other.zeta_sum.to_bits()
    }
}

pub const TRACE_HEADER: &str = "k,consensus_spread,feasibility,objective,zeta_sum,wall_time_ms";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<MetricsRecord>,
}

impl Trace {
    pub fn last(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Bitwise equality of all values except the wall clock.
    pub fn same_values(&self, other: &Self) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| a.same_values(b))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            // `{:?}` on f64 prints the shortest string that round-trips.
            writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?}",
                r.k, r.consensus_spread, r.feasibility, r.objective, r.zeta_sum, r.wall_time_ms
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_HEADER => {}
            _ => return Err(Error::Parse { line: 1, message: format!("expected header `{TRACE_HEADER}`") }),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", fields.len())));
            }
            let k = fields[0].parse::<u64>().map_err(|e| bad(format!("round index: {e}")))?;
            let mut v = [0.0; 5];
            for (slot, f) in v.iter_mut().zip(&fields[1..]) {
                *slot = f.parse::<f64>().map_err(|e| bad(format!("`{f}`: {e}")))?;
            }
            records.push(MetricsRecord {
                k,
                consensus_spread: v[0],
                feasibility: v[1],
                objective: v[2],
                zeta_sum: v[3],
                wall_time_ms: v[4],
            });
        }
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeStates {
    PrimalDual(Vec<PdNodeState>),
    RandomProjection(Vec<RpNodeState>),
}

impl NodeStates {
    pub fn thetas(&self) -> Vec<&Vector> {
        match self {
            NodeStates::PrimalDual(s) => s.iter().map(|x| &x.theta).collect(),
            NodeStates::RandomProjection(s) => s.iter().map(|x| &x.theta).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Every specified tolerance holds at the last recorded round.
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub trace: Trace,
    pub states: NodeStates,
    /// Consensus average `θ̄` of the final states.
    pub average: Vector,
}

pub struct Simulation {
    problem: NetworkProblem,
    base: Topology,
    rule: WeightRule,
    base_weights: WeightMatrix,
    /// Averaging weights for `θ̄`.
    pi: Vector,
    settings: Settings,
    k: u64,
    zeta_sum: f64,
    states: NodeStates,
    selection: Vec<ChaCha8Rng>,
    topology_rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(problem: NetworkProblem, topology: Topology, settings: Settings) -> Result<Self> {
        problem.validate()?;
        settings.algorithm.validate()?;
        settings.stopping.validate()?;
        let m = topology.node_count();
        if problem.node_count() != m {
            return Err(Error::Configuration(format!(
                "problem has {} nodes but the topology has {m}",
                problem.node_count()
            )));
        }
        if let Some(p) = settings.activation_prob {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Parameter(format!("activation probability must lie in (0,1], got {p}")));
            }
        }
        if matches!(settings.algorithm, Algorithm::PrimalDual(_)) && topology.is_directed() {
            return Err(Error::Configuration("primal_dual requires an undirected topology".into()));
        }
        if !is_strongly_connected(&topology) {
            return Err(Error::Connectivity);
        }
        let rule = WeightRule::for_topology(&topology);
        let base_weights = build_weights(&topology, rule);
        let pi = if topology.is_directed() {
            left_eigenvector(&base_weights, DEFAULT_POWER_TOL)?.pi
        } else {
            Vector::from_element(m, 1.0 / m as f64)
        };
        let states = match settings.algorithm {
            Algorithm::PrimalDual(_) => NodeStates::PrimalDual(primal_dual::initial_states(&problem)),
            Algorithm::RandomProjection(_) => NodeStates::RandomProjection(rand_proj::initial_states(&problem)),
        };
        let selection = (0..m).map(|j| stream(settings.seed, Purpose::ConstraintSelection, j as u64)).collect();
        let topology_rng = stream(settings.seed, Purpose::Topology, 0);
        Ok(Self {
            problem,
            base: topology,
            rule,
            base_weights,
            pi,
            settings,
            k: 0,
            zeta_sum: 0.0,
            states,
            selection,
            topology_rng,
        })
    }

    pub fn rounds_done(&self) -> u64 {
        self.k
    }

    pub fn states(&self) -> &NodeStates {
        &self.states
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn problem(&self) -> &NetworkProblem {
        &self.problem
    }

    pub fn averaging_weights(&self) -> &Vector {
        &self.pi
    }

    /// `θ̄ = Σ_j π_j θ_j` (uniform weights on undirected graphs).
    pub fn average(&self) -> Vector {
        let thetas = self.states.thetas();
        let mut avg = Vector::zeros(self.problem.dim());
        for (j, t) in thetas.iter().enumerate() {
            avg += *t * self.pi[j];
        }
        avg
    }

    fn record(&self, wall_time_ms: f64) -> MetricsRecord {
        let avg = self.average();
        let thetas = self.states.thetas();
        let consensus_spread = thetas.iter().map(|t| (*t - &avg).norm()).fold(0.0, f64::max);
        let feasibility = thetas
            .iter()
            .zip(&self.problem.locals)
            .map(|(t, l)| g_eval(t, &self.problem.domain, l).max())
            .fold(0.0, f64::max);
        MetricsRecord {
            k: self.k.saturating_sub(1),
            consensus_spread,
            feasibility,
            objective: self.problem.objective.dot(&avg),
            zeta_sum: self.zeta_sum,
            wall_time_ms,
        }
    }

    /// Run round `k` and return its metrics.
    pub fn step(&mut self) -> Result<MetricsRecord> {
        let start = Instant::now();
        let resampled;
        let (topology, weights) = match self.settings.activation_prob {
            Some(p) if p < 1.0 => {
                let t = sample_time_varying(&self.base, p, &mut self.topology_rng)?;
                let w = build_weights(&t, self.rule);
                resampled = (t, w);
                (&resampled.0, &resampled.1)
            }
            _ => (&self.base, &self.base_weights),
        };
        let k = self.k;
        let parallel = self.settings.parallel;
        self.states = match (&self.settings.algorithm, &self.states) {
            (Algorithm::PrimalDual(cfg), NodeStates::PrimalDual(s)) => NodeStates::PrimalDual(
                primal_dual::pd_round(s, topology, weights, &self.problem, cfg, k, parallel)?.states,
            ),
            (Algorithm::RandomProjection(cfg), NodeStates::RandomProjection(s)) => NodeStates::RandomProjection(
                rand_proj::rp_round(s, topology, weights, &self.problem, cfg, k, &mut self.selection, parallel)?.states,
            ),
            _ => unreachable!("state kind always matches the algorithm"),
        };
        self.zeta_sum += self.settings.algorithm.schedule().step(k);
        self.k += 1;
        Ok(self.record(start.elapsed().as_secs_f64() * 1e3))
    }

    /// Run until the stopping rule fires. Only rounds executed by this call
    /// appear in the trace.
    pub fn run(&mut self) -> Result<Outcome> {
        let stop = self.settings.stopping;
        let early = stop.objective.is_some();
        let mut trace = Trace::default();
        while self.k < stop.max_rounds {
            let r = self.step()?;
            trace.records.push(r);
            if early && stop.satisfied_by(&r) {
                break;
            }
        }
        let last = trace.last().copied().unwrap_or_else(|| self.record(0.0));
        let status = if stop.satisfied_by(&last) { Status::Converged } else { Status::BudgetExhausted };
        Ok(Outcome { status, trace, states: self.states.clone(), average: self.average() })
    }

    pub fn checkpoint(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut w, CHECKPOINT_VERSION);
        w.push(self.settings.algorithm.tag());
        put_u64(&mut w, self.settings.seed);
        put_f64(&mut w, self.settings.activation_prob.unwrap_or(f64::NAN));
        put_u64(&mut w, self.k);
        put_f64(&mut w, self.zeta_sum);
        put_u64(&mut w, self.problem.node_count() as u64);
        put_u64(&mut w, self.problem.dim() as u64);
        match &self.states {
            NodeStates::PrimalDual(s) => {
                for st in s {
                    put_vec(&mut w, &st.theta);
                    put_vec(&mut w, &st.lambda);
                    put_vec(&mut w, &st.gamma);
                }
            }
            NodeStates::RandomProjection(s) => {
                for st in s {
                    put_vec(&mut w, &st.theta);
                }
            }
        }
        for rng in self.selection.iter().chain(std::iter::once(&self.topology_rng)) {
            put_u64(&mut w, rng.get_stream());
            w.extend_from_slice(&rng.get_word_pos().to_le_bytes());
        }
        let sum = fnv1a(&w);
        put_u64(&mut w, sum);
        w
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.checkpoint())?;
        Ok(())
    }

    /// Rebuild a simulation from checkpoint bytes. `problem`, `topology` and
    /// `settings` must be those of the run that wrote the checkpoint; the
    /// round budget may differ.
    pub fn resume(problem: NetworkProblem, topology: Topology, settings: Settings, bytes: &[u8]) -> Result<Self> {
        let mut sim = Self::new(problem, topology, settings)?;
        if bytes.len() < CHECKPOINT_MAGIC.len() + 12 || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic header)".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let mut r = Reader { buf: &body[CHECKPOINT_MAGIC.len()..] };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("version {version} not supported (expected {CHECKPOINT_VERSION})")));
        }
        if u64::from_le_bytes(tail.try_into().expect("8 bytes")) != fnv1a(body) {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        if r.u8()? != sim.settings.algorithm.tag() {
            return Err(Error::Checkpoint("checkpoint was written by a different algorithm".into()));
        }
        if r.u64()? != sim.settings.seed {
            return Err(Error::Checkpoint("checkpoint was written with a different master seed".into()));
        }
        let p = r.f64()?;
        if p.to_bits() != sim.settings.activation_prob.unwrap_or(f64::NAN).to_bits() {
            return Err(Error::Checkpoint("checkpoint was written with a different topology mode".into()));
        }
        let k = r.u64()?;
        let zeta_sum = r.f64()?;
        let (m, n) = (r.u64()? as usize, r.u64()? as usize);
        if m != sim.problem.node_count() || n != sim.problem.dim() {
            return Err(Error::Checkpoint(format!("checkpoint holds {m} nodes of dimension {n}")));
        }
        sim.states = match sim.states {
            NodeStates::PrimalDual(ref s) => {
                let mut out = Vec::with_capacity(m);
                for st in s {
                    let theta = r.vec(n)?;
                    let lambda = r.vec(n)?;
                    let gamma = r.vec(st.gamma.len())?;
                    out.push(PdNodeState { theta, lambda, gamma });
                }
                NodeStates::PrimalDual(out)
            }
            NodeStates::RandomProjection(_) => {
                NodeStates::RandomProjection((0..m).map(|_| Ok(RpNodeState { theta: r.vec(n)? })).collect::<Result<_>>()?)
            }
        };
        for rng in sim.selection.iter_mut().chain(std::iter::once(&mut sim.topology_rng)) {
            let s = r.u64()?;
            let pos = r.u128()?;
            if s != rng.get_stream() {
                return Err(Error::Checkpoint("random stream layout differs".into()));
            }
            rng.set_word_pos(pos);
        }
        if !r.buf.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.buf.len())));
        }
        sim.k = k;
        sim.zeta_sum = zeta_sum;
        Ok(sim)
    }

    pub fn resume_from_file(problem: NetworkProblem, topology: Topology, settings: Settings, path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::resume(problem, topology, settings, &bytes)
    }
}

/// Build and run a simulation from scratch.
pub fn run(problem: NetworkProblem, topology: Topology, settings: Settings) -> Result<Outcome> {
    Simulation::new(problem, topology, settings)?.run()
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"NETSPCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    put_u64(w, v.to_bits());
}

fn put_vec(w: &mut Vec<u8>, v: &Vector) {
    for x in v.iter() {
        put_f64(w, *x);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.buf.len() < N {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn vec(&mut self, n: usize) -> Result<Vector> {
        let mut v = Vector::zeros(n);
        for x in v.iter_mut() {
            *x = self.f64()?;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{halfspace_lp, sampled_halfspace_family, Domain, LocalProblem};
    use crate::scenario::ScenarioSet;
    use approx::assert_relative_eq;
    use nalgebra::dvector;
    use std::sync::Arc;

    fn lp(m: usize, seed: u64) -> NetworkProblem {
        halfspace_lp(dvector![1.0, 0.5], 10.0, (0.5, 1.5), &vec![10; m], seed).unwrap()
    }

    fn pd(max_rounds: u64) -> Settings {
        Settings::new(Algorithm::PrimalDual(PdConfig::default()), 7, max_rounds)
    }

    fn rp(max_rounds: u64) -> Settings {
        Settings::new(Algorithm::RandomProjection(RpConfig::default()), 7, max_rounds)
    }

    #[test]
    fn exchange_inbox_sizes() {
        let payload: Vec<usize> = (0..5).collect();
        let full = exchange(&payload, &Topology::complete(5).unwrap());
        assert!(full.iter().all(|inbox| inbox.len() == 4));
        let cyc = exchange(&payload, &Topology::directed_cycle(5).unwrap());
        assert!(cyc.iter().all(|inbox| inbox.len() == 1));
        assert_eq!(exchange(&payload, &Topology::ring(5).unwrap())[0], vec![(1, 1), (4, 4)]);
    }

    #[test]
    fn primal_dual_uses_two_waves() {
        let problem = lp(4, 1);
        let t = Topology::ring(4).unwrap();
        let w = build_weights(&t, WeightRule::Metropolis);
        let s = primal_dual::initial_states(&problem);
        let d = primal_dual::pd_directions(&s, &t, &w, &problem, 1.0, false).unwrap();
        assert_eq!(d.waves, 2);
    }

    #[test]
    fn single_node_unconstrained_is_plain_descent() {
        let local = LocalProblem {
            family: Arc::new(sampled_halfspace_family(1).unwrap()),
            scenarios: ScenarioSet::new(0, vec![]),
        };
        let problem = NetworkProblem::new(dvector![0.5], Domain::Whole { dim: 1 }, vec![local]).unwrap();
        let t = Topology::ring(1).unwrap();
        for settings in [pd(50), rp(50)] {
            let out = run(problem.clone(), t.clone(), settings).unwrap();
            let last = out.trace.last().unwrap();
            assert_eq!(out.trace.len(), 50);
            assert_relative_eq!(out.average[0], -0.5 * last.zeta_sum, max_relative = 1e-12);
            assert_eq!(last.consensus_spread, 0.0);
            assert_eq!(last.feasibility, 0.0);
        }
    }

    #[test]
    fn zeta_sum_grows_at_least_logarithmically() {
        let out = run(lp(4, 2), Topology::ring(4).unwrap(), pd(2_000)).unwrap();
        let mut prev = 0.0;
        for r in &out.trace.records {
            assert!(r.zeta_sum > prev);
            assert!(r.zeta_sum >= ((r.k + 1) as f64).ln());
            assert!(r.feasibility >= 0.0);
            prev = r.zeta_sum;
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        for settings in [pd(300), rp(300)] {
            let t = if matches!(settings.algorithm, Algorithm::PrimalDual(_)) {
                Topology::ring(4).unwrap()
            } else {
                Topology::directed_cycle(4).unwrap()
            };
            let a = run(lp(4, 3), t.clone(), settings.clone()).unwrap();
            let b = run(lp(4, 3), t.clone(), settings.clone()).unwrap();
            let c = run(lp(4, 3), t, Settings { parallel: true, ..settings }).unwrap();
            assert!(a.trace.same_values(&b.trace));
            assert!(a.trace.same_values(&c.trace));
            assert_eq!(a.states, c.states);
        }
    }

    #[test]
    fn time_varying_runs_are_reproducible() {
        let settings = Settings { activation_prob: Some(0.5), ..rp(300) };
        let t = Topology::directed_cycle(4).unwrap();
        let a = run(lp(4, 4), t.clone(), settings.clone()).unwrap();
        let b = run(lp(4, 4), t.clone(), settings.clone()).unwrap();
        let fixed = run(lp(4, 4), t, rp(300)).unwrap();
        assert!(a.trace.same_values(&b.trace));
        assert!(!a.trace.same_values(&fixed.trace));
    }

    #[test]
    fn configuration_errors() {
        let directed = Topology::directed_cycle(4).unwrap();
        assert!(matches!(Simulation::new(lp(4, 0), directed, pd(10)), Err(Error::Configuration(_))));
        let chain = Topology::directed_chain(4).unwrap();
        assert!(matches!(Simulation::new(lp(4, 0), chain, rp(10)), Err(Error::Connectivity)));
        let split = Topology::new(4, false, [(0, 1), (2, 3)]).unwrap();
        assert!(matches!(Simulation::new(lp(4, 0), split, pd(10)), Err(Error::Connectivity)));
        assert!(matches!(Simulation::new(lp(3, 0), Topology::ring(4).unwrap(), pd(10)), Err(Error::Configuration(_))));
        assert!(Simulation::new(lp(4, 0), Topology::ring(4).unwrap(), pd(0)).is_err());
        let bad_p = Settings { activation_prob: Some(0.0), ..pd(10) };
        assert!(Simulation::new(lp(4, 0), Topology::ring(4).unwrap(), bad_p).is_err());
    }

    fn resume_matches(settings: Settings, topology: Topology, split: u64, total: u64) {
        let whole = run(lp(4, 5), topology.clone(), Settings { stopping: StoppingRule::rounds(total), ..settings.clone() }).unwrap();
        let mut first = Simulation::new(lp(4, 5), topology.clone(), settings.clone()).unwrap();
        let head = if split > 0 {
            first.settings.stopping.max_rounds = split;
            first.run().unwrap().trace
        } else {
            Trace::default()
        };
        let bytes = first.checkpoint();
        let resumed_settings = Settings { stopping: StoppingRule::rounds(total), ..settings };
        let mut second = Simulation::resume(lp(4, 5), topology, resumed_settings, &bytes).unwrap();
        let tail = second.run().unwrap();
        let mut joined = head;
        joined.records.extend(tail.trace.records);
        assert!(joined.same_values(&whole.trace));
        assert_eq!(tail.states, whole.states);
    }

    #[test]
    fn checkpoint_resume_reproduces_uninterrupted_run() {
        resume_matches(pd(1), Topology::ring(4).unwrap(), 0, 200);
        resume_matches(pd(1), Topology::ring(4).unwrap(), 77, 200);
        resume_matches(rp(1), Topology::directed_cycle(4).unwrap(), 0, 200);
        resume_matches(rp(1), Topology::directed_cycle(4).unwrap(), 91, 200);
        let tv = Settings { activation_prob: Some(0.5), ..rp(1) };
        resume_matches(tv, Topology::directed_cycle(4).unwrap(), 50, 200);
    }

    #[test]
    fn checkpoint_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        let mut sim = Simulation::new(lp(4, 6), Topology::ring(4).unwrap(), pd(40)).unwrap();
        sim.run().unwrap();
        sim.write_checkpoint(&path).unwrap();
        let back = Simulation::resume_from_file(lp(4, 6), Topology::ring(4).unwrap(), pd(40), &path).unwrap();
        assert_eq!(back.rounds_done(), 40);
        assert_eq!(back.states(), sim.states());
    }

    #[test]
    fn corrupted_checkpoints_are_rejected() {
        let sim = Simulation::new(lp(4, 6), Topology::ring(4).unwrap(), pd(10)).unwrap();
        let good = sim.checkpoint();
        let again = || (lp(4, 6), Topology::ring(4).unwrap(), pd(10));

        let mut flipped = good.clone();
        flipped[40] ^= 1;
        let (p, t, s) = again();
        assert!(matches!(Simulation::resume(p, t, s, &flipped), Err(Error::Checkpoint(_))));

        let mut magic = good.clone();
        magic[0] = b'X';
        let (p, t, s) = again();
        assert!(matches!(Simulation::resume(p, t, s, &magic), Err(Error::Checkpoint(_))));

        let mut version = good.clone();
        version[8] = 9;
        let (p, t, s) = again();
        let err = Simulation::resume(p, t, s, &version).err().unwrap();
        assert!(err.to_string().contains("version"));

        let (p, t, s) = again();
        assert!(matches!(Simulation::resume(p, t, s, &good[..good.len() - 20]), Err(Error::Checkpoint(_))));

        let (p, t, _) = again();
        assert!(matches!(Simulation::resume(p, t, Settings { seed: 8, ..pd(10) }, &good), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn trace_csv_round_trip() {
        let out = run(lp(4, 8), Topology::ring(4).unwrap(), pd(25)).unwrap();
        let text = out.trace.to_csv();
        assert!(text.starts_with(TRACE_HEADER));
        let back = Trace::parse_csv(&text).unwrap();
        assert_eq!(back, out.trace);
        assert!(matches!(Trace::parse_csv("k,x\n"), Err(Error::Parse { line: 1, .. })));
        let bad = format!("{TRACE_HEADER}\n0,1,2\n");
        assert!(matches!(Trace::parse_csv(&bad), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn stopping_rule_semantics() {
        let rec = MetricsRecord { k: 3, consensus_spread: 1e-4, feasibility: 0.0, objective: 2.0, zeta_sum: 1.0, wall_time_ms: 0.0 };
        let mut rule = StoppingRule::rounds(10);
        assert!(rule.satisfied_by(&rec));
        rule.consensus_tol = Some(1e-5);
        assert!(!rule.satisfied_by(&rec));
        rule.consensus_tol = Some(1e-3);
        rule.objective = Some(ObjectiveTarget { reference: 2.01, rel_tol: 1e-2 });
        assert!(rule.satisfied_by(&rec));
        rule.objective = Some(ObjectiveTarget { reference: 3.0, rel_tol: 1e-2 });
        assert!(!rule.satisfied_by(&rec));
        assert!(StoppingRule { feasibility_tol: Some(-1.0), ..StoppingRule::rounds(1) }.validate().is_err());

        // budget exhausted when the tolerance is out of reach
        let tight = Settings {
            stopping: StoppingRule { consensus_tol: Some(1e-300), feasibility_tol: Some(1e-300), ..StoppingRule::rounds(5) },
            ..rp(5)
        };
        let out = run(lp(4, 9), Topology::directed_cycle(4).unwrap(), tight).unwrap();
        assert_eq!(out.status, Status::BudgetExhausted);
        assert_eq!(out.trace.len(), 5);
    }
}
