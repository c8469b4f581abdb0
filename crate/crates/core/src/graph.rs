//! Communication topologies, row-stochastic weights and consensus spectra.
//!
//! An edge `(i, j)` means node `i` receives from node `j`. Self-loops are
//! never stored; the self-weight `a_jj` absorbs whatever mass the neighbour
//! weights leave in a row.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use rand::Rng;

use crate::{Error, Matrix, Result, Vector};

/// Row sums of a weight matrix must equal one to within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;
pub const DEFAULT_POWER_TOL: f64 = 1e-12;
pub const DEFAULT_POWER_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
    directed: bool,
}

impl Topology {
    /// Build a topology from `(receiver, sender)` pairs. Undirected edge sets
    /// are symmetrized.
    pub fn new(m: usize, directed: bool, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Parameter("a topology needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= m || j >= m {
                return Err(Error::Parameter(format!("edge ({i}, {j}) out of range for {m} nodes")));
            }
            if i == j {
                return Err(Error::Parameter(format!("self-loop at node {i}")));
            }
            set.insert((i, j));
            if !directed {
                set.insert((j, i));
            }
        }
        Ok(Self { m, edges: set, directed })
    }

    /// Undirected ring `i ↔ i+1 (mod m)`.
    pub fn ring(m: usize) -> Result<Self> {
        let edges = (0..m).filter(|_| m > 1).map(|i| (i, (i + 1) % m));
        Self::new(m, false, edges)
    }

    /// Directed cycle where node `i+1` receives from node `i`.
    pub fn directed_cycle(m: usize) -> Result<Self> {
        let edges = (0..m).filter(|_| m > 1).map(|i| ((i + 1) % m, i));
        Self::new(m, true, edges)
    }

    /// Directed chain `0 → 1 → … → m−1`.
    pub fn directed_chain(m: usize) -> Result<Self> {
        Self::new(m, true, (1..m).map(|i| (i, i - 1)))
    }

    pub fn complete(m: usize) -> Result<Self> {
        Self::new(m, false, (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))))
    }

    /// Undirected ring plus an extra link between every non-adjacent pair
    /// with probability `link_prob`.
    pub fn ring_with_random_links<R: Rng + ?Sized>(m: usize, link_prob: f64, rng: &mut R) -> Result<Self> {
        check_probability(link_prob, true)?;
        let mut t = Self::ring(m)?;
        for i in 0..m {
            for j in (i + 1)..m {
                if t.edges.contains(&(i, j)) {
                    continue;
                }
                if rng.random::<f64>() < link_prob {
                    t.edges.insert((i, j));
                    t.edges.insert((j, i));
                }
            }
        }
        Ok(t)
    }

    /// Directed variant of a ring-plus-links topology: ring links are oriented
    /// clockwise (`i → i+1`), every other link gets a direction chosen with
    /// equal probability.
    pub fn orient_ring_with_links<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Self> {
        if self.directed {
            return Err(Error::Parameter("topology is already directed".into()));
        }
        let m = self.m;
        let mut edges = Vec::new();
        for &(i, j) in self.edges.iter().filter(|(i, j)| i < j) {
            if m == 2 {
                edges.extend([(i, j), (j, i)]);
            } else if m > 1 && j == (i + 1) % m {
                edges.push((j, i));
            } else if m > 2 && i == (j + 1) % m {
                edges.push((i, j));
            } else if rng.random::<bool>() {
                edges.push((i, j));
            } else {
                edges.push((j, i));
            }
        }
        Self::new(m, true, edges)
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, receiver: usize, sender: usize) -> bool {
        self.edges.contains(&(receiver, sender))
    }

    /// Nodes `j` reads from, in increasing order.
    pub fn in_neighbors(&self, j: usize) -> Vec<usize> {
        self.edges.range((j, 0)..(j + 1, 0)).map(|&(_, s)| s).collect()
    }

    /// Nodes that read from `j`, in increasing order.
    pub fn out_neighbors(&self, j: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(_, s)| s == j).map(|&(r, _)| r).collect()
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.edges.range((j, 0)..(j + 1, 0)).count()
    }

    /// Parse the edge-list text format: a header `m directed|undirected`
    /// followed by one `i j` pair per line (`i` receives from `j`). Blank
    /// lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
        let mut parts = header.split_whitespace();
        let m: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::Parse { line: hline, message: "expected node count".into() })?;
        let directed = match parts.next() {
            Some("directed") => true,
            Some("undirected") => false,
            other => {
                return Err(Error::Parse { line: hline, message: format!("expected directed|undirected, got {other:?}") })
            }
        };
        let mut edges = Vec::new();
        for (line, content) in lines {
            let nums: Vec<&str> = content.split_whitespace().collect();
            let pair = match nums.as_slice() {
                [a, b] => a.parse::<usize>().ok().zip(b.parse::<usize>().ok()),
                _ => None,
            };
            let (i, j) = pair.ok_or_else(|| Error::Parse { line, message: format!("expected `i j`, got `{content}`") })?;
            if i >= m || j >= m || i == j {
                return Err(Error::Parse { line, message: format!("invalid edge ({i}, {j})") });
            }
            edges.push((i, j));
        }
        Self::new(m, directed, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.m, if self.directed { "directed" } else { "undirected" });
        for (i, j) in self.edges().filter(|(i, j)| self.directed || i < j) {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }
}

fn check_probability(p: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { (0.0..=1.0).contains(&p) } else { p > 0.0 && p <= 1.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Parameter(format!("probability {p} out of range")))
    }
}

/// True iff every node reaches every other node along directed paths.
pub fn is_strongly_connected(topology: &Topology) -> bool {
    let m = topology.node_count();
    let reach = |forward: bool| {
        let mut adj = vec![Vec::new(); m];
        for (r, s) in topology.edges() {
            // information flows from sender s to receiver r
            if forward {
                adj[s].push(r);
            } else {
                adj[r].push(s);
            }
        }
        let mut seen = vec![false; m];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRule {
    /// `a_ij = 1/(1 + max(deg_i, deg_j))`; symmetric on undirected graphs.
    Metropolis,
    /// `a_ji = 1/(|N_j^in| + 1)` for every in-neighbour and for the node itself.
    InDegree,
}

impl WeightRule {
    pub fn for_topology(topology: &Topology) -> Self {
        if topology.is_directed() {
            WeightRule::InDegree
        } else {
            WeightRule::Metropolis
        }
    }
}

/// Row-stochastic matrix adapted to a topology.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(Matrix);

impl WeightMatrix {
    /// Wrap an arbitrary matrix after checking it is square, nonnegative
    /// and row-stochastic.
    pub fn from_matrix(a: Matrix) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Parameter("weight matrix must be square and nonempty".into()));
        }
        if a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter("weights must be finite and nonnegative".into()));
        }
        for (r, row) in a.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Parameter(format!("row {r} sums to {s}")));
            }
        }
        Ok(Self(a))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn is_symmetric(&self) -> bool {
        self.0 == self.0.transpose()
    }
}

pub fn build_weights(topology: &Topology, rule: WeightRule) -> WeightMatrix {
    let m = topology.node_count();
    let mut a = Matrix::zeros(m, m);
    match rule {
        WeightRule::Metropolis => {
            let deg: Vec<usize> = (0..m).map(|j| topology.in_degree(j)).collect();
            for (i, j) in topology.edges() {
                a[(i, j)] = 1.0 / (1 + deg[i].max(deg[j])) as f64;
            }
        }
        WeightRule::InDegree => {
            for (i, j) in topology.edges() {
                a[(i, j)] = 1.0 / (topology.in_degree(i) + 1) as f64;
            }
        }
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        a[(i, i)] = 1.0 - off;
    }
    WeightMatrix(a)
}

/// `L = I − A`.
pub fn laplacian(weights: &WeightMatrix) -> Matrix {
    let m = weights.size();
    Matrix::identity(m, m) - weights.matrix()
}

/// Normalized left eigenvector of a row-stochastic matrix for eigenvalue one.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronVector {
    pub pi: Vector,
    /// `‖π'A − π'‖_∞` at the returned `π`.
    pub residual: f64,
}

pub fn left_eigenvector(weights: &WeightMatrix, tol: f64) -> Result<PerronVector> {
    left_eigenvector_capped(weights, tol, DEFAULT_POWER_MAX_ITER)
}

/// Power iteration `π' ← π'(I + A)/2` with renormalization. The lazy form
/// has the same fixed point as `A` and converges even when `A` is periodic.
pub fn left_eigenvector_capped(weights: &WeightMatrix, tol: f64, max_iter: usize) -> Result<PerronVector> {
    let a = weights.matrix();
    let m = weights.size();
    let at = a.transpose();
    let mut pi = Vector::from_element(m, 1.0 / m as f64);
    for _ in 0..max_iter {
        let next = &at * &pi;
        let residual = (&next - &pi).amax();
        if residual <= tol {
            if pi.iter().any(|v| *v <= 0.0) {
                return Err(Error::Numerical("left eigenvector has a nonpositive entry".into()));
            }
            return Ok(PerronVector { pi, residual });
        }
        pi = (pi + next) * 0.5;
        let s = pi.sum();
        pi /= s;
    }
    Err(Error::Numerical(format!("power iteration did not reach {tol} in {max_iter} iterations")))
}

/// Spectral radius of `A − 1π'`, the rate at which the consensus error
/// contracts. Computed as `‖M^(2^s)‖^(1/2^s)` by repeated squaring with
/// renormalization, which converges to the spectral radius from above.
pub fn consensus_contraction_factor(weights: &WeightMatrix, perron: &PerronVector) -> f64 {
    let m = weights.size();
    let ones = Vector::from_element(m, 1.0);
    let mut p = weights.matrix() - &ones * perron.pi.transpose();
    let n0 = p.norm();
    if n0 == 0.0 {
        return 0.0;
    }
    p /= n0;
    let mut log_scale = n0.ln();
    let mut power = 1.0f64;
    for _ in 0..48 {
        let sq = &p * &p;
        let n = sq.norm();
        if n == 0.0 || !n.is_finite() {
            return 0.0;
        }
        p = sq / n;
        log_scale = 2.0 * log_scale + n.ln();
        power *= 2.0;
    }
    (log_scale / power).exp()
}

/// One round of a stochastically time-varying graph: each base link is kept
/// independently with probability `activation_prob` (undirected links are
/// kept or dropped as a pair).
pub fn sample_time_varying<R: Rng + ?Sized>(base: &Topology, activation_prob: f64, rng: &mut R) -> Result<Topology> {
    check_probability(activation_prob, false)?;
    if activation_prob == 1.0 {
        return Ok(base.clone());
    }
    let kept: Vec<(usize, usize)> = base
        .edges()
        .filter(|(i, j)| base.directed || i < j)
        .filter(|_| rng.random::<f64>() < activation_prob)
        .collect();
    Topology::new(base.m, base.directed, kept)
}
