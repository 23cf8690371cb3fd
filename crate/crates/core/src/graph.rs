//! Communication graph and its matrix representations.
//!
//! Agents are indexed `0..n`. Edges are undirected and stored once as
//! `(i, j)` with `i < j`; incidence columns are indexed by directed arcs,
//! both orientations of every edge.

use std::collections::{BTreeSet, VecDeque};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Number of Erdős–Rényi resamples before giving up on connectivity.
pub const MAX_GRAPH_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from an undirected edge list.
    ///
    /// Edge orientation and duplicates are normalized away. Self-loops,
    /// out-of-range endpoints and disconnected graphs are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology("graph needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidTopology(format!("self-loop at agent {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({a}, {b}) references an agent outside 0..{n}"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let topo = Topology {
            n,
            edges,
            neighbors,
        };
        if !topo.is_connected() {
            return Err(Error::InvalidTopology("graph is not connected".into()));
        }
        Ok(topo)
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Self::path(n);
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(
            n,
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Undirected edges, `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Number of undirected edges (`r`).
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors
            .get(i)
            .is_some_and(|list| list.binary_search(&j).is_ok())
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    pub fn degree_matrix(&self) -> Array2<i64> {
        let mut d = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            d[[i, i]] = self.degree(i) as i64;
        }
        d
    }

    pub fn adjacency(&self) -> Array2<i64> {
        let mut w = Array2::zeros((self.n, self.n));
        for &(i, j) in &self.edges {
            w[[i, j]] = 1;
            w[[j, i]] = 1;
        }
        w
    }

    /// Graph Laplacian `D - W`.
    pub fn laplacian(&self) -> Array2<i64> {
        self.degree_matrix() - self.adjacency()
    }

    /// Directed arcs in column order: `(i, j)` then `(j, i)` for each edge.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .flat_map(|&(i, j)| [(i, j), (j, i)])
            .collect()
    }

    /// Serializes the edge list, one `i j` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(i, j) in &self.edges {
            out.push_str(&format!("{i} {j}\n"));
        }
        out
    }

    /// Parses the format written by [`Topology::to_edge_list`].
    pub fn from_edge_list(n: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<_> = line.split_whitespace().collect();
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    Error::Parse(format!("edge list line {}: bad index {s:?}", lineno + 1))
                })
            };
            if parts.len() != 2 {
                return Err(Error::Parse(format!(
                    "edge list line {}: expected two indices",
                    lineno + 1
                )));
            }
            edges.push((parse(parts[0])?, parse(parts[1])?));
        }
        Self::new(n, edges)
    }
}

/// Unsigned and signed incidence matrices, columns indexed by [`Topology::arcs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidencePair {
    pub s_plus: Array2<i64>,
    pub s_minus: Array2<i64>,
}

pub fn incidence(topology: &Topology) -> IncidencePair {
    let arcs = topology.arcs();
    let n = topology.n();
    let mut s_plus = Array2::zeros((n, arcs.len()));
    let mut s_minus = Array2::zeros((n, arcs.len()));
    for (col, &(from, to)) in arcs.iter().enumerate() {
        s_plus[[from, col]] = 1;
        s_plus[[to, col]] = 1;
        s_minus[[from, col]] = 1;
        s_minus[[to, col]] = -1;
    }
    IncidencePair { s_plus, s_minus }
}

/// Metropolis–Hastings combination weights for diffusion baselines.
///
/// Off-diagonal neighbor entries are `1 / (1 + max(d_i, d_j))`; the diagonal
/// takes whatever is left so each row sums to one.
pub fn metropolis_weights(topology: &Topology) -> Array2<f64> {
    let n = topology.n();
    let mut w = Array2::zeros((n, n));
    for &(i, j) in topology.edges() {
        let weight = 1.0 / (1.0 + topology.degree(i).max(topology.degree(j)) as f64);
        w[[i, j]] = weight;
        w[[j, i]] = weight;
    }
    for i in 0..n {
        let off: f64 = topology.neighbors(i).iter().map(|&j| w[[i, j]]).sum();
        w[[i, i]] = 1.0 - off;
    }
    w
}

/// Samples a connected Erdős–Rényi graph.
///
/// Attempt `k` draws from the ChaCha stream `k` of `seed`, so the result is a
/// pure function of the arguments.
pub fn random_connected_graph(n: usize, edge_prob: f64, seed: u64) -> Result<Topology> {
    if n == 0 {
        return Err(Error::InvalidTopology("graph needs at least one agent".into()));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::InvalidTopology(format!(
            "edge probability {edge_prob} outside [0, 1]"
        )));
    }
    for attempt in 0..MAX_GRAPH_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < edge_prob {
                    edges.push((i, j));
                }
            }
        }
        match Topology::new(n, edges) {
            Ok(topo) => return Ok(topo),
            Err(Error::InvalidTopology(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ConnectivityFailure {
        n,
        edge_prob,
        attempts: MAX_GRAPH_ATTEMPTS,
    })
}
