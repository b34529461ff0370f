//! Undirected communication graphs, diameters and synchronous max-consensus.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gnep::GnepProblem;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph, normalizing edges to (min, max) and dropping duplicates.
    /// Rejects self-loops, out-of-range endpoints and disconnected graphs.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Graph("graph must have at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Graph(format!("edge ({a}, {b}) references a node outside 0..{n}")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop at node {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        adjacency.iter_mut().for_each(|v| v.sort_unstable());
        let g = CommGraph { n, edges, adjacency };
        if g.bfs(0).iter().any(|d| d.is_none()) {
            return Err(Error::Graph("graph is not connected".into()));
        }
        Ok(g)
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges)
    }

    pub fn star(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges)
    }

    /// Random connected graph: a random spanning tree plus extra edges with probability `p`.
    pub fn random_connected(n: usize, p: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 1..n {
            edges.push((rng.gen_range(0..i), i));
        }
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency.get(a).is_some_and(|v| v.binary_search(&b).is_ok())
    }

    /// Copy of the graph with edge (a, b) removed; fails if that disconnects it.
    pub fn without_edge(&self, a: usize, b: usize) -> Result<Self> {
        let edges: Vec<_> = self.edges.iter().copied().filter(|&e| e != (a.min(b), a.max(b))).collect();
        Self::new(self.n, &edges)
    }

    fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[src] = Some(0);
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    q.push_back(v);
                }
            }
        }
        dist
    }

    pub fn diameter(&self) -> usize {
        (0..self.n)
            .map(|s| self.bfs(s).into_iter().map(|d| d.expect("connected")).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Runs exactly `diameter()` synchronous rounds of η_i ← max over N_i ∪ {i}.
    pub fn max_consensus(&self, init: &[f64]) -> Result<ConsensusTrace> {
        if init.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: init.len() });
        }
        let mut rounds = vec![init.to_vec()];
        for _ in 0..self.diameter() {
            let prev = rounds.last().unwrap();
            let next = (0..self.n)
                .map(|i| self.adjacency[i].iter().fold(prev[i], |a, &j| a.max(prev[j])))
                .collect();
            rounds.push(next);
        }
        Ok(ConsensusTrace { rounds })
    }

    /// Parses "i j [t_ij]" lines (0-based node ids; `#` starts a comment).
    /// Returns the graph and per-edge weights (None when omitted).
    pub fn parse_edge_list(text: &str) -> Result<(Self, Vec<((usize, usize), Option<f64>)>)> {
        let mut raw = Vec::new();
        let mut max_node = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Config(format!("edge list line {}: expected 'i j [t_ij]', got '{line}'", lineno + 1));
            if fields.len() < 2 || fields.len() > 3 {
                return Err(bad());
            }
            let a: usize = fields[0].parse().map_err(|_| bad())?;
            let b: usize = fields[1].parse().map_err(|_| bad())?;
            let w = match fields.get(2) {
                Some(s) => Some(s.parse::<f64>().map_err(|_| bad())?),
                None => None,
            };
            max_node = max_node.max(a).max(b);
            raw.push(((a.min(b), a.max(b)), w));
        }
        if raw.is_empty() {
            return Err(Error::Config("edge list is empty".into()));
        }
        let edges: Vec<_> = raw.iter().map(|(e, _)| *e).collect();
        let g = Self::new(max_node + 1, &edges)?;
        Ok((g, raw))
    }
}

#[derive(Clone, Debug)]
pub struct ConsensusTrace {
    /// `rounds[0]` is the initial vector; `rounds[k]` the values after round k.
    pub rounds: Vec<Vec<f64>>,
}

impl ConsensusTrace {
    pub fn final_values(&self) -> &[f64] {
        self.rounds.last().unwrap()
    }

    pub fn round_count(&self) -> usize {
        self.rounds.len() - 1
    }
}

/// Probabilistic check that every cross-agent dependency of `problem` is
/// covered by `g`.
///
/// Objective couplings: agent i depends on j when a finite-difference probe of
/// ∇_{w_i} f_i in the direction of w_j is nonzero. Constraint couplings: each
/// shared row must have some participating agent adjacent to every other
/// participant (that agent can evaluate the row and hold its multiplier).
pub fn dependency_check(g: &CommGraph, problem: &GnepProblem, probe_points: usize, seed: u64) -> bool {
    let n = problem.agents();
    if g.node_count() != n {
        return false;
    }
    let r = problem.total_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-5;
    let e = problem.eq_matrix().clone();
    for _ in 0..probe_points.max(1) {
        let w: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..n {
            let base = problem.objective_grad(i, &w);
            let scale = 1.0 + base.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for j in (0..n).filter(|&j| j != i && !g.has_edge(i, j)) {
                for k in problem.block(j) {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[k] += step;
                    wm[k] -= step;
                    let gp = problem.objective_grad(i, &wp);
                    let gm = problem.objective_grad(i, &wm);
                    let d = gp.iter().zip(&gm).fold(0.0f64, |a, (p, m)| a.max(((p - m) / (2.0 * step)).abs()));
                    if d > 1e-6 * scale {
                        return false;
                    }
                }
            }
        }
        let jac = problem.inequality_jacobian(&w);
        let rows = (0..e.nrows()).map(|k| e.row(k).iter().copied().collect::<Vec<_>>()).chain(
            (0..jac.nrows()).map(|k| jac.row(k).iter().copied().collect::<Vec<_>>()),
        );
        for row in rows {
            let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let participants: Vec<usize> = (0..n)
                .filter(|&i| problem.block(i).any(|k| row[k].abs() > 1e-12 * scale.max(1e-300)))
                .collect();
            let covered = participants
                .iter()
                .any(|&o| participants.iter().all(|&p| p == o || g.has_edge(o, p)));
            if !participants.is_empty() && !covered {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diameters() {
        assert_eq!(CommGraph::path(10).unwrap().diameter(), 9);
        assert_eq!(CommGraph::complete(5).unwrap().diameter(), 1);
        assert_eq!(CommGraph::star(37).unwrap().diameter(), 2);
        assert_eq!(CommGraph::path(1).unwrap().diameter(), 0);
    }

    #[test]
    fn construction_errors() {
        assert!(CommGraph::new(3, &[(0, 1)]).is_err());
        assert!(CommGraph::new(2, &[(1, 1)]).is_err());
        assert!(CommGraph::new(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn consensus_on_small_path() {
        let g = CommGraph::path(3).unwrap();
        let t = g.max_consensus(&[1.0, 5.0, 2.0]).unwrap();
        assert_eq!(t.round_count(), 2);
        assert_eq!(t.final_values(), &[5.0, 5.0, 5.0]);
        let c = g.max_consensus(&[4.0; 3]).unwrap();
        assert!(c.rounds.iter().all(|r| r == &vec![4.0; 3]));
    }

    #[test]
    fn max_at_path_end_needs_all_rounds() {
        let g = CommGraph::path(6).unwrap();
        let mut init = vec![0.0; 6];
        init[5] = 1.0;
        let t = g.max_consensus(&init).unwrap();
        assert!(t.rounds[4].iter().any(|&v| v != 1.0));
        assert!(t.rounds[5].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn edge_list_parsing() {
        let (g, w) = CommGraph::parse_edge_list("# header\n0 1 1.5\n1 2\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(w[0], ((0, 1), Some(1.5)));
        assert_eq!(w[1], ((1, 2), None));
        assert!(CommGraph::parse_edge_list("0 x\n").is_err());
    }

    #[test]
    fn separable_problem_has_no_dependencies() {
        let p = GnepProblem::builder(vec![1, 1], |i, w| vec![w[i]]).build().unwrap();
        assert!(dependency_check(&CommGraph::path(2).unwrap(), &p, 5, 3));
    }

    #[test]
    fn missing_coupling_is_detected() {
        let p = GnepProblem::builder(vec![1, 1, 1], |i, w| vec![w[i] + if i == 0 { w[2] } else { 0.0 }])
            .build()
            .unwrap();
        assert!(!dependency_check(&CommGraph::path(3).unwrap(), &p, 3, 1));
        assert!(dependency_check(&CommGraph::complete(3).unwrap(), &p, 3, 1));
    }
}
