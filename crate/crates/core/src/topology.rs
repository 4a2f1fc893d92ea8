//! Finite connected undirected graphs: the arena of the process.
//!
//! Nodes are 0-based inside the library; every user-facing surface (edge-list
//! files, CSV columns, CLI) is 1-based.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("cycle graphs need at least 3 nodes, got {0}")]
    CycleTooSmall(usize),
    #[error("general graphs need at least 2 nodes, got {0}")]
    TooSmall(usize),
    #[error("node index {0} out of range for {1} nodes")]
    NodeOutOfRange(usize, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("node {0} has no neighbours")]
    IsolatedNode(usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("bad edge-list file: {0}")]
    BadEdgeList(String),
}

/// Which constructor produced the graph. Cycles unlock the exact potential
/// machinery; general graphs only run the raw dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Cycle,
    General,
}

/// An immutable validated graph: symmetric adjacency, no self-loops, no
/// duplicates, connected, every node of degree ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    kind: TopologyKind,
    adjacency: Vec<Vec<usize>>,
}

impl Topology {
    /// The cycle graph on `n ≥ 3` nodes: node `i` is adjacent to `i±1 mod n`.
    pub fn cycle(n: usize) -> Result<Self, TopologyError> {
        if n < 3 {
            return Err(TopologyError::CycleTooSmall(n));
        }
        let adjacency = (0..n)
            .map(|i| {
                let mut nb = vec![(i + n - 1) % n, (i + 1) % n];
                nb.sort_unstable();
                nb.dedup(); // n = 3 yields the triangle without duplicates
                nb
            })
            .collect();
        Ok(Self { kind: TopologyKind::Cycle, adjacency })
    }

    /// Build a general graph from an explicit 0-based edge list.
    pub fn from_edge_list(n: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if n < 2 {
            return Err(TopologyError::TooSmall(n));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n {
                return Err(TopologyError::NodeOutOfRange(u, n));
            }
            if v >= n {
                return Err(TopologyError::NodeOutOfRange(v, n));
            }
            if u == v {
                return Err(TopologyError::SelfLoop(u));
            }
            if adjacency[u].contains(&v) {
                return Err(TopologyError::DuplicateEdge(u.min(v), u.max(v)));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (i, nb) in adjacency.iter_mut().enumerate() {
            if nb.is_empty() {
                return Err(TopologyError::IsolatedNode(i));
            }
            nb.sort_unstable();
        }
        let topo = Self { kind: TopologyKind::General, adjacency };
        if !topo.is_connected() {
            return Err(TopologyError::Disconnected);
        }
        Ok(topo)
    }

    /// The 6-vertex graph on which every node has degree ≥ 2 yet the dynamics
    /// with ζ uniform on {0, 1} never settles: a path v0–v1–v2–v3 with v4
    /// attached to {v0, v1} and v5 attached to {v2, v3}.
    pub fn counterexample_graph() -> Self {
        Self::from_edge_list(6, &[(0, 1), (1, 2), (2, 3), (4, 0), (4, 1), (5, 2), (5, 3)])
            .expect("fixed edge list is valid")
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn is_cycle(&self) -> bool {
        self.kind == TopologyKind::Cycle
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Sorted neighbour list of `v`.
    pub fn neighbors(&self, v: usize) -> Result<&[usize], TopologyError> {
        self.adjacency
            .get(v)
            .map(Vec::as_slice)
            .ok_or(TopologyError::NodeOutOfRange(v, self.node_count()))
    }

    /// Infallible neighbour access for validated indices.
    pub(crate) fn adj(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> Result<usize, TopologyError> {
        self.neighbors(v).map(<[usize]>::len)
    }

    /// All edges as 0-based pairs with u < v, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, nb) in self.adjacency.iter().enumerate() {
            for &v in nb {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Nodes of degree 1. Convergence can fail around them, so reports flag
    /// their presence.
    pub fn degree_one_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&v| self.adjacency[v].len() == 1).collect()
    }

    fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == n
    }

    /// Parse the edge-list text format: first line `N E`, then `E` lines
    /// `u v` with 1-based node indices.
    pub fn from_edge_list_text(text: &str) -> Result<Self, TopologyError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| TopologyError::BadEdgeList("empty file".into()))?;
        let mut it = header.split_whitespace();
        let n: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| TopologyError::BadEdgeList(format!("bad header {header:?}")))?;
        let e: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| TopologyError::BadEdgeList(format!("bad header {header:?}")))?;
        let mut edges = Vec::with_capacity(e);
        for line in lines {
            let mut it = line.split_whitespace();
            let u: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| TopologyError::BadEdgeList(format!("bad edge line {line:?}")))?;
            let v: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| TopologyError::BadEdgeList(format!("bad edge line {line:?}")))?;
            if u == 0 || v == 0 {
                return Err(TopologyError::BadEdgeList(format!(
                    "edge indices are 1-based, got {line:?}"
                )));
            }
            edges.push((u - 1, v - 1));
        }
        if edges.len() != e {
            return Err(TopologyError::BadEdgeList(format!(
                "header promised {e} edges, found {}",
                edges.len()
            )));
        }
        Self::from_edge_list(n, &edges)
    }

    /// Inverse of [`Topology::from_edge_list_text`].
    pub fn to_edge_list_text(&self) -> String {
        let edges = self.edges();
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.node_count(), edges.len());
        for (u, v) in edges {
            let _ = writeln!(out, "{} {}", u + 1, v + 1);
        }
        out
    }
}

/// Compact provenance descriptor stored alongside trajectories and reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyDescriptor {
    pub kind: TopologyKind,
    pub node_count: usize,
}

impl From<&Topology> for TopologyDescriptor {
    fn from(t: &Topology) -> Self {
        Self { kind: t.kind(), node_count: t.node_count() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_triangle() {
        let t = Topology::cycle(3).unwrap();
        assert_eq!(t.neighbors(0).unwrap(), &[1, 2]);
        assert_eq!(t.neighbors(1).unwrap(), &[0, 2]);
        assert_eq!(t.neighbors(2).unwrap(), &[0, 1]);
    }

    #[test]
    fn cycle_is_two_regular() {
        let t = Topology::cycle(8).unwrap();
        for v in 0..8 {
            assert_eq!(t.degree(v).unwrap(), 2);
        }
    }

    #[test]
    fn cycle_rejects_small() {
        assert_eq!(Topology::cycle(2), Err(TopologyError::CycleTooSmall(2)));
    }

    #[test]
    fn cycle_neighbors_wrap() {
        let t = Topology::cycle(5).unwrap();
        assert_eq!(t.neighbors(0).unwrap(), &[1, 4]);
        assert_eq!(t.neighbors(2).unwrap(), &[1, 3]);
    }

    #[test]
    fn edge_list_matches_cycle() {
        let t = Topology::from_edge_list(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let c = Topology::cycle(3).unwrap();
        for v in 0..3 {
            assert_eq!(t.neighbors(v).unwrap(), c.neighbors(v).unwrap());
        }
    }

    #[test]
    fn edge_list_validation_errors() {
        assert_eq!(
            Topology::from_edge_list(4, &[(0, 1), (2, 3)]),
            Err(TopologyError::Disconnected)
        );
        assert_eq!(Topology::from_edge_list(3, &[(0, 0)]), Err(TopologyError::SelfLoop(0)));
        assert_eq!(
            Topology::from_edge_list(3, &[(0, 1), (1, 0), (1, 2)]),
            Err(TopologyError::DuplicateEdge(0, 1))
        );
        assert_eq!(
            Topology::from_edge_list(3, &[(0, 5)]),
            Err(TopologyError::NodeOutOfRange(5, 3))
        );
    }

    #[test]
    fn counterexample_layout() {
        let t = Topology::counterexample_graph();
        assert_eq!(t.node_count(), 6);
        let degrees: Vec<usize> = (0..6).map(|v| t.degree(v).unwrap()).collect();
        assert_eq!(degrees, vec![2, 3, 3, 2, 2, 2]);
        assert_eq!(t.neighbors(1).unwrap(), &[0, 2, 4]);
        assert_eq!(t.neighbors(4).unwrap(), &[0, 1]);
        assert_eq!(t.neighbors(5).unwrap(), &[2, 3]);
    }

    #[test]
    fn figure_graph_from_edge_list() {
        let edges = [(0, 1), (1, 2), (2, 3), (4, 0), (4, 1), (5, 2), (5, 3)];
        let t = Topology::from_edge_list(6, &edges).unwrap();
        assert_eq!(t, Topology::counterexample_graph());
    }

    #[test]
    fn degree_sum_is_twice_edges() {
        for t in [
            Topology::cycle(7).unwrap(),
            Topology::counterexample_graph(),
            Topology::from_edge_list(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap(),
        ] {
            let sum: usize = (0..t.node_count()).map(|v| t.degree(v).unwrap()).sum();
            assert_eq!(sum, 2 * t.edges().len());
        }
    }

    #[test]
    fn text_round_trip() {
        let t = Topology::counterexample_graph();
        let text = t.to_edge_list_text();
        let back = Topology::from_edge_list_text(&text).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn text_errors() {
        assert!(matches!(
            Topology::from_edge_list_text(""),
            Err(TopologyError::BadEdgeList(_))
        ));
        assert!(matches!(
            Topology::from_edge_list_text("3 1\n0 1\n"),
            Err(TopologyError::BadEdgeList(_))
        ));
        assert!(matches!(
            Topology::from_edge_list_text("3 2\n1 2\n"),
            Err(TopologyError::BadEdgeList(_))
        ));
    }

    #[test]
    fn neighbors_out_of_range() {
        let t = Topology::cycle(4).unwrap();
        assert_eq!(t.neighbors(4), Err(TopologyError::NodeOutOfRange(4, 4)));
    }

    #[test]
    fn degree_one_flagging() {
        let path = Topology::from_edge_list(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(path.degree_one_nodes(), vec![0, 2]);
        assert!(Topology::cycle(5).unwrap().degree_one_nodes().is_empty());
    }
}
