//! Immutable tree model of a distribution network.
//!
//! Vertices carry dense integer ids `0..F-1`. Pipes are undirected and
//! stored with a canonical endpoint order (lower id first); signed
//! flows elsewhere in the crate are expressed relative to that
//! orientation, which turns the `q_ij = -q_ji` antisymmetry into a
//! single sign convention.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::PipeGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One pipe: canonical endpoints (lower id first) plus geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipe {
    pub endpoints: (VertexId, VertexId),
    pub geometry: PipeGeometry,
}

impl Pipe {
    /// The other endpoint of the pipe, given one of them.
    pub fn opposite(&self, v: VertexId) -> Option<VertexId> {
        if v == self.endpoints.0 {
            Some(self.endpoints.1)
        } else if v == self.endpoints.1 {
            Some(self.endpoints.0)
        } else {
            None
        }
    }
}

/// A structural defect found while validating a candidate network.
/// Violations are data, not exceptions: validation returns all of them.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewVertices { count: usize },
    UnknownEndpoint { pipe: usize, vertex: usize },
    SelfLoop { pipe: usize },
    ParallelPipe { first: usize, second: usize },
    /// `|E| != |V| - 1`; on a connected graph this means a cycle.
    WrongEdgeCount { edges: usize, vertices: usize },
    Disconnected { unreachable: Vec<usize> },
    BadGeometry { pipe: usize, reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewVertices { count } => {
                write!(f, "network needs at least 2 vertices, got {count}")
            }
            Violation::UnknownEndpoint { pipe, vertex } => {
                write!(f, "pipe {pipe} references unknown vertex {vertex}")
            }
            Violation::SelfLoop { pipe } => write!(f, "pipe {pipe} is a self-loop"),
            Violation::ParallelPipe { first, second } => {
                write!(f, "pipes {first} and {second} connect the same vertices")
            }
            Violation::WrongEdgeCount { edges, vertices } => write!(
                f,
                "{edges} pipes for {vertices} vertices (a tree needs exactly {}), so the graph contains a cycle or is disconnected",
                vertices.saturating_sub(1)
            ),
            Violation::Disconnected { unreachable } => {
                write!(f, "vertices {unreachable:?} are unreachable from vertex 0")
            }
            Violation::BadGeometry { pipe, reason } => {
                write!(f, "pipe {pipe} has invalid geometry: {reason}")
            }
        }
    }
}

/// Connected acyclic network of junctions and pipes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pipes: Vec<Pipe>,
    /// Per-vertex neighbor list, sorted by neighbor id.
    adjacency: Vec<Vec<(VertexId, EdgeId)>>,
    /// Vertices of degree 1, ascending.
    leaves: Vec<VertexId>,
}

impl Network {
    /// Builds a network from raw parts, returning every violation found
    /// when the parts do not describe a valid tree.
    pub fn new(
        vertex_count: usize,
        pipes: Vec<((usize, usize), PipeGeometry)>,
    ) -> std::result::Result<Self, Vec<Violation>> {
        let violations = Self::validate_parts(vertex_count, &pipes);
        if !violations.is_empty() {
            return Err(violations);
        }
        let pipes: Vec<Pipe> = pipes
            .into_iter()
            .map(|((a, b), geometry)| Pipe {
                endpoints: (VertexId(a.min(b)), VertexId(a.max(b))),
                geometry,
            })
            .collect();
        let mut adjacency = vec![Vec::new(); vertex_count];
        for (idx, pipe) in pipes.iter().enumerate() {
            let (a, b) = pipe.endpoints;
            adjacency[a.0].push((b, EdgeId(idx)));
            adjacency[b.0].push((a, EdgeId(idx)));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let leaves = (0..vertex_count)
            .filter(|&v| adjacency[v].len() == 1)
            .map(VertexId)
            .collect();
        Ok(Self { pipes, adjacency, leaves })
    }

    /// Assembles a network whose structural validity is guaranteed by
    /// the caller. Used when splitting a pipe at an auxiliary leak
    /// vertex, where a section may legitimately have zero length.
    pub(crate) fn from_parts_unchecked(
        vertex_count: usize,
        pipes: Vec<((usize, usize), PipeGeometry)>,
    ) -> Self {
        let pipes: Vec<Pipe> = pipes
            .into_iter()
            .map(|((a, b), geometry)| Pipe {
                endpoints: (VertexId(a.min(b)), VertexId(a.max(b))),
                geometry,
            })
            .collect();
        debug_assert_eq!(pipes.len(), vertex_count - 1);
        let mut adjacency = vec![Vec::new(); vertex_count];
        for (idx, pipe) in pipes.iter().enumerate() {
            let (a, b) = pipe.endpoints;
            adjacency[a.0].push((b, EdgeId(idx)));
            adjacency[b.0].push((a, EdgeId(idx)));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let leaves = (0..vertex_count)
            .filter(|&v| adjacency[v].len() == 1)
            .map(VertexId)
            .collect();
        Self { pipes, adjacency, leaves }
    }

    /// Checks candidate parts and reports all violations; an empty list
    /// means the parts form a valid tree with valid pipe geometry.
    pub fn validate_parts(
        vertex_count: usize,
        pipes: &[((usize, usize), PipeGeometry)],
    ) -> Vec<Violation> {
        let mut violations = Vec::new();
        if vertex_count < 2 {
            violations.push(Violation::TooFewVertices { count: vertex_count });
        }
        let mut seen = std::collections::HashMap::new();
        for (idx, ((a, b), geometry)) in pipes.iter().enumerate() {
            for v in [a, b] {
                if *v >= vertex_count {
                    violations.push(Violation::UnknownEndpoint { pipe: idx, vertex: *v });
                }
            }
            if a == b {
                violations.push(Violation::SelfLoop { pipe: idx });
            } else if let Some(first) = seen.insert((*a.min(b), *a.max(b)), idx) {
                violations.push(Violation::ParallelPipe { first, second: idx });
            }
            if let Err(e) = geometry.validate() {
                violations.push(Violation::BadGeometry { pipe: idx, reason: e.to_string() });
            }
        }
        if !violations.is_empty() {
            // Structural checks below assume well-formed endpoints.
            return violations;
        }
        if pipes.len() != vertex_count.saturating_sub(1) {
            violations.push(Violation::WrongEdgeCount {
                edges: pipes.len(),
                vertices: vertex_count,
            });
        }
        // Reachability from vertex 0; together with the edge count this
        // establishes the tree property.
        let mut adjacency = vec![Vec::new(); vertex_count];
        for ((a, b), _) in pipes {
            adjacency[*a].push(*b);
            adjacency[*b].push(*a);
        }
        let mut visited = vec![false; vertex_count.max(1)];
        let mut stack = vec![0usize];
        visited[0] = true;
        while let Some(v) = stack.pop() {
            for &n in &adjacency[v] {
                if !visited[n] {
                    visited[n] = true;
                    stack.push(n);
                }
            }
        }
        let unreachable: Vec<usize> =
            (0..vertex_count).filter(|&v| !visited[v]).collect();
        if !unreachable.is_empty() {
            violations.push(Violation::Disconnected { unreachable });
        }
        violations
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn pipe_count(&self) -> usize {
        self.pipes.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertex_count()).map(VertexId)
    }

    pub fn pipes(&self) -> impl Iterator<Item = (EdgeId, &Pipe)> {
        self.pipes.iter().enumerate().map(|(i, p)| (EdgeId(i), p))
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.0 < self.vertex_count()
    }

    pub fn pipe(&self, e: EdgeId) -> Result<&Pipe> {
        self.pipes.get(e.0).ok_or(Error::UnknownPipe(e.0))
    }

    pub fn neighbors(&self, v: VertexId) -> Result<&[(VertexId, EdgeId)]> {
        self.adjacency
            .get(v.0)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownVertex(v.0))
    }

    pub fn degree(&self, v: VertexId) -> Result<usize> {
        Ok(self.neighbors(v)?.len())
    }

    pub fn is_leaf(&self, v: VertexId) -> Result<bool> {
        Ok(self.degree(v)? == 1)
    }

    /// Leaf vertices in ascending id order. For a 2-vertex network both
    /// vertices are leaves.
    pub fn leaves(&self) -> &[VertexId] {
        &self.leaves
    }

    pub fn edge_between(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        self.adjacency
            .get(a.0)?
            .iter()
            .find(|(n, _)| *n == b)
            .map(|(_, e)| *e)
    }

    /// Parent pointers of the tree rooted at `root`, breadth-first.
    pub(crate) fn parents(&self, root: VertexId) -> Result<Vec<Option<(VertexId, EdgeId)>>> {
        if !self.contains(root) {
            return Err(Error::UnknownVertex(root.0));
        }
        let mut parent = vec![None; self.vertex_count()];
        let mut visited = vec![false; self.vertex_count()];
        visited[root.0] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &(n, e) in &self.adjacency[v.0] {
                if !visited[n.0] {
                    visited[n.0] = true;
                    parent[n.0] = Some((v, e));
                    queue.push_back(n);
                }
            }
        }
        Ok(parent)
    }

    /// The unique simple path from `a` to `b`, inclusive.
    pub fn path(&self, a: VertexId, b: VertexId) -> Result<Vec<VertexId>> {
        if !self.contains(a) {
            return Err(Error::UnknownVertex(a.0));
        }
        if !self.contains(b) {
            return Err(Error::UnknownVertex(b.0));
        }
        let parent = self.parents(a)?;
        let mut path = vec![b];
        let mut cur = b;
        while cur != a {
            let (p, _) = parent[cur.0].expect("tree is connected");
            path.push(p);
            cur = p;
        }
        path.reverse();
        Ok(path)
    }

    /// Vertices on `b`'s side when the edge `(w, b)` is removed,
    /// together with `w` itself; i.e. the subtree of `w` through
    /// neighbor `b`.
    fn subtree_through(&self, w: VertexId, b: VertexId) -> Vec<VertexId> {
        let mut members = vec![w];
        let mut visited = vec![false; self.vertex_count()];
        visited[w.0] = true;
        visited[b.0] = true;
        let mut stack = vec![b];
        while let Some(v) = stack.pop() {
            members.push(v);
            for &(n, _) in &self.adjacency[v.0] {
                if !visited[n.0] {
                    visited[n.0] = true;
                    stack.push(n);
                }
            }
        }
        members.sort_unstable();
        members
    }

    /// All subtrees of an interior vertex `w`: one entry per neighbor,
    /// each containing `w`. The vertex sets pairwise intersect exactly
    /// in `{w}` and their union is the whole vertex set.
    pub fn subtrees_at(&self, w: VertexId) -> Result<Vec<(VertexId, Vec<VertexId>)>> {
        if self.is_leaf(w)? {
            return Err(Error::NotInterior(w.0));
        }
        Ok(self
            .neighbors(w)?
            .iter()
            .map(|&(b, _)| (b, self.subtree_through(w, b)))
            .collect())
    }

    /// The leaf set `L_st` for adjacent `(s, t)`: exactly the leaves
    /// whose path to `s` does not pass through `t`. If `s` is itself a
    /// leaf it belongs to the set.
    pub fn leaf_set_between(&self, s: VertexId, t: VertexId) -> Result<Vec<VertexId>> {
        if !self.contains(s) {
            return Err(Error::UnknownVertex(s.0));
        }
        if !self.contains(t) {
            return Err(Error::UnknownVertex(t.0));
        }
        if self.edge_between(s, t).is_none() {
            return Err(Error::NotAdjacent(s.0, t.0));
        }
        let mut visited = vec![false; self.vertex_count()];
        visited[t.0] = true;
        visited[s.0] = true;
        let mut reached = vec![s];
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &(n, _) in &self.adjacency[v.0] {
                if !visited[n.0] {
                    visited[n.0] = true;
                    reached.push(n);
                    stack.push(n);
                }
            }
        }
        let mut leaves: Vec<VertexId> = reached
            .into_iter()
            .filter(|&v| self.adjacency[v.0].len() == 1)
            .collect();
        leaves.sort_unstable();
        Ok(leaves)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> PipeGeometry {
        PipeGeometry::new(100.0, 0.3, 1e-4, 0.0).unwrap()
    }

    fn path_network(n: usize) -> Network {
        let pipes = (0..n - 1).map(|i| ((i, i + 1), geom())).collect();
        Network::new(n, pipes).unwrap()
    }

    /// Star with center 0 and leaves 1..=k.
    fn star_network(k: usize) -> Network {
        let pipes = (1..=k).map(|i| ((0, i), geom())).collect();
        Network::new(k + 1, pipes).unwrap()
    }

    #[test]
    fn accepts_path_graph() {
        let net = path_network(3);
        assert_eq!(net.vertex_count(), 3);
        assert_eq!(net.leaves(), &[VertexId(0), VertexId(2)]);
    }

    #[test]
    fn rejects_cycle() {
        let pipes = vec![((0, 1), geom()), ((1, 2), geom()), ((2, 0), geom())];
        let violations = Network::new(3, pipes).unwrap_err();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::WrongEdgeCount { .. })));
    }

    #[test]
    fn rejects_disconnected() {
        let pipes = vec![((0, 1), geom()), ((2, 3), geom()), ((0, 4), geom())];
        let violations = Network::new(5, pipes).unwrap_err();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::Disconnected { .. })));
    }

    #[test]
    fn rejects_self_loop_parallel_and_bad_geometry() {
        let bad = PipeGeometry { length: -1.0, diameter: 0.3, roughness: 0.0, minor_loss: 0.0 };
        let pipes = vec![((0, 0), geom()), ((0, 1), geom()), ((1, 0), geom()), ((1, 2), bad)];
        let violations = Network::new(3, pipes).unwrap_err();
        assert!(violations.iter().any(|v| matches!(v, Violation::SelfLoop { .. })));
        assert!(violations.iter().any(|v| matches!(v, Violation::ParallelPipe { .. })));
        assert!(violations.iter().any(|v| matches!(v, Violation::BadGeometry { .. })));
    }

    #[test]
    fn two_vertex_network_has_two_leaves() {
        let net = path_network(2);
        assert_eq!(net.leaves(), &[VertexId(0), VertexId(1)]);
    }

    #[test]
    fn path_endpoints_and_trivial_case() {
        let net = star_network(2); // 1 - 0 - 2
        assert_eq!(net.path(VertexId(1), VertexId(1)).unwrap(), vec![VertexId(1)]);
        assert_eq!(
            net.path(VertexId(1), VertexId(2)).unwrap(),
            vec![VertexId(1), VertexId(0), VertexId(2)]
        );
    }

    #[test]
    fn path_unknown_vertex_errors() {
        let net = path_network(3);
        assert!(matches!(net.path(VertexId(0), VertexId(9)), Err(Error::UnknownVertex(9))));
    }

    #[test]
    fn subtrees_of_path_center() {
        let net = path_network(3);
        let subtrees = net.subtrees_at(VertexId(1)).unwrap();
        assert_eq!(subtrees.len(), 2);
        assert_eq!(subtrees[0], (VertexId(0), vec![VertexId(0), VertexId(1)]));
        assert_eq!(subtrees[1], (VertexId(2), vec![VertexId(1), VertexId(2)]));
    }

    #[test]
    fn subtrees_reject_leaf_pivot() {
        let net = path_network(3);
        assert!(matches!(net.subtrees_at(VertexId(0)), Err(Error::NotInterior(0))));
    }

    #[test]
    fn leaf_set_on_path() {
        let net = path_network(3);
        assert_eq!(
            net.leaf_set_between(VertexId(1), VertexId(2)).unwrap(),
            vec![VertexId(0)]
        );
        assert_eq!(
            net.leaf_set_between(VertexId(1), VertexId(0)).unwrap(),
            vec![VertexId(2)]
        );
    }

    #[test]
    fn leaf_set_on_star() {
        let net = star_network(3);
        assert_eq!(
            net.leaf_set_between(VertexId(0), VertexId(1)).unwrap(),
            vec![VertexId(2), VertexId(3)]
        );
        // s itself a leaf: path(1, 1) avoids 0, so L_{1,0} = {1}.
        assert_eq!(
            net.leaf_set_between(VertexId(1), VertexId(0)).unwrap(),
            vec![VertexId(1)]
        );
    }

    #[test]
    fn leaf_set_requires_adjacency() {
        let net = path_network(4);
        assert!(matches!(
            net.leaf_set_between(VertexId(0), VertexId(2)),
            Err(Error::NotAdjacent(0, 2))
        ));
    }
}
