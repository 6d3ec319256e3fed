//! Immutable undirected graphs in compressed sparse row form, plus binary
//! node label vectors.

use std::collections::VecDeque;

use thiserror::Error;

use crate::nn::Tensor;

pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge ({u}, {v}) references a node outside 0..{n_nodes}")]
    NodeOutOfRange { u: NodeId, v: NodeId, n_nodes: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("label value {value} at position {index} is not 0 or 1")]
    NonBinaryLabel { index: usize, value: u8 },
    #[error("label vector has length {labels} but the graph has {nodes} nodes")]
    LengthMismatch { labels: usize, nodes: usize },
}

/// Undirected simple graph.
///
/// Neighbor lists are sorted and duplicate free; every edge is stored in both
/// endpoint lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
}

impl Graph {
    /// Builds a graph from an arbitrary edge list. Edges are symmetrized and
    /// duplicates (in either orientation) collapse into one edge.
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut lists: Vec<Vec<NodeId>> = vec![Vec::new(); n_nodes];
        for (u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(GraphError::NodeOutOfRange { u, v, n_nodes });
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            lists[u].push(v);
            lists[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n_nodes + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        Ok(Self { offsets, neighbors })
    }

    pub fn empty(n_nodes: usize) -> Self {
        Self {
            offsets: vec![0; n_nodes + 1],
            neighbors: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.n_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Hop distance from `source` to every node, `None` when farther than
    /// `max_depth` or unreachable.
    pub fn bfs_distances(&self, source: NodeId, max_depth: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_nodes()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            if d == max_depth {
                continue;
            }
            for &v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Nodes within `k` hops of `u` (including `u`), sorted ascending.
    pub fn khop_nodes(&self, u: NodeId, k: usize) -> Vec<NodeId> {
        let mut seen = vec![false; self.n_nodes()];
        let mut out = Vec::new();
        self.collect_khop(u, k, &mut seen, &mut out);
        out.sort_unstable();
        for &v in &out {
            seen[v] = false;
        }
        out
    }

    /// BFS to depth `k`, marking visited nodes in `seen` and appending them to
    /// `out` in visit order. The caller owns clearing `seen` afterwards.
    pub(crate) fn collect_khop(
        &self,
        u: NodeId,
        k: usize,
        seen: &mut [bool],
        out: &mut Vec<NodeId>,
    ) {
        let start = out.len();
        seen[u] = true;
        out.push(u);
        let mut frontier = start..out.len();
        for _ in 0..k {
            let next_start = out.len();
            for i in frontier.clone() {
                let w = out[i];
                for &v in self.neighbors(w) {
                    if !seen[v] {
                        seen[v] = true;
                        out.push(v);
                    }
                }
            }
            frontier = next_start..out.len();
            if frontier.is_empty() {
                break;
            }
        }
    }

    /// Edges of the subgraph induced on all nodes within distance `k` of `u`.
    ///
    /// Returned as `(a, b)` with `a < b`, sorted.
    pub fn khop_subgraph_edges(&self, u: NodeId, k: usize) -> Vec<(NodeId, NodeId)> {
        let mut seen = vec![false; self.n_nodes()];
        let mut nodes = Vec::new();
        self.collect_khop(u, k, &mut seen, &mut nodes);
        nodes.sort_unstable();
        let mut edges = Vec::new();
        for &a in &nodes {
            for &b in self.neighbors(a) {
                if b > a && seen[b] {
                    edges.push((a, b));
                }
            }
        }
        edges
    }
}

/// Binary per-node label (class or sensitive attribute).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labels(Vec<u8>);

impl Labels {
    pub fn new(values: Vec<u8>) -> Result<Self, GraphError> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(GraphError::NonBinaryLabel { index, value });
        }
        Ok(Self(values))
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(values: I) -> Self {
        Self(values.into_iter().map(u8::from).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    /// Swaps 0 and 1 everywhere.
    pub fn flipped(&self) -> Self {
        Self(self.0.iter().map(|&v| 1 - v).collect())
    }

    pub fn check_len(&self, n_nodes: usize) -> Result<(), GraphError> {
        if self.len() != n_nodes {
            return Err(GraphError::LengthMismatch {
                labels: self.len(),
                nodes: n_nodes,
            });
        }
        Ok(())
    }
}

/// Per-node class, sensitive attribute and real feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeAttributes {
    pub class: Labels,
    pub sensitive: Labels,
    pub features: Tensor,
}

impl NodeAttributes {
    pub fn new(class: Labels, sensitive: Labels, features: Tensor) -> Result<Self, GraphError> {
        class.check_len(features.rows())?;
        sensitive.check_len(features.rows())?;
        Ok(Self {
            class,
            sensitive,
            features,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.class.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }
}
