//! Edge homophily ratios: global over the whole edge set, and local over the
//! subgraph induced by each node's k-hop neighborhood.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, Labels, NodeId};

/// Hop radii covered by a [`LocalHomophilyProfile`].
pub const PROFILE_HOPS: [usize; 2] = [1, 2];

/// Absorbs representation error so that e.g. 0.6 / 0.2 lands in bin 3.
const BIN_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomophilyError {
    #[error("graph has no edges; homophily is undefined")]
    NoEdges,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("bin width {0} is outside (0, 1]")]
    BadBinWidth(f64),
    #[error("hop radius {0} is not covered by the profile (expected 1 or 2)")]
    UnsupportedHop(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Class,
    Sensitive,
}

/// Fraction of edges whose endpoints share a label.
pub fn global_homophily(g: &Graph, labels: &Labels) -> Result<f64, HomophilyError> {
    labels.check_len(g.n_nodes())?;
    if g.n_edges() == 0 {
        return Err(HomophilyError::NoEdges);
    }
    let matching = g
        .edges()
        .filter(|&(u, v)| labels.get(u) == labels.get(v))
        .count();
    Ok(matching as f64 / g.n_edges() as f64)
}

/// Homophily of the k-hop induced subgraph around `u`; `None` when that
/// subgraph has no edges.
pub fn local_homophily(
    g: &Graph,
    labels: &Labels,
    u: NodeId,
    k: usize,
) -> Result<Option<f64>, HomophilyError> {
    labels.check_len(g.n_nodes())?;
    let mut scratch = Scratch::new(g.n_nodes());
    let counts = scratch.count(g, u, k, labels.as_slice(), labels.as_slice());
    Ok(counts[0].ratio())
}

#[derive(Debug, Clone, Copy, Default)]
struct EdgeCount {
    matching: usize,
    total: usize,
}

impl EdgeCount {
    fn ratio(self) -> Option<f64> {
        (self.total > 0).then(|| self.matching as f64 / self.total as f64)
    }
}

/// Reusable BFS buffers; one per worker.
struct Scratch {
    depth: Vec<u8>,
    visited: Vec<NodeId>,
}

const UNSEEN: u8 = u8::MAX;

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            depth: vec![UNSEEN; n],
            visited: Vec::new(),
        }
    }

    /// BFS to `max_k` from `u`, then counts induced edges for every radius
    /// `1..=max_k` at once. Entry `r - 1` holds the `[a, b]` counts for radius `r`.
    fn count_all(
        &mut self,
        g: &Graph,
        u: NodeId,
        max_k: usize,
        a: &[u8],
        b: &[u8],
    ) -> Vec<[EdgeCount; 2]> {
        self.visited.clear();
        self.depth[u] = 0;
        self.visited.push(u);
        let mut frontier = 0..1;
        for d in 1..=max_k {
            let next = self.visited.len();
            for i in frontier.clone() {
                let w = self.visited[i];
                for &v in g.neighbors(w) {
                    if self.depth[v] == UNSEEN {
                        self.depth[v] = d as u8;
                        self.visited.push(v);
                    }
                }
            }
            frontier = next..self.visited.len();
        }

        let mut out = vec![[EdgeCount::default(); 2]; max_k];
        for &x in &self.visited {
            let dx = self.depth[x];
            for &y in g.neighbors(x) {
                let dy = self.depth[y];
                if y <= x || dy == UNSEEN {
                    continue;
                }
                // edge belongs to every radius covering both endpoints
                let needed = dx.max(dy) as usize;
                let same_a = a[x] == a[y];
                let same_b = b[x] == b[y];
                for slot in out.iter_mut().skip(needed.saturating_sub(1)) {
                    slot[0].total += 1;
                    slot[0].matching += usize::from(same_a);
                    slot[1].total += 1;
                    slot[1].matching += usize::from(same_b);
                }
            }
        }
        for &x in &self.visited {
            self.depth[x] = UNSEEN;
        }
        out
    }

    fn count(&mut self, g: &Graph, u: NodeId, k: usize, a: &[u8], b: &[u8]) -> [EdgeCount; 2] {
        if k == 0 {
            return [EdgeCount::default(); 2];
        }
        self.count_all(g, u, k, a, b)[k - 1]
    }
}

/// Per-node local class and sensitive homophily for k = 1 and k = 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalHomophilyProfile {
    class: [Vec<Option<f64>>; 2],
    sens: [Vec<Option<f64>>; 2],
}

fn hop_slot(k: usize) -> Result<usize, HomophilyError> {
    match k {
        1 | 2 => Ok(k - 1),
        other => Err(HomophilyError::UnsupportedHop(other)),
    }
}

impl LocalHomophilyProfile {
    pub fn n_nodes(&self) -> usize {
        self.class[0].len()
    }

    pub fn class_hom(&self, u: NodeId, k: usize) -> Result<Option<f64>, HomophilyError> {
        Ok(self.class[hop_slot(k)?][u])
    }

    pub fn sens_hom(&self, u: NodeId, k: usize) -> Result<Option<f64>, HomophilyError> {
        Ok(self.sens[hop_slot(k)?][u])
    }

    pub fn values(&self, which: Attribute, k: usize) -> Result<&[Option<f64>], HomophilyError> {
        let slot = hop_slot(k)?;
        Ok(match which {
            Attribute::Class => &self.class[slot],
            Attribute::Sensitive => &self.sens[slot],
        })
    }
}

/// Computes the local profile for every node. Parallel over nodes; the result
/// does not depend on scheduling.
pub fn homophily_profile(
    g: &Graph,
    class: &Labels,
    sens: &Labels,
) -> Result<LocalHomophilyProfile, HomophilyError> {
    class.check_len(g.n_nodes())?;
    sens.check_len(g.n_nodes())?;
    let (c, s) = (class.as_slice(), sens.as_slice());
    let per_node: Vec<Vec<[EdgeCount; 2]>> = (0..g.n_nodes())
        .into_par_iter()
        .map_init(
            || Scratch::new(g.n_nodes()),
            |scratch, u| scratch.count_all(g, u, 2, c, s),
        )
        .collect();
    let mut profile = LocalHomophilyProfile {
        class: [Vec::with_capacity(g.n_nodes()), Vec::with_capacity(g.n_nodes())],
        sens: [Vec::with_capacity(g.n_nodes()), Vec::with_capacity(g.n_nodes())],
    };
    for counts in per_node {
        for slot in 0..2 {
            profile.class[slot].push(counts[slot][0].ratio());
            profile.sens[slot].push(counts[slot][1].ratio());
        }
    }
    Ok(profile)
}

/// Number of bins of width `w` needed to cover [0, 1].
pub fn bin_count(width: f64) -> usize {
    ((1.0 / width) - BIN_EPS).ceil().max(1.0) as usize
}

/// Bin index for a ratio in [0, 1]; the top bin is closed so 1.0 lands in it.
pub fn bin_index(h: f64, width: f64) -> usize {
    let n = bin_count(width);
    ((h / width + BIN_EPS).floor() as usize).min(n - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// `(lo, hi)` per bin.
    pub bins: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
    pub undefined_count: usize,
}

impl Histogram {
    pub fn defined_total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (&(lo, hi), c) in self.bins.iter().zip(&self.counts) {
            out.push_str(&format!("{lo},{hi},{c}\n"));
        }
        out.push_str(&format!("undefined_count,,{}\n", self.undefined_count));
        out
    }
}

pub fn homophily_histogram(
    profile: &LocalHomophilyProfile,
    which: Attribute,
    k: usize,
    bin_width: f64,
) -> Result<Histogram, HomophilyError> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(HomophilyError::BadBinWidth(bin_width));
    }
    let values = profile.values(which, k)?;
    let n_bins = bin_count(bin_width);
    let bins = (0..n_bins)
        .map(|i| {
            let lo = round_edge(i as f64 * bin_width);
            let hi = round_edge(((i + 1) as f64 * bin_width).min(1.0));
            (lo, hi)
        })
        .collect();
    let mut counts = vec![0; n_bins];
    let mut undefined_count = 0;
    for v in values {
        match v {
            Some(h) => counts[bin_index(*h, bin_width)] += 1,
            None => undefined_count += 1,
        }
    }
    Ok(Histogram {
        bin_width,
        bins,
        counts,
        undefined_count,
    })
}

/// Trims float noise from bin edges (0.6000000000000001 -> 0.6).
pub(crate) fn round_edge(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}
