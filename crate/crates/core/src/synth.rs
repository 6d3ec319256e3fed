//! Synthetic attributed graphs with independent control over class homophily,
//! sensitive-attribute homophily, attribute imbalance and feature bias.
//!
//! Attributes are drawn first for every node. Structure then grows by
//! preferential attachment: each incoming node links to `m` distinct earlier
//! nodes, chosen with probability proportional to
//! `H_S[s_u][s_v] · H_C[c_u][c_v] · deg(v)`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, Labels, NodeAttributes, NodeId};
use crate::nn::Tensor;
use crate::seed::{rng_from, Rng};

const JOINT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("joint distribution entries must be nonnegative and sum to 1 (got sum {0})")]
    BadJoint(f64),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("n_nodes ({n_nodes}) must exceed edges_per_node + 1 ({m} + 1)")]
    TooFewNodes { n_nodes: usize, m: usize },
    #[error("no compatible attachment target left for incoming node {node}")]
    ZeroAttachmentWeight { node: NodeId },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Joint law P(C, S) over binary class and sensitive attribute, indexed
/// `[class][sensitive]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct JointDistribution {
    p: [[f64; 2]; 2],
}

impl TryFrom<[[f64; 2]; 2]> for JointDistribution {
    type Error = SynthError;

    fn try_from(p: [[f64; 2]; 2]) -> Result<Self, SynthError> {
        Self::new(p)
    }
}

impl From<JointDistribution> for [[f64; 2]; 2] {
    fn from(j: JointDistribution) -> Self {
        j.p
    }
}

impl JointDistribution {
    pub fn new(p: [[f64; 2]; 2]) -> Result<Self, SynthError> {
        let flat = p.iter().flatten();
        let sum: f64 = flat.clone().sum();
        if flat.clone().any(|&x| !(x >= 0.0) || !x.is_finite()) || (sum - 1.0).abs() > JOINT_TOL {
            return Err(SynthError::BadJoint(sum));
        }
        Ok(Self { p })
    }

    pub fn uniform() -> Self {
        Self { p: [[0.25; 2]; 2] }
    }

    /// Balanced marginals, but each node is 3x as likely to carry the class
    /// matching its sensitive value: P(c = s | s) = 0.75.
    pub fn skew3x() -> Self {
        Self {
            p: [[0.375, 0.125], [0.125, 0.375]],
        }
    }

    pub fn prob(&self, class: u8, sensitive: u8) -> f64 {
        self.p[class as usize][sensitive as usize]
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.p
    }

    /// Swaps the class rows (relabels class 0 <-> 1).
    pub fn with_classes_swapped(&self) -> Self {
        Self {
            p: [self.p[1], self.p[0]],
        }
    }
}

/// 2x2 compatibility matrix with `h` on the diagonal and `1 - h` off it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityMatrix {
    h: [[f64; 2]; 2],
}

impl CompatibilityMatrix {
    pub fn entry(&self, a: u8, b: u8) -> f64 {
        self.h[a as usize][b as usize]
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.h[0][0]
    }
}

pub fn build_compatibility(h_diag: f64) -> Result<CompatibilityMatrix, SynthError> {
    check_unit("h_diag", h_diag)?;
    let off = 1.0 - h_diag;
    Ok(CompatibilityMatrix {
        h: [[h_diag, off], [off, h_diag]],
    })
}

/// How a binary sensitive value becomes a feature mean offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMeans {
    /// s ∈ {0, 1} ↦ {−1, +1}: group means at ±e.
    #[default]
    Signed,
    /// s used as is: group means at 0 and e.
    Literal,
}

impl FeatureMeans {
    fn offset(self, s: u8) -> f64 {
        match self {
            FeatureMeans::Signed => 2.0 * f64::from(s) - 1.0,
            FeatureMeans::Literal => f64::from(s),
        }
    }
}

fn default_m() -> usize {
    10
}
fn default_dim() -> usize {
    2
}
fn default_std() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_nodes: usize,
    #[serde(default = "default_m")]
    pub edges_per_node: usize,
    pub h_c: f64,
    pub h_s: f64,
    #[serde(default = "JointDistribution::uniform")]
    pub joint: JointDistribution,
    pub feature_bias: f64,
    #[serde(default = "default_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_std")]
    pub feature_std: f64,
    #[serde(default)]
    pub feature_means: FeatureMeans,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_nodes: 1000,
            edges_per_node: default_m(),
            h_c: 0.5,
            h_s: 0.5,
            joint: JointDistribution::uniform(),
            feature_bias: 1.0,
            feature_dim: default_dim(),
            feature_std: default_std(),
            feature_means: FeatureMeans::Signed,
            seed: 0,
        }
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), SynthError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(SynthError::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        });
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.edges_per_node == 0 {
            return Err(SynthError::OutOfRange {
                name: "edges_per_node",
                value: 0.0,
                range: ">= 1",
            });
        }
        if self.n_nodes <= self.edges_per_node + 1 {
            return Err(SynthError::TooFewNodes {
                n_nodes: self.n_nodes,
                m: self.edges_per_node,
            });
        }
        check_unit("h_c", self.h_c)?;
        check_unit("h_s", self.h_s)?;
        check_unit("feature_bias", self.feature_bias)?;
        if self.feature_dim == 0 {
            return Err(SynthError::OutOfRange {
                name: "feature_dim",
                value: 0.0,
                range: ">= 1",
            });
        }
        if !(self.feature_std > 0.0 && self.feature_std.is_finite()) {
            return Err(SynthError::OutOfRange {
                name: "feature_std",
                value: self.feature_std,
                range: "(0, inf)",
            });
        }
        // joint is validated on construction/deserialization
        Ok(())
    }

    /// Edge count produced by [`generate`]: seed clique plus `m` per later node.
    pub fn expected_edges(&self) -> usize {
        let m = self.edges_per_node;
        m * (m + 1) / 2 + (self.n_nodes - m - 1) * m
    }
}

/// `n` i.i.d. draws of (class, sensitive) from `joint`.
pub fn sample_attributes(joint: &JointDistribution, n: usize, rng: &mut Rng) -> (Labels, Labels) {
    let cells = [(0u8, 0u8), (0, 1), (1, 0), (1, 1)];
    let mut class = Vec::with_capacity(n);
    let mut sens = Vec::with_capacity(n);
    for _ in 0..n {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        // last cell with positive mass absorbs rounding at the top end
        let mut pick = *cells
            .iter()
            .rev()
            .find(|&&(c, s)| joint.prob(c, s) > 0.0)
            .unwrap_or(&(0, 0));
        for &(c, s) in &cells {
            let p = joint.prob(c, s);
            acc += p;
            if p > 0.0 && r < acc {
                pick = (c, s);
                break;
            }
        }
        class.push(pick.0);
        sens.push(pick.1);
    }
    (
        Labels::new(class).expect("binary by construction"),
        Labels::new(sens).expect("binary by construction"),
    )
}

/// Gaussian features whose mean in every dimension is `e · offset(s_u)`.
pub fn generate_features(
    sensitive: &Labels,
    e: f64,
    dim: usize,
    std: f64,
    means: FeatureMeans,
    rng: &mut Rng,
) -> Result<Tensor, SynthError> {
    check_unit("feature_bias", e)?;
    let noise = Normal::new(0.0, std).map_err(|_| SynthError::OutOfRange {
        name: "feature_std",
        value: std,
        range: "(0, inf)",
    })?;
    let mut data = Vec::with_capacity(sensitive.len() * dim);
    for &s in sensitive.as_slice() {
        let mean = e * means.offset(s);
        for _ in 0..dim {
            data.push(mean + noise.sample(rng));
        }
    }
    Ok(Tensor::from_vec(sensitive.len(), dim, data).expect("finite gaussian draws"))
}

/// Normalized attachment probabilities of incoming node `u` over `candidates`.
pub fn attachment_weights(
    candidates: &[NodeId],
    u: NodeId,
    class: &Labels,
    sensitive: &Labels,
    h_c: &CompatibilityMatrix,
    h_s: &CompatibilityMatrix,
    degrees: &[usize],
) -> Result<Vec<f64>, SynthError> {
    let (cu, su) = (class.get(u), sensitive.get(u));
    let raw: Vec<f64> = candidates
        .iter()
        .map(|&v| h_s.entry(su, sensitive.get(v)) * h_c.entry(cu, class.get(v)) * degrees[v] as f64)
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(SynthError::ZeroAttachmentWeight { node: u });
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Draws `m` distinct indices from `weights` (unnormalized), renormalizing after
/// each draw.
fn draw_distinct(
    weights: &mut [f64],
    m: usize,
    node: NodeId,
    rng: &mut Rng,
    out: &mut Vec<usize>,
) -> Result<(), SynthError> {
    out.clear();
    for _ in 0..m {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(SynthError::ZeroAttachmentWeight { node });
        }
        let r = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if r < acc {
                break;
            }
        }
        let i = pick.expect("positive total implies a positive weight");
        weights[i] = 0.0;
        out.push(i);
    }
    Ok(())
}

pub fn generate(config: &GeneratorConfig) -> Result<(Graph, NodeAttributes), SynthError> {
    config.validate()?;
    let n = config.n_nodes;
    let m = config.edges_per_node;
    let mut rng = rng_from(config.seed);

    let (class, sensitive) = sample_attributes(&config.joint, n, &mut rng);
    let features = generate_features(
        &sensitive,
        config.feature_bias,
        config.feature_dim,
        config.feature_std,
        config.feature_means,
        &mut rng,
    )?;
    let h_c = build_compatibility(config.h_c)?;
    let h_s = build_compatibility(config.h_s)?;

    let mut edges = Vec::with_capacity(config.expected_edges());
    let mut degrees = vec![0usize; n];
    for a in 0..=m {
        for b in (a + 1)..=m {
            edges.push((a, b));
        }
        degrees[a] = m;
    }

    let (c, s) = (class.as_slice(), sensitive.as_slice());
    let mut weights = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(m);
    for u in (m + 1)..n {
        weights.clear();
        weights.extend((0..u).map(|v| {
            h_s.entry(s[u], s[v]) * h_c.entry(c[u], c[v]) * degrees[v] as f64
        }));
        draw_distinct(&mut weights, m, u, &mut rng, &mut targets)?;
        for &v in &targets {
            edges.push((v, u));
            degrees[v] += 1;
        }
        degrees[u] = m;
    }

    let graph = Graph::from_edges(n, edges)?;
    let attrs = NodeAttributes::new(class, sensitive, features)?;
    Ok((graph, attrs))
}
