//! On-disk graph bundle: `edges.tsv`, `nodes.csv` and `meta.json` in one
//! directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, Labels, NodeAttributes};
use crate::nn::Tensor;
use crate::synth::GeneratorConfig;

pub const EDGES_FILE: &str = "edges.tsv";
pub const NODES_FILE: &str = "nodes.csv";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub n_nodes: usize,
    pub n_edges: usize,
    /// Free-form origin, e.g. `synthetic` or the ingested file names.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    pub graph: Graph,
    pub attrs: NodeAttributes,
    pub meta: BundleMeta,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn edges_tsv(g: &Graph) -> String {
    let mut out = String::with_capacity(g.n_edges() * 10);
    for (u, v) in g.edges() {
        let _ = writeln!(out, "{u}\t{v}");
    }
    out
}

pub fn nodes_csv(attrs: &NodeAttributes) -> String {
    let mut out = String::from("id,class,sensitive");
    for j in 0..attrs.feature_dim() {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for u in 0..attrs.n_nodes() {
        let _ = write!(out, "{u},{},{}", attrs.class.get(u), attrs.sensitive.get(u));
        for x in attrs.features.row(u) {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

impl GraphBundle {
    pub fn new(graph: Graph, attrs: NodeAttributes, provenance: impl Into<String>) -> Self {
        let meta = BundleMeta {
            n_nodes: graph.n_nodes(),
            n_edges: graph.n_edges(),
            provenance: provenance.into(),
            generator: None,
        };
        Self { graph, attrs, meta }
    }

    pub fn write(&self, dir: &Path) -> Result<(), BundleError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let put = |name: &str, body: String| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io_err(&path))
        };
        put(EDGES_FILE, edges_tsv(&self.graph))?;
        put(NODES_FILE, nodes_csv(&self.attrs))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        put(META_FILE, meta + "\n")
    }

    pub fn read(dir: &Path) -> Result<Self, BundleError> {
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: BundleMeta = serde_json::from_str(&text).map_err(|e| BundleError::Parse {
            path: meta_path.clone(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        let attrs = read_nodes(&dir.join(NODES_FILE))?;
        if attrs.n_nodes() != meta.n_nodes {
            return Err(BundleError::Invalid {
                path: meta_path,
                msg: format!("n_nodes {} but nodes.csv has {} rows", meta.n_nodes, attrs.n_nodes()),
            });
        }
        let graph = read_edges(&dir.join(EDGES_FILE), meta.n_nodes)?;
        Ok(Self { graph, attrs, meta })
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    what: &str,
    raw: &str,
) -> Result<T, BundleError> {
    raw.trim().parse().map_err(|_| BundleError::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad {what} '{raw}'"),
    })
}

fn csv_err(path: &Path, e: csv::Error) -> BundleError {
    let line = e.position().map_or(0, |p| p.line());
    BundleError::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

fn read_edges(path: &Path, n_nodes: usize) -> Result<Graph, BundleError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut edges = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(BundleError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 2 columns, got {}", rec.len()),
            });
        }
        let u: usize = parse_field(path, line, "node id", &rec[0])?;
        let v: usize = parse_field(path, line, "node id", &rec[1])?;
        if u >= n_nodes || v >= n_nodes || u == v {
            return Err(BundleError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("edge ({u}, {v}) is a self-loop or outside 0..{n_nodes}"),
            });
        }
        edges.push((u, v));
    }
    Ok(Graph::from_edges(n_nodes, edges)?)
}

fn read_nodes(path: &Path) -> Result<NodeAttributes, BundleError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "class" || &headers[2] != "sensitive" {
        return Err(BundleError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "header must start with id,class,sensitive".into(),
        });
    }
    let dim = headers.len() - 3;
    let (mut class, mut sens, mut feats) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id: usize = parse_field(path, line, "id", &rec[0])?;
        if id != class.len() {
            return Err(BundleError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("ids must be 0..n in order, found {id} at row {}", class.len()),
            });
        }
        class.push(parse_field::<u8>(path, line, "class", &rec[1])?);
        sens.push(parse_field::<u8>(path, line, "sensitive", &rec[2])?);
        for j in 0..dim {
            feats.push(parse_field::<f64>(path, line, "feature", &rec[3 + j])?);
        }
    }
    let n = class.len();
    let features = Tensor::from_vec(n, dim, feats).map_err(|e| BundleError::Invalid {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(NodeAttributes::new(Labels::new(class)?, Labels::new(sens)?, features)?)
}
