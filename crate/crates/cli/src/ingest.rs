//! Loading real datasets: an edge list plus a per-node attribute table with
//! arbitrary node ids.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hetfair_core::bundle::GraphBundle;
use hetfair_core::nn::Tensor;
use hetfair_core::{Graph, GraphError, Labels, NodeAttributes};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
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
    #[error("{path}:{line}: edge endpoint '{id}' has no attribute row")]
    DanglingEndpoint { path: PathBuf, line: u64, id: String },
    #[error("{path}:{line}: column '{column}' has non-binary value '{value}'")]
    NonBinary {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}: missing column '{column}'")]
    MissingColumn { path: PathBuf, column: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub id_col: String,
    pub class_col: String,
    pub sens_col: String,
    /// Empty selects every column other than id, class and sensitive.
    pub feature_cols: Vec<String>,
    /// Maps class values `> t` to 1 and the rest to 0.
    pub class_threshold: Option<f64>,
    pub sens_threshold: Option<f64>,
    /// Skip the first line of the edge file.
    pub edges_header: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            id_col: "user_id".into(),
            class_col: "class".into(),
            sens_col: "sensitive".into(),
            feature_cols: Vec::new(),
            class_threshold: None,
            sens_threshold: None,
            edges_header: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub bundle: GraphBundle,
    /// Original id of each contiguous node index.
    pub id_map: Vec<String>,
    pub self_loops_dropped: usize,
    /// Edge lines that repeated an already seen edge, in either direction.
    pub duplicate_edges: usize,
}

impl Ingested {
    pub fn id_map_csv(&self) -> String {
        let mut out = String::from("node_id,original_id\n");
        for (i, id) in self.id_map.iter().enumerate() {
            let _ = writeln!(out, "{i},{id}");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        self.bundle.write(dir)?;
        fs::write(dir.join("id_map.csv"), self.id_map_csv())?;
        Ok(())
    }
}

fn binary(
    raw: &str,
    threshold: Option<f64>,
    path: &Path,
    line: u64,
    column: &str,
) -> Result<u8, IngestError> {
    let non_binary = || IngestError::NonBinary {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        value: raw.to_string(),
    };
    let v: f64 = raw.trim().parse().map_err(|_| non_binary())?;
    match threshold {
        Some(t) => Ok(u8::from(v > t)),
        None if v == 0.0 => Ok(0),
        None if v == 1.0 => Ok(1),
        None => Err(non_binary()),
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

fn csv_err(path: &Path, e: csv::Error) -> IngestError {
    IngestError::Parse {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line()),
        msg: e.to_string(),
    }
}

struct Nodes {
    index: HashMap<String, usize>,
    ids: Vec<String>,
    attrs: NodeAttributes,
}

fn read_nodes(path: &Path, opts: &IngestOptions) -> Result<Nodes, IngestError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let id_at = column(&headers, &opts.id_col, path)?;
    let class_at = column(&headers, &opts.class_col, path)?;
    let sens_at = column(&headers, &opts.sens_col, path)?;
    let feature_at: Vec<usize> = if opts.feature_cols.is_empty() {
        (0..headers.len())
            .filter(|i| ![id_at, class_at, sens_at].contains(i))
            .collect()
    } else {
        opts.feature_cols
            .iter()
            .map(|c| column(&headers, c, path))
            .collect::<Result<_, _>>()?
    };

    let mut index = HashMap::new();
    let mut ids = Vec::new();
    let (mut class, mut sens, mut feats) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[id_at].trim().to_string();
        if index.insert(id.clone(), ids.len()).is_some() {
            return Err(IngestError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("duplicate node id '{id}'"),
            });
        }
        ids.push(id);
        class.push(binary(&rec[class_at], opts.class_threshold, path, line, &opts.class_col)?);
        sens.push(binary(&rec[sens_at], opts.sens_threshold, path, line, &opts.sens_col)?);
        for &j in &feature_at {
            let v: f64 = rec[j].trim().parse().map_err(|_| IngestError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("feature column '{}' has non-numeric value '{}'", &headers[j], &rec[j]),
            })?;
            feats.push(v);
        }
    }
    let n = ids.len();
    let features = Tensor::from_vec(n, feature_at.len(), feats).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    let attrs = NodeAttributes::new(Labels::new(class)?, Labels::new(sens)?, features)?;
    Ok(Nodes { index, ids, attrs })
}

pub fn ingest(edges: &Path, nodes: &Path, opts: &IngestOptions) -> Result<Ingested, IngestError> {
    let Nodes { index, ids, attrs } = read_nodes(nodes, opts)?;
    let text = fs::read_to_string(edges).map_err(|source| IngestError::Io {
        path: edges.to_path_buf(),
        source,
    })?;
    let mut list = Vec::new();
    let mut self_loops_dropped = 0;
    let skip = usize::from(opts.edges_header);
    for (i, raw) in text.lines().enumerate().skip(skip) {
        let line = i as u64 + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') || raw.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = raw
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() < 2 {
            return Err(IngestError::Parse {
                path: edges.to_path_buf(),
                line,
                msg: format!("expected two node ids, got '{raw}'"),
            });
        }
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| IngestError::DanglingEndpoint {
                path: edges.to_path_buf(),
                line,
                id: id.to_string(),
            })
        };
        let (u, v) = (lookup(parts[0])?, lookup(parts[1])?);
        if u == v {
            self_loops_dropped += 1;
        } else {
            list.push((u.min(v), u.max(v)));
        }
    }
    let lines = list.len();
    let graph = Graph::from_edges(ids.len(), list)?;
    let provenance = format!("ingested from {} and {}", edges.display(), nodes.display());
    Ok(Ingested {
        duplicate_edges: lines - graph.n_edges(),
        bundle: GraphBundle::new(graph, attrs, provenance),
        id_map: ids,
        self_loops_dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn opts() -> IngestOptions {
        IngestOptions {
            id_col: "id".into(),
            ..IngestOptions::default()
        }
    }

    #[test]
    fn sparse_ids_are_reindexed() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(dir.path(), "n.csv", "id,class,sensitive,age\n10,1,0,3.5\n7,0,1,2\n99,1,1,0\n");
        let edges = write(dir.path(), "e.txt", "10 7\n7\t99\n99,10\n10 7\n7 10\n99 99\n");
        let out = ingest(&edges, &nodes, &opts()).unwrap();
        assert_eq!(out.id_map, vec!["10", "7", "99"]);
        assert_eq!(out.bundle.graph.n_edges(), 3);
        assert_eq!(out.duplicate_edges, 2);
        assert_eq!(out.self_loops_dropped, 1);
        assert_eq!(out.bundle.attrs.features.row(0), &[3.5]);
        assert!(out.id_map_csv().contains("\n2,99\n"));
    }

    #[test]
    fn dangling_endpoint_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(dir.path(), "n.csv", "id,class,sensitive\na,1,0\nb,0,1\n");
        let edges = write(dir.path(), "e.txt", "a b\n\nb zz\n");
        let err = ingest(&edges, &nodes, &opts()).unwrap_err();
        assert!(matches!(err, IngestError::DanglingEndpoint { line: 3, .. }), "{err}");
    }

    #[test]
    fn non_binary_labels_need_a_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(dir.path(), "n.csv", "id,class,sensitive\na,2,0\nb,-1,1\n");
        let edges = write(dir.path(), "e.txt", "a b\n");
        let err = ingest(&edges, &nodes, &opts()).unwrap_err();
        assert!(matches!(err, IngestError::NonBinary { line: 2, .. }), "{err}");
        let o = IngestOptions {
            class_threshold: Some(0.0),
            ..opts()
        };
        let out = ingest(&edges, &nodes, &o).unwrap();
        assert_eq!(out.bundle.attrs.class.as_slice(), &[1, 0]);
    }

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(dir.path(), "n.csv", "id,label,sensitive\na,1,0\n");
        let edges = write(dir.path(), "e.txt", "");
        assert!(matches!(
            ingest(&edges, &nodes, &opts()),
            Err(IngestError::MissingColumn { .. })
        ));
    }
}
