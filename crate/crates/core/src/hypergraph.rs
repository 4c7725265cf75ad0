//! Immutable hypergraph storage, degrees and dataset loading.
//!
//! Incidence is kept as two adjacency lists, hyperedge → members and
//! node → incident hyperedges, which are transposes of each other.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Hypergraph {
    num_nodes: usize,
    features: Tensor,
    edge_nodes: Vec<Vec<usize>>,
    node_edges: Vec<Vec<usize>>,
    weights: Vec<f64>,
    labels: Option<Vec<usize>>,
    num_classes: Option<usize>,
}

/// Node degrees `d(v) = Σ_e w_e h_ve` and hyperedge sizes `δ(e)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeVectors {
    pub node_degrees: Vec<f64>,
    pub hyperedge_degrees: Vec<usize>,
}

impl Hypergraph {
    /// Validates and builds a hypergraph. Missing weights default to 1.
    pub fn new(
        num_nodes: usize,
        features: Tensor,
        hyperedges: Vec<Vec<usize>>,
        weights: Option<Vec<f64>>,
        labels: Option<Vec<usize>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::FeatureRowMismatch {
                rows: features.rows(),
                num_nodes,
            });
        }
        if !features.all_finite() {
            return Err(Error::NonFinite("node features".into()));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; hyperedges.len()]);
        if weights.len() != hyperedges.len() {
            return Err(Error::Parse(format!(
                "{} weights for {} hyperedges",
                weights.len(),
                hyperedges.len()
            )));
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidWeight { index, value });
        }
        let mut node_edges = vec![Vec::new(); num_nodes];
        let mut seen = vec![usize::MAX; num_nodes];
        for (j, members) in hyperedges.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyHyperedge(j));
            }
            for &v in members {
                if v >= num_nodes {
                    return Err(Error::NodeOutOfRange { id: v, num_nodes });
                }
                if seen[v] == j {
                    return Err(Error::DuplicateMember { edge: j, node: v });
                }
                seen[v] = j;
                node_edges[v].push(j);
            }
        }
        let num_classes = match (&labels, num_classes) {
            (Some(l), declared) => {
                if l.len() != num_nodes {
                    return Err(Error::Parse(format!("{} labels for {num_nodes} nodes", l.len())));
                }
                let inferred = l.iter().max().map_or(0, |m| m + 1);
                match declared {
                    Some(k) if k < inferred => {
                        return Err(Error::Parse(format!("label {} exceeds num_classes {k}", inferred - 1)))
                    }
                    Some(k) => Some(k),
                    None => Some(inferred),
                }
            }
            (None, declared) => declared,
        };
        Ok(Self {
            num_nodes,
            features,
            edge_nodes: hyperedges,
            node_edges,
            weights,
            labels,
            num_classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_hyperedges(&self) -> usize {
        self.edge_nodes.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.edge_nodes
    }

    pub fn hyperedge(&self, j: usize) -> &[usize] {
        &self.edge_nodes[j]
    }

    pub fn node_hyperedges(&self, v: usize) -> &[usize] {
        &self.node_edges[v]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn num_memberships(&self) -> usize {
        self.edge_nodes.iter().map(Vec::len).sum()
    }

    pub fn degrees(&self) -> DegreeVectors {
        compute_degrees(self.num_nodes, &self.edge_nodes, &self.weights)
    }

    /// Serializes to the JSON dataset format.
    pub fn to_json(&self) -> String {
        let doc = JsonDataset {
            num_nodes: self.num_nodes,
            features: (0..self.num_nodes).map(|r| self.features.row(r).to_vec()).collect(),
            hyperedges: self.edge_nodes.clone(),
            weights: Some(self.weights.clone()),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        };
        serde_json::to_string(&doc).expect("dataset serializes")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Degrees of an arbitrary incidence structure over `num_nodes` nodes.
pub fn compute_degrees(num_nodes: usize, hyperedges: &[Vec<usize>], weights: &[f64]) -> DegreeVectors {
    let mut node_degrees = vec![0.0; num_nodes];
    for (members, &w) in hyperedges.iter().zip(weights) {
        for &v in members {
            node_degrees[v] += w;
        }
    }
    DegreeVectors {
        node_degrees,
        hyperedge_degrees: hyperedges.iter().map(Vec::len).collect(),
    }
}

/// On-disk dataset layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Single JSON document.
    Json,
    /// Directory with `features.csv`, `hyperedges.txt` and optionally
    /// `labels.csv`.
    TwoFile,
}

impl DatasetFormat {
    /// Directories are read as two-file datasets, everything else as JSON.
    pub fn detect(path: impl AsRef<Path>) -> Self {
        if path.as_ref().is_dir() {
            DatasetFormat::TwoFile
        } else {
            DatasetFormat::Json
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    num_nodes: usize,
    features: Vec<Vec<f64>>,
    hyperedges: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
}

pub fn load_hypergraph(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Hypergraph> {
    let path = path.as_ref();
    match format {
        DatasetFormat::Json => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_json(&text)
        }
        DatasetFormat::TwoFile => {
            let labels = path.join("labels.csv");
            load_two_file(
                path.join("features.csv"),
                path.join("hyperedges.txt"),
                labels.exists().then_some(labels),
            )
        }
    }
}

pub fn parse_json(text: &str) -> Result<Hypergraph> {
    let doc: JsonDataset = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let features = if doc.features.is_empty() {
        Tensor::zeros(0, 0)
    } else {
        Tensor::from_rows(&doc.features).map_err(|e| Error::Parse(e.to_string()))?
    };
    Hypergraph::new(
        doc.num_nodes,
        features,
        doc.hyperedges,
        doc.weights,
        doc.labels,
        doc.num_classes,
    )
}

/// Reads the two-file layout: a headerless numeric CSV with one row per
/// node, a text file with one whitespace-separated hyperedge per line, and an
/// optional one-column CSV of integer labels.
pub fn load_two_file(features: PathBuf, hyperedges: PathBuf, labels: Option<PathBuf>) -> Result<Hypergraph> {
    let features = read_numeric_csv(&features)?;
    let num_nodes = features.rows();
    let text = fs::read_to_string(&hyperedges).map_err(|e| Error::io(&hyperedges, e))?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let members = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("hyperedges line {}: {tok:?}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        edges.push(members);
    }
    let labels = match labels {
        Some(p) => {
            let t = read_numeric_csv(&p)?;
            if t.cols() != 1 {
                return Err(Error::Parse(format!("{} must have one column", p.display())));
            }
            Some(
                t.as_slice()
                    .iter()
                    .map(|&x| {
                        if x >= 0.0 && x.fract() == 0.0 {
                            Ok(x as usize)
                        } else {
                            Err(Error::Parse(format!("label {x} is not a class id")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        None => None,
    };
    Hypergraph::new(num_nodes, features, edges, None, labels, None)
}

pub(crate) fn read_numeric_csv(path: &Path) -> Result<Tensor> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{} row {}: {f:?}: {e}", path.display(), i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Tensor::from_rows(&rows).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}
