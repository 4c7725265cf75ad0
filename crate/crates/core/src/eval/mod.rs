//! Downstream evaluation of frozen node embeddings.

pub mod kmeans;
pub mod metrics;
pub mod probe;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use kmeans::kmeans;
pub use metrics::{ari, nmi};
pub use probe::{linear_probe, probe_once, random_split, ClassificationReport, ProbeConfig, Split, SplitSpec};

use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub k: usize,
    pub nmi_mean: f64,
    pub ari_mean: f64,
    pub nmi_runs: Vec<f64>,
    pub ari_runs: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classification: Option<ClassificationReport>,
    pub clustering: Option<ClusteringReport>,
}

/// k-means runs scored against `labels` by NMI and ARI.
pub fn cluster_quality(
    z: &Tensor,
    labels: Option<&[usize]>,
    k: usize,
    runs: usize,
    seed: u64,
) -> Result<ClusteringReport> {
    let labels = labels.ok_or(Error::MissingLabels)?;
    if labels.len() != z.rows() {
        return Err(Error::shape(
            "cluster_quality",
            format!("{} labels for {} embeddings", labels.len(), z.rows()),
        ));
    }
    let assignments = kmeans(z, k, runs, seed)?;
    let nmi_runs = assignments.iter().map(|a| nmi(a, labels)).collect::<Result<Vec<_>>>()?;
    let ari_runs = assignments.iter().map(|a| ari(a, labels)).collect::<Result<Vec<_>>>()?;
    Ok(ClusteringReport {
        k,
        nmi_mean: mean_std(&nmi_runs).0,
        ari_mean: mean_std(&ari_runs).0,
        nmi_runs,
        ari_runs,
    })
}

/// Writes `id, x_0, ..., x_{D-1}` rows with 17 significant digits.
pub fn write_embeddings_csv(path: &Path, z: &Tensor) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for r in 0..z.rows() {
        let mut line = r.to_string();
        for x in z.row(r) {
            line.push_str(&format!(",{x:.16e}"));
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads the format of [`write_embeddings_csv`]; rows are placed by id.
pub fn read_embeddings_csv(path: &Path) -> Result<Tensor> {
    let raw = crate::hypergraph::read_numeric_csv(path)?;
    let (n, cols) = raw.shape();
    if cols < 2 {
        return Err(Error::Parse(format!(
            "{}: expected an id column and values",
            path.display()
        )));
    }
    let mut out = Tensor::zeros(n, cols - 1);
    let mut filled = vec![false; n];
    for r in 0..n {
        let id = raw.get(r, 0);
        if id < 0.0 || id.fract() != 0.0 || id as usize >= n || filled[id as usize] {
            return Err(Error::Parse(format!(
                "{}: bad or repeated id {id} on row {r}",
                path.display()
            )));
        }
        let id = id as usize;
        filled[id] = true;
        out.row_mut(id).copy_from_slice(&raw.row(r)[1..]);
    }
    Ok(out)
}
