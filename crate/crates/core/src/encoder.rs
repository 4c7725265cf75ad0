//! Mean-pooling hypergraph encoder.
//!
//! Each layer first pools node states into hyperedges and then hyperedge
//! states back into nodes:
//!
//! ```text
//! Z_E = prelu(De⁻¹ Hᵀ Z_V Θ_E)
//! Z_V = prelu(Dv⁻¹ H W Z_E Θ_V)
//! ```
//!
//! Zero-degree rows of `De⁻¹` and `Dv⁻¹` are zero, so a hyperedge emptied by
//! masking (or an isolated node) gets an all-zero pre-activation.
//!
//! With `self_loops` enabled the encoder appends one singleton hyperedge per
//! node before pooling and drops those rows from the returned hyperedge
//! embeddings. Without it, nodes outside every hyperedge always encode to
//! zero.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::HypergraphView;
use crate::diff::{CsrMatrix, Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hypergraph::{compute_degrees, Hypergraph};

/// Initial PReLU slope.
pub const PRELU_INIT: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// input_dim x D
    pub theta_e: Tensor,
    /// D x D
    pub theta_v: Tensor,
    pub slope_e: f64,
    pub slope_v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub layers: Vec<LayerParams>,
    pub self_loops: bool,
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::from_vec(fan_in, fan_out, data).expect("shape matches data")
}

impl EncoderParams {
    pub fn init<R: Rng>(
        input_dim: usize,
        dim: usize,
        num_layers: usize,
        self_loops: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 || num_layers == 0 {
            return Err(Error::InvalidArgument(format!(
                "encoder needs D >= 1 and L >= 1 (got D = {dim}, L = {num_layers})"
            )));
        }
        let layers = (0..num_layers)
            .map(|l| {
                let fan_in = if l == 0 { input_dim } else { dim };
                LayerParams {
                    theta_e: glorot_uniform(fan_in, dim, rng),
                    theta_v: glorot_uniform(dim, dim, rng),
                    slope_e: PRELU_INIT,
                    slope_v: PRELU_INIT,
                }
            })
            .collect();
        Ok(Self { layers, self_loops })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].theta_e.rows()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].theta_e.cols()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Checks that the weight shapes chain from `input_dim` through `D`.
    pub fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::InvalidArgument("encoder has no layers".into()))?;
        let d = first.theta_e.cols();
        for (l, layer) in self.layers.iter().enumerate() {
            let fan_in = if l == 0 { first.theta_e.rows() } else { d };
            if layer.theta_e.shape() != (fan_in, d) || layer.theta_v.shape() != (d, d) {
                return Err(Error::shape(
                    "EncoderParams",
                    format!(
                        "layer {l}: theta_e {:?}, theta_v {:?}, expected ({fan_in}, {d}) and ({d}, {d})",
                        layer.theta_e.shape(),
                        layer.theta_v.shape()
                    ),
                ));
            }
            let finite = layer.theta_e.all_finite()
                && layer.theta_v.all_finite()
                && layer.slope_e.is_finite()
                && layer.slope_v.is_finite();
            if !finite {
                return Err(Error::NonFinite(format!("encoder layer {l} parameters")));
            }
        }
        Ok(())
    }

    /// Puts every parameter on the tape as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            layers: self
                .layers
                .iter()
                .map(|p| LayerVars {
                    theta_e: tape.param(p.theta_e.clone()),
                    theta_v: tape.param(p.theta_v.clone()),
                    slope_e: tape.param(Tensor::scalar(p.slope_e)),
                    slope_v: tape.param(Tensor::scalar(p.slope_v)),
                })
                .collect(),
        }
    }

    /// Flat list of parameter tensors in a fixed order: per layer
    /// `theta_e, theta_v, slope_e, slope_v`.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|p| {
                [
                    p.theta_e.clone(),
                    p.theta_v.clone(),
                    Tensor::scalar(p.slope_e),
                    Tensor::scalar(p.slope_v),
                ]
            })
            .collect()
    }

    /// Inverse of [`EncoderParams::tensors`].
    pub fn set_tensors(&mut self, tensors: &[Tensor]) -> Result<()> {
        if tensors.len() != 4 * self.layers.len() {
            return Err(Error::shape(
                "EncoderParams::set_tensors",
                format!("{} tensors for {} layers", tensors.len(), self.layers.len()),
            ));
        }
        for (layer, chunk) in self.layers.iter_mut().zip(tensors.chunks(4)) {
            if chunk[0].shape() != layer.theta_e.shape() || chunk[1].shape() != layer.theta_v.shape() {
                return Err(Error::shape("EncoderParams::set_tensors", "weight shape changed"));
            }
            layer.theta_e = chunk[0].clone();
            layer.theta_v = chunk[1].clone();
            layer.slope_e = chunk[2].item();
            layer.slope_v = chunk[3].item();
        }
        Ok(())
    }

    /// `Σ ‖Θ_E‖² + ‖Θ_V‖²` over layers; slopes excluded.
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .map(|p| p.theta_e.frobenius_sq() + p.theta_v.frobenius_sq())
            .sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub theta_e: Var,
    pub theta_v: Var,
    pub slope_e: Var,
    pub slope_v: Var,
}

#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub layers: Vec<LayerVars>,
}

impl EncoderVars {
    /// Handles in the same order as [`EncoderParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|l| [l.theta_e, l.theta_v, l.slope_e, l.slope_v])
            .collect()
    }

    /// `Σ ‖Θ_E‖² + ‖Θ_V‖²` on the tape.
    pub fn weight_norm_sq(&self, tape: &mut Tape) -> Result<Var> {
        let mut total: Option<Var> = None;
        for l in &self.layers {
            for w in [l.theta_e, l.theta_v] {
                let sq = tape.frobenius_sq(w)?;
                total = Some(match total {
                    Some(t) => tape.add(t, sq)?,
                    None => sq,
                });
            }
        }
        total.ok_or_else(|| Error::InvalidArgument("encoder has no layers".into()))
    }

    /// Collects gradients in [`EncoderParams::tensors`] order.
    pub fn gradients(&self, tape: &Tape, grads: &Gradients) -> Vec<Tensor> {
        self.vars().into_iter().map(|v| grads.get_or_zeros(tape, v)).collect()
    }
}

/// Node and hyperedge embeddings as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    /// |V| x D
    pub nodes: Tensor,
    /// |E| x D
    pub hyperedges: Tensor,
}

/// Tape handles for the embeddings of one encoded view.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingVars {
    pub nodes: Var,
    pub hyperedges: Var,
}

/// Degree-normalized pooling operators and sparse input features for one
/// view.
#[derive(Clone, Debug)]
pub struct Propagation {
    /// De⁻¹ Hᵀ, rows = hyperedges (including self-loops).
    pub edge_from_nodes: Arc<CsrMatrix>,
    /// Dv⁻¹ H W, rows = nodes.
    pub node_from_edges: Arc<CsrMatrix>,
    pub input: Arc<CsrMatrix>,
    /// Hyperedges of the underlying view, excluding self-loops.
    pub num_hyperedges: usize,
}

impl Propagation {
    pub fn new(view: &HypergraphView, self_loops: bool) -> Self {
        let n = view.num_nodes();
        let mut edges = view.hyperedges.clone();
        let mut weights = view.weights.clone();
        if self_loops {
            edges.extend((0..n).map(|v| vec![v]));
            weights.extend(std::iter::repeat_n(1.0, n));
        }
        let degrees = compute_degrees(n, &edges, &weights);

        let edge_rows: Vec<Vec<(usize, f64)>> = edges
            .iter()
            .map(|members| {
                let inv = if members.is_empty() {
                    0.0
                } else {
                    1.0 / members.len() as f64
                };
                members.iter().map(|&v| (v, inv)).collect()
            })
            .collect();
        let mut node_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (j, members) in edges.iter().enumerate() {
            for &v in members {
                node_rows[v].push((j, weights[j] / degrees.node_degrees[v]));
            }
        }
        Self {
            edge_from_nodes: Arc::new(CsrMatrix::from_row_entries(n, &edge_rows).expect("members in range")),
            node_from_edges: Arc::new(CsrMatrix::from_row_entries(edges.len(), &node_rows).expect("edge ids in range")),
            input: Arc::new(CsrMatrix::from_dense(&view.features)),
            num_hyperedges: view.num_hyperedges(),
        }
    }

    pub fn from_hypergraph(h: &Hypergraph, self_loops: bool) -> Self {
        Self::new(&HypergraphView::original(h), self_loops)
    }
}

/// `op · x · θ` choosing the cheaper association.
fn pool_then_transform(tape: &mut Tape, op: &Arc<CsrMatrix>, x: Var, theta: Var) -> Result<Var> {
    if op.rows() <= tape.value(x).rows() {
        let pooled = tape.sparse_matmul(op, x)?;
        tape.matmul(pooled, theta)
    } else {
        let transformed = tape.matmul(x, theta)?;
        tape.sparse_matmul(op, transformed)
    }
}

/// Runs the encoder on the tape.
pub fn encode(tape: &mut Tape, prop: &Propagation, params: &EncoderVars) -> Result<EmbeddingVars> {
    let first = params
        .layers
        .first()
        .ok_or_else(|| Error::InvalidArgument("encoder has no layers".into()))?;
    let (in_dim, _) = tape.value(first.theta_e).shape();
    if prop.input.cols() != in_dim {
        return Err(Error::shape(
            "encode",
            format!("view has {} features, encoder expects {in_dim}", prop.input.cols()),
        ));
    }
    let mut nodes: Option<Var> = None;
    let mut edges: Option<Var> = None;
    for layer in &params.layers {
        let pre_e = match nodes {
            None => {
                let xt = tape.sparse_matmul(&prop.input, layer.theta_e)?;
                tape.sparse_matmul(&prop.edge_from_nodes, xt)?
            }
            Some(z) => pool_then_transform(tape, &prop.edge_from_nodes, z, layer.theta_e)?,
        };
        let z_e = tape.prelu(pre_e, layer.slope_e)?;
        let pre_v = pool_then_transform(tape, &prop.node_from_edges, z_e, layer.theta_v)?;
        nodes = Some(tape.prelu(pre_v, layer.slope_v)?);
        edges = Some(z_e);
    }
    let nodes = nodes.expect("at least one layer");
    let mut hyperedges = edges.expect("at least one layer");
    if tape.value(hyperedges).rows() != prop.num_hyperedges {
        hyperedges = tape.row_slice(hyperedges, 0..prop.num_hyperedges)?;
    }
    Ok(EmbeddingVars { nodes, hyperedges })
}

/// Forward pass without gradients.
pub fn encode_view(view: &HypergraphView, params: &EncoderParams) -> Result<Embeddings> {
    params.validate()?;
    let prop = Propagation::new(view, params.self_loops);
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = encode(&mut tape, &prop, &vars)?;
    Ok(Embeddings {
        nodes: tape.value(out.nodes).clone(),
        hyperedges: tape.value(out.hyperedges).clone(),
    })
}

/// Embeddings of the unmasked hypergraph.
pub fn embed(h: &Hypergraph, params: &EncoderParams) -> Result<Embeddings> {
    encode_view(&HypergraphView::original(h), params)
}
