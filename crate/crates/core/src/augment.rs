//! Stochastic views: feature-column masking and membership dropping.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::hypergraph::{compute_degrees, DegreeVectors, Hypergraph};

/// Drop probabilities for one view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub p_feature: f64,
    pub p_membership: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_feature: 0.2,
            p_membership: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability("p_feature", self.p_feature)?;
        check_probability("p_membership", self.p_membership)
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {p} is not in [0, 1]")))
    }
}

/// A (possibly masked) copy of a hypergraph's features and incidence.
/// Hyperedges may be empty after masking.
#[derive(Clone, Debug, PartialEq)]
pub struct HypergraphView {
    pub features: Tensor,
    pub hyperedges: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    pub degrees: DegreeVectors,
}

impl HypergraphView {
    /// The unmasked hypergraph.
    pub fn original(h: &Hypergraph) -> Self {
        Self::from_parts(h.features().clone(), h.hyperedges().to_vec(), h.weights().to_vec())
    }

    pub fn from_parts(features: Tensor, hyperedges: Vec<Vec<usize>>, weights: Vec<f64>) -> Self {
        let degrees = compute_degrees(features.rows(), &hyperedges, &weights);
        Self {
            features,
            hyperedges,
            weights,
            degrees,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_hyperedges(&self) -> usize {
        self.hyperedges.len()
    }
}

/// Zeroes each feature column with probability `p` using one mask shared by
/// every node. Returns the masked matrix and the keep-mask.
pub fn mask_features<R: Rng>(x: &Tensor, p: f64, rng: &mut R) -> Result<(Tensor, Vec<bool>)> {
    check_probability("p_feature", p)?;
    let keep: Vec<bool> = (0..x.cols()).map(|_| !rng.gen_bool(p)).collect();
    let mut out = x.clone();
    for r in 0..out.rows() {
        for (v, &k) in out.row_mut(r).iter_mut().zip(&keep) {
            if !k {
                *v = 0.0;
            }
        }
    }
    Ok((out, keep))
}

/// Drops each node-hyperedge membership independently with probability `p`.
pub fn mask_memberships<R: Rng>(hyperedges: &[Vec<usize>], p: f64, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    check_probability("p_membership", p)?;
    Ok(hyperedges
        .iter()
        .map(|members| members.iter().copied().filter(|_| !rng.gen_bool(p)).collect())
        .collect())
}

/// Draws one augmented view of `h`.
pub fn augment<R: Rng>(h: &Hypergraph, cfg: &AugmentConfig, rng: &mut R) -> Result<HypergraphView> {
    cfg.validate()?;
    let (features, _) = mask_features(h.features(), cfg.p_feature, rng)?;
    let hyperedges = mask_memberships(h.hyperedges(), cfg.p_membership, rng)?;
    Ok(HypergraphView::from_parts(features, hyperedges, h.weights().to_vec()))
}
