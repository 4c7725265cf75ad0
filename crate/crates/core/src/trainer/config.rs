//! Training configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::objectives::LossWeights;

/// Flat training configuration. Every field has a default, so a JSON file
/// may list any subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub embedding_dim: usize,
    pub layers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Weight of the node-level CCA loss (1 in the standard objective; 0
    /// removes it).
    pub node_weight: f64,
    /// Group-level CCA weight λ1.
    pub lambda1: f64,
    /// Membership loss weight λ2.
    pub lambda2: f64,
    /// L2 weight λ3 on encoder weights.
    pub lambda3: f64,
    pub lambda_n: f64,
    pub lambda_g: f64,
    pub tau: f64,
    pub alpha: f64,
    /// Hop range K.
    pub hops: usize,
    /// Samples d per membership set.
    pub samples: usize,
    pub p_feature_1: f64,
    pub p_membership_1: f64,
    pub p_feature_2: f64,
    pub p_membership_2: f64,
    /// Add one singleton hyperedge per node inside the encoder.
    pub self_loops: bool,
    pub renormalize_skipped: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 512,
            layers: 1,
            epochs: 150,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            node_weight: 1.0,
            lambda1: 1.0,
            lambda2: 0.18,
            lambda3: 0.05,
            lambda_n: 1e-3,
            lambda_g: 1e-3,
            tau: 0.5,
            alpha: 0.65,
            hops: 1,
            samples: 10,
            p_feature_1: 0.2,
            p_membership_1: 0.2,
            p_feature_2: 0.2,
            p_membership_2: 0.2,
            self_loops: true,
            renormalize_skipped: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_n: self.lambda_n,
            lambda_g: self.lambda_g,
            tau: self.tau,
            alpha: self.alpha,
            hops: self.hops,
            samples: self.samples,
            renormalize_skipped: self.renormalize_skipped,
        }
    }

    pub fn views(&self) -> [AugmentConfig; 2] {
        [
            AugmentConfig {
                p_feature: self.p_feature_1,
                p_membership: self.p_membership_1,
            },
            AugmentConfig {
                p_feature: self.p_feature_2,
                p_membership: self.p_membership_2,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.embedding_dim == 0 || self.layers == 0 {
            return bad("embedding_dim and layers must be >= 1".into());
        }
        for (name, w) in [
            ("node_weight", self.node_weight),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("{name} = {w} must be finite and >= 0"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate = {} must be positive", self.learning_rate));
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2)) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive".into());
        }
        self.loss_weights().validate()?;
        self.views().iter().try_for_each(AugmentConfig::validate)
    }
}
