//! Self-supervised objectives.
//!
//! * CCA loss between two views: `‖Ẑ1 − Ẑ2‖² + λ(‖Ẑ1ᵀẐ1 − I‖² + ‖Ẑ2ᵀẐ2 − I‖²)`
//!   on column-standardized embeddings, used at node and hyperedge level.
//! * Hierarchical membership contrast: for every node `v` and hop `k`, the
//!   hyperedges of `M_k(v)` are positives and those of `M_{k+1}(v)` are
//!   negatives for a bilinear discriminator, scored in a multi-positive
//!   softmax whose positive mass is capped at `α`.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{logsumexp, Tape, Tensor, Var};
use crate::encoder::glorot_uniform;
use crate::error::{Error, Result};
use crate::membership::{sample_pairs, MembershipIndex};

/// Lower clamp on column standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Bilinear discriminator `D(v, e) = z_vᵀ B z_e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorParams {
    pub weight: Tensor,
}

impl DiscriminatorParams {
    pub fn init<R: Rng>(dim: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot_uniform(dim, dim, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Coefficients and sampling sizes of the objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_n: f64,
    pub lambda_g: f64,
    pub tau: f64,
    pub alpha: f64,
    /// Hop range `K`.
    pub hops: usize,
    /// Samples `d` per membership set.
    pub samples: usize,
    /// Divide each node's membership terms by its number of active hops
    /// instead of `K`.
    pub renormalize_skipped: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_n: 1e-3,
            lambda_g: 1e-3,
            tau: 0.5,
            alpha: 0.65,
            hops: 1,
            samples: 10,
            renormalize_skipped: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda_n >= 0.0 && self.lambda_g >= 0.0) {
            return bad(format!(
                "decorrelation weights must be >= 0 (lambda_n = {}, lambda_g = {})",
                self.lambda_n, self.lambda_g
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau = {} must be positive", self.tau));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if self.hops == 0 || self.samples == 0 {
            return bad(format!("K = {} and d = {} must be >= 1", self.hops, self.samples));
        }
        Ok(())
    }
}

/// `(Z − μ) / (σ √N)` per column with population `σ` clamped at
/// [`STD_FLOOR`]; columns end with zero mean and unit norm.
pub fn normalize_embeddings(tape: &mut Tape, z: Var) -> Result<Var> {
    let n = tape.value(z).rows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "normalization needs at least 2 rows, got {n}"
        )));
    }
    let mean = tape.column_mean(z)?;
    let centered = tape.sub(z, mean)?;
    let std = tape.column_std(z, STD_FLOOR)?;
    let denom = tape.scale(std, (n as f64).sqrt())?;
    tape.div(centered, denom)
}

/// Terms of one CCA loss evaluation.
#[derive(Clone, Copy, Debug)]
pub struct CcaTerms {
    pub total: Var,
    pub invariance: Var,
    pub decorrelation: Var,
}

/// `‖Ẑ1 − Ẑ2‖²_F + λ(‖Ẑ1ᵀẐ1 − I‖²_F + ‖Ẑ2ᵀẐ2 − I‖²_F)`.
pub fn cca_loss(tape: &mut Tape, z1: Var, z2: Var, lambda: f64) -> Result<CcaTerms> {
    let (s1, s2) = (tape.value(z1).shape(), tape.value(z2).shape());
    if s1 != s2 {
        return Err(Error::shape("cca_loss", format!("{s1:?} vs {s2:?}")));
    }
    let diff = tape.sub(z1, z2)?;
    let invariance = tape.frobenius_sq(diff)?;
    let eye = tape.constant(Tensor::identity(s1.1));
    let mut dec = Vec::with_capacity(2);
    for z in [z1, z2] {
        let zt = tape.transpose(z)?;
        let gram = tape.matmul(zt, z)?;
        let off = tape.sub(gram, eye)?;
        dec.push(tape.frobenius_sq(off)?);
    }
    let decorrelation = tape.add(dec[0], dec[1])?;
    let weighted = tape.scale(decorrelation, lambda)?;
    let total = tape.add(invariance, weighted)?;
    Ok(CcaTerms {
        total,
        invariance,
        decorrelation,
    })
}

/// `z_vᵀ B z_e` for 1 x D row vectors.
pub fn discriminator_score(tape: &mut Tape, z_v: Var, z_e: Var, b: Var) -> Result<Var> {
    let left = tape.matmul(z_v, b)?;
    let right = tape.transpose(z_e)?;
    tape.matmul(left, right)
}

/// Multi-positive softmax loss from raw scores:
/// `−log(Σ_P e^{s/τ} / (Σ_P e^{s/τ} + Σ_N e^{s/τ}))`.
pub fn hop_loss_from_scores(positives: &[f64], negatives: &[f64], tau: f64) -> f64 {
    let pos: Vec<f64> = positives.iter().map(|s| s / tau).collect();
    let all: Vec<f64> = pos.iter().copied().chain(negatives.iter().map(|s| s / tau)).collect();
    logsumexp(&all) - logsumexp(&pos)
}

/// Capped membership term `−log(min(r, α))` for a positive-mass ratio `r`.
pub fn membership_term(ratio: f64, alpha: f64) -> f64 {
    -ratio.min(alpha).ln()
}

/// Sampled node-hyperedge pairs for one membership loss evaluation, laid
/// out term by term: each active `(v, k)` owns a contiguous run of pairs,
/// positives first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MembershipBatch {
    pub pairs: Vec<(usize, usize)>,
    pub positive_segments: Vec<Range<usize>>,
    pub all_segments: Vec<Range<usize>>,
    /// Weight of each term in the sum (1/K, or 1/active hops of its node).
    pub term_weights: Vec<f64>,
    pub skipped_terms: usize,
}

impl MembershipBatch {
    pub fn push_term(&mut self, v: usize, positives: &[usize], negatives: &[usize], weight: f64) {
        let start = self.pairs.len();
        self.pairs.extend(positives.iter().map(|&e| (v, e)));
        let mid = self.pairs.len();
        self.pairs.extend(negatives.iter().map(|&e| (v, e)));
        self.positive_segments.push(start..mid);
        self.all_segments.push(start..self.pairs.len());
        self.term_weights.push(weight);
    }

    pub fn active_terms(&self) -> usize {
        self.term_weights.len()
    }

    /// Discriminator evaluations this batch costs.
    pub fn discriminator_calls(&self) -> usize {
        self.pairs.len()
    }
}

/// Draws positives and negatives for every node and hop.
pub fn sample_membership_batch<R: Rng>(
    index: &MembershipIndex,
    samples: usize,
    renormalize_skipped: bool,
    rng: &mut R,
) -> Result<MembershipBatch> {
    let hops = index.hops();
    let mut batch = MembershipBatch::default();
    for v in 0..index.num_nodes() {
        let drawn = (1..=hops)
            .map(|k| sample_pairs(index, v, k, samples, rng))
            .collect::<Result<Vec<_>>>()?;
        let active = drawn.iter().filter(|s| !s.skip).count();
        batch.skipped_terms += hops - active;
        let weight = if renormalize_skipped && active > 0 {
            1.0 / active as f64
        } else {
            1.0 / hops as f64
        };
        for s in drawn.iter().filter(|s| !s.skip) {
            batch.push_term(v, &s.positives, &s.negatives, weight);
        }
    }
    Ok(batch)
}

/// Per-term hop losses `L_k(v)` as a column vector.
fn hop_losses(tape: &mut Tape, batch: &MembershipBatch, z_v: Var, z_e: Var, b: Var, tau: f64) -> Result<Var> {
    let projected = tape.matmul(z_v, b)?;
    let scores = tape.pair_dot(projected, z_e, Arc::new(batch.pairs.clone()))?;
    let scaled = tape.scale(scores, 1.0 / tau)?;
    let lse_pos = tape.segment_logsumexp(scaled, Arc::new(batch.positive_segments.clone()))?;
    let lse_all = tape.segment_logsumexp(scaled, Arc::new(batch.all_segments.clone()))?;
    tape.sub(lse_all, lse_pos)
}

/// `L_k(v)` for one anchor. Empty negatives give zero.
#[allow(clippy::too_many_arguments)]
pub fn hop_loss(
    tape: &mut Tape,
    v: usize,
    positives: &[usize],
    negatives: &[usize],
    z_v: Var,
    z_e: Var,
    b: Var,
    tau: f64,
) -> Result<Var> {
    if positives.is_empty() {
        return Err(Error::InvalidArgument(format!("node {v}: hop loss needs a positive")));
    }
    let mut batch = MembershipBatch::default();
    batch.push_term(v, positives, negatives, 1.0);
    let losses = hop_losses(tape, &batch, z_v, z_e, b, tau)?;
    tape.reduce_sum(losses)
}

/// `Σ_v Σ_k w · (−log min(e^{−L_k(v)}, α))` over the active terms of a
/// sampled batch.
///
/// The capped ratio is evaluated in log space as `max(L_k(v), −log α)`,
/// which equals the capped form and stays finite when the ratio underflows.
/// Saturated terms pass no gradient.
pub fn membership_loss(
    tape: &mut Tape,
    batch: &MembershipBatch,
    z_v: Var,
    z_e: Var,
    b: Var,
    tau: f64,
    alpha: f64,
) -> Result<Var> {
    if batch.active_terms() == 0 {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let losses = hop_losses(tape, batch, z_v, z_e, b, tau)?;
    let capped = tape.clamp_min(losses, -alpha.ln())?;
    let w = tape.constant(Tensor::column(batch.term_weights.clone()));
    let weighted = tape.mul(capped, w)?;
    tape.reduce_sum(weighted)
}

/// Result of [`hierarchical_membership_loss`].
#[derive(Clone, Copy, Debug)]
pub struct MembershipLoss {
    pub loss: Var,
    pub discriminator_calls: usize,
    pub active_terms: usize,
}

/// Samples a fresh batch and evaluates the capped membership loss on
/// embeddings of the original hypergraph.
pub fn hierarchical_membership_loss<R: Rng>(
    tape: &mut Tape,
    index: &MembershipIndex,
    z_v: Var,
    z_e: Var,
    b: Var,
    weights: &LossWeights,
    rng: &mut R,
) -> Result<MembershipLoss> {
    weights.validate()?;
    if index.hops() != weights.hops {
        return Err(Error::InvalidArgument(format!(
            "index built for K = {}, loss configured for K = {}",
            index.hops(),
            weights.hops
        )));
    }
    let batch = sample_membership_batch(index, weights.samples, weights.renormalize_skipped, rng)?;
    let loss = membership_loss(tape, &batch, z_v, z_e, b, weights.tau, weights.alpha)?;
    Ok(MembershipLoss {
        loss,
        discriminator_calls: batch.discriminator_calls(),
        active_terms: batch.active_terms(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn run_normalize(z: Tensor) -> Tensor {
        let mut tape = Tape::new();
        let v = tape.constant(z);
        let out = normalize_embeddings(&mut tape, v).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn normalize_symmetric_column() {
        let out = run_normalize(Tensor::column(vec![1.0, -1.0, 0.0]));
        let r = 0.5f64.sqrt();
        assert_abs_diff_eq!(out.as_slice()[0], r, epsilon = 1e-12);
        assert_abs_diff_eq!(out.as_slice()[1], -r, epsilon = 1e-12);
        assert_abs_diff_eq!(out.as_slice()[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn normalize_constant_column_is_zero() {
        let out = run_normalize(Tensor::column(vec![5.0, 5.0, 5.0]));
        assert!(out.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalize_needs_two_rows() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::zeros(1, 3));
        assert!(normalize_embeddings(&mut tape, v).is_err());
    }

    #[test]
    fn cca_swap_example() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::identity(2));
        let b = tape.constant(Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
        let terms = cca_loss(&mut tape, a, b, 0.0).unwrap();
        assert_eq!(tape.value(terms.total).item(), 4.0);
        // both inputs are orthonormal
        assert_eq!(tape.value(terms.decorrelation).item(), 0.0);
    }

    #[test]
    fn cca_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(3, 2));
        let b = tape.constant(Tensor::zeros(2, 2));
        assert!(matches!(
            cca_loss(&mut tape, a, b, 1.0),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn discriminator_identity_and_null() {
        let mut tape = Tape::new();
        let u = tape.constant(Tensor::from_rows(&[[0.6, 0.8]]).unwrap());
        let eye = tape.constant(Tensor::identity(2));
        let zero = tape.constant(Tensor::zeros(2, 2));
        let s = discriminator_score(&mut tape, u, u, eye).unwrap();
        assert_abs_diff_eq!(tape.value(s).item(), 1.0, epsilon = 1e-15);
        let s = discriminator_score(&mut tape, u, u, zero).unwrap();
        assert_eq!(tape.value(s).item(), 0.0);
    }

    #[test]
    fn scalar_hop_loss_values() {
        assert_eq!(hop_loss_from_scores(&[0.3], &[], 0.5), 0.0);
        assert_abs_diff_eq!(hop_loss_from_scores(&[0.7], &[0.7], 0.5), 2f64.ln(), epsilon = 1e-12);
        let expect = -(2f64.exp() / (2f64.exp() + 1.0)).ln();
        assert_abs_diff_eq!(hop_loss_from_scores(&[1.0], &[0.0], 0.5), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(expect, 0.1269, epsilon = 5e-5);
    }

    #[test]
    fn membership_cap() {
        assert_abs_diff_eq!(membership_term(0.5, 0.65), 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(membership_term(0.9, 0.65), -(0.65f64.ln()), epsilon = 1e-12);
        assert_abs_diff_eq!(membership_term(0.9, 0.65), 0.4308, epsilon = 5e-5);
    }

    #[test]
    fn hop_loss_requires_positive() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(2, 2));
        let b = tape.constant(Tensor::identity(2));
        assert!(hop_loss(&mut tape, 0, &[], &[1], z, z, b, 0.5).is_err());
        let l = hop_loss(&mut tape, 0, &[0], &[], z, z, b, 0.5).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        for bad in [
            LossWeights {
                tau: 0.0,
                ..Default::default()
            },
            LossWeights {
                alpha: 1.0,
                ..Default::default()
            },
            LossWeights {
                lambda_n: -1.0,
                ..Default::default()
            },
            LossWeights {
                hops: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
