//! Joint training loop.
//!
//! Each epoch draws two augmented views, encodes them and the original
//! hypergraph, evaluates
//!
//! ```text
//! L = w_N L_N + λ1 L_G + λ2 L_HM + λ3 (‖Θ_E‖² + ‖Θ_V‖²)
//! ```
//!
//! and takes one full-batch Adam step on the encoder weights, PReLU slopes
//! and the discriminator. `w_N` is 1 for the standard objective.

pub mod adam;
pub mod checkpoint;
pub mod config;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_VERSION};
pub use config::TrainConfig;

use crate::augment::{augment, HypergraphView};
use crate::diff::{Tape, Tensor, Var};
use crate::encoder::{encode, EncoderParams, EncoderVars, LayerVars, Propagation};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::membership::{build_index, MembershipIndex};
use crate::objectives::{
    cca_loss, membership_loss, normalize_embeddings, sample_membership_batch, DiscriminatorParams, MembershipBatch,
};
use crate::rng::{stream, Purpose};

/// Loss components of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub node: f64,
    pub group: f64,
    pub membership: f64,
    pub l2: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Recombines the parts with the weights of `cfg`.
    pub fn recombine(&self, cfg: &TrainConfig) -> f64 {
        cfg.node_weight * self.node + cfg.lambda1 * self.group + cfg.lambda2 * self.membership + cfg.lambda3 * self.l2
    }
}

/// One recorded epoch; the losses are measured before that epoch's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub discriminator_calls: usize,
    pub active_terms: usize,
    pub skipped_terms: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub discriminator_calls: usize,
    pub index_build_secs: f64,
    pub wall_time_secs: f64,
    /// Where the final parameters were written, when they were.
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub encoder: EncoderParams,
    pub discriminator: DiscriminatorParams,
    pub report: TrainReport,
    pub checkpoint: Checkpoint,
}

/// Random inputs of one epoch: the two views and the membership samples.
#[derive(Clone, Debug)]
pub struct EpochInputs {
    pub views: [Propagation; 2],
    pub original: Propagation,
    pub batch: MembershipBatch,
}

impl EpochInputs {
    /// Draws the inputs of `epoch` (0-based) from the seeded sub-streams.
    pub fn draw(
        h: &Hypergraph,
        index: &MembershipIndex,
        original: &Propagation,
        cfg: &TrainConfig,
        epoch: u64,
    ) -> Result<Self> {
        let [c1, c2] = cfg.views();
        let v1 = augment(h, &c1, &mut stream(cfg.seed, Purpose::FirstView, epoch))?;
        let v2 = augment(h, &c2, &mut stream(cfg.seed, Purpose::SecondView, epoch))?;
        let batch = sample_membership_batch(
            index,
            cfg.samples,
            cfg.renormalize_skipped,
            &mut stream(cfg.seed, Purpose::Membership, epoch),
        )?;
        Ok(Self::from_views(&v1, &v2, original.clone(), batch, cfg.self_loops))
    }

    pub fn from_views(
        v1: &HypergraphView,
        v2: &HypergraphView,
        original: Propagation,
        batch: MembershipBatch,
        self_loops: bool,
    ) -> Self {
        Self {
            views: [Propagation::new(v1, self_loops), Propagation::new(v2, self_loops)],
            original,
            batch,
        }
    }
}

/// Tape handles for every loss component.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub node: Var,
    pub group: Var,
    pub membership: Var,
    pub l2: Var,
    pub total: Var,
}

impl LossVars {
    pub fn values(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            node: tape.value(self.node).item(),
            group: tape.value(self.group).item(),
            membership: tape.value(self.membership).item(),
            l2: tape.value(self.l2).item(),
            total: tape.value(self.total).item(),
        }
    }
}

/// Splits handles laid out as `EncoderParams::tensors` followed by the
/// discriminator matrix.
pub fn split_parameter_vars(vars: &[Var]) -> Result<(EncoderVars, Var)> {
    if vars.len() < 5 || !(vars.len() - 1).is_multiple_of(4) {
        return Err(Error::InvalidArgument(format!("{} parameter handles", vars.len())));
    }
    let (enc, b) = vars.split_at(vars.len() - 1);
    let layers = enc
        .chunks(4)
        .map(|c| LayerVars {
            theta_e: c[0],
            theta_v: c[1],
            slope_e: c[2],
            slope_v: c[3],
        })
        .collect();
    Ok((EncoderVars { layers }, b[0]))
}

/// Builds the joint objective for fixed epoch inputs.
pub fn joint_loss(
    tape: &mut Tape,
    inputs: &EpochInputs,
    enc: &EncoderVars,
    b: Var,
    cfg: &TrainConfig,
) -> Result<LossVars> {
    let e1 = encode(tape, &inputs.views[0], enc)?;
    let e2 = encode(tape, &inputs.views[1], enc)?;
    let orig = encode(tape, &inputs.original, enc)?;

    let n1 = normalize_embeddings(tape, e1.nodes)?;
    let n2 = normalize_embeddings(tape, e2.nodes)?;
    let node = cca_loss(tape, n1, n2, cfg.lambda_n)?.total;
    let g1 = normalize_embeddings(tape, e1.hyperedges)?;
    let g2 = normalize_embeddings(tape, e2.hyperedges)?;
    let group = cca_loss(tape, g1, g2, cfg.lambda_g)?.total;
    let membership = membership_loss(tape, &inputs.batch, orig.nodes, orig.hyperedges, b, cfg.tau, cfg.alpha)?;
    let l2 = enc.weight_norm_sq(tape)?;

    let mut total = tape.scale(node, cfg.node_weight)?;
    for (term, w) in [(group, cfg.lambda1), (membership, cfg.lambda2), (l2, cfg.lambda3)] {
        let weighted = tape.scale(term, w)?;
        total = tape.add(total, weighted)?;
    }
    Ok(LossVars {
        node,
        group,
        membership,
        l2,
        total,
    })
}

fn fresh_checkpoint(h: &Hypergraph, cfg: &TrainConfig) -> Result<Checkpoint> {
    let mut rng = stream(cfg.seed, Purpose::Init, 0);
    let encoder = EncoderParams::init(
        h.num_features(),
        cfg.embedding_dim,
        cfg.layers,
        cfg.self_loops,
        &mut rng,
    )?;
    let discriminator = DiscriminatorParams::init(cfg.embedding_dim, &mut rng);
    let mut params = encoder.tensors();
    params.push(discriminator.weight.clone());
    Ok(Checkpoint {
        config: cfg.clone(),
        encoder,
        discriminator,
        rng: RngState {
            seed: cfg.seed,
            epochs_completed: 0,
        },
        adam: AdamState::new(&params),
    })
}

/// Trains from a fresh initialization for `cfg.epochs` epochs.
pub fn train(h: &Hypergraph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = fresh_checkpoint(h, cfg)?;
    run(h, start, cfg.epochs)
}

/// Continues a checkpointed run for `extra_epochs` more epochs. The result
/// matches an uninterrupted run of the combined length.
pub fn resume(h: &Hypergraph, checkpoint: Checkpoint, extra_epochs: usize) -> Result<TrainOutcome> {
    checkpoint.config.validate()?;
    checkpoint.check_shapes(h.num_features(), Some(checkpoint.config.embedding_dim))?;
    run(h, checkpoint, extra_epochs)
}

fn run(h: &Hypergraph, mut state: Checkpoint, epochs: usize) -> Result<TrainOutcome> {
    let cfg = state.config.clone();
    let clock = Instant::now();
    let index = build_index(h, cfg.hops)?;
    let index_build_secs = clock.elapsed().as_secs_f64();
    let original = Propagation::from_hypergraph(h, cfg.self_loops);
    let adam_cfg = AdamConfig {
        lr: cfg.learning_rate,
        beta1: cfg.adam_beta1,
        beta2: cfg.adam_beta2,
        eps: cfg.adam_eps,
    };

    let mut records = Vec::with_capacity(epochs);
    let mut total_calls = 0;
    for _ in 0..epochs {
        let epoch = state.rng.epochs_completed;
        let inputs = EpochInputs::draw(h, &index, &original, &cfg, epoch)?;

        let mut tape = Tape::new();
        let enc = state.encoder.register(&mut tape);
        let b = tape.param(state.discriminator.weight.clone());
        let loss = joint_loss(&mut tape, &inputs, &enc, b, &cfg).map_err(|e| match e {
            Error::NonFinite(what) => Error::Diverged {
                epoch: epoch as usize + 1,
                breakdown: format!("non-finite value in {what}"),
            },
            other => other,
        })?;
        let breakdown = loss.values(&tape);
        if !breakdown.total.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch as usize + 1,
                breakdown: format!("{breakdown:?}"),
            });
        }
        let grads = tape.backward(loss.total)?;
        let mut grad_list = enc.gradients(&tape, &grads);
        grad_list.push(grads.get_or_zeros(&tape, b));
        drop(tape);

        let mut params = state.encoder.tensors();
        params.push(state.discriminator.weight.clone());
        adam_step(&mut params, &grad_list, &mut state.adam, &adam_cfg)?;
        state.discriminator.weight = params.pop().expect("discriminator last");
        state.encoder.set_tensors(&params)?;
        state.rng.epochs_completed += 1;

        let calls = inputs.batch.discriminator_calls();
        total_calls += calls;
        let record = EpochRecord {
            epoch: epoch as usize + 1,
            loss: breakdown,
            discriminator_calls: calls,
            active_terms: inputs.batch.active_terms(),
            skipped_terms: inputs.batch.skipped_terms,
        };
        log::debug!("epoch {}: {:?}", record.epoch, record.loss);
        if record.epoch.is_multiple_of(10) {
            log::info!("epoch {} total loss {:.6}", record.epoch, record.loss.total);
        }
        records.push(record);
    }

    Ok(TrainOutcome {
        encoder: state.encoder.clone(),
        discriminator: state.discriminator.clone(),
        report: TrainReport {
            epochs: records,
            discriminator_calls: total_calls,
            index_build_secs,
            wall_time_secs: clock.elapsed().as_secs_f64(),
            checkpoint: None,
        },
        checkpoint: state,
    })
}

/// Loss breakdown for given parameters and epoch inputs, without updating
/// anything.
pub fn evaluate_loss(
    inputs: &EpochInputs,
    encoder: &EncoderParams,
    disc: &DiscriminatorParams,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let enc = encoder.register(&mut tape);
    let b = tape.constant(disc.weight.clone());
    Ok(joint_loss(&mut tape, inputs, &enc, b, cfg)?.values(&tape))
}

/// Flat parameter list `EncoderParams::tensors ++ [B]`.
pub fn parameter_tensors(encoder: &EncoderParams, disc: &DiscriminatorParams) -> Vec<Tensor> {
    let mut out = encoder.tensors();
    out.push(disc.weight.clone());
    out
}
