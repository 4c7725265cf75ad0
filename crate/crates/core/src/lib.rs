//! Self-supervised representation learning on hypergraphs without negative
//! sampling.
//!
//! The pipeline: load a [`Hypergraph`], draw two masked views
//! ([`augment`]), encode the views and the original hypergraph with a
//! mean-pooling hypergraph network ([`encoder`]), and optimize three
//! objectives ([`objectives`]): a node-level and a group-level CCA loss
//! between the views, plus a hierarchical membership contrast computed on
//! the original hypergraph from a precomputed [`MembershipIndex`]. Frozen
//! node embeddings are then scored with a linear probe or k-means
//! ([`eval`]).
//!
//! All numerics run in `f64` on a small reverse-mode tape ([`diff`]).

pub mod augment;
pub mod diff;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hypergraph;
pub mod membership;
pub mod objectives;
pub mod rng;
pub mod trainer;

pub use diff::{CsrMatrix, Gradients, Tape, Tensor, Var};
pub use encoder::{Embeddings, EncoderParams};
pub use error::{Error, Result};
pub use hypergraph::{load_hypergraph, DatasetFormat, DegreeVectors, Hypergraph};
pub use membership::MembershipIndex;
pub use objectives::DiscriminatorParams;
pub use trainer::{train, TrainConfig, TrainOutcome, TrainReport};
