//! Helpers shared by the integration tests: random instances and
//! brute-force oracles.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::index::sample;
use rand::Rng;

use hypercca::augment::{augment, AugmentConfig, HypergraphView};
use hypercca::diff::{grad_check, GradCheckReport, Tensor};
use hypercca::encoder::{EncoderParams, Propagation};
use hypercca::membership::build_index;
use hypercca::objectives::{sample_membership_batch, DiscriminatorParams};
use hypercca::rng::{stream, Purpose};
use hypercca::trainer::{joint_loss, split_parameter_vars, EpochInputs};
use hypercca::{Hypergraph, TrainConfig};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Hypergraph with `n` nodes, `m` hyperedges of 1 to `max_size` distinct
/// members, and uniform features in [-1, 1].
pub fn random_hypergraph<R: Rng>(n: usize, m: usize, max_size: usize, features: usize, rng: &mut R) -> Hypergraph {
    let edges = (0..m)
        .map(|_| {
            let size = rng.gen_range(1..=max_size.min(n));
            let mut e = sample(rng, n, size).into_vec();
            e.sort_unstable();
            e
        })
        .collect();
    let x = Tensor::from_vec(
        n,
        features,
        (0..n * features).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    Hypergraph::new(n, x, edges, None, None, None).unwrap()
}

/// All-pairs clique-expansion distances by Floyd-Warshall.
pub fn clique_distances(h: &Hypergraph) -> Vec<Vec<usize>> {
    let n = h.num_nodes();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0;
    }
    for e in h.hyperedges() {
        for &a in e {
            for &b in e {
                if a != b {
                    d[a][b] = 1;
                }
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// `M_k(v)` for `k = 1..=K+1` from the definition: the hop of a hyperedge is
/// the largest distance to one of its members.
pub fn oracle_sets(h: &Hypergraph, hops: usize) -> Vec<Vec<Vec<usize>>> {
    let d = clique_distances(h);
    (0..h.num_nodes())
        .map(|v| {
            let mut sets = vec![Vec::new(); hops + 1];
            for (j, e) in h.hyperedges().iter().enumerate() {
                let hop = e.iter().map(|&u| d[v][u]).max().unwrap();
                if (1..=hops + 1).contains(&hop) {
                    sets[hop - 1].push(j);
                }
            }
            sets
        })
        .collect()
}

/// Gradient check of the complete joint objective on a random 6-node,
/// 4-hyperedge instance with fixed masks and fixed membership samples.
pub fn joint_gradient_check(seed: u64) -> GradCheckReport {
    let mut rng = stream(seed, Purpose::Misc, 0);
    let h = random_hypergraph(6, 4, 4, 3, &mut rng);
    let cfg = TrainConfig {
        embedding_dim: 3,
        hops: 2,
        samples: 2,
        lambda_n: 0.1,
        lambda_g: 0.1,
        seed,
        ..Default::default()
    };
    let aug = AugmentConfig {
        p_feature: 0.2,
        p_membership: 0.2,
    };
    let v1 = augment(&h, &aug, &mut stream(seed, Purpose::FirstView, 0)).unwrap();
    let v2 = augment(&h, &aug, &mut stream(seed, Purpose::SecondView, 0)).unwrap();
    let index = build_index(&h, cfg.hops).unwrap();
    let batch = sample_membership_batch(&index, cfg.samples, false, &mut stream(seed, Purpose::Membership, 0)).unwrap();
    let original = Propagation::new(&HypergraphView::original(&h), cfg.self_loops);
    let inputs = EpochInputs::from_views(&v1, &v2, original, batch, cfg.self_loops);

    let mut init = stream(seed, Purpose::Init, 0);
    let enc = EncoderParams::init(3, cfg.embedding_dim, 1, cfg.self_loops, &mut init).unwrap();
    let disc = DiscriminatorParams::init(cfg.embedding_dim, &mut init);
    let mut params = enc.tensors();
    // move slopes off their initial value so both PReLU branches carry signal
    for (i, p) in params.iter_mut().enumerate() {
        if p.shape() == (1, 1) {
            p.set(0, 0, 0.1 + 0.2 * i as f64);
        }
    }
    params.push(disc.weight);
    grad_check(
        |tape, vars| {
            let (enc, b) = split_parameter_vars(vars)?;
            Ok(joint_loss(tape, &inputs, &enc, b, &cfg)?.total)
        },
        &params,
        1e-6,
    )
    .unwrap()
}
