mod common;

use common::{joint_gradient_check, random_hypergraph};
use hypercca::diff::Tape;
use hypercca::encoder::Propagation;
use hypercca::encoder::{embed, encode};
use hypercca::membership::build_index;
use hypercca::objectives::{cca_loss, normalize_embeddings};
use hypercca::rng::{stream, Purpose};
use hypercca::trainer::{train, Checkpoint, EpochInputs};
use hypercca::{Error, Hypergraph, Tensor, TrainConfig};

fn six_nodes() -> Hypergraph {
    let x = Tensor::from_rows(&[
        [1.0, 0.0, 0.5],
        [0.9, 0.1, 0.4],
        [0.2, 1.0, 0.0],
        [0.1, 0.8, 0.3],
        [0.5, 0.5, 1.0],
        [0.0, 0.2, 0.9],
    ])
    .unwrap();
    Hypergraph::new(
        6,
        x,
        vec![vec![0, 1], vec![1, 2, 3], vec![3, 4], vec![4, 5], vec![0, 5]],
        None,
        None,
        None,
    )
    .unwrap()
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        embedding_dim: 4,
        epochs,
        samples: 2,
        lambda_n: 0.05,
        lambda_g: 0.05,
        ..Default::default()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn loss_descends_over_two_hundred_epochs() {
    let out = train(
        &six_nodes(),
        &TrainConfig {
            learning_rate: 1e-2,
            ..small_config(200)
        },
    )
    .unwrap();
    let totals: Vec<f64> = out.report.epochs.iter().map(|e| e.loss.total).collect();
    assert_eq!(totals.len(), 200);
    let (head, tail) = (mean(&totals[..20]), mean(&totals[180..]));
    assert!(tail < head, "first 20 mean {head}, last 20 mean {tail}");
}

#[test]
fn breakdown_identity_holds_every_epoch() {
    let cfg = TrainConfig {
        lambda2: 0.4,
        lambda3: 0.2,
        node_weight: 0.7,
        ..small_config(30)
    };
    let out = train(&six_nodes(), &cfg).unwrap();
    for rec in &out.report.epochs {
        let l = &rec.loss;
        assert!(
            (l.recombine(&cfg) - l.total).abs() <= 1e-9 * l.total.abs().max(1.0),
            "{rec:?}"
        );
    }
}

#[test]
fn identical_views_have_no_invariance_term() {
    let h = random_hypergraph(12, 6, 4, 5, &mut stream(1, Purpose::Misc, 0));
    let cfg = TrainConfig {
        p_feature_1: 0.0,
        p_membership_1: 0.0,
        p_feature_2: 0.0,
        p_membership_2: 0.0,
        ..small_config(1)
    };
    let index = build_index(&h, cfg.hops).unwrap();
    let original = Propagation::from_hypergraph(&h, cfg.self_loops);
    let mut checkpoint = train(
        &h,
        &TrainConfig {
            epochs: 0,
            ..cfg.clone()
        },
    )
    .unwrap()
    .checkpoint;
    for epoch in 0..10u64 {
        let inputs = EpochInputs::draw(&h, &index, &original, &cfg, epoch).unwrap();
        let mut tape = Tape::new();
        let enc = checkpoint.encoder.register(&mut tape);
        let z1 = encode(&mut tape, &inputs.views[0], &enc).unwrap();
        let z2 = encode(&mut tape, &inputs.views[1], &enc).unwrap();
        let n1 = normalize_embeddings(&mut tape, z1.nodes).unwrap();
        let n2 = normalize_embeddings(&mut tape, z2.nodes).unwrap();
        let terms = cca_loss(&mut tape, n1, n2, cfg.lambda_n).unwrap();
        assert_eq!(tape.value(terms.invariance).item(), 0.0);
        let total = tape.value(terms.total).item();
        let dec = tape.value(terms.decorrelation).item();
        assert!((total - cfg.lambda_n * dec).abs() < 1e-12);
        checkpoint = hypercca::trainer::resume(&h, checkpoint, 1).unwrap().checkpoint;
    }
}

#[test]
fn joint_objective_passes_gradient_check() {
    for seed in 0..3 {
        let report = joint_gradient_check(seed);
        assert!(report.max_rel_error < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn runs_are_deterministic() {
    let h = six_nodes();
    let a = train(&h, &small_config(15)).unwrap();
    let b = train(&h, &small_config(15)).unwrap();
    assert_eq!(a.report.epochs, b.report.epochs);
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    let c = train(
        &h,
        &TrainConfig {
            seed: 1,
            ..small_config(15)
        },
    )
    .unwrap();
    assert_ne!(a.report.epochs, c.report.epochs);
}

#[test]
fn saved_checkpoint_embeds_bit_identically() {
    let h = six_nodes();
    let out = train(&h, &small_config(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    out.checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, out.checkpoint);
    let before = embed(&h, &out.encoder).unwrap();
    let after = embed(&h, &loaded.encoder).unwrap();
    assert_eq!(before.nodes.as_slice(), after.nodes.as_slice());
    assert_eq!(before.hyperedges.as_slice(), after.hyperedges.as_slice());
}

#[test]
fn incompatible_checkpoints_are_rejected() {
    let h = six_nodes();
    let ckpt = train(&h, &small_config(1)).unwrap().checkpoint;
    assert!(matches!(
        ckpt.check_shapes(3, Some(8)),
        Err(Error::ShapeMismatch { .. })
    ));
    assert!(matches!(ckpt.check_shapes(5, None), Err(Error::ShapeMismatch { .. })));
    let mut bytes = ckpt.to_bytes().unwrap();
    bytes.truncate(bytes.len() - 3);
    assert!(matches!(
        Checkpoint::from_bytes(&bytes),
        Err(Error::CorruptCheckpoint(_))
    ));
}

#[test]
fn invalid_configs_fail_fast() {
    let h = six_nodes();
    for cfg in [
        TrainConfig {
            alpha: 1.5,
            ..small_config(1)
        },
        TrainConfig {
            tau: 0.0,
            ..small_config(1)
        },
        TrainConfig {
            p_feature_1: 2.0,
            ..small_config(1)
        },
        TrainConfig {
            hops: 0,
            ..small_config(1)
        },
    ] {
        assert!(train(&h, &cfg).is_err(), "{cfg:?}");
    }
}
