mod common;

use proptest::prelude::*;

use common::random_hypergraph;
use hypercca::augment::HypergraphView;
use hypercca::diff::grad_check;
use hypercca::encoder::{embed, encode, encode_view, EncoderParams, EncoderVars, LayerVars, Propagation};
use hypercca::rng::{stream, Purpose};
use hypercca::{Hypergraph, Tensor};

fn prelu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

/// One layer evaluated with explicit dense incidence and inverted degree
/// diagonals, zero-degree rows left at zero.
fn dense_layer(edges: &[Vec<usize>], weights: &[f64], x: &Tensor, p: &EncoderParams) -> (Tensor, Tensor) {
    let n = x.rows();
    let m = edges.len();
    let mut h = Tensor::zeros(n, m);
    for (j, members) in edges.iter().enumerate() {
        for &v in members {
            h.set(v, j, 1.0);
        }
    }
    let mut de_inv = Tensor::zeros(m, m);
    for (j, members) in edges.iter().enumerate() {
        if !members.is_empty() {
            de_inv.set(j, j, 1.0 / members.len() as f64);
        }
    }
    let mut w = Tensor::zeros(m, m);
    for (j, &wj) in weights.iter().enumerate() {
        w.set(j, j, wj);
    }
    let hw = h.matmul(&w).unwrap();
    let mut dv_inv = Tensor::zeros(n, n);
    for v in 0..n {
        let d: f64 = hw.row(v).iter().sum();
        if d > 0.0 {
            dv_inv.set(v, v, 1.0 / d);
        }
    }
    let layer = &p.layers[0];
    let ze_pre = de_inv
        .matmul(&h.transpose())
        .unwrap()
        .matmul(x)
        .unwrap()
        .matmul(&layer.theta_e)
        .unwrap();
    let ze = prelu(&ze_pre, layer.slope_e);
    let zv_pre = dv_inv
        .matmul(&hw)
        .unwrap()
        .matmul(&ze)
        .unwrap()
        .matmul(&layer.theta_v)
        .unwrap();
    (prelu(&zv_pre, layer.slope_v), ze)
}

#[test]
fn matches_dense_oracle() {
    for seed in 0..10u64 {
        let mut rng = stream(seed, Purpose::Misc, 0);
        let h = random_hypergraph(8, 4, 4, 5, &mut rng);
        // drop a membership so that some hyperedge may go empty
        let mut edges = h.hyperedges().to_vec();
        edges[0].truncate(1);
        edges[1].clear();
        let weights: Vec<f64> = (0..4).map(|j| 0.5 + j as f64).collect();
        let view = HypergraphView::from_parts(h.features().clone(), edges.clone(), weights.clone());
        for self_loops in [false, true] {
            let params = EncoderParams::init(5, 6, 1, self_loops, &mut rng).unwrap();
            let got = encode_view(&view, &params).unwrap();
            let (mut e, mut w) = (edges.clone(), weights.clone());
            if self_loops {
                e.extend((0..8).map(|v| vec![v]));
                w.extend([1.0; 8]);
            }
            let (zv, ze) = dense_layer(&e, &w, &view.features, &params);
            assert!(got.nodes.max_abs_diff(&zv) < 1e-12);
            let ze = ze.select_rows(&(0..4).collect::<Vec<_>>());
            assert!(got.hyperedges.max_abs_diff(&ze) < 1e-12);
            assert!(got.hyperedges.row(1).iter().all(|&v| v == 0.0));
        }
    }
}

fn identity_encoder(dim: usize, self_loops: bool) -> EncoderParams {
    let mut p = EncoderParams::init(dim, dim, 1, self_loops, &mut stream(0, Purpose::Init, 0)).unwrap();
    p.layers[0].theta_e = Tensor::identity(dim);
    p.layers[0].theta_v = Tensor::identity(dim);
    p.layers[0].slope_e = 1.0;
    p.layers[0].slope_v = 1.0;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn permuting_nodes_permutes_node_rows(n in 2usize..15, m in 1usize..10, seed in any::<u64>()) {
        let mut rng = stream(seed, Purpose::Misc, 0);
        let h = random_hypergraph(n, m, 5, 3, &mut rng);
        let params = EncoderParams::init(3, 4, 1, true, &mut rng).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        // node v of h becomes node perm[v]
        let mut inverse = vec![0; n];
        for (v, &p) in perm.iter().enumerate() {
            inverse[p] = v;
        }
        let x = h.features().select_rows(&inverse);
        let edges = h.hyperedges().iter().map(|e| e.iter().map(|&v| perm[v]).collect()).collect();
        let permuted = Hypergraph::new(n, x, edges, None, None, None).unwrap();
        let a = embed(&h, &params).unwrap();
        let b = embed(&permuted, &params).unwrap();
        prop_assert!(b.nodes.max_abs_diff(&a.nodes.select_rows(&inverse)) < 1e-12);
        prop_assert!(b.hyperedges.max_abs_diff(&a.hyperedges) < 1e-12);
    }

    #[test]
    fn hyperedge_rows_lie_in_member_hull(n in 2usize..15, m in 1usize..10, seed in any::<u64>()) {
        let h = random_hypergraph(n, m, 5, 3, &mut stream(seed, Purpose::Misc, 0));
        let z = embed(&h, &identity_encoder(3, false)).unwrap();
        // with identity maps a hyperedge row is the mean of member features,
        // so each coordinate sits between the member extremes
        for (j, members) in h.hyperedges().iter().enumerate() {
            for c in 0..3 {
                let vals: Vec<f64> = members.iter().map(|&v| h.features().get(v, c)).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e = z.hyperedges.get(j, c);
                prop_assert!(e >= lo - 1e-12 && e <= hi + 1e-12);
            }
        }
    }
}

#[test]
fn gradients_pass_finite_difference_check() {
    for seed in 0..5u64 {
        let mut rng = stream(seed, Purpose::Misc, 0);
        let h = random_hypergraph(7, 4, 4, 3, &mut rng);
        let prop = Propagation::from_hypergraph(&h, true);
        let mut params = EncoderParams::init(3, 4, 2, true, &mut rng).unwrap().tensors();
        for (i, p) in params.iter_mut().enumerate() {
            if p.shape() == (1, 1) {
                p.set(0, 0, 0.1 + 0.15 * i as f64);
            }
        }
        let report = grad_check(
            |tape, vars| {
                let enc = EncoderVars {
                    layers: vars
                        .chunks(4)
                        .map(|c| LayerVars {
                            theta_e: c[0],
                            theta_v: c[1],
                            slope_e: c[2],
                            slope_v: c[3],
                        })
                        .collect(),
                };
                let out = encode(tape, &prop, &enc)?;
                let a = tape.frobenius_sq(out.nodes)?;
                let b = tape.reduce_sum(out.hyperedges)?;
                tape.add(a, b)
            },
            &params,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
