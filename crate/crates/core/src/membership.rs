//! Membership hops and k-hop membership sets.
//!
//! The membership hop of `(v, e)` is the largest clique-expansion distance
//! from `v` to a member of `e`. Distances come from a breadth-first search
//! that alternates node → hyperedge → node over the incidence lists, so the
//! clique expansion is never built. Each search is truncated at `K + 1`
//! clique hops because nothing further is ever used.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;

/// Clique-expansion distances from `anchor`, omitting nodes farther than
/// `depth_limit`.
pub fn node_hops(h: &Hypergraph, anchor: usize, depth_limit: usize) -> Result<BTreeMap<usize, usize>> {
    if anchor >= h.num_nodes() {
        return Err(Error::NodeOutOfRange {
            id: anchor,
            num_nodes: h.num_nodes(),
        });
    }
    if depth_limit == 0 {
        return Err(Error::InvalidArgument("depth_limit must be at least 1".into()));
    }
    let mut bfs = Bfs::new(h);
    bfs.run(h, anchor, depth_limit);
    Ok(bfs.reached.iter().map(|&v| (v, bfs.dist[v] as usize)).collect())
}

const UNSEEN: u32 = u32::MAX;

/// Reusable truncated BFS buffers.
struct Bfs {
    dist: Vec<u32>,
    edge_seen: Vec<bool>,
    reached: Vec<usize>,
    touched_edges: Vec<usize>,
}

impl Bfs {
    fn new(h: &Hypergraph) -> Self {
        Self {
            dist: vec![UNSEEN; h.num_nodes()],
            edge_seen: vec![false; h.num_hyperedges()],
            reached: Vec::new(),
            touched_edges: Vec::new(),
        }
    }

    fn reset(&mut self) {
        for &v in &self.reached {
            self.dist[v] = UNSEEN;
        }
        for &e in &self.touched_edges {
            self.edge_seen[e] = false;
        }
        self.reached.clear();
        self.touched_edges.clear();
    }

    /// Fills `dist` for nodes within `limit` hops, and records every
    /// hyperedge incident to a reached node in `touched_edges`.
    fn run(&mut self, h: &Hypergraph, anchor: usize, limit: usize) {
        self.reset();
        self.dist[anchor] = 0;
        self.reached.push(anchor);
        let mut frontier_start = 0;
        for depth in 0..=limit {
            let frontier_end = self.reached.len();
            if frontier_start == frontier_end {
                break;
            }
            for idx in frontier_start..frontier_end {
                let v = self.reached[idx];
                for &e in h.node_hyperedges(v) {
                    if self.edge_seen[e] {
                        continue;
                    }
                    self.edge_seen[e] = true;
                    self.touched_edges.push(e);
                    if depth == limit {
                        continue;
                    }
                    for &u in h.hyperedge(e) {
                        if self.dist[u] == UNSEEN {
                            self.dist[u] = depth as u32 + 1;
                            self.reached.push(u);
                        }
                    }
                }
            }
            frontier_start = frontier_end;
        }
    }

    /// Membership hop of `e`, or `None` if some member is beyond the search.
    fn edge_hop(&self, h: &Hypergraph, e: usize) -> Option<usize> {
        let mut worst = 0;
        for &u in h.hyperedge(e) {
            match self.dist[u] {
                UNSEEN => return None,
                d => worst = worst.max(d as usize),
            }
        }
        Some(worst)
    }
}

/// `M_k(v)` for every node and `k = 1..=K+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipIndex {
    hops: usize,
    /// sets[v][k - 1] = sorted hyperedge ids of M_k(v)
    sets: Vec<Vec<Vec<usize>>>,
}

impl MembershipIndex {
    /// Hop range `K`; sets are stored for `1..=K+1`.
    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn num_nodes(&self) -> usize {
        self.sets.len()
    }

    /// `M_k(v)`; empty for `k` outside `1..=K+1`.
    pub fn set(&self, v: usize, k: usize) -> &[usize] {
        if k == 0 || k > self.hops + 1 {
            return &[];
        }
        &self.sets[v][k - 1]
    }

    /// All sets of `v` keyed by hop.
    pub fn sets_of(&self, v: usize) -> BTreeMap<usize, Vec<usize>> {
        (1..=self.hops + 1).map(|k| (k, self.set(v, k).to_vec())).collect()
    }
}

/// Builds the index on the original hypergraph. A hyperedge joins `M_k(v)`
/// when all its members lie within `K + 1` hops and the farthest is at `k`;
/// hop-0 singletons `{v}` are left out.
pub fn build_index(h: &Hypergraph, hops: usize) -> Result<MembershipIndex> {
    if hops == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let limit = hops + 1;
    let mut bfs = Bfs::new(h);
    let mut sets = Vec::with_capacity(h.num_nodes());
    for v in 0..h.num_nodes() {
        bfs.run(h, v, limit);
        let mut per_hop = vec![Vec::new(); limit];
        for &e in &bfs.touched_edges {
            if let Some(k) = bfs.edge_hop(h, e) {
                if (1..=limit).contains(&k) {
                    per_hop[k - 1].push(e);
                }
            }
        }
        per_hop.iter_mut().for_each(|s| s.sort_unstable());
        sets.push(per_hop);
    }
    Ok(MembershipIndex { hops, sets })
}

/// Uniform draws from `M_k(v)` (positives) and `M_{k+1}(v)` (negatives).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampledPairs {
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    /// Set when either pool is empty; the `(v, k)` term is then dropped.
    pub skip: bool,
}

/// Samples `min(d, |M_k(v)|)` positives and `min(d, |M_{k+1}(v)|)`
/// negatives without replacement.
pub fn sample_pairs<R: Rng>(
    index: &MembershipIndex,
    v: usize,
    k: usize,
    d: usize,
    rng: &mut R,
) -> Result<SampledPairs> {
    if k == 0 || k > index.hops {
        return Err(Error::InvalidArgument(format!("hop {k} outside 1..={}", index.hops)));
    }
    if v >= index.num_nodes() {
        return Err(Error::NodeOutOfRange {
            id: v,
            num_nodes: index.num_nodes(),
        });
    }
    let pos_pool = index.set(v, k);
    let neg_pool = index.set(v, k + 1);
    if pos_pool.is_empty() || neg_pool.is_empty() {
        return Ok(SampledPairs {
            positives: Vec::new(),
            negatives: Vec::new(),
            skip: true,
        });
    }
    let positives = pos_pool.choose_multiple(rng, d).copied().collect();
    let negatives = neg_pool.choose_multiple(rng, d).copied().collect();
    Ok(SampledPairs {
        positives,
        negatives,
        skip: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor;
    use crate::rng::{stream, Purpose};

    fn graph(n: usize, edges: Vec<Vec<usize>>) -> Hypergraph {
        Hypergraph::new(n, Tensor::zeros(n, 1), edges, None, None, None).unwrap()
    }

    #[test]
    fn chain_distances() {
        let h = graph(6, vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 4, 5]]);
        let hops = node_hops(&h, 0, 10).unwrap();
        let expect: BTreeMap<usize, usize> = [(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (5, 4)].into();
        assert_eq!(hops, expect);
        let truncated = node_hops(&h, 0, 2).unwrap();
        assert_eq!(truncated.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn isolated_anchor() {
        let h = graph(3, vec![vec![0, 1]]);
        let hops = node_hops(&h, 2, 3).unwrap();
        assert_eq!(hops, [(2, 0)].into());
        assert!(node_hops(&h, 3, 1).is_err());
    }

    #[test]
    fn clique_members_at_one_hop() {
        let h = graph(5, vec![vec![0, 1, 2, 3, 4]]);
        let hops = node_hops(&h, 2, 1).unwrap();
        assert!(hops.iter().all(|(&v, &d)| d == usize::from(v != 2)));
    }

    #[test]
    fn index_on_small_chain() {
        let h = graph(6, vec![vec![0, 1], vec![1, 2], vec![3, 4, 5], vec![2, 3]]);
        let idx = build_index(&h, 3).unwrap();
        assert_eq!(idx.set(0, 1), &[0]);
        assert_eq!(idx.set(0, 2), &[1]);
        assert_eq!(idx.set(0, 3), &[3]);
        assert_eq!(idx.set(0, 4), &[2]);
    }

    #[test]
    fn singleton_is_never_indexed() {
        let h = graph(3, vec![vec![0], vec![0, 1], vec![1, 2]]);
        let idx = build_index(&h, 2).unwrap();
        for k in 1..=3 {
            assert!(!idx.set(0, k).contains(&0));
        }
        assert_eq!(idx.set(0, 1), &[1]);
        // another node's singleton is an ordinary hyperedge at its distance
        assert_eq!(idx.set(1, 1), &[0, 1, 2]);
    }

    #[test]
    fn sampling_undersized_and_skip() {
        let h = graph(6, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![3, 4]]);
        let idx = build_index(&h, 1).unwrap();
        let mut rng = stream(1, Purpose::Membership, 0);
        let s = sample_pairs(&idx, 0, 1, 10, &mut rng).unwrap();
        assert!(!s.skip);
        let mut pos = s.positives.clone();
        pos.sort_unstable();
        assert_eq!(pos, vec![0, 1, 2]);
        assert_eq!(s.negatives, vec![3]);
        // node 5 is isolated: nothing to contrast
        assert!(sample_pairs(&idx, 5, 1, 10, &mut rng).unwrap().skip);
        // a lone pair has no second-hop hyperedge to use as a negative
        let h2 = graph(2, vec![vec![0, 1]]);
        let idx2 = build_index(&h2, 1).unwrap();
        assert!(sample_pairs(&idx2, 0, 1, 10, &mut rng).unwrap().skip);
        assert!(sample_pairs(&idx2, 0, 2, 10, &mut rng).is_err());
    }
}
