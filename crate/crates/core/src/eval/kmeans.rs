//! Lloyd's k-means with k-means++ seeding.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

pub const MAX_ITERS: usize = 300;
/// Convergence threshold on the summed squared centroid shift, relative to
/// the mean per-column variance of the data.
pub const TOLERANCE: f64 = 1e-4;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centroids<R: Rng>(z: &Tensor, k: usize, rng: &mut R) -> Tensor {
    let n = z.rows();
    let mut centroids = Tensor::zeros(k, z.cols());
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(z.row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(z.row(i), z.row(first))).collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&closest) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a centroid
            Err(_) => rng.gen_range(0..n),
        };
        centroids.row_mut(c).copy_from_slice(z.row(pick));
        for (i, d) in closest.iter_mut().enumerate() {
            *d = d.min(sq_dist(z.row(i), z.row(pick)));
        }
    }
    centroids
}

fn assign(z: &Tensor, centroids: &Tensor, labels: &mut [usize], dists: &mut [f64]) {
    for i in 0..z.rows() {
        let (best, d) = (0..centroids.rows())
            .map(|c| (c, sq_dist(z.row(i), centroids.row(c))))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        labels[i] = best;
        dists[i] = d;
    }
}

/// Moves the point farthest from its centroid (lowest index on ties) into
/// each empty cluster, taking only from clusters with more than one point.
fn repair_empty(labels: &mut [usize], dists: &mut [f64], counts: &mut [usize]) {
    for c in 0..counts.len() {
        if counts[c] > 0 {
            continue;
        }
        let donor =
            (0..labels.len())
                .filter(|&i| counts[labels[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
        if let Some(i) = donor {
            counts[labels[i]] -= 1;
            labels[i] = c;
            counts[c] = 1;
            dists[i] = 0.0;
        }
    }
}

fn single_run<R: Rng>(z: &Tensor, k: usize, tol: f64, rng: &mut R) -> Vec<usize> {
    let (n, dim) = z.shape();
    let mut centroids = seed_centroids(z, k, rng);
    let mut labels = vec![0; n];
    let mut dists = vec![0.0; n];
    for _ in 0..MAX_ITERS {
        assign(z, &centroids, &mut labels, &mut dists);
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        repair_empty(&mut labels, &mut dists, &mut counts);

        let mut next = Tensor::zeros(k, dim);
        for (i, &l) in labels.iter().enumerate() {
            for (acc, x) in next.row_mut(l).iter_mut().zip(z.row(i)) {
                *acc += x;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            let inv = 1.0 / count.max(1) as f64;
            next.row_mut(c).iter_mut().for_each(|x| *x *= inv);
        }
        let shift: f64 = (0..k).map(|c| sq_dist(next.row(c), centroids.row(c))).sum();
        centroids = next;
        if shift <= tol {
            break;
        }
    }
    assign(z, &centroids, &mut labels, &mut dists);
    labels
}

/// Independent runs, each seeded from its own sub-stream.
pub fn kmeans(z: &Tensor, k: usize, runs: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = z.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be >= 1".into()));
    }
    if !z.all_finite() {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let dim = z.cols();
    let mut variance = 0.0;
    for c in 0..dim {
        let col: Vec<f64> = (0..n).map(|r| z.get(r, c)).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        variance += col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    }
    let tol = TOLERANCE * variance / dim.max(1) as f64;
    Ok((0..runs)
        .map(|r| single_run(z, k, tol, &mut stream(seed, Purpose::KMeans, r as u64)))
        .collect())
}
