//! Partition agreement: normalized mutual information and adjusted Rand
//! index.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Contingency counts with compacted cluster ids.
struct Contingency {
    table: HashMap<(usize, usize), usize>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    n: usize,
}

fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

impl Contingency {
    fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::shape(
                "partition",
                format!("lengths {} and {}", a.len(), b.len()),
            ));
        }
        let (a, ka) = compact(a);
        let (b, kb) = compact(b);
        let mut table = HashMap::new();
        let mut rows = vec![0; ka];
        let mut cols = vec![0; kb];
        for (&i, &j) in a.iter().zip(&b) {
            *table.entry((i, j)).or_insert(0) += 1;
            rows[i] += 1;
            cols[j] += 1;
        }
        Ok(Self {
            table,
            rows,
            cols,
            n: a.len(),
        })
    }

    /// Same partition up to relabeling.
    fn identical(&self) -> bool {
        self.table.len() == self.rows.len() && self.table.len() == self.cols.len()
    }
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(a; b) / sqrt(H(a) H(b))`; 1 for identical partitions, 0 when either
/// entropy vanishes otherwise.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    if c.n == 0 || c.identical() {
        return Ok(1.0);
    }
    let n = c.n as f64;
    let (ha, hb) = (entropy(&c.rows, n), entropy(&c.cols, n));
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mi: f64 = c
        .table
        .iter()
        .map(|(&(i, j), &nij)| {
            let nij = nij as f64;
            nij / n * (n * nij / (c.rows[i] as f64 * c.cols[j] as f64)).ln()
        })
        .sum();
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

fn pairs(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Pair-counting adjusted Rand index.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    let index: f64 = c.table.values().map(|&v| pairs(v)).sum();
    let sum_a: f64 = c.rows.iter().map(|&v| pairs(v)).sum();
    let sum_b: f64 = c.cols.iter().map(|&v| pairs(v)).sum();
    let total = pairs(c.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // both partitions trivial (all one cluster or all singletons)
        return Ok(if c.identical() { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}
