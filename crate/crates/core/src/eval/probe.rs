//! Linear-probe node classification on frozen embeddings.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mean_std;
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::trainer::{adam_step, AdamConfig, AdamState};

/// Resampling budget for drawing a training split that covers every class.
pub const SPLIT_RETRIES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.1,
            val: 0.1,
            test: 0.8,
            repeats: 20,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.val, self.test];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions {fr:?} must be in [0, 1] and sum to 1"
            )));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidArgument("repeats must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fixed recipe for the logistic-regression probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learning_rate: 1e-2,
            l2: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random split whose training part contains every class; resampled up to
/// [`SPLIT_RETRIES`] times.
pub fn random_split(labels: &[usize], num_classes: usize, spec: &SplitSpec, repeat: usize) -> Result<Split> {
    spec.validate()?;
    let n = labels.len();
    let n_train = (spec.train * n as f64).round() as usize;
    let n_val = ((spec.val * n as f64).round() as usize).min(n - n_train);
    let mut rng = stream(spec.seed, Purpose::Split, repeat as u64);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..=SPLIT_RETRIES {
        order.shuffle(&mut rng);
        let mut seen = vec![false; num_classes];
        order[..n_train].iter().for_each(|&i| seen[labels[i]] = true);
        if seen.iter().all(|&s| s) {
            return Ok(Split {
                train: order[..n_train].to_vec(),
                val: order[n_train..n_train + n_val].to_vec(),
                test: order[n_train + n_val..].to_vec(),
            });
        }
    }
    let mut seen = vec![false; num_classes];
    labels.iter().for_each(|&l| seen[l] = true);
    let class = seen.iter().position(|s| !s).unwrap_or(0);
    Err(Error::ClassAbsent {
        class,
        retries: SPLIT_RETRIES,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub accuracies: Vec<f64>,
}

/// Softmax logits `x W + b`.
fn logits(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let mut out = x.matmul(w).expect("probe shapes agree");
    for r in 0..out.rows() {
        for (o, bias) in out.row_mut(r).iter_mut().zip(b.as_slice()) {
            *o += bias;
        }
    }
    out
}

fn accuracy(x: &Tensor, y: &[usize], w: &Tensor, b: &Tensor) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let out = logits(x, w, b);
    let hits = y
        .iter()
        .enumerate()
        .filter(|&(r, &label)| {
            let row = out.row(r);
            let best = (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best });
            best == label
        })
        .count();
    hits as f64 / y.len() as f64
}

/// Trains one probe and returns its test accuracy at the iterate with the
/// best validation accuracy (earliest on ties; training accuracy stands in
/// when the validation split is empty).
pub fn probe_once(z: &Tensor, labels: &[usize], num_classes: usize, split: &Split, cfg: &ProbeConfig) -> Result<f64> {
    let dim = z.cols();
    let n_train = split.train.len() as f64;
    let xs = [&split.train, &split.val, &split.test].map(|rows| z.select_rows(rows));
    let ys = [&split.train, &split.val, &split.test].map(|rows| rows.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let select = if split.val.is_empty() { 0 } else { 1 };

    let mut params = vec![Tensor::zeros(dim, num_classes), Tensor::zeros(1, num_classes)];
    let mut state = AdamState::new(&params);
    let adam = AdamConfig {
        lr: cfg.learning_rate,
        ..Default::default()
    };
    let mut best = (
        accuracy(&xs[select], &ys[select], &params[0], &params[1]),
        params.clone(),
    );
    for _ in 0..cfg.steps {
        let mut probs = logits(&xs[0], &params[0], &params[1]);
        for (r, &y) in ys[0].iter().enumerate() {
            let row = probs.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            row.iter_mut().for_each(|x| {
                *x = (*x - max).exp();
                sum += *x;
            });
            row.iter_mut().for_each(|x| *x /= sum);
            row[y] -= 1.0;
        }
        probs.as_mut_slice().iter_mut().for_each(|x| *x /= n_train);
        let mut gw = xs[0].transpose().matmul(&probs)?;
        gw.axpy(cfg.l2, &params[0]);
        let mut gb = Tensor::zeros(1, num_classes);
        for r in 0..probs.rows() {
            for (g, x) in gb.as_mut_slice().iter_mut().zip(probs.row(r)) {
                *g += x;
            }
        }
        adam_step(&mut params, &[gw, gb], &mut state, &adam)?;
        let acc = accuracy(&xs[select], &ys[select], &params[0], &params[1]);
        if acc > best.0 {
            best = (acc, params.clone());
        }
    }
    Ok(accuracy(&xs[2], &ys[2], &best.1[0], &best.1[1]))
}

/// Repeated random-split linear probe.
pub fn linear_probe(
    z: &Tensor,
    labels: Option<&[usize]>,
    num_classes: usize,
    spec: &SplitSpec,
    cfg: &ProbeConfig,
) -> Result<ClassificationReport> {
    let labels = labels.ok_or(Error::MissingLabels)?;
    if labels.len() != z.rows() {
        return Err(Error::shape(
            "linear_probe",
            format!("{} labels for {} embeddings", labels.len(), z.rows()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} >= {num_classes} classes")));
    }
    if !z.all_finite() {
        return Err(Error::NonFinite("probe embeddings".into()));
    }
    let accuracies = (0..spec.repeats)
        .map(|r| {
            let split = random_split(labels, num_classes, spec, r)?;
            probe_once(z, labels, num_classes, &split, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean_accuracy, std_accuracy) = mean_std(&accuracies);
    Ok(ClassificationReport {
        mean_accuracy,
        std_accuracy,
        accuracies,
    })
}
