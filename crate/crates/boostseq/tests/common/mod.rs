//! Shared test oracles, independent of the implementation paths they check.

#![allow(dead_code)]

use boostseq::matrix::{LabelMatrix, SeqMatrix};
use boostseq::rng::SplitRng;
use rand::Rng;

/// Exhaustive pair-counting AUC: fraction of (positive, negative) pairs with
/// the positive scored higher, ties counted one half.
pub fn auc_by_pair_counting(scores: &[f64], labels: &[i8]) -> Option<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == -1)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for &p in &pos {
        for &n in &neg {
            total += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(total / (pos.len() * neg.len()) as f64)
}

/// Average precision by explicit threshold enumeration over the distinct
/// scores, step-wise interpolation.
pub fn ap_by_threshold_enumeration(scores: &[f64], labels: &[i8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for &thr in &thresholds {
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| s >= thr && l == 1)
            .count();
        let fp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| s >= thr && l == -1)
            .count();
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

/// Monte-Carlo reference for the two-sided one-sample t-test p-value:
/// the t statistic of n iid normals is exactly t-distributed, so the tail
/// fraction over many simulations converges to the true p.
pub fn t_test_p_by_monte_carlo(t_obs: f64, n: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = SplitRng::new(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                // Box-Muller from two uniforms
                let u1: f64 = rng.rng().random_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.rng().random_range(0.0..1.0);
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        if var == 0.0 {
            continue;
        }
        let t = mean / (var / n as f64).sqrt();
        if t.abs() >= t_obs.abs() {
            hits += 1;
        }
    }
    hits as f64 / samples as f64
}

/// Uniform random scores and labels with at least one of each class.
pub fn random_instance(rng: &mut SplitRng, max_len: usize) -> (Vec<f64>, Vec<i8>) {
    loop {
        let n = rng.rng().random_range(2..=max_len);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                // quantized scores provoke ties
                let v: f64 = rng.rng().random_range(0.0..1.0);
                (v * 8.0).round() / 8.0
            })
            .collect();
        let labels: Vec<i8> = (0..n)
            .map(|_| if rng.rng().random_range(0.0..1.0) < 0.4 { 1 } else { -1 })
            .collect();
        if labels.contains(&1) && labels.contains(&-1) {
            return (scores, labels);
        }
    }
}

/// Random logits matrix and labels for weight-oracle sweeps.
pub fn random_logits_and_labels(
    rng: &mut SplitRng,
    rows: usize,
    cols: usize,
) -> (SeqMatrix, LabelMatrix) {
    let mut logits = SeqMatrix::zeros(rows, cols);
    let mut labels = Vec::with_capacity(rows * cols);
    for t in 0..rows {
        for j in 0..cols {
            logits.set(t, j, rng.rng().random_range(-3.0..3.0));
            labels.push(if rng.rng().random_range(0.0..1.0) < 0.5 {
                1
            } else {
                -1
            });
        }
    }
    (logits, LabelMatrix::new(rows, cols, labels).unwrap())
}

/// Relative discrepancy with a unit floor, matching the gradient checker.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0f64.max(a.abs()).max(b.abs())
}
