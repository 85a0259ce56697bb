//! The three training-loss terms and their combination.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::MLPModel;
use crate::error::{Error, Result};

const LOG_FLOOR: f64 = 1e-12;

/// Mean cross entropy over a batch with one-hot (attack, normal) labels.
/// Logs are floored at 1e-12 so a confident miss cannot produce infinity.
pub fn cross_entropy(probs: &Array2<f64>, labels: &Array2<f64>) -> Result<f64> {
    if probs.dim() != labels.dim() {
        return Err(Error::Dimension(format!(
            "probabilities {:?} vs labels {:?}",
            probs.dim(),
            labels.dim()
        )));
    }
    let m = probs.nrows() as f64;
    let mut total = 0.0;
    for (p, y) in probs.rows().into_iter().zip(labels.rows()) {
        for (pi, yi) in p.iter().zip(y.iter()) {
            if *yi != 0.0 {
                total -= yi * pi.max(LOG_FLOOR).ln();
            }
        }
    }
    Ok(total / m)
}

/// Which discrepancy estimate the MMD term uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MmdKind {
    /// Euclidean norm of the difference between the two batch feature means
    /// (the plain reading of the loss term). Default.
    #[default]
    MeanDifference,
    /// Unbiased Gaussian-kernel MMD^2 estimate, clamped at zero for the loss
    /// path. `bandwidth: None` selects the median pairwise distance of the
    /// pooled batches; gradients treat the bandwidth as a constant.
    Gaussian { bandwidth: Option<f64> },
}

/// MMD value only.
pub fn mmd(source: &Array2<f64>, target: &Array2<f64>, kind: &MmdKind) -> Result<f64> {
    mmd_with_grads(source, target, kind).map(|(v, _, _)| v)
}

/// MMD value plus its gradient with respect to each feature row of both
/// batches.
pub fn mmd_with_grads(
    source: &Array2<f64>,
    target: &Array2<f64>,
    kind: &MmdKind,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if source.nrows() == 0 || target.nrows() == 0 {
        return Err(Error::Empty("MMD batch".into()));
    }
    if source.ncols() != target.ncols() {
        return Err(Error::Dimension(format!(
            "feature widths differ: {} vs {}",
            source.ncols(),
            target.ncols()
        )));
    }
    match kind {
        MmdKind::MeanDifference => {
            let ms = source.nrows() as f64;
            let mt = target.nrows() as f64;
            let diff: Array1<f64> =
                source.mean_axis(Axis(0)).unwrap() - target.mean_axis(Axis(0)).unwrap();
            let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut gs = Array2::zeros(source.dim());
            let mut gt = Array2::zeros(target.dim());
            if norm > 1e-300 {
                let unit = &diff / norm;
                for mut row in gs.rows_mut() {
                    row.assign(&(&unit / ms));
                }
                for mut row in gt.rows_mut() {
                    row.assign(&(-&unit / mt));
                }
            }
            Ok((norm, gs, gt))
        }
        MmdKind::Gaussian { bandwidth } => gaussian_mmd(source, target, *bandwidth),
    }
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise distance over the pooled batches (zero distances skipped).
fn median_bandwidth(source: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let mut rows: Vec<ndarray::ArrayView1<f64>> = source.rows().into_iter().collect();
    rows.extend(target.rows());
    let mut dists = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d = sq_dist(rows[i], rows[j]).sqrt();
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    dists[dists.len() / 2]
}

fn gaussian_mmd(
    source: &Array2<f64>,
    target: &Array2<f64>,
    bandwidth: Option<f64>,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let m = source.nrows();
    let n = target.nrows();
    if m < 2 || n < 2 {
        return Err(Error::Validation(
            "unbiased kernel MMD needs at least 2 samples per batch".into(),
        ));
    }
    let bw = match bandwidth {
        Some(b) if b > 0.0 => b,
        Some(b) => {
            return Err(Error::Validation(format!("bandwidth must be positive, got {b}")))
        }
        None => median_bandwidth(source, target),
    };
    let two_sigma_sq = 2.0 * bw * bw;
    let kernel = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| -> f64 {
        (-sq_dist(a, b) / two_sigma_sq).exp()
    };

    let mut est = 0.0;
    let mut gs = Array2::<f64>::zeros(source.dim());
    let mut gt = Array2::<f64>::zeros(target.dim());

    // Within-source and within-target U-statistics. Each index appears both
    // as the first and the second argument across the ordered-pair sum, and
    // the two derivative contributions coincide by symmetry, hence the
    // factor 2 on top of dk/ds_i = k (s_j - s_i) / sigma^2.
    let c_ss = 1.0 / (m as f64 * (m as f64 - 1.0));
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let k = kernel(source.row(i), source.row(j));
            est += c_ss * k;
            let scale = 2.0 * c_ss * k * 2.0 / two_sigma_sq;
            for col in 0..source.ncols() {
                let diff = source[(j, col)] - source[(i, col)];
                gs[(i, col)] += scale * diff;
            }
        }
    }
    let c_tt = 1.0 / (n as f64 * (n as f64 - 1.0));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = kernel(target.row(i), target.row(j));
            est += c_tt * k;
            let scale = 2.0 * c_tt * k * 2.0 / two_sigma_sq;
            for col in 0..target.ncols() {
                let diff = target[(j, col)] - target[(i, col)];
                gt[(i, col)] += scale * diff;
            }
        }
    }
    let c_st = 2.0 / (m as f64 * n as f64);
    for i in 0..m {
        for j in 0..n {
            let k = kernel(source.row(i), target.row(j));
            est -= c_st * k;
            let scale = c_st * k * 2.0 / two_sigma_sq;
            for col in 0..source.ncols() {
                let diff = target[(j, col)] - source[(i, col)];
                gs[(i, col)] -= scale * diff;
                gt[(j, col)] += scale * diff;
            }
        }
    }

    // loss path clamps at zero; the unbiased estimate may dip below on
    // near-identical batches
    if est <= 0.0 {
        Ok((0.0, Array2::zeros(source.dim()), Array2::zeros(target.dim())))
    } else {
        Ok((est, gs, gt))
    }
}

/// Anti-collapse regularizer exp(-||Theta_J||_F): equal to 1 when the first
/// J weight matrices vanish and decaying as they grow.
pub fn weight_reg(model: &MLPModel) -> f64 {
    (-model.theta_j_frobenius()).exp()
}

/// Stage-1 objective: cross entropy + lambda * MMD + mu * regularizer.
pub fn combined_loss(ce: f64, mmd: f64, reg: f64, lambda: f64, mu: f64) -> f64 {
    ce + lambda * mmd + mu * reg
}
