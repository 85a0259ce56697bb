//! Exact analytic gradients of the combined stage-1 objective.
//!
//! Stage-1 batches are concatenated: the source block (the first
//! `labels.nrows()` rows, which carry labels) and the target block (the
//! remaining rows) go through the network as one batch, sharing batch-norm
//! statistics. Cross entropy reads the source block, the MMD term compares
//! the layer-J feature slices of the two blocks, and the exp-Frobenius
//! regularizer acts directly on the first J weight matrices. Batch-norm
//! gradients go through the shared batch statistics, not around them.

use ndarray::{s, Array1, Array2, Axis};

use super::loss::{mmd_with_grads, MmdKind};
use super::{MLPModel, TrainForward};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub d_gamma: Array1<f64>,
    pub d_beta: Array1<f64>,
    pub d_w: Array2<f64>,
    pub d_b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub d_head_w: Array2<f64>,
    pub d_head_b: Array1<f64>,
}

impl Gradients {
    fn zeros_like(model: &MLPModel) -> Gradients {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrads {
                    d_gamma: Array1::zeros(l.bn.gamma.len()),
                    d_beta: Array1::zeros(l.bn.beta.len()),
                    d_w: Array2::zeros(l.affine.w.dim()),
                    d_b: Array1::zeros(l.affine.b.len()),
                })
                .collect(),
            d_head_w: Array2::zeros(model.head.w.dim()),
            d_head_b: Array1::zeros(model.head.b.len()),
        }
    }

    /// Flatten in the canonical parameter order (matches
    /// [`MLPModel::to_param_vec`]).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.d_gamma.iter());
            out.extend(l.d_beta.iter());
            out.extend(l.d_w.iter());
            out.extend(l.d_b.iter());
        }
        out.extend(self.d_head_w.iter());
        out.extend(self.d_head_b.iter());
        out
    }
}

/// Gradients of ce + lambda * mmd + mu * exp(-||Theta_J||_F) with respect to
/// every trainable parameter, over a joint forward cache.
///
/// The source block is `cache` rows 0..labels.nrows(); any remaining rows
/// form the target block. A positive lambda requires a nonempty target
/// block; lambda = 0 ignores it entirely.
pub fn backward(
    model: &MLPModel,
    cache: &TrainForward,
    labels: &Array2<f64>,
    lambda: f64,
    mu: f64,
    mmd_kind: &MmdKind,
) -> Result<Gradients> {
    let rows = cache.probs.nrows();
    let m_s = labels.nrows();
    if m_s == 0 || m_s > rows {
        return Err(Error::Dimension(format!(
            "label block of {m_s} rows does not fit a batch of {rows}"
        )));
    }
    if labels.ncols() != cache.probs.ncols() {
        return Err(Error::Dimension("labels must be one-hot pairs".into()));
    }
    if lambda != 0.0 && m_s == rows {
        return Err(Error::Validation(
            "a positive lambda needs target rows appended to the batch".into(),
        ));
    }

    let mut grads = Gradients::zeros_like(model);
    let n_layers = model.layers.len();
    let j = model.cfg.mmd_depth;
    let slope = model.cfg.leaky_slope;
    let m = rows as f64;

    // softmax + cross entropy collapse to (p - y) / m_s on the source block;
    // target rows feed no gradient into the head
    let mut d_logits = Array2::zeros(cache.probs.dim());
    {
        let src_probs = cache.probs.slice(s![..m_s, ..]);
        let mut block = d_logits.slice_mut(s![..m_s, ..]);
        block.assign(&((&src_probs - labels) / m_s as f64));
    }

    // MMD gradient enters at the layer-J activation
    let mmd_inject: Option<Array2<f64>> = if lambda != 0.0 {
        let feats = cache.features_at(j);
        let fs = feats.slice(s![..m_s, ..]).to_owned();
        let ft = feats.slice(s![m_s.., ..]).to_owned();
        let (_, gs, gt) = mmd_with_grads(&fs, &ft, mmd_kind)?;
        let mut inject = Array2::zeros(feats.dim());
        inject.slice_mut(s![..m_s, ..]).assign(&(&gs * lambda));
        inject.slice_mut(s![m_s.., ..]).assign(&(&gt * lambda));
        Some(inject)
    } else {
        None
    };

    // reverse pass: head, then layers top-down
    let h_last = &cache.layers[n_layers - 1].h;
    grads.d_head_w = h_last.t().dot(&d_logits);
    grads.d_head_b = d_logits.sum_axis(Axis(0));
    let mut dh = d_logits.dot(&model.head.w.t());

    for l in (0..n_layers).rev() {
        if let Some(inject) = &mmd_inject {
            if j == l + 1 {
                dh += inject;
            }
        }
        let c = &cache.layers[l];
        let layer = &model.layers[l];

        // Leaky ReLU
        let dz = ndarray::Zip::from(&dh)
            .and(&c.z)
            .map_collect(|&g, &z| if z > 0.0 { g } else { slope * g });

        // affine
        grads.layers[l].d_w += &c.u.t().dot(&dz);
        grads.layers[l].d_b += &dz.sum_axis(Axis(0));
        let du = dz.dot(&layer.affine.w.t());

        // batch norm, through the shared batch statistics
        grads.layers[l].d_gamma += &(&du * &c.x_hat).sum_axis(Axis(0));
        grads.layers[l].d_beta += &du.sum_axis(Axis(0));
        let dxhat = &du * &layer.bn.gamma;
        let stddev = c.var.mapv(|v| (v + model.cfg.bn_epsilon).sqrt());
        let sum_dxhat = dxhat.sum_axis(Axis(0));
        let sum_dxhat_xhat = (&dxhat * &c.x_hat).sum_axis(Axis(0));
        // dx = (m*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat)) / (m*s)
        let mut dx = &dxhat * m;
        dx -= &sum_dxhat;
        dx -= &(&c.x_hat * &sum_dxhat_xhat);
        dx /= &(stddev.mapv(|v| v * m));
        dh = dx;
    }

    if mu != 0.0 {
        let norm = model.theta_j_frobenius();
        if norm > 0.0 {
            let scale = -mu * (-norm).exp() / norm;
            for l in 0..j {
                grads.layers[l].d_w += &(&model.layers[l].affine.w * scale);
            }
        }
        // at exactly zero the Frobenius gradient is left at zero
    }

    Ok(grads)
}
