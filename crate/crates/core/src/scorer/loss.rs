//! Composite training objective on an (abnormal, normal) pair.
//!
//! `L = L_mil + w_mag L_mag + w_tri L_triplet + w_kl L_kl + w_abn L_abn`
//!
//! * `L_mil`: BCE of the top-k mean score against the video label, averaged
//!   over the pair.
//! * `L_mag`: hinge on the gap between the mean embedding norm of the
//!   abnormal top-k snippets and the mean embedding norm of the normal video.
//! * `L_triplet`: abnormal-memory reads at the abnormal top-k positions are
//!   pulled toward the abnormal memory centroid and pushed from the normal one.
//! * `L_kl`: KL divergence of the diagonal Gaussian fitted to the normal
//!   video's normal-memory reads from the standard normal.
//! * `L_abn`: BCE between abnormal scores and the dense pseudo labels.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Result, VadError};
use crate::linalg::{norm, Mat};
use crate::pseudo_label::{abnormal_loss, bce};
use crate::types::{FeatureStream, GlanceSet, PseudoLabelSeries};

use super::forward::{backward, forward_cached, OutputGrads};
use super::model::{ScorerModel, Tensor};

pub const MAGNITUDE_MARGIN: f64 = 1.0;
pub const TRIPLET_MARGIN: f64 = 1.0;
pub const KL_VAR_EPS: f64 = 1e-6;

/// One abnormal stream with its glances and current targets, plus one normal stream.
#[derive(Debug, Clone, Copy)]
pub struct TrainBatch<'a> {
    pub abnormal: &'a FeatureStream,
    pub normal: &'a FeatureStream,
    pub glances: &'a GlanceSet,
    pub pseudo_labels: &'a PseudoLabelSeries,
}

impl TrainBatch<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.abnormal.anomaly_class.is_normal() {
            return Err(VadError::InvalidValue(format!(
                "batch abnormal stream {} is labelled Normal",
                self.abnormal.video_id
            )));
        }
        if !self.normal.anomaly_class.is_normal() {
            return Err(VadError::InvalidValue(format!(
                "batch normal stream {} is labelled {}",
                self.normal.video_id, self.normal.anomaly_class
            )));
        }
        if self.pseudo_labels.len() != self.abnormal.snippet_count {
            return Err(VadError::LengthMismatch {
                left: self.pseudo_labels.len(),
                right: self.abnormal.snippet_count,
            });
        }
        self.glances.check_bounds(self.abnormal.snippet_count)
    }
}

/// Unweighted loss components and the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mil: f64,
    pub magnitude: f64,
    pub triplet: f64,
    pub kl: f64,
    pub abnormal: f64,
}

/// `ceil(ratio * len)` clamped to `[1, len]`.
pub fn topk_count(len: usize, ratio: f64) -> usize {
    ((ratio * len as f64).ceil() as usize).clamp(1, len.max(1))
}

/// Indices of the `k` highest scores; ties go to the lower index.
pub fn topk_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn centroid(m: &Mat) -> Vec<f64> {
    m.col_mean()
}

/// Loss value and the gradient for every parameter (flat, same layout as
/// `model.params`).
pub fn loss_total(model: &ScorerModel, batch: &TrainBatch<'_>, cfg: &PipelineConfig) -> Result<(LossBreakdown, Vec<f64>)> {
    batch.validate()?;
    let w = &cfg.loss;
    let h = model.dims.hidden_dim;
    let fa = forward_cached(model, batch.abnormal)?;
    let fn_ = forward_cached(model, batch.normal)?;
    let ta = fa.scores.len();
    let tn = fn_.scores.len();
    let mut ga = OutputGrads::zeros(ta, h);
    let mut gn = OutputGrads::zeros(tn, h);
    let mut grad = vec![0.0; model.params.len()];
    let mut out = LossBreakdown::default();

    let ka = topk_count(ta, cfg.topk_ratio);
    let kn = topk_count(tn, cfg.topk_ratio);
    let top_a = topk_indices(&fa.scores, ka);
    let top_n = topk_indices(&fn_.scores, kn);

    // MIL
    {
        let mean_a = top_a.iter().map(|&t| fa.scores[t]).sum::<f64>() / ka as f64;
        let mean_n = top_n.iter().map(|&t| fn_.scores[t]).sum::<f64>() / kn as f64;
        let (la, da) = bce(mean_a, 1.0);
        let (ln, dn) = bce(mean_n, 0.0);
        out.mil = 0.5 * (la + ln);
        for &t in &top_a {
            ga.scores[t] += 0.5 * da / ka as f64;
        }
        for &t in &top_n {
            gn.scores[t] += 0.5 * dn / kn as f64;
        }
    }

    // Feature magnitude
    {
        let norms_a: Vec<f64> = top_a.iter().map(|&t| norm(fa.embeddings.row(t))).collect();
        let norms_n: Vec<f64> = (0..tn).map(|t| norm(fn_.embeddings.row(t))).collect();
        let gap = norms_a.iter().sum::<f64>() / ka as f64 - norms_n.iter().sum::<f64>() / tn as f64;
        let hinge = MAGNITUDE_MARGIN - gap;
        if hinge > 0.0 {
            out.magnitude = hinge;
            for (&t, &nrm) in top_a.iter().zip(&norms_a) {
                if nrm > 0.0 {
                    let scale = -w.magnitude / (ka as f64 * nrm);
                    for (g, e) in ga.embeddings.row_mut(t).iter_mut().zip(fa.embeddings.row(t)) {
                        *g += scale * e;
                    }
                }
            }
            for (t, &nrm) in norms_n.iter().enumerate() {
                if nrm > 0.0 {
                    let scale = w.magnitude / (tn as f64 * nrm);
                    for (g, e) in gn.embeddings.row_mut(t).iter_mut().zip(fn_.embeddings.row(t)) {
                        *g += scale * e;
                    }
                }
            }
        }
    }

    // Triplet through the memories
    {
        let mem_a = model.mat(Tensor::AbnormalMemory);
        let mem_n = model.mat(Tensor::NormalMemory);
        let ca = centroid(&mem_a);
        let cn = centroid(&mem_n);
        let mut d_ca = vec![0.0; h];
        let mut d_cn = vec![0.0; h];
        let mut total = 0.0;
        for &t in &top_a {
            let r = fa.abnormal.reads.row(t);
            let to_pos: Vec<f64> = r.iter().zip(&ca).map(|(a, b)| a - b).collect();
            let to_neg: Vec<f64> = r.iter().zip(&cn).map(|(a, b)| a - b).collect();
            let dp = norm(&to_pos);
            let dn = norm(&to_neg);
            let l = dp - dn + TRIPLET_MARGIN;
            if l > 0.0 {
                total += l;
                let scale = w.triplet / ka as f64;
                let row = ga.abnormal_reads.row_mut(t);
                for j in 0..h {
                    let up = if dp > 0.0 { to_pos[j] / dp } else { 0.0 };
                    let un = if dn > 0.0 { to_neg[j] / dn } else { 0.0 };
                    row[j] += scale * (up - un);
                    d_ca[j] -= scale * up;
                    d_cn[j] += scale * un;
                }
            }
        }
        out.triplet = total / ka as f64;
        let slots = model.dims.memory_slots as f64;
        for (tensor, dc) in [(Tensor::AbnormalMemory, &d_ca), (Tensor::NormalMemory, &d_cn)] {
            let g = &mut grad[tensor.range(&model.dims)];
            for row in g.chunks_exact_mut(h) {
                for (acc, v) in row.iter_mut().zip(dc.iter()) {
                    *acc += v / slots;
                }
            }
        }
    }

    // KL of the normal-memory read distribution
    {
        let reads = &fn_.normal.reads;
        let mean = reads.col_mean();
        let mut var = vec![0.0; h];
        for t in 0..tn {
            for (v, (x, m)) in var.iter_mut().zip(reads.row(t).iter().zip(&mean)) {
                *v += (x - m) * (x - m);
            }
        }
        var.iter_mut().for_each(|v| *v = *v / tn as f64 + KL_VAR_EPS);
        out.kl = mean
            .iter()
            .zip(&var)
            .map(|(m, v)| 0.5 * (v + m * m - 1.0 - v.ln()))
            .sum::<f64>()
            / h as f64;
        let scale = w.kl / h as f64;
        for t in 0..tn {
            let row = gn.normal_reads.row_mut(t);
            for j in 0..h {
                let d_mean = mean[j] / tn as f64;
                let d_var = 0.5 * (1.0 - 1.0 / var[j]) * 2.0 * (reads[(t, j)] - mean[j]) / tn as f64;
                row[j] += scale * (d_mean + d_var);
            }
        }
    }

    // Dense pseudo-label supervision
    {
        let (l, g) = abnormal_loss(&fa.scores, &batch.pseudo_labels.values)?;
        out.abnormal = l;
        for (acc, v) in ga.scores.iter_mut().zip(g) {
            *acc += w.abnormal * v;
        }
    }

    out.total = out.mil + w.magnitude * out.magnitude + w.triplet * out.triplet + w.kl * out.kl + w.abnormal * out.abnormal;

    backward(model, &fa, &ga, &mut grad);
    backward(model, &fn_, &gn, &mut grad);
    Ok((out, grad))
}
