//! Dense pseudo-label generation from glance annotations.
//!
//! Mining expands each glance left and right while neighbouring scores stay
//! strictly above `alpha` times the glance score. The mined snippets are then
//! splatted with Gaussians and max-normalised into soft targets, which
//! supervise the scorer through a binary cross-entropy.

use std::collections::BTreeSet;

use crate::config::PipelineConfig;
use crate::error::{Result, VadError};
use crate::types::{GlanceSet, PseudoLabelSeries, ScoreSeries};

/// Probability clamp used by every BCE in the crate.
pub const BCE_EPS: f64 = 1e-7;

/// Bidirectional relative-threshold mining around each glance.
///
/// The walk from glance `g_i` stops at the first snippet whose score is not
/// strictly above `alpha * scores[g_i]`, and never reaches the neighbouring
/// glance (the first and last glances run to index 0 and `len - 1`). The glance
/// itself is always included.
pub fn mine_pseudo_snippets(scores: &[f64], glances: &[usize], alpha: f64) -> Result<BTreeSet<usize>> {
    if glances.is_empty() {
        return Err(VadError::EmptyGlanceSet);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(VadError::InvalidValue(format!("alpha {alpha} not in (0, 1]")));
    }
    let len = scores.len();
    if let Some(&index) = glances.iter().find(|&&g| g >= len) {
        return Err(VadError::GlanceOutOfRange { index, len });
    }
    if glances.windows(2).any(|w| w[0] >= w[1]) {
        return Err(VadError::InvalidValue("glances must be strictly increasing".into()));
    }

    let mut mined = BTreeSet::new();
    for (i, &g) in glances.iter().enumerate() {
        let threshold = alpha * scores[g];
        mined.insert(g);

        let lower = if i == 0 { 0 } else { glances[i - 1] + 1 };
        for t in (lower..g).rev() {
            if scores[t] > threshold {
                mined.insert(t);
            } else {
                break;
            }
        }

        let upper = glances.get(i + 1).map_or(len, |&next| next);
        for t in g + 1..upper {
            if scores[t] > threshold {
                mined.insert(t);
            } else {
                break;
            }
        }
    }
    Ok(mined)
}

/// Gaussian splat with an explicit width in snippets, max-normalised.
pub fn gaussian_splat_sigma(mined: &BTreeSet<usize>, len: usize, sigma: f64) -> PseudoLabelSeries {
    if mined.is_empty() || len == 0 {
        return PseudoLabelSeries::zeros(len);
    }
    let denom = 2.0 * sigma * sigma;
    let mut values: Vec<f64> = (0..len)
        .map(|t| {
            mined
                .iter()
                .map(|&c| {
                    let d = t as f64 - c as f64;
                    (-d * d / denom).exp()
                })
                .sum()
        })
        .collect();
    let peak = values.iter().cloned().fold(0.0, f64::max);
    for v in &mut values {
        *v /= peak;
    }
    PseudoLabelSeries {
        values,
        support: mined.iter().copied().filter(|&t| t < len).collect(),
    }
}

/// Gaussian splat with `sigma = r * len`.
pub fn gaussian_splat(mined: &BTreeSet<usize>, len: usize, r: f64) -> PseudoLabelSeries {
    gaussian_splat_sigma(mined, len, r * len as f64)
}

/// Clamped BCE averaged over snippets, with its gradient w.r.t. `predicted`.
pub fn abnormal_loss(predicted: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predicted.len() != target.len() {
        return Err(VadError::LengthMismatch {
            left: predicted.len(),
            right: target.len(),
        });
    }
    let n = predicted.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(predicted.len());
    for (&p, &y) in predicted.iter().zip(target) {
        let (l, g) = bce(p, y);
        loss += l;
        grad.push(g / n);
    }
    Ok((loss / n, grad))
}

/// Clamped BCE of one prediction and its derivative; the clamp has zero slope
/// outside `[BCE_EPS, 1 - BCE_EPS]`.
pub(crate) fn bce(p: f64, y: f64) -> (f64, f64) {
    let q = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let loss = -(y * q.ln() + (1.0 - y) * (1.0 - q).ln());
    let grad = if p > BCE_EPS && p < 1.0 - BCE_EPS {
        (q - y) / (q * (1.0 - q))
    } else {
        0.0
    };
    (loss, grad)
}

/// Targets before any model scores exist: the glances themselves are splatted.
pub fn init_pseudo_labels(glances: &GlanceSet, len: usize, cfg: &PipelineConfig) -> Result<PseudoLabelSeries> {
    glances.check_bounds(len)?;
    let mined: BTreeSet<usize> = glances.glances.iter().copied().collect();
    Ok(gaussian_splat_sigma(&mined, len, cfg.sigma_for(len)))
}

/// Re-mines around the glances with the current scores and re-splats.
pub fn update_pseudo_labels(
    scores: &ScoreSeries,
    glances: &GlanceSet,
    cfg: &PipelineConfig,
) -> Result<PseudoLabelSeries> {
    let len = scores.len();
    if glances.glances.is_empty() {
        return Ok(PseudoLabelSeries::zeros(len));
    }
    let mined = mine_pseudo_snippets(&scores.scores, &glances.glances, cfg.alpha)?;
    Ok(gaussian_splat_sigma(&mined, len, cfg.sigma_for(len)))
}
