//! Central finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::pseudo_label::{gaussian_splat_sigma, mine_pseudo_snippets};
use crate::types::{ClassLabel, FeatureStream, GlanceSet};

use super::loss::{loss_total, TrainBatch};
use super::model::{ScorerModel, Tensor};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Step of the fourth-order central stencil.
pub const FD_STEP: f64 = 1e-4;
/// Denominator floor of the relative error, so gradients that are zero up
/// to rounding do not blow the ratio up.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstEntry {
    pub seed: u64,
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub seed: u64,
    pub snippets: [usize; 2],
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub memory_slots: usize,
    pub params_checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub cases: Vec<CaseReport>,
    pub max_rel_error: f64,
    pub worst: Option<WorstEntry>,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn random_stream(rng: &mut ChaCha8Rng, id: &str, t: usize, d: usize, class: ClassLabel) -> FeatureStream {
    let features = (0..t * d).map(|_| rng.random_range(-1.5f32..1.5)).collect();
    FeatureStream::new(id, t, d, features, 16, class).expect("finite random stream")
}

/// Checks every parameter of a random small model for one seed.
pub fn check_case(seed: u64, base: &PipelineConfig) -> Result<(CaseReport, Option<WorstEntry>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ta = rng.random_range(2..=12);
    let tn = rng.random_range(2..=12);
    let d = rng.random_range(1..=8);
    let h = rng.random_range(2..=8);
    let k = rng.random_range(1..=4);
    let cfg = PipelineConfig {
        hidden_dim: h,
        memory_slots: k,
        local_window: rng.random_range(1..=5),
        topk_ratio: 0.3,
        rng_seed: seed,
        ..base.clone()
    };
    let abnormal = random_stream(&mut rng, "a", ta, d, ClassLabel::Fighting);
    let normal = random_stream(&mut rng, "n", tn, d, ClassLabel::Normal);
    let glance = rng.random_range(0..ta);
    let glances = GlanceSet::new("a", ClassLabel::Fighting, vec![glance])?;
    let prior: Vec<f64> = (0..ta).map(|_| rng.random_range(0.0..1.0)).collect();
    let mined = mine_pseudo_snippets(&prior, &glances.glances, cfg.alpha)?;
    let labels = gaussian_splat_sigma(&mined, ta, cfg.sigma_for(ta));

    let mut model = ScorerModel::from_config(d, &cfg)?;
    // Larger head weights keep the scores away from 0.5 so every loss term
    // has a non-trivial gradient.
    for w in model.tensor_mut(Tensor::HeadWeight) {
        *w *= 3.0;
    }
    let batch = TrainBatch {
        abnormal: &abnormal,
        normal: &normal,
        glances: &glances,
        pseudo_labels: &labels,
    };
    let (_, analytic) = loss_total(&model, &batch, &cfg)?;

    let mut worst: Option<WorstEntry> = None;
    let mut max_rel: f64 = 0.0;
    for tensor in Tensor::ALL {
        for (local, i) in tensor.range(&model.dims).enumerate() {
            let orig = model.params[i];
            let mut at = |offset: f64| -> Result<f64> {
                model.params[i] = orig + offset;
                Ok(loss_total(&model, &batch, &cfg)?.0.total)
            };
            let (p1, m1) = (at(FD_STEP)?, at(-FD_STEP)?);
            let (p2, m2) = (at(2.0 * FD_STEP)?, at(-2.0 * FD_STEP)?);
            model.params[i] = orig;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * FD_STEP);
            let rel = relative_error(analytic[i], numeric);
            if rel > max_rel || worst.is_none() {
                max_rel = max_rel.max(rel);
                worst = Some(WorstEntry {
                    seed,
                    tensor: tensor.name().to_string(),
                    index: local,
                    analytic: analytic[i],
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok((
        CaseReport {
            seed,
            snippets: [ta, tn],
            input_dim: d,
            hidden_dim: h,
            memory_slots: k,
            params_checked: model.params.len(),
            max_rel_error: max_rel,
        },
        worst,
    ))
}

/// Runs [`check_case`] for `seeds` consecutive seeds starting at `cfg.rng_seed`.
pub fn gradient_check(cfg: &PipelineConfig, seeds: u64) -> Result<GradCheckReport> {
    let mut cases = Vec::new();
    let mut worst: Option<WorstEntry> = None;
    for s in 0..seeds {
        let (case, w) = check_case(cfg.rng_seed.wrapping_add(s), cfg)?;
        if let Some(w) = w {
            if worst.as_ref().is_none_or(|cur| w.rel_error > cur.rel_error) {
                worst = Some(w);
            }
        }
        cases.push(case);
    }
    let max_rel_error = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        cases,
        max_rel_error,
        worst,
        tolerance: GRADCHECK_TOLERANCE,
        passed: max_rel_error < GRADCHECK_TOLERANCE,
    })
}
