use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Result, VadError};
use crate::pseudo_label::{init_pseudo_labels, update_pseudo_labels};
use crate::types::{FeatureStream, GlanceSet, PseudoLabelSeries};

use super::forward::score;
use super::loss::{loss_total, LossBreakdown, TrainBatch};
use super::model::ScorerModel;

/// A stream with its glance annotations (empty for normal videos).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingVideo {
    pub stream: FeatureStream,
    pub glances: GlanceSet,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let n = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if n > max_norm {
        let s = max_norm / n;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub loss: LossBreakdown,
    pub max_grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    /// `epoch,total,mil,magnitude,triplet,kl,abnormal` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,mil,magnitude,triplet,kl,abnormal\n");
        for e in &self.epochs {
            let l = &e.loss;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.epoch, l.total, l.mil, l.magnitude, l.triplet, l.kl, l.abnormal
            ));
        }
        out
    }
}

fn refresh_labels(
    model: &ScorerModel,
    video: &TrainingVideo,
    cfg: &PipelineConfig,
    first_epoch: bool,
) -> Result<PseudoLabelSeries> {
    let len = video.stream.snippet_count;
    if first_epoch {
        init_pseudo_labels(&video.glances, len, cfg)
    } else {
        let scores = score(model, &video.stream)?;
        update_pseudo_labels(&scores, &video.glances, cfg)
    }
}

/// Trains a scorer from scratch.
///
/// Each epoch first refreshes the pseudo labels of every abnormal video
/// (glance-only splats in the first epoch, mined from current scores after
/// that), then takes one Adam step per abnormal video, paired with a normal
/// video drawn from a shuffled cycle.
pub fn fit(dataset: &[TrainingVideo], cfg: &PipelineConfig) -> Result<(ScorerModel, TrainingLog)> {
    cfg.validate()?;
    let (abnormal, normal): (Vec<&TrainingVideo>, Vec<&TrainingVideo>) =
        dataset.iter().partition(|v| v.stream.anomaly_class.is_anomalous());
    if abnormal.is_empty() || normal.is_empty() {
        return Err(VadError::DegenerateDataset(format!(
            "need at least one abnormal and one normal stream (got {} / {})",
            abnormal.len(),
            normal.len()
        )));
    }
    let dim = dataset[0].stream.feature_dim;
    for v in dataset {
        if v.stream.feature_dim != dim {
            return Err(VadError::DimMismatch {
                expected: dim,
                found: v.stream.feature_dim,
            });
        }
        if v.glances.class.is_normal() != v.stream.anomaly_class.is_normal() {
            return Err(VadError::InvalidValue(format!(
                "annotation class of {} disagrees with its stream",
                v.stream.video_id
            )));
        }
        v.glances.check_bounds(v.stream.snippet_count)?;
    }

    let mut model = ScorerModel::from_config(dim, cfg)?;
    let mut adam = Adam::new(model.params.len(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(0x5eed));
    let mut log = TrainingLog::default();

    for epoch in 0..cfg.epochs {
        let labels: Vec<PseudoLabelSeries> = abnormal
            .iter()
            .map(|v| refresh_labels(&model, v, cfg, epoch == 0))
            .collect::<Result<_>>()?;

        let mut order: Vec<usize> = (0..abnormal.len()).collect();
        order.shuffle(&mut rng);
        let mut partners: Vec<usize> = (0..normal.len()).collect();
        partners.shuffle(&mut rng);

        let mut sum = LossBreakdown::default();
        let mut max_grad_norm: f64 = 0.0;
        for (step, &ai) in order.iter().enumerate() {
            let batch = TrainBatch {
                abnormal: &abnormal[ai].stream,
                normal: &normal[partners[step % partners.len()]].stream,
                glances: &abnormal[ai].glances,
                pseudo_labels: &labels[ai],
            };
            let (loss, mut grad) = loss_total(&model, &batch, cfg)?;
            max_grad_norm = max_grad_norm.max(clip_grad_norm(&mut grad, cfg.grad_clip));
            adam.step(&mut model.params, &grad);
            if !model.is_finite() {
                return Err(VadError::InvalidValue(format!("non-finite parameters after epoch {epoch} step {step}")));
            }
            sum.total += loss.total;
            sum.mil += loss.mil;
            sum.magnitude += loss.magnitude;
            sum.triplet += loss.triplet;
            sum.kl += loss.kl;
            sum.abnormal += loss.abnormal;
        }
        let n = order.len() as f64;
        let mean = LossBreakdown {
            total: sum.total / n,
            mil: sum.mil / n,
            magnitude: sum.magnitude / n,
            triplet: sum.triplet / n,
            kl: sum.kl / n,
            abnormal: sum.abnormal / n,
        };
        log::debug!("epoch {epoch}: total {:.5} mil {:.5} abn {:.5}", mean.total, mean.mil, mean.abnormal);
        log.epochs.push(EpochLog {
            epoch,
            steps: order.len(),
            loss: mean,
            max_grad_norm,
        });
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::forward::forward;
    use crate::types::ClassLabel;
    use rand::Rng;

    pub(crate) fn toy_pair() -> Vec<TrainingVideo> {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (t, d) = (24, 6);
        let mut abn: Vec<f32> = (0..t * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        for row in 10..15 {
            for j in 0..d {
                abn[row * d + j] += 2.0;
            }
        }
        let nor: Vec<f32> = (0..t * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        vec![
            TrainingVideo {
                stream: FeatureStream::new("a", t, d, abn, 16, ClassLabel::Explosion).unwrap(),
                glances: GlanceSet::new("a", ClassLabel::Explosion, vec![12]).unwrap(),
            },
            TrainingVideo {
                stream: FeatureStream::new("n", t, d, nor, 16, ClassLabel::Normal).unwrap(),
                glances: GlanceSet::normal("n"),
            },
        ]
    }

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            hidden_dim: 6,
            memory_slots: 3,
            local_window: 5,
            rng_seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn one_epoch_reduces_loss() {
        let data = toy_pair();
        let cfg = PipelineConfig { epochs: 1, ..small_cfg() };
        let labels = init_pseudo_labels(&data[0].glances, 24, &cfg).unwrap();
        let batch = TrainBatch {
            abnormal: &data[0].stream,
            normal: &data[1].stream,
            glances: &data[0].glances,
            pseudo_labels: &labels,
        };
        let init = ScorerModel::from_config(6, &cfg).unwrap();
        let before = loss_total(&init, &batch, &cfg).unwrap().0.total;
        let (trained, log) = fit(&data, &cfg).unwrap();
        let after = loss_total(&trained, &batch, &cfg).unwrap().0.total;
        assert_eq!(log.epochs.len(), 1);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn fit_is_bitwise_deterministic() {
        let data = toy_pair();
        let cfg = PipelineConfig { epochs: 3, learning_rate: 1e-2, ..small_cfg() };
        let (a, la) = fit(&data, &cfg).unwrap();
        let (b, lb) = fit(&data, &cfg).unwrap();
        assert_eq!(
            a.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(la, lb);
    }

    #[test]
    fn missing_class_is_degenerate() {
        let data = toy_pair();
        assert!(matches!(
            fit(&data[..1], &small_cfg()),
            Err(VadError::DegenerateDataset(_))
        ));
    }

    #[test]
    fn large_learning_rate_stays_finite() {
        let data = toy_pair();
        let cfg = PipelineConfig { epochs: 20, learning_rate: 0.5, ..small_cfg() };
        let (model, log) = fit(&data, &cfg).unwrap();
        assert!(model.is_finite());
        let out = forward(&model, &data[0].stream).unwrap();
        assert!(out.scores.scores.iter().all(|&s| s > 0.0 && s < 1.0));
        assert!(log.epochs.iter().all(|e| e.loss.total.is_finite()));
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![30.0, 40.0];
        assert_eq!(clip_grad_norm(&mut g, 10.0), 50.0);
        assert!((g[0] - 6.0).abs() < 1e-12 && (g[1] - 8.0).abs() < 1e-12);
    }
}
