//! Frame-level ranking metrics and the evaluation harnesses built on them.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VadError};
use crate::scorer::{score, ScorerModel};
use crate::types::{expand_by_stride, FeatureStream, GlanceSet, GroundTruth, ScoreSeries};

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(VadError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(VadError::InvalidValue(format!("score {s} is not comparable")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(VadError::InvalidValue(format!("label {l} is not binary")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Area under the ROC curve: the probability that a random positive outranks
/// a random negative, ties counting one half. Computed from mid-ranks.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(VadError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Descending-score order with ties broken by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Step-wise (non-interpolated) average precision.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(VadError::SingleClass);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &k) in ranking(scores).iter().enumerate() {
        if labels[k] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// ROC points at every distinct threshold, starting from (0, 0).
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(VadError::SingleClass);
    }
    let order = ranking(scores);
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &k) in order.iter().enumerate() {
        if labels[k] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_tie = order.get(i + 1).is_none_or(|&n| scores[n] != scores[k]);
        if last_of_tie {
            out.push(RocPoint {
                threshold: scores[k],
                fpr: fp as f64 / neg as f64,
                tpr: tp as f64 / pos as f64,
            });
        }
    }
    Ok(out)
}

/// Precision/recall at every distinct threshold.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<PrPoint>> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(VadError::SingleClass);
    }
    let order = ranking(scores);
    let mut out = Vec::new();
    let mut tp = 0usize;
    for (i, &k) in order.iter().enumerate() {
        if labels[k] == 1 {
            tp += 1;
        }
        let last_of_tie = order.get(i + 1).is_none_or(|&n| scores[n] != scores[k]);
        if last_of_tie {
            out.push(PrPoint {
                threshold: scores[k],
                recall: tp as f64 / pos as f64,
                precision: tp as f64 / (i + 1) as f64,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub video_id: String,
    pub frames: usize,
    pub anomalous_frames: usize,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub ap: f64,
    pub frames: usize,
    pub per_video: Vec<VideoMetrics>,
    #[serde(skip)]
    pub roc: Vec<RocPoint>,
    #[serde(skip)]
    pub pr: Vec<PrPoint>,
}

impl EvalReport {
    /// `curve,threshold,x,y` rows: ROC as (fpr, tpr), PR as (recall, precision).
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("curve,threshold,x,y\n");
        for p in &self.roc {
            out.push_str(&format!("roc,{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        for p in &self.pr {
            out.push_str(&format!("pr,{},{},{}\n", p.threshold, p.recall, p.precision));
        }
        out
    }
}

/// Metrics over the frame-level concatenation of all scored videos, in
/// `series` order. Each snippet score is repeated `snippet_stride` times so
/// it aligns with frame labels. Ground truth without scores is ignored.
pub fn evaluate_scores(series: &[ScoreSeries], truth: &[GroundTruth]) -> Result<EvalReport> {
    let by_id: HashMap<&str, &GroundTruth> = truth.iter().map(|t| (t.video_id.as_str(), t)).collect();
    let mut all_scores = Vec::new();
    let mut all_labels = Vec::new();
    let mut per_video = Vec::new();
    for s in series {
        let gt = by_id
            .get(s.video_id.as_str())
            .ok_or_else(|| VadError::InvalidValue(format!("no ground truth for video {}", s.video_id)))?;
        if s.len() != gt.snippet_count {
            return Err(VadError::LengthMismatch {
                left: s.len(),
                right: gt.snippet_count,
            });
        }
        let frame_scores = expand_by_stride(&s.scores, gt.snippet_stride);
        let frame_labels = gt.frame_labels();
        per_video.push(VideoMetrics {
            video_id: gt.video_id.clone(),
            frames: frame_labels.len(),
            anomalous_frames: frame_labels.iter().filter(|&&l| l == 1).count(),
            auc: roc_auc(&frame_scores, &frame_labels).ok(),
            ap: average_precision(&frame_scores, &frame_labels).ok(),
        });
        all_scores.extend(frame_scores);
        all_labels.extend(frame_labels);
    }
    Ok(EvalReport {
        auc: roc_auc(&all_scores, &all_labels)?,
        ap: average_precision(&all_scores, &all_labels)?,
        frames: all_scores.len(),
        per_video,
        roc: roc_curve(&all_scores, &all_labels)?,
        pr: pr_curve(&all_scores, &all_labels)?,
    })
}

/// Scores every stream with `model`, then [`evaluate_scores`].
pub fn evaluate_dataset(model: &ScorerModel, videos: &[(FeatureStream, GroundTruth)]) -> Result<EvalReport> {
    let series = videos
        .iter()
        .map(|(s, _)| score(model, s))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<GroundTruth> = videos.iter().map(|(_, t)| t.clone()).collect();
    evaluate_scores(&series, &truth)
}

/// Clip-level binary scoring: the stream is cut into consecutive clips of
/// `clip_len` snippets and every snippet of a clip gets 1 if `oracle` answers
/// yes for it, else 0.
pub fn uniform_baseline<F>(streams: &[FeatureStream], clip_len: usize, mut oracle: F) -> Result<Vec<ScoreSeries>>
where
    F: FnMut(&FeatureStream, usize, usize) -> bool,
{
    if clip_len == 0 {
        return Err(VadError::InvalidValue("clip_len must be >= 1".into()));
    }
    Ok(streams
        .iter()
        .map(|s| {
            let t = s.snippet_count;
            let mut scores = vec![0.0; t];
            let mut start = 0;
            while start < t {
                let end = (start + clip_len).min(t);
                if oracle(s, start, end) {
                    scores[start..end].fill(1.0);
                }
                start = end;
            }
            ScoreSeries {
                video_id: s.video_id.clone(),
                scores,
            }
        })
        .collect())
}

/// Moves every glance by a uniform offset in `[-shift, shift]`, clipped to
/// `[0, len)`, then re-sorts and de-duplicates.
pub fn perturb_glances<R: Rng + ?Sized>(glances: &GlanceSet, shift: usize, rng: &mut R, len: usize) -> Result<GlanceSet> {
    if len == 0 {
        return Err(VadError::InvalidValue("cannot perturb within an empty series".into()));
    }
    let moved = glances
        .glances
        .iter()
        .map(|&g| {
            let offset = if shift == 0 {
                0
            } else {
                rng.random_range(-(shift as i64)..=shift as i64)
            };
            (g as i64 + offset).clamp(0, len as i64 - 1) as usize
        })
        .collect();
    GlanceSet::new(glances.video_id.clone(), glances.class.clone(), moved)
}
