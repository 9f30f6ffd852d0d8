//! Anomaly-aware frame selection for the downstream analysis stage.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Anomalous,
    NormalFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledFrames {
    pub video_id: String,
    pub verdict: Verdict,
    pub indices: Vec<usize>,
}

/// Indices whose score is strictly above `theta`, ascending.
pub fn select_frames(scores: &[f64], theta: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > theta)
        .map(|(i, _)| i)
        .collect()
}

/// `m` evenly spaced indices over `[0, len)`; all indices when `m >= len`.
pub fn uniform_indices(len: usize, m: usize) -> Vec<usize> {
    if m >= len {
        return (0..len).collect();
    }
    let mut out: Vec<usize> = (0..m).map(|i| i * len / m).collect();
    out.dedup();
    out
}

/// Thresholded selection, or a uniform fallback of `m` snippets when nothing
/// clears `theta`. `max_frames` optionally thins an over-long selection to
/// evenly spaced members.
pub fn sample_for_downstream(scores: &[f64], theta: f64, m: usize, max_frames: Option<usize>) -> (Vec<usize>, Verdict) {
    let selected = select_frames(scores, theta);
    if selected.is_empty() {
        return (uniform_indices(scores.len(), m.max(1)), Verdict::NormalFallback);
    }
    match max_frames {
        Some(cap) if cap >= 1 && selected.len() > cap => {
            let keep = uniform_indices(selected.len(), cap);
            (keep.into_iter().map(|i| selected[i]).collect(), Verdict::Anomalous)
        }
        _ => (selected, Verdict::Anomalous),
    }
}
