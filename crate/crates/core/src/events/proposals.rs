use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::ProposalConfig;
use crate::error::{Result, VadError};
use crate::types::{ClassLabel, EventProposal, GlanceSet, ScoreSeries};

/// Maximal run around `g` whose scores exceed `threshold`; `g` itself is
/// always part of the run.
fn run_around(scores: &[f64], g: usize, threshold: f64) -> (usize, usize) {
    let mut lo = g;
    while lo > 0 && scores[lo - 1] > threshold {
        lo -= 1;
    }
    let mut hi = g;
    while hi + 1 < scores.len() && scores[hi + 1] > threshold {
        hi += 1;
    }
    (lo, hi)
}

/// Multi-level clips around each glance: for every level `λ` the maximal
/// contiguous run around the glance with scores above `λ * score[g]`, padded
/// and clipped. Identical spans are kept once, first occurrence wins.
pub fn generate_event_proposals(
    scores: &ScoreSeries,
    glances: &GlanceSet,
    cfg: &ProposalConfig,
) -> Result<Vec<EventProposal>> {
    if glances.glances.is_empty() {
        return Err(VadError::EmptyGlanceSet);
    }
    if scores.video_id != glances.video_id {
        return Err(VadError::InvalidValue(format!(
            "scores for {} paired with glances for {}",
            scores.video_id, glances.video_id
        )));
    }
    let len = scores.len();
    glances.check_bounds(len)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &g in &glances.glances {
        for &level in &cfg.levels {
            let (lo, hi) = run_around(&scores.scores, g, level * scores.scores[g]);
            let start = lo.saturating_sub(cfg.pad);
            let end = (hi + cfg.pad).min(len - 1);
            if seen.insert((start, end)) {
                out.push(EventProposal {
                    video_id: scores.video_id.clone(),
                    start,
                    end,
                    label: glances.class.clone(),
                    source_glance: Some(g),
                });
            }
        }
    }
    Ok(out)
}

/// Stable per-video seed so proposal draws do not depend on processing order.
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(key.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// `count` random clips of a normal video. Lengths are uniform over
/// `[min_len, max_len]` (capped at `len`), starts uniform over the positions
/// where the clip fits.
pub fn generate_normal_proposals(
    video_id: &str,
    len: usize,
    count: usize,
    length_range: (usize, usize),
    seed: u64,
) -> Result<Vec<EventProposal>> {
    let (min_len, max_len) = length_range;
    if count == 0 {
        return Ok(Vec::new());
    }
    if len == 0 {
        return Err(VadError::InvalidValue(format!("{video_id} has no snippets to propose from")));
    }
    if min_len == 0 || min_len > max_len {
        return Err(VadError::InvalidValue(format!("invalid length range [{min_len}, {max_len}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let clip = rng.random_range(min_len..=max_len).min(len);
            let start = rng.random_range(0..=len - clip);
            EventProposal {
                video_id: video_id.to_string(),
                start,
                end: start + clip - 1,
                label: ClassLabel::Normal,
                source_glance: None,
            }
        })
        .collect())
}
