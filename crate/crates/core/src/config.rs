//! Pipeline configuration with validated ranges and a stable content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, VadError};

/// How the Gaussian width of the pseudo-label splat is derived from `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMode {
    /// `sigma = r * T`
    Relative,
    /// `sigma = r` snippets
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub magnitude: f64,
    pub triplet: f64,
    pub kl: f64,
    pub abnormal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            magnitude: 0.1,
            triplet: 0.1,
            kl: 0.1,
            abnormal: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalConfig {
    /// Relative thresholds applied to the glance score.
    pub levels: Vec<f64>,
    pub pad: usize,
    pub normal_count: usize,
    pub normal_min_len: usize,
    pub normal_max_len: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            levels: vec![0.5, 0.7, 0.9],
            pad: 2,
            normal_count: 3,
            normal_min_len: 16,
            normal_max_len: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Relative mining threshold.
    pub alpha: f64,
    pub smoothing_ratio: f64,
    pub smoothing_mode: SmoothingMode,
    /// Sampling threshold applied at inference.
    pub theta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub topk_ratio: f64,
    pub local_window: usize,
    pub memory_slots: usize,
    pub hidden_dim: usize,
    pub rng_seed: u64,
    pub fallback_frames: usize,
    /// Gradient-norm clip applied before every optimizer step.
    pub grad_clip: f64,
    pub loss: LossWeights,
    pub proposals: ProposalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 0.9,
            smoothing_ratio: 0.1,
            smoothing_mode: SmoothingMode::Relative,
            theta: 0.8,
            learning_rate: 1e-4,
            epochs: 30,
            topk_ratio: 0.1,
            local_window: 9,
            memory_slots: 8,
            hidden_dim: 16,
            rng_seed: 0,
            fallback_frames: 8,
            grad_clip: 10.0,
            loss: LossWeights::default(),
            proposals: ProposalConfig::default(),
        }
    }
}

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(VadError::InvalidConfig(message()))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.alpha > 0.0 && self.alpha <= 1.0, || format!("alpha {} not in (0, 1]", self.alpha))?;
        check(self.smoothing_ratio > 0.0 && self.smoothing_ratio.is_finite(), || {
            format!("smoothing_ratio {} must be positive", self.smoothing_ratio)
        })?;
        check(self.theta > 0.0 && self.theta < 1.0, || format!("theta {} not in (0, 1)", self.theta))?;
        check(self.learning_rate > 0.0 && self.learning_rate.is_finite(), || {
            format!("learning_rate {} must be positive", self.learning_rate)
        })?;
        check(self.topk_ratio > 0.0 && self.topk_ratio <= 1.0, || {
            format!("topk_ratio {} not in (0, 1]", self.topk_ratio)
        })?;
        check(self.local_window >= 1, || "local_window must be >= 1".into())?;
        check(self.memory_slots >= 1, || "memory_slots must be >= 1".into())?;
        check(self.hidden_dim >= 1, || "hidden_dim must be >= 1".into())?;
        check(self.fallback_frames >= 1, || "fallback_frames must be >= 1".into())?;
        check(self.grad_clip > 0.0, || "grad_clip must be positive".into())?;
        let w = &self.loss;
        check(
            [w.magnitude, w.triplet, w.kl, w.abnormal]
                .iter()
                .all(|v| *v >= 0.0 && v.is_finite()),
            || "loss weights must be non-negative".into(),
        )?;
        let p = &self.proposals;
        check(!p.levels.is_empty(), || "proposal levels must be nonempty".into())?;
        check(p.levels.iter().all(|l| *l > 0.0 && *l <= 1.0), || {
            "proposal levels must lie in (0, 1]".into()
        })?;
        check(p.normal_min_len >= 1 && p.normal_min_len <= p.normal_max_len, || {
            "normal proposal length range is empty".into()
        })?;
        Ok(())
    }

    /// Gaussian width in snippets for a series of length `len`.
    pub fn sigma_for(&self, len: usize) -> f64 {
        match self.smoothing_mode {
            SmoothingMode::Relative => self.smoothing_ratio * len as f64,
            SmoothingMode::Absolute => self.smoothing_ratio,
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding (first 16 hex digits).
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Loads a TOML or JSON file; missing fields keep their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VadError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
            || text.trim_start().starts_with('{');
        let cfg: PipelineConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| VadError::ConfigParse(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| VadError::ConfigParse(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_values() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.alpha, 0.9);
        assert_eq!(cfg.smoothing_ratio, 0.1);
        assert_eq!(cfg.theta, 0.8);
        assert_eq!(cfg.learning_rate, 1e-4);
        cfg.validate().unwrap();
    }

    #[test]
    fn json_and_toml_round_trip() {
        let cfg = PipelineConfig {
            rng_seed: 42,
            loss: LossWeights { abnormal: 0.0, ..Default::default() },
            ..Default::default()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&json).unwrap(), cfg);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<PipelineConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "alpha = 0.5\n[loss]\nabnormal = 0.0\n").unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.loss.abnormal, 0.0);
        assert_eq!(cfg.loss.kl, 0.1);
        assert_eq!(cfg.theta, 0.8);
    }

    #[test]
    fn rejects_out_of_range() {
        let cfg = PipelineConfig {
            theta: 1.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(VadError::InvalidConfig(_))));
        let cfg = PipelineConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"alpah": 0.5}"#).unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(VadError::ConfigParse(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.rng_seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
