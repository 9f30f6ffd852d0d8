use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Result, VadError};
use crate::linalg::Mat;

/// Shape hyper-parameters of a [`ScorerModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub memory_slots: usize,
    pub local_window: usize,
}

impl ModelDims {
    pub fn from_config(input_dim: usize, cfg: &PipelineConfig) -> Self {
        ModelDims {
            input_dim,
            hidden_dim: cfg.hidden_dim,
            memory_slots: cfg.memory_slots,
            local_window: cfg.local_window,
        }
    }

    /// Half-width of the local attention band; a window of `w` covers
    /// positions `i - w/2 ..= i + w/2`.
    pub fn local_radius(&self) -> usize {
        self.local_window / 2
    }

    pub fn param_count(&self) -> usize {
        Tensor::ALL.iter().map(|t| t.len(self)).sum()
    }
}

/// Named parameter tensors, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tensor {
    InputWeight,
    InputBias,
    GlobalQuery,
    GlobalKey,
    GlobalValue,
    LocalQuery,
    LocalKey,
    LocalValue,
    AbnormalMemory,
    NormalMemory,
    HeadWeight,
    HeadBias,
}

impl Tensor {
    pub const ALL: [Tensor; 12] = [
        Tensor::InputWeight,
        Tensor::InputBias,
        Tensor::GlobalQuery,
        Tensor::GlobalKey,
        Tensor::GlobalValue,
        Tensor::LocalQuery,
        Tensor::LocalKey,
        Tensor::LocalValue,
        Tensor::AbnormalMemory,
        Tensor::NormalMemory,
        Tensor::HeadWeight,
        Tensor::HeadBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tensor::InputWeight => "input.weight",
            Tensor::InputBias => "input.bias",
            Tensor::GlobalQuery => "global.query",
            Tensor::GlobalKey => "global.key",
            Tensor::GlobalValue => "global.value",
            Tensor::LocalQuery => "local.query",
            Tensor::LocalKey => "local.key",
            Tensor::LocalValue => "local.value",
            Tensor::AbnormalMemory => "memory.abnormal",
            Tensor::NormalMemory => "memory.normal",
            Tensor::HeadWeight => "head.weight",
            Tensor::HeadBias => "head.bias",
        }
    }

    pub fn shape(self, d: &ModelDims) -> (usize, usize) {
        let h = d.hidden_dim;
        match self {
            Tensor::InputWeight => (d.input_dim, h),
            Tensor::InputBias => (1, h),
            Tensor::GlobalQuery
            | Tensor::GlobalKey
            | Tensor::GlobalValue
            | Tensor::LocalQuery
            | Tensor::LocalKey
            | Tensor::LocalValue => (h, h),
            Tensor::AbnormalMemory | Tensor::NormalMemory => (d.memory_slots, h),
            Tensor::HeadWeight => (h, 1),
            Tensor::HeadBias => (1, 1),
        }
    }

    pub fn len(self, d: &ModelDims) -> usize {
        let (r, c) = self.shape(d);
        r * c
    }

    fn fan_in(self, d: &ModelDims) -> usize {
        match self {
            Tensor::InputWeight | Tensor::InputBias => d.input_dim,
            _ => d.hidden_dim,
        }
    }

    pub fn offset(self, d: &ModelDims) -> usize {
        Tensor::ALL
            .iter()
            .take_while(|&&t| t != self)
            .map(|t| t.len(d))
            .sum()
    }

    pub fn range(self, d: &ModelDims) -> std::ops::Range<usize> {
        let start = self.offset(d);
        start..start + self.len(d)
    }
}

/// Parameters of the anomaly scoring network, stored as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    pub dims: ModelDims,
    pub seed: u64,
    pub params: Vec<f64>,
}

impl ScorerModel {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per tensor, drawn in storage
    /// order from a ChaCha stream seeded with `seed`.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        if dims.input_dim == 0 || dims.hidden_dim == 0 || dims.memory_slots == 0 || dims.local_window == 0 {
            return Err(VadError::InvalidConfig(format!("degenerate model dims {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(dims.param_count());
        for t in Tensor::ALL {
            let bound = 1.0 / (t.fan_in(&dims) as f64).sqrt();
            for _ in 0..t.len(&dims) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Ok(ScorerModel { dims, seed, params })
    }

    pub fn from_config(input_dim: usize, cfg: &PipelineConfig) -> Result<Self> {
        ScorerModel::init(ModelDims::from_config(input_dim, cfg), cfg.rng_seed)
    }

    pub fn tensor(&self, t: Tensor) -> &[f64] {
        &self.params[t.range(&self.dims)]
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [f64] {
        let r = t.range(&self.dims);
        &mut self.params[r]
    }

    pub fn mat(&self, t: Tensor) -> Mat {
        let (r, c) = t.shape(&self.dims);
        Mat::from_vec(r, c, self.tensor(t).to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HVADCK01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub dims: ModelDims,
    pub seed: u64,
    pub config_hash: String,
    pub param_count: usize,
}

/// Checkpoint layout: magic, u32 LE header length, JSON header, then the
/// parameters as little-endian f64.
pub fn encode_checkpoint(model: &ScorerModel, config_hash: &str) -> Result<Vec<u8>> {
    if !model.is_finite() {
        return Err(VadError::Checkpoint("model has non-finite parameters".into()));
    }
    let header = CheckpointHeader {
        format_version: 1,
        dims: model.dims,
        seed: model.seed,
        config_hash: config_hash.to_string(),
        param_count: model.params.len(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| VadError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * model.params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ScorerModel, CheckpointHeader)> {
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(VadError::Checkpoint("missing HVADCK01 magic".into()));
    }
    let header_len = u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
    let body = &bytes[12..];
    if body.len() < header_len {
        return Err(VadError::Checkpoint("truncated header".into()));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&body[..header_len]).map_err(|e| VadError::Checkpoint(e.to_string()))?;
    if header.format_version != 1 {
        return Err(VadError::Checkpoint(format!("unsupported version {}", header.format_version)));
    }
    if header.param_count != header.dims.param_count() {
        return Err(VadError::Checkpoint(format!(
            "param_count {} does not match dims ({})",
            header.param_count,
            header.dims.param_count()
        )));
    }
    let blob = &body[header_len..];
    if blob.len() != 8 * header.param_count {
        return Err(VadError::Checkpoint(format!(
            "parameter blob is {} bytes, expected {}",
            blob.len(),
            8 * header.param_count
        )));
    }
    let params: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let model = ScorerModel {
        dims: header.dims,
        seed: header.seed,
        params,
    };
    if !model.is_finite() {
        return Err(VadError::Checkpoint("non-finite parameter in blob".into()));
    }
    Ok((model, header))
}

pub fn save_checkpoint(model: &ScorerModel, config_hash: &str, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model, config_hash)?;
    std::fs::write(path, bytes).map_err(|e| VadError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ScorerModel, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| VadError::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims {
            input_dim: 5,
            hidden_dim: 4,
            memory_slots: 3,
            local_window: 3,
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let d = dims();
        let mut next = 0;
        for t in Tensor::ALL {
            assert_eq!(t.offset(&d), next);
            next += t.len(&d);
        }
        assert_eq!(next, d.param_count());
        assert_eq!(d.param_count(), 20 + 4 + 6 * 16 + 2 * 12 + 4 + 1);
    }

    #[test]
    fn init_respects_bounds_and_seed() {
        let d = dims();
        let a = ScorerModel::init(d, 3).unwrap();
        let b = ScorerModel::init(d, 3).unwrap();
        let c = ScorerModel::init(d, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, c.params);
        let bound = 1.0 / 5f64.sqrt();
        assert!(a.tensor(Tensor::InputWeight).iter().all(|v| v.abs() <= bound));
        let bound = 0.5;
        assert!(a.tensor(Tensor::NormalMemory).iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = ScorerModel::init(dims(), 11).unwrap();
        let bytes = encode_checkpoint(&m, "abc").unwrap();
        let (back, header) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(header.config_hash, "abc");
        assert_eq!(encode_checkpoint(&back, "abc").unwrap(), bytes);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }
}
