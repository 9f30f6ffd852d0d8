//! Forward pass of the scorer and its hand-written reverse pass.
//!
//! ```text
//! E0 = X W_in + b_in
//! E  = E0 + GlobalAttn(E0) + LocalAttn(E0)
//! s  = sigmoid(E w_head + b_head)
//! R_bank = softmax(E M_bank^T / sqrt(H)) M_bank     for bank in {abnormal, normal}
//! ```
//!
//! Both attentions are single-head scaled dot-product; the local one is
//! restricted to the band `|i - j| <= local_window / 2`.

use crate::error::{Result, VadError};
use crate::linalg::{dot, sigmoid, softmax_in_place, Mat};
use crate::types::{FeatureStream, ScoreSeries};

use super::model::{ScorerModel, Tensor};

/// Logits are clamped to this magnitude so scores stay inside (0, 1).
pub const LOGIT_CLAMP: f64 = 30.0;

pub struct ForwardOutput {
    pub scores: ScoreSeries,
    pub embeddings: Mat,
    pub abnormal_reads: Mat,
    pub normal_reads: Mat,
}

pub(crate) struct AttentionCache {
    q: Mat,
    k: Mat,
    v: Mat,
    /// Row-stochastic weights; zero outside the band.
    weights: Mat,
    radius: Option<usize>,
}

pub(crate) struct MemoryCache {
    pub(crate) weights: Mat,
    pub(crate) reads: Mat,
}

pub(crate) struct ForwardCache {
    x: Mat,
    e0: Mat,
    global: AttentionCache,
    local: AttentionCache,
    pub(crate) embeddings: Mat,
    pub(crate) logits: Vec<f64>,
    pub(crate) scores: Vec<f64>,
    pub(crate) abnormal: MemoryCache,
    pub(crate) normal: MemoryCache,
}

fn band(i: usize, len: usize, radius: Option<usize>) -> std::ops::Range<usize> {
    match radius {
        Some(r) => i.saturating_sub(r)..(i + r + 1).min(len),
        None => 0..len,
    }
}

fn attention(e0: &Mat, wq: &Mat, wk: &Mat, wv: &Mat, radius: Option<usize>) -> (Mat, AttentionCache) {
    let t = e0.rows;
    let scale = 1.0 / (e0.cols as f64).sqrt();
    let q = e0.matmul(wq);
    let k = e0.matmul(wk);
    let v = e0.matmul(wv);
    let mut weights = Mat::zeros(t, t);
    let mut out = Mat::zeros(t, v.cols);
    for i in 0..t {
        let range = band(i, t, radius);
        let mut row: Vec<f64> = range.clone().map(|j| dot(q.row(i), k.row(j)) * scale).collect();
        softmax_in_place(&mut row);
        for (j, &a) in range.zip(&row) {
            weights[(i, j)] = a;
            for (o, &vv) in out.row_mut(i).iter_mut().zip(v.row(j)) {
                *o += a * vv;
            }
        }
    }
    (
        out,
        AttentionCache {
            q,
            k,
            v,
            weights,
            radius,
        },
    )
}

/// Returns d(e0) contributed through this attention block and accumulates
/// the projection gradients.
fn attention_backward(
    cache: &AttentionCache,
    e0: &Mat,
    d_out: &Mat,
    wq: &Mat,
    wk: &Mat,
    wv: &Mat,
    grads: [&mut [f64]; 3],
) -> Mat {
    let t = e0.rows;
    let scale = 1.0 / (e0.cols as f64).sqrt();
    let a = &cache.weights;
    let mut d_scores = Mat::zeros(t, t);
    let mut d_v = Mat::zeros(t, cache.v.cols);
    for i in 0..t {
        let range = band(i, t, cache.radius);
        let d_a: Vec<f64> = range.clone().map(|j| dot(d_out.row(i), cache.v.row(j))).collect();
        let mean: f64 = range.clone().zip(&d_a).map(|(j, g)| a[(i, j)] * g).sum();
        for (j, g) in range.zip(&d_a) {
            let aij = a[(i, j)];
            d_scores[(i, j)] = aij * (g - mean) * scale;
            for (dv, &go) in d_v.row_mut(j).iter_mut().zip(d_out.row(i)) {
                *dv += aij * go;
            }
        }
    }
    let d_q = d_scores.matmul(&cache.k);
    let d_k = d_scores.t_matmul(&cache.q);
    let [g_q, g_k, g_v] = grads;
    for (g, d) in [(g_q, &d_q), (g_k, &d_k), (g_v, &d_v)] {
        for (acc, v) in g.iter_mut().zip(&e0.t_matmul(d).data) {
            *acc += v;
        }
    }
    let mut d_e0 = d_q.matmul_t(wq);
    d_e0.add_assign(&d_k.matmul_t(wk));
    d_e0.add_assign(&d_v.matmul_t(wv));
    d_e0
}

/// Softmax-attention read of a memory bank by every embedding.
pub fn memory_read(embeddings: &Mat, memory: &Mat) -> (Mat, Mat) {
    let scale = 1.0 / (embeddings.cols as f64).sqrt();
    let mut weights = embeddings.matmul_t(memory);
    for i in 0..weights.rows {
        let row = weights.row_mut(i);
        row.iter_mut().for_each(|v| *v *= scale);
        softmax_in_place(row);
    }
    let reads = weights.matmul(memory);
    (weights, reads)
}

/// Returns d(embeddings) and accumulates d(memory).
fn memory_backward(cache: &MemoryCache, embeddings: &Mat, memory: &Mat, d_reads: &Mat, d_memory: &mut [f64]) -> Mat {
    let scale = 1.0 / (embeddings.cols as f64).sqrt();
    let p = &cache.weights;
    let d_p = d_reads.matmul_t(memory);
    let mut d_logits = Mat::zeros(p.rows, p.cols);
    for i in 0..p.rows {
        let mean = dot(p.row(i), d_p.row(i));
        for j in 0..p.cols {
            d_logits[(i, j)] = p[(i, j)] * (d_p[(i, j)] - mean) * scale;
        }
    }
    let from_values = p.t_matmul(d_reads);
    let from_keys = d_logits.t_matmul(embeddings);
    for ((acc, a), b) in d_memory.iter_mut().zip(&from_values.data).zip(&from_keys.data) {
        *acc += a + b;
    }
    d_logits.matmul(memory)
}

pub(crate) fn forward_cached(model: &ScorerModel, stream: &FeatureStream) -> Result<ForwardCache> {
    let dims = &model.dims;
    if stream.feature_dim != dims.input_dim {
        return Err(VadError::DimMismatch {
            expected: dims.input_dim,
            found: stream.feature_dim,
        });
    }
    let t = stream.snippet_count;
    let x = Mat::from_vec(t, stream.feature_dim, stream.features.iter().map(|&v| v as f64).collect());

    let mut e0 = x.matmul(&model.mat(Tensor::InputWeight));
    let bias = model.tensor(Tensor::InputBias);
    for i in 0..t {
        for (v, b) in e0.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }

    let (g_out, global) = attention(
        &e0,
        &model.mat(Tensor::GlobalQuery),
        &model.mat(Tensor::GlobalKey),
        &model.mat(Tensor::GlobalValue),
        None,
    );
    let (l_out, local) = attention(
        &e0,
        &model.mat(Tensor::LocalQuery),
        &model.mat(Tensor::LocalKey),
        &model.mat(Tensor::LocalValue),
        Some(dims.local_radius()),
    );
    let mut embeddings = e0.clone();
    embeddings.add_assign(&g_out);
    embeddings.add_assign(&l_out);

    let head = model.tensor(Tensor::HeadWeight);
    let head_bias = model.tensor(Tensor::HeadBias)[0];
    let logits: Vec<f64> = (0..t).map(|i| dot(embeddings.row(i), head) + head_bias).collect();
    let scores = logits
        .iter()
        .map(|&z| sigmoid(z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)))
        .collect();

    let (aw, ar) = memory_read(&embeddings, &model.mat(Tensor::AbnormalMemory));
    let (nw, nr) = memory_read(&embeddings, &model.mat(Tensor::NormalMemory));

    Ok(ForwardCache {
        x,
        e0,
        global,
        local,
        embeddings,
        logits,
        scores,
        abnormal: MemoryCache { weights: aw, reads: ar },
        normal: MemoryCache { weights: nw, reads: nr },
    })
}

/// Upstream gradients arriving at the outputs of one forward pass.
pub(crate) struct OutputGrads {
    pub scores: Vec<f64>,
    pub embeddings: Mat,
    pub abnormal_reads: Mat,
    pub normal_reads: Mat,
}

impl OutputGrads {
    pub fn zeros(t: usize, h: usize) -> Self {
        OutputGrads {
            scores: vec![0.0; t],
            embeddings: Mat::zeros(t, h),
            abnormal_reads: Mat::zeros(t, h),
            normal_reads: Mat::zeros(t, h),
        }
    }
}

/// Accumulates parameter gradients of one forward pass into `grad`.
pub(crate) fn backward(model: &ScorerModel, cache: &ForwardCache, up: &OutputGrads, grad: &mut [f64]) {
    let dims = &model.dims;
    let t = cache.scores.len();
    let head = model.tensor(Tensor::HeadWeight).to_vec();

    let d_logits: Vec<f64> = (0..t)
        .map(|i| {
            if cache.logits[i].abs() > LOGIT_CLAMP {
                0.0
            } else {
                let s = cache.scores[i];
                up.scores[i] * s * (1.0 - s)
            }
        })
        .collect();

    let mut d_emb = up.embeddings.clone();
    {
        let g_head = &mut grad[Tensor::HeadWeight.range(dims)];
        for i in 0..t {
            for (g, e) in g_head.iter_mut().zip(cache.embeddings.row(i)) {
                *g += d_logits[i] * e;
            }
            for (d, w) in d_emb.row_mut(i).iter_mut().zip(&head) {
                *d += d_logits[i] * w;
            }
        }
    }
    grad[Tensor::HeadBias.range(dims)][0] += d_logits.iter().sum::<f64>();

    for (bank, mem_cache, d_reads) in [
        (Tensor::AbnormalMemory, &cache.abnormal, &up.abnormal_reads),
        (Tensor::NormalMemory, &cache.normal, &up.normal_reads),
    ] {
        let memory = model.mat(bank);
        let d = memory_backward(mem_cache, &cache.embeddings, &memory, d_reads, &mut grad[bank.range(dims)]);
        d_emb.add_assign(&d);
    }

    // E = E0 + G + L, so every branch receives d_emb.
    let mut d_e0 = d_emb.clone();
    for (cache_attn, [tq, tk, tv]) in [
        (&cache.global, [Tensor::GlobalQuery, Tensor::GlobalKey, Tensor::GlobalValue]),
        (&cache.local, [Tensor::LocalQuery, Tensor::LocalKey, Tensor::LocalValue]),
    ] {
        let (wq, wk, wv) = (model.mat(tq), model.mat(tk), model.mat(tv));
        let mut gq = vec![0.0; tq.len(dims)];
        let mut gk = vec![0.0; tk.len(dims)];
        let mut gv = vec![0.0; tv.len(dims)];
        let d = attention_backward(cache_attn, &cache.e0, &d_emb, &wq, &wk, &wv, [&mut gq, &mut gk, &mut gv]);
        for (tensor, g) in [(tq, gq), (tk, gk), (tv, gv)] {
            for (acc, v) in grad[tensor.range(dims)].iter_mut().zip(g) {
                *acc += v;
            }
        }
        d_e0.add_assign(&d);
    }

    let d_w_in = cache.x.t_matmul(&d_e0);
    for (acc, v) in grad[Tensor::InputWeight.range(dims)].iter_mut().zip(&d_w_in.data) {
        *acc += v;
    }
    let g_bias = &mut grad[Tensor::InputBias.range(dims)];
    for i in 0..t {
        for (acc, v) in g_bias.iter_mut().zip(d_e0.row(i)) {
            *acc += v;
        }
    }
}

/// Scores, embeddings and memory reads of one stream.
pub fn forward(model: &ScorerModel, stream: &FeatureStream) -> Result<ForwardOutput> {
    let cache = forward_cached(model, stream)?;
    Ok(ForwardOutput {
        scores: ScoreSeries {
            video_id: stream.video_id.clone(),
            scores: cache.scores,
        },
        embeddings: cache.embeddings,
        abnormal_reads: cache.abnormal.reads,
        normal_reads: cache.normal.reads,
    })
}

/// Scores only.
pub fn score(model: &ScorerModel, stream: &FeatureStream) -> Result<ScoreSeries> {
    Ok(forward(model, stream)?.scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::model::ModelDims;
    use crate::types::ClassLabel;
    use rand::{Rng, SeedableRng};

    fn random_stream(t: usize, d: usize, seed: u64) -> FeatureStream {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let features = (0..t * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        FeatureStream::new("s", t, d, features, 16, ClassLabel::Riot).unwrap()
    }

    fn dims(d: usize) -> ModelDims {
        ModelDims {
            input_dim: d,
            hidden_dim: 6,
            memory_slots: 3,
            local_window: 5,
        }
    }

    #[test]
    fn zero_head_gives_half() {
        let mut model = ScorerModel::init(dims(4), 1).unwrap();
        model.tensor_mut(Tensor::HeadWeight).fill(0.0);
        model.tensor_mut(Tensor::HeadBias).fill(0.0);
        let out = forward(&model, &random_stream(10, 4, 2)).unwrap();
        assert!(out.scores.scores.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn single_snippet_attends_to_itself() {
        let model = ScorerModel::init(dims(4), 1).unwrap();
        let stream = random_stream(1, 4, 3);
        let cache = forward_cached(&model, &stream).unwrap();
        assert_eq!(cache.global.weights.data, vec![1.0]);
        assert_eq!(cache.local.weights.data, vec![1.0]);
        assert!(cache.scores[0] > 0.0 && cache.scores[0] < 1.0);
    }

    #[test]
    fn local_attention_stays_in_band() {
        let model = ScorerModel::init(dims(3), 5).unwrap();
        let cache = forward_cached(&model, &random_stream(12, 3, 4)).unwrap();
        for i in 0..12usize {
            for j in 0..12usize {
                if i.abs_diff(j) > 2 {
                    assert_eq!(cache.local.weights[(i, j)], 0.0);
                }
            }
            let row_sum: f64 = cache.local.weights.row(i).iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_dim_checked() {
        let model = ScorerModel::init(dims(4), 9).unwrap();
        let s = random_stream(20, 4, 1);
        let a = score(&model, &s).unwrap();
        let b = score(&model, &s).unwrap();
        assert_eq!(
            a.scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert!(matches!(
            score(&model, &random_stream(3, 5, 1)),
            Err(VadError::DimMismatch { expected: 4, found: 5 })
        ));
    }

    #[test]
    fn memory_read_commutes_with_permutation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let emb = Mat::from_vec(7, 4, (0..28).map(|_| rng.random_range(-1.0..1.0)).collect());
        let mem = Mat::from_vec(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect());
        let perm = [3usize, 0, 6, 1, 5, 2, 4];
        let mut permuted = Mat::zeros(7, 4);
        for (dst, &src) in perm.iter().enumerate() {
            permuted.row_mut(dst).copy_from_slice(emb.row(src));
        }
        let (_, reads) = memory_read(&emb, &mem);
        let (_, permuted_reads) = memory_read(&permuted, &mem);
        for (dst, &src) in perm.iter().enumerate() {
            assert_eq!(permuted_reads.row(dst), reads.row(src));
        }
    }
}
