//! Deterministic synthetic corpora and the experiment harnesses run on them.
//!
//! Normal snippets are `N(0, noise²)` per dimension; snippets inside a
//! planted event are shifted by `delta · u` for a fixed unit direction `u`.
//! Abnormal videos may additionally carry a video-wide shift
//! `context_bias · v` with `v ⊥ u`, a scene cue that correlates with the
//! video label but not with the anomalous snippets themselves.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Result, VadError};
use crate::events::derive_seed;
use crate::io::{write_annotations, write_feature_stream, write_truth};
use crate::metrics::{evaluate_dataset, evaluate_scores, perturb_glances, uniform_baseline};
use crate::sampler::sample_for_downstream;
use crate::scorer::{fit, score, ScorerModel, TrainingLog, TrainingVideo};
use crate::types::{ClassLabel, FeatureStream, GlanceSet, GroundTruth, DEFAULT_SNIPPET_STRIDE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub normal_videos: usize,
    /// Videos generated for each entry of `classes`.
    pub videos_per_class: usize,
    pub classes: Vec<ClassLabel>,
    /// Inclusive snippet-count range.
    pub snippets: [usize; 2],
    pub feature_dim: usize,
    /// Mean events per abnormal video; the count is `1 + Poisson(mean - 1)`.
    pub mean_events: f64,
    /// Inclusive event length range in snippets.
    pub event_len: [usize; 2],
    pub delta: f64,
    pub noise: f64,
    pub context_bias: f64,
    pub snippet_stride: u32,
    pub train_fraction: f64,
    pub rng_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            normal_videos: 36,
            videos_per_class: 6,
            classes: ClassLabel::ANOMALOUS.to_vec(),
            snippets: [100, 300],
            feature_dim: 16,
            mean_events: 2.35,
            event_len: [12, 40],
            delta: 2.0,
            noise: 1.0,
            context_bias: 2.0,
            snippet_stride: DEFAULT_SNIPPET_STRIDE,
            train_fraction: 0.7,
            rng_seed: 0,
        }
    }
}

impl SynthSpec {
    /// Long streams with short, single events: about 5% of each abnormal
    /// stream is anomalous.
    pub fn sparse() -> Self {
        SynthSpec {
            snippets: [200, 300],
            mean_events: 1.0,
            event_len: [10, 15],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(VadError::SpecInvalid(m));
        if self.classes.iter().any(|c| c.is_normal()) {
            return fail("classes must be anomalous".into());
        }
        if self.normal_videos == 0 || self.videos_per_class == 0 || self.classes.is_empty() {
            return fail("need at least one normal and one abnormal video".into());
        }
        if self.snippets[0] == 0 || self.snippets[0] > self.snippets[1] {
            return fail(format!("snippet range {:?} is empty", self.snippets));
        }
        if self.event_len[0] == 0 || self.event_len[0] > self.event_len[1] {
            return fail(format!("event length range {:?} is empty", self.event_len));
        }
        if self.event_len[1] + 2 > self.snippets[0] {
            return fail("the longest event must fit inside the shortest video".into());
        }
        if self.feature_dim < 2 {
            return fail("feature_dim must be >= 2".into());
        }
        if !(self.mean_events >= 1.0 && self.mean_events.is_finite()) {
            return fail(format!("mean_events {} must be >= 1", self.mean_events));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return fail(format!("delta {} must be >= 0", self.delta));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return fail(format!("noise {} must be positive", self.noise));
        }
        if !self.context_bias.is_finite() {
            return fail("context_bias must be finite".into());
        }
        if self.snippet_stride == 0 {
            return fail("snippet_stride must be >= 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!("train_fraction {} must lie in (0, 1)", self.train_fraction));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| VadError::io(path, e))?;
        let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| VadError::SpecInvalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub stream: FeatureStream,
    pub truth: GroundTruth,
    pub glances: GlanceSet,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub videos: Vec<SynthVideo>,
    /// Unit direction of the anomaly shift.
    pub direction: Vec<f64>,
}

impl SynthCorpus {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SynthVideo> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    pub fn training_set(&self) -> Vec<TrainingVideo> {
        self.split(Split::Train)
            .map(|v| TrainingVideo {
                stream: v.stream.clone(),
                glances: v.glances.clone(),
            })
            .collect()
    }

    pub fn test_set(&self) -> Vec<(FeatureStream, GroundTruth)> {
        self.split(Split::Test).map(|v| (v.stream.clone(), v.truth.clone())).collect()
    }

    /// Writes `features/<id>.hvf`, `annotations.jsonl`, `truth.jsonl` and
    /// `split.json` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let features = dir.join("features");
        std::fs::create_dir_all(&features).map_err(|e| VadError::io(&features, e))?;
        for v in &self.videos {
            write_feature_stream(&v.stream, &features.join(format!("{}.hvf", v.stream.video_id)))?;
        }
        let glances: Vec<GlanceSet> = self.videos.iter().map(|v| v.glances.clone()).collect();
        write_annotations(&glances, &dir.join("annotations.jsonl"))?;
        let truth: Vec<GroundTruth> = self.videos.iter().map(|v| v.truth.clone()).collect();
        write_truth(&truth, &dir.join("truth.jsonl"))?;
        let split: BTreeMap<&str, Vec<&str>> = [Split::Train, Split::Test]
            .into_iter()
            .map(|s| {
                let key = if s == Split::Train { "train" } else { "test" };
                (key, self.split(s).map(|v| v.stream.video_id.as_str()).collect())
            })
            .collect();
        let path = dir.join("split.json");
        let text = serde_json::to_string_pretty(&split).map_err(|e| VadError::InvalidValue(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| VadError::io(&path, e))
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize, orthogonal_to: Option<&[f64]>) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        if let Some(u) = orthogonal_to {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Non-overlapping, sorted events with at least one normal snippet between
/// neighbours.
fn place_events(rng: &mut ChaCha8Rng, len: usize, count: usize, span: [usize; 2]) -> Vec<[usize; 2]> {
    let mut events: Vec<[usize; 2]> = Vec::new();
    let mut attempts = 0;
    while events.len() < count && attempts < 1000 {
        attempts += 1;
        let l = rng.random_range(span[0]..=span[1]);
        let s = rng.random_range(0..=len - l);
        let e = s + l;
        if events.iter().all(|&[a, b]| e < a || s > b) {
            events.push([s, e]);
        }
    }
    events.sort_unstable();
    events
}

fn gen_video(spec: &SynthSpec, id: &str, class: ClassLabel, u: &[f64], v: &[f64]) -> Result<(FeatureStream, GroundTruth, GlanceSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.rng_seed, id));
    let len = rng.random_range(spec.snippets[0]..=spec.snippets[1]);
    let (events, glances) = if class.is_anomalous() {
        let extra = if spec.mean_events > 1.0 {
            Poisson::new(spec.mean_events - 1.0).expect("positive rate").sample(&mut rng) as usize
        } else {
            0
        };
        let events = place_events(&mut rng, len, 1 + extra, spec.event_len);
        let glances: Vec<usize> = events.iter().map(|&[s, e]| rng.random_range(s..e)).collect();
        (events, glances)
    } else {
        (Vec::new(), Vec::new())
    };
    let truth = GroundTruth {
        video_id: id.to_string(),
        snippet_count: len,
        snippet_stride: spec.snippet_stride,
        intervals: events,
    };
    let labels = truth.snippet_labels();
    let noise = Normal::new(0.0, spec.noise).expect("validated noise");
    let bias = if class.is_anomalous() { spec.context_bias } else { 0.0 };
    let d = spec.feature_dim;
    let mut features = Vec::with_capacity(len * d);
    for &label in &labels {
        let shift = if label == 1 { spec.delta } else { 0.0 };
        for j in 0..d {
            features.push((noise.sample(&mut rng) + shift * u[j] + bias * v[j]) as f32);
        }
    }
    let stream = FeatureStream::new(id, len, d, features, spec.snippet_stride, class.clone())?;
    let glances = GlanceSet::new(id, class, glances)?;
    Ok((stream, truth, glances))
}

/// Generates the corpus and its per-class train/test split.
pub fn gen_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.rng_seed, "directions"));
    let u = unit_vector(&mut rng, spec.feature_dim, None);
    let v = unit_vector(&mut rng, spec.feature_dim, Some(&u));
    let mut groups: Vec<(ClassLabel, usize)> = vec![(ClassLabel::Normal, spec.normal_videos)];
    groups.extend(spec.classes.iter().map(|c| (c.clone(), spec.videos_per_class)));

    let mut videos = Vec::new();
    for (class, count) in groups {
        let prefix = class.name().to_lowercase();
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.rng_seed, &format!("split:{prefix}"))));
        let n_train = ((count as f64 * spec.train_fraction).round() as usize).clamp(1.min(count), count);
        let mut split = vec![Split::Test; count];
        for &i in &order[..n_train] {
            split[i] = Split::Train;
        }
        for (i, &s) in split.iter().enumerate() {
            let id = format!("{prefix}_{i:03}");
            let (stream, truth, glances) = gen_video(spec, &id, class.clone(), &u, &v)?;
            videos.push(SynthVideo {
                stream,
                truth,
                glances,
                split: s,
            });
        }
    }
    Ok(SynthCorpus { videos, direction: u })
}

/// Training settings sized for minutes on a laptop: a larger step than the
/// library default so the synthetic corpus converges in a few epochs.
pub fn desk_config() -> PipelineConfig {
    PipelineConfig {
        learning_rate: 5e-3,
        epochs: 15,
        ..PipelineConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    SupervisionAblation,
    GlanceShift,
    SamplerCompare,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 3] = [
        ExperimentName::SupervisionAblation,
        ExperimentName::GlanceShift,
        ExperimentName::SamplerCompare,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::SupervisionAblation => "supervision-ablation",
            ExperimentName::GlanceShift => "glance-shift",
            ExperimentName::SamplerCompare => "sampler-compare",
        }
    }
}

impl std::str::FromStr for ExperimentName {
    type Err = VadError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| VadError::InvalidValue(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub variant: String,
    pub metrics: BTreeMap<String, f64>,
}

impl ExperimentRow {
    fn new(variant: impl Into<String>, metrics: &[(&str, f64)]) -> Self {
        ExperimentRow {
            variant: variant.into(),
            metrics: metrics.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: ExperimentName,
    pub config_hash: String,
    pub seed: u64,
    pub spec: SynthSpec,
    pub config: PipelineConfig,
    pub rows: Vec<ExperimentRow>,
    pub elapsed_secs: f64,
    #[serde(skip)]
    pub logs: Vec<(String, TrainingLog)>,
}

impl ExperimentReport {
    pub fn row(&self, variant: &str) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    /// One line per row: `variant,<metric>...` over the union of metric names.
    pub fn rows_csv(&self) -> String {
        let mut keys: Vec<&String> = self.rows.iter().flat_map(|r| r.metrics.keys()).collect();
        keys.sort();
        keys.dedup();
        let mut out = String::from("variant");
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.variant);
            for k in &keys {
                out.push(',');
                if let Some(v) = r.metrics.get(*k) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    /// `variant,epoch,total,...` loss curves of every trained model.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("variant,epoch,total,mil,magnitude,triplet,kl,abnormal\n");
        for (variant, log) in &self.logs {
            for line in log.to_csv().lines().skip(1) {
                out.push_str(&format!("{variant},{line}\n"));
            }
        }
        out
    }
}

fn train_and_eval(train: &[TrainingVideo], test: &[(FeatureStream, GroundTruth)], cfg: &PipelineConfig) -> Result<(ScorerModel, TrainingLog, f64, f64)> {
    let (model, log) = fit(train, cfg)?;
    let report = evaluate_dataset(&model, test)?;
    Ok((model, log, report.auc, report.ap))
}

/// Shift values swept by the glance-shift experiment, in snippets.
pub const SHIFT_SWEEP: [usize; 4] = [0, 10, 50, 100];

/// Uniform-sampler clip length in snippets.
pub const UNIFORM_CLIP: usize = 16;

/// Runs one experiment design on the corpus generated from `spec`. Variants
/// are trained sequentially.
pub fn run_experiment(name: ExperimentName, spec: &SynthSpec, cfg: &PipelineConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let corpus = gen_corpus(spec)?;
    let train = corpus.training_set();
    let test = corpus.test_set();
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    match name {
        ExperimentName::SupervisionAblation => {
            let mut weak = cfg.clone();
            weak.loss.abnormal = 0.0;
            let mut glance = cfg.clone();
            if glance.loss.abnormal == 0.0 {
                glance.loss.abnormal = 1.0;
            }
            for (variant, c) in [("weak", weak), ("glance", glance)] {
                let (_, log, auc, ap) = train_and_eval(&train, &test, &c)?;
                log::info!("{variant}: auc {auc:.4} ap {ap:.4}");
                rows.push(ExperimentRow::new(variant, &[("auc", auc), ("ap", ap), ("lambda_abn", c.loss.abnormal)]));
                logs.push((variant.to_string(), log));
            }
        }
        ExperimentName::GlanceShift => {
            let mut base_auc = None;
            for shift in SHIFT_SWEEP {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, &format!("shift:{shift}")));
                let shifted = train
                    .iter()
                    .map(|v| {
                        let glances = if v.glances.glances.is_empty() {
                            v.glances.clone()
                        } else {
                            perturb_glances(&v.glances, shift, &mut rng, v.stream.snippet_count)?
                        };
                        Ok(TrainingVideo {
                            stream: v.stream.clone(),
                            glances,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (_, log, auc, ap) = train_and_eval(&shifted, &test, cfg)?;
                let base = *base_auc.get_or_insert(auc);
                log::info!("shift {shift}: auc {auc:.4} ap {ap:.4}");
                rows.push(ExperimentRow::new(
                    format!("shift-{shift}"),
                    &[("shift", shift as f64), ("auc", auc), ("ap", ap), ("auc_drop", base - auc)],
                ));
                logs.push((format!("shift-{shift}"), log));
            }
        }
        ExperimentName::SamplerCompare => {
            let (model, log) = fit(&train, cfg)?;
            logs.push(("temporal".to_string(), log));
            let mut total = 0usize;
            let mut forwarded = 0usize;
            let mut anomalous = 0usize;
            let mut covered = 0usize;
            let mut abnormal_total = 0usize;
            let mut abnormal_forwarded = 0usize;
            let mut abnormal_anomalous = 0usize;
            let mut series = Vec::new();
            for (stream, truth) in &test {
                let s = score(&model, stream)?;
                let (indices, _) = sample_for_downstream(&s.scores, cfg.theta, cfg.fallback_frames, None);
                let labels = truth.snippet_labels();
                total += labels.len();
                forwarded += indices.len();
                anomalous += labels.iter().filter(|&&l| l == 1).count();
                covered += indices.iter().filter(|&&i| labels[i] == 1).count();
                if stream.anomaly_class.is_anomalous() {
                    abnormal_total += labels.len();
                    abnormal_forwarded += indices.len();
                    abnormal_anomalous += labels.iter().filter(|&&l| l == 1).count();
                }
                series.push(s);
            }
            let truth: Vec<GroundTruth> = test.iter().map(|(_, t)| t.clone()).collect();
            let temporal = evaluate_scores(&series, &truth)?;
            let streams: Vec<FeatureStream> = test.iter().map(|(s, _)| s.clone()).collect();
            let by_id: BTreeMap<&str, Vec<u8>> = truth.iter().map(|t| (t.video_id.as_str(), t.snippet_labels())).collect();
            // The uniform sampler forwards every clip to an analyser that
            // answers perfectly from ground truth.
            let uniform_series = uniform_baseline(&streams, UNIFORM_CLIP, |s, a, b| {
                by_id[s.video_id.as_str()][a..b].contains(&1)
            })?;
            let uniform = evaluate_scores(&uniform_series, &truth)?;
            let fraction = forwarded as f64 / total as f64;
            rows.push(ExperimentRow::new(
                "temporal",
                &[
                    ("auc", temporal.auc),
                    ("ap", temporal.ap),
                    ("forwarded_snippets", forwarded as f64),
                    ("total_snippets", total as f64),
                    ("forwarded_fraction", fraction),
                    ("abnormal_forwarded_fraction", abnormal_forwarded as f64 / abnormal_total.max(1) as f64),
                    ("reduction_factor", total as f64 / forwarded.max(1) as f64),
                    ("anomaly_fraction", anomalous as f64 / total as f64),
                    ("abnormal_anomaly_fraction", abnormal_anomalous as f64 / abnormal_total.max(1) as f64),
                    ("coverage", covered as f64 / anomalous.max(1) as f64),
                    ("theta", cfg.theta),
                ],
            ));
            rows.push(ExperimentRow::new(
                "uniform",
                &[
                    ("auc", uniform.auc),
                    ("ap", uniform.ap),
                    ("forwarded_snippets", total as f64),
                    ("total_snippets", total as f64),
                    ("forwarded_fraction", 1.0),
                    ("reduction_factor", 1.0),
                    ("coverage", 1.0),
                    ("clip_len", UNIFORM_CLIP as f64),
                ],
            ));
        }
    }
    Ok(ExperimentReport {
        name,
        config_hash: cfg.hash(),
        seed: cfg.rng_seed,
        spec: spec.clone(),
        config: cfg.clone(),
        rows,
        elapsed_secs: started.elapsed().as_secs_f64(),
        logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::roc_auc;

    fn small() -> SynthSpec {
        SynthSpec {
            normal_videos: 4,
            videos_per_class: 2,
            classes: vec![ClassLabel::Explosion, ClassLabel::Riot],
            snippets: [60, 90],
            event_len: [5, 12],
            ..Default::default()
        }
    }

    #[test]
    fn corpus_is_bit_deterministic() {
        let a = gen_corpus(&small()).unwrap();
        let b = gen_corpus(&small()).unwrap();
        assert_eq!(a, b);
        let c = gen_corpus(&SynthSpec { rng_seed: 1, ..small() }).unwrap();
        assert_ne!(a.videos[0].stream.features, c.videos[0].stream.features);
    }

    #[test]
    fn glances_sit_inside_their_events() {
        let corpus = gen_corpus(&SynthSpec { videos_per_class: 20, ..small() }).unwrap();
        for v in &corpus.videos {
            assert_eq!(v.glances.glances.len(), v.truth.intervals.len());
            for (&g, &[s, e]) in v.glances.glances.iter().zip(&v.truth.intervals) {
                assert!(s <= g && g < e);
            }
            assert_eq!(v.stream.anomaly_class.is_normal(), v.truth.intervals.is_empty());
            v.truth.validate().unwrap();
        }
    }

    #[test]
    fn split_is_per_class() {
        let corpus = gen_corpus(&SynthSpec { normal_videos: 10, videos_per_class: 10, ..small() }).unwrap();
        for class in ["normal", "explosion", "riot"] {
            let train = corpus
                .split(Split::Train)
                .filter(|v| v.stream.video_id.starts_with(class))
                .count();
            assert_eq!(train, 7, "{class}");
        }
    }

    #[test]
    fn mean_event_count_tracks_target() {
        let spec = SynthSpec {
            normal_videos: 1,
            videos_per_class: 400,
            classes: vec![ClassLabel::Abuse],
            snippets: [300, 300],
            event_len: [5, 10],
            ..Default::default()
        };
        let corpus = gen_corpus(&spec).unwrap();
        let abnormal: Vec<_> = corpus.videos.iter().filter(|v| v.stream.anomaly_class.is_anomalous()).collect();
        let mean = abnormal.iter().map(|v| v.glances.glances.len()).sum::<usize>() as f64 / abnormal.len() as f64;
        assert!((mean - 2.35).abs() < 0.15, "{mean}");
    }

    /// Projection onto the known shift direction is the optimal linear
    /// single-snippet classifier; its AUC is Φ(δ / (σ√2)).
    fn oracle_auc(spec: &SynthSpec) -> f64 {
        let corpus = gen_corpus(spec).unwrap();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for v in &corpus.videos {
            let l = v.truth.snippet_labels();
            for t in 0..v.stream.snippet_count {
                let row = v.stream.row(t);
                scores.push(row.iter().zip(&corpus.direction).map(|(&x, u)| x as f64 * u).sum());
                labels.push(l[t]);
            }
        }
        roc_auc(&scores, &labels).unwrap()
    }

    #[test]
    fn oracle_classifier_matches_gaussian_separation() {
        use statrs::distribution::{ContinuousCDF, Normal as StatNormal};
        let phi = |x: f64| StatNormal::new(0.0, 1.0).unwrap().cdf(x);
        for delta in [2.0, 2.5] {
            let spec = SynthSpec { delta, ..SynthSpec::default() };
            let auc = oracle_auc(&spec);
            let expected = phi(delta / 2f64.sqrt());
            assert!((auc - expected).abs() < 0.01, "delta {delta}: {auc} vs {expected}");
        }
        assert!(oracle_auc(&SynthSpec { delta: 2.5, ..SynthSpec::default() }) > 0.95);
    }

    #[test]
    fn no_signal_means_chance_auc() {
        // Without the mean shift and the scene cue nothing separates the classes.
        let spec = SynthSpec {
            delta: 0.0,
            context_bias: 0.0,
            ..SynthSpec::default()
        };
        let corpus = gen_corpus(&spec).unwrap();
        let cfg = PipelineConfig { epochs: 5, ..desk_config() };
        let (model, _) = crate::scorer::fit(&corpus.training_set(), &cfg).unwrap();
        let report = crate::metrics::evaluate_dataset(&model, &corpus.test_set()).unwrap();
        assert!((report.auc - 0.5).abs() <= 0.05, "{}", report.auc);
    }

    #[test]
    fn invalid_specs() {
        for bad in [
            SynthSpec { snippets: [50, 40], ..small() },
            SynthSpec { event_len: [0, 3], ..small() },
            SynthSpec { noise: 0.0, ..small() },
            SynthSpec { delta: -1.0, ..small() },
            SynthSpec { classes: vec![ClassLabel::Normal], ..small() },
            SynthSpec { event_len: [5, 200], ..small() },
        ] {
            assert!(matches!(gen_corpus(&bad), Err(VadError::SpecInvalid(_))), "{bad:?}");
        }
    }

    #[test]
    fn corpus_writes_readable_files() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = gen_corpus(&small()).unwrap();
        corpus.write_to(dir.path()).unwrap();
        let first = &corpus.videos[0].stream;
        let back = crate::io::read_feature_stream(&dir.path().join("features").join(format!("{}.hvf", first.video_id))).unwrap();
        assert_eq!(&back, first);
        assert_eq!(crate::io::read_annotations(&dir.path().join("annotations.jsonl")).unwrap().len(), corpus.videos.len());
    }

    #[test]
    fn experiment_names_parse() {
        for n in ExperimentName::ALL {
            assert_eq!(n.as_str().parse::<ExperimentName>().unwrap(), n);
        }
        assert!("nope".parse::<ExperimentName>().is_err());
    }
}
