//! Domain types shared by every stage of the pipeline.
//!
//! The temporal unit everywhere is the *snippet*: one sampled frame per
//! `snippet_stride` source frames. Indices into a [`FeatureStream`],
//! [`ScoreSeries`] or [`GlanceSet`] are snippet indices.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, VadError};

pub const DEFAULT_SNIPPET_STRIDE: u32 = 16;

/// Video-level class. `Normal` is the only non-anomalous value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Normal,
    Abuse,
    Explosion,
    Fighting,
    Shooting,
    CarAccident,
    Riot,
    Other(String),
}

impl ClassLabel {
    /// The fixed anomalous classes, in class-code order.
    pub const ANOMALOUS: [ClassLabel; 6] = [
        ClassLabel::Abuse,
        ClassLabel::Explosion,
        ClassLabel::Fighting,
        ClassLabel::Shooting,
        ClassLabel::CarAccident,
        ClassLabel::Riot,
    ];

    pub const OTHER_CODE: u32 = 7;

    pub fn is_normal(&self) -> bool {
        matches!(self, ClassLabel::Normal)
    }

    pub fn is_anomalous(&self) -> bool {
        !self.is_normal()
    }

    pub fn name(&self) -> &str {
        match self {
            ClassLabel::Normal => "Normal",
            ClassLabel::Abuse => "Abuse",
            ClassLabel::Explosion => "Explosion",
            ClassLabel::Fighting => "Fighting",
            ClassLabel::Shooting => "Shooting",
            ClassLabel::CarAccident => "CarAccident",
            ClassLabel::Riot => "Riot",
            ClassLabel::Other(name) => name,
        }
    }

    /// Numeric code used by the binary feature format.
    pub fn code(&self) -> u32 {
        match self {
            ClassLabel::Normal => 0,
            ClassLabel::Abuse => 1,
            ClassLabel::Explosion => 2,
            ClassLabel::Fighting => 3,
            ClassLabel::Shooting => 4,
            ClassLabel::CarAccident => 5,
            ClassLabel::Riot => 6,
            ClassLabel::Other(_) => Self::OTHER_CODE,
        }
    }

    /// Inverse of [`code`](Self::code). The binary format carries no class
    /// name, so code 7 decodes to the canonical `Other("Other")`.
    pub fn from_code(code: u32) -> Option<ClassLabel> {
        Some(match code {
            0 => ClassLabel::Normal,
            1 => ClassLabel::Abuse,
            2 => ClassLabel::Explosion,
            3 => ClassLabel::Fighting,
            4 => ClassLabel::Shooting,
            5 => ClassLabel::CarAccident,
            6 => ClassLabel::Riot,
            7 => ClassLabel::Other("Other".to_string()),
            _ => return None,
        })
    }

    /// Binary video label used by MIL: 1 for anomalous, 0 for normal.
    pub fn target(&self) -> f64 {
        if self.is_normal() {
            0.0
        } else {
            1.0
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = VadError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "Normal" => ClassLabel::Normal,
            "Abuse" => ClassLabel::Abuse,
            "Explosion" => ClassLabel::Explosion,
            "Fighting" => ClassLabel::Fighting,
            "Shooting" => ClassLabel::Shooting,
            "CarAccident" => ClassLabel::CarAccident,
            "Riot" => ClassLabel::Riot,
            "" => return Err(VadError::InvalidValue("empty class name".into())),
            other => ClassLabel::Other(other.to_string()),
        })
    }
}

impl Serialize for ClassLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ClassLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-snippet feature matrix of one video, row-major `T x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    pub video_id: String,
    pub snippet_count: usize,
    pub feature_dim: usize,
    pub features: Vec<f32>,
    pub snippet_stride: u32,
    pub anomaly_class: ClassLabel,
}

impl FeatureStream {
    pub fn new(
        video_id: impl Into<String>,
        snippet_count: usize,
        feature_dim: usize,
        features: Vec<f32>,
        snippet_stride: u32,
        anomaly_class: ClassLabel,
    ) -> Result<Self> {
        let stream = FeatureStream {
            video_id: video_id.into(),
            snippet_count,
            feature_dim,
            features,
            snippet_stride,
            anomaly_class,
        };
        stream.validate()?;
        Ok(stream)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snippet_count == 0 || self.feature_dim == 0 {
            return Err(VadError::InvalidValue(format!(
                "stream {} has empty shape {}x{}",
                self.video_id, self.snippet_count, self.feature_dim
            )));
        }
        if self.snippet_stride == 0 {
            return Err(VadError::InvalidValue("snippet_stride must be >= 1".into()));
        }
        let expected = self.snippet_count * self.feature_dim;
        if self.features.len() != expected {
            return Err(VadError::LengthMismatch {
                left: expected,
                right: self.features.len(),
            });
        }
        if let Some(i) = self.features.iter().position(|v| !v.is_finite()) {
            // Offset the value would occupy in the binary format.
            return Err(VadError::NonFiniteValue {
                offset: crate::io::FEATURE_HEADER_LEN as u64 + 4 * i as u64,
            });
        }
        Ok(())
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.features[t * self.feature_dim..(t + 1) * self.feature_dim]
    }

    /// Number of source frames covered by the stream.
    pub fn frame_count(&self) -> usize {
        self.snippet_count * self.snippet_stride as usize
    }
}

/// Single-frame ("glance") annotations of one video, in snippet units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlanceSet {
    pub video_id: String,
    #[serde(rename = "class")]
    pub class: ClassLabel,
    pub glances: Vec<usize>,
}

impl GlanceSet {
    /// Builds a set from arbitrary indices, sorting and de-duplicating them.
    pub fn new(video_id: impl Into<String>, class: ClassLabel, mut glances: Vec<usize>) -> Result<Self> {
        glances.sort_unstable();
        glances.dedup();
        let set = GlanceSet {
            video_id: video_id.into(),
            class,
            glances,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn normal(video_id: impl Into<String>) -> Self {
        GlanceSet {
            video_id: video_id.into(),
            class: ClassLabel::Normal,
            glances: Vec::new(),
        }
    }

    /// Checks ordering and the Normal-iff-empty rule.
    pub fn validate(&self) -> Result<()> {
        if self.glances.windows(2).any(|w| w[0] >= w[1]) {
            return Err(VadError::InvalidValue(format!(
                "glances of {} are not strictly increasing",
                self.video_id
            )));
        }
        match (self.class.is_normal(), self.glances.is_empty()) {
            (true, false) => Err(VadError::InvalidValue(format!(
                "normal video {} carries glances",
                self.video_id
            ))),
            (false, true) => Err(VadError::InvalidValue(format!(
                "anomalous video {} has no glances",
                self.video_id
            ))),
            _ => Ok(()),
        }
    }

    pub fn check_bounds(&self, len: usize) -> Result<()> {
        match self.glances.iter().find(|&&g| g >= len) {
            Some(&index) => Err(VadError::GlanceOutOfRange { index, len }),
            None => Ok(()),
        }
    }

    /// Converts raw frame timestamps to snippet indices (floor division).
    pub fn from_frames(
        video_id: impl Into<String>,
        class: ClassLabel,
        frames: &[usize],
        snippet_stride: u32,
    ) -> Result<Self> {
        if snippet_stride == 0 {
            return Err(VadError::InvalidValue("snippet_stride must be >= 1".into()));
        }
        let glances = frames.iter().map(|f| f / snippet_stride as usize).collect();
        GlanceSet::new(video_id, class, glances)
    }
}

/// Predicted per-snippet anomaly scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub video_id: String,
    pub scores: Vec<f64>,
}

impl ScoreSeries {
    pub fn new(video_id: impl Into<String>, scores: Vec<f64>) -> Result<Self> {
        let series = ScoreSeries {
            video_id: video_id.into(),
            scores,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((i, v)) = self
            .scores
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(VadError::InvalidValue(format!(
                "score {v} at index {i} of {} outside [0, 1]",
                self.video_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Dense smoothed targets plus the mined snippet set they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSeries {
    pub values: Vec<f64>,
    pub support: BTreeSet<usize>,
}

impl PseudoLabelSeries {
    pub fn zeros(len: usize) -> Self {
        PseudoLabelSeries {
            values: vec![0.0; len],
            support: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A trimmed clip `[start, end]` (inclusive snippet indices).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventProposal {
    pub video_id: String,
    pub start: usize,
    pub end: usize,
    pub label: ClassLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_glance: Option<usize>,
}

impl EventProposal {
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.start > self.end || self.end >= len {
            return Err(VadError::InvalidValue(format!(
                "proposal [{}, {}] invalid for length {len}",
                self.start, self.end
            )));
        }
        if let Some(g) = self.source_glance {
            if g < self.start || g > self.end {
                return Err(VadError::InvalidValue(format!(
                    "source glance {g} outside proposal [{}, {}]",
                    self.start, self.end
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    Client,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionedClip {
    pub proposal: EventProposal,
    pub caption: String,
    pub caption_source: CaptionSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub template_id: String,
    pub model_name: String,
    pub filtered: bool,
}

/// One user/assistant conversation item built from a captioned clip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub video_id: String,
    pub clip_span: [usize; 2],
    pub label: ClassLabel,
    pub user: String,
    pub assistant: String,
    pub provenance: Provenance,
}

pub const VIDEO_PLACEHOLDER: &str = "<video>\n";

impl InstructionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.user.trim().is_empty() || self.assistant.trim().is_empty() {
            return Err(VadError::InvalidValue(format!("record {} has empty text", self.id)));
        }
        if !self.user.contains(VIDEO_PLACEHOLDER) {
            return Err(VadError::InvalidValue(format!(
                "record {} user prompt lacks the video placeholder",
                self.id
            )));
        }
        if self.clip_span[0] > self.clip_span[1] {
            return Err(VadError::InvalidValue(format!("record {} has inverted span", self.id)));
        }
        Ok(())
    }
}

/// Ground-truth anomalous intervals of one video, half-open in snippet units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub video_id: String,
    pub snippet_count: usize,
    pub snippet_stride: u32,
    pub intervals: Vec<[usize; 2]>,
}

impl GroundTruth {
    /// Per-snippet binary labels.
    pub fn snippet_labels(&self) -> Vec<u8> {
        let mut labels = vec![0u8; self.snippet_count];
        for &[s, e] in &self.intervals {
            for l in &mut labels[s.min(self.snippet_count)..e.min(self.snippet_count)] {
                *l = 1;
            }
        }
        labels
    }

    /// Per-frame binary labels (each snippet spans `snippet_stride` frames).
    pub fn frame_labels(&self) -> Vec<u8> {
        expand_by_stride(&self.snippet_labels(), self.snippet_stride)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snippet_stride == 0 {
            return Err(VadError::InvalidValue("snippet_stride must be >= 1".into()));
        }
        for &[s, e] in &self.intervals {
            if s >= e || e > self.snippet_count {
                return Err(VadError::InvalidValue(format!(
                    "interval [{s}, {e}) invalid for {} snippets of {}",
                    self.snippet_count, self.video_id
                )));
            }
        }
        Ok(())
    }
}

/// Repeats each element `stride` times.
pub fn expand_by_stride<T: Copy>(values: &[T], stride: u32) -> Vec<T> {
    values
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, stride as usize))
        .collect()
}

/// Collects sorted indices into a set; a tiny helper for tests and callers.
pub fn index_set(indices: impl IntoIterator<Item = usize>) -> BTreeSet<usize> {
    indices.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_names_round_trip() {
        for class in ClassLabel::ANOMALOUS.iter().chain([&ClassLabel::Normal]) {
            assert_eq!(&class.name().parse::<ClassLabel>().unwrap(), class);
            assert_eq!(&ClassLabel::from_code(class.code()).unwrap(), class);
        }
        assert_eq!(
            "Vandalism".parse::<ClassLabel>().unwrap(),
            ClassLabel::Other("Vandalism".into())
        );
        assert!(ClassLabel::from_code(8).is_none());
    }

    #[test]
    fn glance_set_sorts_and_checks_class() {
        let set = GlanceSet::new("v", ClassLabel::Riot, vec![9, 3, 3]).unwrap();
        assert_eq!(set.glances, vec![3, 9]);
        assert!(GlanceSet::new("v", ClassLabel::Normal, vec![1]).is_err());
        assert!(GlanceSet::new("v", ClassLabel::Riot, vec![]).is_err());
        assert!(matches!(
            set.check_bounds(9),
            Err(VadError::GlanceOutOfRange { index: 9, len: 9 })
        ));
    }

    #[test]
    fn frame_timestamps_floor_to_snippets() {
        let set = GlanceSet::from_frames("v", ClassLabel::Abuse, &[0, 15, 16, 47], 16).unwrap();
        assert_eq!(set.glances, vec![0, 1, 2]);
    }

    #[test]
    fn stream_rejects_non_finite() {
        let err = FeatureStream::new("v", 1, 2, vec![0.0, f32::NAN], 16, ClassLabel::Normal).unwrap_err();
        assert!(matches!(err, VadError::NonFiniteValue { offset: 28 }));
        assert!(FeatureStream::new("v", 0, 2, vec![], 16, ClassLabel::Normal).is_err());
    }

    #[test]
    fn truth_expands_to_frames() {
        let truth = GroundTruth {
            video_id: "v".into(),
            snippet_count: 3,
            snippet_stride: 2,
            intervals: vec![[1, 2]],
        };
        assert_eq!(truth.snippet_labels(), vec![0, 1, 0]);
        assert_eq!(truth.frame_labels(), vec![0, 0, 1, 1, 0, 0]);
    }
}
