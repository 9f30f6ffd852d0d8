//! On-disk formats: binary feature files, JSON-lines annotations and ground
//! truth, and `video_id,index,value` score CSVs.
//!
//! Feature file layout (all integers little-endian):
//!
//! ```text
//! "HVADFT01"             8 bytes
//! T, D, stride, class    4 x u32
//! features               T*D x f32, row-major
//! id_len                 u32
//! video_id               id_len bytes of UTF-8
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, VadError};
use crate::types::{ClassLabel, FeatureStream, GlanceSet, GroundTruth, ScoreSeries};

pub const FEATURE_MAGIC: &[u8; 8] = b"HVADFT01";
pub const FEATURE_HEADER_LEN: usize = 24;
pub const SCORE_CSV_HEADER: &str = "video_id,index,value";

/// Encodes a stream into the binary feature format.
pub fn encode_feature_stream(stream: &FeatureStream) -> Result<Vec<u8>> {
    stream.validate()?;
    let as_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| VadError::InvalidValue(format!("{what} {v} exceeds u32")))
    };
    let id = stream.video_id.as_bytes();
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * stream.features.len() + 4 + id.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&as_u32(stream.snippet_count, "snippet_count")?.to_le_bytes());
    out.extend_from_slice(&as_u32(stream.feature_dim, "feature_dim")?.to_le_bytes());
    out.extend_from_slice(&stream.snippet_stride.to_le_bytes());
    out.extend_from_slice(&stream.anomaly_class.code().to_le_bytes());
    for v in &stream.features {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&as_u32(id.len(), "video_id length")?.to_le_bytes());
    out.extend_from_slice(id);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(VadError::TruncatedPayload {
                offset: self.pos as u64,
                needed: n as u64,
                available: available as u64,
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Decodes the binary feature format, validating every invariant.
pub fn decode_feature_stream(bytes: &[u8]) -> Result<FeatureStream> {
    if let Some(offset) = bytes
        .iter()
        .zip(FEATURE_MAGIC.iter())
        .position(|(a, b)| a != b)
    {
        return Err(VadError::MagicMismatch { offset: offset as u64 });
    }
    let mut cur = Cursor { bytes, pos: 0 };
    cur.take(FEATURE_MAGIC.len())?;
    let t = cur.u32()? as usize;
    let d = cur.u32()? as usize;
    let stride = cur.u32()?;
    let class_offset = cur.pos;
    let code = cur.u32()?;
    if t == 0 || d == 0 || stride == 0 {
        return Err(VadError::InvalidValue(format!(
            "header declares T={t}, D={d}, stride={stride}; all must be >= 1"
        )));
    }
    let class = ClassLabel::from_code(code).ok_or_else(|| {
        VadError::InvalidValue(format!("unknown class code {code} at byte {class_offset}"))
    })?;
    let count = t
        .checked_mul(d)
        .ok_or_else(|| VadError::InvalidValue(format!("T*D overflows for T={t}, D={d}")))?;
    let payload_len = count
        .checked_mul(4)
        .ok_or_else(|| VadError::InvalidValue(format!("payload size overflows for T={t}, D={d}")))?;
    let payload_start = cur.pos;
    let payload = cur.take(payload_len)?;
    let mut features = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(VadError::NonFiniteValue {
                offset: (payload_start + 4 * i) as u64,
            });
        }
        features.push(v);
    }
    let id_len = cur.u32()? as usize;
    let id_offset = cur.pos;
    let id = std::str::from_utf8(cur.take(id_len)?)
        .map_err(|e| VadError::InvalidValue(format!("video_id at byte {id_offset} is not UTF-8: {e}")))?
        .to_string();
    if cur.pos != bytes.len() {
        return Err(VadError::TrailingData { offset: cur.pos as u64 });
    }
    Ok(FeatureStream {
        video_id: id,
        snippet_count: t,
        feature_dim: d,
        features,
        snippet_stride: stride,
        anomaly_class: class,
    })
}

pub fn read_feature_stream(path: &Path) -> Result<FeatureStream> {
    let bytes = std::fs::read(path).map_err(|e| VadError::io(path, e))?;
    decode_feature_stream(&bytes)
}

/// Validates first, so a bad stream never leaves a partial file behind.
pub fn write_feature_stream(stream: &FeatureStream, path: &Path) -> Result<()> {
    let bytes = encode_feature_stream(stream)?;
    std::fs::write(path, bytes).map_err(|e| VadError::io(path, e))
}

pub fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| VadError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| VadError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| VadError::schema(line_no, e.to_string()))?;
        out.push((line_no, value));
    }
    Ok(out)
}

pub fn write_json_lines<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| VadError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)
            .map_err(|e| VadError::io(path, std::io::Error::other(e)))?;
        w.write_all(b"\n").map_err(|e| VadError::io(path, e))?;
    }
    w.flush().map_err(|e| VadError::io(path, e))
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationLine {
    video_id: String,
    class: ClassLabel,
    glances: Vec<usize>,
}

/// Reads one glance set per line; order and the Normal-iff-empty rule are
/// enforced as written (no silent re-sorting).
pub fn read_annotations(path: &Path) -> Result<Vec<GlanceSet>> {
    let mut seen = std::collections::HashSet::new();
    read_json_lines::<AnnotationLine>(path)?
        .into_iter()
        .map(|(line, a)| {
            let set = GlanceSet {
                video_id: a.video_id,
                class: a.class,
                glances: a.glances,
            };
            set.validate().map_err(|e| VadError::schema(line, e.to_string()))?;
            if !seen.insert(set.video_id.clone()) {
                return Err(VadError::schema(line, format!("duplicate video_id {}", set.video_id)));
            }
            Ok(set)
        })
        .collect()
}

pub fn write_annotations(sets: &[GlanceSet], path: &Path) -> Result<()> {
    for set in sets {
        set.validate()?;
    }
    write_json_lines(sets, path)
}

pub fn read_truth(path: &Path) -> Result<Vec<GroundTruth>> {
    read_json_lines::<GroundTruth>(path)?
        .into_iter()
        .map(|(line, t)| {
            t.validate().map_err(|e| VadError::schema(line, e.to_string()))?;
            Ok(t)
        })
        .collect()
}

pub fn write_truth(truth: &[GroundTruth], path: &Path) -> Result<()> {
    write_json_lines(truth, path)
}

/// Formats a value with 9 significant digits in the style of C's `%.9g`.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn encode_scores(series: &[ScoreSeries]) -> Result<String> {
    let mut out = String::from(SCORE_CSV_HEADER);
    out.push('\n');
    for s in series {
        s.validate()?;
        if s.video_id.contains([',', '"', '\n', '\r']) {
            return Err(VadError::InvalidValue(format!(
                "video_id {:?} cannot be written unquoted",
                s.video_id
            )));
        }
        for (i, v) in s.scores.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", s.video_id, i, format_sig9(*v)));
        }
    }
    Ok(out)
}

pub fn write_scores(series: &[ScoreSeries], path: &Path) -> Result<()> {
    let text = encode_scores(series)?;
    std::fs::write(path, text).map_err(|e| VadError::io(path, e))
}

/// Parses a score CSV. Rows of one video must be contiguous with indices
/// `0, 1, 2, ...`; values must lie in `[0, 1]`.
pub fn decode_scores(text: &str) -> Result<Vec<ScoreSeries>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| VadError::schema(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["video_id", "index", "value"] {
        return Err(VadError::schema(1, format!("header must be `{SCORE_CSV_HEADER}`")));
    }
    let mut out: Vec<ScoreSeries> = Vec::new();
    let mut done = std::collections::HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            VadError::schema(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 3 {
            return Err(VadError::schema(line, "expected 3 fields"));
        }
        let id = &record[0];
        let index: usize = record[1]
            .parse()
            .map_err(|_| VadError::schema(line, format!("bad index {:?}", &record[1])))?;
        let value: f64 = record[2]
            .parse()
            .map_err(|_| VadError::schema(line, format!("bad value {:?}", &record[2])))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(VadError::schema(line, format!("value {value} outside [0, 1]")));
        }
        match out.last_mut() {
            Some(last) if last.video_id == id => {
                if index != last.scores.len() {
                    return Err(VadError::schema(
                        line,
                        format!("index {index} out of sequence for {id}"),
                    ));
                }
                last.scores.push(value);
            }
            _ => {
                if let Some(last) = out.last() {
                    done.insert(last.video_id.clone());
                }
                if done.contains(id) {
                    return Err(VadError::schema(line, format!("rows of {id} are not contiguous")));
                }
                if index != 0 {
                    return Err(VadError::schema(line, format!("{id} must start at index 0")));
                }
                out.push(ScoreSeries {
                    video_id: id.to_string(),
                    scores: vec![value],
                });
            }
        }
    }
    Ok(out)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreSeries>> {
    let text = std::fs::read_to_string(path).map_err(|e| VadError::io(path, e))?;
    decode_scores(&text)
}
