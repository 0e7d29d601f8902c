//! `frames.v1`: a header line followed by one JSON object per frame.
//!
//! Floats are written in their shortest round-tripping decimal form and parsed
//! with correct rounding, so save -> load -> save is byte-identical.

use super::{FrameRecord, GroundTruth, SequenceStream, Split};
use crate::body::{BodyParams, CamParams, Joints3D, Keypoints2D, NUM_JOINTS};
use crate::nnet::FEATURE_DIM;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

pub const FRAMES_SCHEMA: &str = "frames.v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    gen_seed: u64,
    split: Split,
    template_hash: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthRow {
    theta: Vec<f64>,
    beta: Vec<f64>,
    cam: [f64; 3],
    joints: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRow {
    sequence: String,
    index: usize,
    feature: Vec<f64>,
    guide: Keypoints2D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt: Option<GroundTruthRow>,
}

impl From<&FrameRecord> for FrameRow {
    fn from(f: &FrameRecord) -> Self {
        FrameRow {
            sequence: f.sequence.clone(),
            index: f.index,
            feature: f.feature.clone(),
            guide: f.guide.clone(),
            gt: f.gt.as_ref().map(|g| GroundTruthRow {
                theta: g.params.theta.clone(),
                beta: g.params.beta.clone(),
                cam: g.cam.to_array(),
                joints: g.joints.points.clone(),
            }),
        }
    }
}

impl FrameRow {
    fn into_record(self) -> std::result::Result<FrameRecord, String> {
        if self.feature.len() != FEATURE_DIM {
            return Err(format!("feature has {} entries, expected {FEATURE_DIM}", self.feature.len()));
        }
        if self.guide.points.len() != NUM_JOINTS {
            return Err(format!("guide has {} joints, expected {NUM_JOINTS}", self.guide.points.len()));
        }
        self.guide.validate().map_err(|e| e.to_string())?;
        let gt = match self.gt {
            None => None,
            Some(g) => {
                if g.joints.len() != NUM_JOINTS {
                    return Err(format!("gt has {} joints, expected {NUM_JOINTS}", g.joints.len()));
                }
                let params = BodyParams::new(g.theta, g.beta).map_err(|e| e.to_string())?;
                let cam = CamParams::from_slice(&g.cam).map_err(|e| e.to_string())?;
                let joints = Joints3D { points: g.joints };
                joints.validate().map_err(|e| e.to_string())?;
                Some(GroundTruth { params, cam, joints })
            }
        };
        Ok(FrameRecord {
            sequence: self.sequence,
            index: self.index,
            feature: self.feature,
            guide: self.guide,
            gt,
        })
    }
}

pub fn stream_to_jsonl(stream: &SequenceStream) -> Result<String> {
    let header = Header {
        schema: FRAMES_SCHEMA.into(),
        gen_seed: stream.gen_seed,
        split: stream.split,
        template_hash: stream.template_hash.clone(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for f in &stream.frames {
        out.push_str(&serde_json::to_string(&FrameRow::from(f))?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses and validates a dataset; frames are returned in canonical order.
pub fn stream_from_jsonl(text: &str) -> Result<SequenceStream> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Format {
        line: 1,
        message: "empty dataset file".into(),
    })?;
    let header: Header = serde_json::from_str(first).map_err(|e| Error::Format {
        line: 1,
        message: format!("invalid header: {e}"),
    })?;
    if header.schema != FRAMES_SCHEMA {
        return Err(Error::Format {
            line: 1,
            message: format!("expected schema {FRAMES_SCHEMA}, found {}", header.schema),
        });
    }
    let mut frames = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let row: FrameRow = serde_json::from_str(line).map_err(|e| Error::Format {
            line: lineno,
            message: e.to_string(),
        })?;
        let rec = row.into_record().map_err(|message| Error::Format { line: lineno, message })?;
        if !seen.insert((rec.sequence.clone(), rec.index)) {
            return Err(Error::Data(format!(
                "duplicate frame ({}, {}) at line {lineno}",
                rec.sequence, rec.index
            )));
        }
        frames.push(rec);
    }
    SequenceStream::new(header.split, header.gen_seed, header.template_hash, frames)
}

pub fn save_stream(stream: &SequenceStream, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, stream_to_jsonl(stream)?)?;
    Ok(())
}

pub fn load_stream(path: impl AsRef<Path>) -> Result<SequenceStream> {
    stream_from_jsonl(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::BodyTemplate;
    use crate::data::{gen_synthetic_dataset, GenConfig};

    fn sample() -> SequenceStream {
        let cfg = GenConfig {
            n_sequences: 3,
            frames_per_sequence: 6,
            ..GenConfig::target(12)
        };
        gen_synthetic_dataset(&cfg, Split::Target, &BodyTemplate::generate(0)).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let s = sample();
        let text = stream_to_jsonl(&s).unwrap();
        let back = stream_from_jsonl(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(stream_to_jsonl(&back).unwrap(), text);
    }

    #[test]
    fn shuffled_lines_load_in_canonical_order() {
        let s = sample();
        let text = stream_to_jsonl(&s).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        lines.swap(3, 9);
        let back = stream_from_jsonl(&lines.join("\n")).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn missing_guide_names_the_line() {
        let s = sample();
        let text = stream_to_jsonl(&s).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut v: serde_json::Value = serde_json::from_str(&lines[4]).unwrap();
        v.as_object_mut().unwrap().remove("guide");
        lines[4] = v.to_string();
        match stream_from_jsonl(&lines.join("\n")) {
            Err(Error::Format { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("guide"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_frames_rejected() {
        let s = sample();
        let text = stream_to_jsonl(&s).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let dup = lines[2];
        lines.push(dup);
        assert!(matches!(stream_from_jsonl(&lines.join("\n")), Err(Error::Data(_))));
    }

    #[test]
    fn gap_in_indices_rejected() {
        let s = sample();
        let text = stream_to_jsonl(&s).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(3);
        assert!(matches!(stream_from_jsonl(&lines.join("\n")), Err(Error::Data(_))));
    }

    #[test]
    fn wrong_schema_rejected() {
        let s = sample();
        let text = stream_to_jsonl(&s).unwrap().replacen("frames.v1", "frames.v9", 1);
        assert!(matches!(stream_from_jsonl(&text), Err(Error::Format { line: 1, .. })));
    }
}
