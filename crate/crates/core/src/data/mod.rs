//! Synthetic frame streams, batching and the `frames.v1` JSON Lines format.

mod batches;
mod generate;
mod io;
mod predictions;

pub use batches::{iter_batches, Batch, BatchMode};
pub use generate::{gen_synthetic_dataset, DomainShift, GenConfig};
pub use io::{load_stream, save_stream, stream_from_jsonl, stream_to_jsonl, FRAMES_SCHEMA};
pub use predictions::{
    label_predictions, load_predictions, match_predictions, predictions_from_jsonl, predictions_to_jsonl,
    save_predictions, Prediction,
};

use crate::body::{BodyParams, CamParams, Joints3D, Keypoints2D};
use crate::nnet::{RegressorOutput, TemporalWindow};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Source,
    Target,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Source => "source",
            Split::Target => "target",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Split::Source),
            "target" => Ok(Split::Target),
            other => Err(Error::Configuration(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: BodyParams,
    pub cam: CamParams,
    pub joints: Joints3D,
}

impl GroundTruth {
    pub fn as_output(&self) -> RegressorOutput {
        RegressorOutput {
            params: self.params.clone(),
            cam: self.cam,
        }
    }
}

/// One frame: the feature standing in for the image crop, the 2D guide, and
/// optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub sequence: String,
    pub index: usize,
    pub feature: Vec<f64>,
    pub guide: Keypoints2D,
    pub gt: Option<GroundTruth>,
}

/// Contiguous run of frames belonging to one sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceSpan {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl SequenceSpan {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Frames ordered by `(sequence name, frame index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStream {
    pub split: Split,
    pub gen_seed: u64,
    pub template_hash: String,
    pub frames: Vec<FrameRecord>,
}

impl SequenceStream {
    /// Sorts `frames` into canonical order and validates uniqueness and contiguity.
    pub fn new(split: Split, gen_seed: u64, template_hash: String, mut frames: Vec<FrameRecord>) -> Result<Self> {
        frames.sort_by(|a, b| (&a.sequence, a.index).cmp(&(&b.sequence, b.index)));
        let s = Self {
            split,
            gen_seed,
            template_hash,
            frames,
        };
        s.check_order()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Verifies canonical ordering: sequences sorted by name, indices `0..n` in each.
    pub fn check_order(&self) -> Result<()> {
        for (k, pair) in self.frames.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            if (&a.sequence, a.index) == (&b.sequence, b.index) {
                return Err(Error::Data(format!(
                    "duplicate frame ({}, {})",
                    b.sequence, b.index
                )));
            }
            let ok = if a.sequence == b.sequence {
                b.index == a.index + 1
            } else {
                a.sequence < b.sequence && b.index == 0
            };
            if !ok {
                return Err(Error::Data(format!(
                    "stream out of order at position {}: ({}, {}) follows ({}, {})",
                    k + 1,
                    b.sequence,
                    b.index,
                    a.sequence,
                    a.index
                )));
            }
        }
        if let Some(f) = self.frames.first() {
            if f.index != 0 {
                return Err(Error::Data(format!(
                    "sequence {} does not start at frame 0",
                    f.sequence
                )));
            }
        }
        Ok(())
    }

    pub fn sequences(&self) -> Vec<SequenceSpan> {
        let mut spans: Vec<SequenceSpan> = Vec::new();
        for (i, f) in self.frames.iter().enumerate() {
            match spans.last_mut() {
                Some(s) if s.name == f.sequence => s.len += 1,
                _ => spans.push(SequenceSpan {
                    name: f.sequence.clone(),
                    start: i,
                    len: 1,
                }),
            }
        }
        spans
    }

    pub fn has_ground_truth(&self) -> bool {
        !self.frames.is_empty() && self.frames.iter().all(|f| f.gt.is_some())
    }

    /// Teacher window around stream position `pos`, edge-replicated within its sequence.
    pub fn window_at(&self, span: &SequenceSpan, pos: usize) -> Result<TemporalWindow> {
        let features: Vec<&[f64]> = self.frames[span.range()].iter().map(|f| f.feature.as_slice()).collect();
        TemporalWindow::around(&features, pos - span.start)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::body::NUM_JOINTS;

    /// Stream with the given sequence layout and placeholder content.
    pub fn layout_stream(layout: &[(&str, usize)]) -> SequenceStream {
        let mut frames = Vec::new();
        for (name, n) in layout {
            for i in 0..*n {
                frames.push(FrameRecord {
                    sequence: name.to_string(),
                    index: i,
                    feature: vec![i as f64 * 0.01; crate::nnet::FEATURE_DIM],
                    guide: Keypoints2D {
                        points: vec![[0.0, 0.0]; NUM_JOINTS],
                        confidence: vec![1.0; NUM_JOINTS],
                    },
                    gt: None,
                });
            }
        }
        SequenceStream::new(Split::Target, 0, String::new(), frames).unwrap()
    }
}
