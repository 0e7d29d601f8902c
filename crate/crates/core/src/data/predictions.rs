//! Per-frame predictions as JSON Lines: `{sequence, index, theta, beta, cam}`.

use super::SequenceStream;
use crate::body::{BodyParams, CamParams};
use crate::nnet::RegressorOutput;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sequence: String,
    pub index: usize,
    pub output: RegressorOutput,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRow {
    sequence: String,
    index: usize,
    theta: Vec<f64>,
    beta: Vec<f64>,
    cam: [f64; 3],
}

/// Pairs each frame of `stream` with `outputs` in stream order.
pub fn label_predictions(stream: &SequenceStream, outputs: Vec<RegressorOutput>) -> Result<Vec<Prediction>> {
    if outputs.len() != stream.len() {
        return Err(Error::dim("predictions", stream.len(), outputs.len()));
    }
    Ok(stream
        .frames
        .iter()
        .zip(outputs)
        .map(|(f, output)| Prediction {
            sequence: f.sequence.clone(),
            index: f.index,
            output,
        })
        .collect())
}

pub fn predictions_to_jsonl(preds: &[Prediction]) -> Result<String> {
    let mut out = String::new();
    for p in preds {
        let row = PredictionRow {
            sequence: p.sequence.clone(),
            index: p.index,
            theta: p.output.params.theta.clone(),
            beta: p.output.params.beta.clone(),
            cam: p.output.cam.to_array(),
        };
        out.push_str(&serde_json::to_string(&row)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn predictions_from_jsonl(text: &str) -> Result<Vec<Prediction>> {
    let mut preds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let format = |message: String| Error::Format { line: i + 1, message };
        let row: PredictionRow = serde_json::from_str(line).map_err(|e| format(e.to_string()))?;
        let params = BodyParams::new(row.theta, row.beta).map_err(|e| format(e.to_string()))?;
        let cam = CamParams::from_slice(&row.cam).map_err(|e| format(e.to_string()))?;
        preds.push(Prediction {
            sequence: row.sequence,
            index: row.index,
            output: RegressorOutput { params, cam },
        });
    }
    Ok(preds)
}

pub fn save_predictions(preds: &[Prediction], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, predictions_to_jsonl(preds)?)?;
    Ok(())
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    predictions_from_jsonl(&std::fs::read_to_string(path)?)
}

/// Reorders `preds` to match `stream`. Fails listing every stream frame without
/// a prediction and every prediction without a frame.
pub fn match_predictions(preds: Vec<Prediction>, stream: &SequenceStream) -> Result<Vec<RegressorOutput>> {
    let mut by_id: BTreeMap<(String, usize), RegressorOutput> = BTreeMap::new();
    for p in preds {
        let id = (p.sequence, p.index);
        if by_id.contains_key(&id) {
            return Err(Error::Data(format!("duplicate prediction ({}, {})", id.0, id.1)));
        }
        by_id.insert(id, p.output);
    }
    let mut out = Vec::with_capacity(stream.len());
    let mut missing = Vec::new();
    for f in &stream.frames {
        match by_id.remove(&(f.sequence.clone(), f.index)) {
            Some(o) => out.push(o),
            None => missing.push(format!("({}, {})", f.sequence, f.index)),
        }
    }
    let extra: Vec<String> = by_id.keys().map(|(s, i)| format!("({s}, {i})")).collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut msg = String::from("predictions do not match the dataset");
        if !missing.is_empty() {
            msg.push_str(&format!("; missing frames: {}", missing.join(", ")));
        }
        if !extra.is_empty() {
            msg.push_str(&format!("; unknown frames: {}", extra.join(", ")));
        }
        return Err(Error::Data(msg));
    }
    Ok(out)
}
