use crate::body::{forward_kinematics, BodyTemplate};
use crate::data::{GroundTruth, SequenceStream};
use crate::metrics::{mpjpe, pa_mpjpe, FrameMetrics};
use crate::nnet::{learner_forward, teacher_forward, ModelWeights, RegressorOutput};
use crate::{Error, Result};

/// Per-frame and mean joint errors of a set of predictions, in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamErrors {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub per_frame: Vec<FrameMetrics>,
}

pub fn predict_learner(w: &ModelWeights, stream: &SequenceStream) -> Result<Vec<RegressorOutput>> {
    stream.frames.iter().map(|f| learner_forward(w, &f.feature)).collect()
}

pub fn predict_teacher(w: &ModelWeights, stream: &SequenceStream) -> Result<Vec<RegressorOutput>> {
    let mut out = Vec::with_capacity(stream.len());
    for span in stream.sequences() {
        for pos in span.range() {
            out.push(teacher_forward(w, &stream.window_at(&span, pos)?)?);
        }
    }
    Ok(out)
}

/// `(MPJPE, PA-MPJPE)` of one prediction against ground truth.
pub fn frame_errors(out: &RegressorOutput, gt: &GroundTruth, template: &BodyTemplate) -> Result<(f64, f64)> {
    let joints = forward_kinematics(&out.params, template)?;
    Ok((mpjpe(&joints, &gt.joints)?, pa_mpjpe(&joints, &gt.joints)?))
}

pub fn evaluate_outputs(
    outputs: &[RegressorOutput],
    stream: &SequenceStream,
    template: &BodyTemplate,
) -> Result<StreamErrors> {
    if outputs.len() != stream.len() {
        return Err(Error::dim("predictions", stream.len(), outputs.len()));
    }
    if stream.is_empty() {
        return Err(Error::Data("cannot evaluate an empty stream".into()));
    }
    let mut per_frame = Vec::with_capacity(outputs.len());
    let (mut sum, mut sum_pa) = (0.0, 0.0);
    for (out, frame) in outputs.iter().zip(&stream.frames) {
        let gt = frame.gt.as_ref().ok_or_else(|| {
            Error::Data(format!("frame ({}, {}) has no ground truth", frame.sequence, frame.index))
        })?;
        let (e, pa) = frame_errors(out, gt, template)?;
        sum += e;
        sum_pa += pa;
        per_frame.push(FrameMetrics {
            sequence: frame.sequence.clone(),
            index: frame.index,
            mpjpe_mm: e,
            pa_mpjpe_mm: pa,
        });
    }
    let n = per_frame.len() as f64;
    Ok(StreamErrors {
        mpjpe: sum / n,
        pa_mpjpe: sum_pa / n,
        per_frame,
    })
}

pub fn evaluate_learner(w: &ModelWeights, stream: &SequenceStream, template: &BodyTemplate) -> Result<StreamErrors> {
    evaluate_outputs(&predict_learner(w, stream)?, stream, template)
}
