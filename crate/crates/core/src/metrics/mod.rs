//! Joint-error metrics and report tables.
//!
//! MPJPE is measured after centering both skeletons at the pelvis. PA-MPJPE first
//! aligns the prediction with the best similarity transform (scale, proper
//! rotation, translation).

mod procrustes;
mod report;

pub use procrustes::{procrustes_align, SimilarityTransform};
pub use report::{build_report, report_grid_csv, Aggregate, FrameMetrics, MetricsReport, ReportConfig, REPORT_SCHEMA};

use crate::body::Joints3D;
use crate::{Error, Result};
use nalgebra::Vector3;

fn check_pair(pred: &Joints3D, gt: &Joints3D) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::dim("joint count", gt.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::Data("no joints to compare".into()));
    }
    Ok(())
}

/// Mean per-joint position error after root-centering, same units as the input.
pub fn mpjpe(pred: &Joints3D, gt: &Joints3D) -> Result<f64> {
    check_pair(pred, gt)?;
    let pr = Vector3::from(pred.points[0]);
    let gr = Vector3::from(gt.points[0]);
    let total: f64 = pred
        .points
        .iter()
        .zip(&gt.points)
        .map(|(p, g)| ((Vector3::from(*p) - pr) - (Vector3::from(*g) - gr)).norm())
        .sum();
    Ok(total / pred.len() as f64)
}

/// Mean per-joint error after similarity alignment of `pred` onto `gt`.
pub fn pa_mpjpe(pred: &Joints3D, gt: &Joints3D) -> Result<f64> {
    check_pair(pred, gt)?;
    let tf = procrustes_align(pred, gt)?;
    let total: f64 = pred
        .points
        .iter()
        .zip(&gt.points)
        .map(|(p, g)| (tf.apply(&Vector3::from(*p)) - Vector3::from(*g)).norm())
        .sum();
    Ok(total / pred.len() as f64)
}

/// `refined - initial` rounded to hundredths; negative means the error dropped.
pub fn gap(initial_mm: f64, refined_mm: f64) -> f64 {
    round2(refined_mm - initial_mm)
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}
