use crate::body::{body_jacobians, BodyJacobians, BodyTemplate, Keypoints2D, CAM_DIM};
use crate::error::check_finite;
use crate::nnet::{OutputGrad, RegressorOutput};
use crate::{Error, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Weights of the pose, shape, camera and 2D-guide terms of the consistency loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 10.0,
            lambda2: 0.1,
            lambda3: 1.0,
            lambda4: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if all.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Configuration(format!("loss weights must be >= 0, got {all:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    /// Unweighted `[|dtheta|^2, |dbeta|^2, |dcam|^2, sum_j c_j |G_j - P_j|^2]`.
    pub terms: [f64; 4],
    /// Gradient with respect to the perturbed outputs.
    pub grad: OutputGrad,
}

fn check_guide(guide: &Keypoints2D, template: &BodyTemplate) -> Result<()> {
    if guide.len() != template.num_joints() {
        return Err(Error::dim("guide joints", template.num_joints(), guide.len()));
    }
    guide.validate()
}

/// Pulls a gradient on projected keypoints back onto regressor outputs.
fn keypoint_grad_to_outputs(jac: &BodyJacobians, d_points: &[[f64; 2]]) -> OutputGrad {
    let d = DVector::from_iterator(2 * d_points.len(), d_points.iter().flatten().copied());
    let theta = jac.d_keypoints_d_theta.tr_mul(&d);
    let beta = jac.d_keypoints_d_beta.tr_mul(&d);
    let cam = jac.d_keypoints_d_cam.tr_mul(&d);
    OutputGrad {
        theta: theta.iter().copied().collect(),
        beta: beta.iter().copied().collect(),
        cam: [cam[0], cam[1], cam[2]],
    }
}

fn sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `l1 |theta_l - theta_r|^2 + l2 |beta_l - beta_r|^2 + l3 |C_l - C_r|^2
///  + l4 sum_j c_j |G_j - C_r(J_r)_j|^2`, where `J_r` are the joints of the
/// perturbed parameters and `c_j` the guide confidences.
pub fn preadapt_loss(
    labels: &RegressorOutput,
    perturbed: &RegressorOutput,
    guide: &Keypoints2D,
    weights: &LossWeights,
    template: &BodyTemplate,
) -> Result<LossEval> {
    weights.validate()?;
    labels.params.validate()?;
    perturbed.params.validate()?;
    labels.cam.validate()?;
    check_guide(guide, template)?;

    let cam_l = labels.cam.to_array();
    let cam_r = perturbed.cam.to_array();
    let t_theta = sq_diff(&labels.params.theta, &perturbed.params.theta);
    let t_beta = sq_diff(&labels.params.beta, &perturbed.params.beta);
    let t_cam = sq_diff(&cam_l, &cam_r);

    let (t_2d, mut grad) = if weights.lambda4 != 0.0 {
        let jac = body_jacobians(&perturbed.params, &perturbed.cam, template)?;
        let mut total = 0.0;
        let mut d_points = Vec::with_capacity(guide.len());
        for ((p, g), c) in jac.keypoints.points.iter().zip(&guide.points).zip(&guide.confidence) {
            let r = [p[0] - g[0], p[1] - g[1]];
            total += c * (r[0] * r[0] + r[1] * r[1]);
            let k = 2.0 * weights.lambda4 * c;
            d_points.push([k * r[0], k * r[1]]);
        }
        (total, keypoint_grad_to_outputs(&jac, &d_points))
    } else {
        perturbed.cam.validate()?;
        (0.0, OutputGrad::zeros())
    };

    for (g, (l, r)) in grad.theta.iter_mut().zip(labels.params.theta.iter().zip(&perturbed.params.theta)) {
        *g += 2.0 * weights.lambda1 * (r - l);
    }
    for (g, (l, r)) in grad.beta.iter_mut().zip(labels.params.beta.iter().zip(&perturbed.params.beta)) {
        *g += 2.0 * weights.lambda2 * (r - l);
    }
    for k in 0..CAM_DIM {
        grad.cam[k] += 2.0 * weights.lambda3 * (cam_r[k] - cam_l[k]);
    }

    let value = weights.lambda1 * t_theta + weights.lambda2 * t_beta + weights.lambda3 * t_cam + weights.lambda4 * t_2d;
    if !value.is_finite() {
        return Err(Error::Numeric { what: "loss", index: 0 });
    }
    check_finite("theta gradient", &grad.theta)?;
    check_finite("beta gradient", &grad.beta)?;
    check_finite("camera gradient", &grad.cam)?;
    Ok(LossEval {
        value,
        terms: [t_theta, t_beta, t_cam, t_2d],
        grad,
    })
}

/// Confidence-weighted mean squared 2D error, `sum_j c_j |p_j - g_j|^2 / J`, with
/// its gradient on the predicted points. Confidences come from the guide.
pub fn keypoint2d_loss(pred: &Keypoints2D, guide: &Keypoints2D) -> Result<(f64, Vec<[f64; 2]>)> {
    if pred.len() != guide.len() {
        return Err(Error::dim("keypoints", guide.len(), pred.len()));
    }
    guide.validate()?;
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for ((p, g), c) in pred.points.iter().zip(&guide.points).zip(&guide.confidence) {
        let r = [p[0] - g[0], p[1] - g[1]];
        total += c * (r[0] * r[0] + r[1] * r[1]);
        grad.push([2.0 * c * r[0] / n, 2.0 * c * r[1] / n]);
    }
    Ok((total / n, grad))
}

/// [`keypoint2d_loss`] of the outputs' projected joints, differentiated back onto
/// the outputs.
pub fn keypoint_output_grad(
    out: &RegressorOutput,
    guide: &Keypoints2D,
    template: &BodyTemplate,
) -> Result<(f64, OutputGrad)> {
    check_guide(guide, template)?;
    let jac = body_jacobians(&out.params, &out.cam, template)?;
    let (value, d_points) = keypoint2d_loss(&jac.keypoints, guide)?;
    Ok((value, keypoint_grad_to_outputs(&jac, &d_points)))
}
