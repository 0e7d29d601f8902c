//! Simplified parametric body: a 17-joint kinematic tree driven by axis-angle pose
//! and 10 shape coefficients, a 96-vertex rigidly skinned mesh, and a
//! weak-perspective camera.
//!
//! All 3D quantities are in millimeters, so joint errors read directly as MPJPE.

mod kinematics;
pub mod rotation;
mod template;

pub use kinematics::{
    body_jacobians, forward_kinematics, project_weak_perspective, skin_mesh, BodyJacobians,
};
pub use template::{BodyTemplate, JOINT_NAMES};

use crate::error::check_finite;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const NUM_JOINTS: usize = 17;
pub const NUM_BETAS: usize = 10;
pub const VERTS_PER_RING: usize = 6;
pub const NUM_VERTICES: usize = (NUM_JOINTS - 1) * VERTS_PER_RING;
pub const THETA_DIM: usize = 3 * NUM_JOINTS;
pub const CAM_DIM: usize = 3;

/// Pose (axis-angle per joint, radians) and shape coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BodyParams {
    pub fn zeros() -> Self {
        Self {
            theta: vec![0.0; THETA_DIM],
            beta: vec![0.0; NUM_BETAS],
        }
    }

    pub fn new(theta: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let p = Self { theta, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != THETA_DIM {
            return Err(Error::dim("theta", THETA_DIM, self.theta.len()));
        }
        if self.beta.len() != NUM_BETAS {
            return Err(Error::dim("beta", NUM_BETAS, self.beta.len()));
        }
        if let Some(i) = self.theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta[{i}] is not finite")));
        }
        if let Some(i) = self.beta.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta[{i}] is not finite")));
        }
        Ok(())
    }

    /// Axis-angle vector of joint `j`.
    pub fn joint_rotation(&self, j: usize) -> [f64; 3] {
        [
            self.theta[3 * j],
            self.theta[3 * j + 1],
            self.theta[3 * j + 2],
        ]
    }
}

/// Weak-perspective camera: `x = scale * (X, Y) + trans`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CamParams {
    pub scale: f64,
    pub trans: [f64; 2],
}

impl CamParams {
    pub fn new(scale: f64, trans: [f64; 2]) -> Result<Self> {
        let c = Self { scale, trans };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidCamera(self.scale));
        }
        check_finite("camera translation", &self.trans)
    }

    /// `[scale, tx, ty]`, the layout used by losses and regressor outputs.
    pub fn to_array(&self) -> [f64; CAM_DIM] {
        [self.scale, self.trans[0], self.trans[1]]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != CAM_DIM {
            return Err(Error::dim("camera", CAM_DIM, v.len()));
        }
        Self::new(v[0], [v[1], v[2]])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joints3D {
    pub points: Vec<[f64; 3]>,
}

impl Joints3D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (j, p) in self.points.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    what: "joints",
                    index: j,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
}

/// 2D keypoints with per-joint confidence. Also used for the 2D pose guide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoints2D {
    pub points: Vec<[f64; 2]>,
    #[serde(rename = "conf")]
    pub confidence: Vec<f64>,
}

impl Keypoints2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.confidence.len() != self.points.len() {
            return Err(Error::dim(
                "keypoint confidence",
                self.points.len(),
                self.confidence.len(),
            ));
        }
        for (j, p) in self.points.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    what: "keypoints",
                    index: j,
                });
            }
        }
        if let Some(j) = self
            .confidence
            .iter()
            .position(|c| !(0.0..=1.0).contains(c))
        {
            return Err(Error::InvalidParameter(format!(
                "keypoint confidence[{j}] = {} outside [0, 1]",
                self.confidence[j]
            )));
        }
        Ok(())
    }
}
