use super::rotation::{rodrigues, rodrigues_with_derivatives};
use super::{BodyParams, BodyTemplate, CamParams, Joints3D, Keypoints2D, Mesh, NUM_BETAS};
use crate::error::check_finite;
use crate::{Error, Result};
use nalgebra::{DMatrix, Matrix3, Vector3};

/// Global joint frames for one parameter set.
struct Chain {
    local: Vec<Matrix3<f64>>,
    global: Vec<Matrix3<f64>>,
    position: Vec<Vector3<f64>>,
    /// `dR_local/dw_a` per joint, only filled when derivatives were requested.
    local_deriv: Vec<[Matrix3<f64>; 3]>,
}

impl Chain {
    fn build(params: &BodyParams, template: &BodyTemplate, derivatives: bool) -> Result<Self> {
        params.validate()?;
        let nj = template.num_joints();
        if params.theta.len() != 3 * nj {
            return Err(Error::dim("theta", 3 * nj, params.theta.len()));
        }
        let mut local = Vec::with_capacity(nj);
        let mut local_deriv = Vec::with_capacity(if derivatives { nj } else { 0 });
        for j in 0..nj {
            let w = Vector3::from(params.joint_rotation(j));
            if derivatives {
                let (r, d) = rodrigues_with_derivatives(&w);
                local.push(r);
                local_deriv.push(d);
            } else {
                local.push(rodrigues(&w));
            }
        }
        let mut global = vec![Matrix3::identity(); nj];
        let mut position = vec![Vector3::zeros(); nj];
        global[0] = local[0];
        for j in 1..nj {
            let p = template.parent[j];
            position[j] = position[p] + global[p] * template.offset(j, &params.beta);
            global[j] = global[p] * local[j];
        }
        Ok(Self {
            local,
            global,
            position,
            local_deriv,
        })
    }

    fn parent_frame(&self, template: &BodyTemplate, j: usize) -> Matrix3<f64> {
        if j == 0 {
            Matrix3::identity()
        } else {
            self.global[template.parent[j]]
        }
    }
}

/// Joint positions for `params`. The pelvis is the origin of the body frame.
pub fn forward_kinematics(params: &BodyParams, template: &BodyTemplate) -> Result<Joints3D> {
    let chain = Chain::build(params, template, false)?;
    let joints = Joints3D {
        points: chain.position.iter().map(|p| (*p).into()).collect(),
    };
    joints.validate()?;
    Ok(joints)
}

/// Rigidly skinned mesh: each vertex follows the frame of the joint it is bound to.
pub fn skin_mesh(params: &BodyParams, template: &BodyTemplate) -> Result<Mesh> {
    let chain = Chain::build(params, template, false)?;
    let vertices = template
        .vertex_bone
        .iter()
        .zip(&template.vertex_offsets)
        .map(|(&b, o)| (chain.position[b] + chain.global[b] * Vector3::from(*o)).into())
        .collect();
    Ok(Mesh { vertices })
}

pub fn project_weak_perspective(joints: &Joints3D, cam: &CamParams) -> Result<Keypoints2D> {
    cam.validate()?;
    let points = joints
        .points
        .iter()
        .map(|p| {
            [
                cam.scale * p[0] + cam.trans[0],
                cam.scale * p[1] + cam.trans[1],
            ]
        })
        .collect::<Vec<_>>();
    Ok(Keypoints2D {
        confidence: vec![1.0; points.len()],
        points,
    })
}

/// Forward outputs together with dense derivatives.
///
/// Row layouts: joints are `3 * joint + axis`, keypoints are `2 * joint + axis`.
/// Camera columns are `[scale, tx, ty]`.
#[derive(Debug, Clone)]
pub struct BodyJacobians {
    pub joints: Joints3D,
    pub keypoints: Keypoints2D,
    pub d_joints_d_theta: DMatrix<f64>,
    pub d_joints_d_beta: DMatrix<f64>,
    pub d_keypoints_d_theta: DMatrix<f64>,
    pub d_keypoints_d_beta: DMatrix<f64>,
    pub d_keypoints_d_cam: DMatrix<f64>,
}

pub fn body_jacobians(
    params: &BodyParams,
    cam: &CamParams,
    template: &BodyTemplate,
) -> Result<BodyJacobians> {
    cam.validate()?;
    let chain = Chain::build(params, template, true)?;
    let nj = template.num_joints();
    let mut d_theta = DMatrix::zeros(3 * nj, 3 * nj);
    let mut d_beta = DMatrix::zeros(3 * nj, NUM_BETAS);

    for k in 0..nj {
        let frame = chain.parent_frame(template, k);
        for a in 0..3 {
            // Rotating joint k by dw_a moves every strict descendant i by
            // frame * dR_a * R^T * frame^T * (p_i - p_k).
            let m = frame * chain.local_deriv[k][a] * chain.local[k].transpose() * frame.transpose();
            let col = 3 * k + a;
            for i in (k + 1)..nj {
                if template.is_ancestor_or_self(k, i) {
                    let d = m * (chain.position[i] - chain.position[k]);
                    for r in 0..3 {
                        d_theta[(3 * i + r, col)] = d[r];
                    }
                }
            }
        }
    }

    for i in 1..nj {
        let p = template.parent[i];
        let frame = chain.global[p];
        for r in 0..3 {
            for b in 0..NUM_BETAS {
                let mut acc = d_beta[(3 * p + r, b)];
                for c in 0..3 {
                    acc += frame[(r, c)] * template.shape_basis[(3 * i + c) * NUM_BETAS + b];
                }
                d_beta[(3 * i + r, b)] = acc;
            }
        }
    }

    check_finite("d_joints_d_theta", d_theta.as_slice())?;
    check_finite("d_joints_d_beta", d_beta.as_slice())?;

    let joints = Joints3D {
        points: chain.position.iter().map(|p| (*p).into()).collect(),
    };
    joints.validate()?;
    let keypoints = project_weak_perspective(&joints, cam)?;

    let mut d_kp_theta = DMatrix::zeros(2 * nj, 3 * nj);
    let mut d_kp_beta = DMatrix::zeros(2 * nj, NUM_BETAS);
    let mut d_kp_cam = DMatrix::zeros(2 * nj, 3);
    for i in 0..nj {
        for r in 0..2 {
            for c in 0..3 * nj {
                d_kp_theta[(2 * i + r, c)] = cam.scale * d_theta[(3 * i + r, c)];
            }
            for c in 0..NUM_BETAS {
                d_kp_beta[(2 * i + r, c)] = cam.scale * d_beta[(3 * i + r, c)];
            }
            d_kp_cam[(2 * i + r, 0)] = joints.points[i][r];
            d_kp_cam[(2 * i + r, 1 + r)] = 1.0;
        }
    }

    Ok(BodyJacobians {
        joints,
        keypoints,
        d_joints_d_theta: d_theta,
        d_joints_d_beta: d_beta,
        d_keypoints_d_theta: d_kp_theta,
        d_keypoints_d_beta: d_kp_beta,
        d_keypoints_d_cam: d_kp_cam,
    })
}
