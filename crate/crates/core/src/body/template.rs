use super::{NUM_BETAS, NUM_JOINTS, NUM_VERTICES, VERTS_PER_RING};
use crate::{rng, Error, Result};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TEMPLATE_SCHEMA: &str = "template.v1";

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_hip",
    "r_knee",
    "r_ankle",
    "neck",
    "head",
    "l_clavicle",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_clavicle",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
];

const PARENTS: [usize; NUM_JOINTS] = [0, 0, 1, 2, 0, 4, 5, 0, 7, 7, 9, 10, 11, 7, 13, 14, 15];

// Bone offsets from the parent joint in the rest pose, millimeters. y is up.
// The hips sit on the pelvis x-axis so the pelvis is their exact midpoint for any shape.
const REST_OFFSETS: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [95.0, 0.0, 0.0],
    [0.0, -420.0, 12.0],
    [0.0, -400.0, -25.0],
    [-95.0, 0.0, 0.0],
    [0.0, -420.0, 12.0],
    [0.0, -400.0, -25.0],
    [0.0, 520.0, -15.0],
    [0.0, 170.0, 25.0],
    [75.0, -25.0, 0.0],
    [95.0, -15.0, -5.0],
    [25.0, -275.0, 0.0],
    [10.0, -250.0, 30.0],
    [-75.0, -25.0, 0.0],
    [-95.0, -15.0, -5.0],
    [-25.0, -275.0, 0.0],
    [-10.0, -250.0, 30.0],
];

const L_HIP: usize = 1;
const R_HIP: usize = 4;

/// Largest relative bone-length change produced by a unit-norm `beta`.
const MAX_SHAPE_FRACTION: f64 = 0.1;

/// Kinematic tree, shape basis, rigid vertex binding and joint regressor.
///
/// Joint `i` is offset from its parent by `rest_offsets[i] + S_i * beta` in the
/// parent's frame, where `S_i` is rows `3i..3i+3` of `shape_basis`. Vertex `v` is
/// `p_b + G_b * vertex_offsets[v]` with `b = vertex_bone[v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyTemplate {
    pub seed: u64,
    pub parent: Vec<usize>,
    pub rest_offsets: Vec<[f64; 3]>,
    /// `(3 * NUM_JOINTS) x NUM_BETAS`, row-major.
    pub shape_basis: Vec<f64>,
    pub vertex_bone: Vec<usize>,
    pub vertex_offsets: Vec<[f64; 3]>,
    /// Sparse `(row, col, value)` triplets, joints x vertices.
    pub joint_regressor: Vec<(usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct VertexBinding {
    bone: Vec<usize>,
    offsets: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    schema: String,
    seed: u64,
    parent: Vec<usize>,
    rest_offsets: Vec<f64>,
    shape_basis: Vec<f64>,
    vertex_binding: VertexBinding,
    joint_regressor: Vec<(usize, usize, f64)>,
}

impl BodyTemplate {
    /// Builds the template deterministically from `seed`. The seed only drives the
    /// shape basis and the ring radii; the skeleton topology is fixed.
    pub fn generate(seed: u64) -> Self {
        let mut rng = rng::stream(seed, 0x7E3F);
        let mut shape_basis = vec![0.0; 3 * NUM_JOINTS * NUM_BETAS];
        for j in 1..NUM_JOINTS {
            if j == R_HIP {
                continue;
            }
            let len = Vector3::from(REST_OFFSETS[j]).norm();
            let rows: Vec<usize> = if j == L_HIP { vec![0] } else { vec![0, 1, 2] };
            let mut block = vec![0.0; rows.len() * NUM_BETAS];
            for v in block.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            let fro = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            let target = MAX_SHAPE_FRACTION * len * rng.random_range(0.5..1.0);
            for (ri, &r) in rows.iter().enumerate() {
                for k in 0..NUM_BETAS {
                    shape_basis[(3 * j + r) * NUM_BETAS + k] = block[ri * NUM_BETAS + k] * target / fro;
                }
            }
        }
        // Mirror the left hip so the pelvis stays the hip midpoint.
        for k in 0..NUM_BETAS {
            shape_basis[3 * R_HIP * NUM_BETAS + k] = -shape_basis[3 * L_HIP * NUM_BETAS + k];
        }

        let mut vertex_bone = Vec::with_capacity(NUM_VERTICES);
        let mut vertex_offsets = Vec::with_capacity(NUM_VERTICES);
        for j in 1..NUM_JOINTS {
            let r: f64 = rng.random_range(30.0..60.0);
            for axis in 0..3 {
                for sign in [1.0, -1.0] {
                    let mut o = [0.0; 3];
                    o[axis] = sign * r;
                    vertex_bone.push(j);
                    vertex_offsets.push(o);
                }
            }
        }

        let mut joint_regressor = Vec::new();
        for ring in 0..NUM_JOINTS - 1 {
            let joint = ring + 1;
            for k in 0..VERTS_PER_RING {
                joint_regressor.push((joint, ring * VERTS_PER_RING + k, 1.0 / VERTS_PER_RING as f64));
            }
        }
        for hip in [L_HIP, R_HIP] {
            let ring = hip - 1;
            for k in 0..VERTS_PER_RING {
                joint_regressor.push((0, ring * VERTS_PER_RING + k, 0.5 / VERTS_PER_RING as f64));
            }
        }
        joint_regressor.sort_by_key(|&(r, c, _)| (r, c));

        Self {
            seed,
            parent: PARENTS.to_vec(),
            rest_offsets: REST_OFFSETS.to_vec(),
            shape_basis,
            vertex_bone,
            vertex_offsets,
            joint_regressor,
        }
    }

    pub fn num_joints(&self) -> usize {
        self.parent.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_bone.len()
    }

    /// Shape-adjusted offset of joint `j` from its parent.
    pub fn offset(&self, j: usize, beta: &[f64]) -> Vector3<f64> {
        let mut o = Vector3::from(self.rest_offsets[j]);
        for r in 0..3 {
            let row = &self.shape_basis[(3 * j + r) * NUM_BETAS..(3 * j + r + 1) * NUM_BETAS];
            o[r] += row.iter().zip(beta).map(|(s, b)| s * b).sum::<f64>();
        }
        o
    }

    /// Length of the bone ending at joint `j` for shape `beta`.
    pub fn bone_length(&self, j: usize, beta: &[f64]) -> f64 {
        self.offset(j, beta).norm()
    }

    /// `true` if `a` is `b` or one of its ancestors.
    pub fn is_ancestor_or_self(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            if b == 0 {
                return false;
            }
            b = self.parent[b];
        }
    }

    pub fn rest_joints(&self) -> Vec<[f64; 3]> {
        let mut p = vec![Vector3::zeros(); self.num_joints()];
        for j in 1..self.num_joints() {
            p[j] = p[self.parent[j]] + Vector3::from(self.rest_offsets[j]);
        }
        p.into_iter().map(Into::into).collect()
    }

    pub fn rest_vertices(&self) -> Vec<[f64; 3]> {
        let joints = self.rest_joints();
        self.vertex_bone
            .iter()
            .zip(&self.vertex_offsets)
            .map(|(&b, o)| (Vector3::from(joints[b]) + Vector3::from(*o)).into())
            .collect()
    }

    /// Applies the sparse joint regressor to a vertex array.
    pub fn regress_joints(&self, vertices: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; self.num_joints()];
        for &(r, c, w) in &self.joint_regressor {
            for k in 0..3 {
                out[r][k] += w * vertices[c][k];
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let nj = self.num_joints();
        let nv = self.num_vertices();
        if nj != NUM_JOINTS {
            return Err(Error::dim("template joints", NUM_JOINTS, nj));
        }
        if nv != NUM_VERTICES {
            return Err(Error::dim("template vertices", NUM_VERTICES, nv));
        }
        if self.rest_offsets.len() != nj {
            return Err(Error::dim("rest_offsets", nj, self.rest_offsets.len()));
        }
        if self.shape_basis.len() != 3 * nj * NUM_BETAS {
            return Err(Error::dim("shape_basis", 3 * nj * NUM_BETAS, self.shape_basis.len()));
        }
        if self.vertex_offsets.len() != nv {
            return Err(Error::dim("vertex offsets", nv, self.vertex_offsets.len()));
        }
        if self.parent[0] != 0 {
            return Err(Error::Configuration("parent[0] must be the root itself".into()));
        }
        // Parents preceding children makes the tree connected and acyclic.
        for (j, &p) in self.parent.iter().enumerate().skip(1) {
            if p >= j {
                return Err(Error::Configuration(format!(
                    "joint {j} has parent {p}; parents must precede children"
                )));
            }
        }
        if let Some(&b) = self.vertex_bone.iter().find(|&&b| b >= nj) {
            return Err(Error::Configuration(format!("vertex bound to unknown joint {b}")));
        }
        let all_finite = self.rest_offsets.iter().flatten().all(|v| v.is_finite())
            && self.shape_basis.iter().all(|v| v.is_finite())
            && self.vertex_offsets.iter().flatten().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Configuration("template contains non-finite values".into()));
        }
        let mut row_sums = vec![0.0; nj];
        for &(r, c, w) in &self.joint_regressor {
            if r >= nj || c >= nv {
                return Err(Error::Configuration(format!("regressor entry ({r}, {c}) out of range")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Configuration(format!("regressor entry ({r}, {c}) = {w}")));
            }
            row_sums[r] += w;
        }
        if let Some((r, s)) = row_sums.iter().enumerate().find(|(_, s)| (**s - 1.0).abs() > 1e-9) {
            return Err(Error::Configuration(format!("regressor row {r} sums to {s}")));
        }
        let regressed = self.regress_joints(&self.rest_vertices());
        for (j, (a, b)) in regressed.iter().zip(self.rest_joints()).enumerate() {
            if (Vector3::from(*a) - Vector3::from(b)).amax() > 1e-6 {
                return Err(Error::Configuration(format!(
                    "regressor does not reproduce rest joint {j}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TemplateFile {
            schema: TEMPLATE_SCHEMA.into(),
            seed: self.seed,
            parent: self.parent.clone(),
            rest_offsets: self.rest_offsets.iter().flatten().copied().collect(),
            shape_basis: self.shape_basis.clone(),
            vertex_binding: VertexBinding {
                bone: self.vertex_bone.clone(),
                offsets: self.vertex_offsets.iter().flatten().copied().collect(),
            },
            joint_regressor: self.joint_regressor.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TemplateFile = serde_json::from_str(text)?;
        if file.schema != TEMPLATE_SCHEMA {
            return Err(Error::Format {
                line: 1,
                message: format!("expected schema {TEMPLATE_SCHEMA}, found {}", file.schema),
            });
        }
        let triples = |v: &[f64], what: &'static str| -> Result<Vec<[f64; 3]>> {
            if !v.len().is_multiple_of(3) {
                return Err(Error::dim(what, v.len() / 3 * 3 + 3, v.len()));
            }
            Ok(v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
        };
        let t = Self {
            seed: file.seed,
            parent: file.parent,
            rest_offsets: triples(&file.rest_offsets, "rest_offsets")?,
            shape_basis: file.shape_basis,
            vertex_bone: file.vertex_binding.bone,
            vertex_offsets: triples(&file.vertex_binding.offsets, "vertex offsets")?,
            joint_regressor: file.joint_regressor,
        };
        t.validate()?;
        Ok(t)
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = self.to_json().expect("template serialization is infallible");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

}
