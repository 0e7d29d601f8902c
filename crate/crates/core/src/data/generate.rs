//! Seeded synthetic source/target streams.
//!
//! Ground-truth poses are driven by a low-dimensional latent motion so that a
//! 32-dim feature can carry them. Features are a fixed linear embedding of the
//! normalized ground truth plus nuisance noise; the embedding is shared by both
//! splits (it comes from `embedding_seed`), and the target split applies the
//! configured [`DomainShift`] on top.

use super::{FrameRecord, GroundTruth, SequenceStream, Split};
use crate::body::{
    forward_kinematics, project_weak_perspective, BodyParams, BodyTemplate, CamParams, Keypoints2D,
    NUM_BETAS, NUM_JOINTS, THETA_DIM,
};
use crate::nnet::{FEATURE_DIM, OUTPUT_DIM};
use crate::{rng, Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

const POSE_LATENT_DIM: usize = 8;
const ROOT_ANGLE_STD: [f64; 3] = [0.15, 0.6, 0.1];
const JOINT_ANGLE_STD: f64 = 0.3;
const LATENT_AR: f64 = 0.95;
const BETA_STD: f64 = 0.7;
const CAM_SCALE_CENTER: f64 = 0.01;
const CAM_SCALE_LOG_STD: f64 = 0.1;
const CAM_TRANS_STD: f64 = 0.5;
const CAM_TRANS_DRIFT: f64 = 0.1;
const DROPOUT_CONFIDENCE: f64 = 0.1;
const DROPOUT_NOISE_FACTOR: f64 = 5.0;

// Normalization applied before the embedding.
const THETA_NORM: f64 = 0.5;
const CAM_SCALE_NORM: f64 = 0.001;
const CAM_TRANS_NORM: f64 = 0.5;

/// How the target split departs from the source split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainShift {
    /// Angle of the fixed rotation applied to the embedding, radians.
    pub rotation: f64,
    /// Multiplier on the per-frame nuisance std.
    pub nuisance_scale: f64,
    /// Std of a per-sequence constant feature offset.
    pub sequence_offset_std: f64,
}

impl Default for DomainShift {
    fn default() -> Self {
        Self {
            rotation: 0.25,
            nuisance_scale: 3.0,
            sequence_offset_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_sequences: usize,
    pub frames_per_sequence: usize,
    /// Low-pass coefficient of the latent motion, in (0, 1].
    pub motion_smoothness: f64,
    /// Std of the simulated detector's 2D error, plane units.
    pub detector_noise_std: f64,
    /// Probability that a joint's detection is degraded, in [0, 1).
    pub detector_dropout: f64,
    pub feature_nuisance_std: f64,
    /// Seed of the feature embedding and pose basis shared by all splits.
    pub embedding_seed: u64,
    pub domain_shift: DomainShift,
    pub seed: u64,
}

impl GenConfig {
    pub fn source(seed: u64) -> Self {
        Self {
            n_sequences: 80,
            frames_per_sequence: 120,
            motion_smoothness: 0.2,
            detector_noise_std: 0.1,
            detector_dropout: 0.1,
            feature_nuisance_std: 0.05,
            embedding_seed: 2024,
            domain_shift: DomainShift::default(),
            seed,
        }
    }

    pub fn target(seed: u64) -> Self {
        Self {
            n_sequences: 40,
            ..Self::source(seed)
        }
    }

    pub fn for_split(split: Split, seed: u64) -> Self {
        match split {
            Split::Source => Self::source(seed),
            Split::Target => Self::target(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Configuration(msg));
        if self.n_sequences == 0 || self.frames_per_sequence == 0 {
            return bad("need at least one sequence and one frame".into());
        }
        if !(self.motion_smoothness > 0.0 && self.motion_smoothness <= 1.0) {
            return bad(format!("motion_smoothness {} not in (0, 1]", self.motion_smoothness));
        }
        if !(self.detector_noise_std >= 0.0 && self.detector_noise_std.is_finite()) {
            return bad(format!("detector_noise_std {} must be >= 0", self.detector_noise_std));
        }
        if !(0.0..1.0).contains(&self.detector_dropout) {
            return bad(format!("detector_dropout {} not in [0, 1)", self.detector_dropout));
        }
        if !(self.feature_nuisance_std >= 0.0 && self.feature_nuisance_std.is_finite()) {
            return bad(format!("feature_nuisance_std {} must be >= 0", self.feature_nuisance_std));
        }
        let d = &self.domain_shift;
        if !(d.rotation.is_finite() && d.nuisance_scale >= 0.0 && d.sequence_offset_std >= 0.0) {
            return bad("invalid domain shift".into());
        }
        Ok(())
    }
}

/// Fixed pieces of the synthetic world shared by both splits.
struct World {
    pose_basis: DMatrix<f64>,
    embedding: DMatrix<f64>,
}

impl World {
    fn new(embedding_seed: u64, split: Split, shift: &DomainShift) -> Self {
        let mut rng = rng::stream(embedding_seed, 0xE3B);
        let gauss = |r: &mut ChaCha8Rng| r.sample::<f64, _>(StandardNormal);
        let mut pose_basis = DMatrix::zeros(THETA_DIM, POSE_LATENT_DIM);
        let per_col = (POSE_LATENT_DIM as f64).sqrt();
        for r in 0..THETA_DIM {
            let std = if r < 3 { ROOT_ANGLE_STD[r] } else { JOINT_ANGLE_STD };
            for c in 0..POSE_LATENT_DIM {
                pose_basis[(r, c)] = gauss(&mut rng) * std / per_col;
            }
        }
        let mut embedding = DMatrix::zeros(FEATURE_DIM, OUTPUT_DIM);
        let scale = 1.0 / (OUTPUT_DIM as f64).sqrt() * 2.0;
        for v in embedding.iter_mut() {
            *v = gauss(&mut rng) * scale;
        }
        let mut skew = DMatrix::zeros(FEATURE_DIM, FEATURE_DIM);
        for i in 0..FEATURE_DIM {
            for j in (i + 1)..FEATURE_DIM {
                let v = gauss(&mut rng);
                skew[(i, j)] = v;
                skew[(j, i)] = -v;
            }
        }
        if split == Split::Target && shift.rotation != 0.0 {
            // Cayley transform of a scaled skew matrix: an exact rotation whose
            // largest plane angle is about `shift.rotation`.
            let norm = skew.clone().svd(false, false).singular_values.max();
            let a = skew * (2.0 * (shift.rotation / 2.0).tan() / norm);
            let eye = DMatrix::<f64>::identity(FEATURE_DIM, FEATURE_DIM);
            let lhs = &eye - &a * 0.5;
            let rhs = &eye + &a * 0.5;
            let q = lhs.lu().solve(&rhs).expect("I - A/2 is invertible for skew A");
            embedding = q * embedding;
        }
        Self {
            pose_basis,
            embedding,
        }
    }
}

/// Normalized `theta | beta | cam` vector fed to the embedding.
fn normalized_target(params: &BodyParams, cam: &CamParams) -> DVector<f64> {
    let mut v = DVector::zeros(OUTPUT_DIM);
    for (i, t) in params.theta.iter().enumerate() {
        v[i] = t / THETA_NORM;
    }
    for (i, b) in params.beta.iter().enumerate() {
        v[THETA_DIM + i] = *b;
    }
    v[THETA_DIM + NUM_BETAS] = (cam.scale - CAM_SCALE_CENTER) / CAM_SCALE_NORM;
    v[THETA_DIM + NUM_BETAS + 1] = cam.trans[0] / CAM_TRANS_NORM;
    v[THETA_DIM + NUM_BETAS + 2] = cam.trans[1] / CAM_TRANS_NORM;
    v
}

pub fn gen_synthetic_dataset(cfg: &GenConfig, split: Split, template: &BodyTemplate) -> Result<SequenceStream> {
    cfg.validate()?;
    template.validate()?;
    let world = World::new(cfg.embedding_seed, split, &cfg.domain_shift);
    let (nuisance_std, offset_std) = match split {
        Split::Source => (cfg.feature_nuisance_std, 0.0),
        Split::Target => (
            cfg.feature_nuisance_std * cfg.domain_shift.nuisance_scale,
            cfg.domain_shift.sequence_offset_std,
        ),
    };
    let split_salt = match split {
        Split::Source => 0x50,
        Split::Target => 0x7A,
    };

    let mut frames = Vec::with_capacity(cfg.n_sequences * cfg.frames_per_sequence);
    for s in 0..cfg.n_sequences {
        let mut rng = rng::stream(rng::mix(cfg.seed, split_salt), s as u64);
        let gauss = |r: &mut ChaCha8Rng| r.sample::<f64, _>(StandardNormal);
        let name = format!("{split}_{s:03}");

        let beta: Vec<f64> = (0..NUM_BETAS).map(|_| gauss(&mut rng) * BETA_STD).collect();
        let scale = CAM_SCALE_CENTER * (gauss(&mut rng) * CAM_SCALE_LOG_STD).exp();
        let trans0 = [gauss(&mut rng) * CAM_TRANS_STD, gauss(&mut rng) * CAM_TRANS_STD];
        let offset: Vec<f64> = (0..FEATURE_DIM).map(|_| gauss(&mut rng) * offset_std).collect();

        let innovation = (1.0 - LATENT_AR * LATENT_AR).sqrt();
        let mut drive: Vec<f64> = (0..POSE_LATENT_DIM).map(|_| gauss(&mut rng)).collect();
        let mut latent = drive.clone();
        let mut trans_walk = [0.0f64; 2];

        for t in 0..cfg.frames_per_sequence {
            if t > 0 {
                for (d, z) in drive.iter_mut().zip(latent.iter_mut()) {
                    *d = LATENT_AR * *d + innovation * gauss(&mut rng);
                    *z += cfg.motion_smoothness * (*d - *z);
                }
                for w in trans_walk.iter_mut() {
                    *w = LATENT_AR * *w + innovation * gauss(&mut rng);
                }
            }
            let theta: Vec<f64> = (&world.pose_basis * DVector::from_column_slice(&latent))
                .iter()
                .map(|v| v.clamp(-FRAC_PI_2, FRAC_PI_2))
                .collect();
            let params = BodyParams::new(theta, beta.clone())?;
            let cam = CamParams::new(
                scale,
                [
                    trans0[0] + CAM_TRANS_DRIFT * trans_walk[0],
                    trans0[1] + CAM_TRANS_DRIFT * trans_walk[1],
                ],
            )?;
            let joints = forward_kinematics(&params, template)?;

            let clean = project_weak_perspective(&joints, &cam)?;
            let mut guide = Keypoints2D {
                points: Vec::with_capacity(NUM_JOINTS),
                confidence: Vec::with_capacity(NUM_JOINTS),
            };
            for p in &clean.points {
                if cfg.detector_noise_std == 0.0 && cfg.detector_dropout == 0.0 {
                    guide.points.push(*p);
                    guide.confidence.push(1.0);
                    continue;
                }
                let dropped = cfg.detector_dropout > 0.0 && rng.random::<f64>() < cfg.detector_dropout;
                let std = cfg.detector_noise_std * if dropped { DROPOUT_NOISE_FACTOR } else { 1.0 };
                let n = [gauss(&mut rng) * std, gauss(&mut rng) * std];
                guide.points.push([p[0] + n[0], p[1] + n[1]]);
                let conf = if dropped {
                    DROPOUT_CONFIDENCE
                } else if cfg.detector_noise_std > 0.0 {
                    (-(n[0].hypot(n[1])) / (2.0 * cfg.detector_noise_std)).exp()
                } else {
                    1.0
                };
                guide.confidence.push(conf);
            }

            let embedded = &world.embedding * normalized_target(&params, &cam);
            let feature: Vec<f64> = embedded
                .iter()
                .zip(&offset)
                .map(|(e, o)| e + o + gauss(&mut rng) * nuisance_std)
                .collect();

            frames.push(FrameRecord {
                sequence: name.clone(),
                index: t,
                feature,
                guide,
                gt: Some(GroundTruth { params, cam, joints }),
            });
        }
    }
    SequenceStream::new(split, cfg.seed, template.hash(), frames)
}
