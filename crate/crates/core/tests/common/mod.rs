#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttrbody::body::{BodyParams, CamParams, Joints3D, Keypoints2D, NUM_BETAS, NUM_JOINTS, THETA_DIM};
use ttrbody::data::{gen_synthetic_dataset, GenConfig, SequenceStream, Split};
use ttrbody::nnet::RegressorOutput;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_params(r: &mut ChaCha8Rng) -> BodyParams {
    BodyParams {
        theta: (0..THETA_DIM).map(|_| r.random_range(-1.0..1.0)).collect(),
        beta: (0..NUM_BETAS).map(|_| r.random_range(-1.5..1.5)).collect(),
    }
}

pub fn random_cam(r: &mut ChaCha8Rng) -> CamParams {
    CamParams::new(r.random_range(0.005..0.02), [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).unwrap()
}

pub fn random_output(r: &mut ChaCha8Rng) -> RegressorOutput {
    RegressorOutput {
        params: random_params(r),
        cam: random_cam(r),
    }
}

pub fn random_guide(r: &mut ChaCha8Rng) -> Keypoints2D {
    Keypoints2D {
        points: (0..NUM_JOINTS)
            .map(|_| [r.random_range(-10.0..10.0), r.random_range(-10.0..10.0)])
            .collect(),
        confidence: (0..NUM_JOINTS).map(|_| r.random_range(0.0..=1.0)).collect(),
    }
}

pub fn random_joints(r: &mut ChaCha8Rng, spread: f64) -> Joints3D {
    Joints3D {
        points: (0..NUM_JOINTS)
            .map(|_| {
                [
                    r.random_range(-spread..spread),
                    r.random_range(-spread..spread),
                    r.random_range(-spread..spread),
                ]
            })
            .collect(),
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Target stream whose sequences have the given lengths (at most 12 frames each).
pub fn stream_with_layout(lengths: &[usize], seed: u64) -> SequenceStream {
    let template = ttrbody::body::BodyTemplate::generate(0);
    let cfg = GenConfig {
        n_sequences: lengths.len(),
        frames_per_sequence: 12,
        ..GenConfig::target(seed)
    };
    let full = gen_synthetic_dataset(&cfg, Split::Target, &template).unwrap();
    let spans = full.sequences();
    let mut frames = Vec::new();
    for (span, &len) in spans.iter().zip(lengths) {
        frames.extend(full.frames[span.start..span.start + len].iter().cloned());
    }
    SequenceStream::new(Split::Target, seed, full.template_hash.clone(), frames).unwrap()
}
