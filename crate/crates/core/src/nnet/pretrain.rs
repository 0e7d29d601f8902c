use super::{
    init_weights, learner_value_and_grad, teacher_value_and_grad, AdamState, ModelWeights, Role,
    RegressorOutput, TemporalWindow, DEFAULT_LEARNER_DIMS, DEFAULT_TEACHER_DIMS,
};
use crate::adaptation::{evaluate_learner, evaluate_outputs, predict_teacher, preadapt_loss, LossWeights};
use crate::body::{project_weak_perspective, BodyTemplate, Keypoints2D};
use crate::data::{GroundTruth, SequenceStream};
use crate::{rng, Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Std of Gaussian noise added to the learner's training features.
    pub learner_input_noise: f64,
    pub loss_weights: LossWeights,
    pub learner_dims: Vec<usize>,
    pub teacher_dims: Vec<usize>,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 2e-3,
            learner_input_noise: 0.1,
            loss_weights: LossWeights::default(),
            learner_dims: DEFAULT_LEARNER_DIMS.to_vec(),
            teacher_dims: DEFAULT_TEACHER_DIMS.to_vec(),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss_weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Configuration("batch_size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Configuration(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if !(self.learner_input_noise >= 0.0 && self.learner_input_noise.is_finite()) {
            return Err(Error::Configuration(format!(
                "learner_input_noise must be >= 0, got {}",
                self.learner_input_noise
            )));
        }
        Ok(())
    }
}

/// Source-stream errors of the freshly trained backbones, millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub learner_source_mpjpe: f64,
    pub teacher_source_mpjpe: f64,
    /// Mean training loss of the last epoch of each model.
    pub learner_final_loss: Option<f64>,
    pub teacher_final_loss: Option<f64>,
}

struct Sample<'a> {
    gt: &'a GroundTruth,
    guide: Keypoints2D,
}

/// Minibatch Adam over `n` samples; `value_and_grad(w, k, rng)` evaluates sample `k`.
fn train<F>(w: &mut ModelWeights, n: usize, cfg: &PretrainConfig, salt: u64, mut value_and_grad: F) -> Result<Option<f64>>
where
    F: FnMut(&ModelWeights, usize, &mut ChaCha8Rng) -> Result<(f64, Vec<f64>)>,
{
    let mut adam = AdamState::new(w.values.len(), cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut last = None;
    for epoch in 0..cfg.epochs {
        let mut rng = rng::stream(rng::mix(cfg.seed, epoch as u64), salt);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; w.values.len()];
            for &k in chunk {
                let (v, g) = value_and_grad(w, k, &mut rng)?;
                total += v;
                grad.iter_mut().zip(&g).for_each(|(s, gi)| *s += gi);
            }
            let m = chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g /= m);
            adam.step(&mut w.values, &grad)?;
        }
        last = Some(total / n as f64);
    }
    Ok(last)
}

/// Trains the per-frame backbone `f0` on noisy single frames and the temporal
/// teacher on clean windows, both against ground-truth parameters and exact
/// ground-truth projections.
pub fn pretrain_backbones(
    source: &SequenceStream,
    cfg: &PretrainConfig,
    template: &BodyTemplate,
) -> Result<(ModelWeights, ModelWeights, PretrainReport)> {
    cfg.validate()?;
    if !source.has_ground_truth() {
        return Err(Error::Data("pretraining needs ground truth on every frame".into()));
    }
    let mut learner = init_weights(Role::F0, &cfg.learner_dims, rng::mix(cfg.seed, 1))?;
    let mut teacher = init_weights(Role::Teacher, &cfg.teacher_dims, rng::mix(cfg.seed, 2))?;

    let mut samples = Vec::with_capacity(source.len());
    let mut windows: Vec<TemporalWindow> = Vec::with_capacity(source.len());
    for span in source.sequences() {
        for pos in span.range() {
            let gt = source.frames[pos].gt.as_ref().expect("checked above");
            let guide = project_weak_perspective(&gt.joints, &gt.cam)?;
            samples.push(Sample { gt, guide });
            windows.push(source.window_at(&span, pos)?);
        }
    }

    let weights = cfg.loss_weights;
    let loss = |s: &Sample<'_>, out: &RegressorOutput| {
        let l = preadapt_loss(&s.gt.as_output(), out, &s.guide, &weights, template)?;
        Ok((l.value, l.grad))
    };
    let learner_final_loss = train(&mut learner, samples.len(), cfg, 0x1EA, |w, k, rng| {
        let noisy: Vec<f64> = source.frames[k]
            .feature
            .iter()
            .map(|x| x + cfg.learner_input_noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let (v, _, g) = learner_value_and_grad(w, &noisy, |out| loss(&samples[k], out))?;
        Ok((v, g))
    })?;
    let teacher_final_loss = train(&mut teacher, samples.len(), cfg, 0x7EA, |w, k, _| {
        let (v, _, g) = teacher_value_and_grad(w, &windows[k], |out| loss(&samples[k], out))?;
        Ok((v, g))
    })?;

    let report = PretrainReport {
        learner_source_mpjpe: evaluate_learner(&learner, source, template)?.mpjpe,
        teacher_source_mpjpe: evaluate_outputs(&predict_teacher(&teacher, source)?, source, template)?.mpjpe,
        learner_final_loss,
        teacher_final_loss,
    };
    Ok((learner, teacher, report))
}
