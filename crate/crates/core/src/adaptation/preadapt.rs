use super::eval::evaluate_learner;
use super::loss::{preadapt_loss, LossWeights};
use super::noise::{corrupt, NoiseLevel};
use crate::body::BodyTemplate;
use crate::data::{iter_batches, BatchMode, SequenceStream};
use crate::nnet::{
    learner_value_and_grad, teacher_forward, AdamState, ModelWeights, RegressorOutput, Role,
};
use crate::{rng, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreAdaptConfig {
    pub epochs: usize,
    pub sequences_per_epoch: usize,
    pub frames_per_sequence: usize,
    pub noise: NoiseLevel,
    pub loss_weights: LossWeights,
    pub lr: f64,
    pub seed: u64,
    /// Evaluate the learner on the stream every this many epochs (0: only before
    /// the first and after the last epoch). Needs ground truth; skipped otherwise.
    pub eval_every: usize,
}

impl Default for PreAdaptConfig {
    fn default() -> Self {
        Self {
            epochs: 600,
            sequences_per_epoch: 3,
            frames_per_sequence: 8,
            noise: NoiseLevel::from_pixel(35.0).expect("valid sigma"),
            loss_weights: LossWeights::default(),
            lr: 1e-5,
            seed: 0,
            eval_every: 0,
        }
    }
}

impl PreAdaptConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss_weights.validate()?;
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Configuration(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if self.sequences_per_epoch == 0 || self.frames_per_sequence == 0 {
            return Err(Error::Configuration(
                "sequences_per_epoch and frames_per_sequence must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One row per epoch; epoch 0 is the untouched copy of the backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub sequences: Vec<String>,
    /// Mean loss over the epoch's frames.
    pub loss: Option<f64>,
    pub mpjpe_mm: Option<f64>,
    pub pa_mpjpe_mm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PreAdaptResult {
    pub weights: ModelWeights,
    pub log: Vec<EpochLog>,
}

impl PreAdaptResult {
    /// `(epoch, MPJPE)` of every evaluated epoch.
    pub fn checkpoints(&self) -> Vec<(usize, f64)> {
        self.log.iter().filter_map(|l| l.mpjpe_mm.map(|m| (l.epoch, m))).collect()
    }

    /// CSV with columns `epoch,sequence,loss,mpjpe_mm,pa_mpjpe_mm,regenerated_flag`.
    /// Sampled sequences are joined with `;`; the flag column stays empty.
    pub fn log_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "sequence", "loss", "mpjpe_mm", "pa_mpjpe_mm", "regenerated_flag"])?;
        for l in &self.log {
            w.write_record([
                l.epoch.to_string(),
                l.sequences.join(";"),
                opt(l.loss),
                opt(l.mpjpe_mm),
                opt(l.pa_mpjpe_mm),
                String::new(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Distills the frozen teacher's clean-window outputs into a copy of `f0` fed with
/// corrupted frames. Returns the pre-adapted learner tagged `fs`.
pub fn preadapt_run(
    f0: &ModelWeights,
    teacher: &ModelWeights,
    target: &SequenceStream,
    cfg: &PreAdaptConfig,
    template: &BodyTemplate,
) -> Result<PreAdaptResult> {
    cfg.validate()?;
    f0.validate()?;
    teacher.validate()?;
    f0.expect_role(Role::F0)?;
    teacher.expect_role(Role::Teacher)?;
    if target.is_empty() {
        return Err(Error::Data("pre-adaptation needs a nonempty stream".into()));
    }
    target.check_order()?;

    let mut fs = f0.retagged(Role::Fs)?;
    let mut adam = AdamState::new(fs.values.len(), cfg.lr);
    let spans = target.sequences();
    let span_of: Vec<usize> = spans
        .iter()
        .enumerate()
        .flat_map(|(k, s)| std::iter::repeat_n(k, s.len))
        .collect();
    let mut labels: Vec<Option<RegressorOutput>> = vec![None; target.len()];
    let evaluate = target.has_ground_truth();
    let eval_row = |w: &ModelWeights, epoch: usize, sequences: Vec<String>, loss: Option<f64>| -> Result<EpochLog> {
        let (mpjpe_mm, pa_mpjpe_mm) = if evaluate {
            let e = evaluate_learner(w, target, template)?;
            (Some(e.mpjpe), Some(e.pa_mpjpe))
        } else {
            (None, None)
        };
        Ok(EpochLog {
            epoch,
            sequences,
            loss,
            mpjpe_mm,
            pa_mpjpe_mm,
        })
    };

    let mut log = vec![eval_row(&fs, 0, Vec::new(), None)?];
    for epoch in 1..=cfg.epochs {
        let mode = BatchMode::Sampled {
            seed: cfg.seed,
            epoch: epoch as u64,
            seq_count: cfg.sequences_per_epoch,
            frame_count: cfg.frames_per_sequence,
        };
        let mut noise_rng = rng::stream(rng::mix(cfg.seed, epoch as u64), 0x0015E);
        let mut sequences = Vec::new();
        let (mut loss_sum, mut frames) = (0.0, 0usize);
        for batch in iter_batches(target, cfg.frames_per_sequence, mode)? {
            let mut grad_sum = vec![0.0; fs.values.len()];
            for &pos in &batch.positions {
                let frame = &target.frames[pos];
                if labels[pos].is_none() {
                    let window = target.window_at(&spans[span_of[pos]], pos)?;
                    labels[pos] = Some(teacher_forward(teacher, &window)?);
                }
                let label = labels[pos].as_ref().expect("label just computed");
                let noisy = corrupt(&frame.feature, cfg.noise, &mut noise_rng)?;
                let (value, _, grad) = learner_value_and_grad(&fs, &noisy, |out| {
                    let l = preadapt_loss(label, out, &frame.guide, &cfg.loss_weights, template)?;
                    Ok((l.value, l.grad))
                })?;
                loss_sum += value;
                frames += 1;
                grad_sum.iter_mut().zip(&grad).for_each(|(s, g)| *s += g);
            }
            let n = batch.positions.len() as f64;
            grad_sum.iter_mut().for_each(|g| *g /= n);
            adam.step(&mut fs.values, &grad_sum)?;
            sequences.push(batch.sequence);
        }
        let loss = Some(loss_sum / frames as f64);
        let checkpoint = epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);
        if checkpoint {
            log.push(eval_row(&fs, epoch, sequences, loss)?);
        } else {
            log.push(EpochLog {
                epoch,
                sequences,
                loss,
                mpjpe_mm: None,
                pa_mpjpe_mm: None,
            });
        }
    }
    Ok(PreAdaptResult { weights: fs, log })
}
