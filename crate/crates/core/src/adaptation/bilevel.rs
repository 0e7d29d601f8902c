use super::eval::frame_errors;
use super::loss::{keypoint_output_grad, preadapt_loss, LossWeights};
use super::preadapt::opt;
use crate::body::{BodyTemplate, Keypoints2D};
use crate::data::{Prediction, SequenceStream};
use crate::nnet::{
    learner_forward, learner_value_and_grad, teacher_forward, AdamState, ModelWeights,
    RegressorOutput, Role, TemporalWindow,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Update rule of the outer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterOptimizer {
    Sgd,
    /// Adam whose moments are reset whenever the adapting weights are regenerated.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilevelConfig {
    pub lr_inner: f64,
    pub lr_outer: f64,
    pub steps_per_frame: usize,
    pub loss_weights: LossWeights,
    pub outer_optimizer: OuterOptimizer,
    /// Reset the adapting weights at every sequence change. Off only for ablations.
    pub regenerate: bool,
}

impl Default for BilevelConfig {
    fn default() -> Self {
        Self {
            lr_inner: 1e-5,
            lr_outer: 1e-5,
            steps_per_frame: 1,
            loss_weights: LossWeights::default(),
            outer_optimizer: OuterOptimizer::Adam,
            regenerate: true,
        }
    }
}

impl BilevelConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss_weights.validate()?;
        for (name, lr) in [("lr_inner", self.lr_inner), ("lr_outer", self.lr_outer)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Configuration(format!("{name} must be >= 0, got {lr}")));
            }
        }
        Ok(())
    }
}

/// Name of the sequence seen by the previous batch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequenceBuffer {
    last_sequence: Option<String>,
}

impl SequenceBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_sequence(&self) -> Option<&str> {
        self.last_sequence.as_deref()
    }

    /// True when `name` starts a new run of frames (including the very first).
    pub fn is_new_sequence(&self, name: &str) -> bool {
        self.last_sequence.as_deref() != Some(name)
    }

    pub fn update(&mut self, name: &str) {
        if self.is_new_sequence(name) {
            self.last_sequence = Some(name.to_string());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilevelOutcome {
    /// Inner objective at the current weights.
    pub inner_loss: f64,
    /// Outer objective at the probe weights.
    pub outer_loss: f64,
}

pub enum OuterStep<'a> {
    Sgd(f64),
    Adam(&'a mut AdamState),
}

/// One first-order bilevel update of `params`.
///
/// The probe `p' = p - lr_inner * grad_inner(p)` is evaluated with the outer
/// objective, and its gradient there is applied to `p` as if `dp'/dp = I`.
/// Both closures return `(value, gradient)`.
pub fn first_order_bilevel<I, O>(
    params: &mut [f64],
    lr_inner: f64,
    outer_step: OuterStep<'_>,
    inner: I,
    outer: O,
) -> Result<BilevelOutcome>
where
    I: FnOnce(&[f64]) -> Result<(f64, Vec<f64>)>,
    O: FnOnce(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (inner_loss, g_in) = inner(params)?;
    if g_in.len() != params.len() {
        return Err(Error::dim("inner gradient", params.len(), g_in.len()));
    }
    let probe: Vec<f64> = if lr_inner == 0.0 {
        params.to_vec()
    } else {
        params.iter().zip(&g_in).map(|(p, g)| p - lr_inner * g).collect()
    };
    let (outer_loss, g_out) = outer(&probe)?;
    if g_out.len() != params.len() {
        return Err(Error::dim("outer gradient", params.len(), g_out.len()));
    }
    match outer_step {
        OuterStep::Sgd(lr) => {
            if lr != 0.0 {
                params.iter_mut().zip(&g_out).for_each(|(p, g)| *p -= lr * g);
            }
        }
        OuterStep::Adam(state) => state.step(params, &g_out)?,
    }
    Ok(BilevelOutcome { inner_loss, outer_loss })
}

/// What one frame of the refinement loop needs.
#[derive(Debug, Clone, Copy)]
pub struct BilevelFrame<'a> {
    pub feature: &'a [f64],
    pub window: &'a TemporalWindow,
    pub guide: &'a Keypoints2D,
}

/// Adapting weights together with their outer-optimizer state.
#[derive(Debug, Clone)]
pub struct Adapter {
    pub weights: ModelWeights,
    pub adam: AdamState,
}

impl Adapter {
    /// Fresh `fa` copy of `snapshot`, with zeroed optimizer moments.
    pub fn regenerate(snapshot: &ModelWeights, cfg: &BilevelConfig) -> Result<Self> {
        let weights = snapshot.retagged(Role::Fa)?;
        let adam = AdamState::new(weights.values.len(), cfg.lr_outer);
        Ok(Self { weights, adam })
    }
}

/// Refines the adapter on one frame and returns its output at the updated weights.
///
/// Inner objective: 2D-guide error of the learner on the frame. Outer objective:
/// the teacher-consistency loss (including its own 2D term) against the frozen
/// teacher's output on the clean window.
pub fn bilevel_step(
    adapter: &mut Adapter,
    frame: BilevelFrame<'_>,
    teacher: &ModelWeights,
    cfg: &BilevelConfig,
    template: &BodyTemplate,
) -> Result<(RegressorOutput, Option<BilevelOutcome>)> {
    cfg.validate()?;
    adapter.weights.expect_learner()?;
    let label = teacher_forward(teacher, frame.window)?;
    let mut last = None;
    let Adapter { weights, adam } = adapter;
    let shell = ModelWeights {
        values: Vec::new(),
        layer_dims: weights.layer_dims.clone(),
        ..*weights
    };
    let at = |values: &[f64]| ModelWeights {
        values: values.to_vec(),
        ..shell.clone()
    };
    for _ in 0..cfg.steps_per_frame {
        let inner = |values: &[f64]| {
            let (v, _, g) = learner_value_and_grad(&at(values), frame.feature, |out| {
                keypoint_output_grad(out, frame.guide, template)
            })?;
            Ok((v, g))
        };
        let outer = |values: &[f64]| {
            let (v, _, g) = learner_value_and_grad(&at(values), frame.feature, |out| {
                let l = preadapt_loss(&label, out, frame.guide, &cfg.loss_weights, template)?;
                Ok((l.value, l.grad))
            })?;
            Ok((v, g))
        };
        let step = match cfg.outer_optimizer {
            OuterOptimizer::Sgd => OuterStep::Sgd(cfg.lr_outer),
            OuterOptimizer::Adam => OuterStep::Adam(&mut *adam),
        };
        last = Some(first_order_bilevel(&mut weights.values, cfg.lr_inner, step, inner, outer)?);
    }
    Ok((learner_forward(weights, frame.feature)?, last))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLog {
    /// Position in the stream.
    pub frame_id: usize,
    pub sequence: String,
    pub index: usize,
    /// Outer loss of the frame's last bilevel step.
    pub loss: Option<f64>,
    pub mpjpe_mm: Option<f64>,
    pub pa_mpjpe_mm: Option<f64>,
    pub regenerated: bool,
}

#[derive(Debug, Clone)]
pub struct RefineResult {
    pub frames: Vec<Prediction>,
    pub final_weights: ModelWeights,
    pub log: Vec<FrameLog>,
}

impl RefineResult {
    pub fn regenerations(&self) -> usize {
        self.log.iter().filter(|l| l.regenerated).count()
    }

    /// CSV with columns `frame_id,sequence,loss,mpjpe_mm,pa_mpjpe_mm,regenerated_flag`.
    pub fn log_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["frame_id", "sequence", "loss", "mpjpe_mm", "pa_mpjpe_mm", "regenerated_flag"])?;
        for l in &self.log {
            w.write_record([
                l.frame_id.to_string(),
                l.sequence.clone(),
                opt(l.loss),
                opt(l.mpjpe_mm),
                opt(l.pa_mpjpe_mm),
                u8::from(l.regenerated).to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// State visible right before a frame's bilevel step.
pub struct FrameEvent<'a> {
    pub frame_id: usize,
    pub sequence: &'a str,
    pub regenerated: bool,
    pub adapter: &'a ModelWeights,
    /// Buffer contents before it is updated with this frame.
    pub buffer: &'a SequenceBuffer,
}

pub fn refine_stream(
    fs: &ModelWeights,
    stream: &SequenceStream,
    teacher: &ModelWeights,
    cfg: &BilevelConfig,
    template: &BodyTemplate,
) -> Result<RefineResult> {
    refine_stream_observed(fs, stream, teacher, cfg, template, |_| {})
}

/// [`refine_stream`] calling `observe` before every frame's update.
pub fn refine_stream_observed<F>(
    fs: &ModelWeights,
    stream: &SequenceStream,
    teacher: &ModelWeights,
    cfg: &BilevelConfig,
    template: &BodyTemplate,
    mut observe: F,
) -> Result<RefineResult>
where
    F: FnMut(&FrameEvent<'_>),
{
    cfg.validate()?;
    fs.validate()?;
    fs.expect_learner()?;
    teacher.validate()?;
    teacher.expect_role(Role::Teacher)?;
    stream.check_order()?;
    if stream.is_empty() {
        return Err(Error::Data("cannot refine an empty stream".into()));
    }

    let mut buffer = SequenceBuffer::new();
    let mut adapter: Option<Adapter> = None;
    let mut frames = Vec::with_capacity(stream.len());
    let mut log = Vec::with_capacity(stream.len());
    for span in stream.sequences() {
        for pos in span.range() {
            let rec = &stream.frames[pos];
            let regenerated = buffer.is_new_sequence(&rec.sequence) && (cfg.regenerate || adapter.is_none());
            if regenerated {
                adapter = Some(Adapter::regenerate(fs, cfg)?);
            }
            let a = adapter.as_mut().expect("adapter created on the first frame");
            observe(&FrameEvent {
                frame_id: pos,
                sequence: &rec.sequence,
                regenerated,
                adapter: &a.weights,
                buffer: &buffer,
            });
            let window = stream.window_at(&span, pos)?;
            let frame = BilevelFrame {
                feature: &rec.feature,
                window: &window,
                guide: &rec.guide,
            };
            let (output, outcome) = bilevel_step(a, frame, teacher, cfg, template)?;
            let (mpjpe_mm, pa_mpjpe_mm) = match &rec.gt {
                Some(gt) => {
                    let (e, pa) = frame_errors(&output, gt, template)?;
                    (Some(e), Some(pa))
                }
                None => (None, None),
            };
            log.push(FrameLog {
                frame_id: pos,
                sequence: rec.sequence.clone(),
                index: rec.index,
                loss: outcome.map(|o| o.outer_loss),
                mpjpe_mm,
                pa_mpjpe_mm,
                regenerated,
            });
            frames.push(Prediction {
                sequence: rec.sequence.clone(),
                index: rec.index,
                output,
            });
            buffer.update(&rec.sequence);
        }
    }
    let final_weights = adapter.expect("stream is nonempty").weights;
    Ok(RefineResult {
        frames,
        final_weights,
        log,
    })
}
