//! Test-time refinement of a pre-trained learner.
//!
//! Two stages:
//!
//! 1. **Pre-adaptation** ([`preadapt_run`]): a copy `f_s` of the backbone `f_0` is
//!    trained with Adam so that its outputs on noise-corrupted target frames match
//!    a frozen temporal teacher's outputs on clean windows, plus a 2D-guide term.
//! 2. **Regeneration-based bilevel refinement** ([`refine_stream`]): frames are
//!    processed in stream order; `f_a` is reset to `f_s` whenever the sequence
//!    changes, and every frame gets one first-order bilevel update
//!    ([`bilevel_step`]) before its refined outputs are read off.

mod bilevel;
mod eval;
mod loss;
mod noise;
mod preadapt;

pub use bilevel::{
    bilevel_step, first_order_bilevel, refine_stream, refine_stream_observed, Adapter, BilevelConfig,
    BilevelFrame, BilevelOutcome, FrameEvent, FrameLog, OuterOptimizer, OuterStep, RefineResult,
    SequenceBuffer,
};
pub use eval::{evaluate_outputs, evaluate_learner, frame_errors, predict_learner, predict_teacher, StreamErrors};
pub use loss::{keypoint2d_loss, keypoint_output_grad, preadapt_loss, LossEval, LossWeights};
pub use noise::{corrupt, NoiseLevel, ABLATION_SIGMAS};
pub use preadapt::{preadapt_run, EpochLog, PreAdaptConfig, PreAdaptResult};
