//! Small regressors standing in for image backbones.
//!
//! A learner maps one 32-dim frame feature to `theta | beta | cam`. The teacher sees
//! a temporal window of features, reduced to `(mean, center - mean)`, and predicts
//! the same outputs. Both are tanh MLPs with hand-written reverse-mode gradients.

mod adam;
mod heads;
mod mlp;
mod pretrain;
mod weights;

pub use adam::AdamState;
pub use heads::{
    learner_backward, learner_forward, learner_value_and_grad, teacher_backward,
    teacher_forward, teacher_value_and_grad, OutputGrad, RegressorOutput, TemporalWindow,
    HALF_WINDOW, WINDOW_LEN,
};
pub use mlp::{mlp_backward, mlp_forward, MlpTrace};
pub use pretrain::{pretrain_backbones, PretrainConfig, PretrainReport};
pub use weights::{deepcopy_weights, init_weights, ModelWeights, Role, WEIGHTS_SCHEMA};

use crate::body::{CAM_DIM, NUM_BETAS, THETA_DIM};

pub const FEATURE_DIM: usize = 32;
pub const OUTPUT_DIM: usize = THETA_DIM + NUM_BETAS + CAM_DIM;
pub const TEACHER_INPUT_DIM: usize = 2 * FEATURE_DIM;

pub const DEFAULT_LEARNER_DIMS: [usize; 4] = [FEATURE_DIM, 64, 64, OUTPUT_DIM];
pub const DEFAULT_TEACHER_DIMS: [usize; 4] = [TEACHER_INPUT_DIM, 64, 64, OUTPUT_DIM];

/// Offset keeping the camera scale strictly positive after the softplus.
pub const CAM_SCALE_FLOOR: f64 = 1e-3;

/// Number of scalars in an MLP with the given layer widths.
pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}
