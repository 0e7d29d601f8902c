use super::mlp::{mlp_backward, mlp_forward, MlpTrace};
use super::{ModelWeights, CAM_SCALE_FLOOR, FEATURE_DIM, TEACHER_INPUT_DIM};
use crate::body::{BodyParams, CamParams, CAM_DIM, NUM_BETAS, THETA_DIM};
use crate::error::check_finite;
use crate::{Error, Result};

/// Temporal half-window of the teacher.
pub const HALF_WINDOW: usize = 2;
pub const WINDOW_LEN: usize = 2 * HALF_WINDOW + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorOutput {
    pub params: BodyParams,
    pub cam: CamParams,
}

impl RegressorOutput {
    /// `theta | beta | cam` as one vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(THETA_DIM + NUM_BETAS + CAM_DIM);
        v.extend_from_slice(&self.params.theta);
        v.extend_from_slice(&self.params.beta);
        v.extend_from_slice(&self.cam.to_array());
        v
    }
}

/// Upstream gradient on a regressor's outputs. `cam` is with respect to
/// `[scale, tx, ty]` after the softplus.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrad {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub cam: [f64; CAM_DIM],
}

impl OutputGrad {
    pub fn zeros() -> Self {
        Self {
            theta: vec![0.0; THETA_DIM],
            beta: vec![0.0; NUM_BETAS],
            cam: [0.0; CAM_DIM],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.theta.len() != THETA_DIM {
            return Err(Error::dim("theta gradient", THETA_DIM, self.theta.len()));
        }
        if self.beta.len() != NUM_BETAS {
            return Err(Error::dim("beta gradient", NUM_BETAS, self.beta.len()));
        }
        Ok(())
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn split_output(raw: &[f64]) -> Result<RegressorOutput> {
    let theta = raw[..THETA_DIM].to_vec();
    let beta = raw[THETA_DIM..THETA_DIM + NUM_BETAS].to_vec();
    let c = &raw[THETA_DIM + NUM_BETAS..];
    let cam = CamParams::new(softplus(c[0]) + CAM_SCALE_FLOOR, [c[1], c[2]])?;
    Ok(RegressorOutput {
        params: BodyParams::new(theta, beta)?,
        cam,
    })
}

fn raw_output_grad(raw: &[f64], g: &OutputGrad) -> Result<Vec<f64>> {
    g.validate()?;
    let mut d = Vec::with_capacity(raw.len());
    d.extend_from_slice(&g.theta);
    d.extend_from_slice(&g.beta);
    d.push(g.cam[0] * sigmoid(raw[THETA_DIM + NUM_BETAS]));
    d.push(g.cam[1]);
    d.push(g.cam[2]);
    check_finite("output gradient", &d)?;
    Ok(d)
}

fn head_forward(w: &ModelWeights, input: &[f64]) -> Result<(RegressorOutput, MlpTrace)> {
    check_finite("network input", input)?;
    let trace = mlp_forward(&w.layer_dims, &w.values, input)?;
    Ok((split_output(trace.output())?, trace))
}

fn head_backward(w: &ModelWeights, trace: &MlpTrace, g: &OutputGrad) -> Result<Vec<f64>> {
    let d_raw = raw_output_grad(trace.output(), g)?;
    Ok(mlp_backward(&w.layer_dims, &w.values, trace, &d_raw)?.0)
}

fn check_feature(feature: &[f64]) -> Result<()> {
    if feature.len() != FEATURE_DIM {
        return Err(Error::dim("feature", FEATURE_DIM, feature.len()));
    }
    Ok(())
}

/// Per-frame learner: tanh MLP, output split `theta(51) | beta(10) | cam(3)`,
/// camera scale through `softplus + 1e-3`.
pub fn learner_forward(w: &ModelWeights, feature: &[f64]) -> Result<RegressorOutput> {
    w.expect_learner()?;
    check_feature(feature)?;
    Ok(head_forward(w, feature)?.0)
}

/// Exact gradient of `<upstream, learner_forward(w, feature)>` over `w.values`.
pub fn learner_backward(w: &ModelWeights, feature: &[f64], upstream: &OutputGrad) -> Result<Vec<f64>> {
    w.expect_learner()?;
    check_feature(feature)?;
    let (_, trace) = head_forward(w, feature)?;
    head_backward(w, &trace, upstream)
}

/// One forward pass, a loss on its output, and the parameter gradient of that loss.
pub fn learner_value_and_grad<F>(
    w: &ModelWeights,
    feature: &[f64],
    loss: F,
) -> Result<(f64, RegressorOutput, Vec<f64>)>
where
    F: FnOnce(&RegressorOutput) -> Result<(f64, OutputGrad)>,
{
    w.expect_learner()?;
    check_feature(feature)?;
    let (out, trace) = head_forward(w, feature)?;
    let (value, g) = loss(&out)?;
    let grad = head_backward(w, &trace, &g)?;
    Ok((value, out, grad))
}

/// Clean feature window centered on one frame, `2 * HALF_WINDOW + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalWindow {
    pub frames: Vec<Vec<f64>>,
}

impl TemporalWindow {
    /// Window around `center` with edge replication at sequence boundaries.
    pub fn around<T: AsRef<[f64]>>(sequence: &[T], center: usize) -> Result<Self> {
        if center >= sequence.len() {
            return Err(Error::Data(format!(
                "window center {center} outside a sequence of {} frames",
                sequence.len()
            )));
        }
        let last = sequence.len() - 1;
        let frames = (0..WINDOW_LEN)
            .map(|k| {
                let idx = (center + k).saturating_sub(HALF_WINDOW).min(last);
                sequence[idx].as_ref().to_vec()
            })
            .collect();
        Ok(Self { frames })
    }

    /// `(mean, center - mean)`, the teacher's 64-dim input.
    pub fn aggregate(&self) -> Result<Vec<f64>> {
        if self.frames.len() != WINDOW_LEN {
            return Err(Error::dim("temporal window", WINDOW_LEN, self.frames.len()));
        }
        for f in &self.frames {
            check_feature(f)?;
        }
        // Accumulate deviations from the center frame so a constant window yields
        // exactly that frame as its mean.
        let center = &self.frames[HALF_WINDOW];
        let mut dev = vec![0.0; FEATURE_DIM];
        for f in &self.frames {
            dev.iter_mut().zip(f.iter().zip(center)).for_each(|(d, (v, c))| *d += v - c);
        }
        let mean: Vec<f64> = center
            .iter()
            .zip(&dev)
            .map(|(c, d)| c + d / WINDOW_LEN as f64)
            .collect();
        let mut input = Vec::with_capacity(TEACHER_INPUT_DIM);
        input.extend_from_slice(&mean);
        input.extend(center.iter().zip(&mean).map(|(c, m)| c - m));
        Ok(input)
    }
}

pub fn teacher_forward(w: &ModelWeights, window: &TemporalWindow) -> Result<RegressorOutput> {
    w.expect_role(super::Role::Teacher)?;
    Ok(head_forward(w, &window.aggregate()?)?.0)
}

pub fn teacher_backward(w: &ModelWeights, window: &TemporalWindow, upstream: &OutputGrad) -> Result<Vec<f64>> {
    w.expect_role(super::Role::Teacher)?;
    let (_, trace) = head_forward(w, &window.aggregate()?)?;
    head_backward(w, &trace, upstream)
}

pub fn teacher_value_and_grad<F>(
    w: &ModelWeights,
    window: &TemporalWindow,
    loss: F,
) -> Result<(f64, RegressorOutput, Vec<f64>)>
where
    F: FnOnce(&RegressorOutput) -> Result<(f64, OutputGrad)>,
{
    w.expect_role(super::Role::Teacher)?;
    let (out, trace) = head_forward(w, &window.aggregate()?)?;
    let (value, g) = loss(&out)?;
    let grad = head_backward(w, &trace, &g)?;
    Ok((value, out, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{init_weights, Role, DEFAULT_LEARNER_DIMS, DEFAULT_TEACHER_DIMS, OUTPUT_DIM};

    #[test]
    fn zero_network_outputs() {
        let mut w = init_weights(Role::F0, &DEFAULT_LEARNER_DIMS, 0).unwrap();
        w.values.fill(0.0);
        let out = learner_forward(&w, &[0.3; FEATURE_DIM]).unwrap();
        assert!(out.params.theta.iter().all(|&v| v == 0.0));
        assert!(out.params.beta.iter().all(|&v| v == 0.0));
        assert_eq!(out.cam.scale, 2f64.ln() + 1e-3);
        assert_eq!(out.cam.trans, [0.0, 0.0]);
    }

    #[test]
    fn output_length_independent_of_hidden_dims() {
        for dims in [vec![32, 64], vec![32, 7, 64], vec![32, 64, 3, 9, 64]] {
            let w = init_weights(Role::F0, &dims, 1).unwrap();
            let out = learner_forward(&w, &[0.1; FEATURE_DIM]).unwrap();
            assert_eq!(out.to_vec().len(), OUTPUT_DIM);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let w = init_weights(Role::F0, &DEFAULT_LEARNER_DIMS, 2).unwrap();
        let g = learner_backward(&w, &[0.2; FEATURE_DIM], &OutputGrad::zeros()).unwrap();
        assert_eq!(g.len(), w.values.len());
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn final_bias_gradient_is_routed_upstream() {
        let w = init_weights(Role::F0, &DEFAULT_LEARNER_DIMS, 3).unwrap();
        let feature: Vec<f64> = (0..FEATURE_DIM).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut up = OutputGrad::zeros();
        up.theta.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64 - 20.0);
        up.beta[4] = 2.5;
        up.cam = [1.5, -0.5, 0.25];
        let g = learner_backward(&w, &feature, &up).unwrap();
        let bias = &g[g.len() - OUTPUT_DIM..];
        assert_eq!(&bias[..51], up.theta.as_slice());
        assert_eq!(&bias[51..61], up.beta.as_slice());
        let (_, trace) = head_forward(&w, &feature).unwrap();
        assert_eq!(bias[61], 1.5 * sigmoid(trace.output()[61]));
        assert_eq!(bias[62..], [-0.5, 0.25]);
    }

    #[test]
    fn feature_dimension_checked() {
        let w = init_weights(Role::F0, &DEFAULT_LEARNER_DIMS, 0).unwrap();
        assert!(matches!(learner_forward(&w, &[0.0; 31]), Err(Error::Dimension { .. })));
        let t = init_weights(Role::Teacher, &DEFAULT_TEACHER_DIMS, 0).unwrap();
        assert!(learner_forward(&t, &[0.0; 32]).is_err());
    }

    #[test]
    fn window_edge_replication() {
        let seq: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64; FEATURE_DIM]).collect();
        let w0 = TemporalWindow::around(&seq, 0).unwrap();
        let firsts: Vec<f64> = w0.frames.iter().map(|f| f[0]).collect();
        assert_eq!(firsts, vec![0.0, 0.0, 0.0, 1.0, 2.0]);
        let w3 = TemporalWindow::around(&seq, 3).unwrap();
        let firsts: Vec<f64> = w3.frames.iter().map(|f| f[0]).collect();
        assert_eq!(firsts, vec![1.0, 2.0, 3.0, 3.0, 3.0]);
        assert!(TemporalWindow::around(&seq, 4).is_err());
    }

    #[test]
    fn constant_window_has_zero_difference_channel() {
        let t = init_weights(Role::Teacher, &DEFAULT_TEACHER_DIMS, 4).unwrap();
        let frame: Vec<f64> = (0..FEATURE_DIM).map(|i| 0.1 * i as f64 - 1.0).collect();
        let window = TemporalWindow {
            frames: vec![frame.clone(); WINDOW_LEN],
        };
        let agg = window.aggregate().unwrap();
        assert!(agg[FEATURE_DIM..].iter().all(|&v| v == 0.0));
        let mut direct = frame.clone();
        direct.extend(std::iter::repeat_n(0.0, FEATURE_DIM));
        assert_eq!(agg, direct);
        assert_eq!(teacher_forward(&t, &window).unwrap(), head_forward(&t, &direct).unwrap().0);
    }

    #[test]
    fn wrong_window_length_rejected() {
        let t = init_weights(Role::Teacher, &DEFAULT_TEACHER_DIMS, 4).unwrap();
        let window = TemporalWindow {
            frames: vec![vec![0.0; FEATURE_DIM]; 3],
        };
        assert!(matches!(teacher_forward(&t, &window), Err(Error::Dimension { .. })));
    }
}
