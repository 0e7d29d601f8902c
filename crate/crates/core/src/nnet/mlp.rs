//! Fully connected tanh network over a flat parameter vector.
//!
//! Layer `l` stores its `dims[l+1] x dims[l]` weight matrix row-major, followed by
//! its `dims[l+1]` biases. Hidden layers use tanh, the last layer is linear.

use crate::{Error, Result};

/// Activations of every layer, input first, raw output last.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub activations: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace always holds the input")
    }
}

pub(crate) fn check_shape(dims: &[usize], values: &[f64], input: usize) -> Result<()> {
    let expected = super::param_count(dims);
    if values.len() != expected {
        return Err(Error::dim("weight values", expected, values.len()));
    }
    if input != dims[0] {
        return Err(Error::dim("network input", dims[0], input));
    }
    Ok(())
}

pub fn mlp_forward(dims: &[usize], values: &[f64], input: &[f64]) -> Result<MlpTrace> {
    check_shape(dims, values, input.len())?;
    let layers = dims.len() - 1;
    let mut activations = Vec::with_capacity(dims.len());
    activations.push(input.to_vec());
    let mut offset = 0;
    for l in 0..layers {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let w = &values[offset..offset + n_in * n_out];
        let b = &values[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let x = &activations[l];
        let mut y: Vec<f64> = (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        if l + 1 < layers {
            y.iter_mut().for_each(|v| *v = v.tanh());
        }
        activations.push(y);
    }
    Ok(MlpTrace { activations })
}

/// Reverse pass. Returns `(d_values, d_input)` for an upstream gradient on the
/// raw output.
pub fn mlp_backward(
    dims: &[usize],
    values: &[f64],
    trace: &MlpTrace,
    d_output: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shape(dims, values, trace.activations[0].len())?;
    let layers = dims.len() - 1;
    if d_output.len() != dims[layers] {
        return Err(Error::dim("output gradient", dims[layers], d_output.len()));
    }
    let mut offsets = Vec::with_capacity(layers);
    let mut offset = 0;
    for l in 0..layers {
        offsets.push(offset);
        offset += dims[l] * dims[l + 1] + dims[l + 1];
    }

    let mut grad = vec![0.0; values.len()];
    let mut delta = d_output.to_vec();
    for l in (0..layers).rev() {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        if l + 1 < layers {
            let a = &trace.activations[l + 1];
            delta.iter_mut().zip(a).for_each(|(d, a)| *d *= 1.0 - a * a);
        }
        let x = &trace.activations[l];
        let off = offsets[l];
        let w = &values[off..off + n_in * n_out];
        let mut d_x = vec![0.0; n_in];
        for o in 0..n_out {
            let d = delta[o];
            let g_row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
            g_row.iter_mut().zip(x).for_each(|(g, x)| *g = d * x);
            grad[off + n_in * n_out + o] = d;
            let w_row = &w[o * n_in..(o + 1) * n_in];
            d_x.iter_mut().zip(w_row).for_each(|(dx, w)| *dx += d * w);
        }
        delta = d_x;
    }
    Ok((grad, delta))
}
