//! Channel-major 1-D layers. A `C × L` tensor is a flat slice with element
//! `(c, t)` at `c * L + t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    /// `x · sigmoid(x)`
    Swish,
    Relu,
    LeakyRelu,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Swish,
        Activation::Relu,
        Activation::LeakyRelu,
    ];

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => crate::logreg::sigmoid(z),
            Activation::Swish => z * crate::logreg::sigmoid(z),
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
        }
    }

    /// Derivative at pre-activation `z` with output `y`. The ReLU family
    /// uses the left derivative at 0.
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Swish => {
                let s = crate::logreg::sigmoid(z);
                s + z * s * (1.0 - s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }

    pub fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu)
    }
}

pub fn conv_out_len(len: usize, kernel: usize) -> Option<usize> {
    (kernel >= 1 && len >= kernel).then(|| len - kernel + 1)
}

pub fn pool_out_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (kernel >= 1 && stride >= 1 && len >= kernel).then(|| (len - kernel) / stride + 1)
}

/// Valid cross-correlation with stride 1:
/// `out[c,i] = bias[c] + Σ_{c',j} filters[c,c',j] · input[c', i+j]`.
/// `filters` is `c_out × c_in × k`.
pub fn conv1d_forward(
    input: &[f64],
    c_in: usize,
    filters: &[f64],
    bias: &[f64],
    k: usize,
) -> Result<Vec<f64>> {
    let c_out = bias.len();
    if c_in == 0 || !input.len().is_multiple_of(c_in) {
        return Err(Error::input(format!(
            "conv input of {} values is not {c_in} channels",
            input.len()
        )));
    }
    let len = input.len() / c_in;
    if filters.len() != c_out * c_in * k {
        return Err(Error::Dimension {
            what: "conv filters",
            expected: c_out * c_in * k,
            got: filters.len(),
        });
    }
    let lo = conv_out_len(len, k)
        .ok_or_else(|| Error::input(format!("conv input length {len} shorter than kernel {k}")))?;
    let mut out = vec![0.0; c_out * lo];
    for (c, o) in out.chunks_exact_mut(lo).enumerate() {
        o.fill(bias[c]);
        for ci in 0..c_in {
            let inp = &input[ci * len..(ci + 1) * len];
            let w = &filters[(c * c_in + ci) * k..(c * c_in + ci + 1) * k];
            for (j, &wv) in w.iter().enumerate() {
                for (ov, sv) in o.iter_mut().zip(&inp[j..j + lo]) {
                    *ov += wv * sv;
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates filter and bias gradients; returns the input gradient when
/// `want_input` is set.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    input: &[f64],
    c_in: usize,
    filters: &[f64],
    k: usize,
    d_out: &[f64],
    c_out: usize,
    d_filters: &mut [f64],
    d_bias: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let len = input.len() / c_in;
    let lo = len - k + 1;
    let mut d_in = want_input.then(|| vec![0.0; input.len()]);
    for c in 0..c_out {
        let g = &d_out[c * lo..(c + 1) * lo];
        d_bias[c] += g.iter().sum::<f64>();
        for ci in 0..c_in {
            let inp = &input[ci * len..(ci + 1) * len];
            let base = (c * c_in + ci) * k;
            for j in 0..k {
                d_filters[base + j] += g
                    .iter()
                    .zip(&inp[j..j + lo])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                if let Some(d) = d_in.as_mut() {
                    let wv = filters[base + j];
                    for (dv, gv) in d[ci * len + j..ci * len + j + lo].iter_mut().zip(g) {
                        *dv += wv * gv;
                    }
                }
            }
        }
    }
    d_in
}

/// Window means without padding. Each mean is taken relative to the first
/// element of its window, so a constant window returns that constant exactly.
pub fn avgpool_forward(
    input: &[f64],
    channels: usize,
    kernel: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    if channels == 0 || !input.len().is_multiple_of(channels) {
        return Err(Error::input(format!(
            "pool input of {} values is not {channels} channels",
            input.len()
        )));
    }
    let len = input.len() / channels;
    let lo = pool_out_len(len, kernel, stride).ok_or_else(|| {
        Error::input(format!(
            "pool input length {len} shorter than kernel {kernel}"
        ))
    })?;
    let mut out = Vec::with_capacity(channels * lo);
    for c in 0..channels {
        let row = &input[c * len..(c + 1) * len];
        for q in 0..lo {
            let w = &row[q * stride..q * stride + kernel];
            let x0 = w[0];
            out.push(x0 + w.iter().map(|v| v - x0).sum::<f64>() / kernel as f64);
        }
    }
    Ok(out)
}

pub fn avgpool_backward(
    d_out: &[f64],
    channels: usize,
    len: usize,
    kernel: usize,
    stride: usize,
) -> Vec<f64> {
    let lo = d_out.len() / channels;
    let mut d_in = vec![0.0; channels * len];
    let inv = 1.0 / kernel as f64;
    for c in 0..channels {
        for q in 0..lo {
            let g = d_out[c * lo + q] * inv;
            for v in &mut d_in[c * len + q * stride..c * len + q * stride + kernel] {
                *v += g;
            }
        }
    }
    d_in
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_filter_truncates() {
        let x = [1.0, -2.0, 3.5, 4.0, 0.5];
        let out = conv1d_forward(&x, 1, &[1.0, 0.0, 0.0], &[0.0], 3).unwrap();
        assert_eq!(out, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn sliding_sums() {
        let out = conv1d_forward(&[1.0, 2.0, 3.0, 4.0], 1, &[1.0; 3], &[0.0], 3).unwrap();
        assert_eq!(out, vec![6.0, 9.0]);
        assert!(conv1d_forward(&[1.0, 2.0], 1, &[1.0; 3], &[0.0], 3).is_err());
    }

    #[test]
    fn pool_shapes_and_constants() {
        assert_eq!(pool_out_len(271, 15, 5), Some(52));
        assert_eq!(pool_out_len(23, 15, 5), Some(2));
        assert_eq!(conv_out_len(300, 30), Some(271));
        let x = vec![0.1; 2 * 23];
        let out = avgpool_forward(&x, 2, 15, 5).unwrap();
        assert_eq!(out, vec![0.1; 4]);
        assert!(avgpool_forward(&[1.0; 10], 1, 15, 5).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::LeakyRelu.apply(-2.0), -0.02);
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::Swish.apply(0.0), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        for a in Activation::ALL {
            let z = 0.3;
            let h = 1e-6;
            let num = (a.apply(z + h) - a.apply(z - h)) / (2.0 * h);
            assert!((num - a.derivative(z, a.apply(z))).abs() < 1e-8, "{a:?}");
        }
    }
}
