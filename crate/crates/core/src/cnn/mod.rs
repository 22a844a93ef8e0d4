//! One-dimensional CNN: `[conv → act → pool]*` → flatten → fc1 → act →
//! fc2 → sigmoid, trained on MSE with Adam.
//!
//! All parameters live in one flat vector; [`TensorInfo`] records where
//! each named tensor starts.

pub mod checkpoint;
pub mod layers;
pub mod search;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, Segment};
use crate::error::{Error, Result};

pub use layers::Activation;
use layers::{
    avgpool_backward, avgpool_forward, conv1d_backward, conv1d_forward, conv_out_len, pool_out_len,
};
pub use search::{random_search, SearchResult, SearchSpace, TrialRecord};
pub use train::{evaluate_mse, grad_check, train, TrainConfig, TrainReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub in_channels: usize,
    /// Input length the fc1 width is derived from.
    pub input_len: usize,
    pub conv_layers: Vec<ConvSpec>,
    /// Applied after every conv layer; `None` skips pooling.
    pub pool: Option<PoolSpec>,
    /// Width of fc1, i.e. of the embedding.
    pub hidden: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            in_channels: 6,
            input_len: 300,
            conv_layers: vec![
                ConvSpec {
                    out_channels: 12,
                    kernel_size: 30,
                },
                ConvSpec {
                    out_channels: 24,
                    kernel_size: 30,
                },
            ],
            pool: Some(PoolSpec {
                kernel: 15,
                stride: 5,
            }),
            hidden: 2,
            activation: Activation::LeakyRelu,
            seed: 1,
        }
    }
}

/// Name and `[channels, length]` of one stage's output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub name: String,
    pub shape: Vec<usize>,
}

impl CnnConfig {
    /// Output shape of every stage for an input of `len` samples.
    pub fn shape_chain(&self, len: usize) -> Result<Vec<Stage>> {
        let mut out = vec![Stage {
            name: "input".into(),
            shape: vec![self.in_channels, len],
        }];
        let (mut c, mut l) = (self.in_channels, len);
        for (i, spec) in self.conv_layers.iter().enumerate() {
            let name = format!("conv{}", i + 1);
            l = conv_out_len(l, spec.kernel_size).ok_or_else(|| {
                Error::input(format!(
                    "{name}: input length {l} shorter than kernel {}",
                    spec.kernel_size
                ))
            })?;
            c = spec.out_channels;
            out.push(Stage {
                name,
                shape: vec![c, l],
            });
            if let Some(p) = self.pool {
                let name = format!("pool{}", i + 1);
                l = pool_out_len(l, p.kernel, p.stride).ok_or_else(|| {
                    Error::input(format!(
                        "{name}: input length {l} shorter than kernel {}",
                        p.kernel
                    ))
                })?;
                out.push(Stage {
                    name,
                    shape: vec![c, l],
                });
            }
        }
        out.push(Stage {
            name: "flatten".into(),
            shape: vec![c * l],
        });
        out.push(Stage {
            name: "fc1".into(),
            shape: vec![self.hidden],
        });
        out.push(Stage {
            name: "fc2".into(),
            shape: vec![1],
        });
        Ok(out)
    }

    pub fn flatten_size(&self, len: usize) -> Result<usize> {
        let chain = self.shape_chain(len)?;
        Ok(chain[chain.len() - 3].shape[0])
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.hidden == 0 {
            return Err(Error::config(
                "cnn",
                "in_channels and hidden must be positive",
            ));
        }
        if self
            .conv_layers
            .iter()
            .any(|c| c.out_channels == 0 || c.kernel_size == 0)
        {
            return Err(Error::config(
                "conv_layers",
                "channels and kernel sizes must be positive",
            ));
        }
        if let Some(p) = self.pool {
            if p.kernel == 0 || p.stride == 0 {
                return Err(Error::config("pool", "kernel and stride must be positive"));
            }
        }
        self.shape_chain(self.input_len)
            .map_err(|e| Error::config("input_len", e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub fan_in: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

fn layout(cfg: &CnnConfig) -> Result<Vec<TensorInfo>> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, shape: Vec<usize>, fan_in: usize| {
        let n: usize = shape.iter().product();
        tensors.push(TensorInfo {
            name,
            shape,
            offset,
            fan_in,
        });
        offset += n;
    };
    let mut c_in = cfg.in_channels;
    for (i, spec) in cfg.conv_layers.iter().enumerate() {
        let fan_in = c_in * spec.kernel_size;
        push(
            format!("conv{}.weight", i + 1),
            vec![spec.out_channels, c_in, spec.kernel_size],
            fan_in,
        );
        push(
            format!("conv{}.bias", i + 1),
            vec![spec.out_channels],
            fan_in,
        );
        c_in = spec.out_channels;
    }
    let flat = cfg.flatten_size(cfg.input_len)?;
    push("fc1.weight".into(), vec![cfg.hidden, flat], flat);
    push("fc1.bias".into(), vec![cfg.hidden], flat);
    push("fc2.weight".into(), vec![1, cfg.hidden], cfg.hidden);
    push("fc2.bias".into(), vec![1], cfg.hidden);
    Ok(tensors)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    pub tensors: Vec<TensorInfo>,
    pub params: Vec<f64>,
}

/// Intermediate values of one forward pass.
struct ConvTrace {
    input: Vec<f64>,
    c_in: usize,
    pre: Vec<f64>,
    act: Vec<f64>,
    act_len: usize,
}

pub(crate) struct Trace {
    convs: Vec<ConvTrace>,
    flat: Vec<f64>,
    z1: Vec<f64>,
    embedding: Vec<f64>,
    pub(crate) logit: f64,
    pub(crate) prob: f64,
}

impl CnnModel {
    /// Parameters drawn uniformly from `±1/√fan_in` per tensor.
    pub fn new(config: CnnConfig) -> Result<Self> {
        config.validate()?;
        let tensors = layout(&config)?;
        let total = tensors.last().map_or(0, |t| t.offset + t.len());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = vec![0.0; total];
        for t in &tensors {
            let bound = 1.0 / (t.fan_in as f64).sqrt();
            for p in &mut params[t.range()] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(CnnModel {
            config,
            tensors,
            params,
        })
    }

    pub fn zeroed(config: CnnConfig) -> Result<Self> {
        let mut m = Self::new(config)?;
        m.params.fill(0.0);
        Ok(m)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &self.params[t.range()])
    }

    fn slice(&self, idx: usize) -> &[f64] {
        &self.params[self.tensors[idx].range()]
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Result<Trace> {
        self.trace_with(&self.params, x)
    }

    pub(crate) fn trace_with(&self, params: &[f64], x: &[f64]) -> Result<Trace> {
        let cfg = &self.config;
        let act = cfg.activation;
        let t = |i: usize| &params[self.tensors[i].range()];
        let mut convs = Vec::with_capacity(cfg.conv_layers.len());
        let mut cur = x.to_vec();
        let mut c_in = cfg.in_channels;
        if !cur.len().is_multiple_of(c_in) {
            return Err(Error::input(format!(
                "input of {} values is not {c_in} channels",
                cur.len()
            )));
        }
        for (i, spec) in cfg.conv_layers.iter().enumerate() {
            let pre = conv1d_forward(&cur, c_in, t(2 * i), t(2 * i + 1), spec.kernel_size)
                .map_err(|e| Error::input(format!("conv{}: {e}", i + 1)))?;
            let a: Vec<f64> = pre.iter().map(|&z| act.apply(z)).collect();
            let act_len = a.len() / spec.out_channels;
            let next = match cfg.pool {
                Some(p) => avgpool_forward(&a, spec.out_channels, p.kernel, p.stride)
                    .map_err(|e| Error::input(format!("pool{}: {e}", i + 1)))?,
                None => a.clone(),
            };
            convs.push(ConvTrace {
                input: cur,
                c_in,
                pre,
                act: a,
                act_len,
            });
            cur = next;
            c_in = spec.out_channels;
        }
        let n_conv = cfg.conv_layers.len();
        let (w1, b1, w2, b2) = (
            t(2 * n_conv),
            t(2 * n_conv + 1),
            t(2 * n_conv + 2),
            t(2 * n_conv + 3),
        );
        let flat_len = w1.len() / cfg.hidden;
        if cur.len() != flat_len {
            return Err(Error::input(format!(
                "fc1: flatten size {} does not match the {flat_len} inputs of fc1",
                cur.len()
            )));
        }
        let z1: Vec<f64> = (0..cfg.hidden)
            .map(|k| {
                b1[k]
                    + w1[k * flat_len..(k + 1) * flat_len]
                        .iter()
                        .zip(&cur)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        let embedding: Vec<f64> = z1.iter().map(|&z| act.apply(z)).collect();
        let z2 = b2[0] + w2.iter().zip(&embedding).map(|(a, b)| a * b).sum::<f64>();
        Ok(Trace {
            convs,
            flat: cur,
            z1,
            embedding,
            logit: z2,
            prob: crate::logreg::sigmoid(z2),
        })
    }

    /// Sign pattern of every ReLU-family pre-activation.
    pub(crate) fn kink_pattern(&self, tr: &Trace) -> Vec<bool> {
        if !self.config.activation.has_kink() {
            return Vec::new();
        }
        tr.convs
            .iter()
            .flat_map(|c| c.pre.iter())
            .chain(tr.z1.iter())
            .map(|&z| z > 0.0)
            .collect()
    }

    /// Accumulate `dL/dθ` for one sample given `dL/dprob`.
    pub(crate) fn backward(&self, tr: &Trace, d_prob: f64, grad: &mut [f64]) {
        let cfg = &self.config;
        let act = cfg.activation;
        let n_conv = cfg.conv_layers.len();
        let (i1, i2) = (2 * n_conv, 2 * n_conv + 2);
        let flat_len = tr.flat.len();
        let dz2 = d_prob * tr.prob * (1.0 - tr.prob);
        let w2 = self.slice(i2);
        let mut d_flat = vec![0.0; flat_len];
        {
            let r = self.tensors[i2 + 1].range();
            grad[r.start] += dz2;
        }
        let w2_off = self.tensors[i2].offset;
        let w1 = self.slice(i1);
        let w1_off = self.tensors[i1].offset;
        let b1_off = self.tensors[i1 + 1].offset;
        for k in 0..cfg.hidden {
            grad[w2_off + k] += dz2 * tr.embedding[k];
            let dz1 = dz2 * w2[k] * act.derivative(tr.z1[k], tr.embedding[k]);
            grad[b1_off + k] += dz1;
            let row = &w1[k * flat_len..(k + 1) * flat_len];
            let g = &mut grad[w1_off + k * flat_len..w1_off + (k + 1) * flat_len];
            for f in 0..flat_len {
                g[f] += dz1 * tr.flat[f];
                d_flat[f] += dz1 * row[f];
            }
        }
        let mut d_out = d_flat;
        for (i, (spec, ct)) in cfg.conv_layers.iter().zip(&tr.convs).enumerate().rev() {
            let c = spec.out_channels;
            let d_act = match cfg.pool {
                Some(p) => avgpool_backward(&d_out, c, ct.act_len, p.kernel, p.stride),
                None => d_out,
            };
            let d_pre: Vec<f64> = d_act
                .iter()
                .zip(ct.pre.iter().zip(&ct.act))
                .map(|(g, (&z, &y))| g * act.derivative(z, y))
                .collect();
            let (wr, br) = (self.tensors[2 * i].range(), self.tensors[2 * i + 1].range());
            let (gw, gb) = {
                let (lo, hi) = grad.split_at_mut(br.start);
                (&mut lo[wr], &mut hi[..br.len()])
            };
            let d_in = conv1d_backward(
                &ct.input,
                ct.c_in,
                self.slice(2 * i),
                spec.kernel_size,
                &d_pre,
                c,
                gw,
                gb,
                i > 0,
            );
            match d_in {
                Some(d) => d_out = d,
                None => break,
            }
        }
    }

    /// Probability of Broken and the fc1 embedding for one channel-major input.
    pub fn forward_one(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let tr = self.trace(x)?;
        Ok((tr.prob, tr.embedding))
    }

    pub fn forward(&self, batch: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        use rayon::prelude::*;
        let out: Vec<(f64, Vec<f64>)> = batch
            .par_iter()
            .map(|x| self.forward_one(x))
            .collect::<Result<_>>()?;
        Ok(out.into_iter().unzip())
    }

    /// Broken iff the output probability is at least 0.5.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(crate::logreg::label_from_proba(self.forward_one(x)?.0))
    }

    pub fn predict_batch(&self, batch: &[Vec<f64>]) -> Result<Vec<Label>> {
        Ok(self
            .forward(batch)?
            .0
            .into_iter()
            .map(crate::logreg::label_from_proba)
            .collect())
    }
}

/// Channel-major network inputs with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnData {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub channels: usize,
    pub len: usize,
}

impl CnnData {
    /// Transpose each `L × m` segment into `m × L` channel-major order,
    /// optionally keeping only `channels`.
    pub fn from_segments(segments: &[Segment], channels: Option<&[usize]>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::input("no segments"))?;
        let (len, m) = first.samples.dim();
        let keep: Vec<usize> = match channels {
            Some(c) => c.to_vec(),
            None => (0..m).collect(),
        };
        if let Some(&bad) = keep.iter().find(|&&c| c >= m) {
            return Err(Error::input(format!(
                "channel {bad} out of range for {m} channels"
            )));
        }
        let mut inputs = Vec::with_capacity(segments.len());
        for s in segments {
            if s.samples.dim() != (len, m) {
                return Err(Error::input("segments differ in shape"));
            }
            let mut v = Vec::with_capacity(keep.len() * len);
            for &c in &keep {
                v.extend(s.samples.column(c).iter());
            }
            inputs.push(v);
        }
        Ok(CnnData {
            inputs,
            labels: segments.iter().map(|s| s.label).collect(),
            channels: keep.len(),
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Per-channel standardisation fitted on training inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelScaler {
    pub fn fit(data: &CnnData) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input("cannot fit a scaler on no data"));
        }
        let (c, l) = (data.channels, data.len);
        let n = (data.len() * l) as f64;
        let mut mean = vec![0.0; c];
        for x in &data.inputs {
            for ch in 0..c {
                mean[ch] += x[ch * l..(ch + 1) * l].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; c];
        for x in &data.inputs {
            for ch in 0..c {
                var[ch] += x[ch * l..(ch + 1) * l]
                    .iter()
                    .map(|v| (v - mean[ch]).powi(2))
                    .sum::<f64>();
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s <= crate::dataset::CONSTANT_COLUMN_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(ChannelScaler { mean, std })
    }

    pub fn apply(&self, data: &mut CnnData) -> Result<()> {
        if data.channels != self.mean.len() {
            return Err(Error::Dimension {
                what: "scaler channels",
                expected: self.mean.len(),
                got: data.channels,
            });
        }
        let l = data.len;
        for x in &mut data.inputs {
            for (ch, chunk) in x.chunks_exact_mut(l).enumerate() {
                chunk
                    .iter_mut()
                    .for_each(|v| *v = (*v - self.mean[ch]) / self.std[ch]);
            }
        }
        Ok(())
    }
}
