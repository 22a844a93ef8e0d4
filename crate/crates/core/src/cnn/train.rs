use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CnnData, CnnModel};
use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Added to the gradient as `λ·θ` before the Adam moments.
    pub weight_decay: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 30,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be finite and >= 0"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be finite and >= 0"));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) || !(self.adam_eps > 0.0) {
            return Err(Error::config(
                "adam",
                "betas must lie in [0, 1) and eps must be positive",
            ));
        }
        Ok(())
    }
}

/// Per-epoch losses: the running mean over the epoch's batches for training
/// and a full pass for the test set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_mse: Vec<f64>,
    pub test_mse: Vec<f64>,
}

/// Samples per gradient chunk; fixed so sums do not depend on thread count.
const CHUNK: usize = 8;

/// Summed squared error and gradient of `mean (p − y)²` over `idx`.
fn batch_gradient(model: &CnnModel, data: &CnnData, idx: &[usize]) -> Result<(f64, Vec<f64>)> {
    let scale = 2.0 / idx.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; model.n_params()];
            let mut sse = 0.0;
            for &i in chunk {
                let tr = model.trace(&data.inputs[i])?;
                let r = tr.prob - data.labels[i].as_f64();
                sse += r * r;
                model.backward(&tr, scale * r, &mut g);
            }
            Ok((sse, g))
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![0.0; model.n_params()];
    let mut sse = 0.0;
    for (s, g) in parts {
        sse += s;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((sse, grad))
}

pub fn evaluate_mse(model: &CnnModel, data: &CnnData) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::input("empty evaluation set"));
    }
    let (probs, _) = model.forward(&data.inputs)?;
    Ok(probs
        .iter()
        .zip(&data.labels)
        .map(|(p, l)| (p - l.as_f64()).powi(2))
        .sum::<f64>()
        / data.len() as f64)
}

/// Mini-batch Adam on MSE with a seeded shuffle every epoch. The final
/// partial batch is kept.
pub fn train(
    model: &mut CnnModel,
    data: &CnnData,
    test: Option<&CnnData>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::input("empty training set"));
    }
    let n = model.n_params();
    let (b1, b2) = cfg.adam_betas;
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut step = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (batch_sse, mut g) = batch_gradient(model, data, idx)?;
            if !batch_sse.is_finite() {
                return Err(Error::NonFinite {
                    stage: format!("cnn loss (epoch {epoch}, batch {b})"),
                    iteration: epoch,
                });
            }
            sse += batch_sse;
            step += 1;
            let c1 = 1.0 - b1.powi(step);
            let c2 = 1.0 - b2.powi(step);
            for k in 0..n {
                g[k] += cfg.weight_decay * model.params[k];
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let update = cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.adam_eps);
                model.params[k] -= update;
            }
            if model.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite {
                    stage: format!("cnn parameters (epoch {epoch}, batch {b})"),
                    iteration: epoch,
                });
            }
        }
        report.train_mse.push(sse / data.len() as f64);
        if let Some(t) = test {
            report.test_mse.push(evaluate_mse(model, t)?);
        }
        log::debug!(
            "epoch {epoch}: train MSE {:.3e}{}",
            report.train_mse[epoch],
            report
                .test_mse
                .last()
                .map(|t| format!(", test MSE {t:.3e}"))
                .unwrap_or_default()
        );
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    /// `max |g_a − g_n| / max(|g_a| + |g_n|, 1e-8)` over checked parameters.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Sampled parameters skipped because a perturbation crossed a ReLU kink.
    pub excluded: usize,
}

/// Compare the analytic gradient of the batch MSE with central differences
/// on a seeded 1% sample (at least one entry) of every tensor.
pub fn grad_check(
    model: &CnnModel,
    inputs: &[Vec<f64>],
    labels: &[Label],
    eps: f64,
    seed: u64,
) -> Result<GradCheck> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::input("grad_check needs a non-empty labelled batch"));
    }
    let data = CnnData {
        inputs: inputs.to_vec(),
        labels: labels.to_vec(),
        channels: model.config.in_channels,
        len: inputs[0].len() / model.config.in_channels,
    };
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let (_, analytic) = batch_gradient(model, &data, &idx)?;
    let eval = |params: &[f64]| -> Result<Vec<(f64, f64, Vec<bool>)>> {
        inputs
            .iter()
            .map(|x| {
                let tr = model.trace_with(params, x)?;
                let kinks = model.kink_pattern(&tr);
                Ok((tr.logit, tr.prob, kinks))
            })
            .collect()
    };
    let base: Vec<Vec<bool>> = eval(&model.params)?
        .into_iter()
        .map(|(_, _, k)| k)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = model.params.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        excluded: 0,
    };
    for t in &model.tensors {
        let mut positions: Vec<usize> = t.range().collect();
        positions.shuffle(&mut rng);
        positions.truncate((t.len() / 100).max(1));
        for k in positions {
            let orig = params[k];
            params[k] = orig + eps;
            let plus = eval(&params)?;
            params[k] = orig - eps;
            let minus = eval(&params)?;
            params[k] = orig;
            if plus
                .iter()
                .zip(&minus)
                .zip(&base)
                .any(|((p, m), b)| p.2 != *b || m.2 != *b)
            {
                out.excluded += 1;
                continue;
            }
            // (r₊² − r₋²) = (p₊ − p₋)(p₊ + p₋ − 2y), with σ(a) − σ(b) = expm1(a − b)(1 − σ(a))σ(b)
            let diff: f64 = plus
                .iter()
                .zip(&minus)
                .zip(labels)
                .map(|(((zp, pp, _), (zm, pm, _)), l)| {
                    let dp = (zp - zm).exp_m1() * (1.0 - pp) * pm;
                    dp * (pp + pm - 2.0 * l.as_f64())
                })
                .sum();
            let numeric = diff / inputs.len() as f64 / (2.0 * eps);
            let a = analytic[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            out.max_rel_error = out.max_rel_error.max(rel);
            out.checked += 1;
        }
    }
    Ok(out)
}
