use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, Activation, CnnConfig, CnnData, CnnModel, TrainConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub activations: Vec<Activation>,
    /// Log-uniform bounds.
    pub learning_rate: (f64, f64),
    /// Log-uniform bounds.
    pub weight_decay: (f64, f64),
    pub batch_sizes: Vec<usize>,
    pub n_trials: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            activations: Activation::ALL.to_vec(),
            learning_rate: (1e-4, 1e-1),
            weight_decay: (1e-7, 5e-4),
            batch_sizes: vec![10, 30, 50, 100],
            n_trials: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub activation: Activation,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

impl SearchSpace {
    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo > 0.0 && hi >= lo && hi.is_finite();
        if self.n_trials == 0 {
            return Err(Error::config("n_trials", "must be at least 1"));
        }
        if self.activations.is_empty()
            || self.batch_sizes.is_empty()
            || self.batch_sizes.contains(&0)
        {
            return Err(Error::config(
                "search_space",
                "activations and batch sizes must be non-empty and positive",
            ));
        }
        if !ok(self.learning_rate) || !ok(self.weight_decay) {
            return Err(Error::config(
                "search_space",
                "log-uniform bounds need 0 < lo <= hi",
            ));
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> TrialParams {
        TrialParams {
            activation: self.activations[rng.gen_range(0..self.activations.len())],
            learning_rate: log_uniform(rng, self.learning_rate),
            weight_decay: log_uniform(rng, self.weight_decay),
            batch_size: self.batch_sizes[rng.gen_range(0..self.batch_sizes.len())],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    #[serde(flatten)]
    pub params: TrialParams,
    pub seed: u64,
    pub train_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: TrialRecord,
    pub best_model: CnnModel,
    pub trials: Vec<TrialRecord>,
}

/// Independent seeded trials; the best has the lowest final test MSE, ties
/// to the earlier trial. Trial `t` trains with seed `seed + t`.
pub fn random_search(
    space: &SearchSpace,
    model_cfg: &CnnConfig,
    base: &TrainConfig,
    train_data: &CnnData,
    test_data: &CnnData,
    seed: u64,
) -> Result<SearchResult> {
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<TrialParams> = (0..space.n_trials)
        .map(|_| space.sample(&mut rng))
        .collect();
    let outcomes: Vec<(TrialRecord, Option<CnnModel>)> = params
        .into_par_iter()
        .enumerate()
        .map(|(trial, p)| {
            let trial_seed = seed.wrapping_add(trial as u64);
            let cfg = TrainConfig {
                batch_size: p.batch_size,
                learning_rate: p.learning_rate,
                weight_decay: p.weight_decay,
                seed: trial_seed,
                ..base.clone()
            };
            let run = || -> Result<(CnnModel, super::TrainReport)> {
                let mut model = CnnModel::new(CnnConfig {
                    activation: p.activation,
                    ..model_cfg.clone()
                })?;
                let report = train(&mut model, train_data, Some(test_data), &cfg)?;
                Ok((model, report))
            };
            match run() {
                Ok((model, report)) => (
                    TrialRecord {
                        trial,
                        params: p,
                        seed: trial_seed,
                        train_mse: report.train_mse.last().copied(),
                        test_mse: report.test_mse.last().copied(),
                        error: None,
                    },
                    Some(model),
                ),
                Err(e) => {
                    log::warn!("trial {trial} failed: {e}");
                    (
                        TrialRecord {
                            trial,
                            params: p,
                            seed: trial_seed,
                            train_mse: None,
                            test_mse: None,
                            error: Some(e.to_string()),
                        },
                        None,
                    )
                }
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, (rec, model)) in outcomes.iter().enumerate() {
        let Some(t) = rec.test_mse.filter(|v| v.is_finite() && model.is_some()) else {
            continue;
        };
        if best.is_none_or(|b| t < outcomes[b].0.test_mse.unwrap_or(f64::INFINITY)) {
            best = Some(i);
        }
    }
    let trials: Vec<TrialRecord> = outcomes.iter().map(|(r, _)| r.clone()).collect();
    let Some(b) = best else {
        return Err(Error::Training(format!(
            "all {} trials diverged",
            trials.len()
        )));
    };
    let best_model = outcomes
        .into_iter()
        .nth(b)
        .and_then(|(_, m)| m)
        .expect("best trial has a model");
    Ok(SearchResult {
        best: trials[b].clone(),
        best_model,
        trials,
    })
}

/// One JSON object per line.
pub fn write_trial_log<W: Write>(mut w: W, trials: &[TrialRecord]) -> Result<()> {
    for t in trials {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
