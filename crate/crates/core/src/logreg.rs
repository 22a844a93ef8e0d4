//! L2-regularised binary logistic regression.
//!
//! The loss is the summed negative log-likelihood plus `λ/2 ‖β‖²` with the
//! intercept unpenalised, which matches an inverse regularisation strength
//! `C = 1/λ` on the summed loss.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Damped Newton: full step, halved until the loss decreases.
    Newton,
    /// Fixed-step gradient descent with step `1/L` from a Lipschitz bound.
    Gradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRConfig {
    pub reg_strength: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub optimizer: Optimizer,
}

impl Default for LogRConfig {
    fn default() -> Self {
        LogRConfig {
            reg_strength: 1.0,
            max_iter: 200,
            tol: 1e-8,
            optimizer: Optimizer::Newton,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
    #[serde(rename = "lambda")]
    pub reg_strength: f64,
    #[serde(default)]
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic function in the form that never divides infinities.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_dims(x: ArrayView2<'_, f64>, y: &[Label]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            what: "logreg labels",
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite feature value"));
    }
    let pos = y.iter().filter(|l| **l == Label::Broken).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Penalised loss at `(β0, β)`.
pub fn loss(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    lambda: f64,
    intercept: f64,
    w: ArrayView1<'_, f64>,
) -> f64 {
    let z = x.dot(&w) + intercept;
    let nll: f64 = z
        .iter()
        .zip(y)
        .map(|(&zi, l)| softplus(zi) - l.as_f64() * zi)
        .sum();
    nll + 0.5 * lambda * w.dot(&w)
}

/// Gradient with respect to `[β0, β...]`.
fn gradient(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    lambda: f64,
    theta: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let d = x.ncols();
    let w = theta.slice(ndarray::s![1..]);
    let z = x.dot(&w) + theta[0];
    let p = z.mapv(sigmoid);
    let r: Array1<f64> = p.iter().zip(y).map(|(pi, l)| pi - l.as_f64()).collect();
    let mut g = Array1::zeros(d + 1);
    g[0] = r.sum();
    let gw = x.t().dot(&r) + &w * lambda;
    g.slice_mut(ndarray::s![1..]).assign(&gw);
    (g, p)
}

fn total_loss(x: ArrayView2<'_, f64>, y: &[Label], lambda: f64, theta: &Array1<f64>) -> f64 {
    loss(x, y, lambda, theta[0], theta.slice(ndarray::s![1..]))
}

pub fn fit(x: ArrayView2<'_, f64>, y: &[Label], cfg: &LogRConfig) -> Result<LogRModel> {
    if !(cfg.reg_strength >= 0.0 && cfg.reg_strength.is_finite()) {
        return Err(Error::config("reg_strength", "must be finite and >= 0"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::config("tol", "must be positive"));
    }
    check_dims(x, y)?;
    let d = x.ncols();
    let lambda = cfg.reg_strength;
    let mut theta = Array1::<f64>::zeros(d + 1);
    let mut current = total_loss(x, y, lambda, &theta);
    let mut converged = false;
    let mut iterations = 0;

    let lipschitz = match cfg.optimizer {
        Optimizer::Gradient => {
            let frob: f64 = x.iter().map(|v| v * v).sum::<f64>() + x.nrows() as f64;
            0.25 * frob + lambda
        }
        Optimizer::Newton => 0.0,
    };

    while iterations < cfg.max_iter {
        let (g, p) = gradient(x, y, lambda, &theta);
        if g.iter().fold(0.0f64, |a, v| a.max(v.abs())) < cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let step = match cfg.optimizer {
            Optimizer::Gradient => &g / lipschitz,
            Optimizer::Newton => {
                let mut h = Array2::<f64>::zeros((d + 1, d + 1));
                for (i, row) in x.rows().into_iter().enumerate() {
                    let wi = p[i] * (1.0 - p[i]);
                    h[[0, 0]] += wi;
                    for a in 0..d {
                        let va = wi * row[a];
                        h[[0, a + 1]] += va;
                        for b in a..d {
                            h[[a + 1, b + 1]] += va * row[b];
                        }
                    }
                }
                for a in 0..=d {
                    for b in 0..a {
                        h[[a, b]] = h[[b, a]];
                    }
                }
                for a in 1..=d {
                    h[[a, a]] += lambda;
                }
                match cholesky_solve(&h, &g) {
                    Ok(s) => s,
                    Err(_) => {
                        // separable data without penalty saturates the Hessian
                        for a in 0..=d {
                            h[[a, a]] += 1e-10;
                        }
                        cholesky_solve(&h, &g)?
                    }
                }
            }
        };

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &theta - &(&step * t);
            let l = total_loss(x, y, lambda, &cand);
            if !l.is_finite() {
                return Err(Error::NonFinite {
                    stage: "logistic loss".into(),
                    iteration: iterations,
                });
            }
            // a 1/L step always descends; only rounding can make it look flat
            if l <= current || cfg.optimizer == Optimizer::Gradient {
                theta = cand;
                current = l;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent possible at machine precision
            let (g, _) = gradient(x, y, lambda, &theta);
            converged = g.iter().fold(0.0f64, |a, v| a.max(v.abs())) < cfg.tol;
            break;
        }
    }
    if !converged {
        log::warn!("logistic regression stopped after {iterations} iterations without converging");
    }
    Ok(LogRModel {
        intercept: theta[0],
        weights: theta.slice(ndarray::s![1..]).to_vec(),
        reg_strength: lambda,
        converged,
        iterations,
    })
}

impl LogRModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Dimension {
                what: "logreg input",
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(self.intercept + self.weights.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.decision(x)?))
    }

    /// Broken iff `P ≥ 0.5`.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(label_from_proba(self.predict_proba(x)?))
    }

    pub fn predict_rows(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Label>> {
        x.rows()
            .into_iter()
            .map(|r| self.predict(&r.to_vec()))
            .collect()
    }
}

/// Threshold at 0.5, ties to Broken.
pub fn label_from_proba(p: f64) -> Label {
    if p >= 0.5 {
        Label::Broken
    } else {
        Label::Intact
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_features_balanced() {
        let x = Array2::<f64>::zeros((4, 2));
        let y = [Label::Intact, Label::Broken, Label::Intact, Label::Broken];
        let m = fit(x.view(), &y, &LogRConfig::default()).unwrap();
        assert!(m.intercept.abs() < 1e-12);
        assert!(m.weights.iter().all(|w| w.abs() < 1e-12));
        assert!((m.predict_proba(&[0.0, 0.0]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn symmetric_one_dimensional() {
        let x = array![[-1.0], [1.0]];
        let m = fit(
            x.view(),
            &[Label::Intact, Label::Broken],
            &LogRConfig::default(),
        )
        .unwrap();
        assert!(m.converged);
        assert!(m.intercept.abs() < 1e-10);
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[1.0], [2.0]];
        assert!(matches!(
            fit(
                x.view(),
                &[Label::Broken, Label::Broken],
                &LogRConfig::default()
            ),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn proba_examples() {
        let m = LogRModel {
            intercept: 3f64.ln(),
            weights: vec![0.0],
            reg_strength: 1.0,
            converged: true,
            iterations: 0,
        };
        assert!((m.predict_proba(&[5.0]).unwrap() - 0.75).abs() < 1e-15);
        let far = LogRModel {
            intercept: -1000.0,
            ..m.clone()
        };
        let p = far.predict_proba(&[0.0]).unwrap();
        assert!(p.is_finite() && (0.0..1e-300).contains(&p));
        assert!(m.predict_proba(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn tie_rule() {
        assert_eq!(label_from_proba(0.5), Label::Broken);
        assert_eq!(label_from_proba(0.49), Label::Intact);
    }
}
