//! Soft-margin C-SVM solved in the dual by sequential minimal optimisation.
//!
//! The dual is `min ½ αᵀHα − 1ᵀα` subject to `yᵀα = 0`, `0 ≤ α ≤ C`, with
//! `H_ij = y_i y_j K(x_i, x_j)`. Each step updates the maximal violating
//! pair; the solver stops once the KKT gap `m − M` falls below `tol`.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{accuracy_of, fold_splits, stratified_folds};
use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    fn validate(&self) -> Result<()> {
        if let Kernel::Rbf { gamma } = self {
            if !(*gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::config("gamma", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match self {
            Kernel::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        if x.len() != z.len() {
            return Err(Error::Dimension {
                what: "kernel arguments",
                expected: x.len(),
                got: z.len(),
            });
        }
        Ok(self.eval_unchecked(x, z))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub kernel: KernelKind,
    /// RBF width; `None` uses [`gamma_scale`] on the training data.
    pub gamma: Option<f64>,
    #[serde(rename = "C")]
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Training sets up to this size get a precomputed Gram matrix; larger
    /// ones compute kernel rows on demand.
    pub gram_limit: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: KernelKind::Rbf,
            gamma: None,
            c: 1.0,
            tol: 1e-3,
            max_iter: 10_000_000,
            gram_limit: 6000,
        }
    }
}

/// `1 / (d · mean per-feature variance)`, or 1 for constant data.
pub fn gamma_scale(x: ArrayView2<'_, f64>) -> f64 {
    let d = x.ncols();
    if d == 0 || x.nrows() == 0 {
        return 1.0;
    }
    let mean_var = x.var_axis(Axis(0), 0.0).mean().unwrap_or(0.0);
    if mean_var > 0.0 {
        1.0 / (d as f64 * mean_var)
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    #[serde(rename = "C")]
    pub c: f64,
    pub bias: f64,
    /// α of each support vector.
    pub alphas: Vec<f64>,
    pub n_features: usize,
    /// Support vectors, row-major.
    pub support_vectors: Vec<f64>,
    /// ±1 label of each support vector.
    pub labels: Vec<i8>,
    /// Training-row index of each support vector.
    #[serde(default)]
    pub support_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default)]
    pub iterations: usize,
}

impl SvmModel {
    pub fn n_support(&self) -> usize {
        self.alphas.len()
    }

    /// Support vectors with `α = C` (to within rounding).
    pub fn n_bounded(&self) -> usize {
        self.alphas
            .iter()
            .filter(|&&a| a >= self.c * (1.0 - 1e-12))
            .count()
    }

    /// α over all `n` training rows, zero off the support set.
    pub fn dense_alphas(&self, n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n];
        for (&i, &v) in self.support_indices.iter().zip(&self.alphas) {
            a[i] = v;
        }
        a
    }

    pub fn support_vector(&self, k: usize) -> &[f64] {
        &self.support_vectors[k * self.n_features..(k + 1) * self.n_features]
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                what: "svm input",
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `D(x) = Σ y_j α_j K(x_j, x) + b` over the support vectors.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let s: f64 = (0..self.n_support())
            .map(|k| {
                self.labels[k] as f64
                    * self.alphas[k]
                    * self.kernel.eval_unchecked(self.support_vector(k), x)
            })
            .sum();
        Ok(s + self.bias)
    }

    /// `wᵀx + b`; only for the linear kernel.
    pub fn primal_decision(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let w = self
            .w
            .as_ref()
            .ok_or_else(|| Error::input("primal weights exist only for the linear kernel"))?;
        Ok(w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }

    /// Broken iff `D(x) ≥ 0`.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(label_from_decision(self.decision_function(x)?))
    }

    pub fn predict_rows(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Label>> {
        x.rows()
            .into_iter()
            .map(|r| self.predict(&r.to_vec()))
            .collect()
    }

    /// `½ αᵀHα − 1ᵀα` at the stored solution.
    pub fn dual_objective(&self) -> f64 {
        let n = self.n_support();
        let mut quad = 0.0;
        for i in 0..n {
            let ai = self.alphas[i] * self.labels[i] as f64;
            for j in 0..n {
                let aj = self.alphas[j] * self.labels[j] as f64;
                quad += ai
                    * aj
                    * self
                        .kernel
                        .eval_unchecked(self.support_vector(i), self.support_vector(j));
            }
        }
        0.5 * quad - self.alphas.iter().sum::<f64>()
    }
}

pub fn label_from_decision(d: f64) -> Label {
    if d >= 0.0 {
        Label::Broken
    } else {
        Label::Intact
    }
}

/// `½ αᵀHα − 1ᵀα` for an arbitrary `α` over the full training set.
pub fn dual_objective(x: ArrayView2<'_, f64>, y: &[Label], kernel: &Kernel, alphas: &[f64]) -> f64 {
    let n = y.len();
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alphas[i]
                * alphas[j]
                * y[i].sign()
                * y[j].sign()
                * kernel.eval_unchecked(&rows[i], &rows[j]);
        }
    }
    0.5 * quad - alphas.iter().sum::<f64>()
}

/// Kernel rows, either from a precomputed Gram matrix or on demand with a
/// bounded cache.
struct KernelRows<'a> {
    rows: Vec<&'a [f64]>,
    kernel: Kernel,
    gram: Option<Array2<f64>>,
    cache: HashMap<usize, Vec<f64>>,
    order: std::collections::VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(rows: Vec<&'a [f64]>, kernel: Kernel, gram_limit: usize) -> Self {
        let n = rows.len();
        let gram = (n <= gram_limit).then(|| {
            let flat: Vec<f64> = (0..n)
                .into_par_iter()
                .flat_map_iter(|i| {
                    let xi = rows[i];
                    rows.iter().map(move |z| kernel.eval_unchecked(xi, z))
                })
                .collect();
            Array2::from_shape_vec((n, n), flat).expect("n × n")
        });
        let capacity = ((256usize << 20) / (8 * n.max(1))).max(2);
        KernelRows {
            rows,
            kernel,
            gram,
            cache: HashMap::new(),
            order: Default::default(),
            capacity,
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match &self.gram {
            Some(g) => g[[i, i]],
            None => self.kernel.eval_unchecked(self.rows[i], self.rows[i]),
        }
    }

    fn row(&mut self, i: usize) -> Vec<f64> {
        if let Some(g) = &self.gram {
            return g.row(i).to_vec();
        }
        if let Some(r) = self.cache.get(&i) {
            return r.clone();
        }
        let r: Vec<f64> = self
            .rows
            .iter()
            .map(|z| self.kernel.eval_unchecked(self.rows[i], z))
            .collect();
        if self.cache.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.cache.remove(&old);
            }
        }
        self.cache.insert(i, r.clone());
        self.order.push_back(i);
        r
    }
}

const TAU: f64 = 1e-12;

pub fn fit(x: ArrayView2<'_, f64>, y: &[Label], cfg: &SvmConfig) -> Result<SvmModel> {
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::config("C", "must be finite and > 0"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::config("tol", "must be positive"));
    }
    let kernel = match cfg.kernel {
        KernelKind::Linear => Kernel::Linear,
        KernelKind::Rbf => Kernel::Rbf {
            gamma: cfg.gamma.unwrap_or_else(|| gamma_scale(x)),
        },
    };
    fit_with_kernel(x, y, kernel, cfg)
}

pub fn fit_with_kernel(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    kernel: Kernel,
    cfg: &SvmConfig,
) -> Result<SvmModel> {
    kernel.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::Dimension {
            what: "svm labels",
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
    let c = cfg.c;
    let n = y.len();
    let xs = x.as_standard_layout().to_owned();
    let rows: Vec<&[f64]> = xs
        .rows()
        .into_iter()
        .map(|r| r.to_slice().expect("standard layout"))
        .collect();
    let ys: Vec<f64> = y.iter().map(|l| l.sign()).collect();
    let mut k = KernelRows::new(rows, kernel, cfg.gram_limit);

    let mut alpha = vec![0.0f64; n];
    // f[t] = Σ_s α_s y_s K(s, t); the violation score of t is y_t − f[t]
    let mut f = vec![0.0f64; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let (m, big_m) = loop {
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        for t in 0..n {
            let score = ys[t] - f[t];
            if in_up(alpha[t], ys[t]) && score > m {
                m = score;
                i = t;
            }
            if in_low(alpha[t], ys[t]) && score < big_m {
                big_m = score;
                j = t;
            }
        }
        if m - big_m < cfg.tol {
            break (m, big_m);
        }
        if iterations >= cfg.max_iter {
            return Err(Error::NotConverged {
                iterations,
                violation: m - big_m,
            });
        }
        iterations += 1;

        let ki = k.row(i);
        let kj = k.row(j);
        let eta = (k.diag(i) + k.diag(j) - 2.0 * ki[j]).max(TAU);
        let (ai, aj) = (alpha[i], alpha[j]);
        let (lo, hi) = if ys[i] != ys[j] {
            ((aj - ai).max(0.0), (c + aj - ai).min(c))
        } else {
            ((ai + aj - c).max(0.0), (ai + aj).min(c))
        };
        // E_i − E_j with E_t = f_t − y_t
        let diff = (f[i] - ys[i]) - (f[j] - ys[j]);
        let mut new_j = (aj + ys[j] * diff / eta).clamp(lo, hi);
        let s = ys[i] * ys[j];
        let mut new_i = ai + s * (aj - new_j);
        let snap = |v: f64| {
            if v < TAU * c {
                0.0
            } else if v > c * (1.0 - TAU) {
                c
            } else {
                v
            }
        };
        let snapped = snap(new_i);
        if snapped != new_i {
            new_i = snapped;
            new_j = (aj + s * (ai - new_i)).clamp(0.0, c);
        }
        new_j = snap(new_j);
        let (di, dj) = (new_i - ai, new_j - aj);
        if di == 0.0 && dj == 0.0 {
            return Err(Error::Training(format!(
                "SMO stalled on pair ({i}, {j}) with gap {:e}",
                m - big_m
            )));
        }
        alpha[i] = new_i;
        alpha[j] = new_j;
        let (ci, cj) = (di * ys[i], dj * ys[j]);
        for t in 0..n {
            f[t] += ci * ki[t] + cj * kj[t];
        }
        if !f[i].is_finite() {
            return Err(Error::NonFinite {
                stage: "svm decision values".into(),
                iteration: iterations,
            });
        }
    };

    let free: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0 && alpha[t] < c).collect();
    let bias = if free.is_empty() {
        0.5 * (m + big_m)
    } else {
        free.iter().map(|&t| ys[t] - f[t]).sum::<f64>() / free.len() as f64
    };

    let sv: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    let d = x.ncols();
    let w = matches!(kernel, Kernel::Linear).then(|| {
        let mut w = vec![0.0; d];
        for &t in &sv {
            for (wk, xk) in w.iter_mut().zip(xs.row(t)) {
                *wk += alpha[t] * ys[t] * xk;
            }
        }
        w
    });
    log::debug!(
        "SMO converged after {iterations} iterations with {} support vectors",
        sv.len()
    );
    Ok(SvmModel {
        kernel,
        c,
        bias,
        alphas: sv.iter().map(|&t| alpha[t]).collect(),
        n_features: d,
        support_vectors: sv.iter().flat_map(|&t| xs.row(t).to_vec()).collect(),
        labels: sv.iter().map(|&t| ys[t] as i8).collect(),
        support_indices: sv.clone(),
        w,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    #[serde(rename = "C")]
    pub c: f64,
    pub cv_score: f64,
    pub scores: Vec<(f64, f64)>,
    /// The chosen C is the smallest or largest grid value.
    pub at_boundary: bool,
}

/// Grid search over C by stratified k-fold mean accuracy; equal scores
/// prefer the smaller C. The kernel (including a `scale` γ) is resolved
/// once on the full data.
pub fn tune_c(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    cfg: &SvmConfig,
    c_grid: &[f64],
    k_folds: usize,
    seed: u64,
) -> Result<TuneResult> {
    if c_grid.is_empty() {
        return Err(Error::config("c_grid", "empty grid"));
    }
    let kernel = match cfg.kernel {
        KernelKind::Linear => Kernel::Linear,
        KernelKind::Rbf => Kernel::Rbf {
            gamma: cfg.gamma.unwrap_or_else(|| gamma_scale(x)),
        },
    };
    let folds = stratified_folds(y, k_folds, seed)?;
    let splits = fold_splits(y.len(), &folds);
    let scores = c_grid
        .par_iter()
        .map(|&c| {
            let cfg = SvmConfig { c, ..cfg.clone() };
            let mut acc = 0.0;
            for (train, val) in &splits {
                let xt = x.select(Axis(0), train);
                let yt: Vec<Label> = train.iter().map(|&i| y[i]).collect();
                let model = fit_with_kernel(xt.view(), &yt, kernel, &cfg)?;
                let xv = x.select(Axis(0), val);
                let yv: Vec<Label> = val.iter().map(|&i| y[i]).collect();
                acc += accuracy_of(&model.predict_rows(xv.view())?, &yv);
            }
            Ok((c, acc / splits.len() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &(c, s)) in scores.iter().enumerate().skip(1) {
        let (bc, bs) = scores[best];
        if s > bs + 1e-12 || ((s - bs).abs() <= 1e-12 && c < bc) {
            best = i;
        }
    }
    let (c, cv_score) = scores[best];
    let lo = c_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = c_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let at_boundary = c_grid.len() > 1 && (c == lo || c == hi);
    if at_boundary {
        log::warn!("selected C = {c} lies on the grid boundary");
    }
    Ok(TuneResult {
        c,
        cv_score,
        scores,
        at_boundary,
    })
}

/// `count` values spaced evenly in log10 between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kernel_examples() {
        let rbf = Kernel::Rbf { gamma: 0.5 };
        assert_eq!(rbf.eval(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(Kernel::Linear.eval(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((rbf.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!(rbf.eval(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn symmetric_hard_margin() {
        let x = array![[-1.0], [1.0]];
        let cfg = SvmConfig {
            kernel: KernelKind::Linear,
            c: 1e6,
            ..Default::default()
        };
        let m = fit(x.view(), &[Label::Intact, Label::Broken], &cfg).unwrap();
        assert_eq!(m.n_support(), 2);
        assert!(m.decision_function(&[0.0]).unwrap().abs() < 1e-9);
        assert!((m.decision_function(&[1.0]).unwrap() - 1.0).abs() < 1e-9);
        assert!((m.decision_function(&[-1.0]).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn xor_with_rbf() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [Label::Intact, Label::Intact, Label::Broken, Label::Broken];
        let cfg = SvmConfig {
            kernel: KernelKind::Rbf,
            gamma: Some(1.0),
            c: 10.0,
            ..Default::default()
        };
        let m = fit(x.view(), &y, &cfg).unwrap();
        assert_eq!(m.predict_rows(x.view()).unwrap(), y.to_vec());
    }

    #[test]
    fn tie_goes_to_broken() {
        assert_eq!(label_from_decision(0.0), Label::Broken);
        assert_eq!(label_from_decision(2.0), Label::Broken);
        assert_eq!(label_from_decision(-2.0), Label::Intact);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.01, 100.0, 5);
        assert!(
            (g[0] - 0.01).abs() < 1e-15
                && (g[4] - 100.0).abs() < 1e-9
                && (g[2] - 1.0).abs() < 1e-12
        );
    }
}
