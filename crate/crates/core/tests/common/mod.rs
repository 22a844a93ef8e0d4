//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsclass::dtree::{Criterion, TreeNode};
use tsclass::svm::{Kernel, SvmModel};
use tsclass::Label;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

pub fn labels_from_bits(bits: u32, n: usize) -> Vec<Label> {
    (0..n)
        .map(|i| Label::from_index(((bits >> i) & 1) as usize))
        .collect()
}

/// Random labels with both classes present (needs `n >= 2`).
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    let mut y: Vec<Label> = (0..n)
        .map(|_| Label::from_index(rng.gen_range(0..2)))
        .collect();
    y[0] = Label::Intact;
    y[1] = Label::Broken;
    y
}

pub fn impurity_of(criterion: Criterion, counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    let p = [counts[0] as f64 / n, counts[1] as f64 / n];
    match criterion {
        Criterion::Gini => 1.0 - p[0] * p[0] - p[1] * p[1],
        Criterion::Entropy => p.iter().filter(|&&q| q > 0.0).map(|q| -q * q.log2()).sum(),
    }
}

/// Lowest weighted child impurity over every feature and every threshold
/// that separates two distinct values; `None` when no split is admissible.
pub fn brute_root_split(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    criterion: Criterion,
    min_leaf: usize,
) -> Option<f64> {
    let n = y.len();
    let mut best: Option<f64> = None;
    for f in 0..x.ncols() {
        let mut values: Vec<f64> = x.column(f).to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let mut left = [0usize; 2];
            let mut right = [0usize; 2];
            for i in 0..n {
                if x[[i, f]] <= t {
                    left[y[i].index()] += 1;
                } else {
                    right[y[i].index()] += 1;
                }
            }
            let (nl, nr) = (left[0] + left[1], right[0] + right[1]);
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let v = (nl as f64 * impurity_of(criterion, left)
                + nr as f64 * impurity_of(criterion, right))
                / n as f64;
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// `(Σ leaf risk, leaf count)` of every pruned subtree rooted at `node`,
/// with leaf risk `n_t/N · impurity(t)`.
pub fn enumerate_subtrees(
    node: &TreeNode,
    criterion: Criterion,
    n_train: usize,
) -> Vec<(f64, usize)> {
    let own =
        node.n_samples() as f64 / n_train as f64 * impurity_of(criterion, node.class_counts());
    let mut out = vec![(own, 1)];
    if let TreeNode::Internal { left, right, .. } = node {
        let l = enumerate_subtrees(left, criterion, n_train);
        let r = enumerate_subtrees(right, criterion, n_train);
        for &(rl, kl) in &l {
            for &(rr, kr) in &r {
                out.push((rl + rr, kl + kr));
            }
        }
    }
    out
}

pub fn gram(x: ArrayView2<'_, f64>, y: &[Label], kernel: &Kernel) -> Array2<f64> {
    let n = y.len();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let k = kernel.eval(&x.row(i).to_vec(), &x.row(j).to_vec()).unwrap();
        y[i].sign() * y[j].sign() * k
    })
}

fn objective(h: &Array2<f64>, a: &[f64]) -> f64 {
    let n = a.len();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            q += a[i] * h[[i, j]] * a[j];
        }
    }
    0.5 * q - a.iter().sum::<f64>()
}

/// Euclidean projection onto `{yᵀα = 0, 0 ≤ α ≤ C}`: `α = clip(v − μy, 0, C)`
/// where `g(μ) = yᵀα(μ)` is piecewise linear and non-increasing, so its root
/// lies between two adjacent breakpoints and is found by interpolation.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - mu * yi).clamp(0.0, c))
            .collect()
    };
    let g = |mu: f64| -> f64 { at(mu).iter().zip(y).map(|(a, yi)| a * yi).sum() };
    let mut knots: Vec<f64> = v
        .iter()
        .zip(y)
        .flat_map(|(vi, yi)| [vi * yi, (vi - c) * yi])
        .collect();
    knots.sort_by(f64::total_cmp);
    let vals: Vec<f64> = knots.iter().map(|&k| g(k)).collect();
    for k in 0..knots.len() {
        if vals[k] == 0.0 {
            return at(knots[k]);
        }
        if k + 1 < knots.len() && vals[k] > 0.0 && vals[k + 1] < 0.0 {
            let t = vals[k] / (vals[k] - vals[k + 1]);
            return at(knots[k] + t * (knots[k + 1] - knots[k]));
        }
    }
    unreachable!("g changes sign over its breakpoints")
}

/// Minimum of the SVM dual by projected gradient descent with step `1/L`.
pub fn dual_oracle(h: &Array2<f64>, y: &[Label], c: f64) -> f64 {
    let n = y.len();
    let ys: Vec<f64> = y.iter().map(|l| l.sign()).collect();
    let lip = h.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let mut a = vec![0.0; n];
    for _ in 0..50_000 {
        let grad: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| h[[i, j]] * a[j]).sum::<f64>() - 1.0)
            .collect();
        let v: Vec<f64> = a.iter().zip(&grad).map(|(ai, gi)| ai - gi / lip).collect();
        a = project(&v, &ys, c);
    }
    objective(h, &a)
}

/// Every KKT condition of the soft-margin dual at tolerance `tol`, with
/// `f(x) = Σ α_j y_j K(x_j, x) + b` recomputed from the training rows.
pub fn check_kkt(
    x: ArrayView2<'_, f64>,
    y: &[Label],
    m: &SvmModel,
    tol: f64,
) -> Result<(), String> {
    let n = y.len();
    let alpha = m.dense_alphas(n);
    let c = m.c;
    let mut balance = 0.0;
    for (i, a) in alpha.iter().enumerate() {
        if *a < 0.0 || *a > c {
            return Err(format!("alpha[{i}] = {a} outside [0, {c}]"));
        }
        balance += a * y[i].sign();
    }
    if balance.abs() > tol * c.max(1.0) {
        return Err(format!("sum alpha y = {balance:e}"));
    }
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    for i in 0..n {
        let f: f64 = (0..n)
            .filter(|&j| alpha[j] > 0.0)
            .map(|j| alpha[j] * y[j].sign() * m.kernel.eval(&rows[j], &rows[i]).unwrap())
            .sum::<f64>()
            + m.bias;
        let margin = y[i].sign() * f;
        let a = alpha[i];
        let ok = if a == 0.0 {
            margin >= 1.0 - tol
        } else if a >= c {
            margin <= 1.0 + tol
        } else {
            (margin - 1.0).abs() <= tol
        };
        if !ok {
            return Err(format!("point {i}: alpha {a}, y f = {margin}"));
        }
    }
    Ok(())
}

fn drop_timing(cells: Vec<String>) -> Vec<String> {
    cells
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i != 5 && *i != 6)
        .map(|(_, c)| c)
        .collect()
}

/// Every file in `dir`, with the two timing columns removed from the reports.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().into_string().unwrap();
        let bytes = fs::read(e.path()).unwrap();
        let text = || String::from_utf8(bytes.clone()).unwrap();
        let kept = match name.as_str() {
            "report.csv" => {
                let mut rdr = csv::Reader::from_reader(bytes.as_slice());
                let mut rows = vec![drop_timing(
                    rdr.headers().unwrap().iter().map(String::from).collect(),
                )];
                rows.extend(
                    rdr.records()
                        .map(|r| drop_timing(r.unwrap().iter().map(String::from).collect())),
                );
                format!("{rows:?}").into_bytes()
            }
            "report.txt" => {
                let rows: Vec<Vec<String>> = text()
                    .lines()
                    .map(|l| {
                        drop_timing(
                            l.split("  ")
                                .map(str::trim)
                                .filter(|c| !c.is_empty())
                                .map(String::from)
                                .collect(),
                        )
                    })
                    .collect();
                format!("{rows:?}").into_bytes()
            }
            _ => bytes,
        };
        files.insert(name, kept);
    }
    files
}
