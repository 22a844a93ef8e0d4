//! Dispersion features of a window: per-channel standard deviations (STD)
//! and the upper triangle of the covariance square root (COV).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, Segment};
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

/// Rows of features with their names and one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub feature_names: Vec<String>,
    pub labels: Vec<Label>,
}

impl FeatureMatrix {
    pub fn new(
        values: Array2<f64>,
        feature_names: Vec<String>,
        labels: Vec<Label>,
    ) -> Result<Self> {
        if feature_names.len() != values.ncols() {
            return Err(Error::Dimension {
                what: "feature names",
                expected: values.ncols(),
                got: feature_names.len(),
            });
        }
        if labels.len() != values.nrows() {
            return Err(Error::Dimension {
                what: "labels",
                expected: values.nrows(),
                got: labels.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let d = values.ncols().max(1);
            return Err(Error::input(format!(
                "non-finite feature at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(FeatureMatrix {
            values,
            feature_names,
            labels,
        })
    }

    /// Same names and labels, new values.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        FeatureMatrix::new(values, self.feature_names.clone(), self.labels.clone())
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }

    /// Rows at `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.select(Axis(0), idx),
            feature_names: self.feature_names.clone(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Std,
    Cov,
}

impl TransformKind {
    pub fn n_features(self, m: usize) -> usize {
        match self {
            TransformKind::Std => m,
            TransformKind::Cov => m * (m + 1) / 2,
        }
    }
}

/// Channel covariance of one window (sample divisor `n − 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    pub sigma: Array2<f64>,
}

fn check_window(samples: ArrayView2<'_, f64>) -> Result<()> {
    if samples.nrows() < 2 {
        return Err(Error::input(format!(
            "window needs at least 2 samples, got {}",
            samples.nrows()
        )));
    }
    Ok(())
}

/// Per-channel sample standard deviation.
pub fn std_transform(samples: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    check_window(samples)?;
    Ok(samples.std_axis(Axis(0), 1.0))
}

pub fn cov_matrix(samples: ArrayView2<'_, f64>) -> Result<CovMatrix> {
    check_window(samples)?;
    let n = samples.nrows();
    let mean = samples.mean_axis(Axis(0)).expect("non-empty");
    let centered = &samples - &mean;
    let sigma = centered.t().dot(&centered) / (n as f64 - 1.0);
    Ok(CovMatrix { sigma })
}

/// Symmetric PSD square root `Q Λ^{1/2} Qᵀ`. Eigenvalues in `[-1e-10, 0)`
/// (relative to the spectrum's scale when that exceeds 1) are clamped to 0.
pub fn cov_sqrt(cov: &CovMatrix) -> Result<Array2<f64>> {
    let eig = symmetric_eigen(cov.sigma.view())?;
    let scale = eig.values.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut q = eig.vectors.clone();
    for (k, mut col) in q.columns_mut().into_iter().enumerate() {
        let lambda = eig.values[k];
        if lambda < -1e-10 * scale {
            return Err(Error::NotPsd(lambda));
        }
        col *= lambda.max(0.0).sqrt().sqrt();
    }
    // (Q Λ^{1/4})(Q Λ^{1/4})ᵀ is exactly symmetric
    Ok(q.dot(&q.t()))
}

/// Row-major upper triangle (diagonal first in each row).
pub fn upper_triangle(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(m[[i, j]]);
        }
    }
    out
}

pub fn cov_transform(samples: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let cov = cov_matrix(samples)?;
    Ok(upper_triangle(&cov_sqrt(&cov)?))
}

/// `diag(Σ)^{-1/2} Σ diag(Σ)^{-1/2}`.
pub fn correlation(cov: &CovMatrix) -> Result<Array2<f64>> {
    let m = cov.sigma.nrows();
    let d: Vec<f64> = (0..m).map(|i| cov.sigma[[i, i]]).collect();
    if let Some(i) = d.iter().position(|&v| v <= 0.0) {
        return Err(Error::input(format!("channel {i} has zero variance")));
    }
    let mut out = Array2::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            out[[i, j]] = if i == j {
                1.0
            } else {
                (cov.sigma[[i, j]] / (d[i].sqrt() * d[j].sqrt())).clamp(-1.0, 1.0)
            };
        }
    }
    Ok(out)
}

pub fn feature_names(kind: TransformKind, channels: &[String]) -> Vec<String> {
    match kind {
        TransformKind::Std => channels.to_vec(),
        TransformKind::Cov => {
            let m = channels.len();
            let mut names = Vec::with_capacity(m * (m + 1) / 2);
            for i in 0..m {
                for j in i..m {
                    names.push(format!("sqrtcov({},{})", channels[i], channels[j]));
                }
            }
            names
        }
    }
}

pub fn transform_window(kind: TransformKind, samples: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    match kind {
        TransformKind::Std => Ok(std_transform(samples)?.to_vec()),
        TransformKind::Cov => cov_transform(samples),
    }
}

/// Transform every segment into one feature row.
///
/// `channels` restricts the transform to a subset of channel indices (for
/// instance one physical direction); `channel_names` names all channels of
/// the segments.
pub fn transform_segments(
    segments: &[Segment],
    kind: TransformKind,
    channel_names: &[String],
    channels: Option<&[usize]>,
) -> Result<FeatureMatrix> {
    let all: Vec<usize> = (0..channel_names.len()).collect();
    let chosen = channels.unwrap_or(&all);
    if chosen.is_empty() {
        return Err(Error::config("channels", "empty channel subset"));
    }
    if let Some(&bad) = chosen.iter().find(|&&c| c >= channel_names.len()) {
        return Err(Error::config(
            "channels",
            format!("channel index {bad} out of range"),
        ));
    }
    let names: Vec<String> = chosen.iter().map(|&c| channel_names[c].clone()).collect();
    let d = kind.n_features(chosen.len());
    let rows = segments
        .par_iter()
        .map(|seg| {
            if seg.samples.ncols() != channel_names.len() {
                return Err(Error::Dimension {
                    what: "segment channels",
                    expected: channel_names.len(),
                    got: seg.samples.ncols(),
                });
            }
            let sub = seg.samples.select(Axis(1), chosen);
            transform_window(kind, sub.view())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Array2::zeros((segments.len(), d));
    for (i, r) in rows.into_iter().enumerate() {
        values.row_mut(i).assign(&Array1::from(r));
    }
    FeatureMatrix::new(
        values,
        feature_names(kind, &names),
        segments.iter().map(|s| s.label).collect(),
    )
}
