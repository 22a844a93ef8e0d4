//! Principal component analysis on normalised features.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::CONSTANT_COLUMN_STD;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::transforms::FeatureMatrix;

/// Normalisation statistics, the full eigen-spectrum and the first `d`
/// eigenvectors (columns of `components`).
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
    pub components: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub d: usize,
}

/// JSON layout; `components` is the `d_in × d` matrix flattened row-major.
#[derive(Serialize, Deserialize)]
struct PcaJson {
    mean: Vec<f64>,
    std: Vec<f64>,
    eigenvalues: Vec<f64>,
    components: Vec<f64>,
    d: usize,
}

impl Serialize for PcaModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PcaJson {
            mean: self.mean.to_vec(),
            std: self.std.to_vec(),
            eigenvalues: self.eigenvalues.to_vec(),
            components: self.components.iter().copied().collect(),
            d: self.d,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PcaModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = PcaJson::deserialize(de)?;
        let d_in = j.mean.len();
        if j.std.len() != d_in || j.eigenvalues.len() != d_in || j.d == 0 || j.d > d_in {
            return Err(D::Error::custom("inconsistent PCA dimensions"));
        }
        let components = Array2::from_shape_vec((d_in, j.d), j.components)
            .map_err(|e| D::Error::custom(format!("components: {e}")))?;
        Ok(PcaModel {
            mean: Array1::from(j.mean),
            std: Array1::from(j.std),
            components,
            eigenvalues: Array1::from(j.eigenvalues),
            d: j.d,
        })
    }
}

impl PcaModel {
    pub fn d_in(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.d_in() {
            return Err(Error::Dimension {
                what: "PCA input columns",
                expected: self.d_in(),
                got: x.ncols(),
            });
        }
        Ok((&x - &self.mean) / &self.std)
    }

    pub fn project_values(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.normalize(x)?.dot(&self.components))
    }

    /// `P = ((X − μ)/σ) W`, named `PC1..PCd`.
    pub fn project(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let p = self.project_values(x.values.view())?;
        FeatureMatrix::new(
            p,
            (1..=self.d).map(|k| format!("PC{k}")).collect(),
            x.labels.clone(),
        )
    }

    /// Share of the total spectrum per component (all `d_in`).
    pub fn explained_variance_ratio(&self) -> Result<Array1<f64>> {
        let clamped = self.eigenvalues.mapv(|v| v.max(0.0));
        let total: f64 = clamped.sum();
        if total <= 0.0 {
            return Err(Error::input("eigenvalue spectrum is all zero"));
        }
        Ok(clamped / total)
    }
}

/// Fit on the rows of `x`, keeping `d` components.
///
/// Columns are normalised with the population σ (a constant column keeps
/// σ = 1), the covariance is `X̃ᵀX̃ / N`, eigenpairs come out in descending
/// order with ties kept in index order, and each eigenvector is signed so its
/// largest-magnitude entry is positive.
pub fn fit(x: &FeatureMatrix, d: usize) -> Result<PcaModel> {
    fit_values(x.values.view(), d)
}

pub fn fit_values(x: ArrayView2<'_, f64>, d: usize) -> Result<PcaModel> {
    let (n, d_in) = x.dim();
    if d == 0 || d > d_in {
        return Err(Error::config(
            "pcs",
            format!("must lie in 1..={d_in}, got {d}"),
        ));
    }
    if n < 2 {
        return Err(Error::input(format!("PCA needs at least 2 rows, got {n}")));
    }
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let mut std = x.std_axis(Axis(0), 0.0);
    std.mapv_inplace(|s| if s <= CONSTANT_COLUMN_STD { 1.0 } else { s });
    let xn = (&x - &mean) / &std;
    let cov = xn.t().dot(&xn) / n as f64;
    let eig = symmetric_eigen(cov.view())?;

    let mut basis = eig.vectors;
    for mut col in basis.columns_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    let components = basis.slice(ndarray::s![.., 0..d]).to_owned();
    Ok(PcaModel {
        mean,
        std,
        components,
        eigenvalues: eig.values,
        d,
    })
}
