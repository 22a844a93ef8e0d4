//! Labelled multichannel series: the surrogate generator, fixed-length
//! windowing, the stratified train/test split and feature standardisation.
//!
//! The generator replaces the finite-element riser simulations with a
//! stationary vector AR(1) process whose stationary covariance is chosen per
//! class. Intact and broken wells then differ only in the dispersion and
//! cross-channel structure of the signals, which is exactly what the
//! downstream transforms measure.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::transforms::FeatureMatrix;

/// Default sensor layout: two accelerometers (above and below the flex
/// joint) and the wellhead bending moment, each with an x and y component.
pub const DEFAULT_CHANNELS: [&str; 6] =
    ["accx_FJ", "accy_FJ", "accx_DAS", "accy_DAS", "bmx", "bmy"];
pub const DEFAULT_SERIES_LEN: usize = 18001;
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 5.0;
pub const DEFAULT_WINDOW_SECONDS: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Intact = 0,
    Broken = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    /// SVM target convention: Broken is +1.
    pub fn sign(self) -> f64 {
        match self {
            Label::Intact => -1.0,
            Label::Broken => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Intact
        } else {
            Label::Broken
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Intact),
            1 => Ok(Label::Broken),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Sensor noise multiplier of the three data-set variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u32", try_from = "u32")]
pub enum NoiseLevel {
    One,
    Ten,
    Fifty,
}

impl NoiseLevel {
    pub fn factor(self) -> f64 {
        u32::from(self) as f64
    }
}

impl From<NoiseLevel> for u32 {
    fn from(n: NoiseLevel) -> u32 {
        match n {
            NoiseLevel::One => 1,
            NoiseLevel::Ten => 10,
            NoiseLevel::Fifty => 50,
        }
    }
}

impl TryFrom<u32> for NoiseLevel {
    type Error = String;

    fn try_from(v: u32) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(NoiseLevel::One),
            10 => Ok(NoiseLevel::Ten),
            50 => Ok(NoiseLevel::Fifty),
            other => Err(format!("noise level must be 1, 10 or 50, got {other}")),
        }
    }
}

impl fmt::Display for NoiseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u32::from(*self))
    }
}

/// An `n × m` block of channel samples (rows are time steps).
#[derive(Clone, Debug, PartialEq)]
pub struct MultivariateSeries {
    samples: Array2<f64>,
    sample_rate_hz: f64,
    channel_names: Vec<String>,
}

impl MultivariateSeries {
    pub fn new(
        samples: Array2<f64>,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let (n, m) = samples.dim();
        if n < 2 || m < 1 {
            return Err(Error::input(format!(
                "series needs at least 2 samples and 1 channel, got {n}×{m}"
            )));
        }
        if channel_names.len() != m {
            return Err(Error::Dimension {
                what: "channel names",
                expected: m,
                got: channel_names.len(),
            });
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::input(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite sample at row {}, channel {}",
                pos / m,
                pos % m
            )));
        }
        Ok(MultivariateSeries {
            samples,
            sample_rate_hz,
            channel_names,
        })
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|c| c == name)
    }
}

#[derive(Clone, Debug)]
pub struct LabeledSeriesSet {
    pub items: Vec<(MultivariateSeries, Label)>,
    pub noise_level: NoiseLevel,
    pub seed: u64,
}

impl LabeledSeriesSet {
    pub fn new(
        items: Vec<(MultivariateSeries, Label)>,
        noise_level: NoiseLevel,
        seed: u64,
    ) -> Result<Self> {
        if let Some((first, _)) = items.first() {
            for (i, (s, _)) in items.iter().enumerate() {
                if s.channel_names != first.channel_names
                    || s.sample_rate_hz != first.sample_rate_hz
                {
                    return Err(Error::input(format!(
                        "series {i} differs from series 0 in channels or sample rate"
                    )));
                }
            }
        }
        Ok(LabeledSeriesSet {
            items,
            noise_level,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for (_, l) in &self.items {
            c[l.index()] += 1;
        }
        c
    }
}

/// Per-series operating-condition variation. Each series gets an amplitude
/// factor (log-uniform over `intensity`) and a heading drawn uniformly from
/// `[-max_heading_rad, max_heading_rad]` that rotates every consecutive
/// (x, y) channel pair. Both act identically on the two classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeaStateSpread {
    pub intensity: (f64, f64),
    pub max_heading_rad: f64,
}

impl Default for SeaStateSpread {
    fn default() -> Self {
        SeaStateSpread {
            intensity: (0.6, 1.6),
            max_heading_rad: std::f64::consts::FRAC_PI_4,
        }
    }
}

/// Wellhead-housing presets for the class covariances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Slack,
    Tight,
}

impl Preset {
    /// Intact and broken stationary covariances for the six default channels.
    ///
    /// The matrix is `S ⊗ D`: `S` couples the sensors (flex-joint
    /// acceleration, DAS acceleration, bending moment) and `D` the two
    /// horizontal directions.
    ///
    /// * `Slack`: the broken well keeps every variance and shrinks the
    ///   acceleration↔bending-moment covariances to 30 %, so the classes
    ///   differ in cross-correlation only.
    /// * `Tight`: the broken well scales the bending-moment variance by 2.25
    ///   and rotates the (acc_FJ, acc_DAS)↔bm cross-covariance vector by 15°.
    pub fn class_covariances(self) -> [Array2<f64>; 2] {
        let std = [1.0, 0.8, 1.2];
        let corr = [[1.0, 0.85, 0.6], [0.85, 1.0, 0.75], [0.6, 0.75, 1.0]];
        let mut intact = Array2::<f64>::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                intact[[i, j]] = corr[i][j] * std[i] * std[j];
            }
        }
        let mut broken = intact.clone();
        match self {
            Preset::Slack => {
                for (i, j) in [(0, 2), (2, 0), (1, 2), (2, 1)] {
                    broken[[i, j]] *= 0.3;
                }
            }
            Preset::Tight => {
                broken[[2, 2]] *= 2.25;
                let (s, c) = 15f64.to_radians().sin_cos();
                let (a, b) = (intact[[0, 2]], intact[[1, 2]]);
                let (ra, rb) = (c * a - s * b, s * a + c * b);
                broken[[0, 2]] = ra;
                broken[[2, 0]] = ra;
                broken[[1, 2]] = rb;
                broken[[2, 1]] = rb;
            }
        }

        let direction = ndarray::array![[1.0, 0.3], [0.3, 0.5]];
        [kron(&intact, &direction), kron(&broken, &direction)]
    }
}

fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = a[[i, j]] * b[[k, l]];
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_series_per_class: usize,
    pub series_len: usize,
    pub sample_rate_hz: f64,
    /// Stationary covariance of the intact (index 0) and broken (index 1) class.
    pub class_cov: [Array2<f64>; 2],
    pub temporal_ar_coeff: f64,
    pub noise_level: NoiseLevel,
    pub base_noise_std: Vec<f64>,
    pub channel_names: Vec<String>,
    pub sea_state: Option<SeaStateSpread>,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn preset(
        preset: Preset,
        noise_level: NoiseLevel,
        n_series_per_class: usize,
        seed: u64,
    ) -> Self {
        GeneratorConfig {
            n_series_per_class,
            series_len: DEFAULT_SERIES_LEN,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            class_cov: preset.class_covariances(),
            temporal_ar_coeff: 0.7,
            noise_level,
            base_noise_std: vec![0.02; DEFAULT_CHANNELS.len()],
            channel_names: DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect(),
            sea_state: Some(SeaStateSpread::default()),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let m = self.channel_names.len();
        if m == 0 {
            return Err(Error::config(
                "channel_names",
                "at least one channel required",
            ));
        }
        if self.n_series_per_class == 0 {
            return Err(Error::config("n_series_per_class", "must be positive"));
        }
        if self.series_len < 2 {
            return Err(Error::config("series_len", "must be at least 2"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::config("sample_rate_hz", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.temporal_ar_coeff) {
            return Err(Error::config("temporal_ar_coeff", "must lie in [0, 1)"));
        }
        if self.base_noise_std.len() != m {
            return Err(Error::config(
                "base_noise_std",
                format!("expected {m} entries, got {}", self.base_noise_std.len()),
            ));
        }
        if self
            .base_noise_std
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return Err(Error::config(
                "base_noise_std",
                "entries must be finite and non-negative",
            ));
        }
        if let Some(sea) = &self.sea_state {
            let (lo, hi) = sea.intensity;
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::config("sea_state.intensity", "need 0 < lo <= hi"));
            }
            if sea.max_heading_rad != 0.0 && !m.is_multiple_of(2) {
                return Err(Error::config(
                    "sea_state.max_heading_rad",
                    "heading rotation needs channels in (x, y) pairs",
                ));
            }
        }
        for (c, cov) in self.class_cov.iter().enumerate() {
            if cov.dim() != (m, m) {
                return Err(Error::config(
                    "class_cov",
                    format!("class {c} covariance is {:?}, expected {m}×{m}", cov.dim()),
                ));
            }
            for i in 0..m {
                for j in 0..m {
                    if (cov[[i, j]] - cov[[j, i]]).abs() > 1e-12 {
                        return Err(Error::config(
                            "class_cov",
                            format!("class {c} covariance not symmetric at ({i}, {j})"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `F` with `F Fᵀ = cov`, from the eigen-decomposition (works for singular
/// PSD matrices, unlike Cholesky).
fn covariance_factor(cov: &Array2<f64>, class: usize) -> Result<Array2<f64>> {
    let eig = symmetric_eigen(cov.view())?;
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = -1e-12 * scale.max(1.0);
    for (idx, &lambda) in eig.values.iter().enumerate() {
        if lambda < floor {
            return Err(Error::NotPositiveDefinite {
                what: format!("class {class} covariance"),
                eigenvalue: lambda,
                index: idx,
            });
        }
    }
    let mut f = eig.vectors.clone();
    for (k, mut col) in f.columns_mut().into_iter().enumerate() {
        col *= eig.values[k].max(0.0).sqrt();
    }
    Ok(f)
}

fn generate_one(
    config: &GeneratorConfig,
    factor: &Array2<f64>,
    index: usize,
) -> Result<MultivariateSeries> {
    let m = config.channel_names.len();
    let n = config.series_len;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let mut f = factor.clone();
    if let Some(sea) = &config.sea_state {
        let (lo, hi) = sea.intensity;
        let s = if hi > lo {
            (rng.gen_range(lo.ln()..hi.ln())).exp()
        } else {
            lo
        };
        let heading = if sea.max_heading_rad > 0.0 {
            rng.gen_range(-sea.max_heading_rad..=sea.max_heading_rad)
        } else {
            0.0
        };
        let (sn, cs) = heading.sin_cos();
        let mut rot = Array2::<f64>::eye(m);
        if heading != 0.0 {
            for p in (0..m).step_by(2) {
                rot[[p, p]] = cs;
                rot[[p, p + 1]] = -sn;
                rot[[p + 1, p]] = sn;
                rot[[p + 1, p + 1]] = cs;
            }
        }
        f = rot.dot(&f) * s;
    }

    let a = config.temporal_ar_coeff;
    let innov = (1.0 - a * a).sqrt();
    let noise_std: Vec<f64> = config
        .base_noise_std
        .iter()
        .map(|s| s * config.noise_level.factor())
        .collect();

    let mut samples = Array2::<f64>::zeros((n, m));
    let mut state = Array1::<f64>::zeros(m);
    let mut z = Array1::<f64>::zeros(m);
    for t in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let shock = f.dot(&z);
        if t == 0 {
            state.assign(&shock);
        } else {
            state.mapv_inplace(|v| v * a);
            state.scaled_add(innov, &shock);
        }
        let mut row = samples.row_mut(t);
        for j in 0..m {
            let w: f64 = rng.sample(StandardNormal);
            row[j] = state[j] + noise_std[j] * w;
        }
    }
    MultivariateSeries::new(samples, config.sample_rate_hz, config.channel_names.clone())
}

/// Draw `2 × n_series_per_class` series, intact first.
///
/// Series `i` uses its own ChaCha stream `(seed, i)`, so the parallel
/// generation here is bitwise identical to a serial loop.
pub fn generate(config: &GeneratorConfig) -> Result<LabeledSeriesSet> {
    config.validate()?;
    let factors = [
        covariance_factor(&config.class_cov[0], 0)?,
        covariance_factor(&config.class_cov[1], 1)?,
    ];
    let n_per = config.n_series_per_class;
    let items = (0..2 * n_per)
        .into_par_iter()
        .map(|i| {
            let label = if i < n_per {
                Label::Intact
            } else {
                Label::Broken
            };
            generate_one(config, &factors[label.index()], i).map(|s| (s, label))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledSeriesSet::new(items, config.noise_level, config.seed)
}

/// One fixed-length window of a labelled series.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub samples: Array2<f64>,
    pub source_index: usize,
    pub window_index: usize,
    pub label: Label,
}

pub trait Labeled {
    fn label(&self) -> Label;
}

impl Labeled for Segment {
    fn label(&self) -> Label {
        self.label
    }
}

impl Labeled for Label {
    fn label(&self) -> Label {
        *self
    }
}

pub fn window_len(window_seconds: f64, sample_rate_hz: f64) -> usize {
    (window_seconds * sample_rate_hz).round() as usize
}

/// Cut every series into consecutive non-overlapping windows of
/// `round(window_seconds × rate)` samples; a short trailing remainder is
/// dropped.
pub fn window(set: &LabeledSeriesSet, window_seconds: f64) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (source_index, (series, label)) in set.items.iter().enumerate() {
        let n_w = window_len(window_seconds, series.sample_rate_hz());
        if n_w < 2 {
            return Err(Error::config(
                "window_seconds",
                format!("window of {n_w} samples is shorter than 2"),
            ));
        }
        if n_w > series.len() {
            return Err(Error::config(
                "window_seconds",
                format!(
                    "window of {n_w} samples exceeds series {source_index} of length {}",
                    series.len()
                ),
            ));
        }
        let count = series.len() / n_w;
        for w in 0..count {
            out.push(Segment {
                samples: series
                    .samples()
                    .slice(ndarray::s![w * n_w..(w + 1) * n_w, ..])
                    .to_owned(),
                source_index,
                window_index: w,
                label: *label,
            });
        }
    }
    Ok(out)
}

/// Stratified split of item indices. Each class contributes
/// `round(n_c × test_fraction)` items to the test side, clamped so both sides
/// keep at least one item of every class. Both index lists are sorted.
pub fn split_indices(
    labels: &[Label],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config("test_fraction", "must lie in (0, 1)"));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::input(format!(
                "class {c} has {} segments, the split needs at least 2",
                idx.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for idx in by_class.iter_mut() {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split<T: Labeled>(items: Vec<T>, test_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let labels: Vec<Label> = items.iter().map(Labeled::label).collect();
    let (_, test_idx) = split_indices(&labels, test_fraction, seed)?;
    let mut is_test = vec![false; items.len()];
    for i in test_idx {
        is_test[i] = true;
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (item, t) in items.into_iter().zip(is_test) {
        if t {
            test.push(item);
        } else {
            train.push(item);
        }
    }
    Ok((train, test))
}

/// Column standardiser fitted on training rows (population σ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const CONSTANT_COLUMN_STD: f64 = 1e-12;

impl Scaler {
    /// Fit on the rows of `values`. A column with σ ≤ 1e-12 gets σ = 1 and a
    /// warning naming the column.
    pub fn fit(values: ArrayView2<'_, f64>) -> Result<(Scaler, Vec<String>)> {
        let n = values.nrows();
        if n == 0 {
            return Err(Error::input("cannot fit a scaler on zero rows"));
        }
        let mean = values.mean_axis(Axis(0)).expect("non-empty");
        let mut std = Vec::with_capacity(values.ncols());
        let mut warnings = Vec::new();
        for (j, col) in values.columns().into_iter().enumerate() {
            let mu = mean[j];
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            if s <= CONSTANT_COLUMN_STD {
                warnings.push(format!("column {j} is constant; using std = 1"));
                log::warn!("column {j} is constant; using std = 1");
                std.push(1.0);
            } else {
                std.push(s);
            }
        }
        Ok((
            Scaler {
                mean: mean.to_vec(),
                std,
            },
            warnings,
        ))
    }

    pub fn transform(&self, values: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if values.ncols() != self.mean.len() {
            return Err(Error::Dimension {
                what: "scaler input columns",
                expected: self.mean.len(),
                got: values.ncols(),
            });
        }
        let mut out = values.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (mu, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - mu) / s);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct Standardized {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub scaler: Scaler,
    pub warnings: Vec<String>,
}

/// Standardise both matrices with statistics of `train` only.
pub fn standardize(train: &FeatureMatrix, test: &FeatureMatrix) -> Result<Standardized> {
    if train.feature_names != test.feature_names {
        return Err(Error::input("train and test feature names differ"));
    }
    let (scaler, warnings) = Scaler::fit(train.values.view())?;
    Ok(Standardized {
        train: train.with_values(scaler.transform(train.values.view())?)?,
        test: test.with_values(scaler.transform(test.values.view())?)?,
        scaler,
        warnings,
    })
}
