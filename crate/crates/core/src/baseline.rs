//! Regression-line monitor.
//!
//! A window of `window_minutes` one-minute STDs of two channels is reduced to
//! a least-squares line `y ≈ β0 + β1 x`; the window then advances by
//! `step_minutes` and the next line is fitted.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{window_len, MultivariateSeries};
use crate::error::{Error, Result};
use crate::transforms::std_transform;

/// Determinant below which the 2×2 normal equations count as singular.
pub const SINGULAR_DET: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionLine {
    pub window_start_index: usize,
    pub intercept: f64,
    pub incline: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub x_channel: String,
    pub y_channel: String,
    pub window_minutes: usize,
    pub step_minutes: usize,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            x_channel: "accx_FJ".into(),
            y_channel: "bmx".into(),
            window_minutes: 10,
            step_minutes: 1,
        }
    }
}

/// Ordinary least squares through the normal equations
/// `[xᵀx  xᵀ1; 1ᵀx  1ᵀ1] [β1; β0] = [xᵀy; 1ᵀy]`, inverted with the 2×2
/// adjugate. Returns `(β0, β1)`.
pub fn fit_line_coefficients(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            what: "fit_line y",
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::input("a line needs at least two points"));
    }
    let n = x.len() as f64;
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = sxx * n - sx * sx;
    if det.abs() < SINGULAR_DET {
        return Err(Error::Singular(format!(
            "normal equations have determinant {det:e} (x has no spread)"
        )));
    }
    // adj([[sxx, sx], [sx, n]]) = [[n, -sx], [-sx, sxx]]
    let incline = (n * sxy - sx * sy) / det;
    let intercept = (-sx * sxy + sxx * sy) / det;
    Ok((intercept, incline))
}

/// The same line from moments: `b1 = Cov(x,y)/Var(x)`,
/// `b0 = μ_y − μ_x Cov(x,y)/Var(x)`.
pub fn moment_form(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::input(
            "moment form needs two equal-length vectors of length >= 2",
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / (n - 1.0);
    let cov = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1.0);
    if var <= 1e-15 {
        return Err(Error::Singular(format!("Var(x) = {var:e}")));
    }
    Ok((my - mx * cov / var, cov / var))
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<RegressionLine> {
    let (intercept, incline) = fit_line_coefficients(x, y)?;
    Ok(RegressionLine {
        window_start_index: 0,
        intercept,
        incline,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorOutput {
    pub lines: Vec<RegressionLine>,
    /// Sample index of every window whose fit failed.
    pub gaps: Vec<usize>,
}

/// Per-minute STDs of one channel for every complete minute.
pub fn minute_stds(series: &MultivariateSeries, channel: usize) -> Result<Vec<f64>> {
    let per_minute = window_len(60.0, series.sample_rate_hz());
    if per_minute < 2 {
        return Err(Error::input("sample rate too low for one-minute STDs"));
    }
    let col = series.samples().column(channel).to_owned();
    let minutes = series.len() / per_minute;
    (0..minutes)
        .map(|k| {
            let w = col.slice(ndarray::s![k * per_minute..(k + 1) * per_minute]);
            Ok(std_transform(w.insert_axis(ndarray::Axis(1)))?[0])
        })
        .collect()
}

pub fn monitor(series: &MultivariateSeries, cfg: &MonitorConfig) -> Result<MonitorOutput> {
    let xi = series
        .channel_index(&cfg.x_channel)
        .ok_or_else(|| Error::config("x_channel", format!("unknown channel {}", cfg.x_channel)))?;
    let yi = series
        .channel_index(&cfg.y_channel)
        .ok_or_else(|| Error::config("y_channel", format!("unknown channel {}", cfg.y_channel)))?;
    if xi == yi {
        return Err(Error::config("y_channel", "must differ from x_channel"));
    }
    if cfg.step_minutes < 1 || cfg.window_minutes <= cfg.step_minutes {
        return Err(Error::config("window_minutes", "need window > step >= 1"));
    }
    let xs = minute_stds(series, xi)?;
    let ys = minute_stds(series, yi)?;
    if xs.len() < cfg.window_minutes {
        return Err(Error::input(format!(
            "series spans {} minutes, window needs {}",
            xs.len(),
            cfg.window_minutes
        )));
    }
    let per_minute = window_len(60.0, series.sample_rate_hz());
    let mut out = MonitorOutput {
        lines: Vec::new(),
        gaps: Vec::new(),
    };
    for k in (0..=xs.len() - cfg.window_minutes).step_by(cfg.step_minutes) {
        let range = k..k + cfg.window_minutes;
        let start = k * per_minute;
        match fit_line_coefficients(&xs[range.clone()], &ys[range]) {
            Ok((intercept, incline)) => out.lines.push(RegressionLine {
                window_start_index: start,
                intercept,
                incline,
            }),
            Err(e) => {
                log::warn!("baseline window at sample {start} skipped: {e}");
                out.gaps.push(start);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSummary {
    pub mean_intercept: f64,
    pub mean_incline: f64,
    pub std_intercept: f64,
    pub std_incline: f64,
}

/// Component-wise mean and population std of a line cloud.
pub fn line_distribution(lines: &[RegressionLine]) -> Result<LineSummary> {
    if lines.is_empty() {
        return Err(Error::input("no regression lines"));
    }
    let n = lines.len() as f64;
    let mi = lines.iter().map(|l| l.intercept).sum::<f64>() / n;
    let ms = lines.iter().map(|l| l.incline).sum::<f64>() / n;
    let si = (lines
        .iter()
        .map(|l| (l.intercept - mi).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let ss = (lines.iter().map(|l| (l.incline - ms).powi(2)).sum::<f64>() / n).sqrt();
    Ok(LineSummary {
        mean_intercept: mi,
        mean_incline: ms,
        std_intercept: si,
        std_incline: ss,
    })
}

/// Append lines as `window_start,intercept,incline` rows; the header is
/// written only when `write_header` is set.
pub fn write_lines<W: Write>(w: W, lines: &[RegressionLine], write_header: bool) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    if write_header {
        wtr.write_record(["window_start", "intercept", "incline"])?;
    }
    for l in lines {
        wtr.write_record(&[
            l.window_start_index.to_string(),
            l.intercept.to_string(),
            l.incline.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
