//! On-disk formats.
//!
//! * A series is `<name>.csv` (one column per channel, header = channel
//!   names) with a `<name>.json` sidecar holding label, noise level, sample
//!   rate and seed.
//! * A series set is a directory of such pairs plus `set.json`.
//! * A feature matrix is a CSV with one column per feature and a trailing
//!   `label` column.
//! * Models are JSON.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, LabeledSeriesSet, MultivariateSeries, NoiseLevel};
use crate::error::{Error, Result};
use crate::transforms::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub label: Label,
    pub noise_level: NoiseLevel,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

pub fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    Ok(csv::Reader::from_reader(f))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

pub fn write_series(path: &Path, series: &MultivariateSeries, meta: &SeriesMeta) -> Result<()> {
    let mut wtr = csv_writer(&path.with_extension("csv"))?;
    wtr.write_record(series.channel_names())?;
    for row in series.samples().rows() {
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    write_json(&path.with_extension("json"), meta)
}

pub fn read_series(path: &Path) -> Result<(MultivariateSeries, SeriesMeta)> {
    let meta: SeriesMeta = read_json(&path.with_extension("json"))?;
    let mut rdr = csv_reader(&path.with_extension("csv"))?;
    let names: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut flat = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        for field in rec.iter() {
            flat.push(parse_f64(field, rows)?);
        }
        rows += 1;
    }
    let samples = Array2::from_shape_vec((rows, names.len()), flat)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    Ok((
        MultivariateSeries::new(samples, meta.sample_rate_hz, names)?,
        meta,
    ))
}

fn parse_f64(field: &str, row: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::input(format!("row {row}: cannot parse `{field}` as a number")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SetManifest {
    noise_level: NoiseLevel,
    seed: u64,
    series: Vec<String>,
}

/// Writes `series_NNNN.{csv,json}` plus `set.json` into `dir`.
pub fn write_set(dir: &Path, set: &LabeledSeriesSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(set.len());
    for (i, (s, label)) in set.items.iter().enumerate() {
        let name = format!("series_{i:04}");
        let meta = SeriesMeta {
            label: *label,
            noise_level: set.noise_level,
            sample_rate_hz: s.sample_rate_hz(),
            seed: set.seed,
        };
        write_series(&dir.join(&name), s, &meta)?;
        names.push(name);
    }
    write_json(
        &dir.join("set.json"),
        &SetManifest {
            noise_level: set.noise_level,
            seed: set.seed,
            series: names,
        },
    )
}

pub fn read_set(dir: &Path) -> Result<LabeledSeriesSet> {
    let manifest: SetManifest = read_json(&dir.join("set.json"))?;
    let items = manifest
        .series
        .iter()
        .map(|name| read_series(&dir.join(name)).map(|(s, m)| (s, m.label)))
        .collect::<Result<Vec<_>>>()?;
    LabeledSeriesSet::new(items, manifest.noise_level, manifest.seed)
}

pub fn write_features(path: &Path, fm: &FeatureMatrix) -> Result<()> {
    let mut wtr = csv_writer(path)?;
    let mut header = fm.feature_names.clone();
    header.push("label".into());
    wtr.write_record(&header)?;
    for (row, label) in fm.values.rows().into_iter().zip(&fm.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.as_u8().to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header.last().map(String::as_str) != Some("label") {
        return Err(Error::input(format!(
            "{}: last column must be `label`",
            path.display()
        )));
    }
    let d = header.len() - 1;
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for field in rec.iter().take(d) {
            flat.push(parse_f64(field, r)?);
        }
        labels.push(match rec.get(d).map(str::trim) {
            Some("0") => Label::Intact,
            Some("1") => Label::Broken,
            other => {
                return Err(Error::input(format!(
                    "row {r}: label must be 0 or 1, got {other:?}"
                )))
            }
        });
    }
    let values = Array2::from_shape_vec((labels.len(), d), flat)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    FeatureMatrix::new(values, header[..d].to_vec(), labels)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

/// `dir/name`, creating `dir` first.
pub fn out_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}
