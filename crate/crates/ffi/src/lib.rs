//! C interface to the feature, PCA and classical-classifier stages.
//!
//! Every function returns a [`TsStatus`]. On failure the message is kept
//! per thread and read with [`ts_last_error`]. Handles are opaque and owned
//! by the caller, who releases them with the matching `*_free` function.
//! Feature rows are row-major `f64`, labels are `0` (intact) or `1`
//! (broken).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::ArrayView2;
use tsclass::dtree::{self, Criterion, TreeConfig};
use tsclass::logreg::{self, LogRConfig};
use tsclass::pca::{self, PcaModel};
use tsclass::pipeline::ModelFile;
use tsclass::svm::{self, KernelKind, SvmConfig};
use tsclass::transforms::{self, TransformKind};
use tsclass::{Error, FeatureMatrix, Label};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    InvalidData = 3,
    TrainingFailed = 4,
    Panic = 5,
}

impl From<&Error> for TsStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => TsStatus::InvalidConfig,
            3 => TsStatus::InvalidData,
            _ => TsStatus::TrainingFailed,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsTransform {
    Std = 0,
    Cov = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsCriterion {
    Gini = 0,
    Entropy = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsKernel {
    Linear = 0,
    Rbf = 1,
}

/// Labelled feature matrix.
pub struct TsFeatures(FeatureMatrix);

/// Fitted PCA projection.
pub struct TsPca(PcaModel);

/// Fitted logistic regression, decision tree or SVM.
pub struct TsModel(ModelFile);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (TsStatus, String)>) -> TsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            TsStatus::Panic
        }
    }
}

fn core(e: Error) -> (TsStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (TsStatus, String) {
    (TsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (TsStatus, String) {
    (TsStatus::InvalidConfig, msg.into())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (TsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn matrix<'a>(
    values: *const f64,
    n_rows: usize,
    n_cols: usize,
) -> Result<ArrayView2<'a, f64>, (TsStatus, String)> {
    if values.is_null() {
        return Err(null("values"));
    }
    let len = n_rows
        .checked_mul(n_cols)
        .ok_or_else(|| invalid("matrix size overflows"))?;
    let slice = std::slice::from_raw_parts(values, len);
    ArrayView2::from_shape((n_rows, n_cols), slice).map_err(|e| invalid(e.to_string()))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (TsStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (TsStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of features the transform yields for `n_channels` channels.
#[no_mangle]
pub extern "C" fn ts_transform_len(kind: TsTransform, n_channels: usize) -> usize {
    transform_kind(kind).n_features(n_channels)
}

fn transform_kind(kind: TsTransform) -> TransformKind {
    match kind {
        TsTransform::Std => TransformKind::Std,
        TsTransform::Cov => TransformKind::Cov,
    }
}

/// Transform one window of `n_samples` × `n_channels` samples (row-major)
/// into `out`, which must hold `ts_transform_len(kind, n_channels)` values.
///
/// # Safety
/// `samples` must point to `n_samples * n_channels` values and `out` to
/// `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn ts_transform_window(
    kind: TsTransform,
    samples: *const f64,
    n_samples: usize,
    n_channels: usize,
    out: *mut f64,
    out_len: usize,
) -> TsStatus {
    guard(|| {
        let x = matrix(samples, n_samples, n_channels)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = transforms::transform_window(transform_kind(kind), x).map_err(core)?;
        if out_len != v.len() {
            return Err(invalid(format!(
                "out_len must be {}, got {out_len}",
                v.len()
            )));
        }
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(&v);
        Ok(())
    })
}

/// Copy a labelled matrix into a new handle.
///
/// # Safety
/// `values` must point to `n_rows * n_cols` values and `labels` to `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn ts_features_new(
    values: *const f64,
    labels: *const u8,
    n_rows: usize,
    n_cols: usize,
    out: *mut *mut TsFeatures,
) -> TsStatus {
    guard(|| {
        let x = matrix(values, n_rows, n_cols)?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let labels = std::slice::from_raw_parts(labels, n_rows)
            .iter()
            .enumerate()
            .map(|(i, &l)| match l {
                0 => Ok(Label::Intact),
                1 => Ok(Label::Broken),
                _ => Err((
                    TsStatus::InvalidData,
                    format!("label {i} is {l}, expected 0 or 1"),
                )),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let names = (0..n_cols).map(|j| format!("f{j}")).collect();
        let fm = FeatureMatrix::new(x.to_owned(), names, labels).map_err(core)?;
        put(out, TsFeatures(fm))
    })
}

/// Load a feature CSV (trailing `label` column).
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ts_features_read_csv(
    path: *const c_char,
    out: *mut *mut TsFeatures,
) -> TsStatus {
    guard(|| {
        let p = c_str(path, "path")?;
        let fm = tsclass::io::read_features(p.as_ref()).map_err(core)?;
        put(out, TsFeatures(fm))
    })
}

/// # Safety
/// `f` must be a live handle; `rows` and `cols` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_features_shape(
    f: *const TsFeatures,
    rows: *mut usize,
    cols: *mut usize,
) -> TsStatus {
    guard(|| {
        let f = deref(f, "features")?;
        if rows.is_null() || cols.is_null() {
            return Err(null("rows/cols"));
        }
        *rows = f.0.n_rows();
        *cols = f.0.n_features();
        Ok(())
    })
}

/// Copy the values (row-major) into `out`, which must hold rows × cols.
///
/// # Safety
/// `f` must be a live handle and `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn ts_features_values(
    f: *const TsFeatures,
    out: *mut f64,
    out_len: usize,
) -> TsStatus {
    guard(|| {
        let f = deref(f, "features")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = f.0.n_rows() * f.0.n_features();
        if out_len != n {
            return Err(invalid(format!("out_len must be {n}, got {out_len}")));
        }
        let dst = std::slice::from_raw_parts_mut(out, n);
        for (d, v) in dst.iter_mut().zip(f.0.values.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ts_features_free(f: *mut TsFeatures) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Fit `d` principal components.
///
/// # Safety
/// `f` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_pca_fit(
    f: *const TsFeatures,
    d: usize,
    out: *mut *mut TsPca,
) -> TsStatus {
    guard(|| {
        let f = deref(f, "features")?;
        put(out, TsPca(pca::fit(&f.0, d).map_err(core)?))
    })
}

/// Project a feature matrix onto the fitted components.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_pca_project(
    p: *const TsPca,
    f: *const TsFeatures,
    out: *mut *mut TsFeatures,
) -> TsStatus {
    guard(|| {
        let p = deref(p, "pca")?;
        let f = deref(f, "features")?;
        put(out, TsFeatures(p.0.project(&f.0).map_err(core)?))
    })
}

/// Explained-variance ratio of the `d` kept components into `out`.
///
/// # Safety
/// `p` must be a live handle and `out` must hold `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn ts_pca_explained_ratio(
    p: *const TsPca,
    out: *mut f64,
    out_len: usize,
) -> TsStatus {
    guard(|| {
        let p = deref(p, "pca")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = p.0.explained_variance_ratio().map_err(core)?;
        if out_len != p.0.d {
            return Err(invalid(format!("out_len must be {}, got {out_len}", p.0.d)));
        }
        for (d, v) in std::slice::from_raw_parts_mut(out, out_len)
            .iter_mut()
            .zip(r.iter())
        {
            *d = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ts_pca_free(p: *mut TsPca) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// L2-penalised logistic regression with penalty `lambda`.
///
/// # Safety
/// `f` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_train_logreg(
    f: *const TsFeatures,
    lambda: f64,
    out: *mut *mut TsModel,
) -> TsStatus {
    guard(|| {
        let f = deref(f, "features")?;
        let cfg = LogRConfig {
            reg_strength: lambda,
            ..Default::default()
        };
        let m = logreg::fit(f.0.values.view(), &f.0.labels, &cfg).map_err(core)?;
        put(out, TsModel(ModelFile::Logreg(m)))
    })
}

/// CART tree. `max_depth` 0 means unlimited.
///
/// # Safety
/// `f` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_train_dtree(
    f: *const TsFeatures,
    criterion: TsCriterion,
    max_depth: usize,
    min_samples_split: usize,
    min_samples_leaf: usize,
    ccp_alpha: f64,
    out: *mut *mut TsModel,
) -> TsStatus {
    guard(|| {
        let f = deref(f, "features")?;
        let cfg = TreeConfig {
            criterion: match criterion {
                TsCriterion::Gini => Criterion::Gini,
                TsCriterion::Entropy => Criterion::Entropy,
            },
            max_depth: (max_depth > 0).then_some(max_depth),
            min_samples_split,
            min_samples_leaf,
            ccp_alpha,
        };
        let m = dtree::fit(f.0.values.view(), &f.0.labels, &cfg).map_err(core)?;
        put(out, TsModel(ModelFile::Dtree(m)))
    })
}

/// Soft-margin SVM. A non-positive `gamma` selects the data-scaled default.
///
/// # Safety
/// `f` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_train_svm(
    f: *const TsFeatures,
    kernel: TsKernel,
    c: f64,
    gamma: f64,
    out: *mut *mut TsModel,
) -> TsStatus {
    guard(|| {
        let f = deref(f, "features")?;
        let cfg = SvmConfig {
            kernel: match kernel {
                TsKernel::Linear => KernelKind::Linear,
                TsKernel::Rbf => KernelKind::Rbf,
            },
            gamma: (gamma > 0.0).then_some(gamma),
            c,
            ..Default::default()
        };
        let m = svm::fit(f.0.values.view(), &f.0.labels, &cfg).map_err(core)?;
        put(out, TsModel(ModelFile::Svm(m)))
    })
}

/// Predicted labels of `n_rows` rows into `out_labels`.
///
/// # Safety
/// `m` must be a live handle, `values` must hold `n_rows * n_cols` values
/// and `out_labels` `n_rows` bytes.
#[no_mangle]
pub unsafe extern "C" fn ts_model_predict(
    m: *const TsModel,
    values: *const f64,
    n_rows: usize,
    n_cols: usize,
    out_labels: *mut u8,
) -> TsStatus {
    guard(|| {
        let m = deref(m, "model")?;
        let x = matrix(values, n_rows, n_cols)?;
        if out_labels.is_null() {
            return Err(null("out_labels"));
        }
        let pred = m.0.predict_rows(x).map_err(core)?;
        let dst = std::slice::from_raw_parts_mut(out_labels, n_rows);
        for (d, p) in dst.iter_mut().zip(pred) {
            *d = p.as_u8();
        }
        Ok(())
    })
}

/// Support-vector count of an SVM; 0 for other models.
///
/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ts_model_n_support(m: *const TsModel) -> usize {
    m.as_ref().and_then(|m| m.0.n_support()).unwrap_or(0)
}

/// Serialise a model as JSON. Release the string with [`ts_string_free`].
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_model_to_json(m: *const TsModel, out: *mut *mut c_char) -> TsStatus {
    guard(|| {
        let m = deref(m, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = serde_json::to_string(&m.0).map_err(|e| core(e.into()))?;
        *out = CString::new(s)
            .map_err(|e| invalid(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Rebuild a model from [`ts_model_to_json`] output.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ts_model_from_json(
    json: *const c_char,
    out: *mut *mut TsModel,
) -> TsStatus {
    guard(|| {
        let s = c_str(json, "json")?;
        let m: ModelFile =
            serde_json::from_str(s).map_err(|e| (TsStatus::InvalidData, e.to_string()))?;
        put(out, TsModel(m))
    })
}

/// # Safety
/// `m` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ts_model_free(m: *mut TsModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn ts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, TsStatus::Panic);
        let msg = unsafe { CStr::from_ptr(ts_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
        assert_eq!(guard(|| Ok(())), TsStatus::Ok);
        assert!(ts_last_error().is_null());
    }
}
