//! C ABI over the `vie` library.
//!
//! Datasets and models cross the boundary as opaque handles created by a
//! `*_new`/`*_load`/`*_train` call and released with the matching `*_free`.
//! Every fallible call returns a [`VieStatus`]; on failure the message is
//! kept per thread and read with [`vie_last_error`]. Panics are caught at the
//! boundary and reported as [`VieStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use vie::autodiff::Tensor;
use vie::cli::config::RunConfig;
use vie::cli::io::{read_dataset, write_dataset};
use vie::dataset::LabeledDataset;
use vie::datagen::{gen_longtailed, gen_semisynthetic, LongTailConfig, SemiSynthConfig};
use vie::error::VieError;
use vie::metrics::{auprc, roc_auc};
use vie::trainer::{checkpoint, train, TrainConfig, TrainedModel, VariantSpec};

/// Result of every fallible call. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VieStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A precondition on sizes, ranges or names was broken.
    Contract = 3,
    /// A value fell outside an operation's domain.
    Domain = 4,
    /// Training produced a non-finite quantity.
    Training = 5,
    /// Feature width or class count disagrees between model and data.
    Mismatch = 6,
    /// Malformed text input (CSV, checkpoint, config).
    Parse = 7,
    Io = 8,
    /// A Rust panic was caught at the boundary.
    Panic = 9,
}

/// Labeled rows: features, labels and the optional oracle risk.
pub struct VieDataset {
    inner: LabeledDataset,
}

/// A trained model.
pub struct VieModel {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(VieStatus, String);

impl From<VieError> for Failure {
    fn from(e: VieError) -> Self {
        let status = match &e {
            VieError::Contract(_) => VieStatus::Contract,
            VieError::Domain(_) => VieStatus::Domain,
            VieError::Training { .. } => VieStatus::Training,
            VieError::Mismatch(_) => VieStatus::Mismatch,
            VieError::Parse { .. } => VieStatus::Parse,
            VieError::Io(_) => VieStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn null(what: &str) -> Failure {
    Failure(VieStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, records any failure and maps it to a status.
fn guard(f: impl FnOnce() -> Outcome) -> VieStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            VieStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside the vie library");
            VieStatus::Panic
        }
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Failure(VieStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(null("output handle pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn matrix(data: *const f64, rows: usize, cols: usize) -> Result<Tensor, Failure> {
    if data.is_null() {
        return Err(null("feature matrix"));
    }
    let len = rows.checked_mul(cols).ok_or_else(|| Failure(VieStatus::Contract, "matrix size overflows".into()))?;
    Ok(Tensor::new(vec![rows, cols], std::slice::from_raw_parts(data, len).to_vec())?)
}

unsafe fn label_slice(labels: *const u32, n: usize) -> Result<Vec<usize>, Failure> {
    if labels.is_null() {
        return Err(null("labels"));
    }
    Ok(std::slice::from_raw_parts(labels, n).iter().map(|&l| l as usize).collect())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vie_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call into the library on this
/// thread.
#[no_mangle]
pub extern "C" fn vie_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// ------------------------------------------------------------------ data

/// Generates a binary dataset. `generator` is `"longtailed"` or
/// `"semisynthetic"`; other settings are the library defaults.
///
/// # Safety
/// `generator` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_generate(
    generator: *const c_char,
    n: usize,
    rate: f64,
    seed: u64,
    out: *mut *mut VieDataset,
) -> VieStatus {
    guard(|| {
        let data = match text(generator, "generator name")? {
            "longtailed" => gen_longtailed(&LongTailConfig { n, rate, seed, ..LongTailConfig::default() })?,
            "semisynthetic" => gen_semisynthetic(&SemiSynthConfig { n, rate, seed, ..SemiSynthConfig::default() })?,
            other => {
                return Err(Failure(
                    VieStatus::Contract,
                    format!("unknown generator '{other}'; expected longtailed or semisynthetic"),
                ))
            }
        };
        put(out, VieDataset { inner: data })
    })
}

/// Builds a dataset from a row-major `rows × cols` feature matrix and
/// `rows` class labels.
///
/// # Safety
/// `features` must hold `rows * cols` values, `labels` `rows` values.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_from_arrays(
    features: *const f64,
    rows: usize,
    cols: usize,
    labels: *const u32,
    out: *mut *mut VieDataset,
) -> VieStatus {
    guard(|| {
        let x = matrix(features, rows, cols)?;
        let y = label_slice(labels, rows)?;
        put(out, VieDataset { inner: LabeledDataset::new(x, y, None)? })
    })
}

/// Reads a dataset CSV in the format written by `vie generate`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_read_csv(path: *const c_char, out: *mut *mut VieDataset) -> VieStatus {
    guard(|| {
        let data = read_dataset(&PathBuf::from(text(path, "path")?))?;
        put(out, VieDataset { inner: data })
    })
}

/// # Safety
/// `data` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_write_csv(data: *const VieDataset, path: *const c_char) -> VieStatus {
    guard(|| {
        let d = borrow(data, "dataset")?;
        Ok(write_dataset(&PathBuf::from(text(path, "path")?), &d.inner)?)
    })
}

/// Stratified 6:2:2 split into three new handles.
///
/// # Safety
/// `data` must be a live handle and the three outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_split(
    data: *const VieDataset,
    seed: u64,
    train: *mut *mut VieDataset,
    valid: *mut *mut VieDataset,
    test: *mut *mut VieDataset,
) -> VieStatus {
    guard(|| {
        if train.is_null() || valid.is_null() || test.is_null() {
            return Err(null("output handle pointer"));
        }
        let (a, b, c) = borrow(data, "dataset")?.inner.split_622(seed)?;
        put(train, VieDataset { inner: a })?;
        put(valid, VieDataset { inner: b })?;
        put(test, VieDataset { inner: c })
    })
}

/// Row count; 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_rows(data: *const VieDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.len())
}

/// Feature count; 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_cols(data: *const VieDataset) -> usize {
    data.as_ref().map_or(0, |d| d.inner.dim())
}

/// Fraction of rows with label 1.
///
/// # Safety
/// `data` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_event_rate(data: *const VieDataset, out: *mut f64) -> VieStatus {
    guard(|| {
        let d = borrow(data, "dataset")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = d.inner.event_rate();
        Ok(())
    })
}

/// Copies the features (row-major) into `out`, which must hold
/// `rows * cols` values.
///
/// # Safety
/// `data` must be a live handle and `out` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_features(data: *const VieDataset, out: *mut f64, len: usize) -> VieStatus {
    guard(|| {
        let d = borrow(data, "dataset")?;
        let src = d.inner.features.data();
        if out.is_null() {
            return Err(null("output buffer"));
        }
        if len != src.len() {
            return Err(Failure(VieStatus::Contract, format!("buffer holds {len} values, features have {}", src.len())));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), out, len);
        Ok(())
    })
}

/// Copies the labels into `out`, which must hold `rows` values.
///
/// # Safety
/// `data` must be a live handle and `out` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_labels(data: *const VieDataset, out: *mut u32, len: usize) -> VieStatus {
    guard(|| {
        let d = borrow(data, "dataset")?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        if len != d.inner.len() {
            return Err(Failure(VieStatus::Contract, format!("buffer holds {len} labels, dataset has {}", d.inner.len())));
        }
        for (i, &l) in d.inner.labels.iter().enumerate() {
            *out.add(i) = l as u32;
        }
        Ok(())
    })
}

/// Releases a dataset handle; null is ignored.
///
/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vie_dataset_free(data: *mut VieDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

// ----------------------------------------------------------------- model

/// Trains a variant (`"vae"`, `"vae-gpd"`, `"iaf-gpd"`, `"fenchel-gpd"` or
/// `"vie"`). `config` is null or `key = value` lines with the training keys
/// of `vie train`, e.g. `"epochs = 5\nseed = 3"`.
///
/// # Safety
/// Handles must be live, strings NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vie_model_train(
    train_data: *const VieDataset,
    valid_data: *const VieDataset,
    variant: *const c_char,
    config: *const c_char,
    out: *mut *mut VieModel,
) -> VieStatus {
    guard(|| {
        let tr = borrow(train_data, "training dataset")?;
        let va = borrow(valid_data, "validation dataset")?;
        let variant = VariantSpec::preset(text(variant, "variant")?)?;
        let mut c = TrainConfig::default();
        if !config.is_null() {
            for (k, v) in RunConfig::parse_text(text(config, "config")?)?.pairs() {
                c.set(k, v)?;
            }
        }
        c.validate()?;
        put(out, VieModel { inner: train(&tr.inner, &va.inner, variant, &c)? })
    })
}

/// Loads a checkpoint written by [`vie_model_save`] or `vie train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vie_model_load(path: *const c_char, out: *mut *mut VieModel) -> VieStatus {
    guard(|| {
        let m = checkpoint::load(&PathBuf::from(text(path, "path")?))?;
        put(out, VieModel { inner: m })
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vie_model_save(model: *const VieModel, path: *const c_char) -> VieStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        Ok(checkpoint::save(&m.inner, &PathBuf::from(text(path, "path")?))?)
    })
}

/// Feature count the model expects; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vie_model_input_dim(model: *const VieModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.input_dim())
}

/// Number of classes; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vie_model_classes(model: *const VieModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.classes())
}

/// Class probabilities for `rows` raw feature rows, written row-major into
/// `out` (`rows * classes` values), averaged over `draws` posterior draws.
/// Deterministic for a given `seed`.
///
/// # Safety
/// `features` must hold `rows * cols` values and `out` hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn vie_model_predict_proba(
    model: *const VieModel,
    features: *const f64,
    rows: usize,
    cols: usize,
    seed: u64,
    draws: usize,
    out: *mut f64,
    len: usize,
) -> VieStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        if cols != m.inner.input_dim() {
            return Err(Failure(
                VieStatus::Mismatch,
                format!("model expects {} features, got {cols}", m.inner.input_dim()),
            ));
        }
        let x = matrix(features, rows, cols)?;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        let want = rows * m.inner.classes();
        if len != want {
            return Err(Failure(VieStatus::Contract, format!("buffer holds {len} values, prediction needs {want}")));
        }
        let proba = m.inner.predict_proba(&x, seed, draws)?;
        ptr::copy_nonoverlapping(proba.data().as_ptr(), out, want);
        Ok(())
    })
}

/// Releases a model handle; null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vie_model_free(model: *mut VieModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// --------------------------------------------------------------- metrics

unsafe fn metric(
    f: fn(&[f64], &[usize]) -> vie::error::Result<f64>,
    scores: *const f64,
    labels: *const u32,
    n: usize,
    out: *mut f64,
) -> VieStatus {
    guard(|| {
        if scores.is_null() || out.is_null() {
            return Err(null("scores or output pointer"));
        }
        let s = std::slice::from_raw_parts(scores, n);
        *out = f(s, &label_slice(labels, n)?)?;
        Ok(())
    })
}

/// Area under the ROC curve for binary labels, ties counting one half.
///
/// # Safety
/// `scores` and `labels` must hold `n` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn vie_roc_auc(scores: *const f64, labels: *const u32, n: usize, out: *mut f64) -> VieStatus {
    metric(roc_auc, scores, labels, n, out)
}

/// Average precision with tied scores entering together.
///
/// # Safety
/// `scores` and `labels` must hold `n` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn vie_auprc(scores: *const f64, labels: *const u32, n: usize, out: *mut f64) -> VieStatus {
    metric(auprc, scores, labels, n, out)
}
