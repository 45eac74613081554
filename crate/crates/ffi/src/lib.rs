//! C ABI over `cdf-core`.
//!
//! Every function returns a [`CdfStatus`] (or a plain value for infallible
//! accessors). On failure the message is kept per thread and can be read with
//! [`cdf_last_error`]. Handles are opaque and must be released with their
//! `_free` function. Panics never cross the boundary; they map to
//! `CDF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cdf_core::benchmark::BenchmarkConfig;
use cdf_core::clustering::{robust_distance, Algorithm};
use cdf_core::detection::DetectionVerdict;
use cdf_core::pipeline::{fit_pipeline, PipelineModel, Variant};
use cdf_core::telemetry::{generate_dataset, generate_labeled, GeneratorConfig, LabeledConfig};
use cdf_core::{CdfError, FeatureMatrix};
use ndarray::Array2;

pub const CDF_VARIANT_RAW: u32 = 0;
pub const CDF_VARIANT_EA: u32 = 1;
pub const CDF_VARIANT_PCA: u32 = 2;
pub const CDF_VARIANT_EA_PCA: u32 = 3;

pub const CDF_ALGORITHM_FCM: u32 = 0;
pub const CDF_ALGORITHM_PROBCP: u32 = 1;
pub const CDF_ALGORITHM_POSSCP: u32 = 2;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    InsufficientData = 4,
    ShapeMismatch = 5,
    MissingFeature = 6,
    DegenerateData = 7,
    InvalidData = 8,
    Io = 9,
    Parse = 10,
    EmptyResult = 11,
    Panic = 12,
}

/// Named telemetry matrix (row-major values).
pub struct CdfMatrix {
    inner: FeatureMatrix,
    names: Vec<CString>,
}

/// Fitted detection pipeline.
pub struct CdfPipeline {
    inner: PipelineModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

struct Failure(CdfStatus, String);

impl From<CdfError> for Failure {
    fn from(err: CdfError) -> Self {
        let status = match err.root() {
            CdfError::InvalidConfig(_) => CdfStatus::InvalidConfig,
            CdfError::InsufficientData(_) => CdfStatus::InsufficientData,
            CdfError::EmptyResult(_) => CdfStatus::EmptyResult,
            CdfError::ShapeMismatch { .. } => CdfStatus::ShapeMismatch,
            CdfError::MissingFeature(_) => CdfStatus::MissingFeature,
            CdfError::DegenerateData(_) => CdfStatus::DegenerateData,
            CdfError::InvalidData(_) => CdfStatus::InvalidData,
            CdfError::Io(_) => CdfStatus::Io,
            CdfError::Csv(_) | CdfError::Json(_) => CdfStatus::Parse,
            CdfError::Stage { .. } => CdfStatus::InvalidData,
        };
        Failure(status, err.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CdfStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(CdfStatus::InvalidArgument, message.into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CdfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            clear_error();
            CdfStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {message}"));
            CdfStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn deref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn variant_of(code: u32) -> Result<Variant, Failure> {
    match code {
        CDF_VARIANT_RAW => Ok(Variant::Raw),
        CDF_VARIANT_EA => Ok(Variant::Ea),
        CDF_VARIANT_PCA => Ok(Variant::Pca),
        CDF_VARIANT_EA_PCA => Ok(Variant::EaPca),
        other => Err(invalid(format!("unknown variant code {other}"))),
    }
}

fn algorithm_of(code: u32) -> Result<Algorithm, Failure> {
    match code {
        CDF_ALGORITHM_FCM => Ok(Algorithm::Fcm),
        CDF_ALGORITHM_PROBCP => Ok(Algorithm::ProbCp),
        CDF_ALGORITHM_POSSCP => Ok(Algorithm::PossCp),
        other => Err(invalid(format!("unknown algorithm code {other}"))),
    }
}

impl CdfMatrix {
    fn wrap(inner: FeatureMatrix) -> Result<Self, Failure> {
        let names = inner
            .names()
            .iter()
            .map(|n| CString::new(n.as_str()).map_err(|_| invalid("feature name contains NUL")))
            .collect::<Result<_, _>>()?;
        Ok(Self { inner, names })
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn cdf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Robust distance between `x` and `c`; `scale` may be NULL for unit scales.
///
/// # Safety
/// `x` and `c` (and `scale` if non-null) must point to `len` doubles; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdf_robust_distance(
    x: *const f64,
    c: *const f64,
    scale: *const f64,
    len: usize,
    out: *mut f64,
) -> CdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = slice(x, len, "x")?;
        let c = slice(c, len, "c")?;
        let ones;
        let scale = if scale.is_null() {
            ones = vec![1.0; len];
            &ones[..]
        } else {
            slice(scale, len, "scale")?
        };
        *out = robust_distance(x, c, scale)?;
        Ok(())
    })
}

/// Copies `rows * cols` row-major values into a new matrix. `names` may be
/// NULL, giving columns `x1..xN`; otherwise it holds `cols` C strings.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdf_matrix_new(
    values: *const f64,
    rows: usize,
    cols: usize,
    names: *const *const c_char,
    out: *mut *mut CdfMatrix,
) -> CdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| invalid("rows * cols overflows"))?;
        let data = slice(values, len, "values")?.to_vec();
        let array =
            Array2::from_shape_vec((rows, cols), data).map_err(|e| invalid(e.to_string()))?;
        let matrix = if names.is_null() {
            FeatureMatrix::with_prefix("x", array)
        } else {
            let names = slice(names, cols, "names")?
                .iter()
                .map(|&p| {
                    if p.is_null() {
                        return Err(null("names[i]"));
                    }
                    CStr::from_ptr(p)
                        .to_str()
                        .map(str::to_owned)
                        .map_err(|_| invalid("feature name is not UTF-8"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            FeatureMatrix::new(names, array)?
        };
        store(out, CdfMatrix::wrap(matrix)?);
        Ok(())
    })
}

/// # Safety
/// `matrix` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cdf_matrix_rows(matrix: *const CdfMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.inner.n_samples())
}

/// # Safety
/// `matrix` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cdf_matrix_cols(matrix: *const CdfMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.inner.n_features())
}

/// Name of column `index`, or NULL if out of range. Owned by the matrix.
///
/// # Safety
/// `matrix` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cdf_matrix_column_name(
    matrix: *const CdfMatrix,
    index: usize,
) -> *const c_char {
    matrix
        .as_ref()
        .and_then(|m| m.names.get(index))
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Copies the row-major values into `out`, which must hold exactly
/// `rows * cols` doubles.
///
/// # Safety
/// `out` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cdf_matrix_copy_values(
    matrix: *const CdfMatrix,
    out: *mut f64,
    len: usize,
) -> CdfStatus {
    guard(|| {
        let m = &deref(matrix, "matrix")?.inner;
        let expected = m.n_samples() * m.n_features();
        if len != expected {
            return Err(CdfError::ShapeMismatch {
                expected,
                found: len,
            }
            .into());
        }
        let dst = slice_mut(out, len, "out")?;
        for (d, v) in dst.iter_mut().zip(m.values().iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `matrix` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdf_matrix_free(matrix: *mut CdfMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Nominal telemetry from the default generator settings.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdf_generate(
    samples: usize,
    seed: u64,
    out: *mut *mut CdfMatrix,
) -> CdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = GeneratorConfig {
            samples,
            ..GeneratorConfig::default()
        };
        store(out, CdfMatrix::wrap(generate_dataset(&config, seed)?)?);
        Ok(())
    })
}

/// Labeled telemetry (half drifted by default); `labels` receives one 0/1
/// byte per sample.
///
/// # Safety
/// `labels` must be writable for `samples` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdf_generate_labeled(
    samples: usize,
    seed: u64,
    labels: *mut u8,
    out: *mut *mut CdfMatrix,
) -> CdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = GeneratorConfig {
            samples,
            ..GeneratorConfig::default()
        };
        let data = generate_labeled(&config, &LabeledConfig::default(), seed)?;
        slice_mut(labels, samples, "labels")?.copy_from_slice(&data.labels);
        store(out, CdfMatrix::wrap(data.matrix)?);
        Ok(())
    })
}

/// Fits a pipeline on `matrix` with 0/1 `labels`, using the benchmark stage
/// settings (70/30 split, 95 % PCA variance, two clusters).
///
/// # Safety
/// `labels` must hold one byte per matrix row; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdf_pipeline_fit(
    matrix: *const CdfMatrix,
    labels: *const u8,
    n_labels: usize,
    variant: u32,
    algorithm: u32,
    seed: u64,
    out: *mut *mut CdfPipeline,
) -> CdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = &deref(matrix, "matrix")?.inner;
        let labels = slice(labels, n_labels, "labels")?;
        let stages = BenchmarkConfig::bundled().stages;
        let fit = fit_pipeline(
            m,
            labels,
            variant_of(variant)?,
            algorithm_of(algorithm)?,
            &stages,
            seed,
        )?;
        store(out, CdfPipeline { inner: fit.model });
        Ok(())
    })
}

/// Fits a pipeline on the bundled benchmark data set.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdf_pipeline_fit_benchmark(
    variant: u32,
    algorithm: u32,
    seed: u64,
    out: *mut *mut CdfPipeline,
) -> CdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let bench = BenchmarkConfig::bundled();
        let data = bench.dataset()?;
        let fit = fit_pipeline(
            &data.matrix,
            &data.labels,
            variant_of(variant)?,
            algorithm_of(algorithm)?,
            &bench.stages,
            seed,
        )?;
        store(out, CdfPipeline { inner: fit.model });
        Ok(())
    })
}

/// Number of clusters, or 0 for NULL.
///
/// # Safety
/// `pipeline` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn cdf_pipeline_clusters(pipeline: *const CdfPipeline) -> usize {
    pipeline
        .as_ref()
        .map_or(0, |p| p.inner.cluster.n_clusters())
}

/// Writes 1 for each row assigned to the anomaly cluster, else 0.
///
/// # Safety
/// `out` must be writable for `len` bytes, `len` equal to the row count.
#[no_mangle]
pub unsafe extern "C" fn cdf_pipeline_classify(
    pipeline: *const CdfPipeline,
    matrix: *const CdfMatrix,
    out: *mut u8,
    len: usize,
) -> CdfStatus {
    guard(|| {
        let p = &deref(pipeline, "pipeline")?.inner;
        let m = &deref(matrix, "matrix")?.inner;
        if len != m.n_samples() {
            return Err(CdfError::ShapeMismatch {
                expected: m.n_samples(),
                found: len,
            }
            .into());
        }
        let labels = p.classify(m)?;
        slice_mut(out, len, "out")?.copy_from_slice(&labels);
        Ok(())
    })
}

/// Row-major `rows * clusters` membership weights.
///
/// # Safety
/// `out` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cdf_pipeline_memberships(
    pipeline: *const CdfPipeline,
    matrix: *const CdfMatrix,
    out: *mut f64,
    len: usize,
) -> CdfStatus {
    guard(|| {
        let p = &deref(pipeline, "pipeline")?.inner;
        let m = &deref(matrix, "matrix")?.inner;
        let expected = m.n_samples() * p.cluster.n_clusters();
        if len != expected {
            return Err(CdfError::ShapeMismatch {
                expected,
                found: len,
            }
            .into());
        }
        let weights = p.memberships(m)?.weights;
        for (d, w) in slice_mut(out, len, "out")?.iter_mut().zip(weights.iter()) {
            *d = *w;
        }
        Ok(())
    })
}

/// Classifies the rows as consecutive inspections and smooths them over a
/// trailing `window`. `states` (nullable) receives 1 for nOK, 0 for OK;
/// `transition` receives the first nOK index or -1.
///
/// # Safety
/// `states`, if non-null, must be writable for `len` bytes; `transition` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn cdf_detect_stream(
    pipeline: *const CdfPipeline,
    matrix: *const CdfMatrix,
    window: usize,
    states: *mut u8,
    len: usize,
    transition: *mut i64,
) -> CdfStatus {
    guard(|| {
        if transition.is_null() {
            return Err(null("transition"));
        }
        let p = &deref(pipeline, "pipeline")?.inner;
        let m = &deref(matrix, "matrix")?.inner;
        if m.n_samples() == 0 {
            return Err(CdfError::InsufficientData("empty inspection stream".into()).into());
        }
        let verdict = DetectionVerdict::from_raw(p.classify(m)?, window)?;
        if !states.is_null() {
            if len != verdict.len() {
                return Err(CdfError::ShapeMismatch {
                    expected: verdict.len(),
                    found: len,
                }
                .into());
            }
            let dst = slice_mut(states, len, "states")?;
            for (d, s) in dst.iter_mut().zip(&verdict.states) {
                *d = u8::from(*s == cdf_core::detection::State::NotOk);
            }
        }
        *transition = verdict.transition_index.map_or(-1, |t| t as i64);
        Ok(())
    })
}

/// Serializes the pipeline; release the string with `cdf_string_free`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdf_pipeline_to_json(
    pipeline: *const CdfPipeline,
    out: *mut *mut c_char,
) -> CdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = deref(pipeline, "pipeline")?.inner.to_json()?;
        *out = CString::new(text)
            .map_err(|_| invalid("JSON contains NUL"))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdf_pipeline_from_json(
    json: *const c_char,
    out: *mut *mut CdfPipeline,
) -> CdfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| invalid("JSON is not UTF-8"))?;
        store(
            out,
            CdfPipeline {
                inner: PipelineModel::from_json(text)?,
            },
        );
        Ok(())
    })
}

/// # Safety
/// `text` must come from `cdf_pipeline_to_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdf_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}

/// # Safety
/// `pipeline` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdf_pipeline_free(pipeline: *mut CdfPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}
