//! C ABI over `finedesign`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `fd_*_free`. Every fallible call returns a status
//! code (the same values as the CLI exit codes) and writes its results through
//! out-pointers; on failure `fd_last_error_message` describes the error.
//! Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use finedesign::ablation::{
    render_report, run_ablation, AblationConfig, AblationReport, ReportFormat, RunOptions,
};
use finedesign::design::{apply_design, design_name, DesignConfig};
use finedesign::manifest::{load_manifest, save_manifest, Manifest};
use finedesign::metrics::evaluate;
use finedesign::synthgen::{generate_test, generate_train, SynthConfig};
use finedesign::trainer::{train, TrainConfig, TrainedModel};
use finedesign::Error;

/// Success.
pub const FD_OK: i32 = 0;
/// Invalid input: bad argument, schema violation or parse failure.
pub const FD_ERR_VALIDATION: i32 = 1;
/// File could not be read or written.
pub const FD_ERR_IO: i32 = 2;
/// Training diverged or produced non-finite values.
pub const FD_ERR_NUMERICAL: i32 = 3;
/// A Rust panic was caught at the boundary.
pub const FD_ERR_INTERNAL: i32 = 4;

/// Opaque manifest handle.
pub struct FdManifest(Manifest);
/// Opaque trained-model handle.
pub struct FdModel(TrainedModel);
/// Opaque ablation-report handle.
pub struct FdReport(AblationReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Lib(Error),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

fn guard(body: impl FnOnce() -> FfiResult<()>) -> i32 {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FD_OK,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            e.exit_code()
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            FD_ERR_VALIDATION
        }
        Err(_) => {
            set_error("internal panic".into());
            FD_ERR_INTERNAL
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Arg(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure::Arg(format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| Failure::Arg(format!("{what} is null")))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next `fd_*` call on the same thread.
#[no_mangle]
pub extern "C" fn fd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a JSONL manifest.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fd_manifest_load(
    path: *const c_char,
    out_manifest: *mut *mut FdManifest,
) -> i32 {
    guard(|| {
        let slot = out(out_manifest, "out_manifest")?;
        let m = load_manifest(str_arg(path, "path")?)?;
        *slot = boxed(FdManifest(m));
        Ok(())
    })
}

/// Validates and writes a manifest as JSONL.
///
/// # Safety
/// `manifest` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fd_manifest_save(manifest: *const FdManifest, path: *const c_char) -> i32 {
    guard(|| {
        let m = handle(manifest, "manifest")?;
        save_manifest(&m.0, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of samples in the manifest (0 for NULL).
///
/// # Safety
/// `manifest` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fd_manifest_len(manifest: *const FdManifest) -> usize {
    manifest.as_ref().map_or(0, |m| m.0.samples.len())
}

/// Number of samples in the named category, or in the category with that
/// abbreviation.
///
/// # Safety
/// `manifest` must be a live handle; `category` a NUL-terminated string;
/// `out_count` writable.
#[no_mangle]
pub unsafe extern "C" fn fd_manifest_category_count(
    manifest: *const FdManifest,
    category: *const c_char,
    out_count: *mut usize,
) -> i32 {
    guard(|| {
        let m = &handle(manifest, "manifest")?.0;
        let slot = out(out_count, "out_count")?;
        let query = str_arg(category, "category")?;
        let name = m
            .taxonomy
            .resolve(query)
            .map(|c| c.name.clone())
            .ok_or_else(|| Failure::Arg(format!("unknown category `{query}`")))?;
        *slot = m.summarize().get(&name).unwrap_or(0);
        Ok(())
    })
}

/// Per-category counts as a JSON object; release with `fd_string_free`.
///
/// # Safety
/// `manifest` must be a live handle; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn fd_manifest_summary_json(
    manifest: *const FdManifest,
    out_json: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let m = &handle(manifest, "manifest")?.0;
        let slot = out(out_json, "out_json")?;
        let json = serde_json::to_string(&m.summarize()).expect("counts serialize");
        *slot = CString::new(json).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `manifest` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fd_manifest_free(manifest: *mut FdManifest) {
    if !manifest.is_null() {
        drop(Box::from_raw(manifest));
    }
}

/// Generates the synthetic train and test manifests. `config_json` may be NULL
/// for the default configuration.
///
/// # Safety
/// `config_json` must be NULL or NUL-terminated; out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn fd_synth_generate(
    config_json: *const c_char,
    out_train: *mut *mut FdManifest,
    out_test: *mut *mut FdManifest,
) -> i32 {
    guard(|| {
        let train_slot = out(out_train, "out_train")?;
        let test_slot = out(out_test, "out_test")?;
        let cfg = match opt_str_arg(config_json, "config_json")? {
            Some(text) => SynthConfig::from_json(text)?,
            None => SynthConfig::default(),
        };
        let train_m = generate_train(&cfg)?;
        let test_m = generate_test(&cfg)?;
        *train_slot = boxed(FdManifest(train_m));
        *test_slot = boxed(FdManifest(test_m));
        Ok(())
    })
}

/// Applies a design and trains a model. `extract` is a comma-separated list of
/// category names or abbreviations (NULL or empty for the original design);
/// `train_config_json` may be NULL for defaults.
///
/// # Safety
/// `manifest` must be a live handle; strings NULL or NUL-terminated;
/// `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn fd_train(
    manifest: *const FdManifest,
    extract: *const c_char,
    train_config_json: *const c_char,
    out_model: *mut *mut FdModel,
) -> i32 {
    guard(|| {
        let m = &handle(manifest, "manifest")?.0;
        let slot = out(out_model, "out_model")?;
        let names: Vec<&str> = opt_str_arg(extract, "extract")?
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        let design = DesignConfig::resolve(&m.taxonomy, &names)?;
        let cfg = match opt_str_arg(train_config_json, "train_config_json")? {
            Some(text) => TrainConfig::from_json(text)?,
            None => TrainConfig::default(),
        };
        let dataset = apply_design(m, &design)?;
        let mut model = train(&dataset, &cfg)?;
        model.design_name = Some(design_name(&design, &m.taxonomy));
        *slot = boxed(FdModel(model));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn fd_model_load(path: *const c_char, out_model: *mut *mut FdModel) -> i32 {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        *slot = boxed(FdModel(TrainedModel::load(str_arg(path, "path")?)?));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fd_model_save(model: *const FdModel, path: *const c_char) -> i32 {
    guard(|| {
        handle(model, "model")?.0.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of output classes (0 for NULL).
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fd_model_num_classes(model: *const FdModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.num_classes())
}

/// Expected feature dimension (0 for NULL).
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fd_model_feature_dim(model: *const FdModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.feature_dim())
}

/// Classifies one feature vector. Class indices are 0 POSITIVE, 1 NEGATIVE,
/// 2 UNCERTAIN. When `out_probabilities` is non-NULL it receives
/// `probabilities_len` entries, which must equal the class count.
///
/// # Safety
/// `features` must point to `features_len` doubles; `out_probabilities` to
/// `probabilities_len` writable doubles or be NULL; `out_class` writable.
#[no_mangle]
pub unsafe extern "C" fn fd_model_predict(
    model: *const FdModel,
    features: *const f64,
    features_len: usize,
    out_class: *mut usize,
    out_probabilities: *mut f64,
    probabilities_len: usize,
) -> i32 {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let slot = out(out_class, "out_class")?;
        if features.is_null() {
            return Err(Failure::Arg("features is null".into()));
        }
        let x = std::slice::from_raw_parts(features, features_len);
        let pred = m.predict(x)?;
        if !out_probabilities.is_null() {
            if probabilities_len != pred.probabilities.len() {
                return Err(Failure::Arg(format!(
                    "probability buffer holds {probabilities_len}, model has {} classes",
                    pred.probabilities.len()
                )));
            }
            std::slice::from_raw_parts_mut(out_probabilities, probabilities_len)
                .copy_from_slice(&pred.probabilities);
        }
        *slot = pred.class_index;
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fd_model_free(model: *mut FdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Test-set metrics of one model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FdEvalMetrics {
    /// Fraction of true negatives predicted positive.
    pub far: f64,
    pub positive_recall: f64,
    /// NaN when the model predicted no positives.
    pub positive_precision: f64,
}

/// Scores `model` on a clear-only test manifest.
///
/// # Safety
/// Handles must be live; `out_metrics` writable.
#[no_mangle]
pub unsafe extern "C" fn fd_evaluate(
    model: *const FdModel,
    test: *const FdManifest,
    out_metrics: *mut FdEvalMetrics,
) -> i32 {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let t = &handle(test, "test")?.0;
        let slot = out(out_metrics, "out_metrics")?;
        let r = evaluate(m, t)?;
        *slot = FdEvalMetrics {
            far: r.far,
            positive_recall: r.positive_recall,
            positive_precision: r.positive_precision.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Runs the ablation described by a config file. `workers` = 0 uses all cores;
/// the result does not depend on it.
///
/// # Safety
/// `config_path` must be NUL-terminated; `out_report` writable.
#[no_mangle]
pub unsafe extern "C" fn fd_ablation_run(
    config_path: *const c_char,
    workers: usize,
    out_report: *mut *mut FdReport,
) -> i32 {
    guard(|| {
        let slot = out(out_report, "out_report")?;
        let cfg = AblationConfig::load(str_arg(config_path, "config_path")?)?;
        let report = run_ablation(
            &cfg,
            RunOptions {
                workers,
                log: false,
            },
        )?;
        *slot = boxed(FdReport(report));
        Ok(())
    })
}

/// Loads an ablation report written as JSON.
///
/// # Safety
/// `path` must be NUL-terminated; `out_report` writable.
#[no_mangle]
pub unsafe extern "C" fn fd_report_load(
    path: *const c_char,
    out_report: *mut *mut FdReport,
) -> i32 {
    guard(|| {
        let slot = out(out_report, "out_report")?;
        *slot = boxed(FdReport(AblationReport::load(str_arg(path, "path")?)?));
        Ok(())
    })
}

/// Renders a report as `markdown`, `csv` or `json`; release the result with
/// `fd_string_free`.
///
/// # Safety
/// `report` must be a live handle; `format` NUL-terminated; `out_text` writable.
#[no_mangle]
pub unsafe extern "C" fn fd_report_render(
    report: *const FdReport,
    format: *const c_char,
    out_text: *mut *mut c_char,
) -> i32 {
    guard(|| {
        let r = &handle(report, "report")?.0;
        let slot = out(out_text, "out_text")?;
        let format: ReportFormat = str_arg(format, "format")?.parse()?;
        let text = render_report(r, format);
        *slot = CString::new(text).expect("report has no NUL").into_raw();
        Ok(())
    })
}

/// Mean FAR of the row with the given design name; NaN when every run of that
/// design failed.
///
/// # Safety
/// `report` must be a live handle; `design_name` NUL-terminated; `out_far` writable.
#[no_mangle]
pub unsafe extern "C" fn fd_report_mean_far(
    report: *const FdReport,
    design_name: *const c_char,
    out_far: *mut f64,
) -> i32 {
    guard(|| {
        let r = &handle(report, "report")?.0;
        let slot = out(out_far, "out_far")?;
        let name = str_arg(design_name, "design_name")?;
        let row = r
            .row(name)
            .ok_or_else(|| Failure::Arg(format!("no design named `{name}`")))?;
        *slot = row.mean_far.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fd_report_free(report: *mut FdReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
