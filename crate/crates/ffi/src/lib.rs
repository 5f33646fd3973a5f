//! C ABI over `pavi-core`.
//!
//! Conventions:
//! - every fallible call returns a `PaviStatus`; on failure the message is
//!   available from `pavi_last_error` on the same thread until the next
//!   failing call
//! - strings in are NUL-terminated UTF-8; strings out are owned by the
//!   caller and released with `pavi_string_free`
//! - `PaviPipeline` is opaque; create it with `pavi_pipeline_open` and
//!   release it with `pavi_pipeline_free`. A pipeline may be shared across
//!   threads for the read-only calls below.
//! - panics never cross the boundary; they surface as `PAVI_STATUS_PANIC`

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pavi_core::config::{build_pipeline, PipelineConfig};
use pavi_core::corpus::ProductRecord;
use pavi_core::embedding::HashedNgramEncoder;
use pavi_core::evaluation::{micro_scores, EvalInstance};
use pavi_core::generation::{parse_completion, Pipeline, PipelineParams};
use pavi_core::taxonomy::CategoryId;
use pavi_core::{Error, ErrorClass};

/// Output dimension of the built-in encoder.
pub const PAVI_BUILTIN_DIM: usize = 256;
const _: () = assert!(PAVI_BUILTIN_DIM == pavi_core::embedding::BUILTIN_DIM);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaviStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Input = 4,
    Stage = 5,
    BufferSize = 6,
    Panic = 7,
}

pub struct PaviPipeline {
    inner: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(PaviStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.class() {
            ErrorClass::Config => PaviStatus::Config,
            ErrorClass::Input => PaviStatus::Input,
            ErrorClass::Stage => PaviStatus::Stage,
        };
        Failure(status, e.to_string())
    }
}

fn json_failure(e: serde_json::Error) -> Failure {
    Failure(PaviStatus::Input, format!("invalid JSON: {e}"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PaviStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PaviStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            PaviStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string valid for the call.
unsafe fn input_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure(PaviStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| Failure(PaviStatus::InvalidUtf8, format!("{name}: {e}")))
}

/// # Safety
/// `out` must be null or valid for one pointer write.
unsafe fn output_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(PaviStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(value).map_err(|_| Failure(PaviStatus::Input, "output contains a NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// # Safety
/// `pipeline` must be null or a live handle from `pavi_pipeline_open`.
unsafe fn pipeline_ref<'a>(pipeline: *const PaviPipeline) -> Result<&'a Pipeline, Failure> {
    pipeline
        .as_ref()
        .map(|p| &p.inner)
        .ok_or_else(|| Failure(PaviStatus::NullArgument, "pipeline is null".into()))
}

/// Library version; static storage, never freed.
#[no_mangle]
pub extern "C" fn pavi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn pavi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pavi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a pipeline configuration file and builds both indexes in memory.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn pavi_pipeline_open(config_path: *const c_char, out: *mut *mut PaviPipeline) -> PaviStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(PaviStatus::NullArgument, "output pointer is null".into()));
        }
        let path = input_str(config_path, "config_path")?;
        let config = PipelineConfig::load(Path::new(path))?;
        let (inner, _) = build_pipeline(&config)?;
        *out = Box::into_raw(Box::new(PaviPipeline { inner }));
        Ok(())
    })
}

/// Releases a pipeline. Null is ignored.
///
/// # Safety
/// `pipeline` must be null or a handle from `pavi_pipeline_open` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pavi_pipeline_free(pipeline: *mut PaviPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Predicts one product given as a corpus JSON record. Writes
/// `{"product_id", "predictions", "trace"}` to `out`.
///
/// # Safety
/// Pointers must be valid as described in the module conventions.
#[no_mangle]
pub unsafe extern "C" fn pavi_pipeline_predict_json(
    pipeline: *const PaviPipeline,
    product_json: *const c_char,
    k: usize,
    m: usize,
    out: *mut *mut c_char,
) -> PaviStatus {
    guard(|| {
        let pipeline = pipeline_ref(pipeline)?;
        let record: ProductRecord = serde_json::from_str(input_str(product_json, "product_json")?).map_err(json_failure)?;
        let product = record.into_product(&pipeline.taxonomy)?;
        let run = pipeline.predict(&product, PipelineParams { k, m })?;
        let value = serde_json::json!({
            "product_id": run.product_id,
            "predictions": run.prediction.to_map(),
            "trace": run.trace,
        });
        output_string(out, value.to_string())
    })
}

/// Assembles the prompt for one product without calling the generator.
///
/// # Safety
/// Pointers must be valid as described in the module conventions.
#[no_mangle]
pub unsafe extern "C" fn pavi_pipeline_prompt(
    pipeline: *const PaviPipeline,
    product_json: *const c_char,
    k: usize,
    m: usize,
    out: *mut *mut c_char,
) -> PaviStatus {
    guard(|| {
        let pipeline = pipeline_ref(pipeline)?;
        let record: ProductRecord = serde_json::from_str(input_str(product_json, "product_json")?).map_err(json_failure)?;
        let product = record.into_product(&pipeline.taxonomy)?;
        let (_, _, bundle) = pipeline.prepare(&product, PipelineParams { k, m })?;
        output_string(out, bundle.rendered)
    })
}

/// Parses a raw completion against a category's attribute schema. Writes
/// `{"predictions", "diagnostics"}` to `out`.
///
/// # Safety
/// Pointers must be valid as described in the module conventions.
#[no_mangle]
pub unsafe extern "C" fn pavi_pipeline_parse_completion(
    pipeline: *const PaviPipeline,
    category: *const c_char,
    completion: *const c_char,
    out: *mut *mut c_char,
) -> PaviStatus {
    guard(|| {
        let pipeline = pipeline_ref(pipeline)?;
        let category = CategoryId::new(input_str(category, "category")?)?;
        let raw = input_str(completion, "completion")?;
        let schema: Vec<_> = pipeline
            .taxonomy
            .attribute_set(category.as_str())?
            .into_iter()
            .cloned()
            .collect();
        let (prediction, diagnostics) = parse_completion(raw, &schema, &pipeline.taxonomy, &category);
        let value = serde_json::json!({ "predictions": prediction.to_map(), "diagnostics": diagnostics });
        output_string(out, value.to_string())
    })
}

/// Encodes `text` with the built-in encoder into `out[0..len]`; `len` must
/// equal `PAVI_BUILTIN_DIM`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pavi_encode_builtin(text: *const c_char, out: *mut f64, len: usize) -> PaviStatus {
    guard(|| {
        let text = input_str(text, "text")?;
        if out.is_null() {
            return Err(Failure(PaviStatus::NullArgument, "output buffer is null".into()));
        }
        if len != PAVI_BUILTIN_DIM {
            return Err(Failure(
                PaviStatus::BufferSize,
                format!("buffer holds {len} values, encoder emits {PAVI_BUILTIN_DIM}"),
            ));
        }
        let v = HashedNgramEncoder::default().encode_one(text);
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(v.components());
        Ok(())
    })
}

/// Scores a JSON array of evaluation instances
/// (`{product_id, attribute, ground_truth, outcome, candidates?}`) and
/// writes the report to `out`.
///
/// # Safety
/// Pointers must be valid as described in the module conventions.
#[no_mangle]
pub unsafe extern "C" fn pavi_micro_scores_json(instances_json: *const c_char, out: *mut *mut c_char) -> PaviStatus {
    guard(|| {
        let instances: Vec<EvalInstance> =
            serde_json::from_str(input_str(instances_json, "instances_json")?).map_err(json_failure)?;
        let report = micro_scores(&instances)?;
        output_string(out, serde_json::to_string(&report).expect("report serializes"))
    })
}
