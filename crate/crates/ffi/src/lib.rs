//! C ABI for spanconf.
//!
//! Every fallible function returns a [`SpanconfStatus`]. On failure the
//! message is available from [`spanconf_last_error`] on the same thread until
//! the next call. Handles are opaque and owned by the caller, who releases
//! them with the matching `_free` function. Strings returned through `char**`
//! out-parameters are released with [`spanconf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use spanconf::beam::{beam_search, BeamResult, PredictionRecord};
use spanconf::calibration::{compute_ece, ScoredOutcome, SpanFilter};
use spanconf::confidence::{
    adaptive_k, score_all, AggSpanMode, Method, MethodConfig, ScoredSpanRecord,
};
use spanconf::error::ErrorClass;
use spanconf::refmodel::{perturb_temperature, preset, HmmParams, ModelFile};
use spanconf::seqlabel::InputText;
use spanconf::Error;

/// Result codes. Nonzero error codes match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanconfStatus {
    Ok = 0,
    /// Bad argument or configuration.
    Usage = 2,
    /// Malformed or inconsistent data.
    Data = 3,
    /// Enumeration or beam capacity exceeded.
    Capacity = 4,
    /// A required pointer was null or a string was not UTF-8.
    InvalidArgument = 5,
    /// Internal panic; the library state is unchanged.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanconfMethod {
    Span = 0,
    AggSpan = 1,
    AggSeq = 2,
    AdaAggSeq = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanconfAggSpanMode {
    Rescoring = 0,
    Trace = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SpanconfMethodConfig {
    pub method: SpanconfMethod,
    pub k: usize,
    /// Offset for AdaAggSeq.
    pub b: usize,
    pub aggspan_mode: SpanconfAggSpanMode,
    /// Temperature of the rescoring model; 1 leaves it unchanged.
    pub tau: f64,
}

/// A reference model.
pub struct SpanconfModel {
    params: HmmParams,
}

/// A ranked candidate list for one input.
pub struct SpanconfBeam {
    input: InputText,
    beam: BeamResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

enum Failure {
    Lib(Error),
    Invalid(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpanconfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpanconfStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            match e.class() {
                ErrorClass::Usage => SpanconfStatus::Usage,
                ErrorClass::Data => SpanconfStatus::Data,
                ErrorClass::Capacity => SpanconfStatus::Capacity,
            }
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            SpanconfStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal panic");
            SpanconfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Invalid(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Invalid(format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::Invalid(format!("{what} is null")))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::Invalid(format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn words_arg(words: *const *const c_char, n: usize) -> Result<Vec<String>, Failure> {
    if n > 0 && words.is_null() {
        return Err(Failure::Invalid("words is null".into()));
    }
    (0..n)
        .map(|i| str_arg(*words.add(i), "word").map(str::to_owned))
        .collect()
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::Invalid("output contains a nul byte".into()))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn spanconf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spanconf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Build a model from its JSON description.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spanconf_model_from_json(
    json: *const c_char,
    out: *mut *mut SpanconfModel,
) -> SpanconfStatus {
    guard(|| {
        out_arg(out, "out")?;
        let file: ModelFile = serde_json::from_str(str_arg(json, "json")?)
            .map_err(|e| Error::Format(format!("model JSON: {e}")))?;
        let params = HmmParams::new(file)?;
        *out = Box::into_raw(Box::new(SpanconfModel { params }));
        Ok(())
    })
}

/// Load a built-in model by name.
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spanconf_model_preset(
    name: *const c_char,
    out: *mut *mut SpanconfModel,
) -> SpanconfStatus {
    guard(|| {
        out_arg(out, "out")?;
        let params = preset(str_arg(name, "name")?)?;
        *out = Box::into_raw(Box::new(SpanconfModel { params }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn spanconf_model_free(model: *mut SpanconfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Beam-decode `words` with the model flattened or sharpened by `tau`.
///
/// # Safety
/// `words` must point to `n_words` nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spanconf_beam_search(
    model: *const SpanconfModel,
    id: *const c_char,
    words: *const *const c_char,
    n_words: usize,
    k: usize,
    tau: f64,
    out: *mut *mut SpanconfBeam,
) -> SpanconfStatus {
    guard(|| {
        out_arg(out, "out")?;
        let model = ref_arg(model, "model")?;
        let input = InputText::new(str_arg(id, "id")?, words_arg(words, n_words)?)?;
        let scorer = perturb_temperature(&model.params, tau)?;
        let beam = beam_search(&scorer, &input, k)?;
        *out = Box::into_raw(Box::new(SpanconfBeam { input, beam }));
        Ok(())
    })
}

/// Load one predictions-file record produced elsewhere. Tags are checked
/// against the model's labels.
///
/// # Safety
/// `record_json` must be a nul-terminated string; `words` must point to
/// `n_words` nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spanconf_beam_from_prediction(
    model: *const SpanconfModel,
    record_json: *const c_char,
    words: *const *const c_char,
    n_words: usize,
    out: *mut *mut SpanconfBeam,
) -> SpanconfStatus {
    guard(|| {
        out_arg(out, "out")?;
        let model = ref_arg(model, "model")?;
        let record: PredictionRecord =
            serde_json::from_str(str_arg(record_json, "record_json")?)
                .map_err(|e| Error::Format(format!("prediction record: {e}")))?;
        let input = InputText::new(record.id.clone(), words_arg(words, n_words)?)?;
        if record.n_words != input.len() {
            return Err(Error::Alignment(format!(
                "record covers {} words, {} given",
                record.n_words,
                input.len()
            ))
            .into());
        }
        let beam = record.into_beam(&model.params.labels())?;
        *out = Box::into_raw(Box::new(SpanconfBeam { input, beam }));
        Ok(())
    })
}

/// # Safety
/// `beam` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn spanconf_beam_free(beam: *mut SpanconfBeam) {
    if !beam.is_null() {
        drop(Box::from_raw(beam));
    }
}

/// Number of well-formed candidates in the beam.
///
/// # Safety
/// `beam` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spanconf_beam_len(
    beam: *const SpanconfBeam,
    out: *mut usize,
) -> SpanconfStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ref_arg(beam, "beam")?.beam.candidates.len();
        Ok(())
    })
}

/// The beam as a predictions-file record (JSON).
///
/// # Safety
/// `beam` must be a live handle; `out` must be writable. Free the result with
/// [`spanconf_string_free`].
#[no_mangle]
pub unsafe extern "C" fn spanconf_beam_to_json(
    beam: *const SpanconfBeam,
    out: *mut *mut c_char,
) -> SpanconfStatus {
    guard(|| {
        out_arg(out, "out")?;
        let b = ref_arg(beam, "beam")?;
        let record = PredictionRecord::from_beam(&b.beam, b.input.len());
        *out = into_c_string(serde_json::to_string(&record).expect("records serialize"))?;
        Ok(())
    })
}

fn method_config(cfg: &SpanconfMethodConfig) -> MethodConfig {
    MethodConfig {
        method: match cfg.method {
            SpanconfMethod::Span => Method::Span,
            SpanconfMethod::AggSpan => Method::AggSpan,
            SpanconfMethod::AggSeq => Method::AggSeq,
            SpanconfMethod::AdaAggSeq => Method::AdaAggSeq,
        },
        k: cfg.k,
        b: cfg.b,
        aggspan_mode: match cfg.aggspan_mode {
            SpanconfAggSpanMode::Rescoring => AggSpanMode::Rescoring,
            SpanconfAggSpanMode::Trace => AggSpanMode::Trace,
        },
    }
}

fn score(
    beam: &SpanconfBeam,
    model: Option<&SpanconfModel>,
    cfg: &SpanconfMethodConfig,
) -> Result<Vec<ScoredSpanRecord>, Failure> {
    let scorer = model
        .map(|m| perturb_temperature(&m.params, cfg.tau))
        .transpose()?;
    let scored = score_all(
        &beam.input,
        &beam.beam,
        &method_config(cfg),
        scorer.as_ref().map(|s| s as &dyn spanconf::Scorer),
    )?;
    Ok(scored
        .scores
        .iter()
        .map(|s| ScoredSpanRecord::new(&beam.input.id, s))
        .collect())
}

/// Confidence of every top-1 span, left to right, written to `out[0..cap]`.
/// `n_out` receives the number of spans scored, which may exceed `cap`.
/// `model` may be null unless AggSpan runs in rescoring mode.
///
/// # Safety
/// Handles must be live; `out` must hold `cap` doubles; `n_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spanconf_score(
    beam: *const SpanconfBeam,
    model: *const SpanconfModel,
    cfg: *const SpanconfMethodConfig,
    out: *mut f64,
    cap: usize,
    n_out: *mut usize,
) -> SpanconfStatus {
    guard(|| {
        out_arg(n_out, "n_out")?;
        if cap > 0 {
            out_arg(out, "out")?;
        }
        let records = score(ref_arg(beam, "beam")?, model.as_ref(), ref_arg(cfg, "cfg")?)?;
        for (i, r) in records.iter().take(cap).enumerate() {
            *out.add(i) = r.confidence;
        }
        *n_out = records.len();
        Ok(())
    })
}

/// Like [`spanconf_score`], returning scored-span records as a JSON array.
///
/// # Safety
/// Handles must be live; `out` must be writable. Free the result with
/// [`spanconf_string_free`].
#[no_mangle]
pub unsafe extern "C" fn spanconf_score_json(
    beam: *const SpanconfBeam,
    model: *const SpanconfModel,
    cfg: *const SpanconfMethodConfig,
    out: *mut *mut c_char,
) -> SpanconfStatus {
    guard(|| {
        out_arg(out, "out")?;
        let records = score(ref_arg(beam, "beam")?, model.as_ref(), ref_arg(cfg, "cfg")?)?;
        *out = into_c_string(serde_json::to_string(&records).expect("records serialize"))?;
        Ok(())
    })
}

/// Expected calibration error over `n` spans with `bins` equal-width bins.
/// `correct[i]` is nonzero for a correct span.
///
/// # Safety
/// `confidence` and `correct` must each hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spanconf_ece(
    confidence: *const f64,
    correct: *const u8,
    n: usize,
    bins: usize,
    out: *mut f64,
) -> SpanconfStatus {
    guard(|| {
        out_arg(out, "out")?;
        if n > 0 && (confidence.is_null() || correct.is_null()) {
            return Err(Failure::Invalid("input arrays are null".into()));
        }
        let scored: Vec<ScoredOutcome> = (0..n)
            .map(|i| ScoredOutcome {
                confidence: *confidence.add(i),
                correct: *correct.add(i) != 0,
                is_outside: false,
            })
            .collect();
        *out = compute_ece(&scored, bins, SpanFilter::All)?.ece;
        Ok(())
    })
}

/// `max(2, min(a + b, k))`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spanconf_adaptive_k(
    a: usize,
    b: usize,
    k: usize,
    out: *mut usize,
) -> SpanconfStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = adaptive_k(a, b, k)?;
        Ok(())
    })
}
