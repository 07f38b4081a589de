//! C ABI over the tikzbench diagram-code model and metric suite.
//!
//! Conventions:
//! * every fallible function returns a [`TbStatus`] and writes results
//!   through out-pointers;
//! * on failure, [`tb_last_error_message`] describes the error for the
//!   calling thread;
//! * handles returned by `*_new` are owned by the caller and released with
//!   the matching `*_free`;
//! * panics never cross the boundary; they surface as `TB_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use image::GrayImage;
use tikzbench::code::DiagramCode;
use tikzbench::metrics::image::{self as im, FeatureModel, FeatureSet, KidParams};
use tikzbench::metrics::text::{self, TextMetric};
use tikzbench::verify;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// The code did not parse; the out-value still holds the diagnostic count.
    ParseError = 4,
    /// A metric rejected its input.
    MetricError = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbTextMetric {
    Bleu = 0,
    RougeL = 1,
    ChrF = 2,
    EditDistance = 3,
    CodeBleu = 4,
    Ruby = 5,
}

impl From<TbTextMetric> for TextMetric {
    fn from(m: TbTextMetric) -> Self {
        match m {
            TbTextMetric::Bleu => TextMetric::Bleu,
            TbTextMetric::RougeL => TextMetric::RougeL,
            TbTextMetric::ChrF => TextMetric::ChrF,
            TbTextMetric::EditDistance => TextMetric::EditDist,
            TbTextMetric::CodeBleu => TextMetric::CodeBleu,
            TbTextMetric::Ruby => TextMetric::Ruby,
        }
    }
}

/// Opaque diagram-code handle.
pub struct TbDiagramCode {
    code: DiagramCode,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TbGraphStats {
    pub nodes: usize,
    pub edges: usize,
    /// Edge endpoints naming no declared node.
    pub dangling: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Failure = (TbStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TbStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            TbStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    (TbStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    (TbStatus::InvalidArgument, msg.into())
}

fn metric_err(e: impl std::fmt::Display) -> Failure {
    (TbStatus::MetricError, e.to_string())
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a>(p: *const TbDiagramCode, what: &str) -> Result<&'a DiagramCode, Failure> {
    p.as_ref().map(|h| &h.code).ok_or_else(|| null(what))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<Vec<Vec<f64>>, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let len = rows.checked_mul(cols).ok_or_else(|| invalid(format!("{what}: size overflows")))?;
    let data = slice::from_raw_parts(p, len);
    Ok(data.chunks(cols.max(1)).map(<[f64]>::to_vec).collect())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tb_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => c"unknown",
    };
    VERSION.as_ptr()
}

/// Message for the last failed call on this thread, empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a handle from NUL-terminated UTF-8 source.
#[no_mangle]
pub unsafe extern "C" fn tb_code_new(source: *const c_char, out: *mut *mut TbDiagramCode) -> TbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = std::ptr::null_mut();
        if source.is_null() {
            return Err(null("source"));
        }
        let s = CStr::from_ptr(source)
            .to_str()
            .map_err(|e| (TbStatus::InvalidUtf8, e.to_string()))?;
        *out = Box::into_raw(Box::new(TbDiagramCode { code: DiagramCode::new(s) }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn tb_code_free(code: *mut TbDiagramCode) {
    if !code.is_null() {
        drop(Box::from_raw(code));
    }
}

/// Parses the code. `TB_STATUS_OK` when clean, `TB_STATUS_PARSE_ERROR`
/// otherwise; `diagnostics` receives the number of problems either way.
#[no_mangle]
pub unsafe extern "C" fn tb_code_validate(code: *const TbDiagramCode, diagnostics: *mut usize) -> TbStatus {
    guard(|| {
        let code = handle(code, "code")?;
        let out = out_ref(diagnostics, "diagnostics")?;
        match code.parse() {
            Ok(_) => {
                *out = 0;
                Ok(())
            }
            Err(d) => {
                *out = d.len();
                let first = d.iter().next().map(|x| x.to_string()).unwrap_or_default();
                Err((TbStatus::ParseError, first))
            }
        }
    })
}

/// Quick structural check without TeX: the same rules the pipeline uses
/// when no compiler is installed.
#[no_mangle]
pub unsafe extern "C" fn tb_code_check_fast(code: *const TbDiagramCode, passed: *mut bool) -> TbStatus {
    guard(|| {
        let code = handle(code, "code")?;
        *out_ref(passed, "passed")? = verify::check_fast(code).passed();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tb_code_token_count(code: *const TbDiagramCode, count: *mut usize) -> TbStatus {
    guard(|| {
        let code = handle(code, "code")?;
        *out_ref(count, "count")? = code.tokens().len();
        Ok(())
    })
}

/// Node and edge counts of a code that parses.
#[no_mangle]
pub unsafe extern "C" fn tb_code_graph_stats(code: *const TbDiagramCode, stats: *mut TbGraphStats) -> TbStatus {
    guard(|| {
        let code = handle(code, "code")?;
        let out = out_ref(stats, "stats")?;
        let g = code
            .node_graph()
            .ok_or_else(|| (TbStatus::ParseError, "code does not parse".to_string()))?;
        *out = TbGraphStats {
            nodes: g.vertices.len(),
            edges: g.edges.len(),
            dangling: g.dangling_refs.len(),
        };
        Ok(())
    })
}

/// Scores `candidate` against `reference` on the 0-100 scale.
#[no_mangle]
pub unsafe extern "C" fn tb_text_score(
    metric: TbTextMetric,
    candidate: *const TbDiagramCode,
    reference: *const TbDiagramCode,
    value: *mut f64,
) -> TbStatus {
    guard(|| {
        let c = handle(candidate, "candidate")?;
        let r = handle(reference, "reference")?;
        let out = out_ref(value, "value")?;
        *out = text::score(metric.into(), c, r).map_err(metric_err)?.value;
        Ok(())
    })
}

/// Fréchet distance between two row-major feature matrices of width `dim`.
#[no_mangle]
pub unsafe extern "C" fn tb_fid(
    real: *const f64,
    n_real: usize,
    generated: *const f64,
    n_generated: usize,
    dim: usize,
    value: *mut f64,
) -> TbStatus {
    guard(|| {
        let out = out_ref(value, "value")?;
        let (a, b) = feature_pair(real, n_real, generated, n_generated, dim)?;
        *out = im::fid(&a, &b).map_err(metric_err)?.value;
        Ok(())
    })
}

unsafe fn feature_pair(
    real: *const f64,
    n_real: usize,
    generated: *const f64,
    n_generated: usize,
    dim: usize,
) -> Result<(FeatureSet, FeatureSet), Failure> {
    if dim == 0 {
        return Err(invalid("dim must be positive"));
    }
    // a model without a fixed width accepts vectors of any length
    let set = |p, n, what| -> Result<FeatureSet, Failure> {
        FeatureSet::new(FeatureModel::ClipImage, matrix(p, n, dim, what)?, None).map_err(|e| invalid(e.to_string()))
    };
    Ok((set(real, n_real, "real")?, set(generated, n_generated, "generated")?))
}

/// Kernel distance: mean and spread over seeded subsets.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn tb_kid(
    real: *const f64,
    n_real: usize,
    generated: *const f64,
    n_generated: usize,
    dim: usize,
    subsets: usize,
    subset_size: usize,
    seed: u64,
    mean: *mut f64,
    std: *mut f64,
) -> TbStatus {
    guard(|| {
        let mean = out_ref(mean, "mean")?;
        let std = out_ref(std, "std")?;
        let (a, b) = feature_pair(real, n_real, generated, n_generated, dim)?;
        let params = KidParams { subsets, subset_size, seed };
        let s = im::kid(&a, &b, &params).map_err(metric_err)?;
        *mean = s.value;
        *std = s.detail.get("std").copied().unwrap_or(0.0);
        Ok(())
    })
}

/// Inception score of an `n×k` row-major logit matrix.
#[no_mangle]
pub unsafe extern "C" fn tb_inception_score(
    logits: *const f64,
    n: usize,
    k: usize,
    splits: usize,
    mean: *mut f64,
    std: *mut f64,
) -> TbStatus {
    guard(|| {
        let mean = out_ref(mean, "mean")?;
        let std = out_ref(std, "std")?;
        if k == 0 {
            return Err(invalid("k must be positive"));
        }
        let rows = matrix(logits, n, k, "logits")?;
        let m = nalgebra::DMatrix::from_row_iterator(n, k, rows.into_iter().flatten());
        let s = im::inception_score(&m, splits).map_err(metric_err)?;
        *mean = s.value;
        *std = s.detail.get("std").copied().unwrap_or(0.0);
        Ok(())
    })
}

/// SSIM in [-1, 1] of two 8-bit grayscale images of the same size, row-major.
#[no_mangle]
pub unsafe extern "C" fn tb_ssim_gray(
    a: *const u8,
    b: *const u8,
    width: u32,
    height: u32,
    value: *mut f64,
) -> TbStatus {
    guard(|| {
        let out = out_ref(value, "value")?;
        if a.is_null() || b.is_null() {
            return Err(null("image"));
        }
        if width == 0 || height == 0 {
            return Err(invalid("image has zero size"));
        }
        let len = width as usize * height as usize;
        let img = |p: *const u8| GrayImage::from_raw(width, height, slice::from_raw_parts(p, len).to_vec());
        let (ia, ib) = (img(a).expect("length matches"), img(b).expect("length matches"));
        *out = im::ssim_gray(&ia, &ib).map_err(metric_err)?.value;
        Ok(())
    })
}
