//! C ABI over the thyrolabel library.
//!
//! Rasters and fonts cross the boundary as opaque handles; structured
//! results come back as UTF-8 JSON strings owned by the library and
//! released with [`tl_string_free`]. Every entry point returns a
//! [`TlStatus`]; on failure the message is kept per thread and read with
//! [`tl_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use thyrolabel::caliper::{detect_calipers, CaliperConfig};
use thyrolabel::metrics::evaluate;
use thyrolabel::ocr::{parse_banner, ImageText};
use thyrolabel::path_parser::parse_pathology;
use thyrolabel::pipeline::{parse_results_jsonl, run_corpus, PipelineConfig};
use thyrolabel::rad_parser::extract_nodule_measurements;
use thyrolabel::{Error, GlyphFont, Laterality, Raster};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Io = 4,
    Parse = 5,
    Panic = 6,
}

/// Opaque 8-bit grayscale image.
pub struct TlRaster(Raster);

/// Opaque bitmap font used by OCR.
pub struct TlFont(GlyphFont);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(TlStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Validation(_) => TlStatus::Validation,
            Error::Io { .. } => TlStatus::Io,
            Error::Json { .. } | Error::Image(_) => TlStatus::Parse,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> TlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TlStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TlStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(TlStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TlStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| Failure(TlStatus::NullArgument, format!("{name} is null")))
}

fn check_out<T>(out: *mut T) -> FfiResult<()> {
    if out.is_null() {
        Err(Failure(TlStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> FfiResult<()> {
    let c = CString::new(s).map_err(|_| Failure(TlStatus::Parse, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put_json<T: serde::Serialize>(out: *mut *mut c_char, value: &T) -> FfiResult<()> {
    let s = serde_json::to_string(value).map_err(|e| Failure(TlStatus::Parse, e.to_string()))?;
    put_string(out, s)
}

fn parse_config<T: serde::de::DeserializeOwned + Default>(json: Option<&str>) -> FfiResult<T> {
    match json {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(s).map_err(|e| Failure(TlStatus::Parse, format!("config: {e}"))),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn tl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn tl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn tl_font_default() -> *mut TlFont {
    Box::into_raw(Box::new(TlFont(GlyphFont::default())))
}

/// # Safety
/// `font` must be null or a handle from `tl_font_default`, freed once.
#[no_mangle]
pub unsafe extern "C" fn tl_font_free(font: *mut TlFont) {
    if !font.is_null() {
        drop(Box::from_raw(font));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tl_raster_read_pgm(path: *const c_char, out: *mut *mut TlRaster) -> TlStatus {
    guard(|| {
        check_out(out)?;
        let path = str_arg(path, "path")?;
        let raster = Raster::read_pgm(path)?;
        *out = Box::into_raw(Box::new(TlRaster(raster)));
        Ok(())
    })
}

/// Copies `width * height` row-major bytes into a new raster.
///
/// # Safety
/// `pixels` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tl_raster_from_pixels(
    width: usize,
    height: usize,
    pixels: *const u8,
    len: usize,
    out: *mut *mut TlRaster,
) -> TlStatus {
    guard(|| {
        check_out(out)?;
        if pixels.is_null() {
            return Err(Failure(TlStatus::NullArgument, "pixels is null".into()));
        }
        let data = std::slice::from_raw_parts(pixels, len).to_vec();
        let raster = Raster::from_pixels(width, height, data)?;
        *out = Box::into_raw(Box::new(TlRaster(raster)));
        Ok(())
    })
}

/// # Safety
/// `raster` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_raster_width(raster: *const TlRaster) -> usize {
    raster.as_ref().map_or(0, |r| r.0.width())
}

/// # Safety
/// `raster` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tl_raster_height(raster: *const TlRaster) -> usize {
    raster.as_ref().map_or(0, |r| r.0.height())
}

/// # Safety
/// `raster` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn tl_raster_free(raster: *mut TlRaster) {
    if !raster.is_null() {
        drop(Box::from_raw(raster));
    }
}

/// Caliper hits as a JSON array. `config_json` may be null for defaults.
///
/// # Safety
/// Pointers must be valid as documented on the individual arguments.
#[no_mangle]
pub unsafe extern "C" fn tl_detect_calipers(
    raster: *const TlRaster,
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> TlStatus {
    guard(|| {
        check_out(out_json)?;
        let raster = ref_arg(raster, "raster")?;
        let cfg: CaliperConfig = parse_config(opt_str_arg(config_json, "config_json")?)?;
        let hits = detect_calipers(&raster.0, &cfg)?;
        put_json(out_json, &hits)
    })
}

/// Banner fields and on-image measurements as a JSON object with keys
/// `banner` and `measurements`.
///
/// # Safety
/// Pointers must be valid as documented on the individual arguments.
#[no_mangle]
pub unsafe extern "C" fn tl_ocr_image(
    raster: *const TlRaster,
    font: *const TlFont,
    out_json: *mut *mut c_char,
) -> TlStatus {
    guard(|| {
        check_out(out_json)?;
        let raster = ref_arg(raster, "raster")?;
        let font = ref_arg(font, "font")?;
        let text = ImageText::read(&raster.0, &font.0);
        put_json(
            out_json,
            &serde_json::json!({
                "banner": text.banner(),
                "measurements": text.measurements(),
            }),
        )
    })
}

/// # Safety
/// `text` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tl_parse_banner(text: *const c_char, out_json: *mut *mut c_char) -> TlStatus {
    guard(|| {
        check_out(out_json)?;
        put_json(out_json, &parse_banner(str_arg(text, "text")?))
    })
}

/// # Safety
/// `report` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tl_parse_pathology(report: *const c_char, out_json: *mut *mut c_char) -> TlStatus {
    guard(|| {
        check_out(out_json)?;
        put_json(out_json, &parse_pathology(str_arg(report, "report")?))
    })
}

/// `side` is one of "left", "right", "isthmus" (abbreviations accepted).
///
/// # Safety
/// `report` and `side` must be NUL-terminated strings; `out_json` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tl_extract_measurements(
    report: *const c_char,
    side: *const c_char,
    out_json: *mut *mut c_char,
) -> TlStatus {
    guard(|| {
        check_out(out_json)?;
        let report = str_arg(report, "report")?;
        let side: Laterality = str_arg(side, "side")?
            .parse()
            .map_err(|e: String| Failure(TlStatus::Validation, e))?;
        put_json(out_json, &extract_nodule_measurements(report, side))
    })
}

/// Runs the pipeline over a corpus directory; writes JSON-lines results.
///
/// # Safety
/// `corpus_dir` must be a NUL-terminated string, `config_json` null or a
/// NUL-terminated string, `out_jsonl` writable.
#[no_mangle]
pub unsafe extern "C" fn tl_run_corpus(
    corpus_dir: *const c_char,
    config_json: *const c_char,
    parallelism: usize,
    out_jsonl: *mut *mut c_char,
) -> TlStatus {
    guard(|| {
        check_out(out_jsonl)?;
        let dir = str_arg(corpus_dir, "corpus_dir")?;
        let cfg: PipelineConfig = parse_config(opt_str_arg(config_json, "config_json")?)?;
        let output = run_corpus(Path::new(dir), &cfg, parallelism)?;
        put_string(out_jsonl, output.results_jsonl())
    })
}

/// Scores JSON-lines results against a manifest (JSON text).
///
/// # Safety
/// `results_jsonl` and `manifest_json` must be NUL-terminated strings;
/// `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tl_evaluate(
    results_jsonl: *const c_char,
    manifest_json: *const c_char,
    out_json: *mut *mut c_char,
) -> TlStatus {
    guard(|| {
        check_out(out_json)?;
        let results = parse_results_jsonl(str_arg(results_jsonl, "results_jsonl")?)?;
        let manifest = serde_json::from_str(str_arg(manifest_json, "manifest_json")?)
            .map_err(|e| Failure(TlStatus::Parse, format!("manifest: {e}")))?;
        let report = evaluate(&results, &manifest)?;
        let text = String::from_utf8(report.to_json())
            .map_err(|e| Failure(TlStatus::Parse, e.to_string()))?;
        put_string(out_json, text)
    })
}
