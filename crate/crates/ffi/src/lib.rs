//! C ABI over `covsim`.
//!
//! Every fallible function returns a [`CovsimStatus`]; on failure the
//! message is available from [`covsim_last_error`] on the same thread.
//! Objects are opaque handles released with their matching `_free`.
//! Strings returned to the caller are released with [`covsim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use covsim::choice::{mnl_probabilities, MnlParams, Mode, ModeSet, TripContext, N_MODES};
use covsim::scenario::{run_matrix, Assets, Matrix};
use covsim::sociability::{pair_distance, BBox, DetectionFrame, SociabilityAccumulator};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    /// a file was missing or unreadable
    Io = 4,
    /// the simulation failed; see the message
    Simulation = 5,
    /// an internal panic was caught at the boundary
    Panic = 6,
}

/// Opaque multinomial-logit choice model.
pub struct CovsimChoiceModel {
    params: MnlParams,
}

/// Opaque, mergeable sociability aggregate.
pub struct CovsimSociability {
    acc: SociabilityAccumulator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(CovsimStatus, String);

impl From<covsim::Error> for Fail {
    fn from(e: covsim::Error) -> Self {
        let status = match e {
            covsim::Error::MissingFile(_) | covsim::Error::Io { .. } => CovsimStatus::Io,
            covsim::Error::NoPath { .. } | covsim::Error::NonConvergence { .. } => CovsimStatus::Simulation,
            _ => CovsimStatus::InvalidInput,
        };
        Fail(status, e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(CovsimStatus::InvalidInput, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CovsimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CovsimStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CovsimStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(CovsimStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CovsimStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(CovsimStatus::InvalidInput, "string contains NUL".into()))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on this thread.
#[no_mangle]
pub extern "C" fn covsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn covsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn covsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a choice model from JSON (`{"asc": {...}, "beta_time", "beta_cost",
/// "reference_mode"}`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covsim_choice_model_from_json(
    json: *const c_char,
    out: *mut *mut CovsimChoiceModel,
) -> CovsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params: MnlParams = serde_json::from_str(str_arg(json, "json")?)?;
        params.validate()?;
        *out = Box::into_raw(Box::new(CovsimChoiceModel { params }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`covsim_choice_model_from_json`], or be null.
#[no_mangle]
pub unsafe extern "C" fn covsim_choice_model_free(model: *mut CovsimChoiceModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Choice probabilities for one trip. Arrays have six entries in mode order
/// car, transit, walk, bike, ridehail, bikeshare; times are hours. Bit `k` of
/// `available` enables mode `k`.
///
/// # Safety
/// `model` must be a live handle; `time_h`, `cost` and `out` must each point
/// to six doubles.
#[no_mangle]
pub unsafe extern "C" fn covsim_choice_probabilities(
    model: *const CovsimChoiceModel,
    time_h: *const f64,
    cost: *const f64,
    available: u32,
    out: *mut f64,
) -> CovsimStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if time_h.is_null() || cost.is_null() || out.is_null() {
            return Err(null("array argument"));
        }
        let times = std::slice::from_raw_parts(time_h, N_MODES);
        let costs = std::slice::from_raw_parts(cost, N_MODES);
        let set: ModeSet = Mode::ALL.iter().copied().filter(|m| available & (1 << m.index()) != 0).collect();
        if set.is_empty() {
            return Err(Fail(CovsimStatus::InvalidInput, "no mode is available".into()));
        }
        let mut ctx = TripContext::new(ModeSet::empty());
        for m in set.iter() {
            ctx = ctx.with(m, times[m.index()], costs[m.index()]);
        }
        let p = mnl_probabilities(&ctx, &model.params);
        std::slice::from_raw_parts_mut(out, N_MODES).copy_from_slice(&p.0);
        Ok(())
    })
}

/// Projected distance in feet between two person boxes given as
/// `[x, y, w, h]` pixels.
///
/// # Safety
/// `a` and `b` must point to four doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covsim_pair_distance_ft(a: *const f64, b: *const f64, out: *mut f64) -> CovsimStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let bb = |p: *const f64| {
            let s = std::slice::from_raw_parts(p, 4);
            BBox::from([s[0], s[1], s[2], s[3]])
        };
        *out = pair_distance(&bb(a), &bb(b))?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn covsim_sociability_new() -> *mut CovsimSociability {
    Box::into_raw(Box::new(CovsimSociability {
        acc: SociabilityAccumulator::new(),
    }))
}

/// # Safety
/// `acc` must come from [`covsim_sociability_new`], or be null.
#[no_mangle]
pub unsafe extern "C" fn covsim_sociability_free(acc: *mut CovsimSociability) {
    if !acc.is_null() {
        drop(Box::from_raw(acc));
    }
}

/// Add one detection frame given as a JSON object
/// `{"camera_id", "t", "objects": [{"class", "bbox": [x, y, w, h]}]}`.
///
/// # Safety
/// `acc` must be a live handle and `frame_json` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn covsim_sociability_add_frame(
    acc: *mut CovsimSociability,
    frame_json: *const c_char,
) -> CovsimStatus {
    guard(|| {
        let acc = acc.as_mut().ok_or_else(|| null("acc"))?;
        let frame: DetectionFrame = serde_json::from_str(str_arg(frame_json, "frame_json")?)?;
        frame.validate()?;
        acc.acc.add_frame(&frame)?;
        Ok(())
    })
}

/// Fold `other` into `acc`; `other` is left unchanged.
///
/// # Safety
/// Both must be live handles.
#[no_mangle]
pub unsafe extern "C" fn covsim_sociability_merge(
    acc: *mut CovsimSociability,
    other: *const CovsimSociability,
) -> CovsimStatus {
    guard(|| {
        let other = other.as_ref().ok_or_else(|| null("other"))?.acc.clone();
        acc.as_mut().ok_or_else(|| null("acc"))?.acc.merge(&other);
        Ok(())
    })
}

/// Report JSON for everything added so far. Release with
/// [`covsim_string_free`].
///
/// # Safety
/// `acc` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covsim_sociability_report(
    acc: *const CovsimSociability,
    out: *mut *mut c_char,
) -> CovsimStatus {
    guard(|| {
        let acc = acc.as_ref().ok_or_else(|| null("acc"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let report = acc.acc.report()?;
        *out = into_c_string(serde_json::to_string(&report)?)?;
        Ok(())
    })
}

/// Run the scenario matrix at `matrix_path` against the assets directory
/// and return the mode-share table as CSV. Release with
/// [`covsim_string_free`].
///
/// # Safety
/// Path arguments must be NUL-terminated strings; `out_csv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covsim_run_matrix(
    matrix_path: *const c_char,
    assets_dir: *const c_char,
    out_csv: *mut *mut c_char,
) -> CovsimStatus {
    guard(|| {
        if out_csv.is_null() {
            return Err(null("out_csv"));
        }
        let matrix = Matrix::load(Path::new(str_arg(matrix_path, "matrix_path")?))?;
        let assets = Assets::load(Path::new(str_arg(assets_dir, "assets_dir")?), matrix.sim.snap_radius)?;
        let out = run_matrix(&matrix.scenarios, &assets, &matrix.sim, matrix.seed)?;
        *out_csv = into_c_string(out.modeshare_csv())?;
        Ok(())
    })
}
