//! C ABI over the tracker engine.
//!
//! A tracker is an opaque handle created from a JSON config. Every fallible
//! call returns a [`TsmStatus`]; on failure the message is available from
//! [`tsm_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use twostage_mot::config::DEFAULT_CONFIG_JSON;
use twostage_mot::{ClassLabel, Detection, Error, TrackOutput, TrackerConfig, TrackerEngine};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    TemporalOrder = 4,
    BufferTooSmall = 5,
    Numeric = 6,
    Internal = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsmClass {
    CarLike = 0,
    Pedestrian = 1,
}

impl From<TsmClass> for ClassLabel {
    fn from(c: TsmClass) -> Self {
        match c {
            TsmClass::CarLike => ClassLabel::CarLike,
            TsmClass::Pedestrian => ClassLabel::Pedestrian,
        }
    }
}

impl From<ClassLabel> for TsmClass {
    fn from(c: ClassLabel) -> Self {
        match c {
            ClassLabel::CarLike => TsmClass::CarLike,
            ClassLabel::Pedestrian => TsmClass::Pedestrian,
        }
    }
}

/// One input box. `class_label` is 0 for car-like, 1 for pedestrian.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsmDetection {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub heading: f64,
    pub score: f64,
    pub class_label: u32,
}

/// One reported track.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsmTrack {
    pub id: u64,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub heading: f64,
    pub score: f64,
    pub class_label: u32,
    /// 1 when reported from prediction only.
    pub coasting: u8,
}

impl From<&TrackOutput> for TsmTrack {
    fn from(t: &TrackOutput) -> Self {
        TsmTrack {
            id: t.id,
            center: [t.center.x, t.center.y, t.center.z],
            size: [t.size.x, t.size.y, t.size.z],
            heading: t.heading,
            score: t.score,
            class_label: TsmClass::from(t.class_label) as u32,
            coasting: u8::from(t.coasting),
        }
    }
}

/// Opaque tracker handle.
pub struct TsmTracker {
    engine: TrackerEngine,
    frame: u64,
    last: Vec<TsmTrack>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> TsmStatus {
    match e {
        Error::InvalidConfig(_) | Error::Json(_) => TsmStatus::InvalidConfig,
        Error::TemporalOrder(_) => TsmStatus::TemporalOrder,
        Error::NonFinite(_) | Error::SingularCovariance { .. } => TsmStatus::Numeric,
        Error::Internal(_) | Error::Io(_) => TsmStatus::Internal,
        _ => TsmStatus::InvalidArgument,
    }
}

fn fail(status: TsmStatus, msg: impl Into<String>) -> TsmStatus {
    set_error(msg);
    status
}

fn guarded(f: impl FnOnce() -> Result<(), (TsmStatus, String)>) -> TsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TsmStatus::Ok
        }
        Ok(Err((status, msg))) => fail(status, msg),
        Err(_) => fail(TsmStatus::Panic, "panic inside the tracker"),
    }
}

fn lib_err(e: Error) -> (TsmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TsmStatus, String) {
    (TsmStatus::NullPointer, format!("{what} is null"))
}

/// Create a tracker. `config_json` may be null for the embedded default.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tsm_tracker_new(
    config_json: *const c_char,
    out: *mut *mut TsmTracker,
) -> TsmStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let config = if config_json.is_null() {
            TrackerConfig::default()
        } else {
            let text = CStr::from_ptr(config_json).to_str().map_err(|e| {
                (
                    TsmStatus::InvalidConfig,
                    format!("config is not UTF-8: {e}"),
                )
            })?;
            TrackerConfig::from_json(text).map_err(lib_err)?
        };
        let engine = TrackerEngine::new(config).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(TsmTracker {
            engine,
            frame: 0,
            last: Vec::new(),
        }));
        Ok(())
    })
}

/// Destroy a tracker. Null is ignored.
///
/// # Safety
/// `tracker` must be null or a handle from [`tsm_tracker_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsm_tracker_free(tracker: *mut TsmTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Process one frame. The number of reported tracks goes to `out_count`;
/// fetch them with [`tsm_tracker_tracks`].
///
/// # Safety
/// `tracker` must be a live handle; `detections` must point to `count` items (or be null
/// when `count` is 0); `out_count` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tsm_tracker_step(
    tracker: *mut TsmTracker,
    detections: *const TsmDetection,
    count: usize,
    timestamp: f64,
    out_count: *mut usize,
) -> TsmStatus {
    guarded(|| {
        let t = tracker.as_mut().ok_or_else(|| null("tracker"))?;
        let raw: &[TsmDetection] = if count == 0 {
            &[]
        } else if detections.is_null() {
            return Err(null("detections"));
        } else {
            std::slice::from_raw_parts(detections, count)
        };
        let frame = t.frame;
        let dets =
            raw.iter()
                .enumerate()
                .map(|(i, d)| {
                    let class = match d.class_label {
                        0 => TsmClass::CarLike,
                        1 => TsmClass::Pedestrian,
                        other => return Err((
                            TsmStatus::InvalidArgument,
                            format!(
                                "detection {i}: unknown class {other} (0 car-like, 1 pedestrian)"
                            ),
                        )),
                    };
                    Detection::new(
                        d.center,
                        d.size,
                        d.heading,
                        d.score,
                        class.into(),
                        frame,
                        timestamp,
                    )
                    .map_err(|e| (status_of(&e), format!("detection {i}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
        let tracks = t.engine.step(&dets, timestamp).map_err(lib_err)?;
        t.frame += 1;
        t.last = tracks.iter().map(TsmTrack::from).collect();
        if !out_count.is_null() {
            *out_count = t.last.len();
        }
        Ok(())
    })
}

/// Copy the tracks of the last step into `out`. Fails with `BufferTooSmall`
/// (copying nothing) when `capacity` is short; `written` always receives the count needed.
///
/// # Safety
/// `tracker` must be a live handle; `out` must hold `capacity` items; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tsm_tracker_tracks(
    tracker: *const TsmTracker,
    out: *mut TsmTrack,
    capacity: usize,
    written: *mut usize,
) -> TsmStatus {
    guarded(|| {
        let t = tracker.as_ref().ok_or_else(|| null("tracker"))?;
        if written.is_null() {
            return Err(null("written"));
        }
        *written = t.last.len();
        if t.last.is_empty() {
            return Ok(());
        }
        if capacity < t.last.len() {
            return Err((
                TsmStatus::BufferTooSmall,
                format!("{} tracks do not fit in {capacity}", t.last.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(t.last.as_ptr(), out, t.last.len());
        Ok(())
    })
}

/// Number of live tracklets, including ones not currently reported.
///
/// # Safety
/// `tracker` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tsm_tracker_live_count(
    tracker: *const TsmTracker,
    out: *mut usize,
) -> TsmStatus {
    guarded(|| {
        let t = tracker.as_ref().ok_or_else(|| null("tracker"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = t.engine.tracklets().count();
        Ok(())
    })
}

/// Error message of the previous call on this thread, or null if it succeeded.
/// Valid until the next call.
#[no_mangle]
pub extern "C" fn tsm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// The embedded default config as JSON. Free with [`tsm_string_free`].
#[no_mangle]
pub extern "C" fn tsm_default_config_json() -> *mut c_char {
    CString::new(DEFAULT_CONFIG_JSON).map_or(ptr::null_mut(), CString::into_raw)
}

/// Free a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tsm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn tsm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
