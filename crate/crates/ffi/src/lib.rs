//! C ABI for the lip-sync engine.
//!
//! Handles are opaque. Every fallible call returns an [`LsStatus`]; on failure the
//! message is available from [`ls_last_error_message`] on the same thread.
//! Calls never unwind across the boundary.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use lipsync::audio::LimiterConfig;
use lipsync::model::Model;
use lipsync::pipeline::{Session, VisemeEvent};
use lipsync::viseme::VisemeId;
use lipsync::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    /// `ls_session_poll_event` found no pending frame.
    NoEvent = 1,
    NullPointer = 2,
    InvalidArgument = 3,
    Io = 4,
    Format = 5,
    ModelFile = 6,
    /// The call is not valid in the handle's current state.
    State = 7,
    Internal = 8,
}

/// A loaded model. Immutable; one model may back many sessions on any threads.
pub struct LsModel {
    inner: Arc<Model>,
}

/// Streaming state for one audio stream. Not safe for concurrent use.
pub struct LsSession {
    session: Session,
    pending: VecDeque<VisemeEvent>,
    scratch: Vec<VisemeEvent>,
}

/// One filtered 24 fps frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsEvent {
    pub frame: u64,
    /// Media time of the frame in milliseconds, frame * 1000 / 24.
    pub time_ms: f64,
    /// Viseme code, 0..=11; see `ls_viseme_name`.
    pub viseme: u8,
    pub wall_latency_ms: f64,
}

/// Peak limiter settings applied to incoming audio.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsLimiterConfig {
    pub boost_db: f64,
    pub ceiling_db: f64,
    pub attack_ms: f64,
    pub release_ms: f64,
}

impl From<LsLimiterConfig> for LimiterConfig {
    fn from(c: LsLimiterConfig) -> Self {
        LimiterConfig {
            boost_db: c.boost_db,
            ceiling_db: c.ceiling_db,
            attack_ms: c.attack_ms,
            release_ms: c.release_ms,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> LsStatus {
    match e {
        Error::Io { .. } | Error::IoBare(_) => LsStatus::Io,
        Error::Format(_) | Error::Wav(_) | Error::Json(_) => LsStatus::Format,
        Error::ModelFile(_) | Error::Dimension(_) => LsStatus::ModelFile,
        Error::Config(_) => LsStatus::InvalidArgument,
        _ => LsStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (LsStatus, String)>) -> LsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LsStatus::Internal
        }
    }
}

fn lib_err(e: Error) -> (LsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LsStatus, String) {
    (LsStatus::NullPointer, format!("{what} is null"))
}

/// Message for the last failed call on this thread. Valid until the next failing
/// call on the same thread; never null.
#[no_mangle]
pub extern "C" fn ls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model file. On success `*out` owns a handle to release with `ls_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_model_load(path: *const c_char, out: *mut *mut LsModel) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (LsStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let model = Model::load(path).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LsModel {
            inner: Arc::new(model),
        }));
        Ok(())
    })
}

/// Releases a model. Sessions created from it stay valid. Null is ignored.
///
/// # Safety
/// `model` must come from `ls_model_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ls_model_free(model: *mut LsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Temporal shift of the model in 100 Hz steps, or -1 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_model_shift(model: *const LsModel) -> i32 {
    match model.as_ref() {
        Some(m) => m.inner.shift() as i32,
        None => -1,
    }
}

/// Opens a session with the default limiter (`limiter` null) or the given one.
///
/// # Safety
/// `model` must be a live handle, `limiter` null or valid, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_session_new(
    model: *const LsModel,
    limiter: *const LsLimiterConfig,
    out: *mut *mut LsSession,
) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let limiter = limiter.as_ref().map(|l| LimiterConfig::from(*l)).unwrap_or_default();
        let session = Session::new(model.inner.clone(), limiter).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(LsSession {
            session,
            pending: VecDeque::new(),
            scratch: Vec::new(),
        }));
        Ok(())
    })
}

/// Feeds `len` mono 16 kHz samples. Completed frames become available to
/// `ls_session_poll_event`.
///
/// # Safety
/// `session` must be a live handle and `pcm` point to `len` samples (may be null
/// when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn ls_session_push(session: *mut LsSession, pcm: *const i16, len: usize) -> LsStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        if s.session.is_finished() {
            return Err((LsStatus::State, "session already finished".into()));
        }
        if len == 0 {
            return Ok(());
        }
        if pcm.is_null() {
            return Err(null("pcm"));
        }
        let samples = std::slice::from_raw_parts(pcm, len);
        s.scratch.clear();
        s.session.push(samples, &mut s.scratch);
        s.pending.extend(s.scratch.drain(..));
        Ok(())
    })
}

/// Flushes the frames held back for lookahead. Pushing afterwards is an error.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ls_session_finish(session: *mut LsSession) -> LsStatus {
    guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        s.scratch.clear();
        s.session.finish(&mut s.scratch);
        s.pending.extend(s.scratch.drain(..));
        Ok(())
    })
}

/// Pops the oldest pending frame into `*out`, or returns `NoEvent`.
///
/// # Safety
/// `session` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_session_poll_event(session: *mut LsSession, out: *mut LsEvent) -> LsStatus {
    let mut found = false;
    let status = guard(|| {
        let s = session.as_mut().ok_or_else(|| null("session"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if let Some(e) = s.pending.pop_front() {
            *out = LsEvent {
                frame: e.frame as u64,
                time_ms: e.time_ms,
                viseme: e.viseme.code(),
                wall_latency_ms: e.wall_latency_ms,
            };
            found = true;
        }
        Ok(())
    });
    match (status, found) {
        (LsStatus::Ok, false) => LsStatus::NoEvent,
        (s, _) => s,
    }
}

/// Feature lookahead, shift and filter delay of the session's chain in ms.
///
/// # Safety
/// `session` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_algorithmic_latency_ms(session: *const LsSession, out: *mut f64) -> LsStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = s.session.algorithmic_latency_ms();
        Ok(())
    })
}

/// Mean compute time per 100 Hz step so far, in ms.
///
/// # Safety
/// `session` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_session_processing_ms(session: *const LsSession, out: *mut f64) -> LsStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = s.session.mean_processing_ms();
        Ok(())
    })
}

/// Releases a session. Null is ignored.
///
/// # Safety
/// `session` must come from `ls_session_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ls_session_free(session: *mut LsSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

const NAMES: [&CStr; 12] = [
    c"Silent", c"Ah", c"D", c"Ee", c"F", c"L", c"M", c"Oh", c"R", c"S", c"Uh", c"W-Oo",
];

/// Static name of a viseme code, or null for an unknown code.
#[no_mangle]
pub extern "C" fn ls_viseme_name(code: u8) -> *const c_char {
    match VisemeId::from_code(code) {
        Some(v) => {
            let name = NAMES[v.index()];
            debug_assert_eq!(name.to_str().ok(), Some(v.name()));
            name.as_ptr()
        }
        None => ptr::null(),
    }
}
