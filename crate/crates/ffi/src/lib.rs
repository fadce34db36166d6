//! C ABI over `cone-core`.
//!
//! Every fallible function returns a [`ConeStatus`]; on failure a message
//! describing the error is available from [`cone_last_error_message`] on
//! the same thread. Strings handed out by this library must be released
//! with [`cone_string_free`]; handles with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cone_core::analysis::{permutation_p_value, spearman_rho, StatsError};
use cone_core::config::{parse_config, RepoConfig};
use cone_core::event::parse_timestamp;
use cone_core::service::{Clock, Feedback, InteractionElement, Service, ServiceError, StateError, StoreError};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidConfig = 4,
    InvalidEvent = 5,
    InvalidArgument = 6,
    Sequencing = 7,
    NotFound = 8,
    InvalidTransition = 9,
    Statistics = 10,
    Io = 11,
    Panic = 12,
}

/// Source of "now" for an engine.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeClock {
    /// Each event's own timestamp; suited to replaying logs.
    EventTime = 0,
    /// The wall clock.
    Wall = 1,
}

/// Parsed repository configuration.
pub struct ConeConfig {
    inner: RepoConfig,
}

/// A detection engine holding any number of repositories.
pub struct ConeEngine {
    service: Service,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ConeStatus, String);

impl Failure {
    fn new(status: ConeStatus, message: impl ToString) -> Self {
        Self(status, message.to_string())
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        let status = match &e {
            ServiceError::Validation(_) => ConeStatus::InvalidEvent,
            ServiceError::InvalidRepo(_) => ConeStatus::InvalidArgument,
            ServiceError::Store(StoreError::State(s)) => state_status(s),
            ServiceError::Store(_) => ConeStatus::Io,
        };
        Failure::new(status, e)
    }
}

impl From<StateError> for Failure {
    fn from(e: StateError) -> Self {
        Failure::new(state_status(&e), e)
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        Failure::new(ConeStatus::Statistics, e)
    }
}

fn state_status(e: &StateError) -> ConeStatus {
    match e {
        StateError::Sequencing(_) => ConeStatus::Sequencing,
        StateError::NotFound(_) => ConeStatus::NotFound,
        StateError::InvalidTransition { .. } => ConeStatus::InvalidTransition,
        StateError::InvalidVerdict(_) | StateError::InvalidElement(_) => ConeStatus::InvalidArgument,
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ConeStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ConeStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            ConeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(ConeStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(ConeStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(ConeStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(ConeStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::new(ConeStatus::InvalidArgument, "string contains a NUL byte"))
}

fn json_out(text: serde_json::Result<String>) -> Result<*mut c_char, Failure> {
    to_c_string(text.map_err(|e| Failure::new(ConeStatus::InvalidJson, e))?)
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cone_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn cone_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default configuration. Never null.
#[no_mangle]
pub extern "C" fn cone_config_default() -> *mut ConeConfig {
    Box::into_raw(Box::new(ConeConfig {
        inner: RepoConfig::default(),
    }))
}

/// Parses a JSON configuration document; missing keys take defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cone_config_parse(text: *const c_char, out: *mut *mut ConeConfig) -> ConeStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let inner = parse_config(text).map_err(|e| Failure::new(ConeStatus::InvalidConfig, e))?;
        write_out(out, Box::into_raw(Box::new(ConeConfig { inner })))
    })
}

/// Serializes a configuration with every key present.
///
/// # Safety
/// `config` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cone_config_to_json(config: *const ConeConfig, out: *mut *mut c_char) -> ConeStatus {
    guard(|| {
        let config = ref_arg(config, "config")?;
        write_out(out, to_c_string(config.inner.to_json())?)
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cone_config_free(config: *mut ConeConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Creates an engine. With a null `state_dir` all state stays in memory;
/// otherwise it is persisted under that directory and restored from it.
///
/// # Safety
/// `config` must be a live handle, `state_dir` null or NUL-terminated, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cone_engine_new(
    config: *const ConeConfig,
    state_dir: *const c_char,
    clock: ConeClock,
    out: *mut *mut ConeEngine,
) -> ConeStatus {
    guard(|| {
        let config = ref_arg(config, "config")?.inner.clone();
        let clock = match clock {
            ConeClock::EventTime => Clock::EventTime,
            ConeClock::Wall => Clock::Wall,
        };
        let service = match opt_str_arg(state_dir, "state_dir")? {
            None => Service::in_memory(config, clock),
            Some(dir) => Service::open(dir, config, clock)?,
        };
        write_out(out, Box::into_raw(Box::new(ConeEngine { service })))
    })
}

/// # Safety
/// `engine` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cone_engine_free(engine: *mut ConeEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Ingests one pull-request event given as JSON. On success `*out` receives
/// a JSON array of the notifications this event produced.
///
/// # Safety
/// `engine` must be a live handle, `event_json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cone_engine_ingest_json(
    engine: *const ConeEngine,
    event_json: *const c_char,
    out: *mut *mut c_char,
) -> ConeStatus {
    guard(|| {
        let engine = ref_arg(engine, "engine")?;
        let raw: serde_json::Value = serde_json::from_str(str_arg(event_json, "event_json")?)
            .map_err(|e| Failure::new(ConeStatus::InvalidJson, e))?;
        let produced = engine.service.ingest_json(&raw)?;
        write_out(out, json_out(serde_json::to_string(&produced))?)
    })
}

/// Sets the feedback state (`active`, `resolved` or `wont_fix`) of a
/// notification. On success `*out` receives the updated notification as JSON.
///
/// # Safety
/// `engine` must be a live handle, strings NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cone_engine_record_feedback(
    engine: *const ConeEngine,
    notification_id: *const c_char,
    verdict: *const c_char,
    out: *mut *mut c_char,
) -> ConeStatus {
    guard(|| {
        let engine = ref_arg(engine, "engine")?;
        let id = str_arg(notification_id, "notification_id")?;
        let verdict: Feedback = str_arg(verdict, "verdict")?.parse()?;
        let updated = engine.service.record_feedback(id, verdict)?;
        write_out(out, json_out(serde_json::to_string(&updated))?)
    })
}

/// Counts a click on `pr_link`, `file_link` or `author_link`; `*out_count`
/// receives the new counter value.
///
/// # Safety
/// `engine` must be a live handle, strings NUL-terminated, `out_count` writable.
#[no_mangle]
pub unsafe extern "C" fn cone_engine_record_interaction(
    engine: *const ConeEngine,
    notification_id: *const c_char,
    element: *const c_char,
    out_count: *mut u64,
) -> ConeStatus {
    guard(|| {
        let engine = ref_arg(engine, "engine")?;
        let id = str_arg(notification_id, "notification_id")?;
        let element: InteractionElement = str_arg(element, "element")?.parse()?;
        let count = engine.service.record_interaction(id, element)?;
        write_out(out_count, count)
    })
}

/// Notifications of a repository as a JSON array, oldest first. A non-null
/// `since` (RFC 3339) keeps only those created at or after it.
///
/// # Safety
/// `engine` must be a live handle, strings null or NUL-terminated as
/// documented, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cone_engine_notifications_json(
    engine: *const ConeEngine,
    repo_id: *const c_char,
    since: *const c_char,
    out: *mut *mut c_char,
) -> ConeStatus {
    guard(|| {
        let engine = ref_arg(engine, "engine")?;
        let repo_id = str_arg(repo_id, "repo_id")?;
        let since = opt_str_arg(since, "since")?
            .map(parse_timestamp)
            .transpose()
            .map_err(|e| Failure::new(ConeStatus::InvalidArgument, e))?;
        write_out(out, json_out(serde_json::to_string(&engine.service.notifications(repo_id, since)))?)
    })
}

/// Telemetry of a repository as a JSON object.
///
/// # Safety
/// `engine` must be a live handle, `repo_id` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cone_engine_telemetry_json(
    engine: *const ConeEngine,
    repo_id: *const c_char,
    out: *mut *mut c_char,
) -> ConeStatus {
    guard(|| {
        let engine = ref_arg(engine, "engine")?;
        let repo_id = str_arg(repo_id, "repo_id")?;
        let report = engine
            .service
            .telemetry(repo_id)
            .ok_or_else(|| Failure::new(ConeStatus::NotFound, format!("unknown repository `{repo_id}`")))?;
        write_out(out, json_out(serde_json::to_string(&report))?)
    })
}

/// Writes a snapshot of every repository. A no-op for in-memory engines.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cone_engine_snapshot(engine: *const ConeEngine) -> ConeStatus {
    guard(|| {
        ref_arg(engine, "engine")?.service.snapshot_all()?;
        Ok(())
    })
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::new(ConeStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Spearman's rho of two length-`len` arrays, ties given average ranks.
///
/// # Safety
/// `xs` and `ys` must point to `len` readable doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cone_spearman_rho(xs: *const f64, ys: *const f64, len: usize, out: *mut f64) -> ConeStatus {
    guard(|| {
        let rho = spearman_rho(slice_arg(xs, len, "xs")?, slice_arg(ys, len, "ys")?)?;
        write_out(out, rho)
    })
}

/// Two-sided permutation p-value for Spearman's rho.
///
/// # Safety
/// `xs` and `ys` must point to `len` readable doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cone_permutation_p_value(
    xs: *const f64,
    ys: *const f64,
    len: usize,
    iterations: usize,
    seed: u64,
    out: *mut f64,
) -> ConeStatus {
    guard(|| {
        let p = permutation_p_value(slice_arg(xs, len, "xs")?, slice_arg(ys, len, "ys")?, iterations, seed)?;
        write_out(out, p)
    })
}
