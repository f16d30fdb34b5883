//! C ABI over the forgetd engine.
//!
//! Every fallible call returns an [`FgStatus`]; on failure the message is
//! available from [`fg_last_error_message`] on the same thread. Handles are
//! opaque and owned by the caller until passed to [`fg_engine_free`].
//! Strings returned through out-parameters are released with
//! [`fg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use forgetd::engine::Engine;
use forgetd::evidence::parse_evidence_line;
use forgetd::graph::{load_snapshot, ThingId, UserId};
use forgetd::{Config, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FgStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A file could not be read.
    Io = 3,
    /// Input content was rejected (malformed evidence, bad config, bad query).
    InvalidInput = 4,
    /// A thing or context id is not in the graph.
    UnknownThing = 5,
    /// Evidence is older than the engine clock.
    ClockRegression = 6,
    /// The engine panicked. The handle should not be used again.
    Internal = 7,
}

/// Opaque engine handle.
pub struct FgEngine {
    engine: Engine,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes replaced")));
}

fn status_of(err: &Error) -> FgStatus {
    match err {
        Error::AtEvent { source, .. } => status_of(source),
        e if e.is_io() => FgStatus::Io,
        Error::UnknownThing(_) | Error::UnknownThingReference(_) => FgStatus::UnknownThing,
        Error::ClockRegression { .. } => FgStatus::ClockRegression,
        _ => FgStatus::InvalidInput,
    }
}

struct Fail(FgStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        set_error(e.to_string());
        Fail(status_of(&e))
    }
}

fn fail(status: FgStatus, msg: impl Into<String>) -> Fail {
    set_error(msg);
    Fail(status)
}

/// Runs `f`, mapping errors and panics to a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FgStatus::Ok,
        Ok(Err(Fail(s))) => s,
        Err(_) => {
            set_error("internal panic");
            FgStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(FgStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FgStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn engine_arg<'a>(p: *mut FgEngine) -> Result<&'a mut Engine, Fail> {
    p.as_mut()
        .map(|h| &mut h.engine)
        .ok_or_else(|| fail(FgStatus::NullArgument, "`engine` is null"))
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    unsafe { p.as_mut() }.ok_or_else(|| fail(FgStatus::NullArgument, format!("`{name}` is null")))
}

fn thing_id(s: &str) -> Result<ThingId, Fail> {
    Ok(ThingId::new(s)?)
}

/// Loads a graph snapshot and builds an engine.
///
/// `config_path` may be null for defaults. On success `*out` receives a new
/// handle.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fg_engine_new_from_snapshot(
    snapshot_path: *const c_char,
    config_path: *const c_char,
    out: *mut *mut FgEngine,
) -> FgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let snapshot = str_arg(snapshot_path, "snapshot_path")?;
        let config = match opt_str_arg(config_path, "config_path")? {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let graph = load_snapshot(Path::new(snapshot))?;
        let engine = Engine::new(graph, config)?;
        *out = Box::into_raw(Box::new(FgEngine { engine }));
        Ok(())
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from [`fg_engine_new_from_snapshot`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn fg_engine_free(engine: *mut FgEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Applies one evidence record given as a JSON line. The engine clock
/// advances to the record's timestamp first, running any scheduled work.
///
/// # Safety
/// `engine` must be a live handle and `line` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fg_engine_ingest_evidence_line(engine: *mut FgEngine, line: *const c_char) -> FgStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let evidence = parse_evidence_line(str_arg(line, "line")?)?;
        engine.ingest(&evidence)?;
        Ok(())
    })
}

/// Engine clock: timestamp of the last ingested record, or `INT64_MIN`
/// before any evidence.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fg_engine_now(engine: *const FgEngine) -> i64 {
    engine
        .as_ref()
        .and_then(|h| h.engine.now())
        .unwrap_or(i64::MIN)
}

/// Memory buoyancy of `thing` for `user` at `at` (epoch milliseconds).
/// A null `context` reads the global value, otherwise the value local to
/// that context.
///
/// # Safety
/// `engine` must be a live handle, strings null or NUL-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn fg_engine_mb(
    engine: *mut FgEngine,
    user: *const c_char,
    thing: *const c_char,
    context: *const c_char,
    at: i64,
    out: *mut f64,
) -> FgStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let out = out_arg(out, "out")?;
        let user = UserId::new(str_arg(user, "user")?);
        let thing = thing_id(str_arg(thing, "thing")?)?;
        let context = opt_str_arg(context, "context")?.map(thing_id).transpose()?;
        if !engine.graph.contains(&thing) {
            return Err(Error::UnknownThing(thing).into());
        }
        *out = engine.mb(&user, &thing, context.as_ref(), at);
        Ok(())
    })
}

/// Mean global buoyancy of `thing` over `n_users` users.
///
/// # Safety
/// `users` must point to `n_users` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn fg_engine_group_mb(
    engine: *mut FgEngine,
    users: *const *const c_char,
    n_users: usize,
    thing: *const c_char,
    at: i64,
    out: *mut f64,
) -> FgStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let out = out_arg(out, "out")?;
        if users.is_null() && n_users > 0 {
            return Err(fail(FgStatus::NullArgument, "`users` is null"));
        }
        let mut ids = Vec::with_capacity(n_users);
        for i in 0..n_users {
            ids.push(UserId::new(str_arg(*users.add(i), "users[i]")?));
        }
        let thing = thing_id(str_arg(thing, "thing")?)?;
        if !engine.graph.contains(&thing) {
            return Err(Error::UnknownThing(thing).into());
        }
        *out = engine.group_mb(&ids, &thing, at)?;
        Ok(())
    })
}

/// Keyword search. On success `*out_json` receives the result as JSON, to
/// be released with [`fg_string_free`].
///
/// # Safety
/// `engine` must be a live handle, strings null or NUL-terminated and
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn fg_engine_query_json(
    engine: *mut FgEngine,
    user: *const c_char,
    keywords: *const c_char,
    threshold: f64,
    context: *const c_char,
    at: i64,
    out_json: *mut *mut c_char,
) -> FgStatus {
    guard(|| {
        let engine = engine_arg(engine)?;
        let out = out_arg(out_json, "out_json")?;
        *out = ptr::null_mut();
        let user = UserId::new(str_arg(user, "user")?);
        let keywords = str_arg(keywords, "keywords")?;
        let context = opt_str_arg(context, "context")?.map(thing_id).transpose()?;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(fail(FgStatus::InvalidInput, format!("threshold must be in [0, 1], got {threshold}")));
        }
        let result = engine.search(&user, keywords, threshold, context.as_ref(), at)?;
        let json = serde_json::to_string(&result).expect("serializable");
        *out = CString::new(json).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
