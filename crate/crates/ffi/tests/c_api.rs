use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use forgetd::evidence::{to_json_line, ActionKind, Device, Evidence};
use forgetd::graph::{save_snapshot, Graph, PredicateKind, Thing, ThingId, ThingKind, UserId};
use forgetd::time::DAY_MS;
use forgetd_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = fg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn fixture(dir: &Path) -> CString {
    let mut g = Graph::new();
    g.add_thing(Thing::new("ctx", ThingKind::Context, "Budget planning", "u1")).unwrap();
    g.add_thing(Thing::new("mail", ThingKind::Email, "Budget review mail", "u1").shared_with(["u2"]))
        .unwrap();
    g.add_thing(Thing::new("deck", ThingKind::Presentation, "Budget deck", "u1")).unwrap();
    g.add_edge(&ThingId::from("mail"), PredicateKind::RelatesTo, &ThingId::from("deck"))
        .unwrap();
    let path = dir.join("graph.jsonl");
    save_snapshot(&g, &path).unwrap();
    c(path.to_str().unwrap())
}

fn evidence(ts: i64, user: &str, thing: &str) -> CString {
    c(&to_json_line(&Evidence {
        ts,
        user: UserId::from(user),
        action: ActionKind::Modify,
        thing: ThingId::from(thing),
        context: Some(ThingId::from("ctx")),
        device: Device::Desktop,
    }))
}

struct Handle(*mut FgEngine);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { fg_engine_free(self.0) }
    }
}

fn open(dir: &Path) -> Handle {
    let snapshot = fixture(dir);
    let mut engine = ptr::null_mut();
    let status = unsafe { fg_engine_new_from_snapshot(snapshot.as_ptr(), ptr::null(), &mut engine) };
    assert_eq!(status, FgStatus::Ok);
    assert!(!engine.is_null());
    Handle(engine)
}

#[test]
fn ingest_then_read_mb() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path());
    assert_eq!(unsafe { fg_engine_now(h.0) }, i64::MIN);
    let line = evidence(10 * DAY_MS, "u1", "mail");
    assert_eq!(unsafe { fg_engine_ingest_evidence_line(h.0, line.as_ptr()) }, FgStatus::Ok);
    assert_eq!(unsafe { fg_engine_now(h.0) }, 10 * DAY_MS);

    let (user, mail, ctx) = (c("u1"), c("mail"), c("ctx"));
    let mut now_mb = 0.0;
    let mut later_mb = 0.0;
    let mut local = 0.0;
    unsafe {
        assert_eq!(fg_engine_mb(h.0, user.as_ptr(), mail.as_ptr(), ptr::null(), 10 * DAY_MS, &mut now_mb), FgStatus::Ok);
        assert_eq!(fg_engine_mb(h.0, user.as_ptr(), mail.as_ptr(), ptr::null(), 40 * DAY_MS, &mut later_mb), FgStatus::Ok);
        assert_eq!(fg_engine_mb(h.0, user.as_ptr(), mail.as_ptr(), ctx.as_ptr(), 10 * DAY_MS, &mut local), FgStatus::Ok);
    }
    assert!(now_mb > 0.0);
    assert!(later_mb < now_mb);
    assert_eq!(local, now_mb);

    let u2 = c("u2");
    let users = [user.as_ptr(), u2.as_ptr()];
    let mut group = 0.0;
    let status = unsafe { fg_engine_group_mb(h.0, users.as_ptr(), 2, mail.as_ptr(), 10 * DAY_MS, &mut group) };
    assert_eq!(status, FgStatus::Ok);
    assert_eq!(group, now_mb / 2.0);
}

#[test]
fn query_returns_json() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path());
    let line = evidence(DAY_MS, "u1", "deck");
    assert_eq!(unsafe { fg_engine_ingest_evidence_line(h.0, line.as_ptr()) }, FgStatus::Ok);
    let (user, q) = (c("u1"), c("budget"));
    let mut out = ptr::null_mut();
    let status = unsafe { fg_engine_query_json(h.0, user.as_ptr(), q.as_ptr(), 0.0, ptr::null(), DAY_MS, &mut out) };
    assert_eq!(status, FgStatus::Ok);
    let json: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    unsafe { fg_string_free(out) };
    let shown = json["shown"].as_array().unwrap();
    assert_eq!(shown.len(), 3);
    assert_eq!(json["hidden_count"], 0);
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let h = open(dir.path());
    let bad = c("{not json");
    assert_eq!(unsafe { fg_engine_ingest_evidence_line(h.0, bad.as_ptr()) }, FgStatus::InvalidInput);
    assert!(last_error().contains("malformed evidence"));

    let later = evidence(5 * DAY_MS, "u1", "mail");
    let earlier = evidence(DAY_MS, "u1", "mail");
    unsafe {
        assert_eq!(fg_engine_ingest_evidence_line(h.0, later.as_ptr()), FgStatus::Ok);
        assert_eq!(fg_engine_ingest_evidence_line(h.0, earlier.as_ptr()), FgStatus::ClockRegression);
    }

    let (user, ghost) = (c("u1"), c("ghost"));
    let mut mb = -1.0;
    let status = unsafe { fg_engine_mb(h.0, user.as_ptr(), ghost.as_ptr(), ptr::null(), 0, &mut mb) };
    assert_eq!(status, FgStatus::UnknownThing);
    assert!(last_error().contains("ghost"));

    let mut group = 0.0;
    let mail = c("mail");
    let status = unsafe { fg_engine_group_mb(h.0, ptr::null(), 0, mail.as_ptr(), 0, &mut group) };
    assert_eq!(status, FgStatus::InvalidInput);

    let mut out = ptr::null_mut();
    let q = c("budget");
    let status = unsafe { fg_engine_query_json(h.0, user.as_ptr(), q.as_ptr(), 1.5, ptr::null(), 0, &mut out) };
    assert_eq!(status, FgStatus::InvalidInput);
    assert!(out.is_null());
}

#[test]
fn missing_snapshot_is_io() {
    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().join("absent.jsonl").to_str().unwrap());
    let mut engine = ptr::null_mut();
    let status = unsafe { fg_engine_new_from_snapshot(path.as_ptr(), ptr::null(), &mut engine) };
    assert_eq!(status, FgStatus::Io);
    assert!(engine.is_null());
    let status = unsafe { fg_engine_new_from_snapshot(ptr::null(), ptr::null(), &mut engine) };
    assert_eq!(status, FgStatus::NullArgument);
}

#[test]
fn free_accepts_null() {
    unsafe {
        fg_engine_free(ptr::null_mut());
        fg_string_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/forgetd.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "fg_engine_new_from_snapshot",
        "fg_engine_free",
        "fg_engine_ingest_evidence_line",
        "fg_engine_mb",
        "fg_engine_group_mb",
        "fg_engine_query_json",
        "fg_string_free",
        "fg_last_error_message",
        "fg_version",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .output()
        else {
            eprintln!("{compiler} not available, skipping");
            continue;
        };
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
