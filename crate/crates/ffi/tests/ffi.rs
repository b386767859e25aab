use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use cfa2_ffi::*;

fn compile(src: &str) -> (Cfa2Status, *mut Cfa2Program) {
    let src = CString::new(src).unwrap();
    let mut p = ptr::null_mut();
    let status = unsafe { cfa2_compile(src.as_ptr(), ptr::null(), &mut p) };
    (status, p)
}

fn take(s: *mut c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { cfa2_string_free(s) };
    out
}

fn last_error() -> String {
    let e = cfa2_last_error();
    assert!(!e.is_null());
    unsafe { CStr::from_ptr(e) }.to_string_lossy().into_owned()
}

#[test]
fn compile_run_and_free() {
    let (status, p) = compile("(define (len l) (if (pair? l) (+ 1 (len (cdr l))) 0)) (len '(3))");
    assert_eq!(status, Cfa2Status::Ok);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cfa2_run(p, 1000, &mut out) }, Cfa2Status::Ok);
    assert_eq!(take(out), "1");
    assert!(cfa2_last_error().is_null());
    unsafe { cfa2_program_free(p) };
}

#[test]
fn analyze_writes_a_json_report() {
    let (_, p) = compile("((lambda (id) (id 1) (id 2)) (lambda (x) x))");
    for (kind, finals) in [(Cfa2Analysis::Cfa2, vec!["2"]), (Cfa2Analysis::ZeroCfa, vec!["1", "2"])] {
        let mut out = ptr::null_mut();
        assert_eq!(
            unsafe { cfa2_analyze(p, kind as i32, ptr::null(), &mut out) },
            Cfa2Status::Ok
        );
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["finals"], serde_json::json!(finals));
        assert_eq!(v["program"], "program");
    }
    unsafe { cfa2_program_free(p) };
}

#[test]
fn options_reach_the_analyzer() {
    let (_, p) = compile("(if #t 1 2)");
    let mut options = cfa2_default_options();
    options.branch_pruning = false;
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cfa2_analyze(p, 0, &options, &mut out) }, Cfa2Status::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["finals"], serde_json::json!(["1", "2"]));
    unsafe { cfa2_program_free(p) };
}

#[test]
fn errors_are_reported_with_codes() {
    let (status, p) = compile("(lambda (x)");
    assert_eq!(status, Cfa2Status::CompileError);
    assert!(p.is_null());
    assert!(!last_error().is_empty());

    let (_, p) = compile("(car 1)");
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cfa2_run(p, 1000, &mut out) }, Cfa2Status::Stuck);
    assert!(out.is_null());
    assert_eq!(
        unsafe { cfa2_analyze(p, 9, ptr::null(), &mut out) },
        Cfa2Status::InvalidArgument
    );
    assert!(last_error().contains("9"));
    unsafe { cfa2_program_free(p) };

    let (_, p) = compile("((lambda (f) (f f)) (lambda (g) (g g)))");
    assert_eq!(unsafe { cfa2_run(p, 50, &mut out) }, Cfa2Status::OutOfFuel);
    unsafe { cfa2_program_free(p) };
}

#[test]
fn null_arguments_are_rejected() {
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { cfa2_compile(ptr::null(), ptr::null(), &mut p) },
        Cfa2Status::NullArgument
    );
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cfa2_run(ptr::null(), 10, &mut out) }, Cfa2Status::NullArgument);
    unsafe {
        cfa2_program_free(ptr::null_mut());
        cfa2_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8_is_rejected() {
    let bad = [0xffu8, 0];
    let mut p = ptr::null_mut();
    let status = unsafe { cfa2_compile(bad.as_ptr().cast(), ptr::null(), &mut p) };
    assert_eq!(status, Cfa2Status::InvalidUtf8);
}

fn crate_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_is_valid_c() {
    let header = crate_dir().join("include").join("cfa2.h");
    let status = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-xc"])
        .arg(&header)
        .status()
        .expect("cc runs");
    assert!(status.success());
}

/// Links the C smoke program against the static library when cargo has
/// built it next to this test binary.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libcfa2_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin: PathBuf = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir().join("tests").join("c").join("smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("cc runs");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
