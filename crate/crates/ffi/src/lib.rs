//! C interface to the analyzer.
//!
//! A program is compiled once into an opaque [`Cfa2Program`] handle and can
//! then be run or analyzed any number of times. Every fallible function
//! returns a [`Cfa2Status`]; on failure, [`cfa2_last_error`] describes the
//! problem. Strings returned through out-parameters are owned by the caller
//! and must be released with [`cfa2_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cfa2::abstract_sem::AnalyzerConfig;
use cfa2::concrete::{self, Outcome};
use cfa2::cps::CpsProgram;
use cfa2::report::{compile, report, AnalysisKind};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cfa2Status {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// The source failed to parse or validate.
    CompileError = 3,
    /// The concrete run got stuck.
    Stuck = 4,
    OutOfFuel = 5,
    InvalidArgument = 6,
    Panic = 7,
}

/// Values for the `analysis` argument of [`cfa2_analyze`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cfa2Analysis {
    Cfa2 = 0,
    ZeroCfa = 1,
    OneCfa = 2,
}

/// Analyzer switches; [`cfa2_default_options`] gives the defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cfa2Options {
    pub stack_filtering: bool,
    pub heap_widening: bool,
    pub branch_pruning: bool,
}

/// A compiled program.
pub struct Cfa2Program {
    name: String,
    prog: CpsProgram,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: Cfa2Status, msg: impl Into<String>) -> Cfa2Status {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Cfa2Status) -> Cfa2Status {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(Cfa2Status::Panic, "internal panic"))
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Cfa2Status> {
    if s.is_null() {
        return Err(fail(Cfa2Status::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(Cfa2Status::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Cfa2Status {
    let c = CString::new(s.replace('\0', " ")).expect("nul bytes removed");
    *out = c.into_raw();
    Cfa2Status::Ok
}

/// The message for the most recent failure on this thread, or null. The
/// pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn cfa2_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn cfa2_default_options() -> Cfa2Options {
    let c = AnalyzerConfig::default();
    Cfa2Options {
        stack_filtering: c.stack_filtering,
        heap_widening: c.heap_widening,
        branch_pruning: c.branch_pruning,
    }
}

/// Compiles `source`; `name` (may be null) labels reports.
///
/// # Safety
/// `source` and `name` must be null or NUL-terminated strings; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cfa2_compile(
    source: *const c_char,
    name: *const c_char,
    out: *mut *mut Cfa2Program,
) -> Cfa2Status {
    guard(|| {
        if out.is_null() {
            return fail(Cfa2Status::NullArgument, "out is null");
        }
        *out = ptr::null_mut();
        let src = match read_str(source, "source") {
            Ok(s) => s,
            Err(e) => return e,
        };
        let name = if name.is_null() {
            "program".to_string()
        } else {
            match read_str(name, "name") {
                Ok(s) => s.to_string(),
                Err(e) => return e,
            }
        };
        match compile(src) {
            Ok(prog) => {
                *out = Box::into_raw(Box::new(Cfa2Program { name, prog }));
                Cfa2Status::Ok
            }
            Err(e) => fail(Cfa2Status::CompileError, e.to_string()),
        }
    })
}

/// Runs the program on the concrete machine for at most `fuel` steps and
/// writes the printed result.
///
/// # Safety
/// `program` must come from [`cfa2_compile`]; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cfa2_run(program: *const Cfa2Program, fuel: u64, out: *mut *mut c_char) -> Cfa2Status {
    guard(|| {
        if program.is_null() || out.is_null() {
            return fail(Cfa2Status::NullArgument, "program or out is null");
        }
        *out = ptr::null_mut();
        match concrete::run(&(*program).prog, fuel) {
            Outcome::Finished(v) => write_string(out, v.to_string()),
            Outcome::OutOfFuel => fail(Cfa2Status::OutOfFuel, "out of fuel"),
            stuck @ Outcome::Stuck { .. } => fail(Cfa2Status::Stuck, stuck.to_string()),
        }
    })
}

/// Analyzes the program and writes the report as JSON. `analysis` is one
/// of [`Cfa2Analysis`]; `options` may be null for the defaults.
///
/// # Safety
/// `program` must come from [`cfa2_compile`]; `options` must be null or
/// valid; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cfa2_analyze(
    program: *const Cfa2Program,
    analysis: i32,
    options: *const Cfa2Options,
    out: *mut *mut c_char,
) -> Cfa2Status {
    guard(|| {
        if program.is_null() || out.is_null() {
            return fail(Cfa2Status::NullArgument, "program or out is null");
        }
        *out = ptr::null_mut();
        let o = if options.is_null() {
            cfa2_default_options()
        } else {
            *options
        };
        let config = AnalyzerConfig {
            stack_filtering: o.stack_filtering,
            heap_widening: o.heap_widening,
            branch_pruning: o.branch_pruning,
        };
        let kind = match analysis {
            x if x == Cfa2Analysis::Cfa2 as i32 => AnalysisKind::Cfa2,
            x if x == Cfa2Analysis::ZeroCfa as i32 => AnalysisKind::ZeroCfa,
            x if x == Cfa2Analysis::OneCfa as i32 => AnalysisKind::OneCfa,
            x => return fail(Cfa2Status::InvalidArgument, format!("unknown analysis {x}")),
        };
        let p = &*program;
        match serde_json::to_string(&report(&p.name, &p.prog, kind, config)) {
            Ok(json) => write_string(out, json),
            Err(e) => fail(Cfa2Status::InvalidArgument, e.to_string()),
        }
    })
}

/// Releases a program. Null is ignored.
///
/// # Safety
/// `program` must be null or come from [`cfa2_compile`], and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfa2_program_free(program: *mut Cfa2Program) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Releases a string written by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or come from this library, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfa2_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
