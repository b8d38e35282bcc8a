//! C ABI for the blow-up laboratory core.
//!
//! Opaque handles own the Rust objects; every function returns a status
//! code (or null for constructors) and never unwinds across the
//! boundary. `bl_last_error` returns a thread-local message for the most
//! recent failure. The committed header `include/blowlab.h` is generated
//! from this file (`cargo build -p blowlab-capi --features gen-header`).

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use blowlab::compact::{build_compactified, CompactOptions, CompactifiedTrace};
use blowlab::ode::{integrate, Mode, OdeOptions, OdeTrace};
use blowlab::params::{derive_constants, validate, ParameterSet};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ValidationFailed = 3,
    NumericalFailure = 4,
    NotAvailable = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

/// Message for the most recent error on this thread. Borrowed pointer;
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn bl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque parameter set.
pub struct BlParams(ParameterSet);

/// Opaque reference trajectory (parameters + derived constants + trace).
pub struct BlTrace {
    params: ParameterSet,
    trace: OdeTrace,
}

/// Opaque compactified trace.
pub struct BlCompact {
    ct: CompactifiedTrace,
}

/// Flat mirror of the derived closed-form constants. Optional entries
/// come with a `has_*` flag instead of a sentinel.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BlDerived {
    pub triangle: f64,
    pub a_bar: f64,
    pub c_bar: f64,
    pub b_coef: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub c_c: f64,
    pub c_d: f64,
    pub c_e: f64,
    pub has_c_e: c_int,
    pub t_star: f64,
    pub t_upper: f64,
    pub has_t_upper: c_int,
    pub beta_breve: f64,
    pub has_beta_breve: c_int,
    pub b_geom: f64,
    pub q_mag: f64,
}

/// One sampled state of the compactified trace.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BlCompactPoint {
    pub tau: f64,
    pub h_up: f64,
    pub f: f64,
    pub f0: f64,
    pub chi_over_b: f64,
    pub g_over_b: f64,
    pub xi: f64,
    pub xi_cap: f64,
    pub s_val: f64,
}

/// Columns addressable through the bulk copy calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlColumn {
    Time = 0,
    F = 1,
    F0 = 2,
    GComp = 3,
    Tau = 4,
    HUp = 5,
    ChiUp = 6,
    GFrak = 7,
    Xi = 8,
    XiCap = 9,
    SVal = 10,
}

fn guard<T>(f: impl FnOnce() -> BlStatus + std::panic::UnwindSafe, _tag: T) -> BlStatus {
    match catch_unwind(f) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            BlStatus::Panic
        }
    }
}

/// New parameter set with the built-in defaults. Free with
/// `bl_params_free`.
#[no_mangle]
pub extern "C" fn bl_params_new() -> *mut BlParams {
    Box::into_raw(Box::new(BlParams(ParameterSet::default())))
}

/// Parse a TOML parameter file body. Returns null on parse failure (see
/// `bl_last_error`).
///
/// # Safety
/// `text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bl_params_from_toml(text: *const c_char) -> *mut BlParams {
    if text.is_null() {
        set_error("null text");
        return ptr::null_mut();
    }
    let s = match CStr::from_ptr(text).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("text is not valid UTF-8");
            return ptr::null_mut();
        }
    };
    match toml::from_str::<ParameterSet>(s) {
        Ok(p) => Box::into_raw(Box::new(BlParams(p))),
        Err(e) => {
            set_error(&format!("parse: {e}"));
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `p` must come from a `bl_params_*` constructor (or be null).
#[no_mangle]
pub unsafe extern "C" fn bl_params_free(p: *mut BlParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn field_mut<'a>(p: &'a mut ParameterSet, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "a" => &mut p.a,
        "b" => &mut p.b,
        "c" => &mut p.c,
        "k" => &mut p.k,
        "m2" => &mut p.m2,
        "beta" => &mut p.beta,
        "beta0" => &mut p.beta0,
        "t0" => &mut p.t0,
        "A" => &mut p.comp_a,
        "delta0" => &mut p.delta0,
        "sigma0" => &mut p.sigma0,
        _ => return None,
    })
}

/// Set one parameter by its config key ("a", "b", ..., "A", "delta0").
///
/// # Safety
/// `p` must be a live handle, `key` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bl_params_set(p: *mut BlParams, key: *const c_char, value: f64) -> BlStatus {
    if p.is_null() || key.is_null() {
        set_error("null argument");
        return BlStatus::NullPointer;
    }
    let key = match CStr::from_ptr(key).to_str() {
        Ok(k) => k,
        Err(_) => {
            set_error("key is not valid UTF-8");
            return BlStatus::InvalidArgument;
        }
    };
    match field_mut(&mut (*p).0, key) {
        Some(slot) => {
            *slot = value;
            BlStatus::Ok
        }
        None => {
            set_error(&format!("unknown key: {key}"));
            BlStatus::InvalidArgument
        }
    }
}

/// Read one parameter by key.
///
/// # Safety
/// `p` and `out` must be valid; `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bl_params_get(
    p: *const BlParams,
    key: *const c_char,
    out: *mut f64,
) -> BlStatus {
    if p.is_null() || key.is_null() || out.is_null() {
        set_error("null argument");
        return BlStatus::NullPointer;
    }
    let key = match CStr::from_ptr(key).to_str() {
        Ok(k) => k,
        Err(_) => return BlStatus::InvalidArgument,
    };
    let mut copy = (*p).0;
    match field_mut(&mut copy, key) {
        Some(slot) => {
            *out = *slot;
            BlStatus::Ok
        }
        None => {
            set_error(&format!("unknown key: {key}"));
            BlStatus::InvalidArgument
        }
    }
}

/// Run the assumption/range checks: Ok when everything passes,
/// ValidationFailed otherwise (message lists the failed checks).
///
/// # Safety
/// `p` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bl_params_validate(p: *const BlParams) -> BlStatus {
    if p.is_null() {
        set_error("null params");
        return BlStatus::NullPointer;
    }
    let report = validate(&(*p).0);
    if report.all_passed() {
        BlStatus::Ok
    } else {
        let names: Vec<&str> = report.failed().iter().map(|c| c.name).collect();
        set_error(&format!("failed checks: {}", names.join(", ")));
        BlStatus::ValidationFailed
    }
}

/// Fill the flat derived-constants struct.
///
/// # Safety
/// `p` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bl_derived_compute(p: *const BlParams, out: *mut BlDerived) -> BlStatus {
    if p.is_null() || out.is_null() {
        set_error("null argument");
        return BlStatus::NullPointer;
    }
    let params = (*p).0;
    guard(
        AssertUnwindSafe(|| match derive_constants(&params) {
            Ok(d) => {
                *out = BlDerived {
                    triangle: d.triangle,
                    a_bar: d.a_bar,
                    c_bar: d.c_bar,
                    b_coef: d.b_coef,
                    c_a: d.c_a,
                    c_b: d.c_b,
                    c_c: d.c_c,
                    c_d: d.c_d,
                    c_e: d.c_e.unwrap_or(f64::NAN),
                    has_c_e: d.c_e.is_some() as c_int,
                    t_star: d.t_star,
                    t_upper: d.t_upper.unwrap_or(f64::NAN),
                    has_t_upper: d.t_upper.is_some() as c_int,
                    beta_breve: d.beta_breve.unwrap_or(f64::NAN),
                    has_beta_breve: d.beta_breve.is_some() as c_int,
                    b_geom: d.b_geom,
                    q_mag: d.q_mag,
                };
                BlStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                BlStatus::NumericalFailure
            }
        }),
        (),
    )
}

/// Integrate the reference problem in blow-up mode (positive `cap`) or
/// to the horizon `t_end` (when `t_end > 0`; `cap` ignored then).
/// Returns null on failure.
///
/// # Safety
/// `p` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bl_trace_run(
    p: *const BlParams,
    t_end: f64,
    cap: f64,
    samples: usize,
) -> *mut BlTrace {
    if p.is_null() {
        set_error("null params");
        return ptr::null_mut();
    }
    let params = (*p).0;
    let result = catch_unwind(|| {
        let d = derive_constants(&params)?;
        let opts = OdeOptions {
            mode: if t_end > 0.0 { Mode::Horizon(t_end) } else { Mode::BlowUp },
            cap: if cap > 0.0 { cap } else { 1e8 },
            samples: samples.clamp(16, 1 << 20),
            ..Default::default()
        };
        integrate(&params, &d, &opts)
    });
    match result {
        Ok(Ok(trace)) => Box::into_raw(Box::new(BlTrace { params, trace })),
        Ok(Err(e)) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `t` must come from `bl_trace_run` (or be null).
#[no_mangle]
pub unsafe extern "C" fn bl_trace_free(t: *mut BlTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples in the trace.
///
/// # Safety
/// `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bl_trace_len(t: *const BlTrace) -> usize {
    if t.is_null() {
        return 0;
    }
    (*t).trace.len()
}

/// Copy one column into `out` (capacity `len`; returns the number of
/// values written through `written`).
///
/// # Safety
/// `out` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bl_trace_copy(
    t: *const BlTrace,
    column: BlColumn,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> BlStatus {
    if t.is_null() || out.is_null() || written.is_null() {
        set_error("null argument");
        return BlStatus::NullPointer;
    }
    let tr = &(*t).trace;
    let src: &[f64] = match column {
        BlColumn::Time => &tr.times,
        BlColumn::F => &tr.f,
        BlColumn::F0 => &tr.f0,
        BlColumn::GComp => &tr.g_comp,
        _ => {
            set_error("column not in this table");
            return BlStatus::InvalidArgument;
        }
    };
    let n = src.len().min(len);
    ptr::copy_nonoverlapping(src.as_ptr(), out, n);
    *written = n;
    BlStatus::Ok
}

/// Blow-up bracket of a blow-up-mode trace; NotAvailable otherwise.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bl_trace_blowup_bracket(
    t: *const BlTrace,
    lo: *mut f64,
    hi: *mut f64,
) -> BlStatus {
    if t.is_null() || lo.is_null() || hi.is_null() {
        set_error("null argument");
        return BlStatus::NullPointer;
    }
    match (*t).trace.blowup_bracket {
        Some((a, b)) => {
            *lo = a;
            *hi = b;
            BlStatus::Ok
        }
        None => {
            set_error("trace has no blow-up bracket (horizon mode)");
            BlStatus::NotAvailable
        }
    }
}

/// Build the compactified trace from a reference trace. Returns null on
/// failure.
///
/// # Safety
/// `t` must be a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn bl_compact_build(t: *const BlTrace, tau_floor: f64) -> *mut BlCompact {
    if t.is_null() {
        set_error("null trace");
        return ptr::null_mut();
    }
    let params = (*t).params;
    let trace = (*t).trace.clone();
    let result = catch_unwind(move || {
        let d = derive_constants(&params)?;
        let opts = CompactOptions {
            tau_floor: if tau_floor > 0.0 { tau_floor } else { 1e-8 },
            ..Default::default()
        };
        build_compactified(&trace, &params, &d, &opts)
    });
    match result {
        Ok(Ok(ct)) => Box::into_raw(Box::new(BlCompact { ct })),
        Ok(Err(e)) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic");
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `c` must come from `bl_compact_build` (or be null).
#[no_mangle]
pub unsafe extern "C" fn bl_compact_free(c: *mut BlCompact) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Number of grid points in the compactified trace.
///
/// # Safety
/// `c` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bl_compact_len(c: *const BlCompact) -> usize {
    if c.is_null() {
        return 0;
    }
    (*c).ct.len()
}

/// Copy one column of the compactified table.
///
/// # Safety
/// `out` must point to at least `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bl_compact_copy(
    c: *const BlCompact,
    column: BlColumn,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> BlStatus {
    if c.is_null() || out.is_null() || written.is_null() {
        set_error("null argument");
        return BlStatus::NullPointer;
    }
    let ct = &(*c).ct;
    let src: &[f64] = match column {
        BlColumn::Tau => &ct.tau,
        BlColumn::HUp => &ct.h_up,
        BlColumn::F => &ct.f,
        BlColumn::F0 => &ct.f0,
        BlColumn::ChiUp => &ct.chi_up,
        BlColumn::GFrak => &ct.g_frak,
        BlColumn::Xi => &ct.xi,
        BlColumn::XiCap => &ct.xi_cap,
        BlColumn::SVal => &ct.s_val,
        _ => {
            set_error("column not in this table");
            return BlStatus::InvalidArgument;
        }
    };
    let n = src.len().min(len);
    ptr::copy_nonoverlapping(src.as_ptr(), out, n);
    *written = n;
    BlStatus::Ok
}

/// Evaluate the compactified state at an arbitrary tau in [-1, 0).
///
/// # Safety
/// `c` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bl_compact_point(
    c: *const BlCompact,
    tau: f64,
    out: *mut BlCompactPoint,
) -> BlStatus {
    if c.is_null() || out.is_null() {
        set_error("null argument");
        return BlStatus::NullPointer;
    }
    if !((-1.0..0.0).contains(&tau)) {
        set_error("tau must lie in [-1, 0)");
        return BlStatus::InvalidArgument;
    }
    let pt = (*c).ct.point_at(tau);
    *out = BlCompactPoint {
        tau: pt.tau,
        h_up: pt.h_up,
        f: pt.f,
        f0: pt.f0,
        chi_over_b: pt.chi_over_b,
        g_over_b: pt.g_over_b,
        xi: pt.xi,
        xi_cap: pt.xi_cap,
        s_val: pt.s_val,
    };
    BlStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ffi_round_trip_through_the_abi() {
        unsafe {
            let p = bl_params_new();
            assert!(!p.is_null());
            let key = CString::new("beta0").unwrap();
            assert_eq!(bl_params_set(p, key.as_ptr(), 5.0), BlStatus::Ok);
            let mut v = 0.0;
            assert_eq!(bl_params_get(p, key.as_ptr(), &mut v), BlStatus::Ok);
            assert_eq!(v, 5.0);
            assert_eq!(bl_params_validate(p), BlStatus::Ok);

            let mut d = std::mem::zeroed::<BlDerived>();
            assert_eq!(bl_derived_compute(p, &mut d), BlStatus::Ok);
            assert!((d.triangle - 5.0 / 3.0).abs() < 1e-14);
            assert_eq!(d.has_t_upper, 1);

            let t = bl_trace_run(p, 0.0, 1e8, 512);
            assert!(!t.is_null(), "{:?}", CStr::from_ptr(bl_last_error()));
            let n = bl_trace_len(t);
            assert!(n > 100);
            let mut col = vec![0.0; n];
            let mut written = 0usize;
            assert_eq!(
                bl_trace_copy(t, BlColumn::F, col.as_mut_ptr(), n, &mut written),
                BlStatus::Ok
            );
            assert_eq!(written, n);
            assert_eq!(col[0], 1.0);
            let (mut lo, mut hi) = (0.0, 0.0);
            assert_eq!(bl_trace_blowup_bracket(t, &mut lo, &mut hi), BlStatus::Ok);
            assert!(lo < hi);

            let c = bl_compact_build(t, 1e-8);
            assert!(!c.is_null(), "{:?}", CStr::from_ptr(bl_last_error()));
            let mut pt = std::mem::zeroed::<BlCompactPoint>();
            assert_eq!(bl_compact_point(c, -1.0, &mut pt), BlStatus::Ok);
            assert!((pt.h_up - 1.0).abs() < 1e-12);
            assert_eq!(bl_compact_point(c, 0.5, &mut pt), BlStatus::InvalidArgument);

            bl_compact_free(c);
            bl_trace_free(t);
            bl_params_free(p);
        }
    }

    #[test]
    fn null_and_bad_inputs_are_status_codes() {
        unsafe {
            assert_eq!(bl_params_validate(ptr::null()), BlStatus::NullPointer);
            let p = bl_params_new();
            let bad = CString::new("nope").unwrap();
            assert_eq!(bl_params_set(p, bad.as_ptr(), 1.0), BlStatus::InvalidArgument);
            let msg = CStr::from_ptr(bl_last_error()).to_str().unwrap();
            assert!(msg.contains("unknown key"));
            // parse failure surfaces through the error channel
            let junk = CString::new("this is = not toml ]").unwrap();
            assert!(bl_params_from_toml(junk.as_ptr()).is_null());
            bl_params_free(p);
        }
    }

    #[test]
    fn validation_failure_reported() {
        unsafe {
            let p = bl_params_new();
            let key = CString::new("beta0").unwrap();
            bl_params_set(p, key.as_ptr(), 1.0);
            assert_eq!(bl_params_validate(p), BlStatus::ValidationFailed);
            let msg = CStr::from_ptr(bl_last_error()).to_str().unwrap();
            assert!(msg.contains("A1"), "{msg}");
            bl_params_free(p);
        }
    }
}
