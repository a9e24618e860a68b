//! C bindings for the loop-soup sampler.
//!
//! Everything crosses the boundary through opaque handles and status codes.
//! Constructors hand a handle back through an out-parameter, every fallible
//! call returns an [`LsStatus`], and a failing call leaves a human-readable
//! message in a thread-local slot read by [`ls_last_error_message`]. Each
//! handle is released exactly once with its matching `*_free`; strings
//! returned as `char*` are released with [`ls_string_free`]. Panics never
//! cross the boundary — they are caught and reported as
//! `LS_STATUS_RUNTIME_ERROR`.
//!
//! The C header is generated by cbindgen at build time and a copy is kept in
//! `include/loopsoup.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use loopsoup::harness::{experiment_names, run_experiment, RunConfig, StatReport};
use loopsoup::lattice::{green_function, killing_from_mass, precision_matrix, Domain, Killing};
use loopsoup::mass::MassField;
use loopsoup::occupation::occupation_field;
use loopsoup::rng::StreamKey;
use loopsoup::soup::{sample_soup, LoopSoup};

/// Status code returned by every fallible call in this interface.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LsStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument failed validation; see `ls_last_error_message`.
    InvalidArgument = 2,
    /// The operation failed while running; see `ls_last_error_message`.
    RuntimeError = 3,
}

/// A finite lattice domain together with its killing rates and a dense,
/// precomputed Green's function.
pub struct LsDomain {
    domain: Domain,
    killing: Killing,
    green: Vec<f64>,
}

/// A random-walk loop soup sampled on some [`LsDomain`].
pub struct LsSoup {
    soup: LoopSoup,
    sites: usize,
    seed: u64,
}

/// A finished experiment run: pass/fail verdict plus the full report.
pub struct LsReport {
    report: StatReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Display) {
    let text = msg.to_string();
    let c = CString::new(text)
        .unwrap_or_else(|_| CString::new("error message contained an interior NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(status: LsStatus, msg: impl Display) -> LsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> LsStatus) -> LsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(LsStatus::RuntimeError, "panic caught at the C boundary"),
    }
}

fn registry() -> &'static [CString] {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    NAMES.get_or_init(|| {
        experiment_names()
            .into_iter()
            .map(|n| CString::new(n).expect("registry names contain no NUL"))
            .collect()
    })
}

/// Library version as a static, NUL-terminated string. Never null; do not
/// free.
#[no_mangle]
pub extern "C" fn ls_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Message for the most recent failing call on the current thread, or null if
/// nothing has failed yet. The pointer stays valid until the next failing
/// `ls_*` call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn ls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(msg) => msg.as_ptr(),
        None => ptr::null(),
    })
}

/// Number of named experiments in the registry.
#[no_mangle]
pub extern "C" fn ls_experiment_count() -> usize {
    registry().len()
}

/// Name of the experiment at `index` (0-based, registry order), or null if
/// the index is out of range. The pointer is static; do not free.
#[no_mangle]
pub extern "C" fn ls_experiment_name(index: usize) -> *const c_char {
    match registry().get(index) {
        Some(name) => name.as_ptr(),
        None => ptr::null(),
    }
}

/// Build a `width × height` grid domain with constant mass `mass` and
/// precompute its Green's function (dense inverse, so keep grids small).
///
/// On success writes a fresh handle to `*out`; release it with
/// [`ls_domain_free`].
///
/// # Safety
/// `out` must point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_domain_new_grid(
    width: i32,
    height: i32,
    mass: f64,
    out: *mut *mut LsDomain,
) -> LsStatus {
    guard(|| {
        let Some(slot) = (unsafe { out.as_mut() }) else {
            return fail(LsStatus::NullPointer, "out is null");
        };
        *slot = ptr::null_mut();
        let built = (|| -> loopsoup::Result<LsDomain> {
            let domain = Domain::grid(width, height)?;
            let field = MassField::constant(mass)?;
            let killing = killing_from_mass(&domain, &field)?;
            let q = precision_matrix(&domain, &killing)?;
            let g = green_function(&q)?;
            let n = domain.len();
            let mut green = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    green[i * n + j] = g[(i, j)];
                }
            }
            Ok(LsDomain {
                domain,
                killing,
                green,
            })
        })();
        match built {
            Ok(handle) => {
                *slot = Box::into_raw(Box::new(handle));
                LsStatus::Ok
            }
            Err(e) => fail(LsStatus::InvalidArgument, e),
        }
    })
}

/// Release a domain handle. Passing null is a no-op.
///
/// # Safety
/// `domain` must be null or a pointer from [`ls_domain_new_grid`] that has not
/// been freed before.
#[no_mangle]
pub unsafe extern "C" fn ls_domain_free(domain: *mut LsDomain) {
    if !domain.is_null() {
        drop(unsafe { Box::from_raw(domain) });
    }
}

/// Number of sites in the domain, written to `*out`.
///
/// # Safety
/// `domain` must be a live domain handle (or null) and `out` must point to
/// writable memory for one `uintptr_t`.
#[no_mangle]
pub unsafe extern "C" fn ls_domain_site_count(
    domain: *const LsDomain,
    out: *mut usize,
) -> LsStatus {
    guard(|| {
        let Some(d) = (unsafe { domain.as_ref() }) else {
            return fail(LsStatus::NullPointer, "domain is null");
        };
        let Some(slot) = (unsafe { out.as_mut() }) else {
            return fail(LsStatus::NullPointer, "out is null");
        };
        *slot = d.domain.len();
        LsStatus::Ok
    })
}

/// Green's function entry G(i, j) for site indices in domain order, written to
/// `*out`.
///
/// # Safety
/// `domain` must be a live domain handle (or null) and `out` must point to
/// writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn ls_domain_green(
    domain: *const LsDomain,
    i: usize,
    j: usize,
    out: *mut f64,
) -> LsStatus {
    guard(|| {
        let Some(d) = (unsafe { domain.as_ref() }) else {
            return fail(LsStatus::NullPointer, "domain is null");
        };
        let Some(slot) = (unsafe { out.as_mut() }) else {
            return fail(LsStatus::NullPointer, "out is null");
        };
        let n = d.domain.len();
        if i >= n || j >= n {
            return fail(
                LsStatus::InvalidArgument,
                format!("site index ({i}, {j}) outside a {n}-site domain"),
            );
        }
        *slot = d.green[i * n + j];
        LsStatus::Ok
    })
}

/// Sample a loop soup of intensity `lambda` on `domain`, keeping loops of
/// length at most `maxlen`. The same `(domain, lambda, maxlen, seed)` always
/// yields the same soup.
///
/// On success writes a fresh handle to `*out`; release it with
/// [`ls_soup_free`].
///
/// # Safety
/// `domain` must be a live domain handle (or null) and `out` must point to
/// writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_soup_sample(
    domain: *const LsDomain,
    lambda: f64,
    maxlen: usize,
    seed: u64,
    out: *mut *mut LsSoup,
) -> LsStatus {
    guard(|| {
        let Some(d) = (unsafe { domain.as_ref() }) else {
            return fail(LsStatus::NullPointer, "domain is null");
        };
        let Some(slot) = (unsafe { out.as_mut() }) else {
            return fail(LsStatus::NullPointer, "out is null");
        };
        *slot = ptr::null_mut();
        let key = StreamKey::root(seed).child("ffi").child("soup");
        match sample_soup(&d.domain, &d.killing, lambda, maxlen, key) {
            Ok(soup) => {
                *slot = Box::into_raw(Box::new(LsSoup {
                    soup,
                    sites: d.domain.len(),
                    seed,
                }));
                LsStatus::Ok
            }
            Err(e) => fail(LsStatus::InvalidArgument, e),
        }
    })
}

/// Release a soup handle. Passing null is a no-op.
///
/// # Safety
/// `soup` must be null or a pointer from [`ls_soup_sample`] that has not been
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn ls_soup_free(soup: *mut LsSoup) {
    if !soup.is_null() {
        drop(unsafe { Box::from_raw(soup) });
    }
}

/// Number of loops in the soup, written to `*out`.
///
/// # Safety
/// `soup` must be a live soup handle (or null) and `out` must point to
/// writable memory for one `uintptr_t`.
#[no_mangle]
pub unsafe extern "C" fn ls_soup_loop_count(soup: *const LsSoup, out: *mut usize) -> LsStatus {
    guard(|| {
        let Some(s) = (unsafe { soup.as_ref() }) else {
            return fail(LsStatus::NullPointer, "soup is null");
        };
        let Some(slot) = (unsafe { out.as_mut() }) else {
            return fail(LsStatus::NullPointer, "out is null");
        };
        *slot = s.soup.len();
        LsStatus::Ok
    })
}

/// Total number of lattice steps over all loops in the soup, written to
/// `*out`.
///
/// # Safety
/// `soup` must be a live soup handle (or null) and `out` must point to
/// writable memory for one `uintptr_t`.
#[no_mangle]
pub unsafe extern "C" fn ls_soup_total_steps(soup: *const LsSoup, out: *mut usize) -> LsStatus {
    guard(|| {
        let Some(s) = (unsafe { soup.as_ref() }) else {
            return fail(LsStatus::NullPointer, "soup is null");
        };
        let Some(slot) = (unsafe { out.as_mut() }) else {
            return fail(LsStatus::NullPointer, "out is null");
        };
        *slot = s.soup.loops.iter().map(|l| l.class.len()).sum();
        LsStatus::Ok
    })
}

/// Draw the occupation field of `soup` into `out[0..len]`, one value per site
/// in domain order. `len` must equal the domain's site count and the soup must
/// have been sampled on `domain`. The continuous excursion parts derive from
/// the soup's own seed, so the result is a deterministic function of
/// `(domain, soup)`.
///
/// # Safety
/// `domain` and `soup` must be live handles (or null) and `out` must point to
/// writable memory for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ls_soup_occupation(
    domain: *const LsDomain,
    soup: *const LsSoup,
    out: *mut f64,
    len: usize,
) -> LsStatus {
    guard(|| {
        let Some(d) = (unsafe { domain.as_ref() }) else {
            return fail(LsStatus::NullPointer, "domain is null");
        };
        let Some(s) = (unsafe { soup.as_ref() }) else {
            return fail(LsStatus::NullPointer, "soup is null");
        };
        if out.is_null() {
            return fail(LsStatus::NullPointer, "out is null");
        }
        let n = d.domain.len();
        if s.sites != n {
            return fail(
                LsStatus::InvalidArgument,
                format!(
                    "soup was sampled on {} sites but the domain has {n}",
                    s.sites
                ),
            );
        }
        if len != n {
            return fail(
                LsStatus::InvalidArgument,
                format!("buffer holds {len} values but the domain has {n} sites"),
            );
        }
        let key = StreamKey::root(s.seed).child("ffi").child("occ");
        match occupation_field(&d.domain, &s.soup, &d.killing, key) {
            Ok(field) => {
                let dst = unsafe { std::slice::from_raw_parts_mut(out, len) };
                dst.copy_from_slice(&field.l);
                LsStatus::Ok
            }
            Err(e) => fail(LsStatus::RuntimeError, e),
        }
    })
}

fn run_config_into_report(cfg: &RunConfig, workers: usize, slot: &mut *mut LsReport) -> LsStatus {
    match run_experiment(cfg, workers) {
        Ok(report) => {
            *slot = Box::into_raw(Box::new(LsReport { report }));
            LsStatus::Ok
        }
        Err(e) => fail(LsStatus::RuntimeError, e),
    }
}

unsafe fn experiment_config(name: *const c_char) -> Result<RunConfig, LsStatus> {
    if name.is_null() {
        return Err(fail(LsStatus::NullPointer, "name is null"));
    }
    let name = match unsafe { CStr::from_ptr(name) }.to_str() {
        Ok(s) => s,
        Err(_) => {
            return Err(fail(
                LsStatus::InvalidArgument,
                "experiment name is not valid UTF-8",
            ))
        }
    };
    RunConfig::default_for(name).map_err(|e| fail(LsStatus::InvalidArgument, e))
}

/// Run a registry experiment under its pinned default configuration.
/// `workers` sets the worker-thread count (0 means one per core). On success
/// writes a fresh report handle to `*out`; release it with
/// [`ls_report_free`].
///
/// # Safety
/// `name` must be null or a NUL-terminated string, and `out` must point to
/// writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_experiment_run_default(
    name: *const c_char,
    workers: usize,
    out: *mut *mut LsReport,
) -> LsStatus {
    guard(|| {
        let Some(slot) = (unsafe { out.as_mut() }) else {
            return fail(LsStatus::NullPointer, "out is null");
        };
        *slot = ptr::null_mut();
        let cfg = match unsafe { experiment_config(name) } {
            Ok(cfg) => cfg,
            Err(status) => return status,
        };
        run_config_into_report(&cfg, workers, slot)
    })
}

/// Run a registry experiment with an explicit seed and replica count
/// (`replicas >= 1`); everything else keeps the pinned defaults. On success
/// writes a fresh report handle to `*out`; release it with
/// [`ls_report_free`].
///
/// # Safety
/// `name` must be null or a NUL-terminated string, and `out` must point to
/// writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_experiment_run(
    name: *const c_char,
    seed: u64,
    replicas: u64,
    workers: usize,
    out: *mut *mut LsReport,
) -> LsStatus {
    guard(|| {
        let Some(slot) = (unsafe { out.as_mut() }) else {
            return fail(LsStatus::NullPointer, "out is null");
        };
        *slot = ptr::null_mut();
        if replicas == 0 {
            return fail(LsStatus::InvalidArgument, "replicas must be >= 1");
        }
        let mut cfg = match unsafe { experiment_config(name) } {
            Ok(cfg) => cfg,
            Err(status) => return status,
        };
        cfg.seed = seed;
        cfg.replicas = replicas;
        if let Err(e) = cfg.validate() {
            return fail(LsStatus::InvalidArgument, e);
        }
        run_config_into_report(&cfg, workers, slot)
    })
}

/// Release a report handle. Passing null is a no-op.
///
/// # Safety
/// `report` must be null or a pointer from an `ls_experiment_run*` call that
/// has not been freed before.
#[no_mangle]
pub unsafe extern "C" fn ls_report_free(report: *mut LsReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}

/// Whether every asserted criterion in the report passed, written to `*out`.
///
/// # Safety
/// `report` must be a live report handle (or null) and `out` must point to
/// writable memory for one `bool`.
#[no_mangle]
pub unsafe extern "C" fn ls_report_passed(report: *const LsReport, out: *mut bool) -> LsStatus {
    guard(|| {
        let Some(r) = (unsafe { report.as_ref() }) else {
            return fail(LsStatus::NullPointer, "report is null");
        };
        let Some(slot) = (unsafe { out.as_mut() }) else {
            return fail(LsStatus::NullPointer, "out is null");
        };
        *slot = r.report.passed;
        LsStatus::Ok
    })
}

/// Serialize the report to its canonical JSON form. On success writes a
/// heap-allocated, NUL-terminated string to `*out`; release it with
/// [`ls_string_free`].
///
/// # Safety
/// `report` must be a live report handle (or null) and `out` must point to
/// writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_report_json(
    report: *const LsReport,
    out: *mut *mut c_char,
) -> LsStatus {
    guard(|| {
        let Some(r) = (unsafe { report.as_ref() }) else {
            return fail(LsStatus::NullPointer, "report is null");
        };
        let Some(slot) = (unsafe { out.as_mut() }) else {
            return fail(LsStatus::NullPointer, "out is null");
        };
        *slot = ptr::null_mut();
        let json = match r.report.canonical_json() {
            Ok(j) => j,
            Err(e) => return fail(LsStatus::RuntimeError, e),
        };
        match CString::new(json) {
            Ok(c) => {
                *slot = c.into_raw();
                LsStatus::Ok
            }
            Err(_) => fail(LsStatus::RuntimeError, "report JSON contained a NUL byte"),
        }
    })
}

/// Release a string returned by this library. Passing null is a no-op.
///
/// # Safety
/// `s` must be null or a pointer returned through an `ls_*` out-parameter
/// documented to be freed here, and must not have been freed before.
#[no_mangle]
pub unsafe extern "C" fn ls_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
