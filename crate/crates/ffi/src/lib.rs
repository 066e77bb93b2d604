//! C ABI over the `dimix` simulator.
//!
//! Every fallible call returns a [`DimixStatus`]; on failure the message is
//! available from [`dimix_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dimix::analysis::a_constant;
use dimix::cli::{ExperimentConfig, Setup};
use dimix::dimix::{Metric, RunTrace};
use dimix::lemma_oracle::run_suite;
use dimix::noise::{stochastic_quantize, zeta};
use dimix::rng::{stream, Purpose};
use dimix::topology::validate_schedule;
use dimix::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Diverged = 4,
    Singular = 5,
    BelowThreshold = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimixMetric {
    LossPooled = 0,
    LossWeighted = 1,
    DeviationSq = 2,
    DistOptSq = 3,
}

impl From<DimixMetric> for Metric {
    fn from(m: DimixMetric) -> Self {
        match m {
            DimixMetric::LossPooled => Metric::LossPooled,
            DimixMetric::LossWeighted => Metric::LossWeighted,
            DimixMetric::DeviationSq => Metric::DeviationSq,
            DimixMetric::DistOptSq => Metric::DistOptSq,
        }
    }
}

/// A configured experiment: network, objectives, noise and step sizes.
pub struct DimixExperiment {
    setup: Setup,
}

/// Metrics of one run.
pub struct DimixTrace {
    trace: RunTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DimixStatus {
    match err {
        Error::Config { .. } | Error::TomlDe(_) | Error::TomlSer(_) | Error::MatrixFile(_) => {
            DimixStatus::Config
        }
        Error::Diverged { .. } => DimixStatus::Diverged,
        Error::Singular { .. } => DimixStatus::Singular,
        Error::BelowThreshold { .. } => DimixStatus::BelowThreshold,
        Error::Io(_) | Error::Csv(_) => DimixStatus::Io,
        _ => DimixStatus::InvalidArgument,
    }
}

fn guarded(f: impl FnOnce() -> Result<(), (DimixStatus, String)>) -> DimixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DimixStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DimixStatus::Panic
        }
    }
}

fn lift<T>(r: dimix::Result<T>) -> Result<T, (DimixStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (DimixStatus, String) {
    (DimixStatus::NullPointer, format!("{what} is null"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dimix_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dimix_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds an experiment from TOML config text.
///
/// # Safety
/// `config_toml` must be a valid NUL-terminated string and `out` a valid
/// pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn dimix_experiment_new(
    config_toml: *const c_char,
    out: *mut *mut DimixExperiment,
) -> DimixStatus {
    guarded(|| {
        if config_toml.is_null() {
            return Err(null("config_toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(config_toml).to_str().map_err(|e| {
            (
                DimixStatus::InvalidArgument,
                format!("config is not UTF-8: {e}"),
            )
        })?;
        let config = lift(ExperimentConfig::parse(text))?;
        let setup = lift(config.build())?;
        *out = Box::into_raw(Box::new(DimixExperiment { setup }));
        Ok(())
    })
}

/// # Safety
/// `exp` must be NULL or a handle from [`dimix_experiment_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dimix_experiment_free(exp: *mut DimixExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Number of agents and state dimension.
///
/// # Safety
/// `exp` must be a live handle; `n` and `d` valid writable pointers.
#[no_mangle]
pub unsafe extern "C" fn dimix_experiment_shape(
    exp: *const DimixExperiment,
    n: *mut usize,
    d: *mut usize,
) -> DimixStatus {
    guarded(|| {
        let exp = exp.as_ref().ok_or_else(|| null("exp"))?;
        if n.is_null() || d.is_null() {
            return Err(null("n/d"));
        }
        *n = exp.setup.experiment.n();
        *d = exp.setup.experiment.dim();
        Ok(())
    })
}

/// Copies the optimum `x*` into `buf` (length at least `d`).
///
/// # Safety
/// `exp` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dimix_experiment_optimum(
    exp: *const DimixExperiment,
    buf: *mut f64,
    len: usize,
) -> DimixStatus {
    guarded(|| {
        let exp = exp.as_ref().ok_or_else(|| null("exp"))?;
        let x = &exp.setup.experiment.x_star;
        copy_out(x.as_slice(), buf, len)
    })
}

/// Checks the mixing schedule for `horizon` iterations; `passed` receives
/// 1 or 0.
///
/// # Safety
/// `exp` must be a live handle and `passed` a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dimix_experiment_validate(
    exp: *const DimixExperiment,
    horizon: u64,
    passed: *mut i32,
) -> DimixStatus {
    guarded(|| {
        let exp = exp.as_ref().ok_or_else(|| null("exp"))?;
        if passed.is_null() {
            return Err(null("passed"));
        }
        *passed = validate_schedule(&exp.setup.experiment.schedule, horizon).passed() as i32;
        Ok(())
    })
}

/// Runs `horizon` iterations with the given seed. A diverged run still
/// yields a trace, flagged by [`dimix_trace_aborted`].
///
/// # Safety
/// `exp` must be a live handle and `out` a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dimix_experiment_run(
    exp: *const DimixExperiment,
    horizon: u64,
    seed: u64,
    out: *mut *mut DimixTrace,
) -> DimixStatus {
    guarded(|| {
        let exp = exp.as_ref().ok_or_else(|| null("exp"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let trace = lift(exp.setup.experiment.run(horizon, seed))?;
        *out = Box::into_raw(Box::new(DimixTrace { trace }));
        Ok(())
    })
}

/// # Safety
/// `trace` must be NULL or a handle from [`dimix_experiment_run`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dimix_trace_free(trace: *mut DimixTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of recorded iterations (0 for NULL).
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dimix_trace_len(trace: *const DimixTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.records.len())
}

/// 1 if the run diverged before its horizon, 0 otherwise.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dimix_trace_aborted(trace: *const DimixTrace) -> i32 {
    trace.as_ref().is_some_and(|t| !t.trace.completed()) as i32
}

/// Copies one metric series (entry `k` is iteration `k+1`) into `buf`.
///
/// # Safety
/// `trace` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dimix_trace_metric(
    trace: *const DimixTrace,
    metric: DimixMetric,
    buf: *mut f64,
    len: usize,
) -> DimixStatus {
    guarded(|| {
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        copy_out(&trace.trace.series(metric.into()), buf, len)
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (DimixStatus, String)> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < src.len() {
        return Err((
            DimixStatus::BufferTooSmall,
            format!("need {} entries, got {len}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Stochastic `s`-level quantization of `x` into `out`, seeded.
///
/// # Safety
/// `x` must be valid for `len` reads and `out` for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dimix_quantize(
    x: *const f64,
    len: usize,
    levels: u32,
    seed: u64,
    out: *mut f64,
) -> DimixStatus {
    guarded(|| {
        if x.is_null() || out.is_null() {
            return Err(null("x/out"));
        }
        if levels == 0 {
            return Err((DimixStatus::InvalidArgument, "levels must be >= 1".into()));
        }
        let input = std::slice::from_raw_parts(x, len);
        let q = stochastic_quantize(input, levels, &mut stream(seed, Purpose::Noise));
        ptr::copy_nonoverlapping(q.as_ptr(), out, len);
        Ok(())
    })
}

/// The quantizer's level draw `ζ(t, s)` with an explicit uniform `u`.
///
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dimix_zeta(t: f64, levels: u32, u: f64, out: *mut u32) -> DimixStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lift(zeta(t, levels, u))?;
        Ok(())
    })
}

/// The sum-bound constant `A(a, σ, δ)`.
///
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dimix_a_constant(
    a: f64,
    sigma: f64,
    delta: f64,
    out: *mut f64,
) -> DimixStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lift(a_constant(a, sigma, delta))?;
        Ok(())
    })
}

/// Runs every randomized lemma check; `violations` receives the total.
///
/// # Safety
/// `violations` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dimix_lemma_suite(
    seed: u64,
    instances: u64,
    violations: *mut usize,
) -> DimixStatus {
    guarded(|| {
        if violations.is_null() {
            return Err(null("violations"));
        }
        *violations = run_suite(seed, instances).violations();
        Ok(())
    })
}
