//! C ABI over the switchbench library.
//!
//! Conventions:
//!
//! * Every fallible function returns an [`SbStatus`] and writes results through
//!   out-pointers. Out-pointers are left untouched on failure.
//! * On failure, [`sb_last_error`] returns a message for the calling thread.
//! * Opaque handles ([`SbFactorModel`], [`SbConfig`]) are created by the
//!   library and must be released with their `_free` function.
//! * Strings are NUL-terminated UTF-8. Missing matrix cells are NaN.
//! * Panics never cross the boundary; they are reported as `SB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use switchbench::commands::{cmd_replay, cmd_run, load_delta_input, CommandError};
use switchbench::config::RunConfig;
use switchbench::stats::factor::{analyze, DeltaMatrix, FactorModel};
use switchbench::stats::{bca_ci, StatsError};
use switchbench::tasks::coqa::token_f1;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Arguments were well-formed but rejected (bad level, non-finite data,
    /// unidentifiable factor design, ...).
    InvalidArgument = 3,
    /// An index was outside the model list.
    OutOfRange = 4,
    /// The requested quantity is undefined for this input (e.g. R² of
    /// effects with no variance).
    Undefined = 5,
    /// Reading or writing a file failed.
    Io = 6,
    /// The run configuration could not be loaded or validated.
    Config = 7,
    /// A run or replay failed after starting.
    Failed = 8,
    /// The library panicked; this is a bug.
    Panic = 9,
}

/// Fitted additive factor model (opaque).
pub struct SbFactorModel(FactorModel);

/// Loaded run configuration (opaque).
pub struct SbConfig(RunConfig);

/// Counters from [`sb_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SbRunCounts {
    pub planned: usize,
    pub skipped: usize,
    pub completed: usize,
    pub failed: usize,
    pub generation_calls: u64,
}

/// Outcome of [`sb_replay`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SbReplayResult {
    /// Mean switched-minus-baseline score.
    pub delta: f64,
    /// 95% BCa interval for `delta`.
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Episodes replayed.
    pub n: usize,
    /// Whether `delta` breaches the configured risk threshold.
    pub flagged: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SbStatus, String);

impl From<CommandError> for Failure {
    fn from(e: CommandError) -> Self {
        let status = match &e {
            CommandError::Config(_) => SbStatus::Config,
            CommandError::Io { .. } => SbStatus::Io,
            CommandError::Stats(_) | CommandError::Parse { .. } => SbStatus::InvalidArgument,
            _ => SbStatus::Failed,
        };
        Failure(status, e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        Failure(SbStatus::InvalidArgument, e.to_string())
    }
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SbStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SbStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    match (p.is_null(), n) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(null(what)),
        (false, n) => Ok(std::slice::from_raw_parts(p, n)),
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sb_version() -> *const c_char {
    concat!("switchbench ", env!("CARGO_PKG_VERSION"), "\0")
        .as_ptr()
        .cast()
}

/// Message describing the calling thread's most recent failure, or null if
/// the last call succeeded. Valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn sb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Two-sided BCa interval for the mean of `samples[0..n]`.
///
/// # Safety
/// `samples` must point to `n` doubles; `lo` and `hi` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sb_bca_ci(
    samples: *const f64,
    n: usize,
    resamples: usize,
    seed: u64,
    level: f64,
    lo: *mut f64,
    hi: *mut f64,
) -> SbStatus {
    guard(|| {
        let samples = slice_arg(samples, n, "samples")?;
        let (lo, hi) = (out(lo, "lo")?, out(hi, "hi")?);
        let ci = bca_ci(samples, resamples, seed, level)?;
        (*lo, *hi) = (ci.lo, ci.hi);
        Ok(())
    })
}

/// Token-overlap F1 of `prediction` against the best of `n_gold` references.
///
/// # Safety
/// `gold` must point to `n_gold` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sb_token_f1(
    prediction: *const c_char,
    gold: *const *const c_char,
    n_gold: usize,
    f1: *mut f64,
) -> SbStatus {
    guard(|| {
        let prediction = str_arg(prediction, "prediction")?;
        let gold = slice_arg(gold, n_gold, "gold")?
            .iter()
            .map(|&g| str_arg(g, "gold answer"))
            .collect::<Result<Vec<_>, _>>()?;
        *out(f1, "f1")? = token_f1(prediction, &gold).value();
        Ok(())
    })
}

fn fit(matrix: DeltaMatrix, model: *mut *mut SbFactorModel) -> Result<(), Failure> {
    let fitted = analyze(&matrix)?;
    // SAFETY: checked non-null by the callers before any work is done.
    unsafe { *model = Box::into_raw(Box::new(SbFactorModel(fitted))) };
    Ok(())
}

/// Fits the additive model (with leave-one-out R²) to a `k`×`k` row-major
/// matrix of switch effects. Row = prefix model, column = suffix model.
/// Diagonal entries are ignored; NaN marks a missing cell.
///
/// # Safety
/// `names` must point to `k` strings and `values` to `k * k` doubles.
#[no_mangle]
pub unsafe extern "C" fn sb_factor_fit(
    names: *const *const c_char,
    values: *const f64,
    k: usize,
    model: *mut *mut SbFactorModel,
) -> SbStatus {
    guard(|| {
        if model.is_null() {
            return Err(null("model"));
        }
        let names = slice_arg(names, k, "names")?
            .iter()
            .map(|&n| str_arg(n, "model name").map(str::to_owned))
            .collect::<Result<Vec<_>, _>>()?;
        let cells = slice_arg(values, k * k, "values")?;
        let rows = cells
            .chunks(k.max(1))
            .map(|r| r.iter().map(|&v| (!v.is_nan()).then_some(v)).collect())
            .collect();
        fit(DeltaMatrix::new(names, rows)?, model)
    })
}

/// Fits the additive model to a delta table (CSV) or matrix file (JSON).
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sb_factor_fit_file(
    path: *const c_char,
    model: *mut *mut SbFactorModel,
) -> SbStatus {
    guard(|| {
        if model.is_null() {
            return Err(null("model"));
        }
        let (matrix, _, _) = load_delta_input(Path::new(str_arg(path, "path")?))?;
        fit(matrix, model)
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from `sb_factor_fit*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sb_factor_free(model: *mut SbFactorModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of models; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_factor_len(model: *const SbFactorModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.models.len())
}

/// Name of model `i`, owned by the handle.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_factor_name(
    model: *const SbFactorModel,
    i: usize,
    name: *mut *const c_char,
) -> SbStatus {
    thread_local! {
        static NAMES: RefCell<Vec<CString>> = const { RefCell::new(Vec::new()) };
    }
    guard(|| {
        let m = &handle(model, "model")?.0;
        let out = out(name, "name")?;
        let s = m.models.get(i).ok_or_else(|| range(i, m.models.len()))?;
        let c = CString::new(s.as_str())
            .map_err(|_| Failure(SbStatus::InvalidArgument, "name has NUL".into()))?;
        // Names live until the next call on this thread.
        NAMES.with(|n| {
            let mut n = n.borrow_mut();
            n.clear();
            n.push(c);
            *out = n[0].as_ptr();
        });
        Ok(())
    })
}

fn range(i: usize, len: usize) -> Failure {
    Failure(
        SbStatus::OutOfRange,
        format!("index {i} out of range for {len} models"),
    )
}

/// Grand mean μ.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_factor_mu(model: *const SbFactorModel, mu: *mut f64) -> SbStatus {
    guard(|| {
        *out(mu, "mu")? = handle(model, "model")?.0.mu;
        Ok(())
    })
}

/// Prefix influence α of model `i`.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_factor_alpha(
    model: *const SbFactorModel,
    i: usize,
    alpha: *mut f64,
) -> SbStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        *out(alpha, "alpha")? = *m.alpha.get(i).ok_or_else(|| range(i, m.alpha.len()))?;
        Ok(())
    })
}

/// Suffix susceptibility β of model `i`.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_factor_beta(
    model: *const SbFactorModel,
    i: usize,
    beta: *mut f64,
) -> SbStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        *out(beta, "beta")? = *m.beta.get(i).ok_or_else(|| range(i, m.beta.len()))?;
        Ok(())
    })
}

/// In-sample and leave-one-out R². Returns `SB_STATUS_UNDEFINED` (and
/// writes nothing) if either is undefined.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sb_factor_r2(
    model: *const SbFactorModel,
    in_sample: *mut f64,
    loo: *mut f64,
) -> SbStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let (a, b) = (out(in_sample, "in_sample")?, out(loo, "loo")?);
        match (m.r2_in_sample, m.r2_loo) {
            (Some(r2), Some(l)) => {
                (*a, *b) = (r2, l);
                Ok(())
            }
            _ => Err(Failure(
                SbStatus::Undefined,
                "R2 undefined: observed effects have no variance".into(),
            )),
        }
    })
}

/// Loads and validates a run configuration (TOML). Relative paths inside
/// resolve against the file's directory.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sb_config_load(
    path: *const c_char,
    config: *mut *mut SbConfig,
) -> SbStatus {
    guard(|| {
        let config = out(config, "config")?;
        let cfg = RunConfig::load(Path::new(str_arg(path, "path")?)).map_err(CommandError::from)?;
        *config = Box::into_raw(Box::new(SbConfig(cfg)));
        Ok(())
    })
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
/// `config` must come from `sb_config_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sb_config_free(config: *mut SbConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs (or resumes) the switch matrix described by `config`.
///
/// # Safety
/// `config` must be a live handle and `counts` writable.
#[no_mangle]
pub unsafe extern "C" fn sb_run(config: *const SbConfig, counts: *mut SbRunCounts) -> SbStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.0;
        let counts = out(counts, "counts")?;
        let s = cmd_run(cfg)?;
        *counts = SbRunCounts {
            planned: s.planned,
            skipped: s.skipped,
            completed: s.completed,
            failed: s.failed,
            generation_calls: s.generation_calls,
        };
        Ok(())
    })
}

/// Replays `prefix`'s cached conversations through `candidate` and
/// estimates the drift of switching.
///
/// # Safety
/// `config` must be a live handle; strings NUL-terminated; `result` writable.
#[no_mangle]
pub unsafe extern "C" fn sb_replay(
    config: *const SbConfig,
    prefix: *const c_char,
    candidate: *const c_char,
    result: *mut SbReplayResult,
) -> SbStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.0;
        let (prefix, candidate) = (str_arg(prefix, "prefix")?, str_arg(candidate, "candidate")?);
        let result = out(result, "result")?;
        let r = cmd_replay(cfg, prefix, candidate)?;
        *result = SbReplayResult {
            delta: r.delta,
            ci_lo: r.ci.lo,
            ci_hi: r.ci.hi,
            n: r.n,
            flagged: r.flagged,
        };
        Ok(())
    })
}
