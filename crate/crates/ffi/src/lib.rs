//! C interface: opaque configuration and solution handles, status codes and
//! a thread-local last-error message.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use cifsyn::model::{ModelRegistry, SystemModel};
use cifsyn::pipeline::{self, Mode, RunConfig, RunOutput};
use cifsyn::verify::{self, VerifyConfig};
use cifsyn::Error;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifsynStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    NotConverged = 4,
    SolverFailure = 5,
    VerificationFailed = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifsynMode {
    Joint = 0,
    ScpOnly = 1,
}

/// Summary of a Monte Carlo verification.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CifsynVerifyReport {
    pub samples: usize,
    pub passed: bool,
    pub contained: bool,
    pub feasible: bool,
    pub worst_sample: usize,
    pub worst_node: usize,
    pub worst_containment: f64,
    pub min_state_margin: f64,
    pub min_input_margin: f64,
}

/// Opaque run configuration.
pub struct CifsynConfig {
    inner: RunConfig,
}

/// Opaque result of a synthesis run.
pub struct CifsynSolution {
    model: Arc<dyn SystemModel>,
    config: RunConfig,
    output: RunOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> CifsynStatus {
    match err {
        Error::Config(_) | Error::UnknownModel(_) => CifsynStatus::Config,
        Error::Contract(_) => CifsynStatus::InvalidArgument,
        Error::Io(_) | Error::Bundle { .. } => CifsynStatus::Io,
        _ => CifsynStatus::SolverFailure,
    }
}

fn fail(err: &Error) -> CifsynStatus {
    set_error(err.to_string());
    status_of(err)
}

fn guarded<F: FnOnce() -> CifsynStatus>(f: F) -> CifsynStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            CifsynStatus::Panic
        }
    }
}

fn null(what: &str) -> CifsynStatus {
    set_error(format!("{what} is null"));
    CifsynStatus::NullPointer
}

unsafe fn copy_out(values: &[f64], buf: *mut f64, len: usize) -> CifsynStatus {
    if buf.is_null() {
        return null("output buffer");
    }
    if len < values.len() {
        set_error(format!("buffer holds {len} values, {} needed", values.len()));
        return CifsynStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    CifsynStatus::Ok
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cifsyn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cifsyn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Benchmark configuration. Release with `cifsyn_config_free`.
#[no_mangle]
pub extern "C" fn cifsyn_config_default() -> *mut CifsynConfig {
    Box::into_raw(Box::new(CifsynConfig {
        inner: RunConfig::default(),
    }))
}

/// Parses a TOML configuration; `*out` receives a new handle on success.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_config_from_toml(text: *const c_char, out: *mut *mut CifsynConfig) -> CifsynStatus {
    guarded(|| {
        if text.is_null() {
            return null("text");
        }
        if out.is_null() {
            return null("out");
        }
        let Ok(s) = CStr::from_ptr(text).to_str() else {
            set_error("configuration is not valid UTF-8");
            return CifsynStatus::Config;
        };
        let cfg = match cifsyn::cli::bundle::parse_config(s, "configuration") {
            Ok(c) => c,
            Err(e) => return fail(&e),
        };
        *out = Box::into_raw(Box::new(CifsynConfig { inner: cfg }));
        CifsynStatus::Ok
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_config_free(cfg: *mut CifsynConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_config_set_mode(cfg: *mut CifsynConfig, mode: CifsynMode) -> CifsynStatus {
    guarded(|| {
        let Some(c) = cfg.as_mut() else { return null("config") };
        c.inner.problem.mode = match mode {
            CifsynMode::Joint => Mode::Joint,
            CifsynMode::ScpOnly => Mode::ScpOnly,
        };
        CifsynStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_config_set_seed(cfg: *mut CifsynConfig, seed: u64) -> CifsynStatus {
    guarded(|| {
        let Some(c) = cfg.as_mut() else { return null("config") };
        c.inner.lipschitz.seed = seed;
        CifsynStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live configuration handle.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_config_set_max_iterations(cfg: *mut CifsynConfig, n: usize) -> CifsynStatus {
    guarded(|| {
        let Some(c) = cfg.as_mut() else { return null("config") };
        if n == 0 {
            set_error("max_iterations must be at least 1");
            return CifsynStatus::InvalidArgument;
        }
        c.inner.convergence.max_iterations = n;
        CifsynStatus::Ok
    })
}

/// Runs the synthesis loop. On `Ok` or `NotConverged`, `*out` receives a
/// solution handle to release with `cifsyn_solution_free`.
///
/// # Safety
/// `cfg` must be a live configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solve(cfg: *const CifsynConfig, out: *mut *mut CifsynSolution) -> CifsynStatus {
    guarded(|| {
        let Some(c) = cfg.as_ref() else { return null("config") };
        if out.is_null() {
            return null("out");
        }
        let config = c.inner.clone();
        let model = match ModelRegistry::with_builtin().get(&config.problem.model) {
            Ok(m) => m,
            Err(e) => return fail(&e),
        };
        if let Err(e) = config.validate_for(model.as_ref()) {
            return fail(&e);
        }
        let output = match pipeline::run(model.as_ref(), &config) {
            Ok(o) => o,
            Err(f) => {
                set_error(f.to_string());
                return status_of(&f.error);
            }
        };
        let converged = output.converged;
        *out = Box::into_raw(Box::new(CifsynSolution { model, config, output }));
        if converged {
            CifsynStatus::Ok
        } else {
            set_error("iteration limit reached without convergence");
            CifsynStatus::NotConverged
        }
    })
}

/// # Safety
/// `sol` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_free(sol: *mut CifsynSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Number of intervals `N`; zero for a null handle.
///
/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_nodes(sol: *const CifsynSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.output.trajectory.horizon())
}

/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_state_dim(sol: *const CifsynSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.output.trajectory.nx())
}

/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_input_dim(sol: *const CifsynSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.output.trajectory.nu())
}

/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_iterations(sol: *const CifsynSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.output.records.len())
}

/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_converged(sol: *const CifsynSolution) -> bool {
    sol.as_ref().is_some_and(|s| s.output.converged)
}

/// Nominal states, `(N+1)·n_x` values, node-major.
///
/// # Safety
/// `sol` must be a live solution handle and `buf` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_states(sol: *const CifsynSolution, buf: *mut f64, len: usize) -> CifsynStatus {
    guarded(|| {
        let Some(s) = sol.as_ref() else { return null("solution") };
        let v: Vec<f64> = s.output.trajectory.x.iter().flat_map(|x| x.iter().copied()).collect();
        copy_out(&v, buf, len)
    })
}

/// Nominal inputs, `N·n_u` values, node-major.
///
/// # Safety
/// `sol` must be a live solution handle and `buf` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_inputs(sol: *const CifsynSolution, buf: *mut f64, len: usize) -> CifsynStatus {
    guarded(|| {
        let Some(s) = sol.as_ref() else { return null("solution") };
        let v: Vec<f64> = s.output.trajectory.u.iter().flat_map(|u| u.iter().copied()).collect();
        copy_out(&v, buf, len)
    })
}

/// Certified shape `β_k Q_k`, `n_x·n_x` values, row-major.
///
/// # Safety
/// `sol` must be a live solution handle and `buf` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_shape(
    sol: *const CifsynSolution,
    node: usize,
    buf: *mut f64,
    len: usize,
) -> CifsynStatus {
    guarded(|| {
        let Some(s) = sol.as_ref() else { return null("solution") };
        let f = &s.output.funnel;
        if node > f.horizon() {
            set_error(format!("node {node} is past the horizon {}", f.horizon()));
            return CifsynStatus::InvalidArgument;
        }
        let q = f.scaled_q(node).transpose();
        copy_out(q.as_slice(), buf, len)
    })
}

/// Feedback gain `K_k`, `n_u·n_x` values, row-major.
///
/// # Safety
/// `sol` must be a live solution handle and `buf` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_gain(
    sol: *const CifsynSolution,
    node: usize,
    buf: *mut f64,
    len: usize,
) -> CifsynStatus {
    guarded(|| {
        let Some(s) = sol.as_ref() else { return null("solution") };
        let Some(k) = s.output.funnel.k.get(node) else {
            set_error(format!("node {node} has no gain"));
            return CifsynStatus::InvalidArgument;
        };
        copy_out(k.transpose().as_slice(), buf, len)
    })
}

/// Monte Carlo rollouts with held random unit disturbances. Returns
/// `VerificationFailed` when the report does not pass; `*report` is filled
/// either way.
///
/// # Safety
/// `sol` must be a live solution handle and `report` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_verify(
    sol: *const CifsynSolution,
    samples: usize,
    seed: u64,
    report: *mut CifsynVerifyReport,
) -> CifsynStatus {
    guarded(|| {
        let Some(s) = sol.as_ref() else { return null("solution") };
        if report.is_null() {
            return null("report");
        }
        let vcfg = VerifyConfig {
            samples,
            seed,
            ..Default::default()
        };
        let r = match verify::verify(
            s.model.as_ref(),
            &s.output.trajectory,
            &s.output.funnel,
            &s.config.constraint_set(),
            &vcfg,
        ) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        *report = CifsynVerifyReport {
            samples: r.samples.len(),
            passed: r.passed(),
            contained: r.contained,
            feasible: r.feasible,
            worst_sample: r.worst.0,
            worst_node: r.worst.1,
            worst_containment: r.worst.2,
            min_state_margin: r.min_state_margin,
            min_input_margin: r.min_input_margin,
        };
        if r.passed() {
            CifsynStatus::Ok
        } else {
            set_error(format!("verification failed at node {} of sample {}", r.worst.1, r.worst.0));
            CifsynStatus::VerificationFailed
        }
    })
}

/// Writes the CSV/JSON solution bundle (without verification rows).
///
/// # Safety
/// `sol` must be a live solution handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn cifsyn_solution_write_bundle(sol: *const CifsynSolution, dir: *const c_char) -> CifsynStatus {
    guarded(|| {
        let Some(s) = sol.as_ref() else { return null("solution") };
        if dir.is_null() {
            return null("dir");
        }
        let Ok(d) = CStr::from_ptr(dir).to_str() else {
            set_error("directory is not valid UTF-8");
            return CifsynStatus::InvalidArgument;
        };
        match cifsyn::cli::write_solution(Path::new(d), s.model.as_ref(), &s.config, &s.output, None) {
            Ok(()) => CifsynStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}
