//! C interface to the `ccsoc` planner.
//!
//! Scenarios and solutions are opaque handles created and destroyed by this
//! library. Every fallible call returns a [`CcsocStatus`]; on failure the
//! message is available from [`ccsoc_last_error_message`] on the same thread.
//! Strings returned through `char **` are owned by the caller and must be
//! released with [`ccsoc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ccsoc::bounds::SampleBound;
use ccsoc::config::ScenarioConfig;
use ccsoc::sampling::{DisturbanceSampleSet, DisturbanceSampler};
use ccsoc::solver::{solve_cantelli_baseline, solve_ccp, solve_scenario_baseline, Solution};
use ccsoc::validation::validate_solution;
use ccsoc::Error;

/// Result of every fallible call. Values 1 through 6 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcsocStatus {
    Ok = 0,
    Io = 1,
    Config = 2,
    Infeasible = 3,
    RiskTooSmall = 4,
    Backend = 5,
    ValidationFailed = 6,
    NullPointer = 7,
    InvalidUtf8 = 8,
    OutOfRange = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcsocMethod {
    Proposed = 0,
    Scenario = 1,
    Cantelli = 2,
}

/// A parsed scenario and, once needed, its disturbance samples.
pub struct CcsocScenario {
    config: ScenarioConfig,
    samples: Option<(Option<u64>, Vec<DisturbanceSampleSet>)>,
}

pub struct CcsocSolution {
    solution: Solution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> CcsocStatus {
    match err {
        Error::InfeasibleSubproblem { .. } => CcsocStatus::Infeasible,
        Error::RiskTooSmallForSampleSize { .. } => CcsocStatus::RiskTooSmall,
        Error::Backend(_) | Error::NotPositiveSemidefinite(_) => CcsocStatus::Backend,
        Error::Io(_) => CcsocStatus::Io,
        _ => CcsocStatus::Config,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard<F>(f: F) -> CcsocStatus
where
    F: FnOnce() -> Result<(), (CcsocStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CcsocStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CcsocStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (CcsocStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_err(name: &str) -> (CcsocStatus, String) {
    (CcsocStatus::NullPointer, format!("{name} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (CcsocStatus, String)> {
    if p.is_null() {
        return Err(null_err(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CcsocStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn into_c_string(s: String) -> Result<*mut c_char, (CcsocStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (CcsocStatus::InvalidUtf8, "output contains a NUL byte".into()))
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ccsoc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ccsoc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses scenario text. Relative sample CSV paths resolve against
/// `base_dir`, which may be NULL for the working directory.
///
/// # Safety
/// `text` and a non-null `base_dir` must be NUL-terminated; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_scenario_from_toml(
    text: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut CcsocScenario,
) -> CcsocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let text = read_str(text, "text")?;
        let base = if base_dir.is_null() { "." } else { read_str(base_dir, "base_dir")? };
        let config = ScenarioConfig::parse(text, Path::new(base)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CcsocScenario { config, samples: None }));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_scenario_from_path(path: *const c_char, out: *mut *mut CcsocScenario) -> CcsocStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let path = read_str(path, "path")?;
        let config = ScenarioConfig::from_path(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CcsocScenario { config, samples: None }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_scenario_free(scenario: *mut CcsocScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_scenario_vehicle_count(scenario: *const CcsocScenario, out: *mut usize) -> CcsocStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null_err("scenario"))?;
        *out.as_mut().ok_or_else(|| null_err("out"))? = s.config.spec.vehicle_count();
        Ok(())
    })
}

/// Length of one vehicle's stacked control sequence, `N·m`.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_scenario_control_len(scenario: *const CcsocScenario, out: *mut usize) -> CcsocStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null_err("scenario"))?;
        *out.as_mut().ok_or_else(|| null_err("out"))? = s.config.spec.control_len();
        Ok(())
    })
}

/// The scenario's config hash (hex SHA-256 of the text).
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_scenario_hash(scenario: *const CcsocScenario, out: *mut *mut c_char) -> CcsocStatus {
    guard(|| {
        let s = scenario.as_ref().ok_or_else(|| null_err("scenario"))?;
        let out = out.as_mut().ok_or_else(|| null_err("out"))?;
        *out = into_c_string(s.config.hash.clone())?;
        Ok(())
    })
}

fn samples_for(s: &mut CcsocScenario, seed: Option<u64>) -> Result<&[DisturbanceSampleSet], (CcsocStatus, String)> {
    if s.samples.as_ref().map_or(true, |(cached, _)| *cached != seed) {
        let sets = s.config.load_samples(seed).map_err(lib_err)?;
        s.samples = Some((seed, sets));
    }
    Ok(&s.samples.as_ref().expect("just loaded").1)
}

/// Solves the scenario. With `use_seed` false the config's sample seed is
/// used. The handle caches the loaded samples between calls.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_solve(
    scenario: *mut CcsocScenario,
    method: CcsocMethod,
    use_seed: bool,
    seed: u64,
    out: *mut *mut CcsocSolution,
) -> CcsocStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null_err("scenario"))?;
        if out.is_null() {
            return Err(null_err("out"));
        }
        let seed = use_seed.then_some(seed);
        let mut solution = match method {
            CcsocMethod::Proposed => {
                let samples = samples_for(s, seed)?.to_vec();
                solve_ccp(&s.config.spec, &samples, &s.config.ccp, &s.config.backend)
            }
            CcsocMethod::Scenario => {
                let samples = samples_for(s, seed)?.to_vec();
                solve_scenario_baseline(&s.config.spec, &samples, &s.config.backend)
            }
            CcsocMethod::Cantelli => s.config.true_moments().and_then(|(m, c)| {
                solve_cantelli_baseline(&s.config.spec, &m, &c, &s.config.ccp, &s.config.backend)
            }),
        }
        .map_err(lib_err)?;
        solution.config_hash = Some(s.config.hash.clone());
        *out = Box::into_raw(Box::new(CcsocSolution { solution }));
        Ok(())
    })
}

/// # Safety
/// `solution` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_solution_free(solution: *mut CcsocSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_solution_objective(solution: *const CcsocSolution, out: *mut f64) -> CcsocStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null_err("solution"))?;
        *out.as_mut().ok_or_else(|| null_err("out"))? = s.solution.objective;
        Ok(())
    })
}

/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_solution_converged(solution: *const CcsocSolution, out: *mut bool) -> CcsocStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null_err("solution"))?;
        *out.as_mut().ok_or_else(|| null_err("out"))? = s.solution.converged();
        Ok(())
    })
}

/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_solution_iterations(solution: *const CcsocSolution, out: *mut usize) -> CcsocStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null_err("solution"))?;
        *out.as_mut().ok_or_else(|| null_err("out"))? = s.solution.iterations;
        Ok(())
    })
}

/// Copies vehicle `vehicle`'s stacked controls into `buffer`, which must
/// hold at least the control length.
///
/// # Safety
/// `solution` must be a live handle; `buffer` must have room for `capacity`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_solution_controls(
    solution: *const CcsocSolution,
    vehicle: usize,
    buffer: *mut f64,
    capacity: usize,
) -> CcsocStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null_err("solution"))?;
        if buffer.is_null() {
            return Err(null_err("buffer"));
        }
        let u = s.solution.controls.get(vehicle).ok_or_else(|| {
            (CcsocStatus::OutOfRange, format!("vehicle {vehicle} of {}", s.solution.controls.len()))
        })?;
        if capacity < u.len() {
            return Err((CcsocStatus::OutOfRange, format!("buffer holds {capacity}, need {}", u.len())));
        }
        ptr::copy_nonoverlapping(u.as_ptr(), buffer, u.len());
        Ok(())
    })
}

/// The full solution (controls, risk, ledger, config hash) as JSON.
///
/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_solution_to_json(solution: *const CcsocSolution, out: *mut *mut c_char) -> CcsocStatus {
    guard(|| {
        let s = solution.as_ref().ok_or_else(|| null_err("solution"))?;
        let out = out.as_mut().ok_or_else(|| null_err("out"))?;
        let json = serde_json::to_string(&s.solution).map_err(|e| (CcsocStatus::Io, e.to_string()))?;
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// Monte Carlo validation over `trials` fresh draws. Writes the report JSON
/// to `report` (may be NULL) and whether every group met its threshold to
/// `passed`.
///
/// # Safety
/// Both handles must be live; `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_validate(
    scenario: *mut CcsocScenario,
    solution: *const CcsocSolution,
    trials: u64,
    seed: u64,
    report: *mut *mut c_char,
    passed: *mut bool,
) -> CcsocStatus {
    guard(|| {
        let s = scenario.as_mut().ok_or_else(|| null_err("scenario"))?;
        let sol = solution.as_ref().ok_or_else(|| null_err("solution"))?;
        let passed = passed.as_mut().ok_or_else(|| null_err("passed"))?;
        if sol.solution.config_hash.as_deref() != Some(s.config.hash.as_str()) {
            return Err((CcsocStatus::Config, "solution was not produced from this scenario".into()));
        }
        let samples = samples_for(s, None)?.to_vec();
        let samplers = s.config.samplers(&samples);
        let refs: Vec<&dyn DisturbanceSampler> = samplers.iter().map(|b| b.as_ref()).collect();
        let rep = validate_solution(&s.config.spec, &sol.solution.control_vectors(), &refs, trials, seed)
            .map_err(lib_err)?;
        *passed = rep.passed();
        if let Some(out) = report.as_mut() {
            let json = serde_json::to_string(&rep).map_err(|e| (CcsocStatus::Io, e.to_string()))?;
            *out = into_c_string(json)?;
        }
        Ok(())
    })
}

/// Tail bound `f(λ)` for `samples` samples.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_bound_f(samples: usize, lambda: f64, out: *mut f64) -> CcsocStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null_err("out"))?;
        *out = SampleBound::new(samples).and_then(|b| b.f(lambda)).map_err(lib_err)?;
        Ok(())
    })
}

/// Multiplier `λ` with `f(λ) = omega`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_bound_lambda(samples: usize, omega: f64, out: *mut f64) -> CcsocStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null_err("out"))?;
        *out = SampleBound::new(samples).and_then(|b| b.lambda_of_omega(omega)).map_err(lib_err)?;
        Ok(())
    })
}

/// Smallest multiplier from which `f` is convex.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ccsoc_bound_theta(samples: usize, out: *mut f64) -> CcsocStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null_err("out"))?;
        *out = SampleBound::new(samples).map(|b| b.theta()).map_err(lib_err)?;
        Ok(())
    })
}
