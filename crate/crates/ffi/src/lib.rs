//! C ABI over `preempt-core`.
//!
//! Instances and results are opaque handles created by `pp_*` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`PpStatus`]; on failure [`pp_last_error`] describes what went wrong on
//! the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use preempt_core::model::{self, DecisionMatrix, PreemptionInstance};
use preempt_core::solvers::{self, GibbsConfig, SolverResult};
use preempt_core::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidArgument = 4,
    TooLarge = 5,
    Panic = 6,
}

/// A validated preemption instance.
pub struct PpInstance(PreemptionInstance);

/// The outcome of one solver run.
pub struct PpResult(SolverResult);

/// Which solver [`pp_solve`] runs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpSolver {
    Gibbs = 0,
    Exact = 1,
    MinConn = 2,
    MinBw = 3,
}

/// Sampler settings for [`PpSolver::Gibbs`]; ignored by other solvers.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PpGibbsOptions {
    pub nd: usize,
    pub seed: u64,
    pub max_sweeps: usize,
    pub t0: f64,
    pub repair: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> PpStatus {
    match e {
        Error::Json(_) => PpStatus::Parse,
        Error::TooLarge { .. } => PpStatus::TooLarge,
        _ => PpStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PpStatus, String)>) -> PpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            PpStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (PpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PpStatus, String) {
    (PpStatus::NullArgument, format!("{what} is null"))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next `pp_*` call on the same thread.
#[no_mangle]
pub extern "C" fn pp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default sampler options (`nd = 1`, seed 0).
#[no_mangle]
pub extern "C" fn pp_gibbs_options_default() -> PpGibbsOptions {
    let g = GibbsConfig::default();
    PpGibbsOptions {
        nd: g.nd,
        seed: g.seed,
        max_sweeps: g.max_sweeps,
        t0: g.t0,
        repair: g.repair,
    }
}

/// Parses an instance from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pp_instance_from_json(json: *const c_char, out: *mut *mut PpInstance) -> PpStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (PpStatus::InvalidUtf8, e.to_string()))?;
        let inst: PreemptionInstance =
            serde_json::from_str(text).map_err(|e| (PpStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(PpInstance(inst)));
        Ok(())
    })
}

/// # Safety
/// `inst` must come from [`pp_instance_from_json`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn pp_instance_free(inst: *mut PpInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Number of links on the route, 0 for a null handle.
///
/// # Safety
/// `inst` must be null or a live instance handle.
#[no_mangle]
pub unsafe extern "C" fn pp_instance_links(inst: *const PpInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.0.links())
}

/// # Safety
/// `inst` must be null or a live instance handle.
#[no_mangle]
pub unsafe extern "C" fn pp_instance_flow_count(inst: *const PpInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.0.flow_count())
}

/// Total number of (flow, link) decisions, the length
/// [`pp_hamiltonian`] expects.
///
/// # Safety
/// `inst` must be null or a live instance handle.
#[no_mangle]
pub unsafe extern "C" fn pp_instance_incidences(inst: *const PpInstance) -> usize {
    inst.as_ref().map_or(0, |i| i.0.incidence_count())
}

/// Exact energy of a decision matrix given flow by flow, each flow's
/// links in route order, nonzero bytes meaning "preempt".
///
/// # Safety
/// `inst` must be live, `decisions` must point to `len` bytes and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn pp_hamiltonian(
    inst: *const PpInstance,
    decisions: *const u8,
    len: usize,
    out: *mut f64,
) -> PpStatus {
    guard(|| {
        let inst = &inst.as_ref().ok_or_else(|| null("inst"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != inst.incidence_count() {
            return Err((
                PpStatus::InvalidArgument,
                format!("expected {} decisions, got {len}", inst.incidence_count()),
            ));
        }
        let bytes: &[u8] = if len == 0 {
            &[]
        } else if decisions.is_null() {
            return Err(null("decisions"));
        } else {
            std::slice::from_raw_parts(decisions, len)
        };
        let mut d = DecisionMatrix::zeros(inst);
        let mut it = bytes.iter();
        for k in 0..inst.flow_count() {
            for v in d.flow_mut(k) {
                *v = *it.next().unwrap() != 0;
            }
        }
        *out = model::hamiltonian(inst, &d);
        Ok(())
    })
}

/// Runs a solver. `options` may be null for defaults.
///
/// # Safety
/// `inst` must be live, `options` null or valid, and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn pp_solve(
    inst: *const PpInstance,
    solver: PpSolver,
    options: *const PpGibbsOptions,
    out: *mut *mut PpResult,
) -> PpStatus {
    guard(|| {
        let inst = &inst.as_ref().ok_or_else(|| null("inst"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let res = match solver {
            PpSolver::Gibbs => {
                let o = options.as_ref().copied().unwrap_or_else(|| pp_gibbs_options_default());
                let cfg = GibbsConfig {
                    max_sweeps: o.max_sweeps,
                    t0: o.t0,
                    repair: o.repair,
                    ..GibbsConfig::new(o.nd, o.seed)
                };
                solvers::gibbs_solve(inst, &cfg).map_err(core_err)?
            }
            PpSolver::Exact => solvers::exact_optimal(inst).map_err(core_err)?,
            PpSolver::MinConn => solvers::min_conn(inst),
            PpSolver::MinBw => solvers::min_bw(inst).map_err(core_err)?,
        };
        *out = Box::into_raw(Box::new(PpResult(res)));
        Ok(())
    })
}

/// # Safety
/// `res` must come from [`pp_solve`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn pp_result_free(res: *mut PpResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Weighted preempted bandwidth; NaN for a null handle.
///
/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pp_result_cost(res: *const PpResult) -> f64 {
    res.as_ref().map_or(f64::NAN, |r| r.0.cost)
}

/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pp_result_feasible(res: *const PpResult) -> bool {
    res.as_ref().is_some_and(|r| r.0.feasible)
}

/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pp_result_messages(res: *const PpResult) -> u64 {
    res.as_ref().map_or(0, |r| r.0.trace.messages_exchanged)
}

/// Copies up to `cap` preempted flow ids (ascending) into `ids` and returns
/// how many there are in total. Call with `cap = 0` to size the buffer.
///
/// # Safety
/// `res` must be null or live; `ids` must have room for `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn pp_result_preempted(res: *const PpResult, ids: *mut usize, cap: usize) -> usize {
    let Some(r) = res.as_ref() else { return 0 };
    let pre = &r.0.preempted;
    if !ids.is_null() {
        for (j, &id) in pre.iter().take(cap).enumerate() {
            *ids.add(j) = id;
        }
    }
    pre.len()
}

/// The full result, trace included, as a JSON string to release with
/// [`pp_string_free`]. Null on failure.
///
/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pp_result_to_json(res: *const PpResult) -> *mut c_char {
    let mut text = ptr::null_mut();
    let status = guard(|| {
        let r = res.as_ref().ok_or_else(|| null("res"))?;
        let s = serde_json::to_string(&r.0).map_err(|e| (PpStatus::Parse, e.to_string()))?;
        text = CString::new(s).map_err(|e| (PpStatus::InvalidArgument, e.to_string()))?.into_raw();
        Ok(())
    });
    if status == PpStatus::Ok {
        text
    } else {
        ptr::null_mut()
    }
}

/// # Safety
/// `s` must come from [`pp_result_to_json`] and not be freed yet.
#[no_mangle]
pub unsafe extern "C" fn pp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
