//! C ABI over `npg-core`.
//!
//! Models, truncations and policies are opaque handles released with the
//! matching `*_free` function. Every fallible call
//! returns an [`NpgStatus`]; on failure [`npg_last_error`] describes the cause
//! for the calling thread. Strings returned through out-parameters are owned by
//! the caller and must be released with [`npg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use npg_core::config::ExperimentConfig;
use npg_core::gsse::{capacity_margin, GsseModel, GsseParams, Preset, RewardKind};
use npg_core::mdp::{evaluate_policy, optimal_average_reward, StateId, TabularPolicy, TruncatedMdp};
use npg_core::npg::{run_npg_with, LearningRateSchedule, NpgOptions};
use npg_core::verify::{initial_policy, run_full_verification, InitKind};
use npg_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    InvalidModel = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// A validated queueing model.
pub struct NpgModel {
    inner: GsseModel,
}

/// A finite truncation of a model.
pub struct NpgMdp {
    inner: TruncatedMdp,
}

/// A stochastic policy on a truncation.
pub struct NpgPolicy {
    inner: TabularPolicy,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(NpgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) => NpgStatus::Config,
            Error::InvalidArgument(_) | Error::InvalidPolicy(_) => NpgStatus::InvalidArgument,
            Error::InvalidModel(_) | Error::Infeasible { .. } => NpgStatus::InvalidModel,
            _ => NpgStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(NpgStatus::NullPointer, format!("{what} is null"))
}

fn guard<F>(f: F) -> NpgStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            NpgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            NpgStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(NpgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn npg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn npg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn npg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a preset model. `alpha > 0` selects the alpha-moment reward,
/// otherwise the negative total queue length is used.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npg_model_preset(name: *const c_char, alpha: f64, out: *mut *mut NpgModel) -> NpgStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        let reward = if alpha > 0.0 { RewardKind::AlphaMoment { alpha } } else { RewardKind::MeanQueue };
        let model = Preset::from_name(name)?.build(reward)?;
        write_out(out, Box::into_raw(Box::new(NpgModel { inner: model })), "out")
    })
}

/// Builds a model from JSON parameters (`arrivals`, `services`, `option_names`, `reward`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npg_model_from_json(json: *const c_char, out: *mut *mut NpgModel) -> NpgStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let params: GsseParams =
            serde_json::from_str(text).map_err(|e| Failure(NpgStatus::Config, format!("model JSON: {e}")))?;
        let model = GsseModel::new(params)?;
        write_out(out, Box::into_raw(Box::new(NpgModel { inner: model })), "out")
    })
}

/// # Safety
/// `model` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn npg_model_free(model: *mut NpgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Largest `eps` with `(1 + eps) lambda` inside the service-rate hull.
/// Negative values are reported with status `Ok`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npg_model_capacity_margin(model: *const NpgModel, out: *mut f64) -> NpgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let eps = match capacity_margin(&m.inner) {
            Ok(c) => c.epsilon,
            Err(Error::Infeasible { epsilon }) => epsilon,
            Err(e) => return Err(e.into()),
        };
        write_out(out, eps, "out")
    })
}

/// Truncates every queue at `buffer`.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npg_model_truncate(model: *const NpgModel, buffer: u32, out: *mut *mut NpgMdp) -> NpgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let mdp = m.inner.truncate_to(buffer)?;
        write_out(out, Box::into_raw(Box::new(NpgMdp { inner: mdp })), "out")
    })
}

/// # Safety
/// `mdp` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn npg_mdp_free(mdp: *mut NpgMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// # Safety
/// `mdp` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn npg_mdp_shape(mdp: *const NpgMdp, states: *mut usize, actions: *mut usize) -> NpgStatus {
    guard(|| {
        let m = deref(mdp, "mdp")?;
        write_out(states, m.inner.state_count(), "states")?;
        write_out(actions, m.inner.action_count(), "actions")
    })
}

/// Optimal average reward of the truncation.
///
/// # Safety
/// `mdp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npg_mdp_optimal_average_reward(mdp: *const NpgMdp, out: *mut f64) -> NpgStatus {
    guard(|| {
        let m = deref(mdp, "mdp")?;
        let opt = optimal_average_reward(&m.inner)?;
        write_out(out, opt.average_reward, "out")
    })
}

/// # Safety
/// `mdp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npg_policy_uniform(mdp: *const NpgMdp, out: *mut *mut NpgPolicy) -> NpgStatus {
    guard(|| {
        let m = deref(mdp, "mdp")?;
        let pi = TabularPolicy::uniform(m.inner.state_count(), m.inner.action_count());
        write_out(out, Box::into_raw(Box::new(NpgPolicy { inner: pi })), "out")
    })
}

/// MaxWeight policy mixed with the uniform policy at weight `mix` in (0, 1].
///
/// # Safety
/// `model` and `mdp` must be live handles, `mdp` a truncation of `model`;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npg_policy_maxweight(
    model: *const NpgModel,
    mdp: *const NpgMdp,
    mix: f64,
    out: *mut *mut NpgPolicy,
) -> NpgStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let m = deref(mdp, "mdp")?;
        let pi = initial_policy(&model.inner, &m.inner, &InitKind::Maxweight, mix)?;
        write_out(out, Box::into_raw(Box::new(NpgPolicy { inner: pi })), "out")
    })
}

/// # Safety
/// `policy` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn npg_policy_free(policy: *mut NpgPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Copies the action probabilities of `state` into `buf` of length `len`.
///
/// # Safety
/// `policy` must be a live handle; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn npg_policy_row(policy: *const NpgPolicy, state: usize, buf: *mut f64, len: usize) -> NpgStatus {
    guard(|| {
        let pi = deref(policy, "policy")?;
        if state >= pi.inner.state_count() {
            return Err(Failure(NpgStatus::InvalidArgument, format!("state {state} out of range")));
        }
        let row = pi.inner.row(StateId(state));
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < row.len() {
            return Err(Failure(NpgStatus::BufferTooSmall, format!("need {} entries, got {len}", row.len())));
        }
        std::slice::from_raw_parts_mut(buf, row.len()).copy_from_slice(row);
        Ok(())
    })
}

/// Average reward of `policy`, and its relative values when `values` is non-null
/// (`len` must then be at least the state count).
///
/// # Safety
/// Handles must be live; `values`, if non-null, must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn npg_evaluate(
    mdp: *const NpgMdp,
    policy: *const NpgPolicy,
    average_reward: *mut f64,
    values: *mut f64,
    len: usize,
) -> NpgStatus {
    guard(|| {
        let m = deref(mdp, "mdp")?;
        let pi = deref(policy, "policy")?;
        let ev = evaluate_policy(&m.inner, &pi.inner)?;
        if !values.is_null() {
            if len < ev.value.len() {
                return Err(Failure(NpgStatus::BufferTooSmall, format!("need {} entries, got {len}", ev.value.len())));
            }
            std::slice::from_raw_parts_mut(values, ev.value.len()).copy_from_slice(&ev.value);
        }
        write_out(average_reward, ev.average_reward, "average_reward")
    })
}

/// Runs `horizon` NPG iterations with the same step base `beta > 1` at every
/// state and returns the final policy.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn npg_run_constant_step(
    mdp: *const NpgMdp,
    initial: *const NpgPolicy,
    horizon: usize,
    beta: f64,
    out: *mut *mut NpgPolicy,
) -> NpgStatus {
    guard(|| {
        let m = deref(mdp, "mdp")?;
        let pi0 = deref(initial, "initial")?;
        if !(beta > 1.0 && beta.is_finite()) {
            return Err(Failure(NpgStatus::InvalidArgument, format!("step base {beta} must be finite and above 1")));
        }
        let schedule = LearningRateSchedule::constant(m.inner.state_count(), m.inner.action_count(), horizon, beta);
        let run = run_npg_with(&m.inner, &pi0.inner, &schedule, &NpgOptions::default(), |_, _, _| {})?;
        if let Some(e) = run.trace.failure {
            return Err(e.into());
        }
        write_out(out, Box::into_raw(Box::new(NpgPolicy { inner: run.policy })), "out")
    })
}

/// Runs the full verification described by a TOML experiment text and returns
/// the JSON report. `passed` receives 1 when no check failed, 0 otherwise.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn npg_verify(config_toml: *const c_char, report_json: *mut *mut c_char, passed: *mut c_int) -> NpgStatus {
    guard(|| {
        let text = read_str(config_toml, "config_toml")?;
        if report_json.is_null() {
            return Err(null("report_json"));
        }
        let cfg = ExperimentConfig::parse(text, "config")?.resolve()?;
        let report = run_full_verification(&cfg)?;
        let mut json = serde_json::to_string_pretty(&report).map_err(|e| Failure(NpgStatus::Numerical, e.to_string()))?;
        json.push('\n');
        write_out(passed, c_int::from(report.passed), "passed")?;
        report_json.write(into_c_string(json));
        Ok(())
    })
}
