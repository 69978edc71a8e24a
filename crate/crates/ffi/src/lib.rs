// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! C ABI over the migratekit engine.
//!
//! Every fallible call returns an [`MkStatus`]; on failure the message is
//! available from [`mk_last_error`] on the same thread. Strings handed out
//! through `char **` parameters are owned by the caller and must be
//! released with [`mk_string_free`]. Handles are not synchronized: use one
//! handle from one thread at a time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use migratekit::concretizer::{concretize, ConcretizeFailure, ConcretizerConfig, PrivilegedSet};
use migratekit::device::{ConcreteEvent, CoverageSet, Device, DriverError, ExecOutcome};
use migratekit::evaluator::{compute_rates, coverage_capability, run_test, EvalError, MetricCounts};
use migratekit::ir::{
    extract_logic, parse_logic_step, parse_test_case, render_logic_step, ActionKind, IrError,
    LogicStep, TestLogic,
};
use migratekit::llm::{BackendSpec, Gateway, LlmConfig, LlmError, ScriptEntry, ScriptedBackend, API_KEY_ENV};
use migratekit::sim::{bundled_app, bundled_app_names, load_sim_app, SimAppSpec, SimDevice, SimError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MkStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    Config = 4,
    Driver = 5,
    Llm = 6,
    Rejected = 7,
    Panic = 8,
}

/// Rates as fractions in [0, 1]. `success_defined` is false when every
/// case was undetermined and `success_rate` carries no information.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MkRates {
    pub executable_rate: f64,
    pub perfect_rate: f64,
    pub success_rate: f64,
    pub success_defined: bool,
}

/// A simulated app instance.
pub struct MkSimDevice {
    device: SimDevice,
}

/// An LLM gateway (HTTP, scripted or replay backend).
pub struct MkGateway {
    gateway: Gateway,
}

struct Failure {
    status: MkStatus,
    message: String,
}

impl Failure {
    fn new(status: MkStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<IrError> for Failure {
    fn from(e: IrError) -> Self {
        Failure::new(MkStatus::Schema, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::new(MkStatus::Schema, e.to_string())
    }
}

impl From<DriverError> for Failure {
    fn from(e: DriverError) -> Self {
        Failure::new(MkStatus::Driver, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::new(MkStatus::Config, e.to_string())
    }
}

impl From<LlmError> for Failure {
    fn from(e: LlmError) -> Self {
        let status = match e {
            LlmError::Config(_) | LlmError::Io(_) | LlmError::InvalidPrompt(_) => MkStatus::Config,
            _ => MkStatus::Llm,
        };
        Failure::new(status, e.to_string())
    }
}

impl From<ConcretizeFailure> for Failure {
    fn from(e: ConcretizeFailure) -> Self {
        match e {
            ConcretizeFailure::Driver(d) => d.into(),
            ConcretizeFailure::Llm(l) => l.into(),
            ConcretizeFailure::Invalid(m) => Failure::new(MkStatus::Config, m),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MkStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MkStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(_) => {
            set_last_error("internal panic");
            MkStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(MkStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(MkStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(MkStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn put_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(MkStatus::NullArgument, "output pointer is null"));
    }
    let c = CString::new(value).map_err(|_| Failure::new(MkStatus::Schema, "output contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::new(MkStatus::NullArgument, "output pointer is null"))
    } else {
        Ok(())
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("value serializes")
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Extracts the individual test logic of a test-case JSON document and
/// writes the logic document (header plus numbered steps).
///
/// # Safety
/// `case_json` must be a NUL-terminated string; `out_logic` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_extract_logic(case_json: *const c_char, out_logic: *mut *mut c_char) -> MkStatus {
    guard(|| {
        let case = parse_test_case(str_arg(case_json, "case_json")?)?;
        put_string(out_logic, extract_logic(&case).to_document())
    })
}

/// Parses one template line into its JSON form.
///
/// # Safety
/// `line` must be a NUL-terminated string; `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_parse_logic_step(line: *const c_char, out_json: *mut *mut c_char) -> MkStatus {
    guard(|| {
        let step = parse_logic_step(str_arg(line, "line")?)?;
        put_string(out_json, to_json(&step))
    })
}

/// Renders the JSON form of a logic step as one template line.
///
/// # Safety
/// `step_json` must be a NUL-terminated string; `out_line` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_render_logic_step(step_json: *const c_char, out_line: *mut *mut c_char) -> MkStatus {
    guard(|| {
        let step: LogicStep = serde_json::from_str(str_arg(step_json, "step_json")?)
            .map_err(|e| Failure::new(MkStatus::Schema, e.to_string()))?;
        put_string(out_line, render_logic_step(&step))
    })
}

/// Executable, perfect and success rates for a run's counts.
///
/// # Safety
/// `out` must point to writable memory for one `MkRates`.
#[no_mangle]
pub unsafe extern "C" fn mk_compute_rates(
    total: u64,
    executable: u64,
    perfect: u64,
    successful: u64,
    undetermined: u64,
    out: *mut MkRates,
) -> MkStatus {
    guard(|| {
        check_out(out)?;
        let mut counts = MetricCounts::new(total, executable, perfect, successful);
        counts.undetermined = undetermined;
        counts.check_invariants().map_err(|m| Failure::new(MkStatus::Config, m))?;
        let rates = compute_rates(&counts)?;
        *out = MkRates {
            executable_rate: rates.executable_rate.value(),
            perfect_rate: rates.perfect_rate.value(),
            success_rate: rates.success_rate.map_or(0.0, |r| r.value()),
            success_defined: rates.success_rate.is_some(),
        };
        Ok(())
    })
}

/// Fraction of ground-truth coverage units also covered by the generated
/// tests. Both sets use the coverage file format (one unit per line).
///
/// # Safety
/// Both strings must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_coverage_capability(
    generated: *const c_char,
    ground_truth: *const c_char,
    out: *mut f64,
) -> MkStatus {
    guard(|| {
        check_out(out)?;
        let g = CoverageSet::parse(str_arg(generated, "generated")?);
        let gt = CoverageSet::parse(str_arg(ground_truth, "ground_truth")?);
        *out = coverage_capability(&g, &gt)?;
        Ok(())
    })
}

fn load_spec(name_or_json: &str) -> Result<SimAppSpec, Failure> {
    if bundled_app_names().any(|n| n == name_or_json) {
        Ok(bundled_app(name_or_json)?)
    } else {
        Ok(load_sim_app(name_or_json)?)
    }
}

/// Opens a simulator for a bundled app name or a sim-app JSON document.
///
/// # Safety
/// `name_or_json` must be NUL-terminated; `out` a valid pointer. Release
/// the handle with `mk_sim_free`.
#[no_mangle]
pub unsafe extern "C" fn mk_sim_open(name_or_json: *const c_char, out: *mut *mut MkSimDevice) -> MkStatus {
    guard(|| {
        check_out(out)?;
        let spec = load_spec(str_arg(name_or_json, "name_or_json")?)?;
        *out = Box::into_raw(Box::new(MkSimDevice {
            device: SimDevice::new(Arc::new(spec)),
        }));
        Ok(())
    })
}

/// # Safety
/// `dev` must be NULL or a handle from `mk_sim_open` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mk_sim_free(dev: *mut MkSimDevice) {
    if !dev.is_null() {
        drop(Box::from_raw(dev));
    }
}

/// Resets the app and writes the initial GUI state as JSON.
///
/// # Safety
/// `dev` must be a live handle; `out_state_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_sim_reset(dev: *mut MkSimDevice, out_state_json: *mut *mut c_char) -> MkStatus {
    guard(|| {
        let state = handle(dev, "dev")?.device.reset()?;
        put_string(out_state_json, to_json(&state))
    })
}

/// Writes the current GUI state as JSON without changing it.
///
/// # Safety
/// `dev` must be a live handle; `out_state_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_sim_observe(dev: *mut MkSimDevice, out_state_json: *mut *mut c_char) -> MkStatus {
    guard(|| {
        let state = handle(dev, "dev")?.device.observe()?;
        put_string(out_state_json, to_json(&state))
    })
}

/// Performs `action` (click, edit, swipe, scroll, long-press) on a widget
/// of the current state. `value` may be NULL. A refused event returns
/// `MK_STATUS_REJECTED` and leaves the state unchanged.
///
/// # Safety
/// `dev` must be a live handle; strings NUL-terminated or NULL where
/// allowed; `out_state_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_sim_execute(
    dev: *mut MkSimDevice,
    widget_id: *const c_char,
    action: *const c_char,
    value: *const c_char,
    out_state_json: *mut *mut c_char,
) -> MkStatus {
    guard(|| {
        let dev = handle(dev, "dev")?;
        let widget_id = str_arg(widget_id, "widget_id")?;
        let action: ActionKind = str_arg(action, "action")?
            .parse()
            .map_err(|m: String| Failure::new(MkStatus::Schema, m))?;
        let value = opt_str_arg(value, "value")?.map(str::to_string);
        check_out(out_state_json)?;
        let state = dev.device.observe()?;
        let widget = state.widget(widget_id).ok_or_else(|| {
            Failure::new(MkStatus::Rejected, format!("no widget `{widget_id}` in state `{}`", state.state_id))
        })?;
        let event = ConcreteEvent::on(&state, widget, action, value);
        match dev.device.execute(&event)? {
            ExecOutcome::Ok(next) => put_string(out_state_json, to_json(&next)),
            ExecOutcome::Rejected(reason) => Err(Failure::new(MkStatus::Rejected, reason)),
        }
    })
}

fn boxed_gateway(out: *mut *mut MkGateway, gateway: Gateway) {
    unsafe { *out = Box::into_raw(Box::new(MkGateway { gateway })) };
}

/// A gateway answering from a script: a JSON array of
/// `{"match": <substring>, "respond": <text>}` entries.
///
/// # Safety
/// `script_json` must be NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_gateway_scripted(script_json: *const c_char, out: *mut *mut MkGateway) -> MkStatus {
    guard(|| {
        check_out(out)?;
        let entries: Vec<ScriptEntry> = serde_json::from_str(str_arg(script_json, "script_json")?)
            .map_err(|e| Failure::new(MkStatus::Schema, e.to_string()))?;
        boxed_gateway(out, Gateway::new(Box::new(ScriptedBackend::new(entries))));
        Ok(())
    })
}

/// A gateway replaying a recorded transcript file.
///
/// # Safety
/// `transcript_path` must be NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_gateway_replay(transcript_path: *const c_char, out: *mut *mut MkGateway) -> MkStatus {
    guard(|| {
        check_out(out)?;
        let path = PathBuf::from(str_arg(transcript_path, "transcript_path")?);
        let gateway = Gateway::from_config(&LlmConfig::new(BackendSpec::Replay(path)))?;
        boxed_gateway(out, gateway);
        Ok(())
    })
}

/// A gateway for an OpenAI-compatible endpoint. The API key is read from
/// the `MIGRATEKIT_API_KEY` environment variable.
///
/// # Safety
/// `endpoint` and `model` must be NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_gateway_http(
    endpoint: *const c_char,
    model: *const c_char,
    temperature: f64,
    out: *mut *mut MkGateway,
) -> MkStatus {
    guard(|| {
        check_out(out)?;
        let mut config = LlmConfig::new(BackendSpec::Http {
            endpoint: str_arg(endpoint, "endpoint")?.to_string(),
            model: str_arg(model, "model")?.to_string(),
            api_key_env: API_KEY_ENV.to_string(),
        });
        config.temperature = temperature;
        boxed_gateway(out, Gateway::from_config(&config)?);
        Ok(())
    })
}

/// # Safety
/// `gw` must be NULL or a handle from an `mk_gateway_*` constructor not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mk_gateway_free(gw: *mut MkGateway) {
    if !gw.is_null() {
        drop(Box::from_raw(gw));
    }
}

/// Generates a test case for the simulated app from a general test logic
/// document. `privileged_json` may be NULL for an empty privileged set;
/// `max_selection` 0 selects the default. `out_trace_json` may be NULL.
///
/// # Safety
/// Handles must be live; strings NUL-terminated or NULL where allowed;
/// `out_case_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_concretize(
    gw: *mut MkGateway,
    dev: *mut MkSimDevice,
    general_logic: *const c_char,
    privileged_json: *const c_char,
    max_selection: u32,
    out_case_json: *mut *mut c_char,
    out_trace_json: *mut *mut c_char,
) -> MkStatus {
    guard(|| {
        let gw = handle(gw, "gw")?;
        let dev = handle(dev, "dev")?;
        let general = TestLogic::parse_document(str_arg(general_logic, "general_logic")?)?;
        let mut privileged = match opt_str_arg(privileged_json, "privileged_json")? {
            Some(doc) => PrivilegedSet::parse(doc)?,
            None => PrivilegedSet::empty("none"),
        };
        check_out(out_case_json)?;
        let mut config = ConcretizerConfig::default();
        if max_selection > 0 {
            config.max_selection = max_selection;
        }
        let (case, trace) = concretize(&general, &mut privileged, &mut dev.device, &gw.gateway, &config)
            .map_err(|e| Failure::from(e.failure))?;
        put_string(out_case_json, case.to_document())?;
        if !out_trace_json.is_null() {
            put_string(out_trace_json, trace.to_document())?;
        }
        Ok(())
    })
}

/// Replays a test case from reset and writes the execution report.
///
/// # Safety
/// `dev` must be a live handle; `case_json` NUL-terminated;
/// `out_report_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mk_run_test(
    dev: *mut MkSimDevice,
    case_json: *const c_char,
    out_report_json: *mut *mut c_char,
) -> MkStatus {
    guard(|| {
        let dev = handle(dev, "dev")?;
        let case = parse_test_case(str_arg(case_json, "case_json")?)?;
        check_out(out_report_json)?;
        let report = run_test(&case, &mut dev.device)?;
        put_string(out_report_json, to_json(&report))
    })
}
