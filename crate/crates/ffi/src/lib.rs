//! C ABI over the simulator.
//!
//! Every function returns a status code (`DN_OK` on success). On failure
//! the message is kept per thread and read with [`dn_last_error`]. Handles
//! are opaque and must be released with their `*_free` function.
//!
//! # Safety
//!
//! Pointer arguments must be NULL or valid for the documented access;
//! NULL is reported as `DN_ERR_NULL` where a value is required. Handles
//! must come from this library and be freed at most once.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use diffneuro::tactile::grasp::verify;
use diffneuro::tactile::{run_scenario, GraspLoop, GraspScenario, TraceRow};
use diffneuro::vision::{Frame, VisionPipeline};
use diffneuro::{device, Config, Error, MemristorState};

pub const DN_OK: i32 = 0;
pub const DN_ERR_NULL: i32 = 1;
pub const DN_ERR_INVALID_INPUT: i32 = 2;
pub const DN_ERR_CONFIG: i32 = 3;
pub const DN_ERR_IO: i32 = 4;
pub const DN_ERR_PANIC: i32 = 5;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) => DN_ERR_INVALID_INPUT,
            Error::Config(_) | Error::Parse { .. } => DN_ERR_CONFIG,
            Error::Io { .. } => DN_ERR_IO,
        };
        Failure(code, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DN_OK,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DN_ERR_PANIC
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DN_ERR_NULL, format!("`{what}` is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DN_ERR_INVALID_INPUT, format!("`{what}` is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn dn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// NUL-terminated library version.
#[no_mangle]
pub extern "C" fn dn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DnDeviceParams {
    pub r_on: f64,
    pub r_off: f64,
    pub v_tp: f64,
    pub v_tn: f64,
    pub alpha_p: f64,
    pub alpha_n: f64,
    pub window_exponent: f64,
}

impl From<DnDeviceParams> for device::DeviceParams {
    fn from(p: DnDeviceParams) -> Self {
        device::DeviceParams {
            r_on: p.r_on,
            r_off: p.r_off,
            v_tp: p.v_tp,
            v_tn: p.v_tn,
            alpha_p: p.alpha_p,
            alpha_n: p.alpha_n,
            window_exponent: p.window_exponent,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DnPulseTrain {
    /// Volts; the sign selects set or reset.
    pub amplitude: f64,
    /// Seconds.
    pub pulse_width: f64,
    /// In (0, 1].
    pub duty_cycle: f64,
    pub count: u32,
}

fn params(p: &DnDeviceParams) -> Result<device::DeviceParams, Failure> {
    let p = device::DeviceParams::from(*p);
    p.validate()?;
    Ok(p)
}

/// Fill `out` with the default device parameters.
#[no_mangle]
pub unsafe extern "C" fn dn_device_params_default(out: *mut DnDeviceParams) -> i32 {
    guard(|| {
        let d = device::DeviceParams::default();
        *deref_mut(out, "out")? = DnDeviceParams {
            r_on: d.r_on,
            r_off: d.r_off,
            v_tp: d.v_tp,
            v_tn: d.v_tn,
            alpha_p: d.alpha_p,
            alpha_n: d.alpha_n,
            window_exponent: d.window_exponent,
        };
        Ok(())
    })
}

/// Resistance (Ω) of a device in state `x`.
#[no_mangle]
pub unsafe extern "C" fn dn_resistance(p: *const DnDeviceParams, x: f64, out_r: *mut f64) -> i32 {
    guard(|| {
        let p = params(deref(p, "params")?)?;
        let s = MemristorState::new(x)?;
        *deref_mut(out_r, "out_r")? = device::resistance(s, &p);
        Ok(())
    })
}

/// Apply `train` to a device in state `x`; the new state goes to `out_x`.
#[no_mangle]
pub unsafe extern "C" fn dn_apply_pulse_train(
    p: *const DnDeviceParams,
    x: f64,
    train: *const DnPulseTrain,
    out_x: *mut f64,
) -> i32 {
    guard(|| {
        let p = params(deref(p, "params")?)?;
        let t = deref(train, "train")?;
        let t = diffneuro::PulseTrain::new(t.amplitude, t.pulse_width, t.duty_cycle, t.count)?;
        let s = device::apply_pulse_train(MemristorState::new(x)?, &t, &p)?;
        *deref_mut(out_x, "out_x")? = s.x();
        Ok(())
    })
}

/// Resolved configuration.
pub struct DnConfig {
    inner: Config,
}

fn boxed<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Built-in defaults.
#[no_mangle]
pub unsafe extern "C" fn dn_config_default(out: *mut *mut DnConfig) -> i32 {
    guard(|| boxed(out, DnConfig { inner: Config::default() }))
}

/// Defaults layered with a configuration document.
#[no_mangle]
pub unsafe extern "C" fn dn_config_from_text(doc: *const c_char, out: *mut *mut DnConfig) -> i32 {
    guard(|| {
        let cfg = Config::from_text(text(doc, "doc")?, "<ffi>")?;
        boxed(out, DnConfig { inner: cfg })
    })
}

/// Write the 64-character hex fingerprint plus NUL into `buf`.
#[no_mangle]
pub unsafe extern "C" fn dn_config_fingerprint(cfg: *const DnConfig, buf: *mut c_char, cap: usize) -> i32 {
    guard(|| {
        let fp = deref(cfg, "cfg")?.inner.fingerprint();
        if buf.is_null() {
            return Err(null("buf"));
        }
        if cap < fp.len() + 1 {
            return Err(Failure(DN_ERR_INVALID_INPUT, format!("buffer needs {} bytes", fp.len() + 1)));
        }
        ptr::copy_nonoverlapping(fp.as_ptr().cast::<c_char>(), buf, fp.len());
        *buf.add(fp.len()) = 0;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dn_config_free(cfg: *mut DnConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn config_or_default(cfg: *const DnConfig) -> Config {
    cfg.as_ref().map_or_else(Config::default, |c| c.inner.clone())
}

/// Streaming saliency pipeline.
pub struct DnVisionPipeline {
    inner: VisionPipeline,
    cells: usize,
}

/// `cfg` may be NULL for the defaults.
#[no_mangle]
pub unsafe extern "C" fn dn_vision_new(cfg: *const DnConfig, out: *mut *mut DnVisionPipeline) -> i32 {
    guard(|| {
        let cfg = config_or_default(cfg);
        let cells = cfg.vision.cols * cfg.vision.rows;
        boxed(out, DnVisionPipeline { inner: VisionPipeline::new(&cfg), cells })
    })
}

/// Number of cells in each saliency map.
#[no_mangle]
pub unsafe extern "C" fn dn_vision_cells(h: *const DnVisionPipeline, out_cells: *mut usize) -> i32 {
    guard(|| {
        *deref_mut(out_cells, "out_cells")? = deref(h, "pipeline")?.cells;
        Ok(())
    })
}

/// Push one 8-bit grayscale frame. The first frame only primes the
/// pipeline and sets `*out_produced = 0`; later frames write the binary
/// map (0 = salient) into `out_map` when it is non-NULL and `cap` is at
/// least the cell count.
#[no_mangle]
pub unsafe extern "C" fn dn_vision_push_frame(
    h: *mut DnVisionPipeline,
    data: *const u8,
    width: usize,
    height: usize,
    out_map: *mut u8,
    cap: usize,
    out_produced: *mut i32,
) -> i32 {
    guard(|| {
        let h = deref_mut(h, "pipeline")?;
        if data.is_null() {
            return Err(null("data"));
        }
        let len = width
            .checked_mul(height)
            .ok_or_else(|| Failure(DN_ERR_INVALID_INPUT, "frame size overflows".into()))?;
        if !out_map.is_null() && cap < h.cells {
            return Err(Failure(DN_ERR_INVALID_INPUT, format!("map buffer needs {} bytes", h.cells)));
        }
        let frame = Frame::new(width, height, std::slice::from_raw_parts(data, len).to_vec())?;
        let map = h.inner.push(&frame)?;
        if let Some(m) = &map {
            if !out_map.is_null() {
                ptr::copy_nonoverlapping(m.binary.as_ptr(), out_map, m.binary.len());
            }
        }
        if let Some(p) = out_produced.as_mut() {
            *p = i32::from(map.is_some());
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dn_vision_free(h: *mut DnVisionPipeline) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// One control step of the grasp loop.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DnGraspRow {
    pub t: f64,
    pub force: f64,
    pub piezo_r: f64,
    pub mem_r: f64,
    pub gain: f64,
    pub output: f64,
    pub force_cmd: f64,
    /// Bit `i` set when marker `i` fired this step, in the order contact,
    /// hazard_onset, sensitized, amplified, pain_reflex, regrasp,
    /// stable_hold, slip, grip_increase, gain_clamped.
    pub markers: u32,
}

fn row(r: &TraceRow) -> DnGraspRow {
    use diffneuro::tactile::Marker;
    DnGraspRow {
        t: r.t,
        force: r.force,
        piezo_r: r.piezo_r,
        mem_r: r.mem_r,
        gain: r.gain,
        output: r.output,
        force_cmd: r.force_cmd,
        markers: r
            .markers
            .iter()
            .filter_map(|m| Marker::ALL.iter().position(|x| x == m))
            .fold(0, |acc, i| acc | 1 << i),
    }
}

/// Closed-loop grasp driven one step at a time.
pub struct DnGraspLoop {
    inner: GraspLoop,
}

/// `cfg` may be NULL for the defaults; `scenario` is scenario-file text.
#[no_mangle]
pub unsafe extern "C" fn dn_grasp_new(
    cfg: *const DnConfig,
    scenario: *const c_char,
    out: *mut *mut DnGraspLoop,
) -> i32 {
    guard(|| {
        let sc = GraspScenario::parse(text(scenario, "scenario")?, "<ffi>")?;
        let lp = GraspLoop::new(&sc, &config_or_default(cfg))?;
        boxed(out, DnGraspLoop { inner: lp })
    })
}

/// Step with the scenario's own force profile.
#[no_mangle]
pub unsafe extern "C" fn dn_grasp_step(h: *mut DnGraspLoop, out_row: *mut DnGraspRow) -> i32 {
    guard(|| {
        let r = deref_mut(h, "grasp")?.inner.step()?;
        if let Some(o) = out_row.as_mut() {
            *o = row(&r);
        }
        Ok(())
    })
}

/// Step with an externally sensed force (N).
#[no_mangle]
pub unsafe extern "C" fn dn_grasp_step_force(h: *mut DnGraspLoop, force: f64, out_row: *mut DnGraspRow) -> i32 {
    guard(|| {
        let r = deref_mut(h, "grasp")?.inner.step_with_force(force)?;
        if let Some(o) = out_row.as_mut() {
            *o = row(&r);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dn_grasp_free(h: *mut DnGraspLoop) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Run a whole scenario. `csv_path` may be NULL; `*out_passed` is 1 when
/// every scripted check holds.
#[no_mangle]
pub unsafe extern "C" fn dn_scenario_run(
    cfg: *const DnConfig,
    scenario: *const c_char,
    csv_path: *const c_char,
    out_passed: *mut i32,
) -> i32 {
    guard(|| {
        let sc = GraspScenario::parse(text(scenario, "scenario")?, "<ffi>")?;
        let trace = run_scenario(&sc, &config_or_default(cfg))?;
        if !csv_path.is_null() {
            let path = Path::new(text(csv_path, "csv_path")?);
            diffneuro::io::write_file(path, trace.to_csv())?;
        }
        *deref_mut(out_passed, "out_passed")? = i32::from(verify(&trace, &sc).passed());
        Ok(())
    })
}
