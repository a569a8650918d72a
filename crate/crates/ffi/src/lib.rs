//! C interface to the convoy simulator.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`ConvoyStatus`]; a description of the most recent failure on the
//! calling thread is available from [`convoy_last_error_message`].
//! Strings returned by the library are owned by the caller and must be
//! released with [`convoy_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use convoy::geometry::{self, Pose2, Twist2};
use convoy::sim::{self, ConvoyConfig, MetricsReport, SimError, TrajectoryLog};
use convoy::TeachPath;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvoyStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    /// The run left the corridor. The handle is still produced and holds
    /// the partial trajectory, but no metrics.
    Aborted = 4,
    Io = 5,
    InvalidArgument = 6,
    Panic = 7,
}

/// Planar pose; `theta` in radians from the +x axis.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvoyPose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// se(2) tangent vector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvoyTwist2 {
    pub rho_x: f64,
    pub rho_y: f64,
    pub phi: f64,
}

/// Projection of a point onto a path.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvoyPathCoord {
    pub s: f64,
    pub lateral: f64,
    pub heading_err: f64,
}

/// Parsed simulation configuration.
pub struct ConvoyConfigHandle {
    config: ConvoyConfig,
}

/// Output of one simulation.
pub struct ConvoyRunHandle {
    log: TrajectoryLog,
    metrics: Option<MetricsReport>,
}

/// Arc-length parameterized teach path.
pub struct ConvoyPathHandle {
    path: TeachPath,
}

impl From<ConvoyPose2> for Pose2 {
    fn from(p: ConvoyPose2) -> Self {
        Pose2::new(p.x, p.y, p.theta)
    }
}

impl From<Pose2> for ConvoyPose2 {
    fn from(p: Pose2) -> Self {
        ConvoyPose2 { x: p.x, y: p.y, theta: p.theta }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn guard(f: impl FnOnce() -> ConvoyStatus) -> ConvoyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            ConvoyStatus::Panic
        }
    }
}

fn fail(status: ConvoyStatus, msg: impl Into<String>) -> ConvoyStatus {
    set_error(msg);
    status
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, ConvoyStatus> {
    if s.is_null() {
        return Err(fail(ConvoyStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(ConvoyStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Message describing the last failure on this thread. The pointer stays
/// valid until the next failing call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn convoy_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static description of a status code. Do not free.
#[no_mangle]
pub extern "C" fn convoy_status_name(status: ConvoyStatus) -> *const c_char {
    let s: &'static CStr = match status {
        ConvoyStatus::Ok => c"ok",
        ConvoyStatus::NullPointer => c"null pointer",
        ConvoyStatus::InvalidUtf8 => c"invalid UTF-8",
        ConvoyStatus::InvalidConfig => c"invalid configuration",
        ConvoyStatus::Aborted => c"run aborted",
        ConvoyStatus::Io => c"I/O error",
        ConvoyStatus::InvalidArgument => c"invalid argument",
        ConvoyStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Library version string. Do not free.
#[no_mangle]
pub extern "C" fn convoy_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn convoy_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a JSON configuration document. Missing fields take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_config_from_json(
    json: *const c_char,
    out: *mut *mut ConvoyConfigHandle,
) -> ConvoyStatus {
    guard(|| {
        if out.is_null() {
            return fail(ConvoyStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ConvoyConfig::from_json(text) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(ConvoyConfigHandle { config }));
                ConvoyStatus::Ok
            }
            Err(e) => fail(ConvoyStatus::InvalidConfig, e.to_string()),
        }
    })
}

/// Serialize a configuration with every default filled in.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_config_to_json(
    config: *const ConvoyConfigHandle,
    out: *mut *mut c_char,
) -> ConvoyStatus {
    guard(|| {
        if config.is_null() || out.is_null() {
            return fail(ConvoyStatus::NullPointer, "null argument");
        }
        match serde_json::to_string_pretty(&(*config).config) {
            Ok(s) => {
                *out = to_c_string(s);
                ConvoyStatus::Ok
            }
            Err(e) => fail(ConvoyStatus::InvalidConfig, e.to_string()),
        }
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn convoy_config_free(config: *mut ConvoyConfigHandle) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Simulate `config` with `seed`. On [`ConvoyStatus::Aborted`] `*out` still
/// receives a handle with the partial trajectory.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_run(
    config: *const ConvoyConfigHandle,
    seed: u64,
    out: *mut *mut ConvoyRunHandle,
) -> ConvoyStatus {
    guard(|| {
        if config.is_null() || out.is_null() {
            return fail(ConvoyStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        match sim::run(&(*config).config, seed) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(ConvoyRunHandle { log: r.log, metrics: Some(r.metrics) }));
                ConvoyStatus::Ok
            }
            Err(SimError::Aborted { reason, log }) => {
                *out = Box::into_raw(Box::new(ConvoyRunHandle { log: *log, metrics: None }));
                fail(ConvoyStatus::Aborted, reason)
            }
            Err(e) => fail(ConvoyStatus::InvalidConfig, e.to_string()),
        }
    })
}

/// Number of logged ticks.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn convoy_run_row_count(run: *const ConvoyRunHandle) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).log.len()
}

/// True pose of `robot` at log row `row`.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_run_pose(
    run: *const ConvoyRunHandle,
    row: usize,
    robot: usize,
    out: *mut ConvoyPose2,
) -> ConvoyStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            return fail(ConvoyStatus::NullPointer, "null argument");
        }
        let run = &*run;
        match run.log.rows.get(row).and_then(|r| r.robots.get(robot)) {
            Some(s) => {
                *out = s.pose.into();
                ConvoyStatus::Ok
            }
            None => fail(ConvoyStatus::InvalidArgument, format!("no row {row} / robot {robot}")),
        }
    })
}

/// Metrics report as JSON. Fails with [`ConvoyStatus::Aborted`] for an
/// aborted run.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_run_metrics_json(run: *const ConvoyRunHandle, out: *mut *mut c_char) -> ConvoyStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            return fail(ConvoyStatus::NullPointer, "null argument");
        }
        match &(*run).metrics {
            Some(m) => {
                *out = to_c_string(m.to_json());
                ConvoyStatus::Ok
            }
            None => fail(ConvoyStatus::Aborted, "aborted runs have no metrics"),
        }
    })
}

/// Write the trajectory log as CSV.
///
/// # Safety
/// `run` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn convoy_run_write_csv(run: *const ConvoyRunHandle, path: *const c_char) -> ConvoyStatus {
    guard(|| {
        if run.is_null() {
            return fail(ConvoyStatus::NullPointer, "null run handle");
        }
        let p = match read_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match (*run).log.save_csv(p) {
            Ok(()) => ConvoyStatus::Ok,
            Err(e) => fail(ConvoyStatus::Io, format!("{p}: {e}")),
        }
    })
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn convoy_run_free(run: *mut ConvoyRunHandle) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_se2_exp(xi: ConvoyTwist2, out: *mut ConvoyPose2) -> ConvoyStatus {
    if out.is_null() {
        return fail(ConvoyStatus::NullPointer, "null output pointer");
    }
    *out = geometry::exp_se2(&Twist2::new(xi.rho_x, xi.rho_y, xi.phi)).into();
    ConvoyStatus::Ok
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_se2_log(pose: ConvoyPose2, out: *mut ConvoyTwist2) -> ConvoyStatus {
    if out.is_null() {
        return fail(ConvoyStatus::NullPointer, "null output pointer");
    }
    let t = geometry::log_se2(&pose.into());
    *out = ConvoyTwist2 { rho_x: t.rho_x, rho_y: t.rho_y, phi: t.phi };
    ConvoyStatus::Ok
}

/// Geodesic interpolation, `alpha` in [0, 1].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_se2_interpolate(
    a: ConvoyPose2,
    b: ConvoyPose2,
    alpha: f64,
    out: *mut ConvoyPose2,
) -> ConvoyStatus {
    if out.is_null() {
        return fail(ConvoyStatus::NullPointer, "null output pointer");
    }
    match geometry::interpolate(&a.into(), &b.into(), alpha) {
        Ok(p) => {
            *out = p.into();
            ConvoyStatus::Ok
        }
        Err(e) => fail(ConvoyStatus::InvalidArgument, e.to_string()),
    }
}

/// Build a path from `count` waypoints; headings are derived from the
/// polyline.
///
/// # Safety
/// `points` must reference `count` readable poses; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_path_build(
    points: *const ConvoyPose2,
    count: usize,
    corridor_half_width: f64,
    closed: bool,
    out: *mut *mut ConvoyPathHandle,
) -> ConvoyStatus {
    guard(|| {
        if points.is_null() || out.is_null() {
            return fail(ConvoyStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let pts: Vec<Pose2> = std::slice::from_raw_parts(points, count).iter().map(|&p| p.into()).collect();
        match TeachPath::build(&pts, corridor_half_width, closed) {
            Ok(path) => {
                *out = Box::into_raw(Box::new(ConvoyPathHandle { path }));
                ConvoyStatus::Ok
            }
            Err(e) => fail(ConvoyStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Total arc length; negative for a null handle.
///
/// # Safety
/// `path` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn convoy_path_length(path: *const ConvoyPathHandle) -> f64 {
    if path.is_null() {
        return -1.0;
    }
    (*path).path.length()
}

/// # Safety
/// `path` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_path_pose_at(
    path: *const ConvoyPathHandle,
    s: f64,
    out: *mut ConvoyPose2,
) -> ConvoyStatus {
    if path.is_null() || out.is_null() {
        return fail(ConvoyStatus::NullPointer, "null argument");
    }
    match (*path).path.pose_at(s) {
        Ok(p) => {
            *out = p.into();
            ConvoyStatus::Ok
        }
        Err(e) => fail(ConvoyStatus::InvalidArgument, e.to_string()),
    }
}

/// # Safety
/// `path` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn convoy_path_project(
    path: *const ConvoyPathHandle,
    pose: ConvoyPose2,
    out: *mut ConvoyPathCoord,
) -> ConvoyStatus {
    if path.is_null() || out.is_null() {
        return fail(ConvoyStatus::NullPointer, "null argument");
    }
    let c = (*path).path.project(&pose.into());
    *out = ConvoyPathCoord { s: c.s, lateral: c.lateral, heading_err: c.heading_err };
    ConvoyStatus::Ok
}

/// # Safety
/// `path` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn convoy_path_free(path: *mut ConvoyPathHandle) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}
