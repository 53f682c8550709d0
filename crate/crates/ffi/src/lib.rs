//! C interface to the estimator.
//!
//! Every function returns an [`RgStatus`]; on failure a message for the
//! calling thread is available from [`rg_last_error`]. Handles are opaque
//! and must be released with [`rg_estimator_free`]. Events must be pushed in
//! arrival order, radar scans at their receive time.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use radgrip::log::{parse_event, ImuSample, SensorEvent};
use radgrip::mhe::{Estimator, OutputRow};
use radgrip::{Error, RadarPoint, RadarScan, TireParamSet, VehicleConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Config = 4,
    Io = 5,
    /// Measurement outside its admissible domain (stale, aliased, gated).
    Domain = 6,
    Numeric = 7,
    Panic = 8,
}

/// One estimate. Slip, force and side-slip fields are NaN below the
/// lateral-force speed gate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
#[allow(non_snake_case)]
pub struct RgEstimate {
    pub t: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub bx: f64,
    pub by: f64,
    pub br: f64,
    pub alpha_f: f64,
    pub alpha_r: f64,
    pub Fyf: f64,
    pub Fyr: f64,
    pub BCD_f: f64,
    pub BCD_r: f64,
    pub beta: f64,
}

impl From<&OutputRow> for RgEstimate {
    fn from(r: &OutputRow) -> Self {
        let n = |v: Option<f64>| v.unwrap_or(f64::NAN);
        Self {
            t: r.t,
            vx: r.vx,
            vy: r.vy,
            r: r.r,
            bx: r.bx,
            by: r.by,
            br: r.br,
            alpha_f: n(r.alpha_f),
            alpha_r: n(r.alpha_r),
            Fyf: n(r.Fyf),
            Fyr: n(r.Fyr),
            BCD_f: r.BCD_f,
            BCD_r: r.BCD_r,
            beta: n(r.beta),
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RgRadarPoint {
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub doppler: f64,
    pub snr: f64,
}

/// Opaque estimator handle.
pub struct RgEstimator {
    inner: Estimator,
    pending: VecDeque<OutputRow>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RgStatus {
    match e {
        Error::AtLine { source, .. } => status_of(source),
        Error::Parse(_) | Error::Schema(_) => RgStatus::Parse,
        Error::Config(_) => RgStatus::Config,
        Error::Io(_) => RgStatus::Io,
        Error::Usage(_) | Error::Range(_) => RgStatus::InvalidArgument,
        Error::Numeric(_) | Error::TruthDivergence { .. } | Error::InsufficientData(_) => RgStatus::Numeric,
        _ => RgStatus::Domain,
    }
}

fn fail(status: RgStatus, msg: impl Into<String>) -> RgStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), RgStatus>) -> RgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(RgStatus::Panic, "internal panic"),
    }
}

unsafe fn handle<'a>(h: *mut RgEstimator) -> Result<&'a mut RgEstimator, RgStatus> {
    h.as_mut().ok_or_else(|| fail(RgStatus::NullPointer, "null estimator handle"))
}

unsafe fn cstr<'a>(s: *const c_char, what: &str) -> Result<&'a str, RgStatus> {
    if s.is_null() {
        return Err(fail(RgStatus::NullPointer, format!("null {what}")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(RgStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

fn push(h: &mut RgEstimator, e: &SensorEvent) -> Result<(), RgStatus> {
    let rows = h.inner.process(e).map_err(|e| fail(status_of(&e), e.to_string()))?;
    h.pending.extend(rows);
    Ok(())
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn rg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn rg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an estimator from a TOML configuration; NULL selects the
/// built-in defaults.
///
/// # Safety
/// `config_toml` is NULL or a nul-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_new(config_toml: *const c_char, out: *mut *mut RgEstimator) -> RgStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(RgStatus::NullPointer, "null output pointer"));
        }
        *out = ptr::null_mut();
        let cfg = if config_toml.is_null() {
            VehicleConfig::default()
        } else {
            let text = cstr(config_toml, "config")?;
            VehicleConfig::from_toml_str(text).map_err(|e| fail(status_of(&e), e.to_string()))?
        };
        let inner = Estimator::new(cfg).map_err(|e| fail(status_of(&e), e.to_string()))?;
        *out = Box::into_raw(Box::new(RgEstimator {
            inner,
            pending: VecDeque::new(),
        }));
        Ok(())
    })
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `h` was returned by `rg_estimator_new` and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_free(h: *mut RgEstimator) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Overrides the tire parameters, twelve values `B C D E Sh Sv` front
/// then rear. Only valid before the first event.
///
/// # Safety
/// `params` points to 12 readable doubles.
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_set_params(h: *mut RgEstimator, params: *const f64) -> RgStatus {
    guard(|| {
        let h = handle(h)?;
        if params.is_null() {
            return Err(fail(RgStatus::NullPointer, "null params"));
        }
        if !h.inner.window().is_empty() {
            return Err(fail(RgStatus::InvalidArgument, "parameters can only be set before the first event"));
        }
        let mut a = [0.0; 12];
        a.copy_from_slice(std::slice::from_raw_parts(params, 12));
        if a.iter().any(|v| !v.is_finite()) {
            return Err(fail(RgStatus::InvalidArgument, "non-finite parameter"));
        }
        h.inner = Estimator::with_params(TireParamSet::from_array(a), h.inner.config().clone());
        Ok(())
    })
}

/// # Safety
/// `h` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_push_imu(h: *mut RgEstimator, t: f64, ax: f64, ay: f64, r: f64) -> RgStatus {
    guard(|| {
        let h = handle(h)?;
        push(h, &SensorEvent::Imu(ImuSample::planar(t, ax, ay, r)))
    })
}

/// Logged steering angle, before the steering ratio is applied.
///
/// # Safety
/// `h` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_push_steering(h: *mut RgEstimator, t: f64, delta: f64) -> RgStatus {
    guard(|| {
        let h = handle(h)?;
        push(h, &SensorEvent::Steering { t, delta })
    })
}

/// # Safety
/// `h` is a live handle; `points` holds `n` entries (may be NULL if `n` is 0).
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_push_radar(
    h: *mut RgEstimator,
    radar_id: usize,
    t_capture: f64,
    t_receive: f64,
    points: *const RgRadarPoint,
    n: usize,
) -> RgStatus {
    guard(|| {
        let h = handle(h)?;
        if points.is_null() && n > 0 {
            return Err(fail(RgStatus::NullPointer, "null radar points"));
        }
        let pts = if n == 0 { &[][..] } else { std::slice::from_raw_parts(points, n) };
        let scan = RadarScan {
            radar_id,
            t_capture,
            t_receive,
            points: pts
                .iter()
                .map(|p| RadarPoint {
                    range: p.range,
                    azimuth: p.azimuth,
                    elevation: p.elevation,
                    doppler: p.doppler,
                    snr: p.snr,
                })
                .collect(),
        };
        let values = pts.iter().flat_map(|p| [p.range, p.azimuth, p.elevation, p.doppler, p.snr]);
        if !values.chain([t_capture, t_receive]).all(f64::is_finite) || t_receive < t_capture {
            return Err(fail(RgStatus::InvalidArgument, "radar scan times or points out of range"));
        }
        push(h, &SensorEvent::Radar(scan))
    })
}

/// Pushes one record in the text log format.
///
/// # Safety
/// `h` is a live handle; `line` is nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_push_record(h: *mut RgEstimator, line: *const c_char) -> RgStatus {
    guard(|| {
        let h = handle(h)?;
        let text = cstr(line, "record")?;
        let event = parse_event(text).map_err(|e| fail(status_of(&e), e.to_string()))?;
        push(h, &event)
    })
}

/// Flushes every state not yet reported into the pending queue. Call at
/// the end of a log.
///
/// # Safety
/// `h` is a live handle.
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_finish(h: *mut RgEstimator) -> RgStatus {
    guard(|| {
        let h = handle(h)?;
        let rows = h.inner.finish();
        h.pending.extend(rows);
        Ok(())
    })
}

/// Number of estimates waiting to be read.
///
/// # Safety
/// `h` is a live handle; `count` is writable.
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_pending(h: *mut RgEstimator, count: *mut usize) -> RgStatus {
    guard(|| {
        let h = handle(h)?;
        if count.is_null() {
            return Err(fail(RgStatus::NullPointer, "null count"));
        }
        *count = h.pending.len();
        Ok(())
    })
}

/// Moves up to `capacity` estimates, oldest first, into `out` and stores
/// how many were written.
///
/// # Safety
/// `h` is a live handle; `out` has room for `capacity` entries; `written`
/// is writable.
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_poll(
    h: *mut RgEstimator,
    out: *mut RgEstimate,
    capacity: usize,
    written: *mut usize,
) -> RgStatus {
    guard(|| {
        let h = handle(h)?;
        if written.is_null() || (out.is_null() && capacity > 0) {
            return Err(fail(RgStatus::NullPointer, "null output buffer"));
        }
        let n = capacity.min(h.pending.len());
        for (i, row) in h.pending.drain(..n).enumerate() {
            out.add(i).write(RgEstimate::from(&row));
        }
        *written = n;
        Ok(())
    })
}

/// Current tire parameters, twelve values as in `rg_estimator_set_params`.
///
/// # Safety
/// `h` is a live handle; `out` has room for 12 doubles.
#[no_mangle]
pub unsafe extern "C" fn rg_estimator_params(h: *mut RgEstimator, out: *mut f64) -> RgStatus {
    guard(|| {
        let h = handle(h)?;
        if out.is_null() {
            return Err(fail(RgStatus::NullPointer, "null params buffer"));
        }
        let a = h.inner.params().to_array();
        std::slice::from_raw_parts_mut(out, 12).copy_from_slice(&a);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_handle_is_reported() {
        let s = unsafe { rg_estimator_push_imu(ptr::null_mut(), 0.0, 0.0, 0.0, 0.0) };
        assert_eq!(s, RgStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(rg_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "null estimator handle");
    }

    #[test]
    fn version_matches_the_crate() {
        let v = unsafe { CStr::from_ptr(rg_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn error_classes_map_to_codes() {
        assert_eq!(status_of(&Error::Parse("x".into()).at_line(3)), RgStatus::Parse);
        assert_eq!(status_of(&Error::Config("m".into())), RgStatus::Config);
        assert_eq!(
            status_of(&Error::AliasDomain {
                doppler: 30.0,
                nyquist: 26.5
            }),
            RgStatus::Domain
        );
    }
}
