//! Radar Doppler measurement model: projection of the body velocity onto a
//! detection's line of sight, Nyquist de-aliasing against a predicted value,
//! SNR and innovation gating, and the robust per-point residual.

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::config::VehicleConfig;
use crate::error::{Error, Result};
use crate::types::{RadarExtrinsics, RadarPoint, RadarScan, StateVector, VehicleState};

/// Unit line-of-sight vector in the radar frame.
pub fn bearing_vector(azimuth: f64, elevation: f64) -> Vector3<f64> {
    let (st, ct) = azimuth.sin_cos();
    let (sp, cp) = elevation.sin_cos();
    Vector3::new(cp * ct, cp * st, sp)
}

/// Coefficients `c` with `v_e = c · (vx, vy, r)`; the Doppler model is
/// linear in the planar velocity and yaw rate.
pub fn doppler_coefficients(ext: &RadarExtrinsics, bearing: &Vector3<f64>) -> [f64; 3] {
    let b = ext.rotation_matrix() * bearing;
    let t = ext.translation_vector();
    // v_R = R^T (v + ω × t), ω × t = (-r·ty, r·tx, 0), v_e = -(R b)·(…)
    [-b.x, -b.y, b.x * t.y - b.y * t.x]
}

/// Doppler a static target along `bearing` would show.
pub fn expected_doppler_along(x: &StateVector, ext: &RadarExtrinsics, bearing: &Vector3<f64>) -> f64 {
    let c = doppler_coefficients(ext, bearing);
    c[0] * x[0] + c[1] * x[1] + c[2] * x[2]
}

/// `v_e = -b(θ, φ) · R^T((vx, vy, 0) + (0, 0, r) × t)`; vertical motion and
/// roll/pitch rates are neglected.
pub fn expected_doppler(x: &VehicleState, ext: &RadarExtrinsics, azimuth: f64, elevation: f64) -> f64 {
    expected_doppler_along(&x.to_vector(), ext, &bearing_vector(azimuth, elevation))
}

/// Nearest integer with ties to even.
pub fn nint(v: f64) -> f64 {
    v.round_ties_even()
}

/// Recovers the true Doppler from an aliased reading using the prediction
/// `v_e`: `n = nint((v_e - v_d) / 2V_N)`, `v_r = v_d + 2 n V_N`.
pub fn dealias(v_d: f64, v_e: f64, nyquist: f64) -> Result<(f64, i64)> {
    if !(v_d.abs() <= nyquist) {
        return Err(Error::AliasDomain { doppler: v_d, nyquist });
    }
    let n = nint((v_e - v_d) / (2.0 * nyquist));
    Ok((v_d + 2.0 * n * nyquist, n as i64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    LowSnr,
    Innovation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Accept,
    Reject(RejectReason),
}

pub fn gate_point(p: &RadarPoint, v_e: f64, v_r: f64, snr_min: f64, dv_max: f64) -> GateDecision {
    if p.snr < snr_min {
        GateDecision::Reject(RejectReason::LowSnr)
    } else if (v_r - v_e).abs() > dv_max {
        GateDecision::Reject(RejectReason::Innovation)
    } else {
        GateDecision::Accept
    }
}

/// One accepted, de-aliased detection bound to the state at capture time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerFactor {
    pub state_timestamp: f64,
    pub radar_id: usize,
    /// Radar-frame unit bearing.
    pub bearing: Vector3<f64>,
    pub v_r: f64,
    pub sigma: f64,
}

/// Whitened residual, always evaluated under the Cauchy loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerResidual {
    pub value: f64,
    pub robust: bool,
}

pub fn doppler_residual(f: &DopplerFactor, x: &VehicleState, ext: &RadarExtrinsics) -> DopplerResidual {
    DopplerResidual {
        value: (f.v_r - expected_doppler_along(&x.to_vector(), ext, &f.bearing)) / f.sigma,
        robust: true,
    }
}

/// Residual and its gradient w.r.t. `(vx, vy, r)`.
pub fn doppler_block(f: &DopplerFactor, x: &StateVector, ext: &RadarExtrinsics) -> (f64, [f64; 3]) {
    let c = doppler_coefficients(ext, &f.bearing);
    let v_e = c[0] * x[0] + c[1] * x[1] + c[2] * x[2];
    let s = f.sigma;
    ((f.v_r - v_e) / s, [-c[0] / s, -c[1] / s, -c[2] / s])
}

/// Cauchy loss `ρ(s) = c² ln(1 + s/c²)` on a squared residual `s`.
pub fn cauchy_rho(s: f64, scale: f64) -> f64 {
    let c2 = scale * scale;
    c2 * (s / c2).ln_1p()
}

/// `ρ'(s)`, the IRLS weight.
pub fn cauchy_weight(s: f64, scale: f64) -> f64 {
    1.0 / (1.0 + s / (scale * scale))
}

/// Where the scan's capture-time state lives in the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Insertion {
    /// Bind to the existing state with this index.
    Existing(usize),
    /// Insert a new state at `t` (linear interpolation / extrapolation
    /// provides `initial`).
    New { t: f64, initial: VehicleState },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GateCounts {
    pub low_snr: usize,
    pub innovation: usize,
    pub alias_domain: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanFactors {
    pub insertion: Insertion,
    pub factors: Vec<DopplerFactor>,
    pub rejected: GateCounts,
}

/// Anything that can report an estimate at an arbitrary time inside its span.
pub trait StateLookup {
    fn window_start(&self) -> Option<f64>;
    /// Index of a state within `tol` of `t`.
    fn find_state(&self, t: f64, tol: f64) -> Option<usize>;
    /// Interpolated estimate at `t` (extrapolated past the newest state).
    fn interpolate(&self, t: f64) -> Option<VehicleState>;
}

/// Two states closer than this share one node.
pub const SAME_STATE_TOL: f64 = 1.0e-6;

/// De-aliases and gates every point of `scan` against the window estimate
/// at capture time and decides which state the surviving factors bind to.
pub fn scan_to_factors<W: StateLookup>(scan: &RadarScan, window: &W, cfg: &VehicleConfig) -> Result<ScanFactors> {
    let ext = cfg
        .radars
        .get(scan.radar_id)
        .ok_or_else(|| Error::Schema(format!("unknown radar_id {}", scan.radar_id)))?;
    let start = window
        .window_start()
        .ok_or_else(|| Error::InsufficientData("empty window".into()))?;
    if scan.t_capture < start - SAME_STATE_TOL {
        return Err(Error::StaleScan {
            t_capture: scan.t_capture,
            window_start: start,
        });
    }
    let estimate = window
        .interpolate(scan.t_capture)
        .ok_or_else(|| Error::InsufficientData("empty window".into()))?;
    let insertion = match window.find_state(scan.t_capture, SAME_STATE_TOL) {
        Some(i) => Insertion::Existing(i),
        None => Insertion::New {
            t: scan.t_capture,
            initial: estimate,
        },
    };
    let x = estimate.to_vector();
    let th = &cfg.thresholds;
    let mut rejected = GateCounts::default();
    let mut factors = Vec::with_capacity(scan.points.len());
    for p in &scan.points {
        let bearing = bearing_vector(p.azimuth, p.elevation);
        let v_e = expected_doppler_along(&x, ext, &bearing);
        let Ok((v_r, _)) = dealias(p.doppler, v_e, ext.nyquist) else {
            rejected.alias_domain += 1;
            continue;
        };
        match gate_point(p, v_e, v_r, th.snr_min, th.dV_r_max) {
            GateDecision::Accept => factors.push(DopplerFactor {
                state_timestamp: scan.t_capture,
                radar_id: scan.radar_id,
                bearing,
                v_r,
                sigma: cfg.covariances.sigma_doppler,
            }),
            GateDecision::Reject(RejectReason::LowSnr) => rejected.low_snr += 1,
            GateDecision::Reject(RejectReason::Innovation) => rejected.innovation += 1,
        }
    }
    Ok(ScanFactors {
        insertion,
        factors,
        rejected,
    })
}

/// Planar radar ego-speed from one scan by least squares, ignoring the lever
/// arm and aliasing. Used only to decide standstill before the first fix.
pub fn radar_ego_speed(scan: &RadarScan, ext: &RadarExtrinsics, snr_min: f64) -> Option<f64> {
    let rot = ext.rotation_matrix();
    let mut ata = Matrix2::zeros();
    let mut atb = Vector2::zeros();
    let mut n = 0;
    for p in scan.points.iter().filter(|p| p.snr >= snr_min) {
        let b = rot * bearing_vector(p.azimuth, p.elevation);
        let a = Vector2::new(-b.x, -b.y);
        ata += a * a.transpose();
        atb += a * p.doppler;
        n += 1;
    }
    if n < 3 {
        return None;
    }
    let v = ata.try_inverse()? * atb;
    Some(v.norm())
}
