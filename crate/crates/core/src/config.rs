//! Vehicle, sensor and estimator configuration.
//!
//! Loaded from one TOML file whose keys match the field names below. Every
//! key has a default, so an empty file yields the shipped configuration.
//! Covariance entries are diagonals (variances, squared units).

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{PacejkaAxleParams, RadarExtrinsics, TireParamSet};

/// Nominal tire parameters, also the truth parameters of the simulator.
pub const NOMINAL_FRONT: PacejkaAxleParams = PacejkaAxleParams::new(11.0, 1.6, 1.7, 0.3, 0.0, 0.0);
pub const NOMINAL_REAR: PacejkaAxleParams = PacejkaAxleParams::new(13.0, 1.5, 1.8, 0.2, 0.0, 0.0);

pub const fn nominal_tires() -> TireParamSet {
    TireParamSet {
        front: NOMINAL_FRONT,
        rear: NOMINAL_REAR,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[allow(non_snake_case)]
pub struct Thresholds {
    /// Standstill speed limit (m/s).
    pub V_min: f64,
    /// Standstill gravity-compensated acceleration limit (m/s²).
    pub A_min: f64,
    /// Minimum continuous standstill duration (s).
    pub T_stop: f64,
    /// Minimum radar point SNR (dB).
    pub snr_min: f64,
    /// Doppler innovation gate (m/s).
    pub dV_r_max: f64,
    /// Minimum total speed for lateral-force residuals (m/s).
    pub V_Fy_min: f64,
    /// Maximum horizon span (s).
    pub dTw: f64,
    /// State spacing (s).
    pub dt: f64,
    /// Largest accepted capture-to-arrival latency (s).
    pub latency_max: f64,
    /// Radar silence after which a solve runs anyway (s).
    pub watchdog: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            V_min: 0.5,
            A_min: 0.2,
            T_stop: 1.0,
            snr_min: 10.0,
            dV_r_max: 3.0,
            V_Fy_min: 5.0,
            dTw: 0.150,
            dt: 0.010,
            latency_max: 0.140,
            watchdog: 0.100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[allow(non_snake_case)]
pub struct Covariances {
    /// Anchor prior on the oldest window state.
    pub Sigma_x0: [f64; 6],
    /// Multiplier on `Sigma_x0` before the first solve.
    pub bootstrap_scale: f64,
    /// Parameter prior, front axle then rear axle.
    pub Sigma_P: [f64; 12],
    /// Process noise for a nominal `dt` interval.
    pub Sigma_w: [f64; 6],
    /// Zero-velocity pseudo-measurement noise.
    pub Sigma_zv: [f64; 6],
    /// Doppler measurement standard deviation (m/s).
    pub sigma_doppler: f64,
    /// Lateral force measurement noise, front then rear (N²).
    pub Sigma_Fy: [f64; 2],
    /// Cauchy loss scale applied to whitened Doppler residuals.
    pub cauchy_scale: f64,
}

impl Default for Covariances {
    fn default() -> Self {
        Self {
            Sigma_x0: sq([0.05, 0.05, 0.01, 0.01, 0.01, 0.001]),
            bootstrap_scale: 1.0e4,
            Sigma_P: {
                let axle = sq([1.0, 0.1, 0.04, 0.1, 0.004, 0.02]);
                let mut out = [0.0; 12];
                out[..6].copy_from_slice(&axle);
                out[6..].copy_from_slice(&axle);
                out
            },
            Sigma_w: sq([0.02, 0.02, 0.005, 2.0e-4, 2.0e-4, 2.0e-5]),
            Sigma_zv: sq([0.01, 0.01, 0.005, 0.02, 0.02, 0.002]),
            sigma_doppler: 0.25,
            Sigma_Fy: [1000.0 * 1000.0, 1000.0 * 1000.0],
            cauchy_scale: 1.0,
        }
    }
}

fn sq<const N: usize>(s: [f64; N]) -> [f64; N] {
    s.map(|v| v * v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[allow(non_snake_case)]
pub struct ParamBounds {
    pub P_min: [f64; 6],
    pub P_max: [f64; 6],
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            P_min: [1.0, 0.5, 0.5, -5.0, -0.1, -0.5],
            P_max: [40.0, 4.0, 4.0, 1.0, 0.1, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Wall-clock budget per solve (s).
    pub max_time: f64,
    pub lm_lambda_init: f64,
    pub gradient_tol: f64,
    pub step_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            max_time: 0.008,
            lm_lambda_init: 1.0e-4,
            gradient_tol: 1.0e-10,
            step_tol: 1.0e-10,
        }
    }
}

/// Zero-velocity update gravity handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GravitySource {
    /// Gravity taken perpendicular to the driving plane; horizontal biases
    /// then absorb any mounting tilt, matching the raw accelerations fed to
    /// the motion model while driving.
    #[default]
    Plane,
    /// Gravity from the standstill attitude filter.
    Attitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[allow(non_snake_case)]
pub struct VehicleConfig {
    pub m: f64,
    pub lf: f64,
    pub lr: f64,
    pub hg: f64,
    pub g: f64,
    pub rho: f64,
    pub A: f64,
    pub Czf: f64,
    pub Czr: f64,
    /// Yaw inertia, used by the truth simulator only.
    pub Iz: f64,
    /// Column-to-road-wheel steering ratio applied to logged angles.
    pub steering_ratio: f64,
    /// Largest admissible road-wheel angle.
    pub delta_max: f64,
    /// Initial IMU biases `[bx, by, br]`.
    pub bias_init: [f64; 3],
    pub gravity_source: GravitySource,
    pub radars: Vec<RadarExtrinsics>,
    pub thresholds: Thresholds,
    pub covariances: Covariances,
    pub bounds: ParamBounds,
    pub tire_init: TireParamSet,
    pub solver: SolverSettings,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        let nyquist = 26.5;
        let mut left = RadarExtrinsics::yawed(std::f64::consts::FRAC_PI_2, [0.4, 0.85, 0.5], nyquist);
        left.trigger_offset = 0.020;
        let mut right =
            RadarExtrinsics::yawed(-std::f64::consts::FRAC_PI_2, [0.4, -0.85, 0.5], nyquist);
        right.trigger_offset = 0.040;
        Self {
            m: 800.0,
            lf: 1.7,
            lr: 1.5,
            hg: 0.3,
            g: 9.81,
            rho: 1.225,
            A: 1.0,
            Czf: 1.1,
            Czr: 1.4,
            Iz: 1000.0,
            steering_ratio: 1.0,
            delta_max: 0.6,
            bias_init: [0.0; 3],
            gravity_source: GravitySource::Plane,
            radars: vec![
                RadarExtrinsics::yawed(0.0, [2.2, 0.0, 0.5], nyquist),
                left,
                right,
            ],
            thresholds: Thresholds::default(),
            covariances: Covariances::default(),
            bounds: ParamBounds::default(),
            tire_init: nominal_tires(),
            solver: SolverSettings::default(),
        }
    }
}

impl VehicleConfig {
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: VehicleConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        validate_config(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(name.to_string()))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(name.to_string()))
    }
}

/// Closest rotation in the Frobenius sense (polar factor).
fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    u * v_t
}

/// Checks every invariant, re-orthonormalizing radar rotations that are
/// within 1e-6 of orthonormal. The error names the offending field.
pub fn validate_config(mut cfg: VehicleConfig) -> Result<VehicleConfig> {
    for (name, v) in [
        ("m", cfg.m),
        ("lf", cfg.lf),
        ("lr", cfg.lr),
        ("hg", cfg.hg),
        ("g", cfg.g),
        ("Iz", cfg.Iz),
        ("steering_ratio", cfg.steering_ratio),
        ("delta_max", cfg.delta_max),
        ("thresholds.dt", cfg.thresholds.dt),
        ("thresholds.dTw", cfg.thresholds.dTw),
        ("thresholds.T_stop", cfg.thresholds.T_stop),
        ("thresholds.latency_max", cfg.thresholds.latency_max),
        ("thresholds.watchdog", cfg.thresholds.watchdog),
        ("covariances.sigma_doppler", cfg.covariances.sigma_doppler),
        ("covariances.cauchy_scale", cfg.covariances.cauchy_scale),
        ("covariances.bootstrap_scale", cfg.covariances.bootstrap_scale),
        ("solver.max_time", cfg.solver.max_time),
    ] {
        positive(name, v)?;
    }
    for (name, v) in [
        ("rho", cfg.rho),
        ("A", cfg.A),
        ("Czf", cfg.Czf),
        ("Czr", cfg.Czr),
        ("thresholds.V_min", cfg.thresholds.V_min),
        ("thresholds.A_min", cfg.thresholds.A_min),
        ("thresholds.snr_min", cfg.thresholds.snr_min),
        ("thresholds.dV_r_max", cfg.thresholds.dV_r_max),
        ("thresholds.V_Fy_min", cfg.thresholds.V_Fy_min),
        ("solver.lm_lambda_init", cfg.solver.lm_lambda_init),
        ("solver.gradient_tol", cfg.solver.gradient_tol),
        ("solver.step_tol", cfg.solver.step_tol),
    ] {
        finite(name, v)?;
    }
    if cfg.rho < 0.0 || cfg.A < 0.0 {
        return Err(Error::Config(if cfg.rho < 0.0 { "rho" } else { "A" }.into()));
    }
    if cfg.delta_max >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::Config("delta_max".into()));
    }
    if cfg.thresholds.dTw < cfg.thresholds.dt {
        return Err(Error::Config("thresholds.dTw".into()));
    }
    if cfg.solver.max_iterations < 1 {
        return Err(Error::Config("solver.max_iterations".into()));
    }
    for (i, b) in cfg.bias_init.iter().enumerate() {
        finite(&format!("bias_init[{i}]"), *b)?;
    }

    let cov = &cfg.covariances;
    let diagonals: [(&str, &[f64]); 5] = [
        ("covariances.Sigma_x0", &cov.Sigma_x0),
        ("covariances.Sigma_P", &cov.Sigma_P),
        ("covariances.Sigma_w", &cov.Sigma_w),
        ("covariances.Sigma_zv", &cov.Sigma_zv),
        ("covariances.Sigma_Fy", &cov.Sigma_Fy),
    ];
    for (name, diag) in diagonals {
        for (i, v) in diag.iter().enumerate() {
            positive(&format!("{name}[{i}]"), *v)?;
        }
    }

    let b = &cfg.bounds;
    for i in 0..6 {
        if !(b.P_min[i].is_finite() && b.P_max[i].is_finite()) || b.P_min[i] > b.P_max[i] {
            return Err(Error::Config(format!("bounds.P_min[{i}]")));
        }
    }
    for i in 0..3 {
        if b.P_max[i] <= 0.0 {
            return Err(Error::Config(format!("bounds.P_max[{i}]")));
        }
    }
    for (axle, p) in [("front", &cfg.tire_init.front), ("rear", &cfg.tire_init.rear)] {
        if p.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("tire_init.{axle}")));
        }
    }

    if cfg.radars.is_empty() {
        return Err(Error::Config("radars".into()));
    }
    for (i, radar) in cfg.radars.iter_mut().enumerate() {
        positive(&format!("radars[{i}].nyquist"), radar.nyquist)?;
        for (j, v) in radar.translation.iter().enumerate() {
            finite(&format!("radars[{i}].translation[{j}]"), *v)?;
        }
        finite(&format!("radars[{i}].trigger_offset"), radar.trigger_offset)?;
        let rot = radar.rotation_matrix();
        let name = format!("radars[{i}].rotation");
        if rot.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(name));
        }
        let defect = (rot.transpose() * rot - Matrix3::identity()).abs().max();
        if defect > 1.0e-6 || rot.determinant() <= 0.0 {
            return Err(Error::Config(name));
        }
        if defect > 1.0e-9 {
            radar.set_rotation(&orthonormalize(&rot));
        }
    }
    Ok(cfg)
}
