//! Synthetic ground truth and sensor streams.
//!
//! A single-track truth model with known tire parameters drives IMU,
//! steering and radar generators. Radar Doppler is produced with the same
//! projection the estimator inverts, then wrapped into the Nyquist band and
//! delivered after a random processing latency.

pub mod scenarios;
pub mod sensors;
pub mod truth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use scenarios::{preset, run_scenario, write_truth_csv, Scenario, ScenarioOutput, PRESETS, TRUTH_HEADER};
pub use sensors::{gen_imu, gen_radar_scan, gen_steering, wrap};
pub use truth::{simulate_truth, AccelShape, ManeuverScript, Segment, SpeedProfile, SteerProfile, TruthState};

/// Sensor noise and error injection. A zero scale disables the
/// corresponding noise source, which the noiseless test fixtures rely on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Accelerometer white noise std (m/s²).
    pub accel_std: f64,
    /// Gyro white noise std (rad/s).
    pub gyro_std: f64,
    /// Constant biases added to the IMU `[ax, ay, r]`.
    pub imu_bias: [f64; 3],
    pub steering_std: f64,
    /// Points per scan ~ Normal(mu_n, sigma_n²), clamped at zero.
    pub mu_n: f64,
    pub sigma_n: f64,
    /// Azimuth ~ Cauchy(mu_theta, gamma_theta), clamped to ±fov_azimuth.
    pub mu_theta: f64,
    pub gamma_theta: f64,
    pub fov_azimuth: f64,
    /// Elevation ~ Cauchy(mu_phi, gamma_phi), clamped to ±fov_elevation.
    pub mu_phi: f64,
    pub gamma_phi: f64,
    pub fov_elevation: f64,
    /// Gaussian noise on the reported bearing angles (rad).
    pub bearing_std: f64,
    /// Doppler noise ~ Cauchy(mu_vd, gamma_vd).
    pub mu_vd: f64,
    pub gamma_vd: f64,
    /// Latency ~ Normal(mu_td, sigma_td²), clamped at zero.
    pub mu_td: f64,
    pub sigma_td: f64,
    pub snr_range: [f64; 2],
    pub range_limits: [f64; 2],
    /// Share of points on moving objects, whose Doppler is offset.
    pub outlier_fraction: f64,
    pub outlier_offset: f64,
    pub imu_rate: f64,
    pub steering_rate: f64,
    /// Common trigger period of all radars (s).
    pub radar_period: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            accel_std: 0.02,
            gyro_std: 0.001,
            imu_bias: [0.0; 3],
            steering_std: 0.0,
            mu_n: 40.0,
            sigma_n: 10.0,
            mu_theta: 0.0,
            gamma_theta: 0.35,
            fov_azimuth: 60f64.to_radians(),
            mu_phi: 0.0,
            gamma_phi: 0.05,
            fov_elevation: 15f64.to_radians(),
            bearing_std: 0.003,
            mu_vd: 0.0,
            gamma_vd: 0.05,
            mu_td: 0.090,
            sigma_td: 0.005,
            snr_range: [5.0, 35.0],
            range_limits: [2.0, 80.0],
            outlier_fraction: 0.0,
            outlier_offset: 10.0,
            imu_rate: 200.0,
            steering_rate: 100.0,
            radar_period: 0.060,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// No noise, no latency, no outliers; every point passes the SNR gate.
    pub fn noiseless() -> Self {
        Self {
            accel_std: 0.0,
            gyro_std: 0.0,
            sigma_n: 0.0,
            bearing_std: 0.0,
            gamma_vd: 0.0,
            mu_td: 0.0,
            sigma_td: 0.0,
            snr_range: [30.0, 30.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("accel_std", self.accel_std),
            ("gyro_std", self.gyro_std),
            ("steering_std", self.steering_std),
            ("sigma_n", self.sigma_n),
            ("gamma_theta", self.gamma_theta),
            ("gamma_phi", self.gamma_phi),
            ("bearing_std", self.bearing_std),
            ("gamma_vd", self.gamma_vd),
            ("sigma_td", self.sigma_td),
            ("fov_azimuth", self.fov_azimuth),
            ("fov_elevation", self.fov_elevation),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("noise.{name}")));
            }
        }
        for (name, v) in [
            ("imu_rate", self.imu_rate),
            ("steering_rate", self.steering_rate),
            ("radar_period", self.radar_period),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("noise.{name}")));
            }
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::Config("noise.outlier_fraction".into()));
        }
        if !(self.snr_range[0] <= self.snr_range[1]) {
            return Err(Error::Config("noise.snr_range".into()));
        }
        if !(self.range_limits[0] > 0.0 && self.range_limits[0] <= self.range_limits[1]) {
            return Err(Error::Config("noise.range_limits".into()));
        }
        Ok(())
    }
}
