//! Standstill detection, standstill attitude, gravity compensation and the
//! zero-velocity pseudo-measurement that makes IMU biases observable.
//!
//! Conventions: world gravity is `(0, 0, -g)` with z up; an accelerometer at
//! rest reads `+g` on its up axis. `gravity_body` is the world gravity vector
//! expressed in the body frame, so the at-rest reading is its negation.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::config::Thresholds;
use crate::error::{Error, Result};
use crate::types::{StateVector, VehicleState};

/// Madgwick gradient-descent gain.
pub const MADGWICK_BETA: f64 = 0.1;
const MAX_SWEEPS: usize = 200;
const SWEEP_TOL: f64 = 1.0e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StandstillStatus {
    pub stationary: bool,
    /// Start of the current run of samples meeting both conditions.
    pub since: Option<f64>,
}

/// Advances the standstill detector by one sample. Both conditions must hold
/// continuously for `T_stop` before the vehicle is declared stationary.
pub fn update_standstill(
    status: StandstillStatus,
    speed_est: f64,
    accel_mag_comp: f64,
    t: f64,
    th: &Thresholds,
) -> StandstillStatus {
    if !(speed_est < th.V_min && accel_mag_comp < th.A_min) {
        return StandstillStatus {
            stationary: false,
            since: None,
        };
    }
    let since = status.since.unwrap_or(t);
    StandstillStatus {
        stationary: t - since >= th.T_stop - 1.0e-9,
        since: Some(since),
    }
}

/// One full 3-axis IMU sample, as needed by the attitude filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample3 {
    pub t: f64,
    pub accel: Vector3<f64>,
    pub gyro: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeEstimate {
    pub rotation_world_to_body: Matrix3<f64>,
    pub gravity_body: Vector3<f64>,
}

impl AttitudeEstimate {
    pub fn level(g: f64) -> Self {
        Self {
            rotation_world_to_body: Matrix3::identity(),
            gravity_body: Vector3::new(0.0, 0.0, -g),
        }
    }

    pub fn from_rotation(rotation_world_to_body: Matrix3<f64>, g: f64) -> Self {
        Self {
            rotation_world_to_body,
            gravity_body: rotation_world_to_body * Vector3::new(0.0, 0.0, -g),
        }
    }

    /// What a perfect accelerometer reads at rest with this attitude.
    pub fn gravity_reading(&self) -> Vector3<f64> {
        -self.gravity_body
    }
}

/// One Madgwick IMU step. `q` maps body to world.
pub fn madgwick_step(q: &mut Quaternion<f64>, accel: &Vector3<f64>, gyro: &Vector3<f64>, beta: f64, dt: f64) {
    let (q0, q1, q2, q3) = (q.w, q.i, q.j, q.k);
    let mut q_dot = *q * Quaternion::new(0.0, gyro.x, gyro.y, gyro.z) * 0.5;
    let n = accel.norm();
    if n > 0.0 {
        let a = accel / n;
        let f = Vector3::new(
            2.0 * (q1 * q3 - q0 * q2) - a.x,
            2.0 * (q0 * q1 + q2 * q3) - a.y,
            2.0 * (0.5 - q1 * q1 - q2 * q2) - a.z,
        );
        // rows: df/d(q0, q1, q2, q3)
        let grad = [
            -2.0 * q2 * f.x + 2.0 * q1 * f.y,
            2.0 * q3 * f.x + 2.0 * q0 * f.y - 4.0 * q1 * f.z,
            -2.0 * q0 * f.x + 2.0 * q3 * f.y - 4.0 * q2 * f.z,
            2.0 * q1 * f.x + 2.0 * q2 * f.y,
        ];
        // The textbook normalized step chatters around the fixed point with
        // an amplitude of β·dt; below |∇| = β the step turns proportional.
        let gn = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn > 0.0 {
            q_dot -= Quaternion::new(grad[0], grad[1], grad[2], grad[3]) * (beta / gn.max(beta));
        }
    }
    *q += q_dot * dt;
    let norm = q.norm();
    *q /= norm;
}

/// Tilt-only quaternion aligning body up with the measured specific force.
pub fn tilt_from_accel(a: &Vector3<f64>) -> Quaternion<f64> {
    let up_body = a.normalize();
    // rotation taking body-frame "up" onto world z
    UnitQuaternion::rotation_between(&up_body, &Vector3::z())
        .unwrap_or_else(UnitQuaternion::identity)
        .into_inner()
}

/// Estimates the standstill attitude by sweeping a Madgwick filter over the
/// stored window until the sweep-averaged orientation stops changing.
pub fn estimate_attitude(window: &[ImuSample3], t_stop: f64, g: f64) -> Result<AttitudeEstimate> {
    if window.len() < 2 {
        return Err(Error::InsufficientData(format!("{} IMU samples", window.len())));
    }
    let span = window[window.len() - 1].t - window[0].t;
    let period = span / (window.len() - 1) as f64;
    if span + period < t_stop - 1.0e-9 {
        return Err(Error::InsufficientData(format!(
            "window spans {span:.3} s, need {t_stop:.3} s"
        )));
    }
    // the vehicle is at rest, so the mean angular rate is gyro bias
    let gyro_mean = window.iter().map(|s| s.gyro).sum::<Vector3<f64>>() / window.len() as f64;
    let accel_mean = window.iter().map(|s| s.accel).sum::<Vector3<f64>>() / window.len() as f64;

    let mut q = tilt_from_accel(&accel_mean);
    let mut prev_avg: Option<Quaternion<f64>> = None;
    let mut avg = q;
    for _ in 0..MAX_SWEEPS {
        let mut acc = Quaternion::new(0.0, 0.0, 0.0, 0.0);
        for pair in window.windows(2) {
            let dt = pair[1].t - pair[0].t;
            madgwick_step(&mut q, &pair[1].accel, &(pair[1].gyro - gyro_mean), MADGWICK_BETA, dt);
            let aligned = if acc.dot(&q) < 0.0 { -q } else { q };
            acc += aligned;
        }
        avg = acc / acc.norm();
        if let Some(p) = prev_avg {
            let d = (avg - p).norm().min((avg + p).norm());
            if d < SWEEP_TOL {
                break;
            }
        }
        prev_avg = Some(avg);
    }
    let body_to_world = UnitQuaternion::from_quaternion(avg).to_rotation_matrix().into_inner();
    Ok(AttitudeEstimate::from_rotation(body_to_world.transpose(), g))
}

/// Removes the at-rest gravity reading from planar accelerometer samples.
pub fn gravity_compensate(ax_meas: f64, ay_meas: f64, att: &AttitudeEstimate) -> (f64, f64) {
    let reading = att.gravity_reading();
    (ax_meas - reading.x, ay_meas - reading.y)
}

/// Magnitude of the 3-axis specific force after removing gravity.
pub fn compensated_magnitude(accel: &Vector3<f64>, att: &AttitudeEstimate) -> f64 {
    (accel - att.gravity_reading()).norm()
}

/// Whitened zero-velocity residual:
/// `(vx, vy, r, bx - ãx, by - ãy, br - r_meas)`.
pub fn zv_residual(x: &VehicleState, ax_comp: f64, ay_comp: f64, r_meas: f64, sigma_zv: &[f64; 6]) -> Vector6<f64> {
    zv_block(&x.to_vector(), ax_comp, ay_comp, r_meas, sigma_zv).0
}

/// Residual and (diagonal) Jacobian of the zero-velocity factor.
pub fn zv_block(
    x: &StateVector,
    ax_comp: f64,
    ay_comp: f64,
    r_meas: f64,
    sigma_zv: &[f64; 6],
) -> (Vector6<f64>, Vector6<f64>) {
    let w = Vector6::from_fn(|i, _| 1.0 / sigma_zv[i].sqrt());
    let raw = Vector6::new(x[0], x[1], x[2], x[3] - ax_comp, x[4] - ay_comp, x[5] - r_meas);
    (raw.component_mul(&w), w)
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: f64 = 9.81;

    fn th() -> Thresholds {
        Thresholds::default()
    }

    fn run(speed: f64, accel: f64, duration: f64) -> StandstillStatus {
        let mut s = StandstillStatus::default();
        let n = (duration / 0.005).round() as usize;
        for k in 0..=n {
            s = update_standstill(s, speed, accel, k as f64 * 0.005, &th());
        }
        s
    }

    #[test]
    fn standstill_after_t_stop() {
        let s = run(0.1, 0.05, 1.2);
        assert!(s.stationary);
        assert_eq!(s.since, Some(0.0));
    }

    #[test]
    fn standstill_needs_full_duration() {
        assert!(!run(0.1, 0.05, 0.5).stationary);
    }

    #[test]
    fn speed_violation_resets_timer() {
        let s = run(0.1, 0.05, 1.2);
        let s = update_standstill(s, 0.6, 0.05, 1.205, &th());
        assert!(!s.stationary);
        assert_eq!(s.since, None);
        let s = update_standstill(s, 0.1, 0.05, 1.21, &th());
        assert!(!s.stationary);
        assert_eq!(s.since, Some(1.21));
    }

    #[test]
    fn accel_violation_resets_timer() {
        let s = run(0.1, 0.05, 1.2);
        assert!(!update_standstill(s, 0.1, 0.25, 1.205, &th()).stationary);
    }

    #[test]
    fn detector_is_deterministic() {
        let inputs: Vec<(f64, f64)> = (0..500)
            .map(|k| ((k as f64 * 0.37).sin().abs() * 0.6, (k as f64 * 0.11).cos().abs() * 0.25))
            .collect();
        let seq = || {
            let mut s = StandstillStatus::default();
            inputs
                .iter()
                .enumerate()
                .map(|(k, (v, a))| {
                    s = update_standstill(s, *v, *a, k as f64 * 0.005, &th());
                    s
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(), seq());
    }

    fn static_window(reading: Vector3<f64>, secs: f64) -> Vec<ImuSample3> {
        let n = (secs / 0.005).round() as usize;
        (0..=n)
            .map(|k| ImuSample3 {
                t: k as f64 * 0.005,
                accel: reading,
                gyro: Vector3::zeros(),
            })
            .collect()
    }

    #[test]
    fn level_attitude() {
        let att = estimate_attitude(&static_window(Vector3::new(0.0, 0.0, G), 1.0), 1.0, G).unwrap();
        assert!((att.gravity_body - Vector3::new(0.0, 0.0, -G)).norm() < 1e-6);
        assert!((att.rotation_world_to_body - Matrix3::identity()).norm() < 1e-6);
    }

    #[test]
    fn pitched_nose_down_attitude() {
        let pitch = 5f64.to_radians();
        // body x axis points forward and down; the at-rest reading is
        // R_wb * (0, 0, g)
        let reading = Vector3::new(-G * pitch.sin(), 0.0, G * pitch.cos());
        let att = estimate_attitude(&static_window(reading, 1.0), 1.0, G).unwrap();
        // high-precision value of g·sin(5°)
        assert!((att.gravity_body.x - 0.854_997_836_354_526_7).abs() < 1e-3);
        assert!(att.gravity_body.y.abs() < 1e-3);
        let r = att.rotation_world_to_body;
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
        assert!((att.gravity_body.norm() - G).abs() < 0.01 * G);
    }

    #[test]
    fn attitude_converges_under_noise_and_gyro_bias() {
        let roll = -3f64.to_radians();
        let reading = Vector3::new(0.0, G * roll.sin(), G * roll.cos());
        let mut w = static_window(reading, 1.2);
        for (k, s) in w.iter_mut().enumerate() {
            let n = ((k * 7919) % 97) as f64 / 97.0 - 0.5;
            s.accel += Vector3::new(0.02 * n, -0.02 * n, 0.01 * n);
            s.gyro = Vector3::new(0.004, -0.003, 0.008) + Vector3::repeat(0.001 * n);
        }
        let att = estimate_attitude(&w, 1.0, G).unwrap();
        assert!((att.gravity_reading() - reading).norm() < 0.01);
    }

    #[test]
    fn empty_or_short_window_is_rejected() {
        assert!(matches!(estimate_attitude(&[], 1.0, G), Err(Error::InsufficientData(_))));
        let short = static_window(Vector3::new(0.0, 0.0, G), 0.5);
        assert!(matches!(estimate_attitude(&short, 1.0, G), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn compensation_examples() {
        let level = AttitudeEstimate::level(G);
        assert!((gravity_compensate(0.05, 0.0, &level).0 - 0.05).abs() < 1e-15);

        // attitude whose at-rest reading is (0.855, -0.3, ·)
        let att = AttitudeEstimate {
            rotation_world_to_body: Matrix3::identity(),
            gravity_body: Vector3::new(-0.855, 0.3, -G),
        };
        let (ax, ay) = gravity_compensate(0.9, -0.25, &att);
        assert!((ax - 0.045).abs() < 1e-12);
        assert!((ay - 0.05).abs() < 1e-12);
    }

    #[test]
    fn compensation_is_linear() {
        let att = AttitudeEstimate::from_rotation(
            *nalgebra::Rotation3::from_euler_angles(0.02, -0.04, 0.3).matrix(),
            G,
        );
        let (a, b) = ((0.3, -0.2), (1.1, 0.7));
        let sum = gravity_compensate(a.0 + b.0, a.1 + b.1, &att);
        let part = gravity_compensate(a.0, a.1, &att);
        assert!((sum.0 - (part.0 + b.0)).abs() < 1e-12);
        assert!((sum.1 - (part.1 + b.1)).abs() < 1e-12);
    }

    #[test]
    fn zv_residual_examples() {
        let sig = [1.0; 6];
        let exact = VehicleState {
            bx: 0.05,
            by: -0.02,
            br: 0.003,
            ..VehicleState::zero(0.0)
        };
        assert_eq!(zv_residual(&exact, 0.05, -0.02, 0.003, &sig), Vector6::zeros());

        let r = zv_residual(&VehicleState::zero(0.0), 0.05, 0.0, 0.0, &sig);
        assert!((r[3] + 0.05).abs() < 1e-15);

        let moving = VehicleState {
            vx: 0.2,
            ..VehicleState::zero(0.0)
        };
        assert!((zv_residual(&moving, 0.0, 0.0, 0.0, &sig)[0] - 0.2).abs() < 1e-15);

        let weighted = zv_residual(&moving, 0.0, 0.0, 0.0, &[0.01; 6]);
        assert!((weighted[0] - 2.0).abs() < 1e-12);
    }
}
