//! Rigid body in planar curvilinear motion, integrated with forward Euler.
//! IMU biases evolve as random walks.

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::types::{idx, InputSample, StateVector, VehicleState};

/// Process noise for one nominal step; the covariance of a sub-interval
/// scales linearly with its length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoise {
    pub variances: [f64; 6],
    pub nominal_dt: f64,
}

impl ProcessNoise {
    /// Inverse standard deviations for an interval of length `dt`.
    pub fn whitening(&self, dt: f64) -> Vector6<f64> {
        let scale = dt / self.nominal_dt;
        Vector6::from_fn(|i, _| 1.0 / (self.variances[i] * scale).sqrt())
    }
}

fn predict(x: &StateVector, u: &InputSample, dt: f64) -> StateVector {
    let (vx, vy, r) = (x[idx::VX], x[idx::VY], x[idx::R]);
    let (bx, by, br) = (x[idx::BX], x[idx::BY], x[idx::BR]);
    StateVector::new(
        vx + ((u.ax_meas - bx) + r * vy) * dt,
        vy + ((u.ay_meas - by) - r * vx) * dt,
        u.r_meas - br,
        bx,
        by,
        br,
    )
}

/// Jacobian of the one-step prediction with respect to the previous state.
pub fn transition_jacobian(x: &StateVector, dt: f64) -> Matrix6<f64> {
    let (vx, vy, r) = (x[idx::VX], x[idx::VY], x[idx::R]);
    let mut f = Matrix6::identity();
    f[(0, 1)] = r * dt;
    f[(0, 2)] = vy * dt;
    f[(0, 3)] = -dt;
    f[(1, 0)] = -r * dt;
    f[(1, 2)] = -vx * dt;
    f[(1, 4)] = -dt;
    // yaw rate is algebraic in the previous gyro sample and bias
    f[(2, 2)] = 0.0;
    f[(2, 5)] = -1.0;
    f
}

/// Advances `x_prev` by `dt` with the inputs valid over that interval.
pub fn state_transition(x_prev: &VehicleState, u_prev: &InputSample, dt: f64) -> Result<VehicleState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Numeric(format!("non-positive step {dt}")));
    }
    if !x_prev.is_finite() || !u_prev.is_finite() {
        return Err(Error::Numeric("non-finite state or input".into()));
    }
    let next = predict(&x_prev.to_vector(), u_prev, dt);
    Ok(VehicleState::from_vector(x_prev.t + dt, &next))
}

/// Whitened model mismatch `x_next - f(x_prev, u_prev)`.
pub fn process_residual(
    x_next: &VehicleState,
    x_prev: &VehicleState,
    u_prev: &InputSample,
    dt: f64,
    noise: &ProcessNoise,
) -> Result<Vector6<f64>> {
    if !(dt > 0.0) {
        return Err(Error::WindowOrder(format!(
            "interval {dt} s between states at {} and {}",
            x_prev.t, x_next.t
        )));
    }
    let pred = predict(&x_prev.to_vector(), u_prev, dt);
    Ok((x_next.to_vector() - pred).component_mul(&noise.whitening(dt)))
}

/// Residual and Jacobians (w.r.t. previous and next state) on raw vectors.
pub fn process_block(
    x_prev: &StateVector,
    x_next: &StateVector,
    u_prev: &InputSample,
    dt: f64,
    noise: &ProcessNoise,
) -> (Vector6<f64>, Matrix6<f64>, Matrix6<f64>) {
    let w = noise.whitening(dt);
    let res = (x_next - predict(x_prev, u_prev, dt)).component_mul(&w);
    let wm = Matrix6::from_diagonal(&w);
    let j_prev = -wm * transition_jacobian(x_prev, dt);
    (res, j_prev, wm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(ax: f64, ay: f64, r: f64) -> InputSample {
        InputSample {
            t: 0.0,
            ax_meas: ax,
            ay_meas: ay,
            r_meas: r,
            delta: 0.0,
        }
    }

    fn noise() -> ProcessNoise {
        ProcessNoise {
            variances: [0.01; 6],
            nominal_dt: 0.01,
        }
    }

    #[test]
    fn zero_state_is_fixed_point() {
        for dt in [1e-4, 0.01, 0.7] {
            let x = state_transition(&VehicleState::zero(0.0), &input(0.0, 0.0, 0.0), dt).unwrap();
            assert_eq!(x.to_vector(), StateVector::zeros());
            assert_eq!(x.t, dt);
        }
    }

    #[test]
    fn longitudinal_acceleration_step() {
        let x0 = VehicleState {
            vx: 10.0,
            ..VehicleState::zero(0.0)
        };
        let x = state_transition(&x0, &input(2.0, 0.0, 0.0), 0.01).unwrap();
        assert!((x.vx - 10.02).abs() < 1e-12);
        assert_eq!(x.vy, 0.0);
    }

    #[test]
    fn coriolis_coupling_step() {
        let x0 = VehicleState {
            vx: 10.0,
            r: 1.0,
            ..VehicleState::zero(0.0)
        };
        let x = state_transition(&x0, &input(0.0, 0.0, 1.0), 0.01).unwrap();
        assert!((x.vx - 10.0).abs() < 1e-12);
        assert!((x.vy + 0.1).abs() < 1e-12);
        assert_eq!(x.r, 1.0);
    }

    #[test]
    fn yaw_rate_comes_from_previous_gyro_sample() {
        let x0 = VehicleState {
            r: 5.0,
            br: 0.1,
            ..VehicleState::zero(0.0)
        };
        let x = state_transition(&x0, &input(0.0, 0.0, 0.3), 0.01).unwrap();
        assert!((x.r - 0.2).abs() < 1e-15);
        assert_eq!(x.br, 0.1);
    }

    #[test]
    fn non_finite_input_is_numeric_error() {
        let r = state_transition(&VehicleState::zero(0.0), &input(f64::NAN, 0.0, 0.0), 0.01);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn residual_zero_on_model_consistent_pair() {
        let x0 = VehicleState {
            vx: 31.0,
            vy: -0.4,
            r: 0.2,
            bx: 0.1,
            by: -0.05,
            br: 0.003,
            t: 2.0,
        };
        let u = input(1.5, 3.0, 0.21);
        let x1 = state_transition(&x0, &u, 0.01).unwrap();
        let res = process_residual(&x1, &x0, &u, 0.01, &noise()).unwrap();
        assert_eq!(res, Vector6::zeros());
    }

    #[test]
    fn residual_whitening() {
        let x0 = VehicleState::zero(0.0);
        let u = input(0.0, 0.0, 0.0);
        let mut x1 = state_transition(&x0, &u, 0.01).unwrap();
        x1.vx += 0.1;
        let res = process_residual(&x1, &x0, &u, 0.01, &noise()).unwrap();
        assert!((res[0] - 1.0).abs() < 1e-12);
        assert!(res.iter().skip(1).all(|v| *v == 0.0));
    }

    #[test]
    fn zero_interval_is_order_error() {
        let x0 = VehicleState::zero(0.0);
        let r = process_residual(&x0, &x0, &input(0.0, 0.0, 0.0), 0.0, &noise());
        assert!(matches!(r, Err(Error::WindowOrder(_))));
    }

    #[test]
    fn sub_interval_noise_scales_linearly() {
        let w_full = noise().whitening(0.01);
        let w_quarter = noise().whitening(0.0025);
        assert!((w_quarter[0] / w_full[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bias_transparency() {
        let x0 = VehicleState {
            vx: 20.0,
            vy: 1.0,
            r: 0.3,
            ..VehicleState::zero(0.0)
        };
        let base = state_transition(&x0, &input(1.0, -2.0, 0.3), 0.01).unwrap();
        let c = 0.37;
        let shifted = state_transition(
            &VehicleState {
                bx: c,
                by: c,
                br: c,
                ..x0
            },
            &input(1.0 + c, -2.0 + c, 0.3 + c),
            0.01,
        )
        .unwrap();
        assert!((base.vx - shifted.vx).abs() < 1e-12);
        assert!((base.vy - shifted.vy).abs() < 1e-12);
        assert!((base.r - shifted.r).abs() < 1e-12);
    }

    /// Single-step error on a smooth rotating-velocity truth shrinks
    /// quadratically with the step.
    #[test]
    fn euler_local_error_is_second_order() {
        // Truth: constant yaw rate w, zero body acceleration, so the body
        // velocity rotates: vx = V cos(wt), vy = -V sin(wt).
        let (v, w) = (30.0, 0.8);
        let truth = |t: f64| ((v * (w * t).cos()), (-v * (w * t).sin()));
        let err = |dt: f64| {
            let (vx0, vy0) = truth(0.3);
            let x0 = VehicleState {
                t: 0.3,
                vx: vx0,
                vy: vy0,
                r: w,
                ..Default::default()
            };
            let x1 = state_transition(&x0, &input(0.0, 0.0, w), dt).unwrap();
            let (vx1, vy1) = truth(0.3 + dt);
            (x1.vx - vx1).hypot(x1.vy - vy1)
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio >= 3.5, "ratio {ratio}");
    }
}
