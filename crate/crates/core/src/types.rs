//! Value types shared by every stage of the pipeline.
//!
//! Body frame: origin at the centre of gravity, x forward, y left, z up.
//! Angles are radians, speeds m/s, times seconds in one monotonic clock.

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};


pub type StateVector = Vector6<f64>;

/// Index of each component inside [`StateVector`].
pub mod idx {
    pub const VX: usize = 0;
    pub const VY: usize = 1;
    pub const R: usize = 2;
    pub const BX: usize = 3;
    pub const BY: usize = 4;
    pub const BR: usize = 5;
}

/// Planar velocity, yaw rate and IMU biases at one timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub t: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub bx: f64,
    pub by: f64,
    pub br: f64,
}

impl VehicleState {
    pub fn zero(t: f64) -> Self {
        Self {
            t,
            ..Default::default()
        }
    }

    pub fn from_vector(t: f64, v: &StateVector) -> Self {
        Self {
            t,
            vx: v[0],
            vy: v[1],
            r: v[2],
            bx: v[3],
            by: v[4],
            br: v[5],
        }
    }

    pub fn to_vector(&self) -> StateVector {
        StateVector::new(self.vx, self.vy, self.r, self.bx, self.by, self.br)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// IMU and steering inputs driving one propagation interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InputSample {
    pub t: f64,
    pub ax_meas: f64,
    pub ay_meas: f64,
    pub r_meas: f64,
    /// Road-wheel steering angle.
    pub delta: f64,
}

impl InputSample {
    pub fn is_finite(&self) -> bool {
        [self.t, self.ax_meas, self.ay_meas, self.r_meas, self.delta]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Magic Formula macro-parameters of one axle. `d` is a normalized force
/// (lateral force per unit vertical load).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacejkaAxleParams {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "Sh")]
    pub sh: f64,
    #[serde(rename = "Sv")]
    pub sv: f64,
}

impl PacejkaAxleParams {
    pub const fn new(b: f64, c: f64, d: f64, e: f64, sh: f64, sv: f64) -> Self {
        Self { b, c, d, e, sh, sv }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.b, self.c, self.d, self.e, self.sh, self.sv]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    /// True when every field lies inside `[lo, hi]` and B, C, D are positive.
    pub fn within(&self, lo: &[f64; 6], hi: &[f64; 6]) -> bool {
        let a = self.to_array();
        a.iter()
            .zip(lo.iter().zip(hi))
            .all(|(v, (l, h))| v.is_finite() && *v >= *l && *v <= *h)
            && self.b > 0.0
            && self.c > 0.0
            && self.d > 0.0
    }

    pub fn clamped(&self, lo: &[f64; 6], hi: &[f64; 6]) -> Self {
        let mut a = self.to_array();
        for i in 0..6 {
            a[i] = a[i].clamp(lo[i], hi[i]);
        }
        Self::from_array(a)
    }
}

/// Front and rear axle tire parameters, estimated jointly with the states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireParamSet {
    pub front: PacejkaAxleParams,
    pub rear: PacejkaAxleParams,
}

impl TireParamSet {
    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[..6].copy_from_slice(&self.front.to_array());
        out[6..].copy_from_slice(&self.rear.to_array());
        out
    }

    pub fn from_array(a: [f64; 12]) -> Self {
        let mut f = [0.0; 6];
        let mut r = [0.0; 6];
        f.copy_from_slice(&a[..6]);
        r.copy_from_slice(&a[6..]);
        Self {
            front: PacejkaAxleParams::from_array(f),
            rear: PacejkaAxleParams::from_array(r),
        }
    }

    pub fn within(&self, lo: &[f64; 6], hi: &[f64; 6]) -> bool {
        self.front.within(lo, hi) && self.rear.within(lo, hi)
    }

    pub fn clamped(&self, lo: &[f64; 6], hi: &[f64; 6]) -> Self {
        Self {
            front: self.front.clamped(lo, hi),
            rear: self.rear.clamped(lo, hi),
        }
    }
}

/// One radar detection in the sensor's polar frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarPoint {
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
    /// Apparent (possibly aliased) radial velocity.
    pub doppler: f64,
    /// dB.
    pub snr: f64,
}

impl RadarPoint {
    pub fn to_array(&self) -> [f64; 5] {
        [self.range, self.azimuth, self.elevation, self.doppler, self.snr]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            range: a[0],
            azimuth: a[1],
            elevation: a[2],
            doppler: a[3],
            snr: a[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarScan {
    pub radar_id: usize,
    pub t_capture: f64,
    pub t_receive: f64,
    pub points: Vec<RadarPoint>,
}

impl RadarScan {
    pub fn latency(&self) -> f64 {
        self.t_receive - self.t_capture
    }
}

/// Mounting of one radar and its unambiguous Doppler limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarExtrinsics {
    /// Body-from-radar rotation, row major.
    pub rotation: [[f64; 3]; 3],
    /// Radar origin in the body frame.
    pub translation: [f64; 3],
    /// Nyquist velocity V_N.
    pub nyquist: f64,
    /// Trigger slot relative to the common radar period (simulation only).
    #[serde(default)]
    pub trigger_offset: f64,
}

impl RadarExtrinsics {
    /// Radar mounted at `translation`, rotated by `yaw` about body z.
    pub fn yawed(yaw: f64, translation: [f64; 3], nyquist: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation,
            nyquist,
            trigger_offset: 0.0,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn set_rotation(&mut self, m: &Matrix3<f64>) {
        for i in 0..3 {
            for j in 0..3 {
                self.rotation[i][j] = m[(i, j)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_vector_layout() {
        let s = VehicleState {
            t: 1.0,
            vx: 1.0,
            vy: 2.0,
            r: 3.0,
            bx: 4.0,
            by: 5.0,
            br: 6.0,
        };
        let v = s.to_vector();
        assert_eq!(v[idx::VY], 2.0);
        assert_eq!(v[idx::BR], 6.0);
        assert_eq!(VehicleState::from_vector(1.0, &v), s);
    }

    #[test]
    fn yawed_radar_is_orthonormal() {
        let e = RadarExtrinsics::yawed(0.7, [1.0, 0.0, 0.0], 26.5);
        let r = e.rotation_matrix();
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn params_clamp_into_box() {
        let lo = [1.0, 0.5, 0.5, -5.0, -0.1, -0.5];
        let hi = [40.0, 4.0, 4.0, 1.0, 0.1, 0.5];
        let p = PacejkaAxleParams::new(80.0, 0.1, 2.0, 3.0, 0.0, -1.0);
        assert!(!p.within(&lo, &hi));
        let c = p.clamped(&lo, &hi);
        assert!(c.within(&lo, &hi));
        assert_eq!(c.to_array(), [40.0, 0.5, 2.0, 1.0, 0.0, -0.5]);
    }
}
