//! Moving-horizon estimation of race-car planar velocity, IMU biases, slip
//! angles, axle lateral forces and Pacejka parameters from an IMU, the
//! steering angle and radar Doppler returns.

// `!(a > b)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod log;
pub mod metrics;
pub mod mhe;
pub mod motion;
pub mod radar;
pub mod simgen;
pub mod tire;
pub mod types;
pub mod zupt;

pub use config::VehicleConfig;
pub use error::{Error, Result};
pub use types::{InputSample, PacejkaAxleParams, RadarExtrinsics, RadarPoint, RadarScan, TireParamSet, VehicleState};
