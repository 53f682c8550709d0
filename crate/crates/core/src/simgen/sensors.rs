//! IMU, steering and radar synthesis from a truth trajectory.

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal};

use super::truth::TruthState;
use super::NoiseConfig;
use crate::error::{Error, Result};
use crate::log::ImuSample;
use crate::radar::expected_doppler;
use crate::types::{RadarExtrinsics, RadarPoint, RadarScan, VehicleState};

/// Folds `v` into `(-nyquist, nyquist]`.
pub fn wrap(v: f64, nyquist: f64) -> f64 {
    let span = 2.0 * nyquist;
    let mut w = v - span * (v / span).round();
    if w <= -nyquist {
        w += span;
    } else if w > nyquist {
        w -= span;
    }
    w
}

fn gauss<R: Rng>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(mean, std).expect("finite std").sample(rng)
    } else {
        mean
    }
}

fn cauchy<R: Rng>(rng: &mut R, median: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        Cauchy::new(median, scale).expect("positive scale").sample(rng)
    } else {
        median
    }
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Every `stride`-th truth sample for an output `rate`.
fn stride(truth: &[TruthState], rate: f64) -> Result<usize> {
    if truth.len() < 2 {
        return Err(Error::InsufficientData("truth trajectory shorter than two samples".into()));
    }
    let dt = truth[1].t - truth[0].t;
    let ratio = 1.0 / (rate * dt);
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-6 {
        return Err(Error::Config(format!("rate {rate} Hz is not a divisor of the truth rate")));
    }
    Ok(n as usize)
}

pub fn gen_imu<R: Rng>(truth: &[TruthState], noise: &NoiseConfig, rate: f64, rng: &mut R) -> Result<Vec<ImuSample>> {
    let k = stride(truth, rate)?;
    let [bx, by, br] = noise.imu_bias;
    Ok(truth
        .iter()
        .step_by(k)
        .map(|s| {
            let ax = s.ax + bx + gauss(rng, 0.0, noise.accel_std);
            let ay = s.ay + by + gauss(rng, 0.0, noise.accel_std);
            let r = s.r + br + gauss(rng, 0.0, noise.gyro_std);
            ImuSample::planar(s.t, ax, ay, r)
        })
        .collect())
}

/// Logged (column) steering angles, `steering_ratio` times the road-wheel angle.
pub fn gen_steering<R: Rng>(
    truth: &[TruthState],
    noise: &NoiseConfig,
    rate: f64,
    steering_ratio: f64,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    let k = stride(truth, rate)?;
    Ok(truth
        .iter()
        .step_by(k)
        .map(|s| (s.t, steering_ratio * (s.delta + gauss(rng, 0.0, noise.steering_std))))
        .collect())
}

/// One scan captured at `truth.t` against a static world.
pub fn gen_radar_scan<R: Rng>(
    truth: &TruthState,
    radar_id: usize,
    ext: &RadarExtrinsics,
    noise: &NoiseConfig,
    rng: &mut R,
) -> RadarScan {
    let x = VehicleState {
        t: truth.t,
        vx: truth.vx,
        vy: truth.vy,
        r: truth.r,
        ..Default::default()
    };
    let n = gauss(rng, noise.mu_n, noise.sigma_n).round().max(0.0) as usize;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let az = cauchy(rng, noise.mu_theta, noise.gamma_theta).clamp(-noise.fov_azimuth, noise.fov_azimuth);
        let el = cauchy(rng, noise.mu_phi, noise.gamma_phi).clamp(-noise.fov_elevation, noise.fov_elevation);
        let mut v = expected_doppler(&x, ext, az, el) + cauchy(rng, noise.mu_vd, noise.gamma_vd);
        if noise.outlier_fraction > 0.0 && rng.gen_bool(noise.outlier_fraction) {
            v += noise.outlier_offset;
        }
        points.push(RadarPoint {
            range: uniform(rng, noise.range_limits),
            azimuth: az + gauss(rng, 0.0, noise.bearing_std),
            elevation: el + gauss(rng, 0.0, noise.bearing_std),
            doppler: wrap(v, ext.nyquist),
            snr: uniform(rng, noise.snr_range),
        });
    }
    let latency = gauss(rng, noise.mu_td, noise.sigma_td).max(0.0);
    RadarScan {
        radar_id,
        t_capture: truth.t,
        t_receive: ((truth.t + latency) * 1.0e6).round() / 1.0e6,
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::dealias;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const VN: f64 = 26.5;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap(10.0, VN), 10.0);
        assert_eq!(wrap(33.0, VN), -20.0);
        assert_eq!(wrap(-30.0, VN), 23.0);
        // one period (53) brings -60 into the band
        assert_eq!(wrap(-60.0, VN), -7.0);
    }

    #[test]
    fn wrap_boundary_is_half_open_below() {
        assert_eq!(wrap(VN, VN), VN);
        assert_eq!(wrap(-VN, VN), VN);
        assert_eq!(wrap(3.0 * VN, VN), VN);
        assert_eq!(wrap(-3.0 * VN, VN), VN);
    }

    proptest! {
        #[test]
        fn wrap_lands_in_band(v in -500.0f64..500.0) {
            let w = wrap(v, VN);
            prop_assert!(w > -VN && w <= VN);
            let periods = (v - w) / (2.0 * VN);
            prop_assert!((periods - periods.round()).abs() < 1e-9);
        }

        #[test]
        fn dealias_inverts_wrap(v in -4.0 * VN..4.0 * VN, d in -0.95 * VN..0.95 * VN) {
            let w = wrap(v, VN);
            prop_assume!(w.abs() <= VN);
            let (rec, _) = dealias(w, v + d, VN).unwrap();
            prop_assert!((rec - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    fn truth_line(n: usize, dt: f64) -> Vec<TruthState> {
        (0..n)
            .map(|k| TruthState {
                t: k as f64 * dt,
                vx: 20.0,
                ax: 1.0,
                ay: -0.5,
                r: 0.1,
                ..Default::default()
            })
            .collect()
    }

    #[test]
    fn noiseless_imu_equals_truth() {
        let truth = truth_line(1001, 0.001);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let imu = gen_imu(&truth, &NoiseConfig::noiseless(), 200.0, &mut rng).unwrap();
        assert_eq!(imu.len(), 201);
        assert!(imu.iter().all(|s| s.ax == 1.0 && s.ay == -0.5 && s.r == 0.1));
        assert_eq!(imu[3].t, truth[15].t);
    }

    #[test]
    fn injected_bias_shows_in_the_mean() {
        let truth = truth_line(100_001, 0.001);
        let noise = NoiseConfig {
            imu_bias: [0.1, 0.0, 0.0],
            ..NoiseConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let imu = gen_imu(&truth, &noise, 200.0, &mut rng).unwrap();
        let n = imu.len() as f64;
        let mean = imu.iter().map(|s| s.ax - 1.0).sum::<f64>() / n;
        assert!((mean - 0.1).abs() < 3.0 * noise.accel_std / n.sqrt());
    }

    #[test]
    fn imu_rate_must_divide_truth_rate() {
        let truth = truth_line(100, 0.001);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(gen_imu(&truth, &NoiseConfig::default(), 300.0, &mut rng).is_err());
    }

    #[test]
    fn seeded_streams_repeat() {
        let truth = truth_line(2001, 0.001);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            gen_imu(&truth, &NoiseConfig::default(), 200.0, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn scan_at_rest_carries_only_noise() {
        let cfg = crate::VehicleConfig::default();
        let truth = TruthState::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scan = gen_radar_scan(&truth, 0, &cfg.radars[0], &NoiseConfig::noiseless(), &mut rng);
        assert_eq!(scan.points.len(), 40);
        assert!(scan.points.iter().all(|p| p.doppler == 0.0));
        assert_eq!(scan.t_receive, scan.t_capture);
    }

    /// Shared projection: a noiseless scan leaves zero Doppler residuals at
    /// the truth state once de-aliased.
    #[test]
    fn noiseless_scan_matches_estimator_projection() {
        let cfg = crate::VehicleConfig::default();
        let truth = TruthState {
            t: 1.0,
            vx: 60.0,
            vy: 1.2,
            r: 0.3,
            ..Default::default()
        };
        let x = VehicleState {
            t: 1.0,
            vx: 60.0,
            vy: 1.2,
            r: 0.3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for ext in &cfg.radars {
            let scan = gen_radar_scan(&truth, 0, ext, &NoiseConfig::noiseless(), &mut rng);
            for p in &scan.points {
                assert!(p.doppler.abs() <= ext.nyquist);
                let v_e = expected_doppler(&x, ext, p.azimuth, p.elevation);
                let (v_r, _) = dealias(p.doppler, v_e, ext.nyquist).unwrap();
                assert!((v_r - v_e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn forward_boresight_at_60_wraps_to_minus_7() {
        let ext = RadarExtrinsics::yawed(0.0, [0.0, 0.0, 0.0], VN);
        let x = VehicleState {
            vx: 60.0,
            ..Default::default()
        };
        let v = expected_doppler(&x, &ext, 0.0, 0.0);
        assert_eq!(v, -60.0);
        assert_eq!(wrap(v, VN), -7.0);
    }
}
