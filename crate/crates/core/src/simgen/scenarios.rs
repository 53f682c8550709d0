//! Named maneuvers and the full log generator.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sensors::{gen_imu, gen_radar_scan, gen_steering};
use super::truth::{simulate_truth, AccelShape, ManeuverScript, Segment, SpeedProfile, SteerProfile, TruthState};
use super::NoiseConfig;
use crate::config::{nominal_tires, VehicleConfig};
use crate::error::{Error, Result};
use crate::log::{sort_by_arrival, SensorEvent};
use crate::types::{PacejkaAxleParams, TireParamSet};

pub const PRESETS: &[&str] = &[
    "dlc65",
    "constant_radius",
    "slalom",
    "straight_brake_turn",
    "fitting_lap",
    "standstill",
    "spin",
];

pub const TRUTH_HEADER: &str = "t,vx,vy,r,ax,ay,delta,Fyf,Fyr,alpha_f,alpha_r";

/// Truth integration step (s).
pub const DT_SIM: f64 = 0.001;
/// Truth rows written to the CSV per second.
pub const TRUTH_RATE: f64 = 100.0;

// independent random streams
const STREAM_IMU: u64 = 1;
const STREAM_STEERING: u64 = 2;
const STREAM_PARAMS: u64 = 3;
const STREAM_RADAR: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub script: ManeuverScript,
    pub truth_params: TireParamSet,
    /// Starting parameters for the estimator when they differ from the config.
    pub initial_params: Option<TireParamSet>,
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    /// Arrival-ordered sensor log.
    pub events: Vec<SensorEvent>,
    /// Truth at the CSV rate.
    pub truth: Vec<TruthState>,
    pub initial_params: Option<TireParamSet>,
}

fn seg(name: &'static str, duration: f64, speed: SpeedProfile, steer: SteerProfile) -> Segment {
    Segment {
        name,
        duration,
        speed,
        steer,
    }
}

fn rest(duration: f64) -> Segment {
    seg("standstill", duration, SpeedProfile::Hold, SteerProfile::Hold)
}

/// Accelerate from the current speed to `to` at about `accel` m/s².
fn accelerate(from: f64, to: f64, accel: f64) -> Segment {
    seg(
        "speed change",
        ((to - from).abs() / accel).max(0.1),
        SpeedProfile::Ramp { to },
        SteerProfile::Hold,
    )
}

fn straight(duration: f64) -> Segment {
    seg("straight", duration, SpeedProfile::Hold, SteerProfile::Ramp { to: 0.0 })
}

fn corner(duration: f64, peak: f64) -> Segment {
    seg(
        "corner",
        duration,
        SpeedProfile::Hold,
        SteerProfile::LateralAccel {
            peak,
            shape: AccelShape::Plateau { ramp: 0.8 },
        },
    )
}

/// Double lane change: two opposite lateral offsets of 3.5 m, each one full
/// sine of lateral acceleration, separated by a short straight.
pub fn double_lane_change(speed: f64, peak_ay: f64) -> ManeuverScript {
    let offset = 3.5;
    let period = (std::f64::consts::TAU * offset / peak_ay).sqrt();
    let lane_change = |peak| {
        seg(
            "lane change",
            period,
            SpeedProfile::Hold,
            SteerProfile::LateralAccel {
                peak,
                shape: AccelShape::Sine,
            },
        )
    };
    ManeuverScript {
        initial_speed: 0.0,
        segments: vec![
            rest(2.0),
            accelerate(0.0, speed, 6.0),
            straight(0.5),
            lane_change(peak_ay),
            straight(period * 25.0 / 30.0),
            lane_change(-peak_ay),
            straight(1.0),
        ],
    }
}

fn constant_radius() -> ManeuverScript {
    ManeuverScript {
        initial_speed: 0.0,
        segments: vec![rest(2.0), accelerate(0.0, 25.0, 5.0), straight(0.5), corner(10.0, 10.0), straight(1.0)],
    }
}

fn slalom() -> ManeuverScript {
    ManeuverScript {
        initial_speed: 0.0,
        segments: vec![
            rest(2.0),
            accelerate(0.0, 30.0, 5.0),
            straight(0.5),
            seg(
                "slalom",
                8.0,
                SpeedProfile::Hold,
                SteerProfile::Sine {
                    amplitude: 0.03,
                    period: 2.0,
                },
            ),
            straight(1.0),
        ],
    }
}

fn straight_brake_turn() -> ManeuverScript {
    ManeuverScript {
        initial_speed: 0.0,
        segments: vec![
            rest(2.0),
            accelerate(0.0, 50.0, 6.0),
            straight(1.0),
            accelerate(50.0, 25.0, 10.0),
            corner(4.0, 8.0),
            straight(1.0),
        ],
    }
}

/// About a minute of corners at different speeds, loads and directions.
fn fitting_lap() -> ManeuverScript {
    let mut segments = vec![rest(2.0), accelerate(0.0, 40.0, 6.0), straight(1.0)];
    let corners: [(f64, f64, f64); 8] = [
        (40.0, 4.0, 8.0),
        (40.0, 4.0, -12.0),
        (50.0, 4.0, 16.0),
        (50.0, 4.0, -18.0),
        (35.0, 4.0, 14.0),
        (35.0, 4.0, -10.0),
        (55.0, 4.0, 20.0),
        (55.0, 4.0, -20.0),
    ];
    let mut v = 40.0;
    for (speed, duration, peak) in corners {
        if speed != v {
            segments.push(accelerate(v, speed, 5.0));
            v = speed;
        }
        segments.push(corner(duration, peak));
        segments.push(straight(1.5));
    }
    ManeuverScript {
        initial_speed: 0.0,
        segments,
    }
}

fn standing() -> ManeuverScript {
    ManeuverScript {
        initial_speed: 0.0,
        segments: vec![rest(6.0)],
    }
}

/// Open-loop oversteer: a low-grip rear axle and ramped steering.
fn spin() -> ManeuverScript {
    ManeuverScript {
        initial_speed: 0.0,
        segments: vec![
            rest(2.0),
            accelerate(0.0, 25.0, 5.0),
            straight(0.5),
            seg("turn-in", 1.0, SpeedProfile::Hold, SteerProfile::Ramp { to: 0.035 }),
            seg("hold", 0.8, SpeedProfile::Hold, SteerProfile::Hold),
            seg("counter-steer", 0.6, SpeedProfile::Hold, SteerProfile::Ramp { to: -0.03 }),
            seg("recover", 2.0, SpeedProfile::Ramp { to: 20.0 }, SteerProfile::Ramp { to: 0.0 }),
        ],
    }
}

/// Parameters drawn uniformly within a quarter of the bound range around
/// the truth, then clamped into the bounds.
pub fn randomized_params(truth: &TireParamSet, cfg: &VehicleConfig, rng: &mut impl Rng) -> TireParamSet {
    let (lo, hi) = (&cfg.bounds.P_min, &cfg.bounds.P_max);
    let mut a = truth.to_array();
    for (i, v) in a.iter_mut().enumerate() {
        let j = i % 6;
        *v += rng.gen_range(-0.25..0.25) * (hi[j] - lo[j]);
    }
    TireParamSet::from_array(a).clamped(lo, hi)
}

/// Builds a named preset. Unknown names list the available ones.
pub fn preset(name: &str, seed: u64, cfg: &VehicleConfig) -> Result<Scenario> {
    let noise = NoiseConfig {
        seed,
        ..NoiseConfig::default()
    };
    let mut s = Scenario {
        name: name.to_string(),
        script: standing(),
        truth_params: nominal_tires(),
        initial_params: None,
        noise,
    };
    match name {
        "dlc65" | "double_lane_change" => s.script = double_lane_change(65.0, 15.0),
        "constant_radius" => s.script = constant_radius(),
        "slalom" => s.script = slalom(),
        "straight_brake_turn" => s.script = straight_brake_turn(),
        "fitting_lap" => {
            s.script = fitting_lap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(STREAM_PARAMS);
            s.initial_params = Some(randomized_params(&s.truth_params, cfg, &mut rng));
        }
        "standstill" => s.noise.imu_bias = [0.15, 0.15, 0.008],
        "spin" => {
            s.script = spin();
            s.truth_params = TireParamSet {
                front: PacejkaAxleParams { d: 1.2, ..s.truth_params.front },
                rear: PacejkaAxleParams { d: 1.0, ..s.truth_params.rear },
            };
        }
        _ => {
            return Err(Error::Usage(format!(
                "unknown scenario `{name}`; available: {}",
                PRESETS.join(", ")
            )))
        }
    }
    Ok(s)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Simulates the truth and every sensor, returning the arrival-ordered log.
pub fn run_scenario(scenario: &Scenario, cfg: &VehicleConfig) -> Result<ScenarioOutput> {
    let noise = &scenario.noise;
    noise.validate()?;
    let truth = simulate_truth(&scenario.script, &scenario.truth_params, cfg, DT_SIM)?;
    let seed = noise.seed;

    let mut events = Vec::new();
    let imu = gen_imu(&truth, noise, noise.imu_rate, &mut stream(seed, STREAM_IMU))?;
    events.extend(imu.into_iter().map(SensorEvent::Imu));
    let steering = gen_steering(
        &truth,
        noise,
        noise.steering_rate,
        cfg.steering_ratio,
        &mut stream(seed, STREAM_STEERING),
    )?;
    events.extend(steering.into_iter().map(|(t, delta)| SensorEvent::Steering { t, delta }));

    let step_us = (DT_SIM * 1e6).round() as i64;
    let end = truth.last().map(|s| s.t).unwrap_or(0.0);
    let period_us = (noise.radar_period * 1e6).round() as i64;
    let mut scans = Vec::new();
    for (id, ext) in cfg.radars.iter().enumerate() {
        let mut rng = stream(seed, STREAM_RADAR + id as u64);
        let mut t_us = (ext.trigger_offset * 1e6).round() as i64;
        while t_us >= 0 && (t_us as f64) * 1e-6 <= end + 1e-9 {
            let k = ((t_us + step_us / 2) / step_us) as usize;
            if let Some(s) = truth.get(k) {
                scans.push(gen_radar_scan(s, id, ext, noise, &mut rng));
            }
            t_us += period_us;
        }
    }
    scans.sort_by(|a, b| a.t_capture.total_cmp(&b.t_capture).then(a.radar_id.cmp(&b.radar_id)));
    events.extend(scans.into_iter().map(SensorEvent::Radar));

    let stride = ((1.0 / TRUTH_RATE) / DT_SIM).round() as usize;
    let sampled: Vec<TruthState> = truth.iter().step_by(stride).copied().collect();
    events.extend(sampled.iter().map(|s| SensorEvent::ReferenceVelocity {
        t: s.t,
        vx_ref: s.vx,
        vy_ref: s.vy,
    }));
    sort_by_arrival(&mut events);
    Ok(ScenarioOutput {
        events,
        truth: sampled,
        initial_params: scenario.initial_params,
    })
}

pub fn truth_row(s: &TruthState) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        s.t, s.vx, s.vy, s.r, s.ax, s.ay, s.delta, s.Fyf, s.Fyr, s.alpha_f, s.alpha_r
    )
}

pub fn write_truth_csv<W: Write>(mut w: W, truth: &[TruthState]) -> Result<()> {
    writeln!(w, "{TRUTH_HEADER}")?;
    for s in truth {
        writeln!(w, "{}", truth_row(s))?;
    }
    Ok(())
}
