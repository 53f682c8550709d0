//! Event-driven estimator: grids IMU time into window states, binds radar
//! scans to their capture-time state, runs standstill detection, and solves
//! whenever a scan contributes at least one Doppler factor.

use std::collections::VecDeque;

use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector6};

use super::output::{estimate_output, OutputRow};
use super::problem::{params_to_vector, vector_to_params, BoundDoppler, ForceFactor, Interval, Problem, ZuptFactor};
use super::solver::{solve, SolveReport};
use super::window::SlidingWindow;
use crate::config::{GravitySource, VehicleConfig};
use crate::error::{Error, Result};
use crate::log::{ImuSample, SensorEvent};
use crate::motion::ProcessNoise;
use crate::radar::{radar_ego_speed, scan_to_factors, Insertion};
use crate::tire::{force_block, force_gate};
use crate::types::{InputSample, RadarScan, StateVector, TireParamSet};
use crate::zupt::{
    estimate_attitude, madgwick_step, tilt_from_accel, update_standstill, ImuSample3, StandstillStatus, MADGWICK_BETA,
};

/// IMU samples at `t_k - EPS` still belong to the interval starting at `t_k`.
const EPS: f64 = 5.0e-7;

pub fn round_micros(t: f64) -> f64 {
    (t * 1.0e6).round() / 1.0e6
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorStats {
    pub imu_samples: usize,
    pub radar_scans: usize,
    pub stale_imu: usize,
    pub stale_scans: usize,
    pub late_scans: usize,
    pub empty_scans: usize,
    pub inserted_states: usize,
    pub accepted_points: usize,
    pub rejected_snr: usize,
    pub rejected_innovation: usize,
    pub rejected_alias: usize,
    pub watchdog_solves: usize,
    pub standstill_seen: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct RunningMean {
    n: usize,
    sum: [f64; 3],
}

impl RunningMean {
    fn add(&mut self, v: [f64; 3]) {
        self.n += 1;
        for (s, x) in self.sum.iter_mut().zip(v) {
            *s += x;
        }
    }

    fn mean(&self) -> [f64; 3] {
        let n = self.n.max(1) as f64;
        self.sum.map(|s| s / n)
    }
}

pub struct Estimator {
    cfg: VehicleConfig,
    window: SlidingWindow,
    params: TireParamSet,
    noise: ProcessNoise,
    imu: VecDeque<ImuSample>,
    steering: VecDeque<(f64, f64)>,
    grid_t0: Option<f64>,
    grid_k: u64,
    standstill: StandstillStatus,
    standstill_mean: RunningMean,
    gravity_reading: Vector3<f64>,
    attitude: Option<Quaternion<f64>>,
    last_imu_t: Option<f64>,
    last_solve_t: f64,
    solved: bool,
    radar_speed: Option<f64>,
    pub stats: EstimatorStats,
    pub reports: Vec<SolveReport>,
}

impl Estimator {
    pub fn new(cfg: VehicleConfig) -> Result<Self> {
        let cfg = crate::config::validate_config(cfg)?;
        Ok(Self::with_params(cfg.tire_init, cfg))
    }

    /// Starts from explicit tire parameters instead of `cfg.tire_init`.
    pub fn with_params(params: TireParamSet, cfg: VehicleConfig) -> Self {
        let params = params.clamped(&cfg.bounds.P_min, &cfg.bounds.P_max);
        Self {
            noise: ProcessNoise {
                variances: cfg.covariances.Sigma_w,
                nominal_dt: cfg.thresholds.dt,
            },
            window: SlidingWindow::new(params),
            params,
            imu: VecDeque::new(),
            steering: VecDeque::new(),
            grid_t0: None,
            grid_k: 0,
            standstill: StandstillStatus::default(),
            standstill_mean: RunningMean::default(),
            gravity_reading: Vector3::new(0.0, 0.0, cfg.g),
            attitude: None,
            last_imu_t: None,
            last_solve_t: f64::NEG_INFINITY,
            solved: false,
            radar_speed: None,
            stats: EstimatorStats::default(),
            reports: Vec::new(),
            cfg,
        }
    }

    pub fn config(&self) -> &VehicleConfig {
        &self.cfg
    }

    pub fn params(&self) -> &TireParamSet {
        &self.params
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    pub fn standstill(&self) -> StandstillStatus {
        self.standstill
    }

    fn grid_time(&self, k: u64) -> f64 {
        round_micros(self.grid_t0.unwrap_or(0.0) + k as f64 * self.cfg.thresholds.dt)
    }

    /// Feeds one event in arrival order; returns rows that became final.
    pub fn process(&mut self, event: &SensorEvent) -> Result<Vec<OutputRow>> {
        match event {
            SensorEvent::Imu(s) => self.on_imu(s),
            SensorEvent::Steering { t, delta } => {
                if self.steering.back().is_some_and(|(last, _)| *t < *last) {
                    return Ok(Vec::new());
                }
                self.steering.push_back((*t, delta / self.cfg.steering_ratio));
                self.trim_buffers();
                Ok(Vec::new())
            }
            SensorEvent::Radar(scan) => self.on_radar(scan),
            SensorEvent::ReferenceVelocity { .. } => Ok(Vec::new()),
        }
    }

    /// Emits every grid state not yet reported, with its current estimate.
    pub fn finish(&mut self) -> Vec<OutputRow> {
        self.emit()
    }

    fn trim_buffers(&mut self) {
        let Some(now) = self.last_imu_t else { return };
        let th = &self.cfg.thresholds;
        let keep = th.T_stop.max(th.dTw + th.watchdog) + 0.5;
        let oldest_needed = self.window.states.first().map_or(now, |s| s.t).min(now - keep);
        while self.imu.len() > 1 && self.imu[1].t < oldest_needed {
            self.imu.pop_front();
        }
        while self.steering.len() > 1 && self.steering[1].0 < oldest_needed {
            self.steering.pop_front();
        }
    }

    fn speed_estimate(&self) -> f64 {
        if self.solved {
            self.window.newest().map_or(f64::INFINITY, |s| s.x[0].hypot(s.x[1]))
        } else {
            self.radar_speed.unwrap_or(f64::INFINITY)
        }
    }

    fn on_imu(&mut self, s: &ImuSample) -> Result<Vec<OutputRow>> {
        if self.last_imu_t.is_some_and(|last| s.t <= last) {
            self.stats.stale_imu += 1;
            return Ok(Vec::new());
        }
        let prev_t = self.last_imu_t;
        self.last_imu_t = Some(s.t);
        self.stats.imu_samples += 1;
        self.imu.push_back(s.clone());
        self.trim_buffers();

        let accel = Vector3::new(s.ax, s.ay, s.az.unwrap_or(self.cfg.g));
        let gyro = Vector3::new(s.wx.unwrap_or(0.0), s.wy.unwrap_or(0.0), s.r);
        let q = match (self.attitude, prev_t) {
            (Some(mut q), Some(t0)) => {
                madgwick_step(&mut q, &accel, &gyro, MADGWICK_BETA, s.t - t0);
                q
            }
            _ => tilt_from_accel(&accel),
        };
        self.attitude = Some(q);
        let reading = UnitQuaternion::from_quaternion(q).inverse_transform_vector(&Vector3::new(0.0, 0.0, self.cfg.g));
        let accel_mag = (accel - reading).norm();

        let prev = self.standstill;
        self.standstill = update_standstill(prev, self.speed_estimate(), accel_mag, s.t, &self.cfg.thresholds);
        match self.standstill.since {
            Some(since) => {
                if prev.since != Some(since) {
                    self.standstill_mean = RunningMean::default();
                }
                self.standstill_mean.add([s.ax, s.ay, s.r]);
            }
            None => self.standstill_mean = RunningMean::default(),
        }
        if self.standstill.stationary && !prev.stationary {
            self.stats.standstill_seen = true;
            self.gravity_reading = self.standstill_gravity();
        }

        let mut rows = Vec::new();
        match self.grid_t0 {
            None => {
                let t0 = round_micros(s.t);
                self.grid_t0 = Some(t0);
                self.grid_k = 1;
                let mut x = StateVector::zeros();
                x[3] = self.cfg.bias_init[0];
                x[4] = self.cfg.bias_init[1];
                x[5] = self.cfg.bias_init[2];
                self.window.seed(t0, x);
                self.last_solve_t = s.t;
            }
            Some(_) => {
                while s.t >= self.grid_time(self.grid_k) - EPS {
                    let tg = self.grid_time(self.grid_k);
                    self.grid_k += 1;
                    self.add_grid_state(tg)?;
                }
            }
        }
        self.refresh_zupt();

        if self.window.len() >= 2 && s.t - self.last_solve_t >= self.cfg.thresholds.watchdog - EPS {
            self.stats.watchdog_solves += 1;
            rows = self.solve_cycle(s.t)?;
        }
        Ok(rows)
    }

    fn standstill_gravity(&self) -> Vector3<f64> {
        let g = self.cfg.g;
        match self.cfg.gravity_source {
            GravitySource::Plane => Vector3::new(0.0, 0.0, g),
            GravitySource::Attitude => {
                let since = self.standstill.since.unwrap_or(f64::NEG_INFINITY);
                let samples: Vec<ImuSample3> = self
                    .imu
                    .iter()
                    .filter(|s| s.t >= since - EPS)
                    .map(|s| ImuSample3 {
                        t: s.t,
                        accel: Vector3::new(s.ax, s.ay, s.az.unwrap_or(g)),
                        gyro: Vector3::new(s.wx.unwrap_or(0.0), s.wy.unwrap_or(0.0), s.r),
                    })
                    .collect();
                estimate_attitude(&samples, self.cfg.thresholds.T_stop, g)
                    .map(|a| a.gravity_reading())
                    .unwrap_or(Vector3::new(0.0, 0.0, g))
            }
        }
    }

    /// While stationary, every state of the current standstill run carries
    /// the run's mean compensated acceleration and gyro reading.
    fn refresh_zupt(&mut self) {
        if !self.standstill.stationary {
            return;
        }
        let Some(since) = self.standstill.since else { return };
        let m = self.standstill_mean.mean();
        let target = [m[0] - self.gravity_reading.x, m[1] - self.gravity_reading.y, m[2]];
        for st in self.window.states.iter_mut().filter(|st| st.t >= since - EPS) {
            st.zupt = Some(target);
        }
    }

    fn add_grid_state(&mut self, tg: f64) -> Result<()> {
        if let Some(i) = self.window.index_of(tg) {
            self.window.states[i].grid = true;
            return Ok(());
        }
        let newest = self.window.newest().map(|s| s.t).unwrap_or(f64::NEG_INFINITY);
        if tg > newest {
            let u = self.interval_input(newest, tg);
            self.window.push_state(tg, &u)
        } else {
            let est = crate::radar::StateLookup::interpolate(&self.window, tg)
                .ok_or_else(|| Error::InsufficientData("empty window".into()))?;
            let i = self.window.insert_state(tg, est.to_vector())?;
            self.window.states[i].grid = true;
            Ok(())
        }
    }

    fn on_radar(&mut self, scan: &RadarScan) -> Result<Vec<OutputRow>> {
        self.stats.radar_scans += 1;
        if !self.solved {
            if let Some(ext) = self.cfg.radars.get(scan.radar_id) {
                if let Some(v) = radar_ego_speed(scan, ext, self.cfg.thresholds.snr_min) {
                    self.radar_speed = Some(v);
                }
            }
        }
        if self.window.is_empty() {
            self.stats.stale_scans += 1;
            return Ok(Vec::new());
        }
        if scan.latency() > self.cfg.thresholds.latency_max {
            self.stats.late_scans += 1;
            return Ok(Vec::new());
        }
        let sf = match scan_to_factors(scan, &self.window, &self.cfg) {
            Ok(sf) => sf,
            Err(Error::StaleScan { .. }) => {
                self.stats.stale_scans += 1;
                return Ok(Vec::new());
            }
            Err(e) => return Err(e),
        };
        self.stats.rejected_snr += sf.rejected.low_snr;
        self.stats.rejected_innovation += sf.rejected.innovation;
        self.stats.rejected_alias += sf.rejected.alias_domain;
        if sf.factors.is_empty() {
            self.stats.empty_scans += 1;
            return Ok(Vec::new());
        }
        if let Insertion::New { t, initial } = sf.insertion {
            self.window.insert_state(t, initial.to_vector())?;
            self.stats.inserted_states += 1;
            self.refresh_zupt();
        }
        self.stats.accepted_points += sf.factors.len();
        self.window.doppler.extend(sf.factors);
        let now = self.last_imu_t.unwrap_or(scan.t_receive).max(scan.t_receive);
        self.solve_cycle(now)
    }

    /// Mean IMU reading over `[ta - ε, tb - ε)`, held from the last earlier
    /// sample when the interval is empty; steering held from `ta`.
    pub fn interval_input(&self, ta: f64, tb: f64) -> InputSample {
        let lo = self.imu.partition_point(|s| s.t < ta - EPS);
        let hi = self.imu.partition_point(|s| s.t < tb - EPS);
        let (ax, ay, r) = if hi > lo {
            let n = (hi - lo) as f64;
            let (mut ax, mut ay, mut r) = (0.0, 0.0, 0.0);
            for s in self.imu.range(lo..hi) {
                ax += s.ax;
                ay += s.ay;
                r += s.r;
            }
            (ax / n, ay / n, r / n)
        } else if let Some(s) = self.imu.get(hi.saturating_sub(1)).or(self.imu.front()) {
            (s.ax, s.ay, s.r)
        } else {
            (0.0, 0.0, 0.0)
        };
        let k = self.steering.partition_point(|(t, _)| *t <= ta + EPS);
        let delta = self
            .steering
            .get(k.saturating_sub(1))
            .map(|(_, d)| *d)
            .unwrap_or(0.0);
        InputSample {
            t: ta,
            ax_meas: ax,
            ay_meas: ay,
            r_meas: r,
            delta,
        }
    }

    fn state_input(&self, k: usize) -> InputSample {
        let ta = self.window.states[k].t;
        let tb = self
            .window
            .states
            .get(k + 1)
            .map_or(ta + self.cfg.thresholds.dt, |s| s.t);
        self.interval_input(ta, tb)
    }

    pub fn build_problem(&self) -> Problem<'_> {
        let cov = &self.cfg.covariances;
        let scale = if self.window.bootstrap { cov.bootstrap_scale } else { 1.0 };
        let states = &self.window.states;
        let times: Vec<f64> = states.iter().map(|s| s.t).collect();
        let intervals = states
            .windows(2)
            .map(|w| Interval {
                u: self.interval_input(w[0].t, w[1].t),
                dt: w[1].t - w[0].t,
            })
            .collect();
        let zupt = states
            .iter()
            .enumerate()
            .filter_map(|(k, s)| s.zupt.map(|target| ZuptFactor { state: k, target }))
            .collect();
        let doppler = self
            .window
            .doppler
            .iter()
            .filter_map(|f| self.window.index_of(f.state_timestamp).map(|state| BoundDoppler { state, factor: *f }))
            .collect();
        let force = states
            .iter()
            .enumerate()
            .filter(|(_, s)| force_gate(s.x[0], s.x[1], &self.cfg))
            .map(|(k, _)| ForceFactor {
                state: k,
                u: self.state_input(k),
            })
            .filter(|f| force_block(&states[f.state].x, &f.u, &self.params, &self.cfg).is_ok())
            .collect();
        Problem {
            cfg: &self.cfg,
            times,
            prior_x: self.window.prior_state,
            prior_x_w: Vector6::from_fn(|i, _| 1.0 / (cov.Sigma_x0[i] * scale).sqrt()),
            prior_p: params_to_vector(&self.window.prior_params),
            prior_p_w: super::problem::ParamVector::from_fn(|i, _| 1.0 / cov.Sigma_P[i].sqrt()),
            intervals,
            noise: self.noise,
            zupt,
            doppler,
            force,
        }
    }

    fn solve_cycle(&mut self, now: f64) -> Result<Vec<OutputRow>> {
        let mut x: Vec<StateVector> = self.window.states.iter().map(|s| s.x).collect();
        let mut p = params_to_vector(&self.params);
        let report = {
            let problem = self.build_problem();
            solve(&problem, &mut x, &mut p, &self.cfg.bounds, &self.cfg.solver)?
        };
        for (s, v) in self.window.states.iter_mut().zip(&x) {
            s.x = *v;
        }
        self.params = vector_to_params(&p);
        self.solved = true;
        self.last_solve_t = now;
        self.reports.push(report);
        let rows = self.emit();
        self.window.shift(&self.params, self.cfg.thresholds.dTw);
        self.refresh_zupt();
        Ok(rows)
    }

    fn emit(&mut self) -> Vec<OutputRow> {
        let mut rows = Vec::new();
        for k in 0..self.window.states.len() {
            let st = self.window.states[k];
            if st.grid && !st.emitted {
                let u = self.state_input(k);
                rows.push(estimate_output(&st.vehicle_state(), &u, &self.params, &self.cfg));
                self.window.states[k].emitted = true;
            }
        }
        rows
    }
}

/// Result of replaying a whole log.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<OutputRow>,
    pub reports: Vec<SolveReport>,
    pub stats: EstimatorStats,
    pub params: TireParamSet,
    pub warnings: Vec<String>,
}

/// Replays `events` in arrival order through a fresh estimator.
pub fn run_events(events: &[SensorEvent], cfg: &VehicleConfig, params: Option<TireParamSet>) -> Result<RunOutput> {
    let cfg = crate::config::validate_config(cfg.clone())?;
    let mut est = match params {
        Some(p) => Estimator::with_params(p, cfg),
        None => Estimator::new(cfg)?,
    };
    let queue = super::queue::EventQueue::new();
    for e in events {
        queue.push(e.clone());
    }
    let mut rows = Vec::new();
    while let Some(e) = queue.pop() {
        rows.extend(est.process(&e)?);
    }
    rows.extend(est.finish());
    let mut warnings = Vec::new();
    if !est.stats.standstill_seen {
        warnings.push("biases unverified: no standstill detected in the log".to_string());
    }
    Ok(RunOutput {
        rows,
        reports: std::mem::take(&mut est.reports),
        params: est.params,
        stats: est.stats,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RadarPoint;

    fn imu(t: f64, bias: [f64; 3]) -> SensorEvent {
        SensorEvent::Imu(ImuSample::planar(t, bias[0], bias[1], bias[2]))
    }

    fn rest_log(seconds: f64, bias: [f64; 3]) -> Vec<SensorEvent> {
        let n = (seconds * 200.0).round() as usize;
        (0..=n).map(|k| imu(k as f64 * 0.005, bias)).collect()
    }

    fn scan(t_capture: f64, t_receive: f64) -> SensorEvent {
        SensorEvent::Radar(RadarScan {
            radar_id: 0,
            t_capture,
            t_receive,
            points: vec![RadarPoint::from_array([10.0, 0.1, 0.0, 0.0, 30.0]); 5],
        })
    }

    #[test]
    fn rest_log_yields_grid_rows_and_recovers_biases() {
        let bias = [0.15, -0.1, 0.008];
        let out = run_events(&rest_log(3.0, bias), &VehicleConfig::default(), None).unwrap();
        assert_eq!(out.rows.len(), 301);
        for (k, r) in out.rows.iter().enumerate() {
            assert!((r.t - k as f64 * 0.01).abs() < 1e-9);
        }
        assert!(out.stats.standstill_seen && out.warnings.is_empty());
        let last = out.rows.last().unwrap();
        for (est, b) in [last.bx, last.by, last.br].into_iter().zip(bias) {
            assert!((est - b).abs() < 1e-3 * b.abs(), "{est} vs {b}");
        }
        assert!(last.alpha_f.is_none() && last.beta.is_none());
    }

    #[test]
    fn watchdog_solves_without_radar() {
        let out = run_events(&rest_log(1.0, [0.0; 3]), &VehicleConfig::default(), None).unwrap();
        assert_eq!(out.stats.radar_scans, 0);
        // one solve per watchdog period
        assert_eq!(out.stats.watchdog_solves, 10);
        assert_eq!(out.reports.len(), 10);
    }

    #[test]
    fn scans_before_data_or_past_the_latency_limit_are_dropped() {
        let cfg = VehicleConfig::default();
        let mut est = Estimator::new(cfg.clone()).unwrap();
        est.process(&scan(0.0, 0.0)).unwrap();
        assert_eq!(est.stats.stale_scans, 1);
        for e in rest_log(0.5, [0.0; 3]) {
            est.process(&e).unwrap();
        }
        est.process(&scan(0.2, 0.2 + cfg.thresholds.latency_max + 0.01)).unwrap();
        assert_eq!(est.stats.late_scans, 1);
        est.process(&scan(0.45, 0.5)).unwrap();
        assert_eq!(est.stats.accepted_points, 5);
    }

    #[test]
    fn repeated_imu_timestamps_are_ignored() {
        let mut est = Estimator::new(VehicleConfig::default()).unwrap();
        est.process(&imu(0.0, [0.0; 3])).unwrap();
        est.process(&imu(0.0, [0.0; 3])).unwrap();
        assert_eq!(est.stats.imu_samples, 1);
        assert_eq!(est.stats.stale_imu, 1);
    }

    #[test]
    fn moving_log_never_detects_standstill() {
        let events: Vec<SensorEvent> = (0..200)
            .map(|k| SensorEvent::Imu(ImuSample::planar(k as f64 * 0.005, 3.0, 0.0, 0.0)))
            .collect();
        let cfg = VehicleConfig {
            bias_init: [0.0; 3],
            ..VehicleConfig::default()
        };
        let mut est = Estimator::new(cfg).unwrap();
        // a radar speed well above V_min keeps the standstill detector off
        est.radar_speed = Some(20.0);
        for e in &events {
            est.process(e).unwrap();
        }
        assert!(!est.stats.standstill_seen);
    }

    #[test]
    fn costs_never_increase_within_a_solve() {
        let out = run_events(&rest_log(1.0, [0.05, 0.02, 0.001]), &VehicleConfig::default(), None).unwrap();
        assert!(out.reports.iter().all(|r| r.final_cost <= r.initial_cost));
        assert!(out.reports.iter().all(|r| r.iterations <= 3));
    }
}
