//! Reference trajectory: a single-track vehicle whose forward speed follows
//! a prescribed profile while lateral velocity and yaw rate evolve under the
//! Magic Formula axle forces. Integrated with RK4.

use serde::{Deserialize, Serialize};

use crate::config::VehicleConfig;
use crate::error::{Error, Result};
use crate::tire::{axle_force, slip_unchecked};
use crate::types::TireParamSet;

/// Below this forward speed the lateral dynamics are frozen at rest.
pub const LATERAL_FREEZE_SPEED: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
#[allow(non_snake_case)]
pub struct TruthState {
    pub t: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub ax: f64,
    pub ay: f64,
    pub delta: f64,
    pub Fyf: f64,
    pub Fyr: f64,
    pub alpha_f: f64,
    pub alpha_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedProfile {
    Hold,
    /// Linear change to `to` over the segment.
    Ramp { to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccelShape {
    /// One full sine period over the segment: a single lane change.
    Sine,
    /// Linear rise over `ramp` seconds, hold, linear fall at the end.
    Plateau { ramp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SteerProfile {
    /// Keep the angle the previous segment ended with.
    Hold,
    /// Linear change to `to` over the segment.
    Ramp { to: f64 },
    /// `start + amplitude·sin(2π t / period)`.
    Sine { amplitude: f64, period: f64 },
    /// Feed-forward steering for a desired lateral acceleration history,
    /// `δ = a_y (L / vx² + K_us)` with the understeer gradient of the truth
    /// tires at static load.
    LateralAccel { peak: f64, shape: AccelShape },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub name: &'static str,
    pub duration: f64,
    pub speed: SpeedProfile,
    pub steer: SteerProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManeuverScript {
    pub initial_speed: f64,
    pub segments: Vec<Segment>,
}

impl ManeuverScript {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// Start time and entry values of every segment, resolved once.
struct Resolved {
    start: f64,
    speed0: f64,
    delta0: f64,
    seg: Segment,
}

struct Plan {
    parts: Vec<Resolved>,
    k_us: f64,
    wheelbase: f64,
}

impl Plan {
    fn new(script: &ManeuverScript, p: &TireParamSet, cfg: &VehicleConfig) -> Result<Self> {
        if script.segments.is_empty() || !(script.duration() > 0.0) {
            return Err(Error::Config("maneuver has no duration".into()));
        }
        let l = cfg.wheelbase();
        let fzf = cfg.m * cfg.g * cfg.lr / l;
        let fzr = cfg.m * cfg.g * cfg.lf / l;
        let cf = crate::tire::cornering_stiffness(&p.front) * fzf;
        let cr = crate::tire::cornering_stiffness(&p.rear) * fzr;
        let k_us = cfg.m / l * (cfg.lr / cf - cfg.lf / cr);
        let mut plan = Plan {
            parts: Vec::new(),
            k_us,
            wheelbase: l,
        };
        let (mut start, mut v, mut d) = (0.0, script.initial_speed, 0.0);
        for seg in &script.segments {
            if !(seg.duration > 0.0) {
                return Err(Error::Config(format!("segment `{}` has no duration", seg.name)));
            }
            plan.parts.push(Resolved {
                start,
                speed0: v,
                delta0: d,
                seg: *seg,
            });
            let end = seg.duration;
            v = plan.speed_in(plan.parts.last().unwrap(), end).0;
            d = plan.steer_in(plan.parts.last().unwrap(), end, v);
            start += seg.duration;
        }
        Ok(plan)
    }

    fn part(&self, t: f64) -> &Resolved {
        let i = self.parts.partition_point(|p| p.start <= t).saturating_sub(1);
        &self.parts[i]
    }

    /// Speed and its derivative at local time `tau`.
    fn speed_in(&self, p: &Resolved, tau: f64) -> (f64, f64) {
        match p.seg.speed {
            SpeedProfile::Hold => (p.speed0, 0.0),
            SpeedProfile::Ramp { to } => {
                let rate = (to - p.speed0) / p.seg.duration;
                (p.speed0 + rate * tau, rate)
            }
        }
    }

    fn steer_in(&self, p: &Resolved, tau: f64, vx: f64) -> f64 {
        let dur = p.seg.duration;
        match p.seg.steer {
            SteerProfile::Hold => p.delta0,
            SteerProfile::Ramp { to } => p.delta0 + (to - p.delta0) * (tau / dur),
            SteerProfile::Sine { amplitude, period } => {
                p.delta0 + amplitude * (std::f64::consts::TAU * tau / period).sin()
            }
            SteerProfile::LateralAccel { peak, shape } => {
                let ay = match shape {
                    AccelShape::Sine => peak * (std::f64::consts::TAU * tau / dur).sin(),
                    AccelShape::Plateau { ramp } => {
                        let rise = (tau / ramp).min(1.0);
                        let fall = ((dur - tau) / ramp).min(1.0);
                        peak * rise.min(fall).max(0.0)
                    }
                };
                let v = vx.max(LATERAL_FREEZE_SPEED);
                ay * (self.wheelbase / (v * v) + self.k_us)
            }
        }
    }

    /// `(vx, v̇x, δ)` at absolute time `t`.
    fn inputs(&self, t: f64) -> (f64, f64, f64) {
        let p = self.part(t);
        let tau = t - p.start;
        let (v, dv) = self.speed_in(p, tau);
        (v, dv, self.steer_in(p, tau, v))
    }
}

struct Forces {
    fyf: f64,
    fyr: f64,
    af: f64,
    ar: f64,
}

fn forces(vx: f64, vy: f64, r: f64, ax: f64, delta: f64, p: &TireParamSet, cfg: &VehicleConfig) -> Forces {
    let (af, ar) = slip_unchecked(vx, vy, r, delta, cfg.lf, cfg.lr);
    let k = cfg.m / cfg.wheelbase();
    let aero = 0.5 * cfg.rho * vx * vx * cfg.A;
    let fzf = (k * (cfg.g * cfg.lr - ax * cfg.hg) + cfg.Czf * aero).max(0.0);
    let fzr = (k * (cfg.g * cfg.lf + ax * cfg.hg) + cfg.Czr * aero).max(0.0);
    Forces {
        fyf: axle_force(fzf, af, &p.front),
        fyr: axle_force(fzr, ar, &p.rear),
        af,
        ar,
    }
}

/// `(v̇y, ṙ)` and the full truth record at one instant.
fn evaluate(t: f64, vy: f64, r: f64, plan: &Plan, p: &TireParamSet, cfg: &VehicleConfig) -> ((f64, f64), TruthState) {
    let (vx, dvx, delta) = plan.inputs(t);
    if vx < LATERAL_FREEZE_SPEED {
        let s = TruthState {
            t,
            vx,
            ax: dvx,
            delta,
            ..Default::default()
        };
        return ((0.0, 0.0), s);
    }
    let ax = dvx - r * vy;
    let f = forces(vx, vy, r, ax, delta, p, cfg);
    let cd = delta.cos();
    let ay = (f.fyf * cd + f.fyr) / cfg.m;
    let dvy = ay - r * vx;
    let dr = (cfg.lf * f.fyf * cd - cfg.lr * f.fyr) / cfg.Iz;
    let s = TruthState {
        t,
        vx,
        vy,
        r,
        ax,
        ay,
        delta,
        Fyf: f.fyf,
        Fyr: f.fyr,
        alpha_f: f.af,
        alpha_r: f.ar,
    };
    ((dvy, dr), s)
}

/// Integrates the script with step `dt_sim` (rounded to whole microseconds,
/// at most 1 ms). Sample `k` sits at exactly `k·dt_sim`.
pub fn simulate_truth(script: &ManeuverScript, p: &TireParamSet, cfg: &VehicleConfig, dt_sim: f64) -> Result<Vec<TruthState>> {
    let step_us = (dt_sim * 1.0e6).round() as u64;
    if step_us == 0 || step_us > 1000 {
        return Err(Error::Config(format!("dt_sim {dt_sim} s outside (0, 1 ms]")));
    }
    let plan = Plan::new(script, p, cfg)?;
    let total_us = (script.duration() * 1.0e6).round() as u64;
    let n = total_us / step_us;
    let h = step_us as f64 * 1.0e-6;
    let time = |k: u64| (k * step_us) as f64 / 1.0e6;
    let mut out = Vec::with_capacity(n as usize + 1);
    let (mut vy, mut r) = (0.0, 0.0);
    for k in 0..=n {
        let t = time(k);
        let ((d1y, d1r), rec) = evaluate(t, vy, r, &plan, p, cfg);
        if rec.vx >= LATERAL_FREEZE_SPEED && vy.abs() > rec.vx {
            return Err(Error::TruthDivergence { t });
        }
        if rec.vx < LATERAL_FREEZE_SPEED {
            vy = 0.0;
            r = 0.0;
        }
        out.push(TruthState { vy, r, ..rec });
        if k == n {
            break;
        }
        let ((d2y, d2r), _) = evaluate(t + 0.5 * h, vy + 0.5 * h * d1y, r + 0.5 * h * d1r, &plan, p, cfg);
        let ((d3y, d3r), _) = evaluate(t + 0.5 * h, vy + 0.5 * h * d2y, r + 0.5 * h * d2r, &plan, p, cfg);
        let ((d4y, d4r), _) = evaluate(time(k + 1), vy + h * d3y, r + h * d3r, &plan, p, cfg);
        vy += h / 6.0 * (d1y + 2.0 * d2y + 2.0 * d3y + d4y);
        r += h / 6.0 * (d1r + 2.0 * d2r + 2.0 * d3r + d4r);
        if !(vy.is_finite() && r.is_finite()) {
            return Err(Error::TruthDivergence { t: time(k + 1) });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::nominal_tires;

    fn script(segments: Vec<Segment>, v0: f64) -> ManeuverScript {
        ManeuverScript {
            initial_speed: v0,
            segments,
        }
    }

    #[test]
    fn straight_run_has_no_lateral_motion() {
        let cfg = VehicleConfig::default();
        let s = script(
            vec![Segment {
                name: "straight",
                duration: 2.0,
                speed: SpeedProfile::Ramp { to: 40.0 },
                steer: SteerProfile::Hold,
            }],
            10.0,
        );
        let tr = simulate_truth(&s, &nominal_tires(), &cfg, 1e-3).unwrap();
        assert_eq!(tr.len(), 2001);
        assert!(tr.iter().all(|x| x.vy == 0.0 && x.r == 0.0 && x.Fyf == 0.0));
        assert!((tr[1000].vx - 25.0).abs() < 1e-9);
        assert!((tr[1000].ax - 15.0).abs() < 1e-9);
        assert_eq!(tr[1234].t, 1.234);
    }

    /// At steady state the yaw moment vanishes: lf·Fyf·cos δ = lr·Fyr.
    #[test]
    fn constant_radius_reaches_moment_balance() {
        let cfg = VehicleConfig::default();
        let s = script(
            vec![
                Segment {
                    name: "turn-in",
                    duration: 1.0,
                    speed: SpeedProfile::Hold,
                    steer: SteerProfile::Ramp { to: 0.04 },
                },
                Segment {
                    name: "hold",
                    duration: 5.0,
                    speed: SpeedProfile::Hold,
                    steer: SteerProfile::Hold,
                },
            ],
            30.0,
        );
        let tr = simulate_truth(&s, &nominal_tires(), &cfg, 1e-3).unwrap();
        let last = tr.last().unwrap();
        let front = cfg.lf * last.Fyf * last.delta.cos();
        let rear = cfg.lr * last.Fyr;
        assert!(last.ay > 5.0);
        assert!((front - rear).abs() < 0.01 * rear.abs(), "{front} vs {rear}");
        // truth accelerations are consistent with the velocity derivatives
        let k = tr.len() - 2;
        let dvy = (tr[k + 1].vy - tr[k - 1].vy) / 2e-3;
        assert!((tr[k].ay - (dvy + tr[k].r * tr[k].vx)).abs() < 1e-3);
    }

    #[test]
    fn lane_change_reverses_lateral_velocity() {
        let cfg = VehicleConfig::default();
        let s = script(
            vec![Segment {
                name: "lane change",
                duration: 1.2,
                speed: SpeedProfile::Hold,
                steer: SteerProfile::LateralAccel {
                    peak: 12.0,
                    shape: AccelShape::Sine,
                },
            }],
            65.0,
        );
        let tr = simulate_truth(&s, &nominal_tires(), &cfg, 1e-3).unwrap();
        let max = tr.iter().map(|x| x.vy).fold(f64::MIN, f64::max);
        let min = tr.iter().map(|x| x.vy).fold(f64::MAX, f64::min);
        assert!(max > 0.05 && min < -0.05, "{min} {max}");
    }

    #[test]
    fn rejects_coarse_step() {
        let cfg = VehicleConfig::default();
        let s = script(
            vec![Segment {
                name: "x",
                duration: 1.0,
                speed: SpeedProfile::Hold,
                steer: SteerProfile::Hold,
            }],
            0.0,
        );
        assert!(matches!(simulate_truth(&s, &nominal_tires(), &cfg, 0.01), Err(Error::Config(_))));
    }
}
