//! Single-track lateral tire model: slip angles, axle loads with
//! longitudinal load transfer and downforce, the Magic Formula, and the
//! static-split lateral forces inferred from the IMU.

use nalgebra::{Matrix2x3, Matrix2x6, Vector2};

use crate::config::VehicleConfig;
use crate::error::{Error, Result};
use crate::types::{InputSample, PacejkaAxleParams, StateVector, TireParamSet, VehicleState};

/// `cos 80°`: steering angles beyond this are rejected.
pub const STEERING_COS_MIN: f64 = 0.173_648_177_666_930_35;

/// Smallest forward speed at which slip angles are evaluated even when the
/// total-speed gate passes (pure sideways sliding).
pub const VX_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[allow(non_snake_case)]
pub struct AxleLateralState {
    pub alpha_f: f64,
    pub alpha_r: f64,
    pub Fzf: f64,
    pub Fzr: f64,
    pub Fyf: f64,
    pub Fyr: f64,
    pub Fyf_meas: f64,
    pub Fyr_meas: f64,
}

pub(crate) fn slip_unchecked(vx: f64, vy: f64, r: f64, delta: f64, lf: f64, lr: f64) -> (f64, f64) {
    (((vy + r * lf) / vx).atan() - delta, ((vy - r * lr) / vx).atan())
}

pub fn slip_angles(x: &VehicleState, delta: f64, cfg: &VehicleConfig) -> Result<(f64, f64)> {
    let gate = cfg.thresholds.V_Fy_min;
    if !(x.vx.abs() >= gate) {
        return Err(Error::Gate { vx: x.vx, gate });
    }
    Ok(slip_unchecked(x.vx, x.vy, x.r, delta, cfg.lf, cfg.lr))
}

fn loads_unchecked(vx: f64, ax: f64, cfg: &VehicleConfig) -> (f64, f64) {
    let k = cfg.m / cfg.wheelbase();
    let aero = 0.5 * cfg.rho * vx * vx * cfg.A;
    (
        k * (cfg.g * cfg.lr - ax * cfg.hg) + cfg.Czf * aero,
        k * (cfg.g * cfg.lf + ax * cfg.hg) + cfg.Czr * aero,
    )
}

/// Axle loads from the measured longitudinal acceleration.
pub fn vertical_loads(x: &VehicleState, u: &InputSample, cfg: &VehicleConfig) -> Result<(f64, f64)> {
    let (fzf, fzr) = loads_unchecked(x.vx, u.ax_meas, cfg);
    if !(fzf > 0.0 && fzr > 0.0) {
        return Err(Error::LoadDomain { fzf, fzr });
    }
    Ok((fzf, fzr))
}

struct MfTerms {
    value: f64,
    d_x: f64,
    d_b: f64,
    d_c: f64,
    d_d: f64,
    d_e: f64,
}

fn mf_terms(slip: f64, p: &PacejkaAxleParams) -> MfTerms {
    let xs = slip + p.sh;
    let u = p.b * xs;
    let at_u = u.atan();
    let phi = u - p.e * (u - at_u);
    let at_phi = phi.atan();
    let theta = p.c * at_phi;
    let (s, c) = theta.sin_cos();
    let dphi_du = (1.0 - p.e) + p.e / (1.0 + u * u);
    let k = p.d * c * p.c / (1.0 + phi * phi);
    MfTerms {
        value: p.d * s + p.sv,
        d_x: k * dphi_du * p.b,
        d_b: k * dphi_du * xs,
        d_c: p.d * c * at_phi,
        d_d: s,
        d_e: -k * (u - at_u),
    }
}

/// Normalized lateral force `Y(x) = y(x + Sh) + Sv`.
pub fn magic_formula(slip: f64, p: &PacejkaAxleParams) -> f64 {
    mf_terms(slip, p).value
}

/// Axle lateral force `Fz·Y(-α)`. With `α = atan(·) - δ` a tire whose
/// heading leads its velocity has negative slip and must push towards the
/// heading, so the formula is evaluated at the force-producing slip `-α`.
pub fn axle_force(fz: f64, alpha: f64, p: &PacejkaAxleParams) -> f64 {
    fz * magic_formula(-alpha, p)
}

/// `dY/dx` at `slip`.
pub fn magic_formula_slope(slip: f64, p: &PacejkaAxleParams) -> f64 {
    mf_terms(slip, p).d_x
}

/// Gradient of `Y` with respect to `[B, C, D, E, Sh, Sv]`.
pub fn magic_formula_param_gradient(slip: f64, p: &PacejkaAxleParams) -> [f64; 6] {
    let t = mf_terms(slip, p);
    [t.d_b, t.d_c, t.d_d, t.d_e, t.d_x, 1.0]
}

pub fn model_lateral_forces(x: &VehicleState, u: &InputSample, p: &TireParamSet, cfg: &VehicleConfig) -> Result<(f64, f64)> {
    let (af, ar) = slip_angles(x, u.delta, cfg)?;
    let (fzf, fzr) = vertical_loads(x, u, cfg)?;
    Ok((axle_force(fzf, af, &p.front), axle_force(fzr, ar, &p.rear)))
}

/// Axle lateral forces from the measured lateral acceleration, split by the
/// static weight distribution.
pub fn measured_lateral_forces(ay_meas: f64, delta: f64, cfg: &VehicleConfig) -> Result<(f64, f64)> {
    let cd = delta.cos();
    if !(cd > STEERING_COS_MIN) {
        return Err(Error::SteeringDomain(delta));
    }
    let l = cfg.wheelbase();
    let may = cfg.m * ay_meas;
    Ok((cfg.lr / l * may / cd, cfg.lf / l * may))
}

/// Whether the lateral-force residual enters the problem at this state.
pub fn force_gate(vx: f64, vy: f64, cfg: &VehicleConfig) -> bool {
    vx.hypot(vy) > cfg.thresholds.V_Fy_min && vx > VX_FLOOR
}

/// Whitened `(F̂yf - Fyf, F̂yr - Fyr)`, or `None` below the speed gate.
pub fn lateral_force_residual(
    x: &VehicleState,
    u: &InputSample,
    p: &TireParamSet,
    cfg: &VehicleConfig,
) -> Result<Option<Vector2<f64>>> {
    if !force_gate(x.vx, x.vy, cfg) {
        return Ok(None);
    }
    let (res, _, _) = force_block(&x.to_vector(), u, p, cfg)?;
    Ok(Some(res))
}

pub fn axle_state(x: &VehicleState, u: &InputSample, p: &TireParamSet, cfg: &VehicleConfig) -> Result<AxleLateralState> {
    let (alpha_f, alpha_r) = slip_angles(x, u.delta, cfg)?;
    let (fzf, fzr) = vertical_loads(x, u, cfg)?;
    let (mf, mr) = measured_lateral_forces(u.ay_meas, u.delta, cfg)?;
    Ok(AxleLateralState {
        alpha_f,
        alpha_r,
        Fzf: fzf,
        Fzr: fzr,
        Fyf: axle_force(fzf, alpha_f, &p.front),
        Fyr: axle_force(fzr, alpha_r, &p.rear),
        Fyf_meas: mf,
        Fyr_meas: mr,
    })
}

/// Whitened residual with Jacobians w.r.t. `(vx, vy, r)` and each axle's
/// parameters. Only the gate is skipped; domain errors still surface.
#[allow(clippy::type_complexity)]
pub fn force_block(
    x: &StateVector,
    u: &InputSample,
    p: &TireParamSet,
    cfg: &VehicleConfig,
) -> Result<(Vector2<f64>, Matrix2x3<f64>, [Matrix2x6<f64>; 2])> {
    let (vx, vy, r) = (x[0], x[1], x[2]);
    let (lf, lr) = (cfg.lf, cfg.lr);
    let (af, ar) = slip_unchecked(vx, vy, r, u.delta, lf, lr);
    let (fzf, fzr) = loads_unchecked(vx, u.ax_meas, cfg);
    if !(fzf > 0.0 && fzr > 0.0) {
        return Err(Error::LoadDomain { fzf, fzr });
    }
    let (mf, mr) = measured_lateral_forces(u.ay_meas, u.delta, cfg)?;
    let tf = mf_terms(-af, &p.front);
    let tr = mf_terms(-ar, &p.rear);
    let w = [
        1.0 / cfg.covariances.Sigma_Fy[0].sqrt(),
        1.0 / cfg.covariances.Sigma_Fy[1].sqrt(),
    ];
    let res = Vector2::new((mf - fzf * tf.value) * w[0], (mr - fzr * tr.value) * w[1]);

    let nf = vy + r * lf;
    let nr = vy - r * lr;
    let qf = 1.0 / (vx * vx + nf * nf);
    let qr = 1.0 / (vx * vx + nr * nr);
    let daf = [-nf * qf, vx * qf, lf * vx * qf];
    let dar = [-nr * qr, vx * qr, -lr * vx * qr];
    let aero = cfg.rho * vx * cfg.A;
    let dfz = [cfg.Czf * aero, cfg.Czr * aero];

    let mut jx = Matrix2x3::zeros();
    for j in 0..3 {
        jx[(0, j)] = w[0] * fzf * tf.d_x * daf[j];
        jx[(1, j)] = w[1] * fzr * tr.d_x * dar[j];
    }
    jx[(0, 0)] -= w[0] * dfz[0] * tf.value;
    jx[(1, 0)] -= w[1] * dfz[1] * tr.value;

    let gf = [tf.d_b, tf.d_c, tf.d_d, tf.d_e, tf.d_x, 1.0];
    let gr = [tr.d_b, tr.d_c, tr.d_d, tr.d_e, tr.d_x, 1.0];
    let mut jpf = Matrix2x6::zeros();
    let mut jpr = Matrix2x6::zeros();
    for j in 0..6 {
        jpf[(0, j)] = -w[0] * fzf * gf[j];
        jpr[(1, j)] = -w[1] * fzr * gr[j];
    }
    Ok((res, jx, [jpf, jpr]))
}

pub fn cornering_stiffness(p: &PacejkaAxleParams) -> f64 {
    p.b * p.c * p.d
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(vx: f64, vy: f64, r: f64) -> VehicleState {
        VehicleState {
            vx,
            vy,
            r,
            ..VehicleState::zero(0.0)
        }
    }

    fn input(ax: f64, ay: f64, delta: f64) -> InputSample {
        InputSample {
            t: 0.0,
            ax_meas: ax,
            ay_meas: ay,
            r_meas: 0.0,
            delta,
        }
    }

    #[test]
    fn slip_angle_examples() {
        let cfg = VehicleConfig::default();
        assert_eq!(slip_angles(&state(50.0, 0.0, 0.0), 0.0, &cfg).unwrap(), (0.0, 0.0));
        let (af, _) = slip_angles(&state(10.0, 1.0, 0.0), 0.0, &cfg).unwrap();
        assert!((af - 0.099_668_652_491_162_03).abs() < 1e-15);
        let (_, ar) = slip_angles(&state(10.0, 1.0, 0.5), 0.0, &cfg).unwrap();
        assert!((ar - 0.024_994_793_618_920_16).abs() < 1e-15);
        assert!(matches!(slip_angles(&state(3.0, 0.0, 0.0), 0.0, &cfg), Err(Error::Gate { .. })));
    }

    #[test]
    fn vertical_load_examples() {
        let cfg = VehicleConfig::default();
        let (fzf, fzr) = vertical_loads(&state(0.0, 0.0, 0.0), &input(0.0, 0.0, 0.0), &cfg).unwrap();
        assert!((fzf - 3678.75).abs() < 1e-9);
        assert!((fzf + fzr - 800.0 * 9.81).abs() < 1e-9);
        let (fzf, fzr) = vertical_loads(&state(0.0, 0.0, 0.0), &input(-10.0, 0.0, 0.0), &cfg).unwrap();
        assert!((fzf - 4428.75).abs() < 1e-9);
        assert!((fzf + fzr - 800.0 * 9.81).abs() < 1e-9);
        let r = vertical_loads(&state(0.0, 0.0, 0.0), &input(60.0, 0.0, 0.0), &cfg);
        assert!(matches!(r, Err(Error::LoadDomain { .. })));
    }

    #[test]
    fn magic_formula_examples() {
        let p = PacejkaAxleParams::new(10.0, 1.9, 1.0, 0.97, 0.0, 0.0);
        assert_eq!(magic_formula(0.0, &p), 0.0);
        // high-precision evaluation of the formula
        assert!((magic_formula(0.08, &p) - 0.905_553_986_208_068_1).abs() < 1e-14);
        let shifted = PacejkaAxleParams::new(10.0, 1.9, 1.0, 0.97, 0.03, -0.02);
        assert!((magic_formula(-0.03, &shifted) + 0.02).abs() < 1e-15);
    }

    #[test]
    fn measured_force_examples() {
        let cfg = VehicleConfig::default();
        assert_eq!(measured_lateral_forces(0.0, 0.1, &cfg).unwrap(), (0.0, 0.0));
        let (f, r) = measured_lateral_forces(10.0, 0.0, &cfg).unwrap();
        assert!((f - 3750.0).abs() < 1e-9);
        assert!((r - 4250.0).abs() < 1e-9);
        let (f_small, _) = measured_lateral_forces(10.0, 1e-9, &cfg).unwrap();
        assert!((f_small - f).abs() < 1e-9);
        assert!(matches!(measured_lateral_forces(1.0, 1.5, &cfg), Err(Error::SteeringDomain(_))));
    }

    #[test]
    fn model_forces_zero_at_zero_slip_and_scale_with_load() {
        let cfg = VehicleConfig::default();
        let p = cfg.tire_init;
        let (f, r) = model_lateral_forces(&state(30.0, 0.0, 0.0), &input(0.0, 0.0, 0.0), &p, &cfg).unwrap();
        assert_eq!((f, r), (0.0, 0.0));
        let x = state(30.0, 0.6, 0.1);
        let (fzf, _) = vertical_loads(&x, &input(0.0, 0.0, 0.0), &cfg).unwrap();
        let mut heavy = cfg.clone();
        heavy.m *= 2.0;
        heavy.Czf *= 2.0;
        heavy.Czr *= 2.0;
        let (fzf2, _) = vertical_loads(&x, &input(0.0, 0.0, 0.0), &heavy).unwrap();
        assert!((fzf2 / fzf - 2.0).abs() < 1e-12);
        let (f1, _) = model_lateral_forces(&x, &input(0.0, 0.0, 0.05), &p, &cfg).unwrap();
        let (f2, _) = model_lateral_forces(&x, &input(0.0, 0.0, 0.05), &p, &heavy).unwrap();
        assert!((f2 / f1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn residual_gate_and_consistency() {
        let cfg = VehicleConfig::default();
        let p = cfg.tire_init;
        assert_eq!(
            lateral_force_residual(&state(3.0, 0.0, 0.0), &input(0.0, 1.0, 0.0), &p, &cfg).unwrap(),
            None
        );
        // inputs chosen so the static split reproduces the model forces
        let x = state(40.0, -0.5, 0.3);
        let delta = 0.03;
        let u0 = input(0.5, 0.0, delta);
        let (fyf, fyr) = model_lateral_forces(&x, &u0, &p, &cfg).unwrap();
        let l = cfg.wheelbase();
        let ay_f = fyf * delta.cos() * l / (cfg.lr * cfg.m);
        let ay_r = fyr * l / (cfg.lf * cfg.m);
        let mut rear_cfg = cfg.clone();
        rear_cfg.covariances.Sigma_Fy = [1.0, 1.0];
        let rf = lateral_force_residual(&x, &input(0.5, ay_f, delta), &p, &rear_cfg).unwrap().unwrap();
        let rr = lateral_force_residual(&x, &input(0.5, ay_r, delta), &p, &rear_cfg).unwrap().unwrap();
        assert!(rf[0].abs() < 1e-9);
        assert!(rr[1].abs() < 1e-9);
    }

    #[test]
    fn inflated_peak_reduces_front_residual() {
        let cfg = VehicleConfig::default();
        let p = cfg.tire_init;
        // negative slip: positive Y
        let x = state(40.0, -2.0, 0.0);
        let u = input(0.0, 8.0, 0.0);
        let base = lateral_force_residual(&x, &u, &p, &cfg).unwrap().unwrap();
        let mut q = p;
        q.front.d *= 1.1;
        let inflated = lateral_force_residual(&x, &u, &q, &cfg).unwrap().unwrap();
        assert!(inflated[0] < base[0]);
        // residual against the exact front force is then strictly negative
        let (fyf, _) = model_lateral_forces(&x, &u, &p, &cfg).unwrap();
        let ay = fyf * cfg.wheelbase() / (cfg.lr * cfg.m);
        let r = lateral_force_residual(&x, &input(0.0, ay, 0.0), &q, &cfg).unwrap().unwrap();
        assert!(r[0] < 0.0);
    }

    #[test]
    fn cornering_stiffness_examples() {
        let p = PacejkaAxleParams::new(10.0, 1.9, 1.0, 0.97, 0.0, 0.0);
        assert!((cornering_stiffness(&p) - 19.0).abs() < 1e-12);
        assert_eq!(cornering_stiffness(&PacejkaAxleParams { d: 0.0, ..p }), 0.0);
        assert!((cornering_stiffness(&PacejkaAxleParams { b: 20.0, ..p }) - 38.0).abs() < 1e-12);
    }

    fn params() -> impl Strategy<Value = PacejkaAxleParams> {
        (1.0..40.0f64, 0.5..4.0f64, 0.5..4.0f64, -5.0..1.0f64, -0.1..0.1f64, -0.5..0.5f64)
            .prop_map(|(b, c, d, e, sh, sv)| PacejkaAxleParams::new(b, c, d, e, sh, sv))
    }

    proptest! {
        #[test]
        fn odd_symmetry(p in params(), x in -1.5..1.5f64) {
            let p = PacejkaAxleParams { sh: 0.0, sv: 0.0, ..p };
            prop_assert!((magic_formula(-x, &p) + magic_formula(x, &p)).abs() < 1e-12);
        }

        #[test]
        fn slope_at_origin_is_bcd(p in params()) {
            let h = 1e-7;
            let x0 = -p.sh;
            let fd = (magic_formula(x0 + h, &p) - magic_formula(x0 - h, &p)) / (2.0 * h);
            let bcd = cornering_stiffness(&p);
            prop_assert!((fd - bcd).abs() <= 1e-6 * bcd.abs().max(1.0));
            prop_assert!((magic_formula_slope(x0, &p) - bcd).abs() <= 1e-12 * bcd.abs().max(1.0));
        }

        #[test]
        fn load_sum_conserved(vx in 0.0..90.0f64, ax in -15.0..15.0f64) {
            let cfg = VehicleConfig::default();
            let (f, r) = loads_unchecked(vx, ax, &cfg);
            let aero = 0.5 * (cfg.Czf + cfg.Czr) * cfg.rho * vx * vx * cfg.A;
            prop_assert!((f + r - cfg.m * cfg.g - aero).abs() < 1e-9);
        }
    }
}
