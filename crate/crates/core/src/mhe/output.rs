//! Reported estimates and their CSV form.

use std::io::Write;

use crate::config::VehicleConfig;
use crate::error::Result;
use crate::tire::{cornering_stiffness, force_gate, axle_force, slip_unchecked, vertical_loads};
use crate::types::{InputSample, TireParamSet, VehicleState};

pub const ESTIMATE_HEADER: &str = "t,vx,vy,r,bx,by,br,alpha_f,alpha_r,Fyf,Fyr,BCD_f,BCD_r,beta";

#[derive(Debug, Clone, Copy, PartialEq)]
#[allow(non_snake_case)]
pub struct OutputRow {
    pub t: f64,
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub bx: f64,
    pub by: f64,
    pub br: f64,
    pub alpha_f: Option<f64>,
    pub alpha_r: Option<f64>,
    pub Fyf: Option<f64>,
    pub Fyr: Option<f64>,
    pub BCD_f: f64,
    pub BCD_r: f64,
    pub beta: Option<f64>,
    /// `(Fyf cos δ + Fyr) / m`; not written to the CSV.
    pub a_y_derived: Option<f64>,
}

/// Output row for one state; slip, force and side-slip fields are empty
/// below the lateral-force speed gate.
pub fn estimate_output(x: &VehicleState, u: &InputSample, p: &TireParamSet, cfg: &VehicleConfig) -> OutputRow {
    let mut row = OutputRow {
        t: x.t,
        vx: x.vx,
        vy: x.vy,
        r: x.r,
        bx: x.bx,
        by: x.by,
        br: x.br,
        alpha_f: None,
        alpha_r: None,
        Fyf: None,
        Fyr: None,
        BCD_f: cornering_stiffness(&p.front),
        BCD_r: cornering_stiffness(&p.rear),
        beta: None,
        a_y_derived: None,
    };
    if !force_gate(x.vx, x.vy, cfg) {
        return row;
    }
    row.beta = Some((x.vy / x.vx).atan());
    let (af, ar) = slip_unchecked(x.vx, x.vy, x.r, u.delta, cfg.lf, cfg.lr);
    if let Ok((fzf, fzr)) = vertical_loads(x, u, cfg) {
        let fyf = axle_force(fzf, af, &p.front);
        let fyr = axle_force(fzr, ar, &p.rear);
        row.alpha_f = Some(af);
        row.alpha_r = Some(ar);
        row.Fyf = Some(fyf);
        row.Fyr = Some(fyr);
        row.a_y_derived = Some((fyf * u.delta.cos() + fyr) / cfg.m);
    }
    row
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn format_row(r: &OutputRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.t,
        r.vx,
        r.vy,
        r.r,
        r.bx,
        r.by,
        r.br,
        opt(r.alpha_f),
        opt(r.alpha_r),
        opt(r.Fyf),
        opt(r.Fyr),
        r.BCD_f,
        r.BCD_r,
        opt(r.beta)
    )
}

pub fn write_estimates<W: Write>(mut w: W, rows: &[OutputRow]) -> Result<()> {
    writeln!(w, "{ESTIMATE_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", format_row(r))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(delta: f64) -> InputSample {
        InputSample {
            t: 0.0,
            ax_meas: 0.0,
            ay_meas: 0.0,
            r_meas: 0.0,
            delta,
        }
    }

    #[test]
    fn straight_running_has_zero_side_slip_and_force() {
        let cfg = VehicleConfig::default();
        let x = VehicleState {
            vx: 40.0,
            ..VehicleState::zero(1.0)
        };
        let row = estimate_output(&x, &u(0.0), &cfg.tire_init, &cfg);
        assert_eq!(row.beta, Some(0.0));
        assert_eq!(row.Fyf, Some(0.0));
        assert_eq!(row.Fyr, Some(0.0));
        assert_eq!(row.a_y_derived, Some(0.0));
    }

    #[test]
    fn below_gate_fields_are_empty() {
        let cfg = VehicleConfig::default();
        let x = VehicleState {
            vx: 2.0,
            ..VehicleState::zero(1.0)
        };
        let row = estimate_output(&x, &u(0.1), &cfg.tire_init, &cfg);
        assert_eq!(row.alpha_f, None);
        assert_eq!(row.beta, None);
        let line = format_row(&row);
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), ESTIMATE_HEADER.split(',').count());
        assert!(fields[7..11].iter().all(|f| f.is_empty()));
        assert!(fields[13].is_empty());
        assert!(!fields[11].is_empty());
    }

    #[test]
    fn stiffness_columns_follow_parameters() {
        let cfg = VehicleConfig::default();
        let row = estimate_output(&VehicleState::zero(0.0), &u(0.0), &cfg.tire_init, &cfg);
        assert!((row.BCD_f - 11.0 * 1.6 * 1.7).abs() < 1e-12);
    }
}
