//! Estimate-versus-truth error statistics.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mhe::{OutputRow, SolveReport};
use crate::simgen::TruthState;
use crate::tire::magic_formula;
use crate::types::{PacejkaAxleParams, TireParamSet};

/// Largest time offset at which an estimate and a truth row are paired.
pub const ALIGN_TOL: f64 = 0.005;

pub const CHANNELS: [&str; 6] = ["vx", "vy", "alpha_f", "alpha_r", "Fyf", "Fyr"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct ChannelError {
    pub max_abs_err: f64,
    pub rmse: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
    pub max: f64,
}

impl TimingStats {
    /// `None` for an empty sample.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let pick = |q: f64| s[((q * (s.len() - 1) as f64).ceil() as usize).min(s.len() - 1)];
        Some(Self {
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p50: pick(0.5),
            p99: pick(0.99),
            max: s[s.len() - 1],
        })
    }

    pub fn of_reports(reports: &[SolveReport]) -> Option<Self> {
        Self::from_samples(&reports.iter().map(|r| r.wall_time).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct MetricsReport {
    pub channels: BTreeMap<String, ChannelError>,
    /// First time after which both axles' cornering stiffness stays within
    /// 5% of the truth value.
    pub param_convergence_time: Option<f64>,
    pub solve_time: Option<TimingStats>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<8} {:>14} {:>14} {:>8}\n", "channel", "max_abs_err", "rmse", "samples");
        for name in CHANNELS {
            if let Some(c) = self.channels.get(name) {
                out.push_str(&format!("{:<8} {:>14.6} {:>14.6} {:>8}\n", name, c.max_abs_err, c.rmse, c.samples));
            }
        }
        if let Some(t) = self.param_convergence_time {
            out.push_str(&format!("parameter convergence at {t:.2} s\n"));
        }
        if let Some(s) = &self.solve_time {
            out.push_str(&format!(
                "solve time: mean {:.3} ms, p99 {:.3} ms, max {:.3} ms over {} solves\n",
                s.mean * 1e3,
                s.p99 * 1e3,
                s.max * 1e3,
                s.count
            ));
        }
        out
    }
}

#[derive(Default)]
struct Accumulator {
    max: f64,
    sum_sq: f64,
    n: usize,
}

impl Accumulator {
    fn add(&mut self, e: f64) {
        self.max = self.max.max(e.abs());
        self.sum_sq += e * e;
        self.n += 1;
    }

    fn finish(&self) -> ChannelError {
        ChannelError {
            max_abs_err: self.max,
            rmse: if self.n > 0 { (self.sum_sq / self.n as f64).sqrt() } else { 0.0 },
            samples: self.n,
        }
    }
}

/// Index of the truth row nearest to `t`, if within [`ALIGN_TOL`].
fn nearest(truth: &[TruthState], t: f64) -> Option<usize> {
    let i = truth.partition_point(|s| s.t < t);
    let mut best = None;
    for j in [i.wrapping_sub(1), i] {
        if let Some(s) = truth.get(j) {
            let d = (s.t - t).abs();
            if d <= ALIGN_TOL + 1e-12 && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
    }
    best.map(|(j, _)| j)
}

/// Per-channel errors. Velocities count at every aligned row; slip angles
/// and forces only where the estimate reports them and the true speed
/// exceeds `v_fy_min`.
pub fn compute_metrics(rows: &[OutputRow], truth: &[TruthState], v_fy_min: f64) -> Result<MetricsReport> {
    let (Some(t0), Some(t1)) = (truth.first().map(|s| s.t), truth.last().map(|s| s.t)) else {
        return Err(Error::Alignment("empty truth".into()));
    };
    let mut acc: BTreeMap<&str, Accumulator> = CHANNELS.iter().map(|c| (*c, Accumulator::default())).collect();
    let mut aligned = 0;
    for row in rows {
        let Some(k) = nearest(truth, row.t) else { continue };
        aligned += 1;
        let s = &truth[k];
        acc.get_mut("vx").unwrap().add(row.vx - s.vx);
        acc.get_mut("vy").unwrap().add(row.vy - s.vy);
        if s.vx.hypot(s.vy) <= v_fy_min {
            continue;
        }
        for (name, est, tru) in [
            ("alpha_f", row.alpha_f, s.alpha_f),
            ("alpha_r", row.alpha_r, s.alpha_r),
            ("Fyf", row.Fyf, s.Fyf),
            ("Fyr", row.Fyr, s.Fyr),
        ] {
            if let Some(e) = est {
                acc.get_mut(name).unwrap().add(e - tru);
            }
        }
    }
    if aligned == 0 {
        return Err(Error::Alignment(format!(
            "no estimate within {ALIGN_TOL} s of the truth range [{t0}, {t1}]"
        )));
    }
    Ok(MetricsReport {
        channels: acc.into_iter().map(|(k, a)| (k.to_string(), a.finish())).collect(),
        param_convergence_time: None,
        solve_time: None,
    })
}

/// First row time after which both stiffness columns stay within `tol`
/// (relative) of the truth stiffness.
pub fn stiffness_convergence_time(rows: &[OutputRow], truth: &TireParamSet, tol: f64) -> Option<f64> {
    let bf = crate::tire::cornering_stiffness(&truth.front);
    let br = crate::tire::cornering_stiffness(&truth.rear);
    let ok = |r: &OutputRow| (r.BCD_f - bf).abs() <= tol * bf && (r.BCD_r - br).abs() <= tol * br;
    let last_bad = rows.iter().rposition(|r| !ok(r));
    match last_bad {
        None => rows.first().map(|r| r.t),
        Some(i) => rows.get(i + 1).map(|r| r.t),
    }
}

/// RMS difference of the normalized force curves over `[-slip_max, slip_max]`.
pub fn curve_rmse(est: &PacejkaAxleParams, truth: &PacejkaAxleParams, slip_max: f64) -> f64 {
    let n = 201;
    let sum: f64 = (0..n)
        .map(|i| {
            let x = -slip_max + 2.0 * slip_max * i as f64 / (n - 1) as f64;
            let d = magic_formula(x, est) - magic_formula(x, truth);
            d * d
        })
        .sum();
    (sum / n as f64).sqrt()
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
}

fn cell(rec: &csv::StringRecord, i: usize, name: &str, line: usize) -> Result<Option<f64>> {
    let s = rec.get(i).unwrap_or("").trim();
    if s.is_empty() {
        return Ok(None);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Parse(format!("column `{name}`: `{s}`")).at_line(line))?;
    if !v.is_finite() {
        return Err(Error::Range(name.to_string()).at_line(line));
    }
    Ok(Some(v))
}

fn read_table<R: Read>(reader: R, names: &[&str]) -> Result<Vec<Vec<Option<f64>>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let cols = names.iter().map(|n| column(&headers, n)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse(e.to_string()).at_line(line))?;
        out.push(
            cols.iter()
                .zip(names)
                .map(|(c, n)| cell(&rec, *c, n, line))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(out)
}

fn required(v: Option<f64>, name: &str, line: usize) -> Result<f64> {
    v.ok_or_else(|| Error::Schema(format!("empty `{name}`")).at_line(line))
}

/// Reads an estimate CSV as written by [`crate::mhe::write_estimates`].
pub fn read_estimates<R: Read>(reader: R) -> Result<Vec<OutputRow>> {
    let names: Vec<&str> = crate::mhe::ESTIMATE_HEADER.split(',').collect();
    let table = read_table(reader, &names)?;
    table
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let line = i + 2;
            let req = |k: usize| required(v[k], names[k], line);
            Ok(OutputRow {
                t: req(0)?,
                vx: req(1)?,
                vy: req(2)?,
                r: req(3)?,
                bx: req(4)?,
                by: req(5)?,
                br: req(6)?,
                alpha_f: v[7],
                alpha_r: v[8],
                Fyf: v[9],
                Fyr: v[10],
                BCD_f: req(11)?,
                BCD_r: req(12)?,
                beta: v[13],
                a_y_derived: None,
            })
        })
        .collect()
}

pub fn read_truth<R: Read>(reader: R) -> Result<Vec<TruthState>> {
    let names: Vec<&str> = crate::simgen::TRUTH_HEADER.split(',').collect();
    let table = read_table(reader, &names)?;
    table
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let line = i + 2;
            let mut f = [0.0; 11];
            for k in 0..11 {
                f[k] = required(v[k], names[k], line)?;
            }
            Ok(TruthState {
                t: f[0],
                vx: f[1],
                vy: f[2],
                r: f[3],
                ax: f[4],
                ay: f[5],
                delta: f[6],
                Fyf: f[7],
                Fyr: f[8],
                alpha_f: f[9],
                alpha_r: f[10],
            })
        })
        .collect()
}
