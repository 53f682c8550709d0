//! One horizon's least-squares problem: residual blocks bound to window
//! states, cost evaluation and the Gauss-Newton normal equations in
//! block-tridiagonal-plus-border form.

use nalgebra::{Matrix6, SMatrix, SVector, Vector6};

use crate::config::VehicleConfig;
use crate::error::{Error, Result};
use crate::motion::{process_block, ProcessNoise};
use crate::radar::{cauchy_rho, cauchy_weight, doppler_block, DopplerFactor};
use crate::tire::force_block;
use crate::types::{InputSample, StateVector, TireParamSet};
use crate::zupt::zv_block;

pub const NP: usize = 12;
pub type ParamVector = SVector<f64, NP>;
pub type Border = SMatrix<f64, 6, NP>;
pub type ParamMatrix = SMatrix<f64, NP, NP>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub u: InputSample,
    pub dt: f64,
}

/// Zero-velocity pseudo-measurement at one state; `target` holds the
/// gravity-compensated `(ax, ay)` and the gyro reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZuptFactor {
    pub state: usize,
    pub target: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundDoppler {
    pub state: usize,
    pub factor: DopplerFactor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceFactor {
    pub state: usize,
    pub u: InputSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem<'a> {
    pub cfg: &'a VehicleConfig,
    pub times: Vec<f64>,
    pub prior_x: StateVector,
    /// Inverse standard deviations of the anchor prior.
    pub prior_x_w: Vector6<f64>,
    pub prior_p: ParamVector,
    pub prior_p_w: ParamVector,
    pub intervals: Vec<Interval>,
    pub noise: ProcessNoise,
    pub zupt: Vec<ZuptFactor>,
    pub doppler: Vec<BoundDoppler>,
    pub force: Vec<ForceFactor>,
}

/// Cost split by residual class (each term is `½ Σ ρ(‖r‖²)`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub prior_state: f64,
    pub prior_params: f64,
    pub process: f64,
    pub zupt: f64,
    pub doppler: f64,
    pub lateral_force: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.prior_state + self.prior_params + self.process + self.zupt + self.doppler + self.lateral_force
    }

    fn check(&self) -> Result<()> {
        let classes = [
            ("state prior", self.prior_state),
            ("parameter prior", self.prior_params),
            ("process", self.process),
            ("zero-velocity", self.zupt),
            ("doppler", self.doppler),
            ("lateral force", self.lateral_force),
        ];
        match classes.iter().find(|(_, v)| !v.is_finite()) {
            Some((name, _)) => Err(Error::Numeric(format!("non-finite {name} cost"))),
            None => Ok(()),
        }
    }
}

/// Normal equations `H δ = -g` in arrow form.
#[derive(Debug, Clone, PartialEq)]
pub struct Normal {
    pub diag: Vec<Matrix6<f64>>,
    /// `upper[k] = H(k, k+1)`.
    pub upper: Vec<Matrix6<f64>>,
    pub border: Vec<Border>,
    pub pp: ParamMatrix,
    pub gx: Vec<Vector6<f64>>,
    pub gp: ParamVector,
}

impl Normal {
    fn zeros(n: usize) -> Self {
        Self {
            diag: vec![Matrix6::zeros(); n],
            upper: vec![Matrix6::zeros(); n.saturating_sub(1)],
            border: vec![Border::zeros(); n],
            pp: ParamMatrix::zeros(),
            gx: vec![Vector6::zeros(); n],
            gp: ParamVector::zeros(),
        }
    }
}

pub fn params_to_vector(p: &TireParamSet) -> ParamVector {
    ParamVector::from_column_slice(&p.to_array())
}

pub fn vector_to_params(v: &ParamVector) -> TireParamSet {
    let mut a = [0.0; NP];
    a.copy_from_slice(v.as_slice());
    TireParamSet::from_array(a)
}

fn split(p: &ParamVector) -> TireParamSet {
    vector_to_params(p)
}

impl<'a> Problem<'a> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn sigma_zv(&self) -> &[f64; 6] {
        &self.cfg.covariances.Sigma_zv
    }

    fn cauchy_scale(&self) -> f64 {
        self.cfg.covariances.cauchy_scale
    }

    pub fn cost(&self, x: &[StateVector], p: &ParamVector) -> Result<CostBreakdown> {
        let mut c = CostBreakdown::default();
        let r0 = (x[0] - self.prior_x).component_mul(&self.prior_x_w);
        c.prior_state = 0.5 * r0.norm_squared();
        c.prior_params = 0.5 * (p - self.prior_p).component_mul(&self.prior_p_w).norm_squared();
        for (k, iv) in self.intervals.iter().enumerate() {
            let (r, _, _) = process_block(&x[k], &x[k + 1], &iv.u, iv.dt, &self.noise);
            c.process += 0.5 * r.norm_squared();
        }
        for z in &self.zupt {
            let (r, _) = zv_block(&x[z.state], z.target[0], z.target[1], z.target[2], self.sigma_zv());
            c.zupt += 0.5 * r.norm_squared();
        }
        let scale = self.cauchy_scale();
        for d in &self.doppler {
            let (r, _) = doppler_block(&d.factor, &x[d.state], &self.cfg.radars[d.factor.radar_id]);
            c.doppler += 0.5 * cauchy_rho(r * r, scale);
        }
        let params = split(p);
        for f in &self.force {
            match force_block(&x[f.state], &f.u, &params, self.cfg) {
                Ok((r, _, _)) => c.lateral_force += 0.5 * r.norm_squared(),
                Err(_) => c.lateral_force = f64::INFINITY,
            }
        }
        c.check()?;
        Ok(c)
    }

    /// Gauss-Newton normal equations at `(x, p)`. Doppler rows are
    /// reweighted by `√ρ'` so that the gradient is exact for the Cauchy loss.
    pub fn linearize(&self, x: &[StateVector], p: &ParamVector) -> Result<Normal> {
        let mut n = Normal::zeros(self.len());

        let w0 = Matrix6::from_diagonal(&self.prior_x_w);
        let r0 = (x[0] - self.prior_x).component_mul(&self.prior_x_w);
        n.diag[0] += w0 * w0;
        n.gx[0] += w0 * r0;

        let rp = (p - self.prior_p).component_mul(&self.prior_p_w);
        for j in 0..NP {
            n.pp[(j, j)] += self.prior_p_w[j] * self.prior_p_w[j];
            n.gp[j] += self.prior_p_w[j] * rp[j];
        }

        for (k, iv) in self.intervals.iter().enumerate() {
            let (r, jp, jn) = process_block(&x[k], &x[k + 1], &iv.u, iv.dt, &self.noise);
            n.diag[k] += jp.transpose() * jp;
            n.diag[k + 1] += jn.transpose() * jn;
            n.upper[k] += jp.transpose() * jn;
            n.gx[k] += jp.transpose() * r;
            n.gx[k + 1] += jn.transpose() * r;
        }

        for z in &self.zupt {
            let (r, w) = zv_block(&x[z.state], z.target[0], z.target[1], z.target[2], self.sigma_zv());
            for j in 0..6 {
                n.diag[z.state][(j, j)] += w[j] * w[j];
                n.gx[z.state][j] += w[j] * r[j];
            }
        }

        let scale = self.cauchy_scale();
        for d in &self.doppler {
            let (r, g) = doppler_block(&d.factor, &x[d.state], &self.cfg.radars[d.factor.radar_id]);
            let w = cauchy_weight(r * r, scale);
            let k = d.state;
            for a in 0..3 {
                n.gx[k][a] += w * g[a] * r;
                for b in 0..3 {
                    n.diag[k][(a, b)] += w * g[a] * g[b];
                }
            }
        }

        let params = split(p);
        for f in &self.force {
            let (r, jx, jp) = force_block(&x[f.state], &f.u, &params, self.cfg)?;
            let k = f.state;
            let jxx = jx.transpose() * jx;
            let jxr = jx.transpose() * r;
            for a in 0..3 {
                n.gx[k][a] += jxr[a];
                for b in 0..3 {
                    n.diag[k][(a, b)] += jxx[(a, b)];
                }
            }
            for (axle, ja) in jp.iter().enumerate() {
                let off = 6 * axle;
                let jpr = ja.transpose() * r;
                let jxp = jx.transpose() * ja;
                for a in 0..6 {
                    n.gp[off + a] += jpr[a];
                    for b in 0..3 {
                        n.border[k][(b, off + a)] += jxp[(b, a)];
                    }
                }
                for (other, jb) in jp.iter().enumerate() {
                    let jab = ja.transpose() * jb;
                    for a in 0..6 {
                        for b in 0..6 {
                            n.pp[(off + a, 6 * other + b)] += jab[(a, b)];
                        }
                    }
                }
            }
        }
        Ok(n)
    }

    /// Stacked residual vector with the Doppler rows scaled by fixed IRLS
    /// weights taken from `(x_ref)`. Used as an independent oracle.
    pub fn residual_vector(&self, x: &[StateVector], p: &ParamVector, x_ref: &[StateVector]) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend((x[0] - self.prior_x).component_mul(&self.prior_x_w).iter());
        out.extend((p - self.prior_p).component_mul(&self.prior_p_w).iter());
        for (k, iv) in self.intervals.iter().enumerate() {
            let (r, _, _) = process_block(&x[k], &x[k + 1], &iv.u, iv.dt, &self.noise);
            out.extend(r.iter());
        }
        for z in &self.zupt {
            let (r, _) = zv_block(&x[z.state], z.target[0], z.target[1], z.target[2], self.sigma_zv());
            out.extend(r.iter());
        }
        for d in &self.doppler {
            let ext = &self.cfg.radars[d.factor.radar_id];
            let (r_ref, _) = doppler_block(&d.factor, &x_ref[d.state], ext);
            let w = cauchy_weight(r_ref * r_ref, self.cauchy_scale()).sqrt();
            let (r, _) = doppler_block(&d.factor, &x[d.state], ext);
            out.push(w * r);
        }
        let params = split(p);
        for f in &self.force {
            let (r, _, _) = force_block(&x[f.state], &f.u, &params, self.cfg).expect("admissible force factor");
            out.extend(r.iter());
        }
        out
    }
}
