//! Levenberg-Marquardt over the window: block-tridiagonal elimination of the
//! states, a dense Schur complement on the tire parameters, box constraints
//! on the parameters via an active set and clamping.

use std::time::Instant;

use nalgebra::{Cholesky, Matrix6, SMatrix, Vector6};
use serde::Serialize;

use super::problem::{CostBreakdown, Normal, ParamMatrix, ParamVector, Problem, NP};
use crate::config::{ParamBounds, SolverSettings};
use crate::error::{Error, Result};
use crate::types::StateVector;

type Rhs = SMatrix<f64, 6, { NP + 1 }>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    MaxIterations,
    TimeCap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub accepted: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub wall_time: f64,
    pub termination: Termination,
    #[serde(skip)]
    pub breakdown: CostBreakdown,
}

/// Solves the arrow system
/// `[A B; Bᵀ C] [δx; δp] = [rx; rp]` with `A` block tridiagonal.
pub fn solve_arrow(
    diag: &[Matrix6<f64>],
    upper: &[Matrix6<f64>],
    border: &[SMatrix<f64, 6, NP>],
    pp: &ParamMatrix,
    rx: &[Vector6<f64>],
    rp: &ParamVector,
) -> Option<(Vec<Vector6<f64>>, ParamVector)> {
    let n = diag.len();
    let mut chol: Vec<Cholesky<f64, nalgebra::Const<6>>> = Vec::with_capacity(n);
    let mut y: Vec<Rhs> = Vec::with_capacity(n);
    for k in 0..n {
        let mut b = Rhs::zeros();
        b.fixed_view_mut::<6, 1>(0, 0).copy_from(&rx[k]);
        b.fixed_view_mut::<6, NP>(0, 1).copy_from(&border[k]);
        let mut s = diag[k];
        if k > 0 {
            let u = &upper[k - 1];
            let prev = &chol[k - 1];
            s -= u.transpose() * prev.solve(u);
            b -= u.transpose() * prev.solve(&y[k - 1]);
        }
        chol.push(Cholesky::new(s)?);
        y.push(b);
    }
    let mut x: Vec<Rhs> = vec![Rhs::zeros(); n];
    for k in (0..n).rev() {
        let mut b = y[k];
        if k + 1 < n {
            b -= upper[k] * x[k + 1];
        }
        x[k] = chol[k].solve(&b);
    }
    let mut schur = *pp;
    let mut rhs = *rp;
    for k in 0..n {
        let z = x[k].fixed_view::<6, 1>(0, 0).into_owned();
        let w = x[k].fixed_view::<6, NP>(0, 1).into_owned();
        schur -= border[k].transpose() * w;
        rhs -= border[k].transpose() * z;
    }
    let schur = 0.5 * (schur + schur.transpose());
    let dp = Cholesky::new(schur)?.solve(&rhs);
    let dx = (0..n)
        .map(|k| x[k].fixed_view::<6, 1>(0, 0).into_owned() - x[k].fixed_view::<6, NP>(0, 1) * dp)
        .collect();
    Some((dx, dp))
}

/// Parameters sitting on a bound whose descent direction points outward.
fn active_set(p: &ParamVector, gp: &ParamVector, lo: &ParamVector, hi: &ParamVector) -> [bool; NP] {
    let mut fixed = [false; NP];
    for j in 0..NP {
        let span = (hi[j] - lo[j]).abs().max(1.0);
        let tol = 1e-12 * span;
        fixed[j] = (p[j] <= lo[j] + tol && gp[j] > 0.0) || (p[j] >= hi[j] - tol && gp[j] < 0.0);
    }
    fixed
}

pub fn bounds_vectors(b: &ParamBounds) -> (ParamVector, ParamVector) {
    let mut lo = ParamVector::zeros();
    let mut hi = ParamVector::zeros();
    for j in 0..NP {
        lo[j] = b.P_min[j % 6];
        hi[j] = b.P_max[j % 6];
    }
    (lo, hi)
}

fn clamp(p: &ParamVector, lo: &ParamVector, hi: &ParamVector) -> ParamVector {
    ParamVector::from_fn(|j, _| p[j].clamp(lo[j], hi[j]))
}

/// One damped step `(H + λ diag H) δ = -g` with fixed parameters removed.
fn damped_step(n: &Normal, lambda: f64, fixed: &[bool; NP]) -> Option<(Vec<Vector6<f64>>, ParamVector)> {
    let damp6 = |m: &Matrix6<f64>| {
        let mut d = *m;
        for j in 0..6 {
            d[(j, j)] += lambda * m[(j, j)].max(1e-12);
        }
        d
    };
    let diag: Vec<_> = n.diag.iter().map(damp6).collect();
    let mut pp = n.pp;
    for j in 0..NP {
        pp[(j, j)] += lambda * n.pp[(j, j)].max(1e-12);
    }
    let mut border = n.border.clone();
    let mut rp = -n.gp;
    for j in (0..NP).filter(|&j| fixed[j]) {
        for b in border.iter_mut() {
            b.column_mut(j).fill(0.0);
        }
        pp.row_mut(j).fill(0.0);
        pp.column_mut(j).fill(0.0);
        pp[(j, j)] = 1.0;
        rp[j] = 0.0;
    }
    let rx: Vec<_> = n.gx.iter().map(|g| -g).collect();
    solve_arrow(&diag, &n.upper, &border, &pp, &rx, &rp)
}

/// Predicted decrease `½ δᵀ(λ D δ - g)` of the damped quadratic model.
fn predicted_gain(n: &Normal, lambda: f64, dx: &[Vector6<f64>], dp: &ParamVector) -> f64 {
    let mut s = 0.0;
    for (k, d) in dx.iter().enumerate() {
        for j in 0..6 {
            s += d[j] * (lambda * n.diag[k][(j, j)].max(1e-12) * d[j] - n.gx[k][j]);
        }
    }
    for j in 0..NP {
        s += dp[j] * (lambda * n.pp[(j, j)].max(1e-12) * dp[j] - n.gp[j]);
    }
    0.5 * s
}

/// Minimizes the window cost in place. Returns the last accepted iterate;
/// the cost never increases.
pub fn solve(
    problem: &Problem,
    x: &mut [StateVector],
    p: &mut ParamVector,
    bounds: &ParamBounds,
    settings: &SolverSettings,
) -> Result<SolveReport> {
    if problem.is_empty() || x.len() != problem.len() {
        return Err(Error::InsufficientData("empty window".into()));
    }
    let start = Instant::now();
    let (lo, hi) = bounds_vectors(bounds);
    *p = clamp(p, &lo, &hi);
    let mut breakdown = problem.cost(x, p)?;
    let initial_cost = breakdown.total();
    let mut cost = initial_cost;
    let mut lambda = settings.lm_lambda_init;
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut accepted = 0;
    let mut termination = Termination::MaxIterations;
    let mut lin = problem.linearize(x, p)?;

    while iterations < settings.max_iterations {
        if iterations > 0 && start.elapsed().as_secs_f64() >= settings.max_time {
            termination = Termination::TimeCap;
            break;
        }
        let fixed = active_set(p, &lin.gp, &lo, &hi);
        let gmax = lin
            .gx
            .iter()
            .flat_map(|g| g.iter().copied())
            .chain((0..NP).filter(|&j| !fixed[j]).map(|j| lin.gp[j]))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= settings.gradient_tol {
            termination = Termination::Gradient;
            break;
        }
        iterations += 1;
        let Some((dx, dp)) = damped_step(&lin, lambda, &fixed) else {
            lambda *= nu;
            nu *= 2.0;
            continue;
        };
        let x_new: Vec<StateVector> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let p_new = clamp(&(*p + dp), &lo, &hi);
        let trial = problem.cost(&x_new, &p_new).ok();
        match trial {
            Some(c) if c.total() < cost => {
                let gain = predicted_gain(&lin, lambda, &dx, &dp);
                let rho = (cost - c.total()) / gain.max(f64::MIN_POSITIVE);
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = 2.0;
                let step: f64 = dx.iter().map(|d| d.norm_squared()).sum::<f64>() + dp.norm_squared();
                let size: f64 = x.iter().map(|v| v.norm_squared()).sum::<f64>() + p.norm_squared();
                x.copy_from_slice(&x_new);
                *p = p_new;
                cost = c.total();
                breakdown = c;
                accepted += 1;
                if step.sqrt() <= settings.step_tol * (size.sqrt() + settings.step_tol) {
                    termination = Termination::Step;
                    break;
                }
                if iterations < settings.max_iterations {
                    lin = problem.linearize(x, p)?;
                }
            }
            _ => {
                lambda *= nu;
                nu *= 2.0;
            }
        }
    }
    Ok(SolveReport {
        iterations,
        accepted,
        initial_cost,
        final_cost: cost,
        wall_time: start.elapsed().as_secs_f64(),
        termination,
        breakdown,
    })
}
