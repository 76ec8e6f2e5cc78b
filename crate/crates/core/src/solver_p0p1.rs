//! Leading-order price `P0` and first correction `P1`.
//!
//! `P0` solves `dP0/dt + sup_{q in [d,u]} 1/2 q^2 L_xx P0 = 0` with `P0(T) = h`.
//! The equation has no z-derivatives, so each z-slice is an independent 1D
//! problem solved with a theta-scheme and a predictor-corrector treatment of
//! the bang-bang control. `P1` solves the linear equation
//! `dP1/dt + 1/2 q0^2 L_xx P1 + rho q0 L_xz P0 = 0` with `P1(T) = 0`, where
//! `q0` is the control chosen for `P0` and the source is evaluated on the
//! theta-weighted average of the two `P0` levels.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linsolve::{solve_tridiag, TriDiag};
use crate::params::{Grid2D, GridSpec, ModelParams, SolverConfig, Surface};
use crate::payoff::{terminal_surface_with, PayoffSpec};
use crate::stencils::{apply_operator, lxx_coefficient, second_difference, Operator};

/// Bang-bang control of the leading-order equation: `u` where
/// `u^2 L_xx >= d^2 L_xx`, else `d`. `|L_xx| < gamma_eps` counts as zero.
#[inline]
pub fn bang_bang(l_xx: f64, d: f64, u: f64, gamma_eps: f64) -> f64 {
    let l = if l_xx.abs() < gamma_eps { 0.0 } else { l_xx };
    if u * u * l >= d * d * l {
        u
    } else {
        d
    }
}

/// `(dt, implicit weight)` for each sub-step of backward step `n`
/// (from `t_{n+1}` to `t_n`). The first backward step is split into
/// `rannacher_steps` fully implicit sub-steps when that count is nonzero.
pub(crate) fn substeps(n: usize, n_t: usize, dt: f64, config: &SolverConfig) -> Vec<(f64, f64)> {
    let m = config.rannacher_steps;
    if n + 1 == n_t && m > 0 {
        vec![(dt / m as f64, 1.0); m]
    } else {
        vec![(dt, config.cn_weight)]
    }
}

/// One z-slice: coordinates and the per-slice constants of the operator.
struct Slice<'a> {
    x: &'a [f64],
    z: f64,
    dx: f64,
}

impl Slice<'_> {
    fn lxx(&self, w: ArrayView1<'_, f64>) -> Vec<f64> {
        let mut out = second_difference(w, self.dx);
        for (v, &x) in out.iter_mut().zip(self.x) {
            *v *= lxx_coefficient(x, self.z);
        }
        out
    }

    fn controls(&self, w: ArrayView1<'_, f64>, p: &ModelParams, eps: f64) -> Vec<f64> {
        self.lxx(w)
            .into_iter()
            .map(|l| bang_bang(l, p.d, p.u, eps))
            .collect()
    }

    /// Solves `(w_next - w)/dt + 1/2 q^2 L_xx(theta w + (1-theta) w_next) + src = 0`.
    fn theta_step(
        &self,
        w_next: ArrayView1<'_, f64>,
        q: &[f64],
        src: Option<ArrayView1<'_, f64>>,
        dt: f64,
        weight: f64,
        tol: f64,
    ) -> Result<Vec<f64>> {
        let n = self.x.len();
        let h2 = self.dx * self.dx;
        let mut lower = vec![0.0; n - 1];
        let mut main = vec![1.0; n];
        let mut upper = vec![0.0; n - 1];
        let mut rhs: Vec<f64> = w_next.to_vec();
        let lxx_next = self.lxx(w_next);
        let (wi, we) = (weight * dt, (1.0 - weight) * dt);
        for i in 0..n {
            let c = 0.5 * q[i] * q[i];
            if n >= 3 && i > 0 && i < n - 1 {
                let coeff = c * lxx_coefficient(self.x[i], self.z);
                let off = coeff * (1.0 / h2);
                let diag = coeff * (-2.0 / h2);
                lower[i - 1] = -wi * off;
                upper[i] = -wi * off;
                main[i] = 1.0 - wi * diag;
            }
            rhs[i] += we * (c * lxx_next[i]);
            if let Some(s) = &src {
                rhs[i] += dt * s[i];
            }
        }
        solve_tridiag(&TriDiag { lower, main, upper }, &rhs, tol)
    }

    /// Predictor plus corrector passes for one sub-step of `P0`.
    fn p0_substep(
        &self,
        u_next: ArrayView1<'_, f64>,
        dt: f64,
        weight: f64,
        p: &ModelParams,
        cfg: &SolverConfig,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut q = self.controls(u_next, p, cfg.gamma_eps);
        let mut u = self.theta_step(u_next, &q, None, dt, weight, cfg.lin_tol)?;
        for _ in 0..cfg.corrector_passes {
            let mid: Array1<f64> = u
                .iter()
                .zip(u_next.iter())
                .map(|(a, b)| weight * a + (1.0 - weight) * b)
                .collect();
            let q_new = self.controls(mid.view(), p, cfg.gamma_eps);
            if q_new == q {
                break;
            }
            u = self.theta_step(u_next, &q_new, None, dt, weight, cfg.lin_tol)?;
            q = q_new;
        }
        Ok((u, q))
    }
}

/// Evolves a single-slice payoff backwards for `horizon` years under the
/// leading-order equation at the fixed level `z`, using `steps` steps.
pub fn solve_p0_slice(
    h: &[f64],
    x: &[f64],
    z: f64,
    horizon: f64,
    steps: usize,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    if h.len() != x.len() || x.len() < 2 || steps == 0 {
        return Err(Error::InvalidInput(
            "slice solve needs matching lengths, >= 2 nodes and >= 1 step".into(),
        ));
    }
    let slice = Slice {
        x,
        z,
        dx: x[1] - x[0],
    };
    let dt = horizon / steps as f64;
    let mut u = Array1::from(h.to_vec());
    for n in (0..steps).rev() {
        for (sdt, weight) in substeps(n, steps, dt, config) {
            let (next, _) = slice
                .p0_substep(u.view(), sdt, weight, params, config)
                .map_err(|e| e.at_step(n, None))?;
            u = Array1::from(next);
        }
    }
    Ok(u.to_vec())
}

/// Frozen data of one sub-step, enough to rerun the `P1` recursion for
/// another correlation.
#[derive(Debug, Clone)]
pub struct SubStep {
    pub dt: f64,
    pub weight: f64,
    /// Control used for `P0` over this sub-step.
    pub q: Array2<f64>,
    /// Source of the `P1` equation without the correlation factor,
    /// `q * L_xz(theta u_new + (1 - theta) u_old)`.
    pub unit_source: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct P0P1Solution {
    pub grid: Arc<Grid2D>,
    /// `p0[n]` is the surface at `t_n`, `n = 0..=N`.
    pub p0: Vec<Surface>,
    pub p1: Vec<Surface>,
    /// `q_star0[n]` is the control applied on `[t_n, t_{n+1}]` (last
    /// sub-step when the step is split), `n = 0..N`.
    pub q_star0: Vec<Array2<f64>>,
    pub rho: f64,
    steps: Vec<Vec<SubStep>>,
    config: SolverConfig,
}

impl P0P1Solution {
    pub fn p0_initial(&self) -> &Surface {
        &self.p0[0]
    }

    pub fn p1_initial(&self) -> &Surface {
        &self.p1[0]
    }

    /// Sub-step records of backward step `n`.
    pub fn substeps(&self, n: usize) -> &[SubStep] {
        &self.steps[n]
    }

    /// Reruns the `P1` recursion with correlation `rho`, reusing the stored
    /// `P0` controls and sources. Any real `rho` is accepted, since `P1` is
    /// linear in it.
    pub fn p1_for_rho(&self, rho: f64) -> Result<Vec<Surface>> {
        let n_t = self.grid.n_t();
        let mut levels = vec![Surface::zeros(self.grid.clone(), n_t)];
        let mut v = Array2::zeros(self.grid.shape());
        for n in (0..n_t).rev() {
            for sub in &self.steps[n] {
                v = p1_substep(&v, sub, rho, &self.grid, &self.config)
                    .map_err(|e| e.at_step(n, None))?;
            }
            levels.push(Surface::new(v.clone(), self.grid.clone(), n)?);
        }
        levels.reverse();
        Ok(levels)
    }
}

fn p1_substep(
    v_next: &Array2<f64>,
    sub: &SubStep,
    rho: f64,
    grid: &Grid2D,
    cfg: &SolverConfig,
) -> Result<Array2<f64>> {
    let source = &sub.unit_source * rho;
    let cols: Vec<Result<Vec<f64>>> = (0..grid.n_z())
        .into_par_iter()
        .map(|j| {
            let slice = Slice {
                x: &grid.x,
                z: grid.z[j],
                dx: grid.dx,
            };
            let q = sub.q.column(j).to_vec();
            slice
                .theta_step(
                    v_next.column(j),
                    &q,
                    Some(source.column(j)),
                    sub.dt,
                    sub.weight,
                    cfg.lin_tol,
                )
        })
        .collect();
    stack_columns(cols, grid.shape())
}

fn stack_columns(cols: Vec<Result<Vec<f64>>>, shape: (usize, usize)) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(shape);
    for (j, col) in cols.into_iter().enumerate() {
        let col = col?;
        out.column_mut(j)
            .iter_mut()
            .zip(col)
            .for_each(|(o, v)| *o = v);
    }
    Ok(out)
}

/// Backward sweep for `P0` and `P1` on the full `(x, z)` grid.
pub fn solve_p0p1(
    payoff: &PayoffSpec,
    params: &ModelParams,
    grid: &GridSpec,
    config: &SolverConfig,
) -> Result<P0P1Solution> {
    let params = params.validated()?;
    config.validate()?;
    let grid = Grid2D::new(grid, params.maturity)?;
    let n_t = grid.n_t();
    let terminal = terminal_surface_with(payoff, &grid, config.terminal)?;

    let mut p0 = vec![terminal];
    let mut p1 = vec![Surface::zeros(grid.clone(), n_t)];
    let mut q_star0 = Vec::with_capacity(n_t);
    let mut steps = Vec::with_capacity(n_t);

    let mut u = p0[0].values().clone();
    let mut v: Array2<f64> = Array2::zeros(grid.shape());
    for n in (0..n_t).rev() {
        let mut records = Vec::new();
        for (dt, weight) in substeps(n, n_t, grid.dt, config) {
            let cols: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..grid.n_z())
                .into_par_iter()
                .map(|j| {
                    let slice = Slice {
                        x: &grid.x,
                        z: grid.z[j],
                        dx: grid.dx,
                    };
                    slice
                        .p0_substep(u.column(j), dt, weight, &params, config)
                        .map_err(|e| e.at_step(n, Some(j)))
                })
                .collect();
            let mut u_new = Array2::zeros(grid.shape());
            let mut q = Array2::zeros(grid.shape());
            for (j, col) in cols.into_iter().enumerate() {
                let (uc, qc) = col?;
                for i in 0..grid.n_x() {
                    u_new[[i, j]] = uc[i];
                    q[[i, j]] = qc[i];
                }
            }
            let mid = &u_new * weight + &u * (1.0 - weight);
            let lxz = apply_operator(Operator::Lxz, mid.view(), &grid)?;
            let sub = SubStep {
                dt,
                weight,
                unit_source: &q * &lxz,
                q,
            };
            v = p1_substep(&v, &sub, params.rho, &grid, config)
                .map_err(|e| e.at_step(n, None))?;
            u = u_new;
            records.push(sub);
        }
        q_star0.push(records.last().expect("at least one sub-step").q.clone());
        steps.push(records);
        p0.push(Surface::new(u.clone(), grid.clone(), n)?);
        p1.push(Surface::new(v.clone(), grid.clone(), n)?);
    }
    p0.reverse();
    p1.reverse();
    q_star0.reverse();
    steps.reverse();

    Ok(P0P1Solution {
        grid,
        p0,
        p1,
        q_star0,
        rho: params.rho,
        steps,
        config: *config,
    })
}

/// One predictor-corrector step of `P0` on every slice, from the level-`n+1`
/// surface. Returns the new surface and the control used.
pub fn step_p0(
    next: &Surface,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<(Surface, Array2<f64>)> {
    let grid = next.grid().clone();
    let n = next
        .time_index()
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidInput("cannot step back from t = 0".into()))?;
    let (dt, weight) = (grid.dt, config.cn_weight);
    let mut u = Array2::zeros(grid.shape());
    let mut q = Array2::zeros(grid.shape());
    for j in 0..grid.n_z() {
        let slice = Slice {
            x: &grid.x,
            z: grid.z[j],
            dx: grid.dx,
        };
        let (uc, qc) = slice
            .p0_substep(next.z_slice(j), dt, weight, params, config)
            .map_err(|e| e.at_step(n, Some(j)))?;
        u.column_mut(j).assign(&Array1::from(uc));
        q.column_mut(j).assign(&Array1::from(qc));
    }
    Ok((Surface::new(u, grid, n)?, q))
}

/// Predictor only: control from the level-`n+1` surface and the provisional
/// level-`n` surface it produces.
pub fn step_p0_predictor(
    next: &Surface,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<(Surface, Array2<f64>)> {
    let cfg = SolverConfig {
        corrector_passes: 0,
        ..*config
    };
    step_p0(next, params, &cfg)
}

/// Corrector: control re-evaluated on the weighted average of `next` and
/// `provisional`, then one re-solve.
pub fn step_p0_corrector(
    next: &Surface,
    provisional: &Surface,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<(Surface, Array2<f64>)> {
    let grid = next.grid().clone();
    let weight = config.cn_weight;
    let n = provisional.time_index();
    let mid = provisional.values() * weight + next.values() * (1.0 - weight);
    let lxx = apply_operator(Operator::Lxx, mid.view(), &grid)?;
    let q = lxx.mapv(|l| bang_bang(l, params.d, params.u, config.gamma_eps));
    let mut u = Array2::zeros(grid.shape());
    for j in 0..grid.n_z() {
        let slice = Slice {
            x: &grid.x,
            z: grid.z[j],
            dx: grid.dx,
        };
        let qc = q.column(j).to_vec();
        let uc = slice
            .theta_step(next.z_slice(j), &qc, None, grid.dt, weight, config.lin_tol)
            .map_err(|e| e.at_step(n, Some(j)))?;
        u.column_mut(j).assign(&Array1::from(uc));
    }
    Ok((Surface::new(u, grid, n)?, q))
}

/// Linear `P1` step with frozen control `q` and the source
/// `rho q L_xz(theta p0_now + (1 - theta) p0_next)`.
pub fn step_p1(
    p1_next: &Surface,
    q: &Array2<f64>,
    p0_now: &Surface,
    p0_next: &Surface,
    params: &ModelParams,
    config: &SolverConfig,
) -> Result<Surface> {
    let grid = p1_next.grid().clone();
    let weight = config.cn_weight;
    let mid = p0_now.values() * weight + p0_next.values() * (1.0 - weight);
    let lxz = apply_operator(Operator::Lxz, mid.view(), &grid)?;
    let sub = SubStep {
        dt: grid.dt,
        weight,
        q: q.clone(),
        unit_source: q * &lxz,
    };
    let v = p1_substep(p1_next.values(), &sub, params.rho, &grid, config)?;
    Surface::new(v, grid, p0_now.time_index())
}

/// Sign pattern of a control field: count of nodes at `u` per z-slice.
pub fn upper_control_counts(q: &Array2<f64>, u: f64) -> Vec<usize> {
    q.axis_iter(Axis(1))
        .map(|col| col.iter().filter(|&&v| v == u).count())
        .collect()
}
