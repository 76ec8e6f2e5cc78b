//! Accuracy experiments built on the solvers: the error sweep over `delta`
//! with its convergence fit, gamma-sign diagnostics, the comparison against
//! Black-Scholes prices, oscillation checks and the optimizer-mode
//! comparison.

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackscholes::price_legs;
use crate::error::{Error, Result};
use crate::export::{fmt_f64, Table};
use crate::montecarlo::{fit_line, LineFit};
use crate::params::{Grid2D, GridSpec, ModelParams, OptimizerMode, SolverConfig, Surface};
use crate::payoff::PayoffSpec;
use crate::solver_p0p1::{solve_p0p1, P0P1Solution};
use crate::solver_pdelta::{solve_pdelta, PdeltaSolution};
use crate::stencils::{apply, Operator};

/// Closed rectangle of the `(x, z)` plane over which sup norms are taken,
/// optionally without the grid's boundary rows and columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Skip nodes on the edges of the grid, whose values are set by the
    /// imposed boundary treatment rather than by the equation.
    pub interior_only: bool,
}

impl Default for Window {
    /// `x` in `[60, 140]`, every interior `z` row. The `z = 0` row is the
    /// one that matters: there the frozen-variance price never diffuses and
    /// keeps the payoff kinks, while the slow process still spreads `P^delta`,
    /// so the error on that row decays only like `sqrt(delta)`.
    fn default() -> Self {
        Window {
            x_min: 60.0,
            x_max: 140.0,
            z_min: f64::NEG_INFINITY,
            z_max: f64::INFINITY,
            interior_only: true,
        }
    }
}

impl Window {
    /// Every node of the grid.
    pub fn full() -> Self {
        Window {
            x_min: f64::NEG_INFINITY,
            x_max: f64::INFINITY,
            z_min: f64::NEG_INFINITY,
            z_max: f64::INFINITY,
            interior_only: false,
        }
    }

    pub fn contains(&self, g: &Grid2D, i: usize, j: usize) -> bool {
        if self.interior_only {
            let edge = |k: usize, n: usize| n > 1 && (k == 0 || k + 1 == n);
            if edge(i, g.n_x()) || edge(j, g.n_z()) {
                return false;
            }
        }
        let (x, z) = (g.x[i], g.z[j]);
        // Tolerate representation error in grid coordinates on the edges.
        let tol = 1e-12 * (1.0 + x.abs().max(z.abs()));
        x >= self.x_min - tol && x <= self.x_max + tol && z >= self.z_min - tol && z <= self.z_max + tol
    }

    fn validate(&self) -> Result<()> {
        if self.x_min.is_nan() || self.x_max.is_nan() || self.z_min.is_nan() || self.z_max.is_nan()
            || self.x_min > self.x_max
            || self.z_min > self.z_max
        {
            return Err(Error::InvalidInput(format!("empty or malformed window {self:?}")));
        }
        Ok(())
    }
}

/// Largest `|value|` of a field over the window nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupNorm {
    pub value: f64,
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub z: f64,
}

fn sup_norm(field: &Array2<f64>, s: &Surface, window: &Window) -> Result<SupNorm> {
    let g = s.grid();
    let mut best: Option<SupNorm> = None;
    for ((i, j), &v) in field.indexed_iter() {
        if !window.contains(g, i, j) {
            continue;
        }
        if best.is_none_or(|b| v.abs() > b.value) {
            best = Some(SupNorm { value: v.abs(), i, j, x: g.x[i], z: g.z[j] });
        }
    }
    best.ok_or_else(|| Error::InvalidInput(format!("window {window:?} contains no grid node")))
}

/// Pointwise residual `P^delta - P0 - sqrt(delta) P1` at `t = 0`.
pub fn expansion_residual(p0p1: &P0P1Solution, pdelta: &PdeltaSolution) -> Result<Array2<f64>> {
    let (p0, p1, pd) = (p0p1.p0_initial(), p0p1.p1_initial(), pdelta.initial());
    if pd.values().dim() != p0.values().dim() {
        return Err(Error::DimensionMismatch {
            expected: p0.values().dim(),
            found: pd.values().dim(),
        });
    }
    let s = pdelta.delta.sqrt();
    Ok(pd.values() - p0.values() - &(p1.values() * s))
}

/// Minimum of a price surface relative to zero; payoffs here are
/// nonnegative so a negative minimum is a numerical undershoot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Undershoot {
    pub min_value: f64,
    pub x: f64,
    pub z: f64,
    /// Nodes below `-tolerance`.
    pub nodes_below: usize,
    pub tolerance: f64,
}

pub fn undershoot(s: &Surface, tolerance: f64) -> Undershoot {
    let g = s.grid();
    let mut out = Undershoot {
        min_value: f64::INFINITY,
        x: f64::NAN,
        z: f64::NAN,
        nodes_below: 0,
        tolerance,
    };
    for ((i, j), &v) in s.values().indexed_iter() {
        if v < out.min_value {
            out.min_value = v;
            out.x = g.x[i];
            out.z = g.z[j];
        }
        if v < -tolerance {
            out.nodes_below += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub delta: f64,
    /// Sup of `|P^delta - P0 - sqrt(delta) P1|` at `t = 0` over the window.
    pub error: SupNorm,
    /// Same over the whole grid.
    pub full_error: SupNorm,
    pub undershoot: Undershoot,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub window: Window,
    /// Sorted by increasing `delta`.
    pub records: Vec<SweepRecord>,
    /// Fit of `ln error` against `ln delta` over the smallest half of the
    /// `delta` values.
    pub fit: LineFit,
    pub fit_points: usize,
    /// Number of `P0`/`P1` solves performed (one for the whole sweep).
    pub p0p1_solves: usize,
    pub p0p1_runtime_s: f64,
    pub pdelta_solves: usize,
}

impl SweepReport {
    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.error.value).collect()
    }

    /// Number of adjacent pairs (in increasing `delta`) where the error does
    /// not increase, and the largest relative drop among them.
    pub fn inversions(&self) -> (usize, f64) {
        let e = self.errors();
        e.windows(2)
            .filter(|w| w[1] <= w[0])
            .fold((0, 0.0), |(n, worst), w| (n + 1, f64::max(worst, (w[0] - w[1]) / w[0])))
    }

    /// One row per `delta`, fit metadata repeated on every row.
    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "delta",
            "error",
            "x_at_sup",
            "z_at_sup",
            "full_grid_error",
            "full_x_at_sup",
            "full_z_at_sup",
            "min_p_delta",
            "runtime_s",
            "slope",
            "intercept",
            "r_squared",
            "slope_stderr",
            "fit_points",
        ]);
        for r in &self.records {
            let mut row: Vec<String> = [
                r.delta,
                r.error.value,
                r.error.x,
                r.error.z,
                r.full_error.value,
                r.full_error.x,
                r.full_error.z,
                r.undershoot.min_value,
                r.runtime_s,
                self.fit.slope,
                self.fit.intercept,
                self.fit.r_squared,
                self.fit.slope_stderr,
            ]
            .into_iter()
            .map(fmt_f64)
            .collect();
            row.push(self.fit_points.to_string());
            t.push(row);
        }
        t
    }
}

fn sorted_deltas(deltas: &[f64]) -> Result<Vec<f64>> {
    if deltas.len() < 2 {
        return Err(Error::InvalidInput("a sweep needs at least two delta values".into()));
    }
    if let Some(&bad) = deltas.iter().find(|&&d| !(d.is_finite() && d > 0.0 && d <= 1.0)) {
        return Err(Error::InvalidInput(format!("delta values must lie in (0, 1], got {bad}")));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("delta values must be distinct".into()));
    }
    Ok(sorted)
}

/// Solves `P0`/`P1` once, then `P^delta` for every `delta` (in parallel),
/// and reports the expansion error and its log-log slope.
pub fn error_sweep(
    payoff: &PayoffSpec,
    params: &ModelParams,
    deltas: &[f64],
    grid: &GridSpec,
    config: &SolverConfig,
    window: &Window,
) -> Result<SweepReport> {
    let sorted = sorted_deltas(deltas)?;
    window.validate()?;
    let started = Instant::now();
    let p0p1 = solve_p0p1(payoff, params, grid, config)?;
    let p0p1_runtime_s = started.elapsed().as_secs_f64();
    let mut report = error_sweep_with(&p0p1, payoff, params, &sorted, grid, config, window)?;
    report.p0p1_solves = 1;
    report.p0p1_runtime_s = p0p1_runtime_s;
    Ok(report)
}

/// [`error_sweep`] reusing an existing `P0`/`P1` solution.
pub fn error_sweep_with(
    p0p1: &P0P1Solution,
    payoff: &PayoffSpec,
    params: &ModelParams,
    deltas: &[f64],
    grid: &GridSpec,
    config: &SolverConfig,
    window: &Window,
) -> Result<SweepReport> {
    let sorted = sorted_deltas(deltas)?;
    window.validate()?;
    let records = sorted
        .par_iter()
        .map(|&delta| {
            let run = || -> Result<SweepRecord> {
                let started = Instant::now();
                let pd = solve_pdelta(payoff, &params.with_delta(delta), grid, config)?;
                let runtime_s = started.elapsed().as_secs_f64();
                let residual = expansion_residual(p0p1, &pd)?;
                Ok(SweepRecord {
                    delta,
                    error: sup_norm(&residual, pd.initial(), window)?,
                    full_error: sup_norm(&residual, pd.initial(), &Window::full())?,
                    undershoot: undershoot(pd.initial(), 1e-7),
                    runtime_s,
                })
            };
            run().map_err(|e| e.at_delta(delta))
        })
        .collect::<Result<Vec<_>>>()?;
    let fit_points = (records.len() / 2).max(2);
    let x: Vec<f64> = records[..fit_points].iter().map(|r| r.delta.ln()).collect();
    let y: Vec<f64> = records[..fit_points].iter().map(|r| r.error.value.ln()).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "zero expansion error at some delta; the log-log fit is undefined".into(),
        ));
    }
    let fit = fit_line(&x, &y, None)?;
    Ok(SweepReport {
        window: *window,
        pdelta_solves: records.len(),
        records,
        fit,
        fit_points,
        p0p1_solves: 0,
        p0p1_runtime_s: 0.0,
    })
}

/// Sign class of a gamma value with the deadband: `|v| < eps` counts as
/// nonnegative, matching the control selection.
fn nonnegative(v: f64, eps: f64) -> bool {
    v >= 0.0 || v.abs() < eps
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceGamma {
    pub j: usize,
    pub z: f64,
    /// Interior `x` positions where the sign of `L_xx P0` changes, linearly
    /// interpolated between the two nodes.
    pub crossings: Vec<f64>,
    /// Interior nodes where `L_xx P^delta` and `L_xx P0` fall on different
    /// sides of zero.
    pub mismatch_nodes: Vec<usize>,
    /// `mismatch_nodes.len() * dx`.
    pub mismatch_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaDiagnostics {
    pub time_index: usize,
    pub gamma_eps: f64,
    pub slices: Vec<SliceGamma>,
}

impl GammaDiagnostics {
    pub fn slice_at(&self, z: f64) -> &SliceGamma {
        self.slices
            .iter()
            .min_by(|a, b| (a.z - z).abs().total_cmp(&(b.z - z).abs()))
            .expect("a grid has at least one z node")
    }

    pub fn total_mismatch_nodes(&self) -> usize {
        self.slices.iter().map(|s| s.mismatch_nodes.len()).sum()
    }

    /// One row per slice: `z`, crossing count, crossing positions joined by
    /// `;`, mismatch node count and width.
    pub fn table(&self) -> Table {
        let mut t = Table::new(["z", "n_crossings", "crossings", "mismatch_nodes", "mismatch_width"]);
        for s in &self.slices {
            t.push(vec![
                fmt_f64(s.z),
                s.crossings.len().to_string(),
                s.crossings.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(";"),
                s.mismatch_nodes.len().to_string(),
                fmt_f64(s.mismatch_width),
            ]);
        }
        t
    }
}

/// Sign structure of the discrete gammas of `P0` and `P^delta` at one time
/// level. The sign is tested on `L_xx = z x^2 d_xx` with the solver's
/// `gamma_eps` deadband, i.e. exactly the test that picks the control.
pub fn gamma_diagnostics(p0: &Surface, pdelta: &Surface, gamma_eps: f64) -> Result<GammaDiagnostics> {
    if p0.values().dim() != pdelta.values().dim() || p0.grid().spec != pdelta.grid().spec {
        return Err(Error::DimensionMismatch {
            expected: p0.values().dim(),
            found: pdelta.values().dim(),
        });
    }
    if p0.time_index() != pdelta.time_index() {
        return Err(Error::InvalidInput(format!(
            "time levels differ: {} vs {}",
            p0.time_index(),
            pdelta.time_index()
        )));
    }
    let g = p0.grid().clone();
    let l0 = apply(Operator::Lxx, p0)?;
    let ld = apply(Operator::Lxx, pdelta)?;
    let nx = g.n_x();
    let slices = (0..g.n_z())
        .map(|j| {
            let mut crossings = Vec::new();
            let mut mismatch_nodes = Vec::new();
            for i in 1..nx.saturating_sub(1) {
                let a = l0.values[[i, j]];
                if nonnegative(a, gamma_eps) != nonnegative(ld.values[[i, j]], gamma_eps) {
                    mismatch_nodes.push(i);
                }
                if i + 1 < nx - 1 {
                    let b = l0.values[[i + 1, j]];
                    if nonnegative(a, gamma_eps) != nonnegative(b, gamma_eps) {
                        let w = if a != b { a / (a - b) } else { 0.5 };
                        crossings.push(g.x[i] + w.clamp(0.0, 1.0) * g.dx);
                    }
                }
            }
            SliceGamma {
                j,
                z: g.z[j],
                crossings,
                mismatch_width: mismatch_nodes.len() as f64 * g.dx,
                mismatch_nodes,
            }
        })
        .collect();
    Ok(GammaDiagnostics {
        time_index: p0.time_index(),
        gamma_eps,
        slices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BsRow {
    pub x: f64,
    pub p0: f64,
    pub bs_low: f64,
    pub bs_high: f64,
    /// `p0 >= max(bs_low, bs_high) - tolerance`.
    pub dominates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BsComparison {
    pub z: f64,
    pub vol_low: f64,
    pub vol_high: f64,
    pub tolerance: f64,
    pub rows: Vec<BsRow>,
}

impl BsComparison {
    pub fn all_dominate(&self) -> bool {
        self.rows.iter().all(|r| r.dominates)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(["x", "p0", "bs_low_vol", "bs_high_vol", "dominates"]);
        for r in &self.rows {
            t.push(vec![
                fmt_f64(r.x),
                fmt_f64(r.p0),
                fmt_f64(r.bs_low),
                fmt_f64(r.bs_high),
                r.dominates.to_string(),
            ]);
        }
        t
    }
}

/// `P0(t, x, z0)` against Black-Scholes prices at the constant volatilities
/// `d sqrt(z0)` and `u sqrt(z0)` for the time to maturity of `p0`'s level,
/// on every grid `x` in `[x_min, x_max]`.
pub fn compare_bs(
    p0: &Surface,
    params: &ModelParams,
    payoff: &PayoffSpec,
    x_range: (f64, f64),
    tolerance: f64,
) -> Result<BsComparison> {
    let legs = payoff.legs().ok_or_else(|| {
        Error::InvalidPayoff("payoff has no decomposition into vanilla options".into())
    })?;
    let g = p0.grid();
    let z = params.z0;
    let (vol_low, vol_high) = params.vol_bounds_at(z);
    let tau = params.maturity - p0.time();
    let rows = g
        .x
        .iter()
        .filter(|&&x| x >= x_range.0 - 1e-12 && x <= x_range.1 + 1e-12)
        .map(|&x| {
            let v = p0.interpolate(x, z);
            let bs_low = price_legs(&legs, x, vol_low, tau, params.rate);
            let bs_high = price_legs(&legs, x, vol_high, tau, params.rate);
            BsRow {
                x,
                p0: v,
                bs_low,
                bs_high,
                dominates: v >= bs_low.max(bs_high) - tolerance,
            }
        })
        .collect();
    Ok(BsComparison {
        z,
        vol_low,
        vol_high,
        tolerance,
        rows,
    })
}

/// Difference between the guarded and the unguarded (paper-exact) control
/// selection for `P^delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeComparison {
    pub max_abs_diff: SupNorm,
    pub interior_fraction_guarded: f64,
    pub interior_fraction_paper_exact: f64,
}

pub fn compare_optimizer_modes(
    payoff: &PayoffSpec,
    params: &ModelParams,
    grid: &GridSpec,
    config: &SolverConfig,
) -> Result<ModeComparison> {
    let with_mode = |optimizer| SolverConfig { optimizer, ..*config };
    let (guarded, exact) = rayon::join(
        || solve_pdelta(payoff, params, grid, &with_mode(OptimizerMode::Guarded)),
        || solve_pdelta(payoff, params, grid, &with_mode(OptimizerMode::PaperExact)),
    );
    let (guarded, exact) = (guarded?, exact?);
    let diff = guarded.initial().values() - exact.initial().values();
    Ok(ModeComparison {
        max_abs_diff: sup_norm(&diff, guarded.initial(), &Window::full())?,
        interior_fraction_guarded: guarded.interior_fraction(),
        interior_fraction_paper_exact: exact.interior_fraction(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Grid2D;

    fn small() -> GridSpec {
        GridSpec {
            n_x: 41,
            n_z: 13,
            n_t: 10,
            ..GridSpec::paper()
        }
    }

    fn setup() -> (ModelParams, SolverConfig) {
        let p = ModelParams::paper();
        (p, SolverConfig::for_params(&p))
    }

    #[test]
    fn default_window_skips_boundary_rows() {
        let g = Grid2D::new(&small(), 0.25).unwrap();
        let w = Window::default();
        assert!(w.contains(&g, 20, 1));
        assert!(!w.contains(&g, 20, 0));
        assert!(!w.contains(&g, 20, 12));
        assert!(!w.contains(&g, 10, 4), "x = 50 is outside [60, 140]");
        assert!(w.contains(&g, 12, 4) && w.contains(&g, 28, 4));
        assert!(Window::full().contains(&g, 0, 0));
    }

    #[test]
    fn sweep_rejects_bad_delta_lists() {
        let (p, cfg) = setup();
        let b = PayoffSpec::paper_butterfly();
        let w = Window::default();
        for deltas in [&[0.0][..], &[0.0, 0.01], &[0.01], &[0.02, 0.02], &[-0.01, 0.01]] {
            assert!(error_sweep(&b, &p, deltas, &small(), &cfg, &w).is_err(), "{deltas:?}");
        }
    }

    #[test]
    fn sweep_is_order_invariant_and_solves_leading_terms_once() {
        let (p, cfg) = setup();
        let b = PayoffSpec::paper_butterfly();
        let w = Window::default();
        let a = error_sweep(&b, &p, &[0.04, 0.01, 0.02], &small(), &cfg, &w).unwrap();
        let c = error_sweep(&b, &p, &[0.01, 0.02, 0.04], &small(), &cfg, &w).unwrap();
        assert_eq!(a.p0p1_solves, 1);
        assert_eq!(a.pdelta_solves, 3);
        let deltas: Vec<f64> = a.records.iter().map(|r| r.delta).collect();
        assert_eq!(deltas, [0.01, 0.02, 0.04]);
        for (r, s) in a.records.iter().zip(&c.records) {
            assert_eq!(r.error, s.error);
            assert_eq!(r.full_error, s.full_error);
        }
        assert_eq!((a.fit.slope, a.fit.intercept), (c.fit.slope, c.fit.intercept));
        assert_eq!(a.table().rows.len(), 3);
        for r in &a.records {
            let g = Grid2D::new(&small(), 0.25).unwrap();
            assert!(r.error.value >= 0.0 && r.full_error.value >= r.error.value);
            assert_eq!((g.x[r.error.i], g.z[r.error.j]), (r.error.x, r.error.z));
        }
    }

    #[test]
    fn uncorrelated_sweep_measures_distance_to_leading_order() {
        let (p, cfg) = setup();
        let p = p.with_rho(0.0);
        let b = PayoffSpec::paper_butterfly();
        let w = Window::default();
        let deltas = [0.01, 0.04];
        let rep = error_sweep(&b, &p, &deltas, &small(), &cfg, &w).unwrap();
        let p0 = solve_p0p1(&b, &p, &small(), &cfg).unwrap();
        for r in &rep.records {
            let pd = solve_pdelta(&b, &p.with_delta(r.delta), &small(), &cfg).unwrap();
            let diff = pd.initial().values() - p0.p0_initial().values();
            let direct = sup_norm(&diff, pd.initial(), &w).unwrap();
            assert_eq!(r.error.value, direct.value);
        }
        assert!(rep.records[0].error.value < rep.records[1].error.value);
    }

    #[test]
    fn butterfly_gamma_has_two_crossings_at_reference_level() {
        let (p, cfg) = setup();
        let b = PayoffSpec::paper_butterfly();
        let s = solve_p0p1(&b, &p, &small(), &cfg).unwrap();
        let pd = solve_pdelta(&b, &p, &small(), &cfg).unwrap();
        let diag = gamma_diagnostics(s.p0_initial(), pd.initial(), cfg.gamma_eps).unwrap();
        let sl = diag.slice_at(p.z0);
        assert_eq!(sl.crossings.len(), 2, "{:?}", sl.crossings);
        assert!(sl.crossings[0] > 90.0 && sl.crossings[0] < 100.0);
        assert!(sl.crossings[1] > 100.0 && sl.crossings[1] < 110.0);
        assert!(sl.mismatch_width >= 0.0);
        assert_eq!(diag.table().rows.len(), 13);
    }

    #[test]
    fn uncorrelated_call_has_no_gamma_mismatch() {
        // With rho != 0 the central cross stencil puts small negative-gamma
        // ripples into the left wing of P^delta, so exact convexity is only
        // preserved without the mixed term.
        let (p, cfg) = setup();
        let p = p.with_rho(0.0);
        let c = PayoffSpec::Call { strike: 100.0 };
        let s = solve_p0p1(&c, &p, &small(), &cfg).unwrap();
        let pd = solve_pdelta(&c, &p, &small(), &cfg).unwrap();
        let diag = gamma_diagnostics(s.p0_initial(), pd.initial(), cfg.gamma_eps).unwrap();
        assert_eq!(diag.total_mismatch_nodes(), 0);
    }

    #[test]
    fn gamma_diagnostics_reject_mismatched_grids() {
        let (p, cfg) = setup();
        let b = PayoffSpec::paper_butterfly();
        let a = solve_p0p1(&b, &p, &small(), &cfg).unwrap();
        let other = GridSpec { n_x: 21, ..small() };
        let c = solve_p0p1(&b, &p, &other, &cfg).unwrap();
        assert!(gamma_diagnostics(a.p0_initial(), c.p0_initial(), cfg.gamma_eps).is_err());
        assert!(gamma_diagnostics(&a.p0[0], &a.p0[1], cfg.gamma_eps).is_err());
    }

    #[test]
    fn butterfly_dominates_both_black_scholes_curves() {
        let (p, cfg) = setup();
        let b = PayoffSpec::paper_butterfly();
        let s = solve_p0p1(&b, &p, &small(), &cfg).unwrap();
        let cmp = compare_bs(s.p0_initial(), &p, &b, (0.0, 200.0), 1e-3 * p.x0).unwrap();
        assert!(cmp.all_dominate());
        assert_eq!(cmp.rows.len(), 41);
        for r in [&cmp.rows[0], cmp.rows.last().unwrap()] {
            assert!(r.p0.abs() < 1e-4 && r.bs_low.abs() < 1e-4 && r.bs_high.abs() < 1e-4, "{r:?}");
        }
        assert!((cmp.vol_low - 0.15).abs() < 1e-15 && (cmp.vol_high - 0.25).abs() < 1e-15);
    }

    #[test]
    fn convex_payoff_follows_high_volatility_curve() {
        let (p, cfg) = setup();
        let c = PayoffSpec::Call { strike: 100.0 };
        let s = solve_p0p1(&c, &p, &GridSpec::paper(), &cfg).unwrap();
        let cmp = compare_bs(s.p0_initial(), &p, &c, (60.0, 140.0), 1e-3 * p.x0).unwrap();
        for r in &cmp.rows {
            assert!((r.p0 - r.bs_high).abs() < 1e-3 * p.x0, "{r:?}");
        }
    }

    #[test]
    fn comparison_needs_vanilla_decomposition() {
        let (p, cfg) = setup();
        let t = PayoffSpec::Tabulated { x: vec![0.0, 200.0], h: vec![0.0, 1.0] };
        let s = solve_p0p1(&t, &p, &small(), &cfg).unwrap();
        assert!(compare_bs(s.p0_initial(), &p, &t, (60.0, 140.0), 0.1).is_err());
    }

    #[test]
    fn optimizer_modes_coincide_without_correlation() {
        let (p, cfg) = setup();
        let m = compare_optimizer_modes(&PayoffSpec::paper_butterfly(), &p.with_rho(0.0), &small(), &cfg)
            .unwrap();
        assert_eq!(m.max_abs_diff.value, 0.0);
        assert_eq!(m.interior_fraction_guarded, 0.0);
    }

    #[test]
    fn undershoot_reports_minimum() {
        let g = Grid2D::new(&small(), 0.25).unwrap();
        let s = Surface::from_fn(g, 0, |x, z| if x == 50.0 && z == 0.01 { -1.0 } else { x }).unwrap();
        let u = undershoot(&s, 1e-7);
        assert_eq!((u.min_value, u.x, u.z, u.nodes_below), (-1.0, 50.0, 0.01, 1));
    }
}
