//! One function per subcommand. Each returns the CSV tables to write and a
//! JSON summary for the manifest.

use serde_json::{json, Value};
use uvm::analysis::{compare_bs, error_sweep, gamma_diagnostics, undershoot};
use uvm::export::{fmt_f64, surface_table, Table};
use uvm::montecarlo::{bounds_table, coupling_rate_study, simulate_cir, Control};
use uvm::solver_p0p1::{solve_p0p1, P0P1Solution};
use uvm::solver_pdelta::{solve_pdelta, PdeltaSolution};
use uvm::Surface;

use crate::config::RunConfig;
use crate::error::CliError;

pub struct Outcome {
    pub tables: Vec<(&'static str, Table)>,
    pub summary: Value,
}

fn at_spot(s: &Surface, c: &RunConfig) -> f64 {
    s.interpolate(c.model.x0, c.model.z0)
}

fn leading(c: &RunConfig) -> Result<P0P1Solution, CliError> {
    Ok(solve_p0p1(&c.payoff, &c.model, &c.grid, &c.solver)?)
}

fn full(c: &RunConfig) -> Result<PdeltaSolution, CliError> {
    Ok(solve_pdelta(&c.payoff, &c.model, &c.grid, &c.solver)?)
}

pub fn solve_p0(c: &RunConfig) -> Result<Outcome, CliError> {
    let s = leading(c)?;
    Ok(Outcome {
        tables: vec![("p0.csv", surface_table(s.p0_initial()))],
        summary: json!({ "p0_at_x0_z0": at_spot(s.p0_initial(), c) }),
    })
}

pub fn solve_p1(c: &RunConfig) -> Result<Outcome, CliError> {
    let s = leading(c)?;
    let root = c.model.delta.sqrt();
    let first_order = Surface::new(
        s.p0_initial().values() + &(s.p1_initial().values() * root),
        s.grid.clone(),
        0,
    )?;
    Ok(Outcome {
        tables: vec![
            ("p0.csv", surface_table(s.p0_initial())),
            ("p1.csv", surface_table(s.p1_initial())),
            ("first_order.csv", surface_table(&first_order)),
        ],
        summary: json!({
            "p0_at_x0_z0": at_spot(s.p0_initial(), c),
            "p1_at_x0_z0": at_spot(s.p1_initial(), c),
            "first_order_at_x0_z0": at_spot(&first_order, c),
        }),
    })
}

pub fn solve_pdelta_cmd(c: &RunConfig) -> Result<Outcome, CliError> {
    let s = full(c)?;
    let g = &s.grid;
    let mut controls = Table::new(["x", "z", "q", "tag"]);
    for ((i, j), &q) in s.q_star_delta[0].indexed_iter() {
        controls.push(vec![
            fmt_f64(g.x[i]),
            fmt_f64(g.z[j]),
            fmt_f64(q),
            s.candidate_tags[0][[i, j]].label().to_string(),
        ]);
    }
    let dip = undershoot(s.initial(), 1e-7);
    Ok(Outcome {
        tables: vec![("p_delta.csv", surface_table(s.initial())), ("controls.csv", controls)],
        summary: json!({
            "delta": s.delta,
            "p_delta_at_x0_z0": at_spot(s.initial(), c),
            "interior_candidate_fraction": s.interior_fraction(),
            "min_p_delta": dip.min_value,
            "nodes_below_minus_1e-7": dip.nodes_below,
        }),
    })
}

pub fn sweep_error(c: &RunConfig) -> Result<Outcome, CliError> {
    let r = error_sweep(
        &c.payoff,
        &c.model,
        &c.sweep.deltas,
        &c.grid,
        &c.solver,
        &c.sweep.window,
    )?;
    let (inversions, worst) = r.inversions();
    Ok(Outcome {
        tables: vec![("sweep.csv", r.table())],
        summary: json!({
            "slope": r.fit.slope,
            "intercept": r.fit.intercept,
            "r_squared": r.fit.r_squared,
            "fit_points": r.fit_points,
            "inversions": inversions,
            "largest_inversion": worst,
            "p0p1_solves": r.p0p1_solves,
            "pdelta_solves": r.pdelta_solves,
        }),
    })
}

pub fn simulate_bounds(c: &RunConfig) -> Result<Outcome, CliError> {
    let z = simulate_cir(&c.model, c.mc.n_steps, c.mc.bounds_paths, c.mc.seed)?;
    let times: Vec<f64> = (0..=c.mc.n_steps)
        .map(|k| c.model.maturity * k as f64 / c.mc.n_steps as f64)
        .collect();
    let terminal = z.column(c.mc.n_steps);
    Ok(Outcome {
        tables: vec![("bounds.csv", bounds_table(&times, &z, c.model.d, c.model.u))],
        summary: json!({
            "paths": c.mc.bounds_paths,
            "steps": c.mc.n_steps,
            "terminal_z_min": terminal.iter().cloned().fold(f64::INFINITY, f64::min),
            "terminal_z_max": terminal.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }),
    })
}

pub fn coupling_rate(c: &RunConfig) -> Result<Outcome, CliError> {
    let controls: Vec<Control> = c.mc.controls.iter().map(|s| s.to_control()).collect();
    if controls.is_empty() {
        return Err(CliError::Config("mc.controls is empty".into()));
    }
    let studies = coupling_rate_study(
        &c.model,
        &c.mc.rate_deltas,
        c.mc.n_steps,
        c.mc.n_paths,
        c.mc.seed,
        &controls,
    )?;
    let mut points = Table::new(["control", "delta", "estimate", "stderr"]);
    let mut fits = Table::new(["control", "slope", "slope_stderr", "intercept", "r_squared"]);
    for s in &studies {
        for p in &s.points {
            points.push(vec![
                s.control.clone(),
                fmt_f64(p.delta),
                fmt_f64(p.estimate),
                fmt_f64(p.stderr),
            ]);
        }
        fits.push(vec![
            s.control.clone(),
            fmt_f64(s.fit.slope),
            fmt_f64(s.fit.slope_stderr),
            fmt_f64(s.fit.intercept),
            fmt_f64(s.fit.r_squared),
        ]);
    }
    let summary: Vec<Value> = studies
        .iter()
        .map(|s| json!({ "control": s.control, "slope": s.fit.slope, "slope_stderr": s.fit.slope_stderr }))
        .collect();
    Ok(Outcome {
        tables: vec![("coupling_rate.csv", points), ("coupling_fit.csv", fits)],
        summary: json!({ "studies": summary }),
    })
}

pub fn compare_bs_cmd(c: &RunConfig) -> Result<Outcome, CliError> {
    let s = leading(c)?;
    let cmp = compare_bs(
        s.p0_initial(),
        &c.model,
        &c.payoff,
        (c.compare.x_min, c.compare.x_max),
        c.compare.tolerance,
    )?;
    Ok(Outcome {
        summary: json!({
            "all_dominate": cmp.all_dominate(),
            "rows": cmp.rows.len(),
            "vol_low": cmp.vol_low,
            "vol_high": cmp.vol_high,
        }),
        tables: vec![("compare_bs.csv", cmp.table())],
    })
}

pub fn gamma_diag(c: &RunConfig) -> Result<Outcome, CliError> {
    let (lead, pd) = rayon::join(|| leading(c), || full(c));
    let (lead, pd) = (lead?, pd?);
    let diag = gamma_diagnostics(lead.p0_initial(), pd.initial(), c.solver.gamma_eps)?;
    let at_z0 = diag.slice_at(c.model.z0);
    Ok(Outcome {
        summary: json!({
            "delta": pd.delta,
            "z": at_z0.z,
            "crossings_at_z0": at_z0.crossings,
            "mismatch_width_at_z0": at_z0.mismatch_width,
            "total_mismatch_nodes": diag.total_mismatch_nodes(),
        }),
        tables: vec![("gamma.csv", diag.table())],
    })
}
