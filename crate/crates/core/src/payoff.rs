//! Terminal payoffs.

use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Grid2D, GridSpec, ModelParams, SolverConfig, Surface, TerminalSampling};
use crate::solver_p0p1::solve_p0_slice;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PayoffSpec {
    /// Long one call at `k1`, long one at `k3`, short calls at `k2` sized so
    /// the payoff peaks at `k2 - k1` and vanishes beyond `k3`. For equally
    /// spaced strikes this is `(x-k1)+ - 2(x-k2)+ + (x-k3)+`.
    Butterfly { k1: f64, k2: f64, k3: f64 },
    Call { strike: f64 },
    Put { strike: f64 },
    /// `min(x, K)`, a concave payoff.
    CappedLinear { strike: f64 },
    /// Piecewise-linear through `(x[k], h[k])`, flat outside the table.
    Tabulated { x: Vec<f64>, h: Vec<f64> },
}

/// A static position in vanilla instruments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Leg {
    Cash(f64),
    Call { strike: f64, weight: f64 },
    Put { strike: f64, weight: f64 },
}

impl PayoffSpec {
    /// The butterfly used in the numerical study, strikes 90/100/110.
    pub fn paper_butterfly() -> Self {
        PayoffSpec::Butterfly {
            k1: 90.0,
            k2: 100.0,
            k3: 110.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPayoff(m));
        let strike_ok = |k: f64| k.is_finite() && k > 0.0;
        match *self {
            PayoffSpec::Butterfly { k1, k2, k3 } => {
                if !(strike_ok(k1) && strike_ok(k2) && strike_ok(k3)) {
                    return bad(format!("strikes must be positive: {k1}, {k2}, {k3}"));
                }
                if !(k1 < k2 && k2 < k3) {
                    return bad(format!("strikes must satisfy k1 < k2 < k3: {k1}, {k2}, {k3}"));
                }
            }
            PayoffSpec::Call { strike }
            | PayoffSpec::Put { strike }
            | PayoffSpec::CappedLinear { strike } => {
                if !strike_ok(strike) {
                    return bad(format!("strike must be positive, got {strike}"));
                }
            }
            PayoffSpec::Tabulated { ref x, ref h } => {
                if x.len() != h.len() {
                    return bad(format!("{} abscissae but {} values", x.len(), h.len()));
                }
                if x.is_empty() {
                    return bad("empty table".into());
                }
                if x.iter().chain(h.iter()).any(|v| !v.is_finite()) {
                    return bad("table contains non-finite entries".into());
                }
                if x.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("table abscissae must be strictly increasing".into());
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let pos = |v: f64| v.max(0.0);
        match *self {
            PayoffSpec::Butterfly { k1, k2, k3 } => {
                let (w1, w2, w3) = butterfly_weights(k1, k2, k3);
                w1 * pos(x - k1) + w2 * pos(x - k2) + w3 * pos(x - k3)
            }
            PayoffSpec::Call { strike } => pos(x - strike),
            PayoffSpec::Put { strike } => pos(strike - x),
            PayoffSpec::CappedLinear { strike } => x.min(strike),
            PayoffSpec::Tabulated { x: ref xs, ref h } => interpolate_table(xs, h, x),
        }
    }

    /// Abscissae where the payoff's slope changes; it is affine between them.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            PayoffSpec::Butterfly { k1, k2, k3 } => vec![*k1, *k2, *k3],
            PayoffSpec::Call { strike }
            | PayoffSpec::Put { strike }
            | PayoffSpec::CappedLinear { strike } => vec![*strike],
            PayoffSpec::Tabulated { x, .. } => x.clone(),
        }
    }

    /// Exact mean of the payoff over `[x - width/2, x + width/2]`.
    pub fn cell_average(&self, x: f64, width: f64) -> f64 {
        if width <= 0.0 {
            return self.evaluate(x);
        }
        let (a, b) = (x - 0.5 * width, x + 0.5 * width);
        let mut pts = vec![a];
        pts.extend(self.breakpoints().into_iter().filter(|&k| k > a && k < b));
        pts.push(b);
        pts.sort_by(f64::total_cmp);
        // Trapezoids are exact on each affine piece.
        let integral: f64 = pts
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.evaluate(w[0]) + self.evaluate(w[1])))
            .sum();
        integral / width
    }

    /// Decomposition into cash and vanilla options, when one exists.
    pub fn legs(&self) -> Option<Vec<Leg>> {
        match *self {
            PayoffSpec::Butterfly { k1, k2, k3 } => {
                let (w1, w2, w3) = butterfly_weights(k1, k2, k3);
                Some(vec![
                    Leg::Call { strike: k1, weight: w1 },
                    Leg::Call { strike: k2, weight: w2 },
                    Leg::Call { strike: k3, weight: w3 },
                ])
            }
            PayoffSpec::Call { strike } => Some(vec![Leg::Call { strike, weight: 1.0 }]),
            PayoffSpec::Put { strike } => Some(vec![Leg::Put { strike, weight: 1.0 }]),
            PayoffSpec::CappedLinear { strike } => Some(vec![
                Leg::Cash(strike),
                Leg::Put { strike, weight: -1.0 },
            ]),
            PayoffSpec::Tabulated { .. } => None,
        }
    }

    /// Loads a two-column `x,h` CSV. A non-numeric first row is treated as a
    /// header.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let (mut x, mut h) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::InvalidPayoff(format!("row {line}: expected two columns")));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    x.push(a);
                    h.push(b);
                }
                _ if line == 0 => continue,
                _ => {
                    return Err(Error::InvalidPayoff(format!(
                        "row {line}: cannot parse {:?}",
                        rec
                    )))
                }
            }
        }
        let spec = PayoffSpec::Tabulated { x, h };
        spec.validate()?;
        Ok(spec)
    }
}

fn butterfly_weights(k1: f64, k2: f64, k3: f64) -> (f64, f64, f64) {
    let wing = k3 - k2;
    (1.0, -(k3 - k1) / wing, (k2 - k1) / wing)
}

fn interpolate_table(xs: &[f64], hs: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return hs[0];
    }
    if x >= xs[n - 1] {
        return hs[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let w = (x - x0) / (x1 - x0);
    hs[k - 1] + w * (hs[k] - hs[k - 1])
}

/// Payoff evaluated at every node, constant in `z`, placed at the terminal
/// time level.
pub fn terminal_surface(spec: &PayoffSpec, grid: &Arc<Grid2D>) -> Result<Surface> {
    terminal_surface_with(spec, grid, TerminalSampling::Point)
}

/// [`terminal_surface`] with a choice of sampling.
pub fn terminal_surface_with(
    spec: &PayoffSpec,
    grid: &Arc<Grid2D>,
    sampling: TerminalSampling,
) -> Result<Surface> {
    spec.validate()?;
    let h = terminal_values(spec, &grid.x, grid.dx, sampling);
    let values = Array2::from_shape_fn(grid.shape(), |(i, _)| h[i]);
    Surface::new(values, grid.clone(), grid.n_t())
}

/// Terminal values on the nodes `x` with spacing `dx`.
pub fn terminal_values(spec: &PayoffSpec, x: &[f64], dx: f64, sampling: TerminalSampling) -> Vec<f64> {
    match sampling {
        TerminalSampling::Point => x.iter().map(|&v| spec.evaluate(v)).collect(),
        TerminalSampling::CellAverage => x.iter().map(|&v| spec.cell_average(v, dx)).collect(),
    }
}

/// Smooths a payoff by evolving it under the leading-order worst-case
/// equation for a short time `eps` at the level `z0`, and returns the result
/// as a tabulated payoff on the x-grid of `grid`.
///
/// The number of steps is `max(1, round(eps / dt))` with `dt` taken from
/// `grid` and `params.maturity`. The evolution starts from the point values
/// `h(x_i)` whatever `config.terminal` says, so the result tends to the raw
/// payoff as `eps -> 0`.
pub fn regularize(
    spec: &PayoffSpec,
    params: &ModelParams,
    eps: f64,
    grid: &GridSpec,
    config: &SolverConfig,
) -> Result<PayoffSpec> {
    spec.validate()?;
    let params = params.validated()?;
    config.validate()?;
    if !(eps > 0.0 && eps <= params.maturity / 10.0) {
        return Err(Error::InvalidInput(format!(
            "regularization time {eps} outside (0, T/10]"
        )));
    }
    let g = Grid2D::new(&grid.single_slice(params.z0), params.maturity)?;
    let steps = ((eps / g.dt).round() as usize).max(1);
    let h = terminal_values(spec, &g.x, g.dx, TerminalSampling::Point);
    let smoothed = solve_p0_slice(&h, &g.x, params.z0, eps, steps, &params, config)?;
    Ok(PayoffSpec::Tabulated {
        x: g.x.clone(),
        h: smoothed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn butterfly_values() {
        let b = PayoffSpec::paper_butterfly();
        assert_eq!(b.evaluate(100.0), 10.0);
        assert_eq!(b.evaluate(90.0), 0.0);
        assert_eq!(b.evaluate(110.0), 0.0);
        assert_eq!(b.evaluate(95.0), 5.0);
        assert_eq!(b.evaluate(150.0), 0.0);
        assert_eq!(b.evaluate(0.0), 0.0);
    }

    #[test]
    fn vanilla_values() {
        assert_eq!(PayoffSpec::Call { strike: 100.0 }.evaluate(120.0), 20.0);
        assert_eq!(PayoffSpec::Put { strike: 100.0 }.evaluate(120.0), 0.0);
        assert_eq!(PayoffSpec::CappedLinear { strike: 100.0 }.evaluate(120.0), 100.0);
        assert_eq!(PayoffSpec::CappedLinear { strike: 100.0 }.evaluate(70.0), 70.0);
    }

    #[test]
    fn cell_average_of_butterfly() {
        let b = PayoffSpec::paper_butterfly();
        // Peak cell [99, 101]: the tent loses a triangle of area 1.
        assert!((b.cell_average(100.0, 2.0) - 9.5).abs() < 1e-14);
        // Affine cells keep their midpoint value.
        assert!((b.cell_average(95.0, 2.0) - 5.0).abs() < 1e-14);
        assert_eq!(b.cell_average(150.0, 2.0), 0.0);
        assert_eq!(b.cell_average(95.3, 0.0), b.evaluate(95.3));
        let c = PayoffSpec::Call { strike: 100.0 };
        assert!((c.cell_average(100.0, 2.0) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn point_and_cell_sampling_differ_only_near_kinks() {
        let g = Grid2D::new(&GridSpec::paper(), 0.25).unwrap();
        let b = PayoffSpec::paper_butterfly();
        let point = terminal_surface(&b, &g).unwrap();
        let cell = terminal_surface_with(&b, &g, TerminalSampling::CellAverage).unwrap();
        for (i, &x) in g.x.iter().enumerate() {
            let near = [90.0, 100.0, 110.0].iter().any(|k| (x - k).abs() < g.dx);
            let d = (point.at(i, 0) - cell.at(i, 0)).abs();
            if near {
                assert!(d <= 0.25 * g.dx * 2.0 + 1e-12, "{x}: {d}");
            } else {
                assert!(d < 1e-12, "{x}: {d}");
            }
        }
    }

    proptest! {
        #[test]
        fn cell_average_conserves_area(c in 60.0..140.0f64, w in 0.1..5.0f64) {
            // Averages over the tiles of a covering partition integrate the payoff exactly.
            let b = PayoffSpec::paper_butterfly();
            let n = 400;
            let start = c - 0.5 * w * n as f64;
            let tiled: f64 = (0..n).map(|k| b.cell_average(start + w * (k as f64 + 0.5), w) * w).sum();
            let exact = 100.0; // area of the 90/100/110 tent
            prop_assume!(start < 90.0 && start + w * n as f64 > 110.0);
            prop_assert!((tiled - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn asymmetric_butterfly_is_a_tent() {
        let b = PayoffSpec::Butterfly { k1: 90.0, k2: 100.0, k3: 130.0 };
        assert_eq!(b.evaluate(100.0), 10.0);
        assert!(b.evaluate(130.0).abs() < 1e-12);
        assert!(b.evaluate(200.0).abs() < 1e-12);
        assert!((b.evaluate(115.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_interpolates_and_extrapolates_flat() {
        let t = PayoffSpec::Tabulated {
            x: vec![0.0, 10.0, 20.0],
            h: vec![1.0, 3.0, 2.0],
        };
        assert_eq!(t.evaluate(-5.0), 1.0);
        assert_eq!(t.evaluate(5.0), 2.0);
        assert_eq!(t.evaluate(10.0), 3.0);
        assert_eq!(t.evaluate(15.0), 2.5);
        assert_eq!(t.evaluate(99.0), 2.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for s in [
            PayoffSpec::Butterfly { k1: 100.0, k2: 90.0, k3: 110.0 },
            PayoffSpec::Butterfly { k1: -1.0, k2: 90.0, k3: 110.0 },
            PayoffSpec::Call { strike: 0.0 },
            PayoffSpec::Tabulated { x: vec![0.0, 0.0], h: vec![1.0, 2.0] },
            PayoffSpec::Tabulated { x: vec![0.0, 1.0], h: vec![1.0] },
            PayoffSpec::Tabulated { x: vec![0.0, 1.0], h: vec![1.0, f64::NAN] },
        ] {
            assert!(s.validate().is_err(), "{s:?}");
        }
    }

    #[test]
    fn terminal_surface_is_constant_in_z() {
        let g = Grid2D::new(&GridSpec::paper(), 0.25).unwrap();
        let s = terminal_surface(&PayoffSpec::paper_butterfly(), &g).unwrap();
        assert_eq!(s.time_index(), 20);
        let i = g.nearest_x(100.0);
        assert!(s.values().row(i).iter().all(|&v| v == 10.0));

        let g1 = Grid2D::new(&GridSpec::paper().single_slice(0.04), 0.25).unwrap();
        let s1 = terminal_surface(&PayoffSpec::Call { strike: 100.0 }, &g1).unwrap();
        assert_eq!(s1.values().dim(), (101, 1));
        for (i, &x) in g1.x.iter().enumerate() {
            assert_eq!(s1.at(i, 0), (x - 100.0).max(0.0));
        }
    }

    #[test]
    fn tabulated_copy_matches_analytic_on_nodes() {
        let g = Grid2D::new(&GridSpec::paper(), 0.25).unwrap();
        let b = PayoffSpec::paper_butterfly();
        let xs: Vec<f64> = (0..=400).map(|k| k as f64 * 0.5).collect();
        let hs = xs.iter().map(|&x| b.evaluate(x)).collect();
        let tab = PayoffSpec::Tabulated { x: xs, h: hs };
        let a = terminal_surface(&b, &g).unwrap();
        let t = terminal_surface(&tab, &g).unwrap();
        assert!(a.max_abs_diff(&t).unwrap() < 1e-12);
    }

    #[test]
    fn regularized_butterfly_peak_drops() {
        let p = ModelParams::paper();
        let grid = GridSpec::paper();
        let cfg = SolverConfig::for_params(&p);
        let dt = p.maturity / grid.n_t as f64;
        let r = regularize(&PayoffSpec::paper_butterfly(), &p, dt, &grid, &cfg).unwrap();
        let PayoffSpec::Tabulated { h, .. } = &r else { panic!() };
        let peak = h.iter().cloned().fold(f64::MIN, f64::max);
        assert!(peak < 10.0 && peak > 9.0, "peak {peak}");
    }

    #[test]
    fn regularized_call_dominates_intrinsic() {
        let p = ModelParams::paper();
        let grid = GridSpec::paper();
        let cfg = SolverConfig::for_params(&p);
        let call = PayoffSpec::Call { strike: 100.0 };
        let dt = p.maturity / grid.n_t as f64;
        let PayoffSpec::Tabulated { x, h } = regularize(&call, &p, dt, &grid, &cfg).unwrap() else {
            panic!()
        };
        for (xi, hi) in x.iter().zip(&h) {
            assert!(*hi >= call.evaluate(*xi) - 1e-12, "x={xi}: {hi}");
        }
    }

    #[test]
    fn regularization_vanishes_with_eps() {
        let p = ModelParams::paper();
        let grid = GridSpec::paper();
        let cfg = SolverConfig::for_params(&p);
        let b = PayoffSpec::paper_butterfly();
        let mut prev = f64::INFINITY;
        for eps in [1e-3, 1e-5, 1e-7] {
            let PayoffSpec::Tabulated { x, h } = regularize(&b, &p, eps, &grid, &cfg).unwrap() else {
                panic!()
            };
            let err = x
                .iter()
                .zip(&h)
                .map(|(x, h)| (h - b.evaluate(*x)).abs())
                .fold(0.0, f64::max);
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-3, "{prev}");
        assert!(regularize(&b, &p, 0.0, &grid, &cfg).is_err());
        assert!(regularize(&b, &p, 0.1, &grid, &cfg).is_err());
    }

    proptest! {
        #[test]
        fn butterfly_bounded_and_symmetric(a in 0.0..60.0f64) {
            let b = PayoffSpec::paper_butterfly();
            let v = b.evaluate(100.0 + a);
            prop_assert!((0.0..=10.0).contains(&v));
            prop_assert!((v - b.evaluate(100.0 - a)).abs() < 1e-12);
        }

        #[test]
        fn positively_homogeneous(lambda in 0.1..10.0f64, x in 0.0..300.0f64) {
            let specs = [
                (PayoffSpec::paper_butterfly(), PayoffSpec::Butterfly { k1: 90.0 * lambda, k2: 100.0 * lambda, k3: 110.0 * lambda }),
                (PayoffSpec::Call { strike: 100.0 }, PayoffSpec::Call { strike: 100.0 * lambda }),
                (PayoffSpec::Put { strike: 100.0 }, PayoffSpec::Put { strike: 100.0 * lambda }),
            ];
            for (s, scaled) in specs {
                let lhs = scaled.evaluate(lambda * x);
                let rhs = lambda * s.evaluate(x);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn legs_reproduce_payoff(x in 0.0..300.0f64) {
            for s in [
                PayoffSpec::paper_butterfly(),
                PayoffSpec::Butterfly { k1: 80.0, k2: 95.0, k3: 130.0 },
                PayoffSpec::CappedLinear { strike: 100.0 },
                PayoffSpec::Put { strike: 100.0 },
            ] {
                let v: f64 = s.legs().unwrap().iter().map(|l| match *l {
                    Leg::Cash(c) => c,
                    Leg::Call { strike, weight } => weight * (x - strike).max(0.0),
                    Leg::Put { strike, weight } => weight * (strike - x).max(0.0),
                }).sum();
                prop_assert!((v - s.evaluate(x)).abs() < 1e-9);
            }
        }
    }
}
