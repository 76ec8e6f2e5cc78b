//! Monte Carlo paths of the CIR bound process and of the controlled asset.
//!
//! Random numbers come from ChaCha8 with one stream per path: path `p` uses
//! stream `p` of the generator seeded with `seed`, and step `k` consumes the
//! `2k`-th and `(2k+1)`-th standard normals of that stream. A path is thus a
//! pure function of `(seed, p)` and results do not depend on thread count.
//!
//! Every step draws the same two normals `(e1, e2)` whatever is simulated:
//! the asset uses `dW = e1`, the bound process uses
//! `dW^Z = rho e1 + sqrt(1 - rho^2) e2`. Consequently [`simulate_cir`] and
//! [`simulate_coupled_asset`] produce identical `Z` paths for a given seed.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::export::{fmt_f64, Table};
use crate::params::ModelParams;

/// Volatility slope rule `q` applied to both coupled assets.
///
/// The rule is evaluated on the state `(t, X^delta_t, Z_t)` of the slow
/// system and the resulting `q_t` drives both `X^delta` and the frozen
/// `X^0`, so the two assets share one admissible control process.
#[derive(Clone)]
pub enum Control {
    Constant(f64),
    /// `below` while `X^delta < level`, `above` otherwise.
    Switching { level: f64, below: f64, above: f64 },
    /// Arbitrary feedback `q(t, x, z)`.
    Field(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Control::Constant(q) => write!(f, "Constant({q})"),
            Control::Switching { level, below, above } => {
                write!(f, "Switching {{ level: {level}, below: {below}, above: {above} }}")
            }
            Control::Field(_) => write!(f, "Field(..)"),
        }
    }
}

impl Control {
    pub fn label(&self) -> String {
        match self {
            Control::Constant(q) => format!("constant q={q}"),
            Control::Switching { level, below, above } => {
                format!("switching q={below} below {level}, q={above} above")
            }
            Control::Field(_) => "feedback field".into(),
        }
    }

    fn validate(&self, p: &ModelParams) -> Result<()> {
        let check = |q: f64| {
            if q.is_finite() && q >= p.d && q <= p.u {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "control value {q} outside [{}, {}]",
                    p.d, p.u
                )))
            }
        };
        match *self {
            Control::Constant(q) => check(q),
            Control::Switching { level, below, above } => {
                if !level.is_finite() {
                    return Err(Error::InvalidInput("switching level must be finite".into()));
                }
                check(below)?;
                check(above)
            }
            Control::Field(_) => Ok(()),
        }
    }

    fn eval(&self, t: f64, x: f64, z: f64, p: &ModelParams) -> Result<f64> {
        let q = match self {
            Control::Constant(q) => *q,
            Control::Switching { level, below, above } => {
                if x < *level {
                    *below
                } else {
                    *above
                }
            }
            Control::Field(f) => f(t, x, z),
        };
        if q.is_finite() && q >= p.d && q <= p.u {
            Ok(q)
        } else {
            Err(Error::InvalidInput(format!(
                "control field returned {q} at (t={t}, x={x}, z={z}), outside [{}, {}]",
                p.d, p.u
            )))
        }
    }
}

/// Simulated paths, indexed `(path, step)` with `n_steps + 1` columns.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub times: Vec<f64>,
    pub z_paths: Array2<f64>,
    pub x_paths_delta: Array2<f64>,
    pub x_paths_frozen: Array2<f64>,
    pub seed: u64,
}

fn check_counts(n_steps: usize, n_paths: usize) -> Result<()> {
    if n_steps == 0 || n_paths == 0 {
        return Err(Error::InvalidInput(format!(
            "need at least one step and one path, got n_steps={n_steps}, n_paths={n_paths}"
        )));
    }
    Ok(())
}

fn times(maturity: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps)
        .map(|k| maturity * k as f64 / n_steps as f64)
        .collect()
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// One step's pair of independent standard normals.
fn normals(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Full-truncation Euler state of the bound process.
struct Cir {
    z: f64,
    drift: f64,
    vol: f64,
    theta: f64,
    rho: f64,
    rho_perp: f64,
}

impl Cir {
    fn new(p: &ModelParams) -> Self {
        Cir {
            z: p.z0,
            drift: p.delta * p.kappa,
            vol: p.delta.sqrt(),
            theta: p.theta,
            rho: p.rho,
            rho_perp: (1.0 - p.rho * p.rho).sqrt(),
        }
    }

    /// Current level as seen by coefficients and reports, `Z^+`.
    fn level(&self) -> f64 {
        self.z.max(0.0)
    }

    fn step(&mut self, dt: f64, sqrt_dt: f64, e1: f64, e2: f64) {
        let zp = self.level();
        let dw = sqrt_dt * (self.rho * e1 + self.rho_perp * e2);
        self.z += self.drift * (self.theta - zp) * dt + self.vol * zp.sqrt() * dw;
    }
}

/// CIR paths `dZ = delta kappa (theta - Z) dt + sqrt(delta Z) dW^Z` by
/// full-truncation Euler; the reported values are `max(Z, 0)`.
pub fn simulate_cir(
    params: &ModelParams,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let p = params.validated()?;
    check_counts(n_steps, n_paths)?;
    let dt = p.maturity / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut out = Array2::zeros((n_paths, n_steps + 1));
    out.as_slice_mut()
        .expect("freshly allocated arrays are contiguous")
        .par_chunks_mut(n_steps + 1)
        .enumerate()
        .for_each(|(path, row)| {
            let mut rng = path_rng(seed, path);
            let mut cir = Cir::new(&p);
            row[0] = cir.level();
            for k in 0..n_steps {
                let (e1, e2) = normals(&mut rng);
                cir.step(dt, sqrt_dt, e1, e2);
                row[k + 1] = cir.level();
            }
        });
    Ok(out)
}

/// Coupled state of one path.
struct Coupled {
    cir: Cir,
    x_delta: f64,
    x_frozen: f64,
    sqrt_z0: f64,
}

impl Coupled {
    fn new(p: &ModelParams) -> Self {
        Coupled {
            cir: Cir::new(p),
            x_delta: p.x0,
            x_frozen: p.x0,
            sqrt_z0: p.z0.sqrt(),
        }
    }

    /// Log-Euler step of both assets on the shared increment `e1`, then the
    /// Euler step of `Z`; all coefficients are frozen at the start of the step.
    fn step(&mut self, q: f64, dt: f64, sqrt_dt: f64, r: f64, e1: f64, e2: f64) {
        let s_delta = q * self.cir.level().sqrt();
        let s_frozen = q * self.sqrt_z0;
        self.x_delta *= ((r - 0.5 * s_delta * s_delta) * dt + s_delta * sqrt_dt * e1).exp();
        self.x_frozen *= ((r - 0.5 * s_frozen * s_frozen) * dt + s_frozen * sqrt_dt * e1).exp();
        self.cir.step(dt, sqrt_dt, e1, e2);
    }
}

/// Runs `n_paths` coupled paths, handing each path's states to `record`.
fn run_coupled<T: Send>(
    p: &ModelParams,
    control: &Control,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    record: impl Fn(usize, &Coupled, &mut T) + Sync,
    init: impl Fn() -> T + Sync,
) -> Result<Vec<T>> {
    let dt = p.maturity / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = path_rng(seed, path);
            let mut state = Coupled::new(p);
            let mut acc = init();
            record(0, &state, &mut acc);
            for k in 0..n_steps {
                let t = k as f64 * dt;
                let q = control.eval(t, state.x_delta, state.cir.level(), p)?;
                let (e1, e2) = normals(&mut rng);
                state.step(q, dt, sqrt_dt, p.rate, e1, e2);
                record(k + 1, &state, &mut acc);
            }
            Ok(acc)
        })
        .collect()
}

/// Paths of `X^delta` (vol `q sqrt(Z_t)`), of `X^0` (vol `q sqrt(z0)`) and of
/// `Z`, all driven by the same Brownian increments.
pub fn simulate_coupled_asset(
    params: &ModelParams,
    control: &Control,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathBundle> {
    let p = params.validated()?;
    check_counts(n_steps, n_paths)?;
    control.validate(&p)?;
    let rows = run_coupled(
        &p,
        control,
        n_steps,
        n_paths,
        seed,
        |k, s, acc: &mut [Vec<f64>; 3]| {
            debug_assert_eq!(acc[0].len(), k);
            acc[0].push(s.cir.level());
            acc[1].push(s.x_delta);
            acc[2].push(s.x_frozen);
        },
        || std::array::from_fn(|_| Vec::with_capacity(n_steps + 1)),
    )?;
    let mut z_paths = Array2::zeros((n_paths, n_steps + 1));
    let mut x_paths_delta = z_paths.clone();
    let mut x_paths_frozen = z_paths.clone();
    for (path, [z, xd, xf]) in rows.into_iter().enumerate() {
        z_paths.row_mut(path).assign(&ndarray::ArrayView1::from(&z));
        x_paths_delta.row_mut(path).assign(&ndarray::ArrayView1::from(&xd));
        x_paths_frozen.row_mut(path).assign(&ndarray::ArrayView1::from(&xf));
    }
    Ok(PathBundle {
        times: times(p.maturity, n_steps),
        z_paths,
        x_paths_delta,
        x_paths_frozen,
        seed,
    })
}

/// Terminal pairs `(X^delta_T, X^0_T)` without storing whole paths.
pub fn coupled_terminals(
    params: &ModelParams,
    control: &Control,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let p = params.validated()?;
    check_counts(n_steps, n_paths)?;
    control.validate(&p)?;
    run_coupled(
        &p,
        control,
        n_steps,
        n_paths,
        seed,
        |_, s, acc: &mut (f64, f64)| *acc = (s.x_delta, s.x_frozen),
        || (0.0, 0.0),
    )
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Standard error of the slope. With `y_sd` supplied this propagates the
    /// per-point standard deviations; otherwise it is the residual-based
    /// estimate (NaN with two points).
    pub slope_stderr: f64,
}

/// Least-squares fit; `y_sd`, when given, holds per-point standard
/// deviations of `y` used for the slope standard error.
pub fn fit_line(x: &[f64], y: &[f64], y_sd: Option<&[f64]>) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "line fit needs two or more paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidInput("line fit needs distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let slope_stderr = match y_sd {
        Some(sd) => x
            .iter()
            .zip(sd)
            .map(|(a, s)| ((a - mx) / sxx * s).powi(2))
            .sum::<f64>()
            .sqrt(),
        None if x.len() > 2 => (ss_res / (n - 2.0) / sxx).sqrt(),
        None => f64::NAN,
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
        slope_stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub delta: f64,
    /// Sample mean of `(X^delta_T - X^0_T)^2`.
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateStudy {
    pub control: String,
    /// Sorted by decreasing `delta`.
    pub points: Vec<RatePoint>,
    /// Fit of `ln estimate` against `ln delta`; the slope standard error
    /// uses the delta-method deviations `stderr / estimate`.
    pub fit: LineFit,
}

impl RateStudy {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["delta", "estimate", "stderr"]);
        for pt in &self.points {
            t.push_f64(&[pt.delta, pt.estimate, pt.stderr]);
        }
        t
    }
}

/// Estimates `E[(X^delta_T - X^0_T)^2]` per `delta` and per control, with
/// the same seed (common random numbers) at every `delta`, and fits the
/// log-log slope.
pub fn coupling_rate_study(
    params: &ModelParams,
    deltas: &[f64],
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    controls: &[Control],
) -> Result<Vec<RateStudy>> {
    if deltas.len() < 2 {
        return Err(Error::InvalidInput("rate study needs at least two delta values".into()));
    }
    if let Some(&bad) = deltas.iter().find(|&&d| !(d.is_finite() && d > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "delta values must be positive (log-log fit), got {bad}"
        )));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("delta values must be distinct".into()));
    }
    controls
        .iter()
        .map(|control| {
            let points = sorted
                .iter()
                .map(|&delta| {
                    let terminals = coupled_terminals(
                        &params.with_delta(delta),
                        control,
                        n_steps,
                        n_paths,
                        seed,
                    )
                    .map_err(|e| e.at_delta(delta))?;
                    let sq: Vec<f64> = terminals.iter().map(|(a, b)| (a - b).powi(2)).collect();
                    let (estimate, stderr) = mean_stderr(&sq);
                    Ok(RatePoint {
                        delta,
                        estimate,
                        stderr,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let x: Vec<f64> = points.iter().map(|p| p.delta.ln()).collect();
            let y: Vec<f64> = points.iter().map(|p| p.estimate.ln()).collect();
            let sd: Vec<f64> = points.iter().map(|p| p.stderr / p.estimate).collect();
            let fit = fit_line(&x, &y, Some(&sd))?;
            Ok(RateStudy {
                control: control.label(),
                points,
                fit,
            })
        })
        .collect()
}

/// Long table `(time, path_id, Z, lower, upper)` with the volatility band
/// `[d sqrt(Z), u sqrt(Z)]`.
pub fn bounds_table(times: &[f64], z_paths: &Array2<f64>, d: f64, u: f64) -> Table {
    let mut t = Table::new(["time", "path_id", "Z", "lower", "upper"]);
    for (path, row) in z_paths.outer_iter().enumerate() {
        for (&time, &z) in times.iter().zip(row.iter()) {
            let s = z.sqrt();
            t.push(vec![
                fmt_f64(time),
                path.to_string(),
                fmt_f64(z),
                fmt_f64(d * s),
                fmt_f64(u * s),
            ]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> ModelParams {
        ModelParams::paper()
    }

    #[test]
    fn frozen_process_when_delta_is_zero() {
        let z = simulate_cir(&paper().with_delta(0.0), 50, 20, 7).unwrap();
        assert!(z.iter().all(|&v| v == 0.04));
    }

    #[test]
    fn cir_mean_matches_closed_form() {
        // Start away from theta so the mean actually moves.
        let p = ModelParams {
            z0: 0.02,
            delta: 0.5,
            ..paper()
        };
        let n_paths = 100_000;
        let z = simulate_cir(&p, 100, n_paths, 11).unwrap();
        let terminal: Vec<f64> = z.column(100).to_vec();
        let (mean, se) = mean_stderr(&terminal);
        let exact = p.theta + (p.z0 - p.theta) * (-p.delta * p.kappa * p.maturity).exp();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn reported_levels_nonnegative() {
        // Start next to zero with the fastest admissible clock so the Euler
        // scheme overshoots below zero on some paths.
        let p = ModelParams {
            z0: 0.001,
            delta: 1.0,
            ..paper()
        };
        let z = simulate_cir(&p, 200, 500, 3).unwrap();
        assert!(z.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn identical_seeds_reproduce_bitwise() {
        let a = simulate_cir(&paper(), 30, 40, 99).unwrap();
        let b = simulate_cir(&paper(), 30, 40, 99).unwrap();
        let c = simulate_cir(&paper(), 30, 40, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn paths_independent_of_bundle_size() {
        let a = simulate_cir(&paper(), 30, 5, 1).unwrap();
        let b = simulate_cir(&paper(), 30, 50, 1).unwrap();
        assert_eq!(a.row(3), b.row(3));
    }

    #[test]
    fn cir_and_coupled_share_z_paths() {
        let z = simulate_cir(&paper(), 25, 10, 5).unwrap();
        let b = simulate_coupled_asset(&paper(), &Control::Constant(1.0), 25, 10, 5).unwrap();
        assert_eq!(z, b.z_paths);
        assert_eq!(b.times.len(), 26);
        assert_eq!(*b.times.last().unwrap(), 0.25);
    }

    #[test]
    fn coupled_paths_identical_when_delta_is_zero() {
        let b = simulate_coupled_asset(&paper().with_delta(0.0), &Control::Constant(1.25), 40, 30, 2)
            .unwrap();
        assert_eq!(b.x_paths_delta, b.x_paths_frozen);
    }

    #[test]
    fn asset_is_a_martingale() {
        let t = coupled_terminals(&paper().with_delta(0.0), &Control::Constant(1.25), 20, 100_000, 4)
            .unwrap();
        let xs: Vec<f64> = t.iter().map(|v| v.0).collect();
        let (mean, se) = mean_stderr(&xs);
        assert!((mean - 100.0).abs() < 3.0 * se, "{mean} (se {se})");
    }

    #[test]
    fn coupling_error_small_relative_to_spot() {
        let t = coupled_terminals(&paper(), &Control::Constant(0.75), 50, 20_000, 8).unwrap();
        let sq: Vec<f64> = t.iter().map(|(a, b)| (a - b).powi(2)).collect();
        let (m, _) = mean_stderr(&sq);
        assert!(m.is_finite() && m > 0.0 && m < 1e-2 * 100.0 * 100.0, "{m}");
    }

    #[test]
    fn increment_correlation_matches_rho() {
        // Recover (e1, dW^Z) from a single step of the two processes; the
        // slow clock keeps Z far from the truncation at zero.
        let p = paper().with_delta(1e-4);
        let n = 50_000;
        let b = simulate_coupled_asset(&p, &Control::Constant(1.0), 1, n, 21).unwrap();
        let dt: f64 = p.maturity;
        let s = p.z0.sqrt();
        let mut pairs = Vec::with_capacity(n);
        for path in 0..n {
            let x1 = b.x_paths_frozen[[path, 1]];
            let e1 = ((x1 / p.x0).ln() + 0.5 * s * s * dt) / (s * dt.sqrt());
            let z1 = b.z_paths[[path, 1]];
            let raw = z1 - p.z0 - p.delta * p.kappa * (p.theta - p.z0) * dt;
            let ez = raw / (p.delta.sqrt() * s * dt.sqrt());
            pairs.push((e1, ez));
        }
        let m = pairs.len() as f64;
        let (ma, mb) = pairs.iter().fold((0.0, 0.0), |acc, v| (acc.0 + v.0 / m, acc.1 + v.1 / m));
        let cov = pairs.iter().map(|v| (v.0 - ma) * (v.1 - mb)).sum::<f64>() / m;
        let va = pairs.iter().map(|v| (v.0 - ma).powi(2)).sum::<f64>() / m;
        let vb = pairs.iter().map(|v| (v.1 - mb).powi(2)).sum::<f64>() / m;
        let corr = cov / (va * vb).sqrt();
        let se = (1.0 - p.rho * p.rho) / m.sqrt();
        assert!((corr - p.rho).abs() < 3.0 * se, "{corr} vs {} (se {se})", p.rho);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(simulate_cir(&paper(), 0, 10, 1).is_err());
        assert!(simulate_cir(&paper(), 10, 0, 1).is_err());
        assert!(simulate_coupled_asset(&paper(), &Control::Constant(2.0), 10, 10, 1).is_err());
        let field = Control::Field(Arc::new(|_, _, _| 5.0));
        assert!(simulate_coupled_asset(&paper(), &field, 10, 10, 1).is_err());
        let c = [Control::Constant(1.0)];
        assert!(coupling_rate_study(&paper(), &[0.01, 0.0], 10, 10, 1, &c).is_err());
        assert!(coupling_rate_study(&paper(), &[0.01, 0.01], 10, 10, 1, &c).is_err());
    }

    #[test]
    fn switching_and_field_rules_agree() {
        let p = paper();
        let sw = Control::Switching { level: 100.0, below: 0.75, above: 1.25 };
        let field = Control::Field(Arc::new(|_, x, _| if x < 100.0 { 0.75 } else { 1.25 }));
        let a = coupled_terminals(&p, &sw, 20, 200, 6).unwrap();
        let b = coupled_terminals(&p, &field, 20, 200, 6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn slope_stderr_shrinks_with_more_paths() {
        let deltas = [0.04, 0.02, 0.01, 0.005];
        let c = [Control::Constant(1.25)];
        let small = coupling_rate_study(&paper(), &deltas, 20, 10_000, 5, &c).unwrap();
        let large = coupling_rate_study(&paper(), &deltas, 20, 20_000, 5, &c).unwrap();
        let ratio = large[0].fit.slope_stderr / small[0].fit.slope_stderr;
        assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y, None).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0], None).is_err());
    }

    #[test]
    fn bounds_table_layout() {
        let z = Array2::from_shape_vec((1, 2), vec![0.04, 0.09]).unwrap();
        let t = bounds_table(&[0.0, 1.0], &z, 0.75, 1.25);
        assert_eq!(t.header, ["time", "path_id", "Z", "lower", "upper"]);
        assert_eq!(t.rows[1][1], "0");
        assert_eq!(t.rows[1][4].parse::<f64>().unwrap(), 1.25 * 0.3);
    }
}
