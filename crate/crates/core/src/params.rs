//! Model parameters, discretization grids, surfaces and solver settings.
//!
//! Everything here is an immutable value type once constructed. Solvers
//! produce new [`Surface`]s per time level instead of mutating old ones, so
//! surfaces and grids can be shared freely between threads.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Market and CIR parameters.
///
/// The asset follows `dX = r X dt + q sqrt(Z) X dW` with the control `q` in
/// `[d, u]`, and the bound level follows the slow CIR dynamics
/// `dZ = delta kappa (theta - Z) dt + sqrt(delta) sqrt(Z) dW^Z` with
/// `d<W, W^Z> = rho dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Initial asset price.
    pub x0: f64,
    /// Initial CIR level (variance units).
    pub z0: f64,
    /// Maturity in years.
    pub maturity: f64,
    /// Risk-free rate. Only `0` is supported by the solvers.
    pub rate: f64,
    /// Lower slope of the volatility band, `0 < d < 1`.
    pub d: f64,
    /// Upper slope of the volatility band, `u > 1`.
    pub u: f64,
    pub kappa: f64,
    pub theta: f64,
    /// Slow time-scale parameter in `[0, 1]`.
    pub delta: f64,
    pub rho: f64,
}

impl ModelParams {
    /// The experiment setup used throughout the numerical study:
    /// `x0 = 100`, `z0 = theta = 0.04`, `T = 0.25`, band `[0.75, 1.25]`,
    /// `kappa = 15`, `rho = -0.9`, `delta = 0.05`.
    pub fn paper() -> Self {
        ModelParams {
            x0: 100.0,
            z0: 0.04,
            maturity: 0.25,
            rate: 0.0,
            d: 0.75,
            u: 1.25,
            kappa: 15.0,
            theta: 0.04,
            delta: 0.05,
            rho: -0.9,
        }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        ModelParams { delta, ..self }
    }

    pub fn with_rho(self, rho: f64) -> Self {
        ModelParams { rho, ..self }
    }

    pub fn with_bounds(self, d: f64, u: f64) -> Self {
        ModelParams { d, u, ..self }
    }

    /// Volatility bounds with the CIR level frozen at `z`.
    pub fn vol_bounds_at(&self, z: f64) -> (f64, f64) {
        let s = z.max(0.0).sqrt();
        (self.d * s, self.u * s)
    }

    /// Returns an error listing every violated invariant.
    pub fn validated(self) -> Result<Self> {
        let v = validate_params(&self);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidParams(v))
        }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    NotFinite,
    NotPositive,
    /// `0 < d < 1 < u`
    BoundOrdering,
    /// `theta * kappa >= 1/2`
    Feller,
    /// `|rho| < 1`
    Correlation,
    /// `0 <= delta <= 1`
    DeltaRange,
    /// Nonzero rates are carried but not implemented.
    UnsupportedRate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rule = match self.rule {
            Rule::NotFinite => "must be finite",
            Rule::NotPositive => "must be strictly positive",
            Rule::BoundOrdering => "requires 0 < d < 1 < u",
            Rule::Feller => "Feller condition theta*kappa >= 1/2 fails",
            Rule::Correlation => "requires |rho| < 1",
            Rule::DeltaRange => "requires 0 <= delta <= 1",
            Rule::UnsupportedRate => "unsupported: only rate = 0 is implemented",
        };
        write!(f, "{}: {}", self.field, rule)
    }
}

/// Checks every [`ModelParams`] invariant and reports each violation.
/// An empty list means the parameters are usable by all solvers.
pub fn validate_params(p: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field, rule| out.push(Violation { field, rule });

    let fields = [
        ("x0", p.x0),
        ("z0", p.z0),
        ("maturity", p.maturity),
        ("rate", p.rate),
        ("d", p.d),
        ("u", p.u),
        ("kappa", p.kappa),
        ("theta", p.theta),
        ("delta", p.delta),
        ("rho", p.rho),
    ];
    let mut finite = true;
    for (name, value) in fields {
        if !value.is_finite() {
            push(name, Rule::NotFinite);
            finite = false;
        }
    }
    if !finite {
        return out;
    }

    for (name, value) in [
        ("x0", p.x0),
        ("z0", p.z0),
        ("maturity", p.maturity),
        ("kappa", p.kappa),
        ("theta", p.theta),
    ] {
        if value <= 0.0 {
            push(name, Rule::NotPositive);
        }
    }
    if !(0.0 < p.d && p.d < 1.0 && 1.0 < p.u) {
        push("d/u", Rule::BoundOrdering);
    }
    if p.kappa > 0.0 && p.theta > 0.0 && p.theta * p.kappa < 0.5 {
        push("theta/kappa", Rule::Feller);
    }
    if p.rho.abs() >= 1.0 {
        push("rho", Rule::Correlation);
    }
    if !(0.0..=1.0).contains(&p.delta) {
        push("delta", Rule::DeltaRange);
    }
    if p.rate != 0.0 {
        push("rate", Rule::UnsupportedRate);
    }
    out
}

/// Uniform discretization of `(x, z)` and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// Number of x nodes, boundaries included.
    pub n_x: usize,
    pub z_min: f64,
    pub z_max: f64,
    /// Number of z nodes. `1` gives a degenerate single-slice grid and then
    /// requires `z_min == z_max`.
    pub n_z: usize,
    /// Number of time steps.
    pub n_t: usize,
}

impl GridSpec {
    /// `x in [0, 200]` with 101 nodes (so `x0 = 100` is node 50) and
    /// `z in [0, 0.12]` with 100 nodes (so `z0 = 0.04` is node 33), 20 steps.
    pub fn paper() -> Self {
        GridSpec {
            x_min: 0.0,
            x_max: 200.0,
            n_x: 101,
            z_min: 0.0,
            z_max: 0.12,
            n_z: 100,
            n_t: 20,
        }
    }

    /// Halves every spacing: `n -> 2(n - 1) + 1` nodes and twice the steps.
    pub fn refined(&self) -> Self {
        GridSpec {
            n_x: 2 * (self.n_x - 1) + 1,
            n_z: if self.n_z > 1 { 2 * (self.n_z - 1) + 1 } else { 1 },
            n_t: 2 * self.n_t,
            ..*self
        }
    }

    /// Single z-slice at `z`.
    pub fn single_slice(&self, z: f64) -> Self {
        GridSpec {
            z_min: z,
            z_max: z,
            n_z: 1,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidGrid(m.to_string()));
        for (name, v) in [
            ("x_min", self.x_min),
            ("x_max", self.x_max),
            ("z_min", self.z_min),
            ("z_max", self.z_max),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidGrid(format!("{name} is not finite")));
            }
        }
        if self.x_min < 0.0 {
            return bad("x_min must be >= 0");
        }
        if self.x_min >= self.x_max {
            return bad("x_min must be < x_max");
        }
        if self.z_min < 0.0 {
            return bad("z_min must be >= 0");
        }
        if self.n_x < 2 {
            return bad("n_x must be >= 2");
        }
        if self.n_t < 1 {
            return bad("n_t must be >= 1");
        }
        if self.n_z == 1 {
            if self.z_min != self.z_max {
                return bad("a single z node requires z_min == z_max");
            }
        } else {
            if self.n_z < 2 {
                return bad("n_z must be >= 1");
            }
            if self.z_min >= self.z_max {
                return bad("z_min must be < z_max");
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x - 1) as f64
    }

    /// Zero for a degenerate single-slice grid.
    pub fn dz(&self) -> f64 {
        if self.n_z > 1 {
            (self.z_max - self.z_min) / (self.n_z - 1) as f64
        } else {
            0.0
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::paper()
    }
}

/// Coordinate vectors of a validated [`GridSpec`] for a given maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub spec: GridSpec,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub t: Vec<f64>,
    pub dx: f64,
    pub dz: f64,
    pub dt: f64,
}

/// Builds `x_i = x_min + i dx`, `z_j = z_min + j dz` and `t_n = n dt` with
/// `dt = maturity / n_t`.
pub fn build_grid(spec: &GridSpec, maturity: f64) -> Result<Grid2D> {
    spec.validate()?;
    if !(maturity.is_finite() && maturity > 0.0) {
        return Err(Error::InvalidGrid(format!(
            "maturity must be finite and positive, got {maturity}"
        )));
    }
    let dx = spec.dx();
    let dz = spec.dz();
    let dt = maturity / spec.n_t as f64;
    Ok(Grid2D {
        spec: *spec,
        x: (0..spec.n_x).map(|i| spec.x_min + i as f64 * dx).collect(),
        z: (0..spec.n_z).map(|j| spec.z_min + j as f64 * dz).collect(),
        t: (0..=spec.n_t).map(|n| n as f64 * dt).collect(),
        dx,
        dz,
        dt,
    })
}

impl Grid2D {
    pub fn new(spec: &GridSpec, maturity: f64) -> Result<Arc<Self>> {
        build_grid(spec, maturity).map(Arc::new)
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn n_z(&self) -> usize {
        self.z.len()
    }

    pub fn n_t(&self) -> usize {
        self.t.len() - 1
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_x(), self.n_z())
    }

    pub fn nearest_x(&self, x: f64) -> usize {
        nearest(&self.x, self.spec.x_min, self.dx, x)
    }

    pub fn nearest_z(&self, z: f64) -> usize {
        nearest(&self.z, self.spec.z_min, self.dz, z)
    }
}

fn nearest(coords: &[f64], lo: f64, h: f64, v: f64) -> usize {
    if coords.len() == 1 || h == 0.0 {
        return 0;
    }
    let k = ((v - lo) / h).round();
    k.clamp(0.0, (coords.len() - 1) as f64) as usize
}

/// Real-valued field over the `(x, z)` grid at one time level.
#[derive(Debug, Clone)]
pub struct Surface {
    values: Array2<f64>,
    grid: Arc<Grid2D>,
    time_index: usize,
}

impl Surface {
    pub fn new(values: Array2<f64>, grid: Arc<Grid2D>, time_index: usize) -> Result<Self> {
        let found = values.dim();
        if found != grid.shape() {
            return Err(Error::DimensionMismatch {
                expected: grid.shape(),
                found,
            });
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite surface value {v} at node ({i}, {j})"
            )));
        }
        Ok(Surface {
            values,
            grid,
            time_index,
        })
    }

    pub fn from_fn(
        grid: Arc<Grid2D>,
        time_index: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let values = Array2::from_shape_fn(grid.shape(), |(i, j)| f(grid.x[i], grid.z[j]));
        Surface::new(values, grid, time_index)
    }

    pub fn zeros(grid: Arc<Grid2D>, time_index: usize) -> Self {
        Surface {
            values: Array2::zeros(grid.shape()),
            grid,
            time_index,
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn grid(&self) -> &Arc<Grid2D> {
        &self.grid
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn time(&self) -> f64 {
        self.grid.t[self.time_index]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// Values along x for the z-node `j`.
    pub fn z_slice(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    /// Bilinear interpolation, clamped to the grid.
    pub fn interpolate(&self, x: f64, z: f64) -> f64 {
        let g = &self.grid;
        let (i0, wx) = bracket(g.spec.x_min, g.dx, g.n_x(), x);
        let (j0, wz) = bracket(g.spec.z_min, g.dz, g.n_z(), z);
        let i1 = (i0 + 1).min(g.n_x() - 1);
        let j1 = (j0 + 1).min(g.n_z() - 1);
        let v = &self.values;
        (1.0 - wx) * ((1.0 - wz) * v[[i0, j0]] + wz * v[[i0, j1]])
            + wx * ((1.0 - wz) * v[[i1, j0]] + wz * v[[i1, j1]])
    }

    /// Sup-norm distance to another surface on the same grid shape.
    pub fn max_abs_diff(&self, other: &Surface) -> Result<f64> {
        if self.values.dim() != other.values.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.values.dim(),
                found: other.values.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

fn bracket(lo: f64, h: f64, n: usize, v: f64) -> (usize, f64) {
    if n == 1 || h == 0.0 {
        return (0, 0.0);
    }
    let s = ((v - lo) / h).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    (i, s - i as f64)
}

/// How the pointwise optimizer of the two-dimensional solver treats the
/// interior stationary point of the quadratic in `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerMode {
    /// Interior candidate admitted only when it is a maximum inside `[d, u]`.
    #[default]
    Guarded,
    /// Unconditional three-way max; the interior control is clamped to `[d, u]`.
    PaperExact,
}

/// How the payoff is transferred onto the grid at maturity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalSampling {
    /// `h(x_i)` at every node.
    Point,
    /// Mean of `h` over the cell `[x_i - dx/2, x_i + dx/2]`. Removes the
    /// grid-dependent error a kink sitting on or near a node injects, which
    /// otherwise dominates the spatial error at the kink.
    #[default]
    CellAverage,
}

/// Upper limit on corrector passes per step.
pub const MAX_CORRECTOR_PASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Implicit weight of the theta-scheme; `0.5` is Crank-Nicolson.
    pub cn_weight: f64,
    /// Maximum number of corrector passes. Passes stop early once the
    /// control field no longer changes.
    pub corrector_passes: usize,
    /// `|L_xx| < gamma_eps` is treated as zero gamma.
    pub gamma_eps: f64,
    pub lin_tol: f64,
    /// Fully implicit sub-steps replacing the first backward step.
    pub rannacher_steps: usize,
    #[serde(default)]
    pub optimizer: OptimizerMode,
    #[serde(default)]
    pub terminal: TerminalSampling,
}

impl SolverConfig {
    /// Defaults with `gamma_eps = 1e-9 x0^2`.
    pub fn for_params(p: &ModelParams) -> Self {
        SolverConfig {
            gamma_eps: 1e-9 * p.x0 * p.x0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.cn_weight) {
            return bad(format!("cn_weight {} outside [0, 1]", self.cn_weight));
        }
        if !(1..=MAX_CORRECTOR_PASSES).contains(&self.corrector_passes) {
            return bad(format!(
                "corrector_passes must lie in 1..={MAX_CORRECTOR_PASSES}, got {}",
                self.corrector_passes
            ));
        }
        if !(self.gamma_eps > 0.0 && self.gamma_eps.is_finite()) {
            return bad(format!("gamma_eps must be positive, got {}", self.gamma_eps));
        }
        if !(self.lin_tol > 0.0 && self.lin_tol.is_finite()) {
            return bad(format!("lin_tol must be positive, got {}", self.lin_tol));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cn_weight: 0.5,
            corrector_passes: 1,
            gamma_eps: 1e-5,
            lin_tol: 1e-10,
            rannacher_steps: 2,
            optimizer: OptimizerMode::Guarded,
            terminal: TerminalSampling::CellAverage,
        }
    }
}
