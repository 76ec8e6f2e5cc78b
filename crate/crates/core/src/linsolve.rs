//! Tridiagonal and banded linear solvers.
//!
//! Every solve is accepted on its residual: `max |A x - b| <= tol (1 + |b|_inf)`.

use crate::error::{Error, Result};

/// Tridiagonal matrix with `lower[i]` at `(i + 1, i)` and `upper[i]` at
/// `(i, i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriDiag {
    pub lower: Vec<f64>,
    pub main: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TriDiag {
    pub fn new(lower: Vec<f64>, main: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = main.len();
        if n == 0 || lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(Error::InvalidInput(format!(
                "tridiagonal lengths {}/{}/{} are inconsistent",
                lower.len(),
                n,
                upper.len()
            )));
        }
        Ok(TriDiag { lower, main, upper })
    }

    pub fn identity(n: usize) -> Self {
        TriDiag {
            lower: vec![0.0; n.saturating_sub(1)],
            main: vec![1.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.main.len()
    }

    pub fn is_empty(&self) -> bool {
        self.main.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.main[i] * x[i];
                if i > 0 {
                    s += self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn residual_norm(ax: &[f64], b: &[f64]) -> f64 {
    ax.iter()
        .zip(b)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
}

fn accepted(res: f64, rhs: &[f64], tol: f64) -> bool {
    res <= tol * (1.0 + inf_norm(rhs))
}

/// Thomas algorithm.
pub fn solve_tridiag(sys: &TriDiag, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = sys.len();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: (n, 1),
            found: (rhs.len(), 1),
        });
    }
    let scale = inf_norm(&sys.main).max(f64::MIN_POSITIVE);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = sys.main[0];
    if pivot.abs() <= 1e-14 * scale {
        return Err(Error::SingularPivot { row: 0, pivot });
    }
    if n > 1 {
        c[0] = sys.upper[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        let l = sys.lower[i - 1];
        pivot = sys.main[i] - l * c[i - 1];
        if pivot.abs() <= 1e-14 * scale {
            return Err(Error::SingularPivot { row: i, pivot });
        }
        if i + 1 < n {
            c[i] = sys.upper[i] / pivot;
        }
        d[i] = (rhs[i] - l * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    let res = residual_norm(&sys.mul_vec(&x), rhs);
    if !accepted(res, rhs, tol) {
        return Err(Error::SolverBreakdown {
            residuals: vec![res],
        });
    }
    Ok(x)
}

/// Square sparse matrix stored by rows; each row holds at most a handful of
/// `(column, value)` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSystem {
    rows: Vec<Vec<(usize, f64)>>,
}

impl BandedSystem {
    /// Duplicate columns within a row are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut merged = Vec::with_capacity(n);
        for (r, row) in rows.into_iter().enumerate() {
            let mut row: Vec<(usize, f64)> = row;
            row.sort_by_key(|e| e.0);
            let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                if c >= n {
                    return Err(Error::InvalidInput(format!("row {r}: column {c} out of range")));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("row {r}: non-finite entry")));
                }
                match out.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => out.push((c, v)),
                }
            }
            merged.push(out);
        }
        Ok(BandedSystem { rows: merged })
    }

    pub fn identity(n: usize) -> Self {
        BandedSystem {
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `(lower, upper)` bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, _) in row {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }
}

/// Dense band storage of an LU factorization without pivoting.
struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    ab: Vec<f64>,
}

impl BandLu {
    fn factor(sys: &BandedSystem) -> Result<Self> {
        let n = sys.len();
        let (kl, ku) = sys.bandwidths();
        let width = kl + ku + 1;
        let mut ab = vec![0.0; n * width];
        let mut scale = 0.0_f64;
        for (r, row) in sys.rows.iter().enumerate() {
            for &(c, v) in row {
                ab[r * width + c + kl - r] = v;
                scale = scale.max(v.abs());
            }
        }
        let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);
        for k in 0..n {
            let pivot = ab[k * width + kl];
            if pivot.abs() <= tiny {
                return Err(Error::SingularPivot { row: k, pivot });
            }
            let col_end = (k + ku).min(n - 1);
            for r in k + 1..=(k + kl).min(n - 1) {
                let idx = r * width + k + kl - r;
                let l = ab[idx] / pivot;
                if l == 0.0 {
                    continue;
                }
                ab[idx] = l;
                let (head, tail) = ab.split_at_mut(r * width);
                // row r, column c lives at c + kl - r
                let krow = &head[k * width + kl + 1..k * width + col_end + kl - k + 1];
                let rrow = &mut tail[k + 1 + kl - r..col_end + kl - r + 1];
                for (a, b) in rrow.iter_mut().zip(krow) {
                    *a -= l * b;
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku,
            width,
            ab,
        })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        let mut y = b.to_vec();
        for r in 0..n {
            let c0 = r.saturating_sub(kl);
            let coeffs = &self.ab[r * w + c0 + kl - r..r * w + kl];
            let s: f64 = coeffs.iter().zip(&y[c0..r]).map(|(a, v)| a * v).sum();
            y[r] -= s;
        }
        for r in (0..n).rev() {
            let c1 = (r + ku).min(n - 1);
            let coeffs = &self.ab[r * w + kl + 1..r * w + c1 + kl - r + 1];
            let s: f64 = coeffs.iter().zip(&y[r + 1..=c1]).map(|(a, v)| a * v).sum();
            y[r] = (y[r] - s) / self.ab[r * w + kl];
        }
        y
    }
}

/// Band storage above this many entries goes straight to the Krylov solver.
const DIRECT_LIMIT: usize = 40_000_000;

/// Direct banded LU with iterative refinement; falls back to Jacobi-
/// preconditioned BiCGSTAB on pivot breakdown, for very wide bands, or when
/// refinement stalls.
pub fn solve_banded(sys: &BandedSystem, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = sys.len();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: (n, 1),
            found: (rhs.len(), 1),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let (kl, ku) = sys.bandwidths();
    let mut history = Vec::new();
    let mut guess = None;
    if n * (kl + ku + 1) <= DIRECT_LIMIT {
        if let Ok(lu) = BandLu::factor(sys) {
            let mut x = lu.solve(rhs);
            for _ in 0..4 {
                let ax = sys.mul_vec(&x);
                let res = residual_norm(&ax, rhs);
                history.push(res);
                if accepted(res, rhs, tol) {
                    return Ok(x);
                }
                let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
                let dx = lu.solve(&r);
                x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
            }
            guess = Some(x);
        }
    }
    bicgstab(sys, rhs, guess, tol, &mut history)
}

fn bicgstab(
    sys: &BandedSystem,
    b: &[f64],
    guess: Option<Vec<f64>>,
    tol: f64,
    history: &mut Vec<f64>,
) -> Result<Vec<f64>> {
    let n = sys.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let inv_diag: Vec<f64> = sys
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let d = row.iter().find(|e| e.0 == r).map_or(0.0, |e| e.1);
            if d != 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let precond = |v: &[f64]| v.iter().zip(&inv_diag).map(|(a, d)| a * d).collect::<Vec<_>>();

    let mut x = guess.unwrap_or_else(|| precond(b));
    let mut r: Vec<f64> = b.iter().zip(sys.mul_vec(&x)).map(|(b, a)| b - a).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let max_iter = 20 * n.max(50);
    for _ in 0..max_iter {
        let res = inf_norm(&r);
        if accepted(res, b, tol) {
            // confirm on the true residual
            let true_res = residual_norm(&sys.mul_vec(&x), b);
            history.push(true_res);
            if accepted(true_res, b, tol) {
                return Ok(x);
            }
            r = b.iter().zip(sys.mul_vec(&x)).map(|(b, a)| b - a).collect();
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        let p_hat = precond(&p);
        v = sys.mul_vec(&p_hat);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        let s_hat = precond(&s);
        let t = sys.mul_vec(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for k in 0..n {
            x[k] += alpha * p_hat[k] + omega * s_hat[k];
            r[k] = s[k] - omega * t[k];
        }
        if omega == 0.0 {
            history.push(inf_norm(&r));
            break;
        }
    }
    history.push(residual_norm(&sys.mul_vec(&x), b));
    Err(Error::SolverBreakdown {
        residuals: std::mem::take(history),
    })
}
