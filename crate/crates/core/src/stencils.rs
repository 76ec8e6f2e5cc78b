//! Central finite differences on the `(x, z)` grid and the coefficient-
//! weighted operators built from them.
//!
//! Interior nodes use the standard second-order central formulas, e.g.
//! `d_xx w[i,j] = (w[i+1,j] + w[i-1,j] - 2 w[i,j]) / dx^2` and the four-point
//! cross stencil `(w[i+1,j+1] + w[i-1,j-1] - w[i-1,j+1] - w[i+1,j-1]) / (4 dx dz)`.
//!
//! Boundary rules: second derivatives are zero on the boundary rows and
//! columns, first derivatives switch to two-point one-sided differences, and
//! the cross derivative goes one-sided in whichever direction touches the
//! boundary. A direction with a single node has zero derivatives.
//!
//! The same rules are exposed as [`taps`] so that implicit solvers assemble
//! exactly the operator that [`apply`] evaluates.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::params::{Grid2D, Surface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stencil {
    Dx,
    Dxx,
    Dz,
    Dzz,
    Dxz,
}

/// Raw stencils and their coefficient-weighted composites:
/// `L_xx = z x^2 d_xx`, `L_zz = z d_zz`, `L_xz = x z d_xz`, `L_x = x d_x`,
/// `L_z1 = d_z`, `L_z2 = z d_z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Raw(Stencil),
    Lxx,
    Lzz,
    Lxz,
    Lx,
    Lz1,
    Lz2,
}

impl Operator {
    pub fn stencil(self) -> Stencil {
        match self {
            Operator::Raw(s) => s,
            Operator::Lxx => Stencil::Dxx,
            Operator::Lzz => Stencil::Dzz,
            Operator::Lxz => Stencil::Dxz,
            Operator::Lx => Stencil::Dx,
            Operator::Lz1 | Operator::Lz2 => Stencil::Dz,
        }
    }

    pub fn coefficient(self, x: f64, z: f64) -> f64 {
        match self {
            Operator::Raw(_) | Operator::Lz1 => 1.0,
            Operator::Lxx => lxx_coefficient(x, z),
            Operator::Lzz | Operator::Lz2 => z,
            Operator::Lxz => x * z,
            Operator::Lx => x,
        }
    }
}

/// `z x^2`, the factor turning `d_xx` into `L_xx`.
#[inline]
pub fn lxx_coefficient(x: f64, z: f64) -> f64 {
    z * x * x
}

/// Output of a stencil application; same shape as the input surface.
#[derive(Debug, Clone)]
pub struct StencilField {
    pub op: Operator,
    pub values: Array2<f64>,
}

/// Second difference along one line, zero at both ends.
pub fn second_difference(w: ArrayView1<'_, f64>, h: f64) -> Vec<f64> {
    let n = w.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    let h2 = h * h;
    for i in 1..n - 1 {
        out[i] = (w[i + 1] + w[i - 1] - 2.0 * w[i]) / h2;
    }
    out
}

/// `(plus, minus, denominator)` of the first difference at index `i`.
#[inline]
fn first_diff_nodes(n: usize, h: f64, i: usize) -> Option<(usize, usize, f64)> {
    if n < 2 {
        None
    } else if i == 0 {
        Some((1, 0, h))
    } else if i == n - 1 {
        Some((n - 1, n - 2, h))
    } else {
        Some((i + 1, i - 1, 2.0 * h))
    }
}

fn check_shape(w: &ArrayView2<'_, f64>, grid: &Grid2D) -> Result<()> {
    if w.dim() != grid.shape() {
        return Err(Error::DimensionMismatch {
            expected: grid.shape(),
            found: w.dim(),
        });
    }
    Ok(())
}

/// Evaluates a raw stencil on an array laid out like `grid`.
pub fn apply_stencil(s: Stencil, w: ArrayView2<'_, f64>, grid: &Grid2D) -> Result<Array2<f64>> {
    check_shape(&w, grid)?;
    let (nx, nz) = grid.shape();
    let (dx, dz) = (grid.dx, grid.dz);
    let mut out = Array2::zeros((nx, nz));
    match s {
        Stencil::Dxx => {
            for j in 0..nz {
                let col = second_difference(w.column(j), dx);
                out.column_mut(j).iter_mut().zip(col).for_each(|(o, v)| *o = v);
            }
        }
        Stencil::Dzz => {
            for i in 0..nx {
                let row = second_difference(w.row(i), dz);
                out.row_mut(i).iter_mut().zip(row).for_each(|(o, v)| *o = v);
            }
        }
        Stencil::Dx => {
            for i in 0..nx {
                if let Some((p, m, h)) = first_diff_nodes(nx, dx, i) {
                    for j in 0..nz {
                        out[[i, j]] = (w[[p, j]] - w[[m, j]]) / h;
                    }
                }
            }
        }
        Stencil::Dz => {
            for j in 0..nz {
                if let Some((p, m, h)) = first_diff_nodes(nz, dz, j) {
                    for i in 0..nx {
                        out[[i, j]] = (w[[i, p]] - w[[i, m]]) / h;
                    }
                }
            }
        }
        Stencil::Dxz => {
            for i in 0..nx {
                let Some((ip, im, hx)) = first_diff_nodes(nx, dx, i) else { continue };
                for j in 0..nz {
                    let Some((jp, jm, hz)) = first_diff_nodes(nz, dz, j) else { continue };
                    out[[i, j]] =
                        (w[[ip, jp]] + w[[im, jm]] - w[[im, jp]] - w[[ip, jm]]) / (hx * hz);
                }
            }
        }
    }
    Ok(out)
}

pub fn apply_operator(op: Operator, w: ArrayView2<'_, f64>, grid: &Grid2D) -> Result<Array2<f64>> {
    let mut out = apply_stencil(op.stencil(), w, grid)?;
    if !matches!(op, Operator::Raw(_) | Operator::Lz1) {
        for ((i, j), v) in out.indexed_iter_mut() {
            *v *= op.coefficient(grid.x[i], grid.z[j]);
        }
    }
    Ok(out)
}

pub fn apply(op: Operator, s: &Surface) -> Result<StencilField> {
    Ok(StencilField {
        op,
        values: apply_operator(op, s.values().view(), s.grid())?,
    })
}

pub fn d_x(s: &Surface) -> Result<StencilField> {
    apply(Operator::Raw(Stencil::Dx), s)
}

pub fn d_xx(s: &Surface) -> Result<StencilField> {
    apply(Operator::Raw(Stencil::Dxx), s)
}

pub fn d_z(s: &Surface) -> Result<StencilField> {
    apply(Operator::Raw(Stencil::Dz), s)
}

pub fn d_zz(s: &Surface) -> Result<StencilField> {
    apply(Operator::Raw(Stencil::Dzz), s)
}

pub fn d_xz(s: &Surface) -> Result<StencilField> {
    apply(Operator::Raw(Stencil::Dxz), s)
}

/// A weighted grid node referenced by a stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Appends the taps of stencil `s` at node `(i, j)` to `out`.
pub fn taps(s: Stencil, grid: &Grid2D, i: usize, j: usize, out: &mut Vec<Tap>) {
    let (nx, nz) = grid.shape();
    let (dx, dz) = (grid.dx, grid.dz);
    let mut push = |i, j, weight| out.push(Tap { i, j, weight });
    match s {
        Stencil::Dxx => {
            if nx >= 3 && i > 0 && i < nx - 1 {
                let h2 = dx * dx;
                push(i + 1, j, 1.0 / h2);
                push(i - 1, j, 1.0 / h2);
                push(i, j, -2.0 / h2);
            }
        }
        Stencil::Dzz => {
            if nz >= 3 && j > 0 && j < nz - 1 {
                let h2 = dz * dz;
                push(i, j + 1, 1.0 / h2);
                push(i, j - 1, 1.0 / h2);
                push(i, j, -2.0 / h2);
            }
        }
        Stencil::Dx => {
            if let Some((p, m, h)) = first_diff_nodes(nx, dx, i) {
                push(p, j, 1.0 / h);
                push(m, j, -1.0 / h);
            }
        }
        Stencil::Dz => {
            if let Some((p, m, h)) = first_diff_nodes(nz, dz, j) {
                push(i, p, 1.0 / h);
                push(i, m, -1.0 / h);
            }
        }
        Stencil::Dxz => {
            if let (Some((ip, im, hx)), Some((jp, jm, hz))) =
                (first_diff_nodes(nx, dx, i), first_diff_nodes(nz, dz, j))
            {
                let w = 1.0 / (hx * hz);
                push(ip, jp, w);
                push(im, jm, w);
                push(im, jp, -w);
                push(ip, jm, -w);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::GridSpec;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn grid(nx: usize, nz: usize) -> Arc<Grid2D> {
        Grid2D::new(
            &GridSpec {
                x_min: 0.0,
                x_max: 200.0,
                n_x: nx,
                z_min: 0.0,
                z_max: 0.12,
                n_z: nz,
                n_t: 10,
            },
            0.25,
        )
        .unwrap()
    }

    fn interior(nx: usize, nz: usize) -> impl Iterator<Item = (usize, usize)> {
        (1..nx - 1).flat_map(move |i| (1..nz - 1).map(move |j| (i, j)))
    }

    #[test]
    fn quadratic_exactness() {
        let g = grid(41, 13);
        let s = Surface::from_fn(g.clone(), 0, |x, _| x * x).unwrap();
        let f = d_xx(&s).unwrap().values;
        for (i, j) in interior(41, 13) {
            assert!((f[[i, j]] - 2.0).abs() < 1e-9);
        }
        for j in 0..13 {
            assert_eq!(f[[0, j]], 0.0);
            assert_eq!(f[[40, j]], 0.0);
        }
    }

    #[test]
    fn bilinear_cross_derivative_is_exact() {
        let g = grid(21, 11);
        let s = Surface::from_fn(g.clone(), 0, |x, z| x * z).unwrap();
        let f = d_xz(&s).unwrap().values;
        // one-sided variants are also exact for a bilinear function
        for v in f.iter() {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn sine_second_derivative_error_bound() {
        let spec = GridSpec {
            x_min: 0.0,
            x_max: 6.0,
            n_x: 61,
            z_min: 0.0,
            z_max: 1.0,
            n_z: 3,
            n_t: 1,
        };
        let g = Grid2D::new(&spec, 1.0).unwrap();
        let s = Surface::from_fn(g.clone(), 0, |x, _| x.sin()).unwrap();
        let f = d_xx(&s).unwrap().values;
        let bound = g.dx * g.dx / 12.0 + 1e-12;
        for i in 1..60 {
            let err = (f[[i, 1]] + g.x[i].sin()).abs();
            assert!(err <= bound, "i={i}: {err} > {bound}");
        }
    }

    #[test]
    fn second_order_convergence() {
        let err = |n: usize| {
            let spec = GridSpec {
                x_min: 1.0,
                x_max: 3.0,
                n_x: n,
                z_min: 0.0,
                z_max: 1.0,
                n_z: 3,
                n_t: 1,
            };
            let g = Grid2D::new(&spec, 1.0).unwrap();
            let s = Surface::from_fn(g.clone(), 0, |x, _| x.exp() * x.sin()).unwrap();
            let f = d_xx(&s).unwrap().values;
            let mid = (n - 1) / 2;
            let x = g.x[mid];
            (f[[mid, 1]] - 2.0 * x.exp() * x.cos()).abs()
        };
        let ratio = err(41) / err(81);
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn composite_coefficients() {
        let g = grid(21, 7);
        let s = Surface::from_fn(g.clone(), 0, |x, z| x * x + z.sin() * x).unwrap();
        let lxx = apply(Operator::Lxx, &s).unwrap().values;
        for i in 0..21 {
            assert_eq!(lxx[[i, 0]], 0.0);
        }
        let dz = d_z(&s).unwrap().values;
        let lz2 = apply(Operator::Lz2, &s).unwrap().values;
        for ((i, j), v) in lz2.indexed_iter() {
            assert_eq!(*v, g.z[j] * dz[[i, j]]);
        }
        let g = Grid2D::new(&GridSpec::paper(), 0.25).unwrap();
        let s = Surface::from_fn(g.clone(), 0, |x, _| x * x).unwrap();
        let lxx = apply(Operator::Lxx, &s).unwrap().values;
        let (i, j) = (g.nearest_x(100.0), g.nearest_z(0.04));
        assert!((lxx[[i, j]] - 800.0).abs() < 1e-8);
    }

    #[test]
    fn single_node_direction_has_zero_derivatives() {
        let spec = GridSpec::paper().single_slice(0.04);
        let g = Grid2D::new(&spec, 0.25).unwrap();
        let s = Surface::from_fn(g, 0, |x, _| x * x).unwrap();
        for st in [Stencil::Dz, Stencil::Dzz, Stencil::Dxz] {
            let f = apply(Operator::Raw(st), &s).unwrap().values;
            assert!(f.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn taps_reproduce_apply() {
        let g = grid(9, 6);
        let s = Surface::from_fn(g.clone(), 0, |x, z| (0.03 * x).sin() * (1.0 + 5.0 * z * z) + x * z).unwrap();
        let mut buf = Vec::new();
        for st in [Stencil::Dx, Stencil::Dxx, Stencil::Dz, Stencil::Dzz, Stencil::Dxz] {
            let f = apply_stencil(st, s.values().view(), &g).unwrap();
            for i in 0..9 {
                for j in 0..6 {
                    buf.clear();
                    taps(st, &g, i, j, &mut buf);
                    let v: f64 = buf.iter().map(|t| t.weight * s.at(t.i, t.j)).sum();
                    assert!((v - f[[i, j]]).abs() < 1e-9 * (1.0 + v.abs()), "{st:?} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let g = grid(9, 6);
        let w = Array2::<f64>::zeros((9, 5));
        assert!(apply_stencil(Stencil::Dx, w.view(), &g).is_err());
    }

    proptest! {
        #[test]
        fn stencils_are_linear(
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
            seed_a in proptest::collection::vec(-10.0..10.0f64, 48),
            seed_b in proptest::collection::vec(-10.0..10.0f64, 48),
        ) {
            let g = grid(8, 6);
            let s1 = Array2::from_shape_vec((8, 6), seed_a).unwrap();
            let s2 = Array2::from_shape_vec((8, 6), seed_b).unwrap();
            let comb = &s1 * a + &s2 * b;
            for op in [Operator::Lxx, Operator::Lzz, Operator::Lxz, Operator::Lx, Operator::Lz1, Operator::Lz2] {
                let lhs = apply_operator(op, comb.view(), &g).unwrap();
                let rhs = apply_operator(op, s1.view(), &g).unwrap() * a
                    + apply_operator(op, s2.view(), &g).unwrap() * b;
                let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                for (l, r) in lhs.iter().zip(rhs.iter()) {
                    prop_assert!((l - r).abs() <= 1e-11 * scale);
                }
            }
        }
    }
}
