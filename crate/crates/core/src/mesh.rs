//! Staggered (MAC) rectangular grid, discrete fields and the discrete inner
//! products used by every other module.
//!
//! Scalars live at cell centers `((i+1/2)hx, (j+1/2)hy)`, stored row-major
//! with `i` (x) fastest. The x-velocity lives on x-faces `(i hx, (j+1/2)hy)`
//! for `i = 0..=nx`, the y-velocity on y-faces `((i+1/2)hx, j hy)` for
//! `j = 0..=ny`. Boundary traces are given per boundary face.

use crate::error::{Error, Result};

/// Smallest admissible cell count per direction.
pub const MIN_CELLS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(Error::invalid(format!(
                "grid needs at least {MIN_CELLS} cells per direction, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::invalid(format!("domain lengths must be positive, got {lx}x{ly}")));
        }
        Ok(Grid { nx, ny, lx, ly })
    }

    /// `n x n` cells on the unit square.
    pub fn unit(n: usize) -> Self {
        Grid::new(n, n, 1.0, 1.0).expect("unit grid")
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    #[inline]
    pub fn n_xfaces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    #[inline]
    pub fn n_yfaces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub fn xface(&self, i: usize, j: usize) -> usize {
        i + (self.nx + 1) * j
    }

    #[inline]
    pub fn yface(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn xface_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    pub fn yface_pos(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), j as f64 * self.hy())
    }

    pub fn same_as(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.n_cells()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::GridMismatch(format!(
                "expected {} cell values, got {}",
                grid.n_cells(),
                values.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            grid,
            ux: vec![0.0; grid.n_xfaces()],
            uy: vec![0.0; grid.n_yfaces()],
        }
    }

    /// Samples the normal components of `f` at face centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut v = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                let (x, y) = grid.xface_pos(i, j);
                v.ux[grid.xface(i, j)] = f(x, y).0;
            }
        }
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.yface_pos(i, j);
                v.uy[grid.yface(i, j)] = f(x, y).1;
            }
        }
        v
    }

    /// Sets the normal velocity on the walls to zero.
    pub fn zero_wall_normals(&mut self) {
        let g = self.grid;
        for j in 0..g.ny {
            self.ux[g.xface(0, j)] = 0.0;
            self.ux[g.xface(g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.uy[g.yface(i, 0)] = 0.0;
            self.uy[g.yface(i, g.ny)] = 0.0;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        VectorField {
            grid: self.grid,
            ux: self.ux.iter().map(|v| s * v).collect(),
            uy: self.uy.iter().map(|v| s * v).collect(),
        }
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        for (s, o) in self.ux.iter_mut().zip(&other.ux) {
            *s += a * o;
        }
        for (s, o) in self.uy.iter_mut().zip(&other.uy) {
            *s += a * o;
        }
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.ux
            .iter()
            .chain(&self.uy)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        self.ux
            .iter()
            .zip(&other.ux)
            .chain(self.uy.iter().zip(&other.uy))
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(&self.uy).all(|v| v.is_finite())
    }
}

/// Values prescribed on the boundary faces of the rectangle.
///
/// `left`/`right` are indexed by row `j`, `bottom`/`top` by column `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
}

impl Trace {
    pub fn constant(grid: Grid, v: f64) -> Self {
        Trace {
            left: vec![v; grid.ny],
            right: vec![v; grid.ny],
            bottom: vec![v; grid.nx],
            top: vec![v; grid.nx],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at the boundary face midpoints.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let (hx, hy) = (grid.hx(), grid.hy());
        Trace {
            left: (0..grid.ny).map(|j| f(0.0, (j as f64 + 0.5) * hy)).collect(),
            right: (0..grid.ny).map(|j| f(grid.lx, (j as f64 + 0.5) * hy)).collect(),
            bottom: (0..grid.nx).map(|i| f((i as f64 + 0.5) * hx, 0.0)).collect(),
            top: (0..grid.nx).map(|i| f((i as f64 + 0.5) * hx, grid.ly)).collect(),
        }
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.left.len() == grid.ny
            && self.right.len() == grid.ny
            && self.bottom.len() == grid.nx
            && self.top.len() == grid.nx
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.left
            .iter()
            .chain(&self.right)
            .chain(&self.bottom)
            .chain(&self.top)
            .copied()
    }

    pub fn min(&self) -> f64 {
        self.iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Trace {
            left: self.left.iter().map(|&v| f(v)).collect(),
            right: self.right.iter().map(|&v| f(v)).collect(),
            bottom: self.bottom.iter().map(|&v| f(v)).collect(),
            top: self.top.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Trace, f: impl Fn(f64, f64) -> f64) -> Self {
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
        Trace {
            left: zip(&self.left, &other.left),
            right: zip(&self.right, &other.right),
            bottom: zip(&self.bottom, &other.bottom),
            top: zip(&self.top, &other.top),
        }
    }
}

/// Dirichlet data for both species and the potential.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    pub gamma1: Trace,
    pub gamma2: Trace,
    pub w: Trace,
}

impl BoundaryData {
    pub fn new(grid: &Grid, gamma1: Trace, gamma2: Trace, w: Trace) -> Result<Self> {
        let bd = BoundaryData { gamma1, gamma2, w };
        bd.validate(grid)?;
        Ok(bd)
    }

    pub fn uniform(grid: Grid, gamma1: f64, gamma2: f64, w: f64) -> Result<Self> {
        Self::new(
            &grid,
            Trace::constant(grid, gamma1),
            Trace::constant(grid, gamma2),
            Trace::constant(grid, w),
        )
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for (name, t) in [("gamma1", &self.gamma1), ("gamma2", &self.gamma2), ("W", &self.w)] {
            if !t.matches(grid) {
                return Err(Error::GridMismatch(format!("trace {name} does not match grid")));
            }
            if !t.iter().all(f64::is_finite) {
                return Err(Error::invalid(format!("trace {name} has non-finite values")));
            }
        }
        if !(self.gamma1.min() > 0.0 && self.gamma2.min() > 0.0) {
            return Err(Error::invalid("boundary concentrations must be positive"));
        }
        Ok(())
    }

    pub fn gamma(&self, species: usize) -> &Trace {
        if species == 0 {
            &self.gamma1
        } else {
            &self.gamma2
        }
    }

    /// Smallest boundary concentration over both species.
    pub fn gamma_min(&self) -> f64 {
        self.gamma1.min().min(self.gamma2.min())
    }

    /// Largest boundary concentration over both species.
    pub fn gamma_max(&self) -> f64 {
        self.gamma1.max().max(self.gamma2.max())
    }
}

/// How a scalar field is continued across the boundary when forming gradients.
#[derive(Clone, Copy, Debug)]
pub enum Boundary<'a> {
    /// Homogeneous Dirichlet trace.
    Zero,
    /// Prescribed Dirichlet trace, reached over half a cell.
    Dirichlet(&'a Trace),
    /// No trace: the boundary half-cell reuses the adjacent interior difference.
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l2_sq: f64,
    pub h1semi_sq: f64,
}

/// Discrete `∫ f dx` (midpoint rule).
pub fn integrate(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_area()
}

/// Discrete `∫ f g dx`.
pub fn inner(f: &ScalarField, g: &ScalarField) -> f64 {
    f.values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * f.grid.cell_area()
}

pub fn l2_sq(f: &ScalarField) -> f64 {
    inner(f, f)
}

/// Face-based Dirichlet energy `∫ |∇f|²`.
///
/// Interior faces use the two-point difference over one cell, boundary faces
/// the half-cell difference to the trace (weighted by half a cell). With a
/// zero or prescribed trace this is exactly `(f, -Δ_h f)` for the 5-point
/// operator with ghost reflection.
pub fn h1_semi_sq(f: &ScalarField, bc: Boundary<'_>) -> f64 {
    let g = f.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let v = &f.values;
    let mut sx = 0.0;
    for j in 0..g.ny {
        for i in 1..g.nx {
            let d = v[g.idx(i, j)] - v[g.idx(i - 1, j)];
            sx += d * d;
        }
    }
    let mut sy = 0.0;
    for j in 1..g.ny {
        for i in 0..g.nx {
            let d = v[g.idx(i, j)] - v[g.idx(i, j - 1)];
            sy += d * d;
        }
    }
    // interior: (d/h)^2 * hx*hy
    let mut total = sx * hy / hx + sy * hx / hy;

    let mut bx = 0.0;
    let mut by = 0.0;
    match bc {
        Boundary::Free => {
            // gradient over the half cell equals the neighbouring interior one
            for j in 0..g.ny {
                let dl = v[g.idx(1, j)] - v[g.idx(0, j)];
                let dr = v[g.idx(g.nx - 1, j)] - v[g.idx(g.nx - 2, j)];
                bx += 0.5 * (dl * dl + dr * dr);
            }
            for i in 0..g.nx {
                let db = v[g.idx(i, 1)] - v[g.idx(i, 0)];
                let dt = v[g.idx(i, g.ny - 1)] - v[g.idx(i, g.ny - 2)];
                by += 0.5 * (db * db + dt * dt);
            }
            total += bx * hy / hx + by * hx / hy;
        }
        Boundary::Zero | Boundary::Dirichlet(_) => {
            let tr = |side: &dyn Fn(&Trace) -> f64| match bc {
                Boundary::Dirichlet(t) => side(t),
                _ => 0.0,
            };
            for j in 0..g.ny {
                let dl = v[g.idx(0, j)] - tr(&|t| t.left[j]);
                let dr = v[g.idx(g.nx - 1, j)] - tr(&|t| t.right[j]);
                bx += dl * dl + dr * dr;
            }
            for i in 0..g.nx {
                let db = v[g.idx(i, 0)] - tr(&|t| t.bottom[i]);
                let dt = v[g.idx(i, g.ny - 1)] - tr(&|t| t.top[i]);
                by += db * db + dt * dt;
            }
            // (d / (h/2))^2 * (h/2) * h_perp = 2 d^2 h_perp / h
            total += 2.0 * (bx * hy / hx + by * hx / hy);
        }
    }
    total
}

pub fn norms(f: &ScalarField, bc: Boundary<'_>) -> Norms {
    Norms {
        l2_sq: l2_sq(f),
        h1semi_sq: h1_semi_sq(f, bc),
    }
}

/// Discrete `∫ u·v` over faces; wall-normal faces carry half weight.
pub fn vector_inner(u: &VectorField, v: &VectorField) -> f64 {
    let g = u.grid;
    let mut s = 0.0;
    for j in 0..g.ny {
        for i in 0..=g.nx {
            let k = g.xface(i, j);
            let w = if i == 0 || i == g.nx { 0.5 } else { 1.0 };
            s += w * u.ux[k] * v.ux[k];
        }
    }
    for j in 0..=g.ny {
        for i in 0..g.nx {
            let k = g.yface(i, j);
            let w = if j == 0 || j == g.ny { 0.5 } else { 1.0 };
            s += w * u.uy[k] * v.uy[k];
        }
    }
    s * g.cell_area()
}

pub fn vector_l2_sq(u: &VectorField) -> f64 {
    vector_inner(u, u)
}

/// `∫ ∇u:∇v` for no-slip fields (tangential ghost reflection at walls).
pub fn vector_h1_inner(u: &VectorField, v: &VectorField) -> f64 {
    let g = u.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut s = 0.0;
    // ux: x-differences over cells, y-differences between face rows
    for j in 0..g.ny {
        for i in 0..g.nx {
            let a = u.ux[g.xface(i + 1, j)] - u.ux[g.xface(i, j)];
            let b = v.ux[g.xface(i + 1, j)] - v.ux[g.xface(i, j)];
            s += a * b * hy / hx;
        }
    }
    for i in 0..=g.nx {
        for j in 1..g.ny {
            let a = u.ux[g.xface(i, j)] - u.ux[g.xface(i, j - 1)];
            let b = v.ux[g.xface(i, j)] - v.ux[g.xface(i, j - 1)];
            s += a * b * hx / hy;
        }
        let (a0, b0) = (u.ux[g.xface(i, 0)], v.ux[g.xface(i, 0)]);
        let (a1, b1) = (u.ux[g.xface(i, g.ny - 1)], v.ux[g.xface(i, g.ny - 1)]);
        s += 2.0 * (a0 * b0 + a1 * b1) * hx / hy;
    }
    for i in 0..g.nx {
        for j in 0..g.ny {
            let a = u.uy[g.yface(i, j + 1)] - u.uy[g.yface(i, j)];
            let b = v.uy[g.yface(i, j + 1)] - v.uy[g.yface(i, j)];
            s += a * b * hx / hy;
        }
    }
    for j in 0..=g.ny {
        for i in 1..g.nx {
            let a = u.uy[g.yface(i, j)] - u.uy[g.yface(i - 1, j)];
            let b = v.uy[g.yface(i, j)] - v.uy[g.yface(i - 1, j)];
            s += a * b * hy / hx;
        }
        let (a0, b0) = (u.uy[g.yface(0, j)], v.uy[g.yface(0, j)]);
        let (a1, b1) = (u.uy[g.yface(g.nx - 1, j)], v.uy[g.yface(g.nx - 1, j)]);
        s += 2.0 * (a0 * b0 + a1 * b1) * hy / hx;
    }
    s
}

pub fn vector_norms(u: &VectorField) -> Norms {
    Norms {
        l2_sq: vector_l2_sq(u),
        h1semi_sq: vector_h1_inner(u, u),
    }
}

/// Cell-centered divergence of a face field.
pub fn discrete_divergence(u: &VectorField) -> ScalarField {
    let g = u.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.values[g.idx(i, j)] = (u.ux[g.xface(i + 1, j)] - u.ux[g.xface(i, j)]) / hx
                + (u.uy[g.yface(i, j + 1)] - u.uy[g.yface(i, j)]) / hy;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn integrate_constant_and_zero() {
        let g = Grid::unit(16);
        assert!((integrate(&ScalarField::constant(g, 3.0)) - 3.0).abs() < 1e-14);
        assert_eq!(integrate(&ScalarField::zeros(g)), 0.0);
    }

    #[test]
    fn integrate_sine_product() {
        let g = Grid::unit(128);
        let f = ScalarField::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin());
        assert!((integrate(&f) - 4.0 / (PI * PI)).abs() < 1e-3);
    }

    #[test]
    fn norms_of_zero_field() {
        let n = norms(&ScalarField::zeros(Grid::unit(8)), Boundary::Zero);
        assert_eq!(n, Norms { l2_sq: 0.0, h1semi_sq: 0.0 });
    }

    #[test]
    fn free_boundary_linear_field_has_unit_gradient_energy() {
        let g = Grid::unit(20);
        let f = ScalarField::from_fn(g, |x, _| x);
        assert!((h1_semi_sq(&f, Boundary::Free) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sine_norms_match_analytic_values() {
        let g = Grid::unit(128);
        let f = ScalarField::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin());
        let n = norms(&f, Boundary::Zero);
        assert!((n.l2_sq - 0.25).abs() < 1e-3);
        assert!((n.h1semi_sq - PI * PI / 2.0).abs() < 1e-2);
    }

    #[test]
    fn norms_converge_at_second_order() {
        // the midpoint rule is exact for sin², so the L² check uses e^x sin(πy)
        let exact_l2 = 0.25 * (2f64.exp() - 1.0);
        let exact_h1 = PI * PI / 2.0;
        let errs: Vec<(f64, f64)> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let g = Grid::unit(n);
                let e = ScalarField::from_fn(g, |x, y| x.exp() * (PI * y).sin());
                let f = ScalarField::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin());
                let h1 = h1_semi_sq(&f, Boundary::Zero);
                ((l2_sq(&e) - exact_l2).abs(), (h1 - exact_h1).abs())
            })
            .collect();
        for w in errs.windows(2) {
            assert!(w[0].0 / w[1].0 >= 3.5, "l2 ratio {}", w[0].0 / w[1].0);
            assert!(w[0].1 / w[1].1 >= 3.5, "h1 ratio {}", w[0].1 / w[1].1);
        }
    }

    #[test]
    fn dirichlet_trace_shifts_boundary_differences() {
        let g = Grid::unit(10);
        let t = Trace::constant(g, 2.0);
        let f = ScalarField::constant(g, 2.0);
        assert!(h1_semi_sq(&f, Boundary::Dirichlet(&t)).abs() < 1e-14);
        assert!(h1_semi_sq(&f, Boundary::Zero) > 1.0);
    }

    #[test]
    fn divergence_cases() {
        let g = Grid::new(12, 10, 1.0, 0.7).unwrap();
        assert_eq!(discrete_divergence(&VectorField::zeros(g)).max_abs(), 0.0);
        let shear = VectorField::from_fn(g, |_, y| (y, 0.0));
        assert!(discrete_divergence(&shear).max_abs() < 1e-14);
        let radial = VectorField::from_fn(g, |x, y| (x, y));
        let d = discrete_divergence(&radial);
        assert!(d.values.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn vector_dirichlet_energy_is_symmetric_and_nonnegative() {
        let g = Grid::unit(9);
        let mut a = VectorField::from_fn(g, |x, y| ((3.0 * x).sin() * y, x * x - y));
        let mut b = VectorField::from_fn(g, |x, y| (y.cos(), x * y));
        a.zero_wall_normals();
        b.zero_wall_normals();
        assert!((vector_h1_inner(&a, &b) - vector_h1_inner(&b, &a)).abs() < 1e-12);
        assert!(vector_h1_inner(&a, &a) > 0.0);
    }

    #[test]
    fn grid_rejects_small_counts() {
        assert!(Grid::new(4, 16, 1.0, 1.0).is_err());
        assert!(Grid::new(16, 16, -1.0, 1.0).is_err());
    }

    #[test]
    fn boundary_data_rejects_nonpositive_gamma() {
        let g = Grid::unit(8);
        assert!(BoundaryData::uniform(g, 0.0, 1.0, 0.0).is_err());
        let bd = BoundaryData::uniform(g, 1.0, 2.0, 0.5).unwrap();
        assert_eq!(bd.gamma_min(), 1.0);
        assert_eq!(bd.gamma_max(), 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn integrate_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, seed in 0u64..1000) {
                let g = Grid::new(9, 11, 1.3, 0.8).unwrap();
                let s = seed as f64;
                let f = ScalarField::from_fn(g, |x, y| (x * 3.0 + s).sin() + y);
                let h = ScalarField::from_fn(g, |x, y| (y * 2.0 - s).cos() * x);
                let combo = f.scaled(a).add(&h.scaled(b));
                let lhs = integrate(&combo);
                let rhs = a * integrate(&f) + b * integrate(&h);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }

            #[test]
            fn l2_vanishes_only_for_zero(k in 0usize..81, v in 1e-3f64..1e3) {
                let g = Grid::unit(9);
                let mut f = ScalarField::zeros(g);
                prop_assert_eq!(l2_sq(&f), 0.0);
                f.values[k] = v;
                prop_assert!(l2_sq(&f) > 0.0);
            }
        }
    }
}
