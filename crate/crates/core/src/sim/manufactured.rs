//! Steady manufactured solution of the forced coupled system.
//!
//! With `s = sin(πx/Lx) sin(πy/Ly)`:
//! `Φ = A s`, `c₂ = 1 + ¼cos(πx/Lx)cos(πy/Ly)`, `c₁ = c₂ + ε(-ΔΦ)`, and `u`
//! derived from the stream function `ψ = U s²`. Sources are computed from
//! the closed forms with fourth-order differences.

use crate::mesh::{BoundaryData, Grid, ScalarField, Trace, VectorField};
use crate::fluid::solenoidal_from_stream;
use crate::transport::{Params, Z};

use super::Forcing;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Manufactured {
    pub amp_phi: f64,
    pub amp_u: f64,
    pub lx: f64,
    pub ly: f64,
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedError {
    pub c: f64,
    pub phi: f64,
    pub u: f64,
}

const PI: f64 = std::f64::consts::PI;

fn d1(f: &impl Fn(f64, f64) -> f64, x: f64, y: f64, h: f64, along_x: bool) -> f64 {
    let at = |k: f64| if along_x { f(x + k * h, y) } else { f(x, y + k * h) };
    (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * h)
}

fn d2(f: &impl Fn(f64, f64) -> f64, x: f64, y: f64, h: f64, along_x: bool) -> f64 {
    let at = |k: f64| if along_x { f(x + k * h, y) } else { f(x, y + k * h) };
    (16.0 * (at(1.0) + at(-1.0)) - (at(2.0) + at(-2.0)) - 30.0 * at(0.0)) / (12.0 * h * h)
}

impl Manufactured {
    pub fn new(grid: &Grid, p: &Params) -> Self {
        Manufactured { amp_phi: 0.5, amp_u: 0.5, lx: grid.lx, ly: grid.ly, eps: p.eps }
    }

    fn s(&self, x: f64, y: f64) -> f64 {
        (PI * x / self.lx).sin() * (PI * y / self.ly).sin()
    }

    pub fn phi(&self, x: f64, y: f64) -> f64 {
        self.amp_phi * self.s(x, y)
    }

    fn minus_lap_phi(&self, x: f64, y: f64) -> f64 {
        let k2 = PI * PI * (1.0 / (self.lx * self.lx) + 1.0 / (self.ly * self.ly));
        k2 * self.phi(x, y)
    }

    pub fn c(&self, species: usize, x: f64, y: f64) -> f64 {
        let c2 = 1.0 + 0.25 * (PI * x / self.lx).cos() * (PI * y / self.ly).cos();
        if species == 0 {
            c2 + self.eps * self.minus_lap_phi(x, y)
        } else {
            c2
        }
    }

    pub fn psi(&self, x: f64, y: f64) -> f64 {
        self.amp_u * self.s(x, y).powi(2)
    }

    pub fn u(&self, x: f64, y: f64) -> (f64, f64) {
        let (a, b) = (PI / self.lx, PI / self.ly);
        let (sx, cx) = (a * x).sin_cos();
        let (sy, cy) = (b * y).sin_cos();
        let s = sx * sy;
        (2.0 * self.amp_u * s * b * sx * cy, -2.0 * self.amp_u * s * a * cx * sy)
    }

    fn fd_step(&self) -> f64 {
        1e-3 * self.lx.min(self.ly)
    }

    pub fn boundary_data(&self, grid: &Grid) -> BoundaryData {
        BoundaryData::new(
            grid,
            Trace::from_fn(*grid, |x, y| self.c(0, x, y)),
            Trace::from_fn(*grid, |x, y| self.c(1, x, y)),
            Trace::from_fn(*grid, |x, y| self.phi(x, y)),
        )
        .expect("manufactured boundary data is valid")
    }

    /// Sources that make the fields a steady solution.
    pub fn forcing(&self, grid: &Grid, p: &Params) -> Forcing {
        let h = self.fd_step();
        let phi = |x: f64, y: f64| self.phi(x, y);
        let np = [0, 1].map(|s| {
            let c = |x: f64, y: f64| self.c(s, x, y);
            ScalarField::from_fn(*grid, |x, y| {
                let (cx, cy) = (d1(&c, x, y, h, true), d1(&c, x, y, h, false));
                let lap_c = d2(&c, x, y, h, true) + d2(&c, x, y, h, false);
                let (px, py) = (d1(&phi, x, y, h, true), d1(&phi, x, y, h, false));
                let div_drift = cx * px + cy * py - c(x, y) * self.minus_lap_phi(x, y);
                let (ux, uy) = self.u(x, y);
                -p.d(s) * (lap_c + Z[s] * div_drift) + ux * cx + uy * cy
            })
        });
        // -νΔu + Kρ∇Φ, where ρ∇Φ is the exact field
        let force = |x: f64, y: f64, comp: usize| {
            let uc = |x: f64, y: f64| if comp == 0 { self.u(x, y).0 } else { self.u(x, y).1 };
            let lap = d2(&uc, x, y, h, true) + d2(&uc, x, y, h, false);
            let rho = self.c(0, x, y) - self.c(1, x, y);
            let grad = d1(&phi, x, y, h, comp == 0);
            -p.nu * lap + p.k * rho * grad
        };
        let mut f = VectorField::zeros(*grid);
        for j in 0..grid.ny {
            for i in 1..grid.nx {
                let (x, y) = grid.xface_pos(i, j);
                f.ux[grid.xface(i, j)] = force(x, y, 0);
            }
        }
        for j in 1..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.yface_pos(i, j);
                f.uy[grid.yface(i, j)] = force(x, y, 1);
            }
        }
        Forcing { np, stokes: f }
    }

    /// Exact fields sampled on the grid; velocity from nodal `ψ`.
    pub fn sampled(&self, grid: &Grid) -> (ScalarField, ScalarField, VectorField) {
        (
            ScalarField::from_fn(*grid, |x, y| self.c(0, x, y)),
            ScalarField::from_fn(*grid, |x, y| self.c(1, x, y)),
            solenoidal_from_stream(*grid, |x, y| self.psi(x, y)),
        )
    }

    /// Max-norm errors against point values at cell centers and faces.
    pub fn errors(&self, c1: &ScalarField, c2: &ScalarField, phi: &ScalarField, u: &VectorField) -> ManufacturedError {
        let g = c1.grid;
        let mut ec = 0.0f64;
        let mut ep = 0.0f64;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = g.center(i, j);
                ec = ec.max((c1.at(i, j) - self.c(0, x, y)).abs()).max((c2.at(i, j) - self.c(1, x, y)).abs());
                ep = ep.max((phi.at(i, j) - self.phi(x, y)).abs());
            }
        }
        let mut eu = 0.0f64;
        for j in 0..g.ny {
            for i in 1..g.nx {
                let (x, y) = g.xface_pos(i, j);
                eu = eu.max((u.ux[g.xface(i, j)] - self.u(x, y).0).abs());
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                let (x, y) = g.yface_pos(i, j);
                eu = eu.max((u.uy[g.yface(i, j)] - self.u(x, y).1).abs());
            }
        }
        ManufacturedError { c: ec, phi: ep, u: eu }
    }
}
