//! Time-dependent Stokes flow on the MAC grid with no-slip walls.
//!
//! Unknowns are the interior face velocities; wall-normal faces are zero. The
//! discrete Leray projector `P` removes the gradient of a Neumann pressure
//! potential and is orthogonal in the face inner product. A time step solves
//! `(I + dt ν P L) u' = P(u + dt f)` on the solenoidal subspace by conjugate
//! gradients, preconditioned by the classical projection step
//! `P (I + dt ν L)^{-1}`. Both `P` and the preconditioner use exact
//! trigonometric-transform solves.

use crate::banded::FivePoint;
use crate::eigen::{smallest_eigenpairs, SymmetricOperator};
use crate::error::{Error, Result};
use crate::krylov::{dot, pcg};
use crate::mesh::{vector_l2_sq, BoundaryData, Grid, ScalarField, VectorField};
use crate::spectral::{Closure, SeparableSolver};
use crate::transport::{Params, SgFaces};

/// Relative residual for the solenoidal CG solves.
pub const STOKES_TOL: f64 = 1e-12;
const STOKES_MAX_ITERS: usize = 500;

fn n_xint(g: &Grid) -> usize {
    (g.nx - 1) * g.ny
}

fn n_yint(g: &Grid) -> usize {
    g.nx * (g.ny - 1)
}

/// Interior face velocities as one flat vector (x-faces first).
pub fn to_flat(u: &VectorField) -> Vec<f64> {
    let g = u.grid;
    let mut out = Vec::with_capacity(n_xint(&g) + n_yint(&g));
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.push(u.ux[g.xface(i, j)]);
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.push(u.uy[g.yface(i, j)]);
        }
    }
    out
}

/// Inverse of [`to_flat`]; wall-normal faces are set to zero.
pub fn from_flat(g: &Grid, v: &[f64]) -> VectorField {
    let mut u = VectorField::zeros(*g);
    let mut k = 0;
    for j in 0..g.ny {
        for i in 1..g.nx {
            u.ux[g.xface(i, j)] = v[k];
            k += 1;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            u.uy[g.yface(i, j)] = v[k];
            k += 1;
        }
    }
    u
}

/// `shift·I + coef·L` on the x-face and y-face lattices, where `L` is the
/// componentwise `-Δ` with no-slip ghosts.
fn helmholtz_stencils(g: &Grid, shift: f64, coef: f64) -> (FivePoint, FivePoint) {
    let (nx, ny) = (g.nx, g.ny);
    let ax = coef / (g.hx() * g.hx());
    let ay = coef / (g.hy() * g.hy());
    let mut sx = FivePoint::zeros(nx - 1, ny);
    for j in 0..ny {
        for i in 0..nx - 1 {
            let k = i + (nx - 1) * j;
            let wall = j == 0 || j == ny - 1;
            sx.diag[k] = shift + 2.0 * ax + if wall { 3.0 * ay } else { 2.0 * ay };
            sx.west[k] = -ax;
            sx.east[k] = -ax;
            sx.south[k] = -ay;
            sx.north[k] = -ay;
        }
    }
    let mut sy = FivePoint::zeros(nx, ny - 1);
    for j in 0..ny - 1 {
        for i in 0..nx {
            let k = i + nx * j;
            let wall = i == 0 || i == nx - 1;
            sy.diag[k] = shift + 2.0 * ay + if wall { 3.0 * ax } else { 2.0 * ax };
            sy.west[k] = -ax;
            sy.east[k] = -ax;
            sy.south[k] = -ay;
            sy.north[k] = -ay;
        }
    }
    (sx, sy)
}

fn split_apply(sx: &FivePoint, sy: &FivePoint, v: &[f64]) -> Vec<f64> {
    let n1 = sx.len();
    let mut out = sx.apply(&v[..n1]);
    out.extend(sy.apply(&v[n1..]));
    out
}

/// `(shift + coef L)^{-1}` on both face lattices.
struct SplitSolver {
    x: SeparableSolver,
    y: SeparableSolver,
    ax: f64,
    ay: f64,
}

impl SplitSolver {
    fn new(g: &Grid) -> Self {
        let (nx, ny) = (g.nx, g.ny);
        SplitSolver {
            x: SeparableSolver::new(nx - 1, ny, Closure::Dirichlet, Closure::WallDirichlet),
            y: SeparableSolver::new(nx, ny - 1, Closure::WallDirichlet, Closure::Dirichlet),
            ax: 1.0 / (g.hx() * g.hx()),
            ay: 1.0 / (g.hy() * g.hy()),
        }
    }

    fn solve(&self, v: &[f64], shift: f64, coef: f64) -> Vec<f64> {
        let n1 = self.x.len();
        let (ax, ay) = (coef * self.ax, coef * self.ay);
        let mut out = self.x.solve(&v[..n1], shift, ax, ay);
        out.extend(self.y.solve(&v[n1..], shift, ax, ay));
        out
    }
}

/// Discrete Leray projector on one grid.
pub struct Projector {
    grid: Grid,
    poisson: SeparableSolver,
}

impl Projector {
    pub fn new(grid: Grid) -> Result<Self> {
        Ok(Projector {
            grid,
            poisson: SeparableSolver::new(grid.nx, grid.ny, Closure::Neumann, Closure::Neumann),
        })
    }

    /// Cell divergence of a flat interior-face vector.
    fn divergence(&self, v: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (hx, hy) = (g.hx(), g.hy());
        let n1 = n_xint(g);
        let ux = |i: usize, j: usize| if i == 0 || i == nx { 0.0 } else { v[(i - 1) + (nx - 1) * j] };
        let uy = |i: usize, j: usize| if j == 0 || j == ny { 0.0 } else { v[n1 + i + nx * (j - 1)] };
        let mut d = vec![0.0; g.n_cells()];
        for j in 0..ny {
            for i in 0..nx {
                d[g.idx(i, j)] = (ux(i + 1, j) - ux(i, j)) / hx + (uy(i, j + 1) - uy(i, j)) / hy;
            }
        }
        d
    }

    /// Applies `P` in place to a flat interior-face vector.
    pub fn project(&self, v: &mut [f64]) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (hx, hy) = (g.hx(), g.hy());
        let mut rhs = self.divergence(v);
        rhs.iter_mut().for_each(|r| *r = -*r);
        let q = self.poisson.solve(&rhs, 0.0, 1.0 / (hx * hx), 1.0 / (hy * hy));
        let n1 = n_xint(g);
        for j in 0..ny {
            for i in 1..nx {
                v[(i - 1) + (nx - 1) * j] -= (q[g.idx(i, j)] - q[g.idx(i - 1, j)]) / hx;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                v[n1 + i + nx * (j - 1)] -= (q[g.idx(i, j)] - q[g.idx(i, j - 1)]) / hy;
            }
        }
    }

    pub fn project_field(&self, u: &VectorField) -> VectorField {
        let mut v = to_flat(u);
        self.project(&mut v);
        from_flat(&self.grid, &v)
    }
}

/// Projector plus Helmholtz solver for one `(grid, ν)`.
pub struct StokesWorkspace {
    grid: Grid,
    nu: f64,
    projector: Projector,
    lap_x: FivePoint,
    lap_y: FivePoint,
    helmholtz: SplitSolver,
}

impl std::fmt::Debug for StokesWorkspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StokesWorkspace").field("grid", &self.grid).field("nu", &self.nu).finish()
    }
}

impl StokesWorkspace {
    pub fn new(grid: Grid, nu: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::invalid(format!("viscosity must be positive, got {nu}")));
        }
        let (lap_x, lap_y) = helmholtz_stencils(&grid, 0.0, 1.0);
        Ok(StokesWorkspace {
            grid,
            nu,
            projector: Projector::new(grid)?,
            lap_x,
            lap_y,
            helmholtz: SplitSolver::new(&grid),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    /// `L v` (componentwise `-Δ`) on a flat interior vector.
    pub fn apply_laplacian(&self, v: &[f64]) -> Vec<f64> {
        split_apply(&self.lap_x, &self.lap_y, v)
    }

    /// Solves `(I + dt ν P L) x = b` on the solenoidal subspace (`b = P b`);
    /// `scale` sets the absolute residual floor.
    fn solve_flat(&self, b: &[f64], dt: f64, scale: f64) -> Result<Vec<f64>> {
        let a = dt * self.nu;
        let apply = |v: &[f64]| -> Result<Vec<f64>> {
            let mut lv = self.apply_laplacian(v);
            self.projector.project(&mut lv);
            Ok(v.iter().zip(&lv).map(|(v, l)| v + a * l).collect())
        };
        let precond = |r: &[f64]| -> Result<Vec<f64>> {
            let mut z = self.helmholtz.solve(r, 1.0, a);
            self.projector.project(&mut z);
            Ok(z)
        };
        let x0 = precond(b)?;
        let (mut x, _) = pcg(apply, precond, b, x0, STOKES_TOL, 0.1 * STOKES_TOL * scale, STOKES_MAX_ITERS)?;
        self.projector.project(&mut x);
        Ok(x)
    }
}

/// One backward-Euler step of the projected Stokes equation.
pub fn stokes_step(u: &VectorField, f: &VectorField, dt: f64, ws: &StokesWorkspace) -> Result<VectorField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    u.grid.same_as(&ws.grid)?;
    f.grid.same_as(&ws.grid)?;
    let mut b = to_flat(u);
    let fv = to_flat(f);
    b.iter_mut().zip(&fv).for_each(|(b, f)| *b += dt * f);
    let scale = crate::krylov::norm(&b);
    ws.projector.project(&mut b);
    let x = ws.solve_flat(&b, dt, scale)?;
    let out = from_flat(&ws.grid, &x);
    if !out.is_finite() {
        return Err(Error::LinearSolveFailure("non-finite velocity".into()));
    }
    Ok(out)
}

/// Face-centered `-Kρ∇Φ`: central gradient, face-averaged `ρ`. Wall faces are zero.
pub fn electric_force(rho: &ScalarField, phi: &ScalarField, k: f64) -> VectorField {
    let g = rho.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let mut f = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let r = 0.5 * (rho.at(i, j) + rho.at(i - 1, j));
            f.ux[g.xface(i, j)] = -k * r * (phi.at(i, j) - phi.at(i - 1, j)) / hx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let r = 0.5 * (rho.at(i, j) + rho.at(i, j - 1));
            f.uy[g.yface(i, j)] = -k * r * (phi.at(i, j) - phi.at(i, j - 1)) / hy;
        }
    }
    f
}

/// Electric force consistent with the Scharfetter-Gummel fluxes:
/// `K[∇(c₁+c₂) + F₁/D₁ + F₂/D₂]` on interior faces, where `Fᵢ` are the
/// drift-diffusion fluxes without advection. Since `-ρ∇Φ = ∇(c₁+c₂) + Σ Jᵢ/Dᵢ`
/// this approximates `-Kρ∇Φ`, and it is an exact discrete gradient whenever
/// both species are in Boltzmann equilibrium.
pub fn electric_force_sg(c1: &ScalarField, c2: &ScalarField, phi: &ScalarField, bd: &BoundaryData, p: &Params) -> VectorField {
    let g = c1.grid;
    let (hx, hy) = (g.hx(), g.hy());
    let f1 = SgFaces::new(0, phi, &bd.w, None, p.d1).fluxes(c1, &bd.gamma1);
    let f2 = SgFaces::new(1, phi, &bd.w, None, p.d2).fluxes(c2, &bd.gamma2);
    let sigma = |i: usize, j: usize| c1.at(i, j) + c2.at(i, j);
    let mut f = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let k = g.xface(i, j);
            let grad = (sigma(i, j) - sigma(i - 1, j)) / hx;
            f.ux[k] = p.k * (grad + f1.0[k] / p.d1 + f2.0[k] / p.d2);
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let k = g.yface(i, j);
            let grad = (sigma(i, j) - sigma(i, j - 1)) / hy;
            f.uy[k] = p.k * (grad + f1.1[k] / p.d1 + f2.1[k] / p.d2);
        }
    }
    f
}

/// Discretely solenoidal field from a stream function sampled at grid nodes,
/// `u = (∂ψ/∂y, -∂ψ/∂x)`. Vanishing `ψ` on the boundary gives no-flux walls.
pub fn solenoidal_from_stream(grid: Grid, psi: impl Fn(f64, f64) -> f64) -> VectorField {
    let (hx, hy) = (grid.hx(), grid.hy());
    let node = |i: usize, j: usize| psi(i as f64 * hx, j as f64 * hy);
    let mut u = VectorField::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..=grid.nx {
            u.ux[grid.xface(i, j)] = (node(i, j + 1) - node(i, j)) / hy;
        }
    }
    for j in 0..=grid.ny {
        for i in 0..grid.nx {
            u.uy[grid.yface(i, j)] = -(node(i + 1, j) - node(i, j)) / hx;
        }
    }
    u.zero_wall_normals();
    u
}

/// The Stokes operator `P L` restricted to discrete solenoidal fields.
pub struct StokesOperator {
    grid: Grid,
    projector: Projector,
    lap_x: FivePoint,
    lap_y: FivePoint,
    lu: SplitSolver,
}

impl StokesOperator {
    pub fn new(grid: Grid) -> Result<Self> {
        let (lap_x, lap_y) = helmholtz_stencils(&grid, 0.0, 1.0);
        let lu = SplitSolver::new(&grid);
        Ok(StokesOperator {
            grid,
            projector: Projector::new(grid)?,
            lap_x,
            lap_y,
            lu,
        })
    }
}

impl SymmetricOperator for StokesOperator {
    fn dim(&self) -> usize {
        n_xint(&self.grid) + n_yint(&self.grid)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = split_apply(&self.lap_x, &self.lap_y, x);
        self.projector.project(&mut y);
        y
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = b.to_vec();
        self.projector.project(&mut rhs);
        let precond = |r: &[f64]| -> Result<Vec<f64>> {
            let mut z = self.lu.solve(r, 0.0, 1.0);
            self.projector.project(&mut z);
            Ok(z)
        };
        let x0 = precond(&rhs)?;
        let scale = crate::krylov::norm(b);
        let (mut x, _) = pcg(|v| Ok(SymmetricOperator::apply(self, v)), precond, &rhs, x0, 1e-13, 1e-14 * scale, STOKES_MAX_ITERS)?;
        self.projector.project(&mut x);
        Ok(x)
    }

    fn project(&self, x: &mut [f64]) -> Result<()> {
        self.projector.project(x);
        Ok(())
    }

    fn rank(&self) -> usize {
        self.dim() - (self.grid.n_cells() - 1)
    }
}

/// Lowest Stokes eigenpair, eigenvector normalized in `L²`.
pub fn first_stokes_mode(grid: &Grid) -> Result<(f64, VectorField)> {
    let op = StokesOperator::new(*grid)?;
    let pairs = smallest_eigenpairs(&op, 1, 1e-10)?;
    let mut u = from_flat(grid, &pairs.vectors[0]);
    let nrm = vector_l2_sq(&u).sqrt();
    u = u.scaled(1.0 / nrm);
    Ok((pairs.values[0], u))
}

/// `‖P v‖` relative to `‖v‖`, a cheap solenoidality probe.
pub fn solenoidal_fraction(ws: &StokesWorkspace, u: &VectorField) -> f64 {
    let v = to_flat(u);
    let mut pv = v.clone();
    ws.projector.project(&mut pv);
    (dot(&pv, &pv) / dot(&v, &v).max(1e-300)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::{smallest_eigenvalues, SpectralOperator};
    use crate::mesh::{discrete_divergence, vector_h1_inner, vector_inner};
    use std::f64::consts::PI;

    fn vortex(g: Grid) -> VectorField {
        solenoidal_from_stream(g, |x, y| ((PI * x).sin() * (PI * y).sin()).powi(2))
    }

    #[test]
    fn force_vanishes_for_trivial_data() {
        let g = Grid::unit(10);
        let phi = ScalarField::from_fn(g, |x, y| x * y);
        assert_eq!(electric_force(&ScalarField::zeros(g), &phi, 3.0).max_abs(), 0.0);
        let rho = ScalarField::from_fn(g, |x, _| x);
        assert_eq!(electric_force(&rho, &ScalarField::constant(g, 2.0), 3.0).max_abs(), 0.0);
    }

    #[test]
    fn force_of_linear_potential() {
        let g = Grid::new(12, 9, 1.0, 0.8).unwrap();
        let f = electric_force(&ScalarField::constant(g, 1.0), &ScalarField::from_fn(g, |x, _| x), 2.0);
        for j in 0..g.ny {
            for i in 1..g.nx {
                assert!((f.ux[g.xface(i, j)] + 2.0).abs() < 1e-12);
            }
        }
        assert!(f.uy.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_in_zero_out() {
        let g = Grid::unit(12);
        let ws = StokesWorkspace::new(g, 1.0).unwrap();
        let u = stokes_step(&VectorField::zeros(g), &VectorField::zeros(g), 0.1, &ws).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn gradient_forces_are_annihilated() {
        let g = Grid::new(16, 12, 1.0, 0.75).unwrap();
        let ws = StokesWorkspace::new(g, 0.7).unwrap();
        let q = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() * y + x * x);
        let mut f = VectorField::zeros(g);
        for j in 0..g.ny {
            for i in 1..g.nx {
                f.ux[g.xface(i, j)] = (q.at(i, j) - q.at(i - 1, j)) / g.hx();
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                f.uy[g.yface(i, j)] = (q.at(i, j) - q.at(i, j - 1)) / g.hy();
            }
        }
        let u = stokes_step(&VectorField::zeros(g), &f, 0.05, &ws).unwrap();
        assert!(u.max_abs() < 1e-9, "{}", u.max_abs());
        let base = vortex(g);
        let u2 = stokes_step(&base, &f, 0.05, &ws).unwrap();
        let u3 = stokes_step(&base, &VectorField::zeros(g), 0.05, &ws).unwrap();
        assert!(u2.max_abs_diff(&u3) < 1e-9);
    }

    #[test]
    fn first_mode_decays_at_backward_euler_rate() {
        let g = Grid::unit(24);
        let (lambda, u) = first_stokes_mode(&g).unwrap();
        let ev = smallest_eigenvalues(&g, SpectralOperator::StokesOperator, 1).unwrap();
        assert!((ev[0] - lambda).abs() < 1e-6 * lambda);
        let ws = StokesWorkspace::new(g, 0.5).unwrap();
        let dt = 0.01;
        let next = stokes_step(&u, &VectorField::zeros(g), dt, &ws).unwrap();
        let ratio = vector_l2_sq(&next).sqrt();
        let expect = 1.0 / (1.0 + dt * 0.5 * lambda);
        assert!((ratio - expect).abs() < 0.01 * expect, "{ratio} vs {expect}");
    }

    #[test]
    fn stokes_first_eigenvalue_near_continuum_value() {
        // continuum value for the unit square is about 52.3447
        let ev = smallest_eigenvalues(&Grid::unit(32), SpectralOperator::StokesOperator, 2).unwrap();
        assert!((ev[0] - 52.3447).abs() < 0.03 * 52.3447, "{}", ev[0]);
        assert!(ev[0] <= ev[1]);
    }

    #[test]
    fn unforced_step_is_dissipative_and_solenoidal() {
        let g = Grid::new(20, 14, 1.0, 0.7).unwrap();
        let ws = StokesWorkspace::new(g, 1.3).unwrap();
        let u = vortex(g);
        let next = stokes_step(&u, &VectorField::zeros(g), 0.02, &ws).unwrap();
        assert!(vector_l2_sq(&next) <= vector_l2_sq(&u));
        assert!(discrete_divergence(&next).max_abs() < 1e-9);
        let forced = stokes_step(&u, &VectorField::from_fn(g, |x, y| (y * y, x.sin())), 0.02, &ws).unwrap();
        assert!(discrete_divergence(&forced).max_abs() < 1e-9);
    }

    #[test]
    fn projector_is_idempotent_and_self_adjoint() {
        let g = Grid::new(14, 10, 1.0, 0.6).unwrap();
        let pr = Projector::new(g).unwrap();
        let mut a = VectorField::from_fn(g, |x, y| (x * y + 1.0, (4.0 * x).cos()));
        let mut b = VectorField::from_fn(g, |x, y| (y.sin(), x - y));
        a.zero_wall_normals();
        b.zero_wall_normals();
        let pa = pr.project_field(&a);
        let ppa = pr.project_field(&pa);
        assert!(pa.max_abs_diff(&ppa) < 1e-12);
        let pb = pr.project_field(&b);
        assert!((vector_inner(&pa, &b) - vector_inner(&a, &pb)).abs() < 1e-12);
    }

    #[test]
    fn laplacian_matches_vector_dirichlet_energy() {
        let g = Grid::new(11, 9, 1.0, 0.8).unwrap();
        let ws = StokesWorkspace::new(g, 1.0).unwrap();
        let a = vortex(g);
        let b = solenoidal_from_stream(g, |x, y| (x * (1.0 - x) * y * (0.8 - y)).powi(2) * (2.0 * x).exp());
        let lb = from_flat(&g, &ws.apply_laplacian(&to_flat(&b)));
        assert!((vector_inner(&a, &lb) - vector_h1_inner(&a, &b)).abs() < 1e-10 * vector_h1_inner(&a, &a).sqrt());
    }

    #[test]
    fn transform_solves_match_stencils() {
        for g in [Grid::new(10, 9, 1.0, 0.8).unwrap(), Grid::unit(32), Grid::unit(128)] {
            let (sx, sy) = helmholtz_stencils(&g, 1.0, 0.3);
            let b: Vec<f64> = (0..n_xint(&g) + n_yint(&g)).map(|k| (k as f64 * 0.7).sin()).collect();
            let x = SplitSolver::new(&g).solve(&b, 1.0, 0.3);
            let e = split_apply(&sx, &sy, &x).iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(e < 1e-10, "{}: {e:e}", g.nx);
            let mut v = b.clone();
            let pr = Projector::new(g).unwrap();
            pr.project(&mut v);
            let d = pr.divergence(&v).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(d < 1e-9, "{}: divergence {d:e}", g.nx);
        }
    }
}
