//! Linear elliptic solves on the cell-centered grid: the ε-scaled potential
//! equation, the homogeneous Dirichlet inverse Laplacian, harmonic extensions
//! and the low end of the discrete spectra.
//!
//! The Dirichlet Laplacian is factored once per grid and shared; every solve
//! is a pair of banded triangular sweeps.

use std::sync::Arc;

use crate::banded::{BandedLu, FivePoint};
use crate::eigen::{smallest_eigenpairs, SymmetricOperator};
use crate::error::{Error, Result};
use crate::fluid::StokesOperator;
use crate::mesh::{Grid, ScalarField, Trace};

/// Relative residual every elliptic solve must reach.
pub const ELLIPTIC_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub residual_l2: f64,
    pub converged: bool,
}

/// Five-point `coef·(-Δ_h)` with Dirichlet ghosts at the walls.
pub fn dirichlet_stencil(grid: &Grid, coef: f64) -> FivePoint {
    let (nx, ny) = (grid.nx, grid.ny);
    let ax = coef / (grid.hx() * grid.hx());
    let ay = coef / (grid.hy() * grid.hy());
    let mut op = FivePoint::zeros(nx, ny);
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.idx(i, j);
            let mut d = 0.0;
            if i > 0 {
                op.west[k] = -ax;
                d += ax;
            } else {
                d += 2.0 * ax;
            }
            if i + 1 < nx {
                op.east[k] = -ax;
                d += ax;
            } else {
                d += 2.0 * ax;
            }
            if j > 0 {
                op.south[k] = -ay;
                d += ay;
            } else {
                d += 2.0 * ay;
            }
            if j + 1 < ny {
                op.north[k] = -ay;
                d += ay;
            } else {
                d += 2.0 * ay;
            }
            op.diag[k] = d;
        }
    }
    op
}

/// Right-hand-side contribution of a Dirichlet trace to `coef·(-Δ_h)`.
pub fn trace_lift(grid: &Grid, trace: &Trace, coef: f64, rhs: &mut [f64]) {
    let ax = 2.0 * coef / (grid.hx() * grid.hx());
    let ay = 2.0 * coef / (grid.hy() * grid.hy());
    for j in 0..grid.ny {
        rhs[grid.idx(0, j)] += ax * trace.left[j];
        rhs[grid.idx(grid.nx - 1, j)] += ax * trace.right[j];
    }
    for i in 0..grid.nx {
        rhs[grid.idx(i, 0)] += ay * trace.bottom[i];
        rhs[grid.idx(i, grid.ny - 1)] += ay * trace.top[i];
    }
}

/// Applies `-Δ_h` with the given trace (zero trace if `None`).
pub fn apply_laplacian(f: &ScalarField, trace: Option<&Trace>) -> ScalarField {
    let g = f.grid;
    let mut out = dirichlet_stencil(&g, 1.0).apply(&f.values);
    if let Some(t) = trace {
        let mut lift = vec![0.0; g.n_cells()];
        trace_lift(&g, t, 1.0, &mut lift);
        for (o, l) in out.iter_mut().zip(lift) {
            *o -= l;
        }
    }
    ScalarField { grid: g, values: out }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Factored homogeneous Dirichlet Laplacian `-Δ_D` on one grid.
#[derive(Debug)]
pub struct DirichletLaplacian {
    grid: Grid,
    op: FivePoint,
    lu: BandedLu,
}

impl DirichletLaplacian {
    pub fn new(grid: Grid) -> Result<Arc<Self>> {
        let op = dirichlet_stencil(&grid, 1.0);
        let lu = op.factor()?;
        Ok(Arc::new(DirichletLaplacian { grid, op, lu }))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.op.apply(x)
    }

    /// Solves `-Δ_h x = rhs` with one step of refinement if needed.
    pub fn solve_raw(&self, rhs: &[f64]) -> (Vec<f64>, SolverReport) {
        let bnorm = norm2(rhs);
        if bnorm == 0.0 {
            return (
                vec![0.0; rhs.len()],
                SolverReport {
                    iterations: 0,
                    residual_l2: 0.0,
                    converged: true,
                },
            );
        }
        let mut x = self.lu.solve(rhs);
        let mut iterations = 1;
        let residual = |x: &[f64]| -> Vec<f64> {
            self.op.apply(x).iter().zip(rhs).map(|(a, b)| b - a).collect()
        };
        let mut r = residual(&x);
        let mut rel = norm2(&r) / bnorm;
        while rel > ELLIPTIC_TOL * 1e-2 && iterations < 3 {
            let dx = self.lu.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
            iterations += 1;
            r = residual(&x);
            rel = norm2(&r) / bnorm;
        }
        (
            x,
            SolverReport {
                iterations,
                residual_l2: rel,
                converged: rel <= ELLIPTIC_TOL,
            },
        )
    }

    fn checked(&self, rhs: &[f64], solver: &'static str) -> Result<ScalarField> {
        let (x, rep) = self.solve_raw(rhs);
        if !rep.converged {
            return Err(Error::NonConvergence {
                solver,
                iterations: rep.iterations,
                residual: rep.residual_l2,
            });
        }
        Ok(ScalarField {
            grid: self.grid,
            values: x,
        })
    }
}

/// Solves `-ε Δ_h Φ = ρ` with `Φ = W` on the boundary.
pub fn solve_potential(
    lap: &DirichletLaplacian,
    rho: &ScalarField,
    w: &Trace,
    eps: f64,
) -> Result<(ScalarField, SolverReport)> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("permittivity must be positive, got {eps}")));
    }
    let g = lap.grid;
    rho.grid.same_as(&g)?;
    let mut rhs: Vec<f64> = rho.values.iter().map(|r| r / eps).collect();
    trace_lift(&g, w, 1.0, &mut rhs);
    let (x, rep) = lap.solve_raw(&rhs);
    Ok((ScalarField { grid: g, values: x }, rep))
}

/// `(-Δ_D)^{-1} ρ` with zero trace.
pub fn inv_dirichlet_laplacian(lap: &DirichletLaplacian, rho: &ScalarField) -> Result<ScalarField> {
    rho.grid.same_as(&lap.grid)?;
    lap.checked(&rho.values, "inverse Dirichlet Laplacian")
}

/// Discrete harmonic function with the given trace.
pub fn harmonic_extension(lap: &DirichletLaplacian, trace: &Trace) -> Result<ScalarField> {
    let g = lap.grid;
    let mut rhs = vec![0.0; g.n_cells()];
    trace_lift(&g, trace, 1.0, &mut rhs);
    lap.checked(&rhs, "harmonic extension")
}

impl SymmetricOperator for DirichletLaplacian {
    fn dim(&self) -> usize {
        self.grid.n_cells()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.op.apply(x)
    }
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.lu.solve(b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralOperator {
    DirichletLaplacian,
    StokesOperator,
}

/// Eigenvalue relative accuracy target.
pub const EIGEN_TOL: f64 = 1e-6;

/// The `k` smallest eigenvalues (nondecreasing) of the chosen discrete operator.
pub fn smallest_eigenvalues(grid: &Grid, op: SpectralOperator, k: usize) -> Result<Vec<f64>> {
    if k > 64 {
        return Err(Error::invalid(format!("at most 64 eigenvalues may be requested, got {k}")));
    }
    // residual tolerance r implies eigenvalue error ~ r^2 relative
    let tol = EIGEN_TOL.sqrt() * 1e-2;
    let pairs = match op {
        SpectralOperator::DirichletLaplacian => {
            let lap = DirichletLaplacian::new(*grid)?;
            smallest_eigenpairs(lap.as_ref(), k, tol)?
        }
        SpectralOperator::StokesOperator => {
            let st = StokesOperator::new(*grid)?;
            smallest_eigenpairs(&st, k, tol)?
        }
    };
    Ok(pairs.values)
}

/// First eigenpair of the Dirichlet Laplacian, eigenvector normalized in `L²`.
pub fn first_dirichlet_mode(grid: &Grid) -> Result<(f64, ScalarField)> {
    let lap = DirichletLaplacian::new(*grid)?;
    let pairs = smallest_eigenpairs(lap.as_ref(), 1, 1e-10)?;
    let mut f = ScalarField::from_values(*grid, pairs.vectors[0].clone())?;
    let nrm = crate::mesh::l2_sq(&f).sqrt();
    let s = if f.values.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    f.values.iter_mut().for_each(|v| *v *= s / nrm);
    Ok((pairs.values[0], f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{h1_semi_sq, inner, Boundary};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: Grid, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_fn(grid, |_, _| rng.gen::<f64>() - 0.5)
    }

    #[test]
    fn zero_data_gives_zero_potential() {
        let g = Grid::unit(16);
        let lap = DirichletLaplacian::new(g).unwrap();
        let (phi, rep) = solve_potential(&lap, &ScalarField::zeros(g), &Trace::zeros(g), 0.1).unwrap();
        assert!(rep.converged);
        assert_eq!(phi.max_abs(), 0.0);
    }

    #[test]
    fn constant_trace_gives_constant_potential() {
        let g = Grid::new(16, 12, 1.0, 0.75).unwrap();
        let lap = DirichletLaplacian::new(g).unwrap();
        let (phi, rep) = solve_potential(&lap, &ScalarField::zeros(g), &Trace::constant(g, 5.0), 0.3).unwrap();
        assert!(rep.converged);
        assert!(phi.values.iter().all(|v| (v - 5.0).abs() < 1e-10));
    }

    #[test]
    fn manufactured_potential_converges_at_second_order() {
        let eps = 0.05;
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = Grid::unit(n);
            let lap = DirichletLaplacian::new(g).unwrap();
            let exact = ScalarField::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin());
            let rho = exact.scaled(2.0 * eps * PI * PI);
            let (phi, _) = solve_potential(&lap, &rho, &Trace::zeros(g), eps).unwrap();
            errs.push(phi.max_abs_diff(&exact));
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "order {order}");
        }
    }

    #[test]
    fn inverse_laplacian_scaling_identity() {
        let g = Grid::unit(20);
        let lap = DirichletLaplacian::new(g).unwrap();
        let rho = random_field(g, 3);
        let eps = 0.013;
        let (phi, _) = solve_potential(&lap, &rho, &Trace::zeros(g), eps).unwrap();
        let inv = inv_dirichlet_laplacian(&lap, &rho).unwrap().scaled(1.0 / eps);
        assert!(phi.max_abs_diff(&inv) < 1e-9 * inv.max_abs().max(1.0));
        let zero = inv_dirichlet_laplacian(&lap, &ScalarField::zeros(g)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn integration_by_parts_self_consistency() {
        let g = Grid::new(24, 18, 1.2, 0.9).unwrap();
        let lap = DirichletLaplacian::new(g).unwrap();
        let rho = random_field(g, 11);
        let phi = inv_dirichlet_laplacian(&lap, &rho).unwrap();
        let lhs = inner(&rho, &phi);
        let rhs = h1_semi_sq(&phi, Boundary::Zero);
        assert!((lhs - rhs).abs() <= 1e-8 * rhs);
    }

    #[test]
    fn inverse_laplacian_is_symmetric_and_positive() {
        let g = Grid::unit(16);
        let lap = DirichletLaplacian::new(g).unwrap();
        let (a, b) = (random_field(g, 1), random_field(g, 2));
        let ia = inv_dirichlet_laplacian(&lap, &a).unwrap();
        let ib = inv_dirichlet_laplacian(&lap, &b).unwrap();
        assert!((inner(&a, &ib) - inner(&b, &ia)).abs() < 1e-9);
        assert!(inner(&a, &ia) >= 0.0);
    }

    #[test]
    fn potential_solve_is_linear() {
        let g = Grid::unit(16);
        let lap = DirichletLaplacian::new(g).unwrap();
        let (a, b) = (random_field(g, 5), random_field(g, 6));
        let z = Trace::zeros(g);
        let eps = 0.2;
        let combo = a.scaled(2.5).add(&b.scaled(-1.5));
        let (pc, _) = solve_potential(&lap, &combo, &z, eps).unwrap();
        let (pa, _) = solve_potential(&lap, &a, &z, eps).unwrap();
        let (pb, _) = solve_potential(&lap, &b, &z, eps).unwrap();
        let lin = pa.scaled(2.5).add(&pb.scaled(-1.5));
        assert!(pc.max_abs_diff(&lin) < 1e-9);
    }

    #[test]
    fn harmonic_extension_reproduces_constants_and_linears() {
        let g = Grid::new(20, 14, 1.0, 0.7).unwrap();
        let lap = DirichletLaplacian::new(g).unwrap();
        let c = harmonic_extension(&lap, &Trace::constant(g, 2.5)).unwrap();
        assert!(c.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let lin = |x: f64, y: f64| 0.3 + 1.7 * x - 0.4 * y;
        let h = harmonic_extension(&lap, &Trace::from_fn(g, lin)).unwrap();
        assert!(h.max_abs_diff(&ScalarField::from_fn(g, lin)) < 1e-12);
    }

    #[test]
    fn harmonic_extension_of_saddle_converges() {
        let f = |x: f64, y: f64| x * x - y * y;
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = Grid::unit(n);
            let lap = DirichletLaplacian::new(g).unwrap();
            let h = harmonic_extension(&lap, &Trace::from_fn(g, f)).unwrap();
            errs.push(h.max_abs_diff(&ScalarField::from_fn(g, f)));
        }
        assert!(errs[0] / errs[1] > 3.0 && errs[1] / errs[2] > 3.0, "{errs:?}");
    }

    #[test]
    fn harmonic_extension_maximum_principle() {
        let g = Grid::unit(24);
        let lap = DirichletLaplacian::new(g).unwrap();
        let t = Trace::from_fn(g, |x, y| (7.0 * x).sin() + (5.0 * y).cos() * x);
        let h = harmonic_extension(&lap, &t).unwrap();
        assert!(h.min() >= t.min() - 1e-12 && h.max() <= t.max() + 1e-12);
    }

    #[test]
    fn laplacian_first_eigenvalue() {
        let ev = smallest_eigenvalues(&Grid::unit(128), SpectralOperator::DirichletLaplacian, 1).unwrap();
        let exact = 2.0 * PI * PI;
        assert!((ev[0] - exact).abs() < 0.01 * exact);
    }

    #[test]
    fn laplacian_degenerate_pair() {
        let ev = smallest_eigenvalues(&Grid::unit(64), SpectralOperator::DirichletLaplacian, 3).unwrap();
        let pi2 = PI * PI;
        for (v, e) in ev.iter().zip([2.0 * pi2, 5.0 * pi2, 5.0 * pi2]) {
            assert!((v - e).abs() < 0.01 * e, "{v} vs {e}");
        }
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn discrete_spectrum_matches_separable_formula() {
        // exact discrete eigenvalues of the cell-centered Dirichlet stencil
        let g = Grid::new(12, 10, 1.0, 0.8).unwrap();
        let mut exact = vec![];
        for p in 1..=g.nx {
            for q in 1..=g.ny {
                let sx = (PI * p as f64 / (2.0 * g.nx as f64)).sin();
                let sy = (PI * q as f64 / (2.0 * g.ny as f64)).sin();
                exact.push(4.0 * sx * sx / (g.hx() * g.hx()) + 4.0 * sy * sy / (g.hy() * g.hy()));
            }
        }
        exact.sort_by(f64::total_cmp);
        let ev = smallest_eigenvalues(&g, SpectralOperator::DirichletLaplacian, 8).unwrap();
        for (v, e) in ev.iter().zip(&exact) {
            assert!((v - e).abs() < 1e-6 * e, "{v} vs {e}");
        }
    }

    #[test]
    fn too_many_eigenvalues_rejected() {
        assert!(smallest_eigenvalues(&Grid::unit(16), SpectralOperator::DirichletLaplacian, 65).is_err());
    }
}
