//! Steady states: Poisson-Boltzmann equilibria and the general steady
//! Nernst-Planck-Poisson system by Gummel iteration, plus a priori bound checks.
//!
//! The potential half-step of the Gummel iteration keeps the electrochemical
//! potentials frozen, `cᵢ = nᵢ e^{-zᵢΦ}` with `n₁ = c₁e^{Φ_old}`,
//! `n₂ = c₂e^{-Φ_old}`, and solves the resulting nonlinear Poisson equation by
//! the same damped Newton method as the Poisson-Boltzmann problem. The
//! linearized variant is unstable once the Debye length is small.

use crate::banded::FivePoint;
use crate::elliptic::{dirichlet_stencil, harmonic_extension, trace_lift, DirichletLaplacian, SolverReport};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryData, Grid, ScalarField, Trace};
use crate::transport::{Params, SgFaces, Z};

/// Residual targets.
pub const PB_TOL: f64 = 1e-10;
pub const STEADY_TOL: f64 = 1e-8;
const NEWTON_MAX_ITERS: usize = 100;
const ARMIJO_C: f64 = 1e-4;
const DAMPING_FLOOR: f64 = 1.0 / 1048576.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoltzmannParams {
    pub z1: f64,
    pub z2: f64,
}

impl BoltzmannParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.z1 > 0.0 && self.z2 > 0.0 && self.z1.is_finite() && self.z2.is_finite()) {
            return Err(Error::invalid("Boltzmann normalizations must be positive"));
        }
        Ok(())
    }

    /// Reads `Zᵢ = e^{-kᵢ}` off equilibrium data `log γᵢ + zᵢW ≡ kᵢ`.
    /// Returns `None` when the data are not in equilibrium to `tol`.
    pub fn from_equilibrium_data(bd: &BoundaryData, tol: f64) -> Option<Self> {
        let mut z = [0.0; 2];
        for s in 0..2 {
            let k = bd.gamma(s).zip_map(&bd.w, |g, w| g.ln() + Z[s] * w);
            let (lo, hi) = (k.min(), k.max());
            if hi - lo > tol {
                return None;
            }
            z[s] = (-0.5 * (lo + hi)).exp();
        }
        Some(BoltzmannParams { z1: z[0], z2: z[1] })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyState {
    pub c1: ScalarField,
    pub c2: ScalarField,
    pub phi: ScalarField,
    pub poisson_residual: f64,
    pub np_residual: f64,
    pub sweeps: usize,
}

impl SteadyState {
    pub fn c(&self, species: usize) -> &ScalarField {
        if species == 0 {
            &self.c1
        } else {
            &self.c2
        }
    }

    pub fn rho(&self) -> ScalarField {
        self.c1.sub(&self.c2)
    }
}

/// Convex energy whose minimizer solves `-εΔ_hΦ = a₁e^{-Φ} - a₂e^{Φ}`
/// (per unit cell area, trace lifted into the linear term).
struct NonlinearPoisson<'a> {
    stencil: FivePoint,
    lift: Vec<f64>,
    a1: &'a [f64],
    a2: &'a [f64],
    eps: f64,
}

impl NonlinearPoisson<'_> {
    fn energy(&self, phi: &[f64]) -> f64 {
        let sphi = self.stencil.apply(phi);
        let mut e = 0.0;
        for k in 0..phi.len() {
            e += 0.5 * self.eps * phi[k] * sphi[k] - self.eps * phi[k] * self.lift[k]
                + self.a1[k] * (-phi[k]).exp()
                + self.a2[k] * phi[k].exp();
        }
        e
    }

    fn gradient(&self, phi: &[f64]) -> Vec<f64> {
        let sphi = self.stencil.apply(phi);
        (0..phi.len())
            .map(|k| {
                self.eps * (sphi[k] - self.lift[k]) - self.a1[k] * (-phi[k]).exp() + self.a2[k] * phi[k].exp()
            })
            .collect()
    }

    fn scale(&self, phi: &[f64]) -> f64 {
        (0..phi.len())
            .map(|k| self.a1[k] * (-phi[k]).exp() + self.a2[k] * phi[k].exp())
            .fold(1.0, f64::max)
    }

    fn hessian(&self, phi: &[f64]) -> FivePoint {
        let mut h = self.stencil.clone();
        for (k, d) in h.diag.iter_mut().enumerate() {
            *d = self.eps * *d + self.a1[k] * (-phi[k]).exp() + self.a2[k] * phi[k].exp();
        }
        for v in h.west.iter_mut().chain(&mut h.east).chain(&mut h.south).chain(&mut h.north) {
            *v *= self.eps;
        }
        h
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton for `-εΔ_hΦ = a₁e^{-Φ} - a₂e^{Φ}`, `Φ = W` on the boundary.
/// Returns the solution and the per-iteration energies (nonincreasing).
pub fn solve_nonlinear_poisson(
    grid: &Grid,
    a1: &[f64],
    a2: &[f64],
    w: &Trace,
    eps: f64,
    phi0: ScalarField,
    tol: f64,
) -> Result<(ScalarField, SolverReport, Vec<f64>)> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("permittivity must be positive, got {eps}")));
    }
    let mut lift = vec![0.0; grid.n_cells()];
    trace_lift(grid, w, 1.0, &mut lift);
    let prob = NonlinearPoisson {
        stencil: dirichlet_stencil(grid, 1.0),
        lift,
        a1,
        a2,
        eps,
    };
    let mut phi = phi0.values;
    let mut energy = prob.energy(&phi);
    let mut energies = vec![energy];
    for it in 0..=NEWTON_MAX_ITERS {
        let g = prob.gradient(&phi);
        let res = max_abs(&g) / prob.scale(&phi);
        if res <= tol {
            return Ok((
                ScalarField { grid: *grid, values: phi },
                SolverReport { iterations: it, residual_l2: res, converged: true },
                energies,
            ));
        }
        if it == NEWTON_MAX_ITERS {
            return Err(Error::NonConvergence { solver: "damped Newton", iterations: it, residual: res });
        }
        let h = prob.hessian(&phi);
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let lu = h.factor()?;
        let mut step = lu.solve(&neg);
        let hs = h.apply(&step);
        let r: Vec<f64> = neg.iter().zip(&hs).map(|(a, b)| a - b).collect();
        lu.solve(&r).iter().zip(step.iter_mut()).for_each(|(d, s)| *s += d);
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = phi.iter().zip(&step).map(|(p, s)| p + t * s).collect();
            let e = prob.energy(&trial);
            // roundoff allowance once the decrease is below machine resolution of E
            let slack = 1e-14 * energy.abs().max(1.0);
            if e.is_finite() && e <= energy + ARMIJO_C * t * slope + slack {
                phi = trial;
                energy = e.min(energy);
                energies.push(energy);
                break;
            }
            t *= 0.5;
            if t < DAMPING_FLOOR {
                return Err(Error::NewtonStall { iterations: it + 1, residual: res });
            }
        }
    }
    unreachable!()
}

/// Poisson-Boltzmann equilibrium potential, `-εΔΦ = Z₁⁻¹e^{-Φ} - Z₂⁻¹e^{Φ}`.
pub fn solve_poisson_boltzmann(
    lap: &DirichletLaplacian,
    z: BoltzmannParams,
    w: &Trace,
    eps: f64,
) -> Result<(ScalarField, SolverReport)> {
    z.validate()?;
    let g = *lap.grid();
    let a1 = vec![1.0 / z.z1; g.n_cells()];
    let a2 = vec![1.0 / z.z2; g.n_cells()];
    let phi0 = harmonic_extension(lap, w)?;
    let (phi, rep, _) = solve_nonlinear_poisson(&g, &a1, &a2, w, eps, phi0, PB_TOL)?;
    Ok((phi, rep))
}

/// Boltzmann concentrations `cᵢ = Zᵢ⁻¹ e^{-zᵢΦ}`.
pub fn boltzmann_state(lap: &DirichletLaplacian, z: BoltzmannParams, w: &Trace, eps: f64) -> Result<SteadyState> {
    let (phi, rep) = solve_poisson_boltzmann(lap, z, w, eps)?;
    let c1 = phi.map(|p| (-p).exp() / z.z1);
    let c2 = phi.map(|p| p.exp() / z.z2);
    Ok(SteadyState {
        c1,
        c2,
        phi,
        poisson_residual: rep.residual_l2,
        np_residual: 0.0,
        sweeps: rep.iterations,
    })
}

/// Solves the steady SG system for one species with frozen potential.
fn steady_species(phi: &ScalarField, bd: &BoundaryData, p: &Params, s: usize) -> Result<(ScalarField, f64)> {
    let faces = SgFaces::new(s, phi, &bd.w, None, p.d(s));
    let (op, rhs) = faces.assemble(0.0, bd.gamma(s));
    let lu = op.factor()?;
    let mut x = lu.solve(&rhs);
    let ax = op.apply(&x);
    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    lu.solve(&r).iter().zip(x.iter_mut()).for_each(|(d, v)| *v += d);
    let c = ScalarField { grid: phi.grid, values: x };
    Ok((c.clone(), np_residual(&op, &rhs, &c)))
}

fn np_residual(op: &FivePoint, rhs: &[f64], c: &ScalarField) -> f64 {
    let ac = op.apply(&c.values);
    let scale = op
        .diag
        .iter()
        .zip(&c.values)
        .map(|(d, v)| (d * v).abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    ac.iter().zip(rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

/// Residual of the steady Nernst-Planck equations for given fields.
pub fn steady_np_residual(c: [&ScalarField; 2], phi: &ScalarField, bd: &BoundaryData, p: &Params) -> f64 {
    (0..2)
        .map(|s| {
            let (op, rhs) = SgFaces::new(s, phi, &bd.w, None, p.d(s)).assemble(0.0, bd.gamma(s));
            np_residual(&op, &rhs, c[s])
        })
        .fold(0.0, f64::max)
}

/// Max-norm residual of `-εΔ_hΦ = ρ`, relative to `max(1, ‖ρ‖∞)`.
pub fn poisson_residual(phi: &ScalarField, rho: &ScalarField, w: &Trace, eps: f64) -> f64 {
    let g = phi.grid;
    let mut lift = vec![0.0; g.n_cells()];
    trace_lift(&g, w, 1.0, &mut lift);
    let s = dirichlet_stencil(&g, 1.0).apply(&phi.values);
    let r = (0..g.n_cells())
        .map(|k| (eps * (s[k] - lift[k]) - rho.values[k]).abs())
        .fold(0.0, f64::max);
    r / rho.max_abs().max(1.0)
}

#[derive(Clone, Copy, Debug)]
pub struct GummelOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Consecutive residual increases tolerated before giving up.
    pub divergence_window: usize,
}

impl Default for GummelOptions {
    fn default() -> Self {
        GummelOptions { tol: STEADY_TOL, max_sweeps: 500, divergence_window: 5 }
    }
}

/// Steady Nernst-Planck-Poisson state by Gummel iteration from the harmonic
/// extensions of the boundary data.
pub fn solve_steady_np(lap: &DirichletLaplacian, bd: &BoundaryData, p: &Params) -> Result<SteadyState> {
    solve_steady_np_from(lap, bd, p, None, GummelOptions::default())
}

/// Gummel iteration with an optional initial guess (e.g. from a nearby `ε`).
pub fn solve_steady_np_from(
    lap: &DirichletLaplacian,
    bd: &BoundaryData,
    p: &Params,
    guess: Option<&SteadyState>,
    opts: GummelOptions,
) -> Result<SteadyState> {
    p.validate()?;
    let g = *lap.grid();
    bd.validate(&g)?;
    let (mut c1, mut c2, mut phi) = match guess {
        Some(s) => (s.c1.clone(), s.c2.clone(), s.phi.clone()),
        None => (
            harmonic_extension(lap, &bd.gamma1)?,
            harmonic_extension(lap, &bd.gamma2)?,
            harmonic_extension(lap, &bd.w)?,
        ),
    };
    let mut last = f64::INFINITY;
    let mut increases = 0;
    for sweep in 1..=opts.max_sweeps {
        let n1: Vec<f64> = c1.values.iter().zip(&phi.values).map(|(c, f)| c * f.exp()).collect();
        let n2: Vec<f64> = c2.values.iter().zip(&phi.values).map(|(c, f)| c * (-f).exp()).collect();
        let (new_phi, _, _) = solve_nonlinear_poisson(&g, &n1, &n2, &bd.w, p.eps, phi, 1e-3 * opts.tol)?;
        phi = new_phi;
        let ((a, r1), (b, r2)) = (steady_species(&phi, bd, p, 0)?, steady_species(&phi, bd, p, 1)?);
        c1 = a;
        c2 = b;
        for (s, c) in [&c1, &c2].into_iter().enumerate() {
            if let Some((cell, &value)) = c.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NonpositiveConcentration { species: s + 1, cell, value });
            }
        }
        let pres = poisson_residual(&phi, &c1.sub(&c2), &bd.w, p.eps);
        let npres = r1.max(r2);
        let res = pres.max(npres);
        log::debug!("Gummel sweep {sweep}: residual {res:.3e}");
        if res <= opts.tol {
            return Ok(SteadyState {
                c1,
                c2,
                phi,
                poisson_residual: pres,
                np_residual: npres,
                sweeps: sweep,
            });
        }
        if res > last {
            increases += 1;
            if increases >= opts.divergence_window {
                return Err(Error::GummelDivergence { iterations: sweep, residual: res });
            }
        } else {
            increases = 0;
        }
        last = res;
    }
    Err(Error::NonConvergence { solver: "Gummel iteration", iterations: opts.max_sweeps, residual: last })
}

/// Worst margin of one bound family; negative means violated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub margin: f64,
    pub cell: usize,
    pub species: usize,
    pub passed: bool,
}

impl BoundCheck {
    fn new() -> Self {
        BoundCheck { margin: f64::INFINITY, cell: 0, species: 0, passed: true }
    }

    fn update(&mut self, margin: f64, cell: usize, species: usize) {
        if margin < self.margin {
            self.margin = margin;
            self.cell = cell;
            self.species = species;
        }
    }

    fn finish(mut self, slack: f64) -> Self {
        self.passed = self.margin >= -slack;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UbStarReport {
    /// `λᵢ ≤ cᵢ e^{zᵢΦ} ≤ Λᵢ`
    pub boltzmann_factor: BoundCheck,
    /// `γ̲ ≤ cᵢ ≤ γ̄`
    pub concentration: BoundCheck,
    /// `min{inf W, ½log(λ₁/Λ₂)} ≤ Φ ≤ max{sup W, ½log(Λ₁/λ₂)}`
    pub potential: BoundCheck,
}

impl UbStarReport {
    pub fn all_passed(&self) -> bool {
        self.boltzmann_factor.passed && self.concentration.passed && self.potential.passed
    }
}

/// Evaluates the three pointwise a priori bound families at every cell.
pub fn verify_ubstar(s: &SteadyState, bd: &BoundaryData) -> UbStarReport {
    const SLACK: f64 = 1e-8;
    let mut lam = [0.0; 2];
    let mut big = [0.0; 2];
    for sp in 0..2 {
        let f = bd.gamma(sp).zip_map(&bd.w, |g, w| g * (Z[sp] * w).exp());
        lam[sp] = f.min();
        big[sp] = f.max();
    }
    let (g_lo, g_hi) = (bd.gamma_min(), bd.gamma_max());
    let phi_lo = bd.w.min().min(0.5 * (lam[0] / big[1]).ln());
    let phi_hi = bd.w.max().max(0.5 * (big[0] / lam[1]).ln());

    let mut bf = BoundCheck::new();
    let mut conc = BoundCheck::new();
    let mut pot = BoundCheck::new();
    for sp in 0..2 {
        let c = s.c(sp);
        for (k, (&cv, &phi)) in c.values.iter().zip(&s.phi.values).enumerate() {
            let f = cv * (Z[sp] * phi).exp();
            bf.update(((f - lam[sp]) / lam[sp]).min((big[sp] - f) / big[sp]), k, sp + 1);
            conc.update(((cv - g_lo) / g_lo).min((g_hi - cv) / g_hi), k, sp + 1);
        }
    }
    for (k, &phi) in s.phi.values.iter().enumerate() {
        pot.update((phi - phi_lo).min(phi_hi - phi), k, 0);
    }
    UbStarReport {
        boltzmann_factor: bf.finish(SLACK),
        concentration: conc.finish(SLACK),
        potential: pot.finish(SLACK),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn lap(g: Grid) -> Arc<DirichletLaplacian> {
        DirichletLaplacian::new(g).unwrap()
    }

    #[test]
    fn neutral_symmetric_pb_is_trivial() {
        let g = Grid::unit(12);
        let z = BoltzmannParams { z1: 1.0 / 1.7, z2: 1.0 / 1.7 };
        let s = boltzmann_state(&lap(g), z, &Trace::zeros(g), 0.01).unwrap();
        assert!(s.phi.max_abs() < 1e-10);
        assert!(s.c1.values.iter().all(|c| (c - 1.7).abs() < 1e-10));
    }

    #[test]
    fn pb_constant_root() {
        let g = Grid::unit(10);
        let z = BoltzmannParams { z1: 2.0, z2: 0.5 };
        let root = 0.5 * (z.z2 / z.z1).ln();
        let (phi, rep) = solve_poisson_boltzmann(&lap(g), z, &Trace::constant(g, root), 0.1).unwrap();
        assert!(rep.converged);
        assert!(phi.values.iter().all(|v| (v - root).abs() < 1e-10));
    }

    #[test]
    fn pb_energies_are_monotone() {
        let g = Grid::unit(16);
        let w = Trace::from_fn(g, |x, y| 3.0 * (x - 0.5) + y);
        let l = lap(g);
        let a = vec![1.0; g.n_cells()];
        let phi0 = harmonic_extension(&l, &w).unwrap();
        let (_, rep, e) = solve_nonlinear_poisson(&g, &a, &a, &w, 1e-3, phi0, PB_TOL).unwrap();
        assert!(rep.converged);
        assert!(e.windows(2).all(|p| p[1] <= p[0]), "{e:?}");
    }

    /// `εΦ'' = 2 sinh Φ` on [0,1] by shooting with RK4.
    fn shooting(eps: f64, left: f64, right: f64) -> impl Fn(f64) -> f64 {
        let n = 20000;
        let integrate = move |s: f64| -> Vec<f64> {
            let h = 1.0 / n as f64;
            let f = |y: [f64; 2]| [y[1], 2.0 * y[0].sinh() / eps];
            let mut y = [left, s];
            let mut out = vec![left];
            for _ in 0..n {
                let k1 = f(y);
                let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
                let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
                let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
                for d in 0..2 {
                    y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
                }
                out.push(y[0]);
            }
            out
        };
        let (mut lo, mut hi) = (-20.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let end = *integrate(mid).last().unwrap();
            if end.is_nan() || end > right {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let prof = integrate(0.5 * (lo + hi));
        move |x: f64| {
            let t = x * n as f64;
            let k = (t.floor() as usize).min(n - 1);
            let a = t - k as f64;
            // cubic accuracy is unnecessary at this resolution
            (1.0 - a) * prof[k] + a * prof[k + 1]
        }
    }

    #[test]
    fn pb_matches_one_dimensional_shooting() {
        let eps = 0.05;
        let exact = shooting(eps, -0.5, 0.5);
        let z = BoltzmannParams { z1: 1.0, z2: 1.0 };
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = Grid::new(n, 8, 1.0, 0.25).unwrap();
            let w = Trace::from_fn(g, |x, _| exact(x));
            let (phi, _) = solve_poisson_boltzmann(&lap(g), z, &w, eps).unwrap();
            errs.push(phi.max_abs_diff(&ScalarField::from_fn(g, |x, _| exact(x))));
        }
        assert!(errs[0] / errs[1] > 3.0 && errs[1] / errs[2] > 3.0, "{errs:?}");
    }

    #[test]
    fn neutral_steady_state() {
        let g = Grid::unit(10);
        let bd = BoundaryData::uniform(g, 1.3, 1.3, 0.0).unwrap();
        let s = solve_steady_np(&lap(g), &bd, &Params::default()).unwrap();
        assert!(s.phi.max_abs() < 1e-10);
        assert!(s.rho().max_abs() < 1e-10);
        assert!(s.c1.values.iter().all(|c| (c - 1.3).abs() < 1e-10));
        assert!(verify_ubstar(&s, &bd).all_passed());
    }

    #[test]
    fn gummel_reproduces_boltzmann_state() {
        let g = Grid::new(24, 16, 1.0, 0.7).unwrap();
        let w = Trace::from_fn(g, |x, y| 0.8 * (x - 0.5) + 0.3 * (3.0 * y).sin());
        let (k1, k2) = (0.2, -0.1);
        let bd = BoundaryData::new(&g, w.map(|w| (k1 - w).exp()), w.map(|w| (k2 + w).exp()), w).unwrap();
        let p = Params { eps: 0.01, ..Params::default() };
        let l = lap(g);
        let gum = solve_steady_np(&l, &bd, &p).unwrap();
        let z = BoltzmannParams::from_equilibrium_data(&bd, 1e-12).unwrap();
        let pb = boltzmann_state(&l, z, &bd.w, p.eps).unwrap();
        assert!(gum.phi.max_abs_diff(&pb.phi) < 1e-7);
        assert!(gum.c1.max_abs_diff(&pb.c1) < 1e-7 && gum.c2.max_abs_diff(&pb.c2) < 1e-7);
        assert!(verify_ubstar(&gum, &bd).all_passed());
    }

    #[test]
    fn nonequilibrium_flux_is_constant_across_slab() {
        // equal species data with W ≡ 0 keep ρ ≡ 0 and Φ ≡ 0; the flux is then
        // the divergence-free diffusive flux between the walls
        let g = Grid::new(32, 8, 1.0, 0.25).unwrap();
        let gamma = Trace::from_fn(g, |x, _| 1.0 + x);
        let bd = BoundaryData::new(&g, gamma.clone(), gamma, Trace::zeros(g)).unwrap();
        let p = Params { eps: 0.02, ..Params::default() };
        let s = solve_steady_np(&lap(g), &bd, &p).unwrap();
        for sp in 0..2 {
            let faces = SgFaces::new(sp, &s.phi, &bd.w, None, p.d(sp));
            let (fx, _) = faces.fluxes(s.c(sp), bd.gamma(sp));
            for j in 0..g.ny {
                let f0 = fx[g.xface(0, j)];
                for i in 1..=g.nx {
                    assert!((fx[g.xface(i, j)] - f0).abs() < 1e-8, "{} vs {f0}", fx[g.xface(i, j)]);
                }
            }
        }
    }

    #[test]
    fn nonequilibrium_steady_state_satisfies_bounds() {
        let g = Grid::new(32, 16, 1.0, 0.5).unwrap();
        let bd = BoundaryData::new(
            &g,
            Trace::from_fn(g, |x, _| 2.0 - x),
            Trace::from_fn(g, |x, _| 2.0 - x),
            Trace::from_fn(g, |x, _| x),
        )
        .unwrap();
        let p = Params { eps: 0.02, ..Params::default() };
        let s = solve_steady_np(&lap(g), &bd, &p).unwrap();
        assert!(s.poisson_residual <= STEADY_TOL && s.np_residual <= STEADY_TOL);
        let rep = verify_ubstar(&s, &bd);
        assert!(rep.all_passed(), "{rep:?}");
    }

    #[test]
    fn corrupted_state_fails_concentration_bound() {
        let g = Grid::unit(10);
        let bd = BoundaryData::uniform(g, 1.0, 1.0, 0.0).unwrap();
        let mut s = solve_steady_np(&lap(g), &bd, &Params::default()).unwrap();
        s.c1.values[37] = 1.5;
        let rep = verify_ubstar(&s, &bd);
        assert!(!rep.concentration.passed);
        assert_eq!(rep.concentration.cell, 37);
        assert_eq!(rep.concentration.species, 1);
    }

    #[test]
    fn continuation_needs_fewer_sweeps() {
        let g = Grid::new(24, 12, 1.0, 0.5).unwrap();
        let bd = BoundaryData::new(
            &g,
            Trace::from_fn(g, |x, _| 2.0 - x),
            Trace::from_fn(g, |x, _| 1.0 + x),
            Trace::from_fn(g, |x, _| 0.5 * x),
        )
        .unwrap();
        let l = lap(g);
        let p1 = Params { eps: 0.04, ..Params::default() };
        let p2 = Params { eps: 0.02, ..Params::default() };
        let s1 = solve_steady_np(&l, &bd, &p1).unwrap();
        let cold = solve_steady_np(&l, &bd, &p2).unwrap();
        let warm = solve_steady_np_from(&l, &bd, &p2, Some(&s1), GummelOptions::default()).unwrap();
        assert!(warm.sweeps <= cold.sweeps, "warm {} cold {}", warm.sweeps, cold.sweeps);
        assert!(warm.phi.max_abs_diff(&cold.phi) < 1e-6);
    }
}
