//! Nernst-Planck transport: Scharfetter-Gummel fluxes and the implicit
//! drift-diffusion-advection step for the two ionic species.
//!
//! The flux from cell `L` to its right/upper neighbour `R` is
//! `F = (D/h)[B(dV) c_L - B(-dV) c_R]` with `B(s) = s/(e^s - 1)` and the
//! face potential jump `dV = z(Φ_R - Φ_L) - u h/D`. Wall faces connect a cell
//! to its trace over half a cell. Columns of the assembled matrix sum to
//! `1/dt`, so it is an M-matrix for every time step.

use crate::banded::FivePoint;
use crate::elliptic::{solve_potential, DirichletLaplacian};
use crate::error::{Error, Result};
use crate::krylov::bicgstab;
use crate::mesh::{BoundaryData, Grid, ScalarField, Trace, VectorField};

/// Valences of the cation and anion.
pub const Z: [f64; 2] = [1.0, -1.0];

/// Tolerance of the pointwise maximum principle post-check.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-10;

/// Negative values above this are treated as rounding and clamped to zero.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Params {
    pub eps: f64,
    pub d1: f64,
    pub d2: f64,
    pub nu: f64,
    pub k: f64,
    pub delta: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            eps: 1e-2,
            d1: 1.0,
            d2: 1.0,
            nu: 1.0,
            k: 1.0,
            delta: 1.0,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps", self.eps),
            ("D1", self.d1),
            ("D2", self.d2),
            ("nu", self.nu),
            ("K", self.k),
            ("delta", self.delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("parameter {name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn d(&self, species: usize) -> f64 {
        if species == 0 {
            self.d1
        } else {
            self.d2
        }
    }

    pub fn d_max(&self) -> f64 {
        self.d1.max(self.d2)
    }
}

/// Solution triple with its cached charge density and potential.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub c1: ScalarField,
    pub c2: ScalarField,
    pub u: VectorField,
    pub phi: ScalarField,
    pub rho: ScalarField,
}

impl State {
    /// Builds a state and solves for its potential.
    pub fn new(
        t: f64,
        c1: ScalarField,
        c2: ScalarField,
        u: VectorField,
        bd: &BoundaryData,
        p: &Params,
        lap: &DirichletLaplacian,
    ) -> Result<State> {
        let g = *lap.grid();
        c1.grid.same_as(&g)?;
        c2.grid.same_as(&g)?;
        u.grid.same_as(&g)?;
        for (s, c) in [&c1, &c2].into_iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::invalid(format!("concentration {} has non-finite values", s + 1)));
            }
            if let Some((cell, &value)) = c.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::NonpositiveConcentration { species: s + 1, cell, value });
            }
        }
        if !u.is_finite() {
            return Err(Error::invalid("velocity has non-finite values"));
        }
        let rho = c1.sub(&c2);
        let (phi, rep) = solve_potential(lap, &rho, &bd.w, p.eps)?;
        if !rep.converged {
            return Err(Error::NonConvergence {
                solver: "potential solve",
                iterations: rep.iterations,
                residual: rep.residual_l2,
            });
        }
        Ok(State { t, c1, c2, u, phi, rho })
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.c1.grid
    }

    #[inline]
    pub fn c(&self, species: usize) -> &ScalarField {
        if species == 0 {
            &self.c1
        } else {
            &self.c2
        }
    }

    /// Envelope `(M, m)` over both species.
    pub fn envelope(&self) -> (f64, f64) {
        (self.c1.max().max(self.c2.max()), self.c1.min().min(self.c2.min()))
    }
}

/// Bernoulli function `s/(e^s - 1)`.
#[inline]
pub fn bernoulli(s: f64) -> f64 {
    if s.abs() < 1e-5 {
        1.0 - 0.5 * s + s * s / 12.0
    } else {
        s / s.exp_m1()
    }
}

/// Derivative of [`bernoulli`].
#[inline]
pub fn bernoulli_deriv(s: f64) -> f64 {
    if s.abs() < 1e-5 {
        -0.5 + s / 6.0
    } else {
        let b = bernoulli(s);
        if b == 0.0 {
            return 0.0;
        }
        b * (1.0 - b) / s - b
    }
}

/// Scharfetter-Gummel flux from the left state to the right state.
#[inline]
pub fn sg_flux(c_l: f64, c_r: f64, dv: f64, d: f64, h: f64) -> f64 {
    d / h * (bernoulli(dv) * c_l - bernoulli(-dv) * c_r)
}

/// Face potential jumps for one species, including folded advection.
#[derive(Clone, Debug)]
pub struct SgFaces {
    pub grid: Grid,
    pub species: usize,
    pub d: f64,
    /// On x-faces `(nx+1)·ny`, left to right.
    pub dvx: Vec<f64>,
    /// On y-faces `nx·(ny+1)`, bottom to top.
    pub dvy: Vec<f64>,
}

impl SgFaces {
    pub fn new(species: usize, phi: &ScalarField, w: &Trace, u: Option<&VectorField>, d: f64) -> Self {
        let g = phi.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (hx, hy) = (g.hx(), g.hy());
        let z = Z[species];
        let ux = |i: usize, j: usize| u.map_or(0.0, |u| u.ux[g.xface(i, j)]);
        let uy = |i: usize, j: usize| u.map_or(0.0, |u| u.uy[g.yface(i, j)]);
        let mut dvx = vec![0.0; g.n_xfaces()];
        for j in 0..ny {
            for i in 0..=nx {
                let (pl, pr, h) = if i == 0 {
                    (w.left[j], phi.at(0, j), 0.5 * hx)
                } else if i == nx {
                    (phi.at(nx - 1, j), w.right[j], 0.5 * hx)
                } else {
                    (phi.at(i - 1, j), phi.at(i, j), hx)
                };
                dvx[g.xface(i, j)] = z * (pr - pl) - ux(i, j) * h / d;
            }
        }
        let mut dvy = vec![0.0; g.n_yfaces()];
        for j in 0..=ny {
            for i in 0..nx {
                let (pb, pt, h) = if j == 0 {
                    (w.bottom[i], phi.at(i, 0), 0.5 * hy)
                } else if j == ny {
                    (phi.at(i, ny - 1), w.top[i], 0.5 * hy)
                } else {
                    (phi.at(i, j - 1), phi.at(i, j), hy)
                };
                dvy[g.yface(i, j)] = z * (pt - pb) - uy(i, j) * h / d;
            }
        }
        SgFaces { grid: g, species, d, dvx, dvy }
    }

    /// Assembles `shift·I + div F(·)` and the wall contribution to the right-hand side.
    pub fn assemble(&self, shift: f64, gamma: &Trace) -> (FivePoint, Vec<f64>) {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (hx, hy) = (g.hx(), g.hy());
        let kx = self.d / (hx * hx);
        let ky = self.d / (hy * hy);
        let mut op = FivePoint::zeros(nx, ny);
        let mut rhs = vec![0.0; g.n_cells()];
        op.diag.iter_mut().for_each(|d| *d = shift);
        for j in 0..ny {
            for i in 0..=nx {
                let dv = self.dvx[g.xface(i, j)];
                let (bp, bm) = (bernoulli(dv), bernoulli(-dv));
                if i == 0 {
                    let r = g.idx(0, j);
                    op.diag[r] += 2.0 * kx * bm;
                    rhs[r] += 2.0 * kx * bp * gamma.left[j];
                } else if i == nx {
                    let l = g.idx(nx - 1, j);
                    op.diag[l] += 2.0 * kx * bp;
                    rhs[l] += 2.0 * kx * bm * gamma.right[j];
                } else {
                    let (l, r) = (g.idx(i - 1, j), g.idx(i, j));
                    op.diag[l] += kx * bp;
                    op.east[l] -= kx * bm;
                    op.diag[r] += kx * bm;
                    op.west[r] -= kx * bp;
                }
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let dv = self.dvy[g.yface(i, j)];
                let (bp, bm) = (bernoulli(dv), bernoulli(-dv));
                if j == 0 {
                    let r = g.idx(i, 0);
                    op.diag[r] += 2.0 * ky * bm;
                    rhs[r] += 2.0 * ky * bp * gamma.bottom[i];
                } else if j == ny {
                    let l = g.idx(i, ny - 1);
                    op.diag[l] += 2.0 * ky * bp;
                    rhs[l] += 2.0 * ky * bm * gamma.top[i];
                } else {
                    let (l, r) = (g.idx(i, j - 1), g.idx(i, j));
                    op.diag[l] += ky * bp;
                    op.north[l] -= ky * bm;
                    op.diag[r] += ky * bm;
                    op.south[r] -= ky * bp;
                }
            }
        }
        (op, rhs)
    }

    /// Fluxes on all faces for concentration `c` with wall trace `gamma`.
    pub fn fluxes(&self, c: &ScalarField, gamma: &Trace) -> (Vec<f64>, Vec<f64>) {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (hx, hy) = (g.hx(), g.hy());
        let mut fx = vec![0.0; g.n_xfaces()];
        for j in 0..ny {
            for i in 0..=nx {
                let k = g.xface(i, j);
                fx[k] = if i == 0 {
                    sg_flux(gamma.left[j], c.at(0, j), self.dvx[k], self.d, 0.5 * hx)
                } else if i == nx {
                    sg_flux(c.at(nx - 1, j), gamma.right[j], self.dvx[k], self.d, 0.5 * hx)
                } else {
                    sg_flux(c.at(i - 1, j), c.at(i, j), self.dvx[k], self.d, hx)
                };
            }
        }
        let mut fy = vec![0.0; g.n_yfaces()];
        for j in 0..=ny {
            for i in 0..nx {
                let k = g.yface(i, j);
                fy[k] = if j == 0 {
                    sg_flux(gamma.bottom[i], c.at(i, 0), self.dvy[k], self.d, 0.5 * hy)
                } else if j == ny {
                    sg_flux(c.at(i, ny - 1), gamma.top[i], self.dvy[k], self.d, 0.5 * hy)
                } else {
                    sg_flux(c.at(i, j - 1), c.at(i, j), self.dvy[k], self.d, hy)
                };
            }
        }
        (fx, fy)
    }
}

/// Cell divergence of face fluxes.
pub fn flux_divergence(g: &Grid, fx: &[f64], fy: &[f64]) -> ScalarField {
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = ScalarField::zeros(*g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.values[g.idx(i, j)] =
                (fx[g.xface(i + 1, j)] - fx[g.xface(i, j)]) / hx + (fy[g.yface(i, j + 1)] - fy[g.yface(i, j)]) / hy;
        }
    }
    out
}

/// Relative residual required of the transport linear solves.
const TRANSPORT_TOL: f64 = 1e-14;

/// Solves a drift-diffusion system, falling back to a direct solve.
pub(crate) fn solve_transport(op: &FivePoint, rhs: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
    match bicgstab(op, rhs, guess, TRANSPORT_TOL, 400) {
        Ok((x, _)) => Ok(x),
        Err(_) => {
            log::debug!("BiCGSTAB stalled; using banded factorization");
            let lu = op.factor()?;
            let mut x = lu.solve(rhs);
            let ax = op.apply(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = lu.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
            Ok(x)
        }
    }
}

/// Clamps rounding-level negatives and rejects real ones.
pub(crate) fn enforce_nonnegative(c: &mut ScalarField, species: usize) -> Result<()> {
    for (cell, v) in c.values.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::LinearSolveFailure(format!("non-finite concentration in species {}", species + 1)));
        }
        if *v < 0.0 {
            if *v >= -CLAMP_TOL {
                *v = 0.0;
            } else {
                return Err(Error::NonpositiveConcentration { species: species + 1, cell, value: *v });
            }
        }
    }
    Ok(())
}

/// Largest `dt` for which the frozen-potential step keeps the maximum
/// principle: `dt · D_max · M / ε ≤ 1`.
pub fn dielectric_dt_limit(state: &State, p: &Params) -> f64 {
    let (m_hi, _) = state.envelope();
    if m_hi <= 0.0 {
        f64::INFINITY
    } else {
        p.eps / (p.d_max() * m_hi)
    }
}

/// One backward-Euler drift-diffusion-advection step with frozen `Φ` and `u`.
pub fn np_step(state: &State, dt: f64, bd: &BoundaryData, p: &Params) -> Result<(ScalarField, ScalarField)> {
    np_step_with_source(state, dt, bd, p, None)
}

/// [`np_step`] with optional volumetric sources (manufactured solutions).
/// The maximum principle post-check is skipped when sources are present.
pub fn np_step_with_source(
    state: &State,
    dt: f64,
    bd: &BoundaryData,
    p: &Params,
    source: Option<[&ScalarField; 2]>,
) -> Result<(ScalarField, ScalarField)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let g = state.grid();
    let solve = |s: usize| -> Result<ScalarField> {
        let faces = SgFaces::new(s, &state.phi, &bd.w, Some(&state.u), p.d(s));
        let (op, mut rhs) = faces.assemble(1.0 / dt, bd.gamma(s));
        let c = state.c(s);
        for (r, v) in rhs.iter_mut().zip(&c.values) {
            *r += v / dt;
        }
        if let Some(src) = source {
            for (r, v) in rhs.iter_mut().zip(&src[s].values) {
                *r += v;
            }
        }
        let x = solve_transport(&op, &rhs, &c.values)?;
        let mut out = ScalarField { grid: g, values: x };
        enforce_nonnegative(&mut out, s)?;
        Ok(out)
    };
    let (r1, r2) = rayon::join(|| solve(0), || solve(1));
    let (c1, c2) = (r1?, r2?);
    if source.is_none() {
        let (m_hi, m_lo) = state.envelope();
        let upper = m_hi.max(bd.gamma_max()) + MAX_PRINCIPLE_TOL;
        let lower = m_lo.min(bd.gamma_min()) - MAX_PRINCIPLE_TOL;
        for (s, c) in [&c1, &c2].into_iter().enumerate() {
            if let Some((cell, &value)) = c.values.iter().enumerate().find(|(_, v)| **v > upper || **v < lower) {
                return Err(Error::MaxPrincipleViolation {
                    species: s + 1,
                    cell,
                    value,
                    lower,
                    upper,
                });
            }
        }
    }
    Ok((c1, c2))
}

/// Electrochemical potentials `μᵢ = log cᵢ + zᵢΦ`.
pub fn electrochemical_potentials(state: &State) -> Result<(ScalarField, ScalarField)> {
    let mu = |s: usize| -> Result<ScalarField> {
        let c = state.c(s);
        if let Some((cell, &value)) = c.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::NonpositiveConcentration { species: s + 1, cell, value });
        }
        Ok(c.zip_map(&state.phi, |c, phi| c.ln() + Z[s] * phi))
    };
    Ok((mu(0)?, mu(1)?))
}
