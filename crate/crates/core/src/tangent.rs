//! Linearized flow along a base trajectory and the growth of `N`-volumes.
//!
//! [`tangent_step`] is the exact derivative of [`coupled_step`] at the base
//! state, so tangent and finite-difference perturbations agree to second
//! order in the perturbation size.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::elliptic::inv_dirichlet_laplacian;
use crate::error::{Error, Result};
use crate::fluid::{from_flat, stokes_step, to_flat};
use crate::mesh::{vector_h1_inner, Grid, ScalarField, Trace, VectorField};
use crate::sim::{coupled_step, Model};
use crate::transport::{bernoulli_deriv, flux_divergence, solve_transport, SgFaces, State, Z};

/// Perturbation `(c̲₁, c̲₂, u̲)`; concentrations have zero trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentState {
    pub t: f64,
    pub c1: ScalarField,
    pub c2: ScalarField,
    pub u: VectorField,
}

impl TangentState {
    pub fn zeros(grid: Grid, t: f64) -> Self {
        TangentState { t, c1: ScalarField::zeros(grid), c2: ScalarField::zeros(grid), u: VectorField::zeros(grid) }
    }

    /// Difference of two states, as a perturbation of `b`.
    pub fn difference(a: &State, b: &State) -> Self {
        TangentState { t: a.t, c1: a.c1.sub(&b.c1), c2: a.c2.sub(&b.c2), u: a.u.sub(&b.u) }
    }

    pub fn c(&self, s: usize) -> &ScalarField {
        if s == 0 {
            &self.c1
        } else {
            &self.c2
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        TangentState { t: self.t, c1: self.c1.scaled(a), c2: self.c2.scaled(a), u: self.u.scaled(a) }
    }

    pub fn axpy(&mut self, a: f64, other: &TangentState) {
        self.c1.axpy(a, &other.c1);
        self.c2.axpy(a, &other.c2);
        self.u.axpy(a, &other.u);
    }

    pub fn is_finite(&self) -> bool {
        self.c1.is_finite() && self.c2.is_finite() && self.u.is_finite()
    }
}

/// `∫∇f·∇g` for zero-trace cell fields.
fn h1_inner0(f: &ScalarField, g: &ScalarField) -> f64 {
    let gr = f.grid;
    let (hx, hy) = (gr.hx(), gr.hy());
    let (a, b) = (&f.values, &g.values);
    let mut sx = 0.0;
    let mut sy = 0.0;
    for j in 0..gr.ny {
        for i in 1..gr.nx {
            let (k, l) = (gr.idx(i, j), gr.idx(i - 1, j));
            sx += (a[k] - a[l]) * (b[k] - b[l]);
        }
        let (k0, k1) = (gr.idx(0, j), gr.idx(gr.nx - 1, j));
        sx += 2.0 * (a[k0] * b[k0] + a[k1] * b[k1]);
    }
    for i in 0..gr.nx {
        for j in 1..gr.ny {
            let (k, l) = (gr.idx(i, j), gr.idx(i, j - 1));
            sy += (a[k] - a[l]) * (b[k] - b[l]);
        }
        let (k0, k1) = (gr.idx(i, 0), gr.idx(i, gr.ny - 1));
        sy += 2.0 * (a[k0] * b[k0] + a[k1] * b[k1]);
    }
    sx * hy / hx + sy * hx / hy
}

/// Inner product `(∇c̲₁,∇c̲₁') + (∇c̲₂,∇c̲₂') + (∇u̲,∇u̲')`.
pub fn v0_inner(a: &TangentState, b: &TangentState) -> f64 {
    h1_inner0(&a.c1, &b.c1) + h1_inner0(&a.c2, &b.c2) + vector_h1_inner(&a.u, &b.u)
}

pub fn v0_norm(a: &TangentState) -> f64 {
    v0_inner(a, a).sqrt()
}

/// `∂F/∂(ΔV)` of the Scharfetter-Gummel flux.
#[inline]
fn flux_slope(c_l: f64, c_r: f64, dv: f64, d: f64, h: f64) -> f64 {
    (d / h) * (bernoulli_deriv(dv) * c_l + bernoulli_deriv(-dv) * c_r)
}

/// Face fluxes `(∂F/∂ΔV)·δΔV` for concentrations `c` (trace `gamma`), face
/// potentials `dv`, potential perturbation `dphi` (zero trace) and velocity
/// perturbation `du` (may be `None`).
fn linearized_drift(
    faces: &SgFaces,
    c: &ScalarField,
    gamma: &Trace,
    dphi: &ScalarField,
    du: Option<&VectorField>,
) -> (Vec<f64>, Vec<f64>) {
    let g = faces.grid;
    let (nx, ny) = (g.nx, g.ny);
    let (hx, hy) = (g.hx(), g.hy());
    let (z, d) = (Z[faces.species], faces.d);
    let mut gx = vec![0.0; g.n_xfaces()];
    for j in 0..ny {
        for i in 0..=nx {
            let k = g.xface(i, j);
            let (cl, cr, pl, pr, h) = if i == 0 {
                (gamma.left[j], c.at(0, j), 0.0, dphi.at(0, j), 0.5 * hx)
            } else if i == nx {
                (c.at(nx - 1, j), gamma.right[j], dphi.at(nx - 1, j), 0.0, 0.5 * hx)
            } else {
                (c.at(i - 1, j), c.at(i, j), dphi.at(i - 1, j), dphi.at(i, j), hx)
            };
            let ddv = z * (pr - pl) - du.map_or(0.0, |u| u.ux[k]) * h / d;
            gx[k] = flux_slope(cl, cr, faces.dvx[k], d, h) * ddv;
        }
    }
    let mut gy = vec![0.0; g.n_yfaces()];
    for j in 0..=ny {
        for i in 0..nx {
            let k = g.yface(i, j);
            let (cl, cr, pl, pr, h) = if j == 0 {
                (gamma.bottom[i], c.at(i, 0), 0.0, dphi.at(i, 0), 0.5 * hy)
            } else if j == ny {
                (c.at(i, ny - 1), gamma.top[i], dphi.at(i, ny - 1), 0.0, 0.5 * hy)
            } else {
                (c.at(i, j - 1), c.at(i, j), dphi.at(i, j - 1), dphi.at(i, j), hy)
            };
            let ddv = z * (pr - pl) - du.map_or(0.0, |u| u.uy[k]) * h / d;
            gy[k] = flux_slope(cl, cr, faces.dvy[k], d, h) * ddv;
        }
    }
    (gx, gy)
}

/// Derivative of the coupled step from `base` to `base_next` applied to `ts`.
pub fn tangent_step(ts: &TangentState, base: &State, base_next: &State, dt: f64, model: &Model) -> Result<TangentState> {
    let g = model.grid;
    let p = &model.params;
    let bd = &model.bd;
    let zero = Trace::zeros(g);
    let inv_eps = 1.0 / p.eps;
    let dphi = inv_dirichlet_laplacian(&model.lap, &ts.c1.sub(&ts.c2))?.scaled(inv_eps);

    let species = |s: usize| -> Result<ScalarField> {
        let faces = SgFaces::new(s, &base.phi, &bd.w, Some(&base.u), p.d(s));
        let (op, _) = faces.assemble(1.0 / dt, &zero);
        let (gx, gy) = linearized_drift(&faces, base_next.c(s), bd.gamma(s), &dphi, Some(&ts.u));
        let div = flux_divergence(&g, &gx, &gy);
        let rhs: Vec<f64> = ts.c(s).values.iter().zip(&div.values).map(|(c, d)| c / dt - d).collect();
        let x = solve_transport(&op, &rhs, &ts.c(s).values)?;
        Ok(ScalarField { grid: g, values: x })
    };
    let (r1, r2) = rayon::join(|| species(0), || species(1));
    let (c1, c2) = (r1?, r2?);

    let dphi_next = inv_dirichlet_laplacian(&model.lap, &c1.sub(&c2))?.scaled(inv_eps);
    let force = linearized_force(&c1, &c2, &dphi_next, base_next, model);
    let u = stokes_step(&ts.u, &force, dt, &model.stokes)?;
    let out = TangentState { t: ts.t + dt, c1, c2, u };
    if !out.is_finite() {
        return Err(Error::LinearSolveFailure("non-finite tangent state".into()));
    }
    Ok(out)
}

/// Derivative of the Scharfetter-Gummel electric force at `base`.
fn linearized_force(dc1: &ScalarField, dc2: &ScalarField, dphi: &ScalarField, base: &State, model: &Model) -> VectorField {
    let g = model.grid;
    let p = &model.params;
    let (hx, hy) = (g.hx(), g.hy());
    let mut f = VectorField::zeros(g);
    let parts: Vec<_> = (0..2)
        .map(|s| {
            let dc = if s == 0 { dc1 } else { dc2 };
            let faces = SgFaces::new(s, &base.phi, &model.bd.w, None, p.d(s));
            let lin = faces.fluxes(dc, &Trace::zeros(g));
            let drift = linearized_drift(&faces, base.c(s), model.bd.gamma(s), dphi, None);
            (lin, drift)
        })
        .collect();
    let dsum = dc1.add(dc2);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let k = g.xface(i, j);
            let mut v = (dsum.at(i, j) - dsum.at(i - 1, j)) / hx;
            for (s, ((lx, _), (gx, _))) in parts.iter().enumerate() {
                v += (lx[k] + gx[k]) / p.d(s);
            }
            f.ux[k] = p.k * v;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let k = g.yface(i, j);
            let mut v = (dsum.at(i, j) - dsum.at(i, j - 1)) / hy;
            for (s, ((_, ly), (_, gy))) in parts.iter().enumerate() {
                v += (ly[k] + gy[k]) / p.d(s);
            }
            f.uy[k] = p.k * v;
        }
    }
    f
}

/// `N` tangent modes with their accumulated log growth factors.
#[derive(Clone, Debug)]
pub struct TangentBundle {
    pub modes: Vec<TangentState>,
    pub log_growth: Vec<f64>,
    pub elapsed: f64,
    pub cycles: usize,
    /// `log det Gram` before each orthonormalization.
    pub log_gram_dets: Vec<f64>,
}

/// Outcome of one orthonormalization.
#[derive(Clone, Debug)]
pub struct OrthoReport {
    pub log_factors: Vec<f64>,
    pub log_det_gram: f64,
}

impl TangentBundle {
    pub fn new(modes: Vec<TangentState>) -> Self {
        let n = modes.len();
        TangentBundle { modes, log_growth: vec![0.0; n], elapsed: 0.0, cycles: 0, log_gram_dets: Vec::new() }
    }

    /// Seeded random orthonormal bundle with solenoidal velocities; the
    /// accumulators start at zero.
    pub fn random(model: &Model, n: usize, seed: u64, t: f64) -> Result<Self> {
        let g = model.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (0..n)
            .map(|_| {
                let mut m = TangentState::zeros(g, t);
                m.c1.values.iter_mut().for_each(|v| *v = rng.gen::<f64>() - 0.5);
                m.c2.values.iter_mut().for_each(|v| *v = rng.gen::<f64>() - 0.5);
                let mut u: Vec<f64> = to_flat(&m.u).iter().map(|_| rng.gen::<f64>() - 0.5).collect();
                model.stokes.projector().project(&mut u);
                m.u = from_flat(&g, &u);
                m
            })
            .collect();
        let mut b = TangentBundle::new(modes);
        orthonormalize(&mut b)?;
        b.log_growth.iter_mut().for_each(|v| *v = 0.0);
        b.cycles = 0;
        b.log_gram_dets.clear();
        Ok(b)
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.modes.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = v0_inner(&self.modes[i], &self.modes[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Spectral condition number of the Gram matrix.
    pub fn gram_condition(&self) -> f64 {
        let e = SymmetricEigen::new(self.gram()).eigenvalues;
        let hi = e.iter().cloned().fold(f64::MIN, f64::max);
        let lo = e.iter().cloned().fold(f64::MAX, f64::min);
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }

    /// Advances every mode along one base step.
    pub fn step(&mut self, base: &State, base_next: &State, dt: f64, model: &Model) -> Result<()> {
        let next: Result<Vec<TangentState>> = self.modes.par_iter().map(|m| tangent_step(m, base, base_next, dt, model)).collect();
        self.modes = next?;
        self.elapsed += dt;
        Ok(())
    }
}

/// Relative size below which a Gram-Schmidt remainder counts as collapsed
/// (a Gram condition number of about `1e12`).
const COLLAPSE: f64 = 1e-6;

/// Modified Gram-Schmidt (two passes) in the `𝒱₀` inner product. Adds the
/// log of each normalization factor to the accumulators.
pub fn orthonormalize(bundle: &mut TangentBundle) -> Result<OrthoReport> {
    let n = bundle.modes.len();
    let mut log_factors = Vec::with_capacity(n);
    for j in 0..n {
        let original = v0_norm(&bundle.modes[j]);
        if !(original > 0.0 && original.is_finite()) {
            return Err(Error::RankDeficient { index: j });
        }
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = bundle.modes.split_at_mut(j);
                let c = v0_inner(&rest[0], &done[k]);
                rest[0].axpy(-c, &done[k]);
            }
        }
        let r = v0_norm(&bundle.modes[j]);
        if !(r > COLLAPSE * original) {
            return Err(Error::RankDeficient { index: j });
        }
        bundle.modes[j] = bundle.modes[j].scaled(1.0 / r);
        log_factors.push(r.ln());
    }
    for (acc, f) in bundle.log_growth.iter_mut().zip(&log_factors) {
        *acc += f;
    }
    let log_det_gram = 2.0 * log_factors.iter().sum::<f64>();
    bundle.cycles += 1;
    bundle.log_gram_dets.push(log_det_gram);
    Ok(OrthoReport { log_factors, log_det_gram })
}

/// Per-mode exponents sorted in decreasing order, with partial sums.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthRates {
    pub sigma: Vec<f64>,
    pub partial_sums: Vec<f64>,
}

pub fn volume_growth_rates(log_growth: &[f64], elapsed: f64) -> Result<GrowthRates> {
    if !(elapsed > 0.0) {
        return Err(Error::invalid(format!("elapsed time must be positive, got {elapsed}")));
    }
    let mut sigma: Vec<f64> = log_growth.iter().map(|l| l / elapsed).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let partial_sums = sigma
        .iter()
        .scan(0.0, |s, v| {
            *s += v;
            Some(*s)
        })
        .collect();
    Ok(GrowthRates { sigma, partial_sums })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimensionRow {
    pub n: usize,
    pub sum_sigma: f64,
    pub sigma_n: f64,
    pub criterion_met: bool,
}

/// Smallest `N` with `Σ_{j≤N} σ_j ≤ -N` (`None` if not reached) and the
/// full table.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionTable {
    pub n_star: Option<usize>,
    pub rows: Vec<DimensionRow>,
}

impl DimensionTable {
    pub fn from_rates(rates: &GrowthRates) -> Self {
        let rows: Vec<DimensionRow> = rates
            .sigma
            .iter()
            .zip(&rates.partial_sums)
            .enumerate()
            .map(|(k, (&s, &sum))| DimensionRow { n: k + 1, sum_sigma: sum, sigma_n: s, criterion_met: sum <= -((k + 1) as f64) })
            .collect();
        let n_star = rows.iter().find(|r| r.criterion_met).map(|r| r.n);
        DimensionTable { n_star, rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,sum_sigma,sigma_N,criterion_met\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:e},{:e},{}\n", r.n, r.sum_sigma, r.sigma_n, r.criterion_met));
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TangentOptions {
    /// Orthonormalize at least every this many steps.
    pub ortho_every: usize,
    /// ... or as soon as the Gram condition number exceeds this.
    pub cond_limit: f64,
    pub seed: u64,
    /// Integration time before the accumulators start, so the bundle
    /// settles onto the dominant modes first.
    pub warmup: f64,
}

impl Default for TangentOptions {
    fn default() -> Self {
        TangentOptions { ortho_every: 10, cond_limit: 1e8, seed: 0x5eed, warmup: 0.0 }
    }
}

/// Result of a volume-growth analysis.
#[derive(Clone, Debug)]
pub struct DimensionAnalysis {
    pub rates: GrowthRates,
    pub table: DimensionTable,
    pub log_gram_dets: Vec<f64>,
    /// Largest relative change of the partial sums over the second half.
    pub stabilization: f64,
    pub final_base: State,
}

impl DimensionAnalysis {
    pub fn stabilized(&self) -> bool {
        self.stabilization < 0.05
    }
}

/// Co-integrates the base trajectory from `base` with fixed steps `dt` and
/// an `n_max`-mode bundle; rates are measured over `horizon` after the
/// warm-up.
pub fn dimension_bound(model: &Model, base: State, dt: f64, horizon: f64, n_max: usize, opts: &TangentOptions) -> Result<DimensionAnalysis> {
    if n_max == 0 || n_max > 64 {
        return Err(Error::invalid(format!("number of modes must be in 1..=64, got {n_max}")));
    }
    if !(dt > 0.0 && horizon >= dt) {
        return Err(Error::invalid(format!("need 0 < dt <= horizon, got dt = {dt}, horizon = {horizon}")));
    }
    let warm_steps = if opts.warmup > 0.0 { (opts.warmup / dt - 1e-9).ceil() as usize } else { 0 };
    let steps = (horizon / dt - 1e-9).ceil() as usize;
    let dt = horizon / steps as f64;
    let mut bundle = TangentBundle::random(model, n_max, opts.seed, base.t)?;
    let mut state = base;
    let mut since = 0;
    let mut history: Vec<(f64, Vec<f64>)> = Vec::new();
    for k in 0..warm_steps + steps {
        let next = coupled_step(&state, dt, model)?;
        bundle.step(&state, &next, dt, model)?;
        state = next;
        since += 1;
        let end_of_phase = k + 1 == warm_steps || k + 1 == warm_steps + steps;
        if end_of_phase || since >= opts.ortho_every || bundle.gram_condition() > opts.cond_limit {
            orthonormalize(&mut bundle)?;
            since = 0;
            if k + 1 == warm_steps {
                bundle.log_growth.iter_mut().for_each(|v| *v = 0.0);
                bundle.elapsed = 0.0;
            } else if k + 1 > warm_steps {
                let r = volume_growth_rates(&bundle.log_growth, bundle.elapsed)?;
                history.push((bundle.elapsed, r.partial_sums));
            }
        }
    }
    let rates = volume_growth_rates(&bundle.log_growth, bundle.elapsed)?;
    let half = bundle.elapsed / 2.0;
    let stabilization = history
        .iter()
        .filter(|(t, _)| *t >= half)
        .flat_map(|(_, sums)| sums.iter().zip(&rates.partial_sums).map(|(a, b)| (a - b).abs() / b.abs().max(1e-300)))
        .fold(0.0, f64::max);
    Ok(DimensionAnalysis { table: DimensionTable::from_rates(&rates), rates, log_gram_dets: bundle.log_gram_dets, stabilization, final_base: state })
}
