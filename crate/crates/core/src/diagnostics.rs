//! Observables along trajectories: energies, relative entropy, envelopes,
//! electroneutrality averages and Dirichlet quotients.

use std::fmt::Write as _;

use crate::elliptic::{inv_dirichlet_laplacian, DirichletLaplacian};
use crate::error::{Error, Result};
use crate::mesh::{h1_semi_sq, inner, l2_sq, vector_h1_inner, vector_l2_sq, Boundary, BoundaryData, ScalarField};
use crate::steady::SteadyState;
use crate::transport::{Params, State, Z};

/// CSV column names, in order.
pub const CSV_COLUMNS: [&str; 16] = [
    "t",
    "F",
    "P",
    "kinetic",
    "l2_c1",
    "l2_c2",
    "h1_c1",
    "h1_c2",
    "rho_l2_sq",
    "rho_l3_cubed",
    "u_V_sq",
    "grad_phi_l2",
    "M",
    "m",
    "E_rel",
    "mu_dissipation",
];

/// One row of observables. `l2_c*` are norms, `h1_c*` squared gradient
/// norms (with the concentration trace). `E_rel` and `mu_dissipation` are
/// NaN when no steady reference is attached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub f: f64,
    pub p: f64,
    pub kinetic: f64,
    pub l2_c1: f64,
    pub l2_c2: f64,
    pub h1_c1: f64,
    pub h1_c2: f64,
    pub rho_l2_sq: f64,
    pub rho_l3_cubed: f64,
    pub u_v_sq: f64,
    pub grad_phi_l2: f64,
    pub m_max: f64,
    pub m_min: f64,
    pub e_rel: f64,
    pub mu_dissipation: f64,
}

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 16] {
        [
            self.t,
            self.f,
            self.p,
            self.kinetic,
            self.l2_c1,
            self.l2_c2,
            self.h1_c1,
            self.h1_c2,
            self.rho_l2_sq,
            self.rho_l3_cubed,
            self.u_v_sq,
            self.grad_phi_l2,
            self.m_max,
            self.m_min,
            self.e_rel,
            self.mu_dissipation,
        ]
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    /// Shortest round-trip formatting, so CSVs are reproducible byte for byte.
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.values().iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            write!(s, "{v:e}").expect("write to string");
        }
        s
    }
}

/// Writes records as CSV text.
pub fn to_csv(rows: &[DiagnosticsRecord]) -> String {
    let mut out = DiagnosticsRecord::csv_header();
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Coulomb energy `𝒫 = (1/2ε)∫ρ(-Δ_D)⁻¹ρ`.
pub fn coulomb_energy(lap: &DirichletLaplacian, rho: &ScalarField, eps: f64) -> Result<f64> {
    let phi = inv_dirichlet_laplacian(lap, rho)?;
    Ok(inner(rho, &phi) / (2.0 * eps))
}

/// `𝓕 = (1/2K)‖u‖² + 𝒫 + δ(‖c₁‖² + ‖c₂‖²)`.
pub fn energy_f(state: &State, p: &Params, lap: &DirichletLaplacian) -> Result<f64> {
    let pc = coulomb_energy(lap, &state.rho, p.eps)?;
    Ok(vector_l2_sq(&state.u) / (2.0 * p.k) + pc + p.delta * (l2_sq(&state.c1) + l2_sq(&state.c2)))
}

/// `ψ(s) = s log s - s + 1`, with a series near `s = 1`.
pub fn psi(s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    let d = s - 1.0;
    if d.abs() < 1e-2 {
        // Σ_{n≥2} (-1)^n dⁿ/(n(n-1))
        let mut term = d * d;
        let mut sum = 0.0;
        for n in 2..=8 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * term / (n * (n - 1)) as f64;
            term *= d;
        }
        sum
    } else {
        s * d.ln_1p() - d
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeEntropy {
    pub e_rel: f64,
    pub mu_dissipation: f64,
}

/// Relative entropy with respect to a steady state and the electrochemical
/// dissipation `Σ (Dᵢ/2)∫cᵢ|∇(μᵢ - μᵢ*)|²`.
pub fn relative_entropy(state: &State, steady: &SteadyState, bd: &BoundaryData, p: &Params) -> Result<RelativeEntropy> {
    let g = state.grid();
    steady.c1.grid.same_as(&g)?;
    let (hx, hy) = (g.hx(), g.hy());
    let area = g.cell_area();
    let mut entropy = 0.0;
    let mut dissipation = 0.0;
    for s in 0..2 {
        let c = state.c(s);
        let cs = steady.c(s);
        for (field, sp) in [(c, s), (cs, s)] {
            if let Some((cell, &value)) = field.values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::NonpositiveConcentration { species: sp + 1, cell, value });
            }
        }
        entropy += c.values.iter().zip(&cs.values).map(|(a, b)| b * psi(a / b)).sum::<f64>() * area;

        let dmu = |i: usize, j: usize| (c.at(i, j) / cs.at(i, j)).ln() + Z[s] * (state.phi.at(i, j) - steady.phi.at(i, j));
        let gamma = bd.gamma(s);
        let mut acc = 0.0;
        for j in 0..g.ny {
            for i in 1..g.nx {
                let cf = 0.5 * (c.at(i, j) + c.at(i - 1, j));
                let d = (dmu(i, j) - dmu(i - 1, j)) / hx;
                acc += cf * d * d * area;
            }
            // wall faces: both states share the trace, so δμ = 0 there
            let d0 = dmu(0, j) / (0.5 * hx);
            let d1 = dmu(g.nx - 1, j) / (0.5 * hx);
            acc += (gamma.left[j] * d0 * d0 + gamma.right[j] * d1 * d1) * 0.5 * area;
        }
        for i in 0..g.nx {
            for j in 1..g.ny {
                let cf = 0.5 * (c.at(i, j) + c.at(i, j - 1));
                let d = (dmu(i, j) - dmu(i, j - 1)) / hy;
                acc += cf * d * d * area;
            }
            let d0 = dmu(i, 0) / (0.5 * hy);
            let d1 = dmu(i, g.ny - 1) / (0.5 * hy);
            acc += (gamma.bottom[i] * d0 * d0 + gamma.top[i] * d1 * d1) * 0.5 * area;
        }
        dissipation += 0.5 * p.d(s) * acc;
    }
    let dphi = state.phi.sub(&steady.phi);
    entropy += 0.5 * p.eps * h1_semi_sq(&dphi, Boundary::Zero);
    entropy += vector_l2_sq(&state.u) / (2.0 * p.k);
    Ok(RelativeEntropy { e_rel: entropy, mu_dissipation: dissipation })
}

/// Envelope `(M, m)` over both species.
pub fn linf_envelope(state: &State) -> (f64, f64) {
    state.envelope()
}

/// All observables of one state.
pub fn record(
    state: &State,
    p: &Params,
    bd: &BoundaryData,
    lap: &DirichletLaplacian,
    steady: Option<&SteadyState>,
) -> Result<DiagnosticsRecord> {
    let pc = coulomb_energy(lap, &state.rho, p.eps)?;
    let u2 = vector_l2_sq(&state.u);
    let (c1sq, c2sq) = (l2_sq(&state.c1), l2_sq(&state.c2));
    let area = state.grid().cell_area();
    let (m_max, m_min) = state.envelope();
    let rel = match steady {
        Some(s) => relative_entropy(state, s, bd, p)?,
        None => RelativeEntropy { e_rel: f64::NAN, mu_dissipation: f64::NAN },
    };
    Ok(DiagnosticsRecord {
        t: state.t,
        f: u2 / (2.0 * p.k) + pc + p.delta * (c1sq + c2sq),
        p: pc,
        kinetic: 0.5 * u2,
        l2_c1: c1sq.sqrt(),
        l2_c2: c2sq.sqrt(),
        h1_c1: h1_semi_sq(&state.c1, Boundary::Dirichlet(&bd.gamma1)),
        h1_c2: h1_semi_sq(&state.c2, Boundary::Dirichlet(&bd.gamma2)),
        rho_l2_sq: l2_sq(&state.rho),
        rho_l3_cubed: state.rho.values.iter().map(|r| r.abs().powi(3)).sum::<f64>() * area,
        u_v_sq: vector_h1_inner(&state.u, &state.u),
        grad_phi_l2: h1_semi_sq(&state.phi, Boundary::Dirichlet(&bd.w)).sqrt(),
        m_max,
        m_min,
        e_rel: rel.e_rel,
        mu_dissipation: rel.mu_dissipation,
    })
}

/// Linear interpolation of a column at time `t` (rows sorted by time).
fn interpolate(rows: &[DiagnosticsRecord], t: f64, col: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    let k = rows.partition_point(|r| r.t < t).clamp(1, rows.len() - 1);
    let (a, b) = (&rows[k - 1], &rows[k]);
    if b.t == a.t {
        return col(b);
    }
    let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
    (1.0 - w) * col(a) + w * col(b)
}

/// Trapezoidal time average of a column over `[start, start + tau]`.
pub fn window_average(
    rows: &[DiagnosticsRecord],
    start: f64,
    tau: f64,
    col: impl Fn(&DiagnosticsRecord) -> f64 + Copy,
) -> Result<f64> {
    let end = start + tau;
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("averaging window must be positive, got {tau}")));
    }
    let slack = 1e-9 * end.abs().max(1.0);
    if rows.len() < 2 || rows[0].t > start + slack || rows[rows.len() - 1].t < end - slack {
        return Err(Error::InsufficientWindow { start, end });
    }
    let mut pts = vec![(start, interpolate(rows, start, col))];
    pts.extend(rows.iter().filter(|r| r.t > start && r.t < end).map(|r| (r.t, col(r))));
    pts.push((end, interpolate(rows, end, col)));
    let integral: f64 = pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
    Ok(integral / tau)
}

/// `(1/τ)∫_T^{T+τ}‖ρ‖²_{L²} ds`.
pub fn electroneutrality_average(rows: &[DiagnosticsRecord], start: f64, tau: f64) -> Result<f64> {
    window_average(rows, start, tau, |r| r.rho_l2_sq)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DissipationRow {
    pub t: f64,
    pub df_dt: f64,
    pub u_v_sq: f64,
    pub sum_h1_c: f64,
    pub rho_l3_cubed: f64,
}

/// Raw terms of the energy inequality per row; `dF/dt` by centered
/// differences (one-sided at the ends).
pub fn dissipation_residual(rows: &[DiagnosticsRecord]) -> Result<Vec<DissipationRow>> {
    if rows.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 rows, got {}", rows.len())));
    }
    let n = rows.len();
    Ok((0..n)
        .map(|k| {
            let (a, b) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            DissipationRow {
                t: rows[k].t,
                df_dt: (rows[b].f - rows[a].f) / (rows[b].t - rows[a].t),
                u_v_sq: rows[k].u_v_sq,
                sum_h1_c: rows[k].h1_c1 + rows[k].h1_c2,
                rho_l3_cubed: rows[k].rho_l3_cubed,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletQuotient {
    pub e0: f64,
    pub e1: f64,
    pub ratio: f64,
}

/// Energy and Dirichlet energy of the difference of two states.
pub fn dirichlet_quotient(a: &State, b: &State, p: &Params) -> Result<DirichletQuotient> {
    a.grid().same_as(&b.grid())?;
    let d1 = a.c1.sub(&b.c1);
    let d2 = a.c2.sub(&b.c2);
    let du = a.u.sub(&b.u);
    let e0 = l2_sq(&d1) + l2_sq(&d2) + vector_l2_sq(&du);
    if e0 == 0.0 {
        return Err(Error::IdenticalStates);
    }
    let e1 = p.d1 * h1_semi_sq(&d1, Boundary::Zero) + p.d2 * h1_semi_sq(&d2, Boundary::Zero) + p.nu * vector_h1_inner(&du, &du);
    Ok(DirichletQuotient { e0, e1, ratio: e1 / e0 })
}

/// Time after which `𝓕` stays within `tol` (relative) of its value over a
/// window of `window` time units.
pub fn transient_end(rows: &[DiagnosticsRecord], window: f64, tol: f64) -> Option<f64> {
    let last = rows.last()?.t;
    for (k, r) in rows.iter().enumerate() {
        if r.t + window > last + 1e-12 {
            return None;
        }
        let stable = rows[k..]
            .iter()
            .take_while(|q| q.t <= r.t + window + 1e-12)
            .all(|q| (q.f - r.f).abs() <= tol * r.f.abs());
        if stable {
            return Some(r.t);
        }
    }
    None
}

/// Least-squares fit `log y = a - λ t`; returns `(λ, R²)`.
pub fn log_linear_fit(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mt = ts.iter().sum::<f64>() / n;
    let ml = ls.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(&ls).map(|(t, l)| (t - mt) * (l - ml)).sum();
    let syy: f64 = ls.iter().map(|l| (l - ml).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (-slope, r2)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let (lambda, _) = log_linear_fit(&lx, ys);
    -lambda
}
