//! Multi-run experiments behind the command line: ε-sweeps, paired runs,
//! convergence studies and envelope checks.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, dirichlet_quotient, electroneutrality_average, log_log_slope, transient_end, DiagnosticsRecord, DirichletQuotient};
use crate::error::{Error, Result};
use crate::mesh::BoundaryData;
use crate::sim::{self, config::DtPolicy, Manufactured, Model, RunOptions, SimConfig, Simulation, Trajectory};

/// Experiment-specific keys, read from an optional `[experiment]` table of
/// the run configuration.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentTable {
    /// ε values of a sweep, strictly decreasing.
    #[serde(default)]
    pub eps: Vec<f64>,
    /// Minimum number of cells across `√ε`.
    #[serde(default = "default_cells_per_debye")]
    pub cells_per_debye: f64,
    /// Refine the grid per ε instead of rejecting under-resolved members.
    #[serde(default = "yes")]
    pub auto_grid: bool,
    /// Start of the averaging window; defaults to the detected end of the transient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<f64>,
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Measurement horizon of the tangent analysis; defaults to `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub warmup: f64,
    #[serde(default = "default_ortho")]
    pub ortho_every: usize,
    /// Grid sizes of the spatial convergence study.
    #[serde(default = "default_grids")]
    pub grids: Vec<usize>,
    /// Integration time to the manufactured steady state.
    #[serde(default = "default_steady_time")]
    pub steady_time: f64,
    /// Step sizes of the temporal study, largest first.
    #[serde(default = "default_dts")]
    pub dts: Vec<f64>,
    #[serde(default = "default_time_horizon")]
    pub time_horizon: f64,
    /// Second configuration of a paired run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<PathBuf>,
}

impl Default for ExperimentTable {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn default_cells_per_debye() -> f64 {
    4.0
}
fn yes() -> bool {
    true
}
fn default_modes() -> usize {
    16
}
fn default_ortho() -> usize {
    10
}
fn default_grids() -> Vec<usize> {
    vec![16, 32, 64]
}
fn default_steady_time() -> f64 {
    1.5
}
fn default_dts() -> Vec<f64> {
    vec![4e-3, 2e-3, 1e-3, 5e-4]
}
fn default_time_horizon() -> f64 {
    0.2
}

/// Splits a configuration text into the run configuration and the
/// experiment table.
pub fn parse_experiment(text: &str) -> Result<(SimConfig, ExperimentTable)> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let exp = match table.remove("experiment") {
        Some(v) => v.try_into::<ExperimentTable>().map_err(|e| Error::Config(format!("[experiment]: {e}")))?,
        None => ExperimentTable::default(),
    };
    let cfg = if text.contains("[experiment]") {
        let rest = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        SimConfig::from_toml_str(&rest)?
    } else {
        SimConfig::from_toml_str(text)?
    };
    Ok((cfg, exp))
}

pub fn load_experiment(path: &Path) -> Result<(SimConfig, ExperimentTable)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_experiment(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Envelope check of a trajectory against the boundary data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeCheck {
    /// Smallest `m(t) - (γ̲ - tol)` over rows; negative means violated.
    pub lower_margin: f64,
    /// Smallest `(max(M(0), γ̄) + tol) - M(t)`.
    pub upper_margin: f64,
}

impl EnvelopeCheck {
    pub fn passed(&self) -> bool {
        self.lower_margin >= 0.0 && self.upper_margin >= 0.0
    }
}

/// `γ̲ - tol ≤ m(t)` and `M(t) ≤ max(M(0), γ̄) + tol` for every row. The lower
/// bound applies from below only when `m(0) ≥ γ̲`.
pub fn check_envelope(rows: &[DiagnosticsRecord], bd: &BoundaryData, tol: f64) -> EnvelopeCheck {
    let (g_lo, g_hi) = (bd.gamma_min(), bd.gamma_max());
    let m0 = rows.first().map_or(g_hi, |r| r.m_max);
    let lo0 = rows.first().map_or(g_lo, |r| r.m_min);
    let floor = g_lo.min(lo0) - tol;
    let ceil = g_hi.max(m0) + tol;
    EnvelopeCheck {
        lower_margin: rows.iter().map(|r| r.m_min - floor).fold(f64::INFINITY, f64::min),
        upper_margin: rows.iter().map(|r| ceil - r.m_max).fold(f64::INFINITY, f64::min),
    }
}

/// One member of an ε-sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub nx: usize,
    pub ny: usize,
    pub transient_end: Option<f64>,
    pub window_start: f64,
    pub window_tau: f64,
    /// Time average of `‖ρ‖²` over the window.
    pub rho_avg: f64,
    /// Post-transient `sup ‖∇Φ‖·ε^{1/2}`.
    pub grad_phi_scaled_sup: f64,
    /// Post-transient `sup ‖u‖`.
    pub u_sup: f64,
    pub status: String,
    /// Set when `rho_avg` fails to decrease relative to the previous member.
    pub monotone_violation: bool,
}

#[derive(Clone, Debug)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Slope of `log rho_avg` against `log ε`.
    pub slope: f64,
    /// `B₁` fitted at the largest ε.
    pub b1: f64,
    /// `rho_avg ≤ B₁ε^{1/3}` for each member.
    pub bound_holds: Vec<bool>,
    pub trajectories: Vec<Option<Trajectory>>,
}

impl SweepSummary {
    pub fn monotone(&self) -> bool {
        self.rows.iter().all(|r| !r.monotone_violation && r.status == "ok")
    }

    /// `sup ‖∇Φ‖ε^{1/2}` never exceeds twice its value at the largest ε.
    pub fn grad_phi_uniform(&self) -> bool {
        let base = self.rows[0].grad_phi_scaled_sup;
        self.rows.iter().all(|r| r.grad_phi_scaled_sup <= 2.0 * base)
    }

    /// Ratio of the largest to the smallest `sup ‖u‖` across the sweep.
    pub fn u_spread(&self) -> f64 {
        let hi = self.rows.iter().map(|r| r.u_sup).fold(f64::MIN, f64::max);
        let lo = self.rows.iter().map(|r| r.u_sup).fold(f64::MAX, f64::min);
        hi / lo
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("eps,nx,ny,t_transient,window_start,window_tau,rho_avg,grad_phi_scaled_sup,u_sup,bound_holds,monotone_violation,status\n");
        for (r, b) in self.rows.iter().zip(&self.bound_holds) {
            s.push_str(&format!(
                "{:e},{},{},{},{:e},{:e},{:e},{:e},{:e},{},{},{}\n",
                r.eps,
                r.nx,
                r.ny,
                r.transient_end.map_or("NaN".to_string(), |t| format!("{t:e}")),
                r.window_start,
                r.window_tau,
                r.rho_avg,
                r.grad_phi_scaled_sup,
                r.u_sup,
                b,
                r.monotone_violation,
                r.status
            ));
        }
        s
    }

    pub fn fit_csv(&self) -> String {
        format!(
            "slope,B1,monotone,grad_phi_uniform,u_spread\n{:e},{:e},{},{},{:e}\n",
            self.slope,
            self.b1,
            self.monotone(),
            self.grad_phi_uniform(),
            self.u_spread()
        )
    }
}

/// Configuration of one sweep member: `ε` replaced, grid refined (or
/// checked) so that `√ε` spans at least `cells_per_debye` cells.
pub fn sweep_member(base: &SimConfig, eps: f64, exp: &ExperimentTable) -> Result<SimConfig> {
    let mut cfg = base.clone();
    cfg.params.eps = eps;
    let debye = eps.sqrt();
    let need = |l: f64| (exp.cells_per_debye * l / debye - 1e-9).ceil() as usize;
    let (nx, ny) = (need(cfg.grid.lx), need(cfg.grid.ly));
    if cfg.grid.nx < nx || cfg.grid.ny < ny {
        if !exp.auto_grid {
            return Err(Error::Config(format!(
                "grid {}x{} under-resolves the Debye layer at eps = {eps:e}: need at least {nx}x{ny} for {} cells across sqrt(eps)",
                cfg.grid.nx, cfg.grid.ny, exp.cells_per_debye
            )));
        }
        cfg.grid.nx = cfg.grid.nx.max(nx);
        cfg.grid.ny = cfg.grid.ny.max(ny);
    }
    cfg.output.dir = None;
    cfg.validate()?;
    Ok(cfg)
}

/// Post-transient statistics of one trajectory.
pub fn analyze_member(cfg: &SimConfig, exp: &ExperimentTable, rows: &[DiagnosticsRecord]) -> Result<SweepRow> {
    let eps = cfg.params.eps;
    let t_end = cfg.time.t_end;
    let detected = transient_end(rows, cfg.diagnostics.transient_window * t_end, cfg.diagnostics.transient_tol);
    let start = exp.window_start.or(detected).unwrap_or(0.5 * t_end);
    let tau = t_end - start;
    let mut status = String::from("ok");
    if detected.is_none() && exp.window_start.is_none() {
        status = "no_plateau".into();
    } else if tau < eps.powf(2.0 / 3.0) {
        status = "window_short".into();
    }
    let rho_avg = if tau > 0.0 { electroneutrality_average(rows, start, tau)? } else { f64::NAN };
    let post = rows.iter().filter(|r| r.t >= start - 1e-12);
    let (mut gp, mut us) = (0.0f64, 0.0f64);
    for r in post {
        gp = gp.max(r.grad_phi_l2 * eps.sqrt());
        us = us.max((2.0 * r.kinetic).sqrt());
    }
    Ok(SweepRow {
        eps,
        nx: cfg.grid.nx,
        ny: cfg.grid.ny,
        transient_end: detected,
        window_start: start,
        window_tau: tau,
        rho_avg,
        grad_phi_scaled_sup: gp,
        u_sup: us,
        status,
        monotone_violation: false,
    })
}

/// Runs every ε of the sweep (concurrently) and summarizes. Failed members
/// are kept in the summary with their error as status.
pub fn sweep_eps(base: &SimConfig, exp: &ExperimentTable, out_dir: Option<&Path>) -> Result<SweepSummary> {
    let eps = &exp.eps;
    if eps.len() < 3 {
        return Err(Error::Config(format!("a sweep needs at least 3 eps values, got {}", eps.len())));
    }
    if eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!("sweep eps values must be positive and strictly decreasing, got {eps:?}")));
    }
    let members: Vec<SimConfig> = eps.iter().map(|&e| sweep_member(base, e, exp)).collect::<Result<_>>()?;
    let results: Vec<(SweepRow, Option<Trajectory>)> = members
        .par_iter()
        .enumerate()
        .map(|(k, cfg)| {
            let opts = RunOptions { keep_snapshots: false, out_dir: out_dir.map(|d| d.join(format!("eps_{k}"))) };
            match sim::run_with(cfg, &opts).and_then(|traj| Ok((analyze_member(cfg, exp, &traj.rows)?, traj))) {
                Ok((row, traj)) => (row, Some(traj)),
                Err(e) => {
                    log::error!("sweep member eps = {:e} failed: {e}", cfg.params.eps);
                    let row = SweepRow {
                        eps: cfg.params.eps,
                        nx: cfg.grid.nx,
                        ny: cfg.grid.ny,
                        transient_end: None,
                        window_start: f64::NAN,
                        window_tau: f64::NAN,
                        rho_avg: f64::NAN,
                        grad_phi_scaled_sup: f64::NAN,
                        u_sup: f64::NAN,
                        status: format!("failed: {e}").replace(',', ";"),
                        monotone_violation: false,
                    };
                    (row, None)
                }
            }
        })
        .collect();
    let (mut rows, trajectories): (Vec<SweepRow>, Vec<Option<Trajectory>>) = results.into_iter().unzip();
    for k in 1..rows.len() {
        let (prev, cur) = (rows[k - 1].rho_avg, rows[k].rho_avg);
        rows[k].monotone_violation = !(cur < prev);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.rho_avg).collect();
    let slope = if ys.iter().all(|y| *y > 0.0) { log_log_slope(&xs, &ys) } else { f64::NAN };
    let b1 = rows[0].rho_avg / rows[0].eps.cbrt();
    let bound_holds = rows.iter().map(|r| r.rho_avg <= b1 * r.eps.cbrt() * (1.0 + 1e-12)).collect();
    Ok(SweepSummary { rows, slope, b1, bound_holds, trajectories })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairRow {
    pub t: f64,
    pub quotient: DirichletQuotient,
}

pub fn pair_csv(rows: &[PairRow]) -> String {
    let mut s = String::from("t,E0,E1,ratio\n");
    for r in rows {
        s.push_str(&format!("{:e},{:e},{:e},{:e}\n", r.t, r.quotient.e0, r.quotient.e1, r.quotient.ratio));
    }
    s
}

/// Runs two configurations that differ only in their initial data and
/// reports the Dirichlet quotient of the difference at every output time.
pub fn pair_diff(a: &SimConfig, b: &SimConfig) -> Result<Vec<PairRow>> {
    let same = a.grid == b.grid && a.params == b.params && a.bc == b.bc && a.time == b.time && a.output.every == b.output.every && a.manufactured == b.manufactured;
    if !same {
        return Err(Error::GridMismatch("paired runs need identical grid, parameters, boundary data and time settings".into()));
    }
    let opts = RunOptions { keep_snapshots: true, out_dir: None };
    let first = |c: &SimConfig| -> Result<()> {
        let m = Model::from_config(c)?;
        sim::initial_state(c, &m).map(|_| ())
    };
    first(a)?;
    let sa = Simulation::from_config(a)?;
    let sb = Simulation::from_config(b)?;
    dirichlet_quotient(&sa.state, &sb.state, &sa.model.params)?;
    let (ta, tb) = rayon::join(|| sim::run_simulation(a, sa, &opts), || sim::run_simulation(b, sb, &opts));
    let (ta, tb) = (ta?, tb?);
    let p = a.params();
    ta.snapshots
        .iter()
        .zip(&tb.snapshots)
        .map(|(x, y)| Ok(PairRow { t: x.t, quotient: dirichlet_quotient(x, y, &p)? }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialRow {
    pub n: usize,
    pub h: f64,
    pub err_c: f64,
    pub err_phi: f64,
    pub err_u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemporalRow {
    pub dt: f64,
    /// Max-norm change of `c₁(t_end)` when `dt` is halved.
    pub diff_c1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub spatial: Vec<SpatialRow>,
    pub temporal: Vec<TemporalRow>,
    pub order_c: f64,
    pub order_phi: f64,
    pub order_u: f64,
    pub order_t: f64,
}

impl ConvergenceReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("study,n,h_or_dt,err_c,err_phi,err_u\n");
        for r in &self.spatial {
            s.push_str(&format!("space,{},{:e},{:e},{:e},{:e}\n", r.n, r.h, r.err_c, r.err_phi, r.err_u));
        }
        for r in &self.temporal {
            s.push_str(&format!("time,,{:e},{:e},,\n", r.dt, r.diff_c1));
        }
        s
    }

    pub fn orders_csv(&self) -> String {
        format!("order_c,order_phi,order_u,order_t\n{:e},{:e},{:e},{:e}\n", self.order_c, self.order_phi, self.order_u, self.order_t)
    }
}

/// Manufactured-solution convergence: spatial orders at the steady state on
/// the given grids, temporal order by self-convergence under halving `dt`.
pub fn convergence(base: &SimConfig, exp: &ExperimentTable) -> Result<ConvergenceReport> {
    if exp.grids.len() < 2 || exp.dts.len() < 3 {
        return Err(Error::Config("convergence needs at least 2 grids and 3 time steps".into()));
    }
    let mut cfg = base.clone();
    cfg.manufactured = true;
    cfg.output.dir = None;
    let spatial: Vec<SpatialRow> = exp
        .grids
        .par_iter()
        .map(|&n| {
            let mut c = cfg.clone();
            c.grid.nx = n;
            c.grid.ny = n;
            c.init.scale = 1.0;
            c.init.velocity = 1.0;
            c.time.policy = DtPolicy::Cfl;
            c.time.t_end = exp.steady_time;
            let mut sim = Simulation::from_config(&c)?;
            sim.advance_to(exp.steady_time)?;
            let m = Manufactured::new(&sim.model.grid, &sim.model.params);
            let s = &sim.state;
            let e = m.errors(&s.c1, &s.c2, &s.phi, &s.u);
            Ok(SpatialRow { n, h: sim.model.grid.hx(), err_c: e.c, err_phi: e.phi, err_u: e.u })
        })
        .collect::<Result<_>>()?;
    let hs: Vec<f64> = spatial.iter().map(|r| r.h).collect();
    let order = |f: fn(&SpatialRow) -> f64| log_log_slope(&hs, &spatial.iter().map(f).collect::<Vec<_>>());

    let finals: Vec<crate::mesh::ScalarField> = exp
        .dts
        .par_iter()
        .map(|&dt| {
            let mut c = cfg.clone();
            c.init.scale = 1.5;
            c.init.velocity = 0.0;
            c.time.policy = DtPolicy::Fixed;
            c.time.dt = dt;
            c.time.t_end = exp.time_horizon;
            let mut sim = Simulation::from_config(&c)?;
            sim.advance_to(exp.time_horizon)?;
            if sim.rejections > 0 {
                return Err(Error::Config(format!("time step {dt:e} exceeds the stability limit of the temporal study")));
            }
            Ok(sim.state.c1)
        })
        .collect::<Result<_>>()?;
    let temporal: Vec<TemporalRow> = finals.windows(2).zip(&exp.dts).map(|(w, &dt)| TemporalRow { dt, diff_c1: w[0].max_abs_diff(&w[1]) }).collect();
    let order_t = log_log_slope(&temporal.iter().map(|r| r.dt).collect::<Vec<_>>(), &temporal.iter().map(|r| r.diff_c1).collect::<Vec<_>>());
    Ok(ConvergenceReport { order_c: order(|r| r.err_c), order_phi: order(|r| r.err_phi), order_u: order(|r| r.err_u), order_t, spatial, temporal })
}

/// Diagnostics CSV of a trajectory.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    diagnostics::to_csv(&traj.rows)
}
