//! Coupled time stepping, trajectories and restarts.
//!
//! One step is `Φ → (c₁, c₂) → (ρ, Φ) → u`: the transport solve uses the
//! potential and velocity of the incoming state, the Stokes solve the
//! freshly updated charge.

pub mod checkpoint;
pub mod config;
pub mod manufactured;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::elliptic::{harmonic_extension, DirichletLaplacian};
use crate::error::{Error, Result};
use crate::fluid::{electric_force_sg, solenoidal_from_stream, stokes_step, StokesWorkspace};
use crate::mesh::{BoundaryData, Grid, ScalarField, VectorField};
use crate::steady::{boltzmann_state, solve_steady_np, BoltzmannParams, SteadyState};
use crate::transport::{dielectric_dt_limit, np_step_with_source, Params, State};

pub use config::{DtPolicy, InitKind, SimConfig};
pub use manufactured::Manufactured;

/// Volumetric sources for the transport and momentum equations.
#[derive(Clone, Debug)]
pub struct Forcing {
    pub np: [ScalarField; 2],
    pub stokes: VectorField,
}

/// Everything a step needs besides the state itself.
#[derive(Clone, Debug)]
pub struct Model {
    pub grid: Grid,
    pub params: Params,
    pub bd: BoundaryData,
    pub lap: Arc<DirichletLaplacian>,
    pub stokes: Arc<StokesWorkspace>,
    pub forcing: Option<Arc<Forcing>>,
}

impl Model {
    pub fn new(grid: Grid, params: Params, bd: BoundaryData) -> Result<Self> {
        params.validate()?;
        bd.validate(&grid)?;
        Ok(Model {
            grid,
            params,
            bd,
            lap: DirichletLaplacian::new(grid)?,
            stokes: Arc::new(StokesWorkspace::new(grid, params.nu)?),
            forcing: None,
        })
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        let g = cfg.grid()?;
        let p = cfg.params();
        if cfg.manufactured {
            let m = Manufactured::new(&g, &p);
            let mut model = Model::new(g, p, m.boundary_data(&g))?;
            model.forcing = Some(Arc::new(m.forcing(&g, &p)));
            Ok(model)
        } else {
            Model::new(g, p, cfg.boundary_data(&g)?)
        }
    }

    /// Same model with different parameters, reusing the grid operators
    /// where possible.
    pub fn with_params(&self, params: Params) -> Result<Self> {
        params.validate()?;
        let stokes = if params.nu == self.params.nu { self.stokes.clone() } else { Arc::new(StokesWorkspace::new(self.grid, params.nu)?) };
        Ok(Model { params, stokes, ..self.clone() })
    }

    pub fn state(&self, t: f64, c1: ScalarField, c2: ScalarField, u: VectorField) -> Result<State> {
        State::new(t, c1, c2, u, &self.bd, &self.params, &self.lap)
    }

    /// `0.5·min(hx, hy) / max(|u| + D_max|∇Φ|)` over all faces.
    pub fn cfl_limit(&self, s: &State) -> f64 {
        let g = self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let w = &self.bd.w;
        let mut grad = 0.0f64;
        for j in 0..g.ny {
            grad = grad.max((s.phi.at(0, j) - w.left[j]).abs() / (0.5 * hx));
            grad = grad.max((w.right[j] - s.phi.at(g.nx - 1, j)).abs() / (0.5 * hx));
            for i in 1..g.nx {
                grad = grad.max((s.phi.at(i, j) - s.phi.at(i - 1, j)).abs() / hx);
            }
        }
        for i in 0..g.nx {
            grad = grad.max((s.phi.at(i, 0) - w.bottom[i]).abs() / (0.5 * hy));
            grad = grad.max((w.top[i] - s.phi.at(i, g.ny - 1)).abs() / (0.5 * hy));
            for j in 1..g.ny {
                grad = grad.max((s.phi.at(i, j) - s.phi.at(i, j - 1)).abs() / hy);
            }
        }
        let speed = s.u.max_abs() + self.params.d_max() * grad;
        if speed > 0.0 {
            0.5 * hx.min(hy) / speed
        } else {
            f64::INFINITY
        }
    }

    /// Largest step accepted by [`coupled_step`] from `s`.
    pub fn stable_dt(&self, s: &State) -> f64 {
        let cfl = self.cfl_limit(s);
        if self.forcing.is_some() {
            cfl
        } else {
            cfl.min(dielectric_dt_limit(s, &self.params))
        }
    }
}

/// One split step of the coupled system.
///
/// Rejects `dt` above the advective CFL limit, and above the dielectric
/// relaxation limit that guarantees the discrete maximum principle.
pub fn coupled_step(state: &State, dt: f64, model: &Model) -> Result<State> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let slack = 1.0 + 1e-12;
    let cfl = model.cfl_limit(state);
    if dt > cfl * slack {
        return Err(Error::RetryWithSmallerDt { dt, limit: cfl, reason: "advective CFL" });
    }
    if model.forcing.is_none() {
        let lim = dielectric_dt_limit(state, &model.params);
        if dt > lim * slack {
            return Err(Error::RetryWithSmallerDt { dt, limit: lim, reason: "dielectric relaxation" });
        }
    }
    let p = &model.params;
    let source = model.forcing.as_ref().map(|f| [&f.np[0], &f.np[1]]);
    let (c1, c2) = np_step_with_source(state, dt, &model.bd, p, source)?;
    let next = model.state(state.t + dt, c1, c2, VectorField::zeros(model.grid))?;
    let mut force = electric_force_sg(&next.c1, &next.c2, &next.phi, &model.bd, p);
    if let Some(f) = &model.forcing {
        force.axpy(1.0, &f.stokes);
    }
    let u = stokes_step(&state.u, &force, dt, &model.stokes)?;
    Ok(State { u, ..next })
}

/// A state advanced with a time-step policy.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub model: Model,
    pub state: State,
    pub dt: f64,
    pub policy: DtPolicy,
    pub safety: f64,
    /// Steps taken and steps rejected so far.
    pub steps: usize,
    pub rejections: usize,
}

const MAX_REJECTIONS: usize = 60;

impl Simulation {
    pub fn new(model: Model, state: State, dt: f64, policy: DtPolicy, safety: f64) -> Result<Self> {
        if !(dt > 0.0 && safety > 0.0) {
            return Err(Error::invalid(format!("dt and safety must be positive, got {dt}, {safety}")));
        }
        Ok(Simulation { model, state, dt, policy, safety, steps: 0, rejections: 0 })
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        let model = Model::from_config(cfg)?;
        let state = initial_state(cfg, &model)?;
        Simulation::new(model, state, cfg.time.dt, cfg.time.policy, cfg.time.safety)
    }

    /// Advances exactly to `t_target`. The step count inside the interval is
    /// chosen from the interval length alone, so a restart at an interval
    /// boundary reproduces the uninterrupted run bit for bit.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        let mut cap = f64::INFINITY;
        let mut rejected = 0;
        let tiny = 1e-12 * t_target.abs().max(1.0);
        while t_target - self.state.t > tiny {
            let remaining = t_target - self.state.t;
            let target = match self.policy {
                DtPolicy::Fixed => self.dt.min(cap),
                DtPolicy::Cfl => self.dt.min(self.safety * self.model.stable_dt(&self.state)).min(cap),
            };
            let n = ((remaining / target) - 1e-9).ceil().max(1.0);
            let dt = remaining / n;
            match coupled_step(&self.state, dt, &self.model) {
                Ok(mut next) => {
                    if n == 1.0 {
                        next.t = t_target;
                    }
                    self.state = next;
                    self.steps += 1;
                }
                Err(Error::RetryWithSmallerDt { limit, reason, .. }) => {
                    rejected += 1;
                    self.rejections += 1;
                    if rejected > MAX_REJECTIONS || !(limit > 0.0) {
                        return Err(Error::NonConvergence { solver: reason, iterations: rejected, residual: limit });
                    }
                    cap = 0.9 * limit;
                    log::debug!("t = {:.6e}: step {dt:.3e} rejected ({reason}), retrying with {cap:.3e}", self.state.t);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

/// The configured initial state (or the checkpoint it names).
pub fn initial_state(cfg: &SimConfig, model: &Model) -> Result<State> {
    let g = model.grid;
    if let Some(path) = &cfg.init.checkpoint {
        let ck = checkpoint::load(path)?;
        ck.check_compatible(&g, &model.params)?;
        if ck.steady {
            return model.state(0.0, ck.state.c1, ck.state.c2, ck.state.u);
        }
        return Ok(ck.state);
    }
    if cfg.manufactured {
        let m = Manufactured::new(&g, &model.params);
        let (c1, c2, u) = m.sampled(&g);
        let scale = cfg.init.scale;
        return model.state(0.0, c1.scaled(scale), c2.scaled(scale), u.scaled(cfg.init.velocity));
    }
    let init = &cfg.init;
    let (c1, c2) = match init.kind {
        InitKind::Uniform => (ScalarField::constant(g, init.c1), ScalarField::constant(g, init.c2)),
        InitKind::Harmonic => (harmonic_extension(&model.lap, &model.bd.gamma1)?, harmonic_extension(&model.lap, &model.bd.gamma2)?),
        InitKind::Boltzmann | InitKind::Steady => {
            let s = steady_reference(model, init.kind == InitKind::Boltzmann)?;
            (s.c1, s.c2)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lx, ly) = (g.lx, g.ly);
    let pi = std::f64::consts::PI;
    let bump = ScalarField::from_fn(g, |x, y| (pi * x / lx).sin() * (pi * y / ly).sin());
    let mut c1 = c1.zip_map(&bump, |c, b| init.scale * c * (1.0 + init.mode * b));
    let mut c2 = c2.scaled(init.scale);
    if init.noise > 0.0 {
        for v in c1.values.iter_mut().chain(c2.values.iter_mut()) {
            *v *= 1.0 + init.noise * (2.0 * rng.gen::<f64>() - 1.0);
        }
    }
    let u = if init.velocity != 0.0 {
        let a = init.velocity;
        solenoidal_from_stream(g, |x, y| a * ((pi * x / lx).sin() * (pi * y / ly).sin()).powi(2))
    } else {
        VectorField::zeros(g)
    };
    model.state(0.0, c1, c2, u)
}

/// Boltzmann state when the data are in equilibrium and `boltzmann` is set,
/// otherwise the Gummel steady state.
pub fn steady_reference(model: &Model, boltzmann: bool) -> Result<SteadyState> {
    if boltzmann {
        let z = BoltzmannParams::from_equilibrium_data(&model.bd, 1e-12)
            .ok_or_else(|| Error::Config("init.kind = \"boltzmann\" needs equilibrium boundary data".into()))?;
        boltzmann_state(&model.lap, z, &model.bd.w, model.params.eps)
    } else {
        solve_steady_np(&model.lap, &model.bd, &model.params)
    }
}

/// Diagnostics rows, snapshots at output times, and the final state.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub rows: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<State>,
    pub final_state: State,
    pub steps: usize,
}

impl Trajectory {
    pub fn csv(&self) -> String {
        diagnostics::to_csv(&self.rows)
    }
}

/// Options for [`run_with`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Keep a copy of the state at every output time.
    pub keep_snapshots: bool,
    /// Write `diagnostics.csv` and checkpoints here.
    pub out_dir: Option<PathBuf>,
}

pub fn run(cfg: &SimConfig) -> Result<Trajectory> {
    run_with(cfg, &RunOptions { keep_snapshots: false, out_dir: cfg.output.dir.clone() })
}

/// Integrates to `t_end`, recording diagnostics at the output cadence.
/// On a failed step the last good state is written to `last_good.ckpt`
/// (when an output directory is set) before the error is returned.
pub fn run_with(cfg: &SimConfig, opts: &RunOptions) -> Result<Trajectory> {
    let sim = Simulation::from_config(cfg)?;
    run_simulation(cfg, sim, opts)
}

pub fn run_simulation(cfg: &SimConfig, mut sim: Simulation, opts: &RunOptions) -> Result<Trajectory> {
    let reference = if cfg.diagnostics.steady_reference {
        Some(steady_reference(&sim.model, BoltzmannParams::from_equilibrium_data(&sim.model.bd, 1e-12).is_some())?)
    } else {
        None
    };
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
    }
    let record = |s: &State, m: &Model| diagnostics::record(s, &m.params, &m.bd, &m.lap, reference.as_ref());
    let mut rows = vec![record(&sim.state, &sim.model)?];
    let mut snapshots = Vec::new();
    if opts.keep_snapshots {
        snapshots.push(sim.state.clone());
    }
    let mut csv = opts.out_dir.as_ref().map(|d| CsvSink::create(&d.join("diagnostics.csv"))).transpose()?;
    if let Some(sink) = csv.as_mut() {
        sink.push(&rows[0])?;
    }
    for (k, t) in cfg.output_times(sim.state.t).into_iter().enumerate() {
        let good = sim.state.clone();
        if let Err(e) = sim.advance_to(t) {
            if let Some(dir) = &opts.out_dir {
                checkpoint::save(&dir.join("last_good.ckpt"), &good, &sim.model.params)?;
            }
            log::error!("step failed after t = {:.6e}: {e}", good.t);
            return Err(e);
        }
        let row = record(&sim.state, &sim.model)?;
        if let Some(sink) = csv.as_mut() {
            sink.push(&row)?;
        }
        rows.push(row);
        if opts.keep_snapshots {
            snapshots.push(sim.state.clone());
        }
        if let (Some(dir), true) = (&opts.out_dir, cfg.output.checkpoints) {
            checkpoint::save(&dir.join(format!("state_{:05}.ckpt", k + 1)), &sim.state, &sim.model.params)?;
        }
    }
    if let Some(dir) = &opts.out_dir {
        checkpoint::save(&dir.join("final.ckpt"), &sim.state, &sim.model.params)?;
    }
    Ok(Trajectory { rows, snapshots, final_state: sim.state, steps: sim.steps })
}

struct CsvSink {
    file: fs::File,
}

impl CsvSink {
    fn create(path: &Path) -> Result<Self> {
        let mut file = fs::File::create(path)?;
        writeln!(file, "{}", DiagnosticsRecord::csv_header())?;
        Ok(CsvSink { file })
    }

    fn push(&mut self, row: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.file, "{}", row.csv_row())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Trace;

    fn small_model(bd: impl Fn(Grid) -> BoundaryData) -> Model {
        let g = Grid::unit(12);
        Model::new(g, Params { eps: 0.05, ..Params::default() }, bd(g)).unwrap()
    }

    #[test]
    fn boltzmann_state_is_stationary() {
        let model = small_model(|g| {
            BoundaryData::new(&g, Trace::from_fn(g, |x, _| (-x).exp()), Trace::from_fn(g, |x, _| x.exp()), Trace::from_fn(g, |x, _| x)).unwrap()
        });
        let s = steady_reference(&model, true).unwrap();
        let s0 = model.state(0.0, s.c1.clone(), s.c2.clone(), VectorField::zeros(model.grid)).unwrap();
        let dt = 0.5 * model.stable_dt(&s0);
        let s1 = coupled_step(&s0, dt, &model).unwrap();
        let drift = s1.c1.max_abs_diff(&s0.c1).max(s1.c2.max_abs_diff(&s0.c2)).max(s1.u.max_abs());
        assert!(drift < 1e-8 * dt, "drift {drift:e} over dt {dt:e}");
    }

    #[test]
    fn boundary_influx_from_empty_state() {
        let model = small_model(|g| BoundaryData::uniform(g, 1.0, 2.0, 0.0).unwrap());
        let g = model.grid;
        let s0 = model.state(0.0, ScalarField::zeros(g), ScalarField::zeros(g), VectorField::zeros(g)).unwrap();
        let s1 = coupled_step(&s0, 1e-3, &model).unwrap();
        for (i, j) in [(0, 5), (11, 5), (5, 0), (5, 11), (0, 0)] {
            assert!(s1.c1.at(i, j) > 0.0 && s1.c2.at(i, j) > 0.0);
        }
    }

    #[test]
    fn symmetric_data_keep_zero_charge() {
        let model = small_model(|g| BoundaryData::uniform(g, 1.5, 1.5, 0.0).unwrap());
        let g = model.grid;
        let c = ScalarField::from_fn(g, |x, y| 1.0 + 0.3 * x * y);
        let mut s = model.state(0.0, c.clone(), c, VectorField::zeros(g)).unwrap();
        for _ in 0..5 {
            s = coupled_step(&s, 1e-3, &model).unwrap();
        }
        assert!(s.rho.max_abs() < 1e-9 && s.u.max_abs() < 1e-9);
    }

    #[test]
    fn rejects_steps_above_the_limits() {
        let model = small_model(|g| BoundaryData::uniform(g, 1.0, 1.0, 0.0).unwrap());
        let g = model.grid;
        let s = model.state(0.0, ScalarField::constant(g, 2.0), ScalarField::constant(g, 1.0), VectorField::zeros(g)).unwrap();
        let lim = model.stable_dt(&s);
        assert!(matches!(coupled_step(&s, 2.0 * lim, &model), Err(Error::RetryWithSmallerDt { .. })));
        let mut sim = Simulation::new(model, s, 10.0 * lim, DtPolicy::Fixed, 0.9).unwrap();
        sim.advance_to(20.0 * lim).unwrap();
        assert!(sim.rejections > 0 && sim.state.t == 20.0 * lim);
    }
}
