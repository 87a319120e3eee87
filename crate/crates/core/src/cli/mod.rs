//! The `nps` batch front end.

pub mod experiments;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::sim::{self, checkpoint, Model, RunOptions, SimConfig};
use crate::steady::{self, BoltzmannParams};
use crate::tangent::{dimension_bound, TangentOptions};

use experiments::{check_envelope, load_experiment, ExperimentTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "nps", version, about = "Two-species Nernst-Planck-Poisson-Stokes experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// TOML configuration; an optional [experiment] table holds command-specific keys.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides output.dir; default ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Enforce acceptance thresholds; exit 4 on failure.
    #[arg(long)]
    pub check: bool,
    /// Worker threads for concurrent runs and tangent modes.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Single time-dependent simulation.
    Run(Common),
    /// ε-sweep with electroneutrality and uniformity statistics.
    SweepEps(Common),
    /// Steady state by Gummel iteration, with bound checks.
    Steady(Common),
    /// Volume-growth rates and the empirical dimension table.
    TangentDim(Common),
    /// Two runs from different initial data; Dirichlet quotient of the difference.
    PairDiff {
        #[command(flatten)]
        common: Common,
        /// Configuration of the second run (overrides experiment.other).
        #[arg(long)]
        other: Option<PathBuf>,
    },
    /// Manufactured-solution convergence study.
    Convergence(Common),
}

/// Outcome of a command that completed without error.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub files: Vec<PathBuf>,
    /// `(name, passed, detail)` for each threshold evaluated under `--check`.
    pub checks: Vec<(String, bool, String)>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Format { .. } | Error::GridMismatch(_) | Error::InvalidInput(_) | Error::IdenticalStates => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(report) => {
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            for (name, ok, detail) in &report.checks {
                println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
            }
            if report.passed() {
                EXIT_OK
            } else {
                EXIT_CHECK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cmd: &Command) -> Result<Report> {
    let common = match cmd {
        Command::Run(c) | Command::SweepEps(c) | Command::Steady(c) | Command::TangentDim(c) | Command::Convergence(c) => c,
        Command::PairDiff { common, .. } => common,
    };
    let (cfg, exp) = load_experiment(&common.config)?;
    let out = common.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let work = || -> Result<Report> {
        match cmd {
            Command::Run(c) => cmd_run(&cfg, &out, c.check),
            Command::SweepEps(c) => cmd_sweep_eps(&cfg, &exp, &out, c.check),
            Command::Steady(c) => cmd_steady(&cfg, &out, c.check),
            Command::TangentDim(c) => cmd_tangent_dim(&cfg, &exp, &out, c.check),
            Command::PairDiff { common, other } => {
                let path = other.clone().or_else(|| exp.other.as_ref().map(|p| resolve(&common.config, p)));
                let path = path.ok_or_else(|| Error::Config("pair-diff needs --other or experiment.other".into()))?;
                let (other_cfg, _) = load_experiment(&path)?;
                cmd_pair_diff(&cfg, &other_cfg, &out, common.check)
            }
            Command::Convergence(c) => cmd_convergence(&cfg, &exp, &out, c.check),
        }
    };
    match common.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Paths in a configuration are relative to the file that names them.
fn resolve(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn write(dir: &Path, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    files.push(path);
    Ok(())
}

pub fn cmd_run(cfg: &SimConfig, out: &Path, check: bool) -> Result<Report> {
    let traj = sim::run_with(cfg, &RunOptions { keep_snapshots: false, out_dir: Some(out.to_path_buf()) })?;
    let files = vec![out.join("diagnostics.csv"), out.join("final.ckpt")];
    let mut checks = Vec::new();
    if check {
        let model = Model::from_config(cfg)?;
        let env = check_envelope(&traj.rows, &model.bd, 1e-10);
        checks.push(("envelope".into(), env.passed(), format!("lower margin {:e}, upper margin {:e}", env.lower_margin, env.upper_margin)));
        let finite = traj.rows.iter().all(|r| r.f.is_finite());
        checks.push(("finite_energy".into(), finite, format!("{} rows", traj.rows.len())));
    }
    Ok(Report { files, checks })
}

pub fn cmd_sweep_eps(cfg: &SimConfig, exp: &ExperimentTable, out: &Path, check: bool) -> Result<Report> {
    let summary = experiments::sweep_eps(cfg, exp, Some(out))?;
    let mut files = Vec::new();
    write(out, "sweep.csv", &summary.csv(), &mut files)?;
    write(out, "sweep_fit.csv", &summary.fit_csv(), &mut files)?;
    if let Some(bad) = summary.rows.iter().find(|r| r.status.starts_with("failed")) {
        return Err(Error::PartialFailure(format!("sweep member eps = {:e} {}; partial summary written", bad.eps, bad.status)));
    }
    let mut checks = Vec::new();
    if check {
        let target = 1.0 / 3.0 - 0.1;
        checks.push(("monotone".into(), summary.monotone(), format!("averages {:?}", summary.rows.iter().map(|r| r.rho_avg).collect::<Vec<_>>())));
        checks.push(("slope".into(), summary.slope >= target, format!("slope {:.4} (need >= {target:.4})", summary.slope)));
        checks.push(("bound".into(), summary.bound_holds.iter().all(|b| *b), format!("B1 = {:e}", summary.b1)));
        checks.push(("grad_phi_uniform".into(), summary.grad_phi_uniform(), "sup |grad phi| sqrt(eps) within 2x".into()));
        checks.push(("u_uniform".into(), summary.u_spread() < 2.0, format!("spread {:.4}", summary.u_spread())));
    }
    Ok(Report { files, checks })
}

pub fn cmd_steady(cfg: &SimConfig, out: &Path, check: bool) -> Result<Report> {
    let model = Model::from_config(cfg)?;
    let s = steady::solve_steady_np(&model.lap, &model.bd, &model.params)?;
    let ub = steady::verify_ubstar(&s, &model.bd);
    let mut files = Vec::new();
    fs::create_dir_all(out)?;
    let ck = out.join("steady.ckpt");
    checkpoint::save_steady(&ck, &s, &model.params)?;
    files.push(ck);
    let mut text = String::from("quantity,value\n");
    text.push_str(&format!("sweeps,{}\npoisson_residual,{:e}\nnp_residual,{:e}\n", s.sweeps, s.poisson_residual, s.np_residual));
    for (name, b) in [("boltzmann_factor", &ub.boltzmann_factor), ("concentration", &ub.concentration), ("potential", &ub.potential)] {
        text.push_str(&format!("{name}_margin,{:e}\n", b.margin));
    }
    let boltzmann = match BoltzmannParams::from_equilibrium_data(&model.bd, 1e-12) {
        Some(z) => {
            let pb = steady::boltzmann_state(&model.lap, z, &model.bd.w, model.params.eps)?;
            let diff = pb.c1.max_abs_diff(&s.c1).max(pb.c2.max_abs_diff(&s.c2)).max(pb.phi.max_abs_diff(&s.phi));
            text.push_str(&format!("boltzmann_max_diff,{diff:e}\n"));
            Some(diff)
        }
        None => None,
    };
    write(out, "steady.csv", &text, &mut files)?;
    let mut checks = Vec::new();
    if check {
        checks.push(("residuals".into(), s.poisson_residual <= 1e-8 && s.np_residual <= 1e-8, format!("{:e}, {:e}", s.poisson_residual, s.np_residual)));
        checks.push(("ubstar".into(), ub.all_passed(), "three bound families".into()));
        if let Some(d) = boltzmann {
            checks.push(("boltzmann_agreement".into(), d <= 1e-7, format!("{d:e}")));
        }
    }
    Ok(Report { files, checks })
}

pub fn cmd_tangent_dim(cfg: &SimConfig, exp: &ExperimentTable, out: &Path, check: bool) -> Result<Report> {
    let model = Model::from_config(cfg)?;
    let base = sim::initial_state(cfg, &model)?;
    let horizon = exp.horizon.unwrap_or(cfg.time.t_end);
    let opts = TangentOptions { ortho_every: exp.ortho_every, warmup: exp.warmup, seed: cfg.seed, ..TangentOptions::default() };
    let a = dimension_bound(&model, base, cfg.time.dt, horizon, exp.modes, &opts)?;
    let mut files = Vec::new();
    write(out, "dimension_table.csv", &a.table.to_csv(), &mut files)?;
    let mut rates = String::from("j,sigma\n");
    for (j, s) in a.rates.sigma.iter().enumerate() {
        rates.push_str(&format!("{},{s:e}\n", j + 1));
    }
    write(out, "rates.csv", &rates, &mut files)?;
    let mut dets = String::from("cycle,log_det_gram\n");
    for (k, d) in a.log_gram_dets.iter().enumerate() {
        dets.push_str(&format!("{k},{d:e}\n"));
    }
    write(out, "gram_dets.csv", &dets, &mut files)?;
    let mut checks = Vec::new();
    if check {
        checks.push(("all_negative".into(), a.rates.sigma.iter().all(|s| *s < 0.0), format!("sigma_1 = {:e}", a.rates.sigma[0])));
        checks.push(("n_star".into(), a.table.n_star.is_some(), format!("{:?}", a.table.n_star)));
        checks.push(("gram_positive".into(), a.log_gram_dets.iter().all(|d| d.is_finite()), format!("{} cycles", a.log_gram_dets.len())));
    }
    Ok(Report { files, checks })
}

pub fn cmd_pair_diff(a: &SimConfig, b: &SimConfig, out: &Path, check: bool) -> Result<Report> {
    let rows = experiments::pair_diff(a, b)?;
    let mut files = Vec::new();
    write(out, "pair_diff.csv", &experiments::pair_csv(&rows), &mut files)?;
    let mut checks = Vec::new();
    if check {
        checks.push(("e0_positive".into(), rows.iter().all(|r| r.quotient.e0 > 0.0), format!("min E0 {:e}", rows.iter().map(|r| r.quotient.e0).fold(f64::INFINITY, f64::min))));
        let max_ratio = rows.iter().map(|r| r.quotient.ratio).fold(0.0, f64::max);
        checks.push(("ratio_finite".into(), max_ratio.is_finite(), format!("max ratio {max_ratio:e}")));
    }
    Ok(Report { files, checks })
}

pub fn cmd_convergence(cfg: &SimConfig, exp: &ExperimentTable, out: &Path, check: bool) -> Result<Report> {
    let r = experiments::convergence(cfg, exp)?;
    let mut files = Vec::new();
    write(out, "convergence.csv", &r.csv(), &mut files)?;
    write(out, "orders.csv", &r.orders_csv(), &mut files)?;
    let mut checks = Vec::new();
    if check {
        checks.push(("order_c".into(), (r.order_c - 2.0).abs() <= 0.3, format!("{:.3}", r.order_c)));
        checks.push(("order_phi".into(), (r.order_phi - 2.0).abs() <= 0.3, format!("{:.3}", r.order_phi)));
        checks.push(("order_u".into(), r.order_u >= 1.0, format!("{:.3}", r.order_u)));
        checks.push(("order_t".into(), (r.order_t - 1.0).abs() <= 0.2, format!("{:.3}", r.order_t)));
    }
    Ok(Report { files, checks })
}
