//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//!
//! [grid]
//! nx = 64
//! ny = 64
//! Lx = 1.0
//! Ly = 1.0
//!
//! [params]
//! eps = 0.01
//! D1 = 1.0
//! D2 = 1.0
//!
//! [bc]
//! gamma1 = 1.0
//! gamma2 = { left = 1.0, right = 2.0, bottom = { from = 1.0, to = 2.0 }, top = { from = 1.0, to = 2.0 } }
//! W = 0.0
//!
//! [init]
//! kind = "harmonic"
//! scale = 3.0
//!
//! [time]
//! dt = 1e-3
//! t_end = 1.0
//!
//! [output]
//! every = 0.01
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryData, Grid, Trace};
use crate::transport::Params;

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub seed: u64,
    /// Adds the forcing of the built-in manufactured solution; `bc` and
    /// `init` are then ignored.
    #[serde(default)]
    pub manufactured: bool,
    pub grid: GridSpec,
    #[serde(default)]
    pub params: ParamSpec,
    pub bc: BcSpec,
    #[serde(default)]
    pub init: InitSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "Lx", default = "one")]
    pub lx: f64,
    #[serde(rename = "Ly", default = "one")]
    pub ly: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(rename = "D1", default = "one")]
    pub d1: f64,
    #[serde(rename = "D2", default = "one")]
    pub d2: f64,
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(rename = "K", default = "one")]
    pub k: f64,
    #[serde(default = "one")]
    pub delta: f64,
}

impl Default for ParamSpec {
    fn default() -> Self {
        let p = Params::default();
        ParamSpec { eps: p.eps, d1: p.d1, d2: p.d2, nu: p.nu, k: p.k, delta: p.delta }
    }
}

/// Boundary datum: one number for the whole boundary or one entry per side.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum BcValue {
    Constant(f64),
    Sides(SideTable),
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SideTable {
    pub left: SideValue,
    pub right: SideValue,
    pub bottom: SideValue,
    pub top: SideValue,
}

/// A constant, or a linear ramp along the side in the direction of
/// increasing coordinate.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum SideValue {
    Constant(f64),
    Ramp { from: f64, to: f64 },
}

impl SideValue {
    fn at(&self, s: f64) -> f64 {
        match *self {
            SideValue::Constant(v) => v,
            SideValue::Ramp { from, to } => from + (to - from) * s,
        }
    }
}

impl BcValue {
    pub fn trace(&self, g: &Grid) -> Trace {
        match self {
            BcValue::Constant(v) => Trace::constant(*g, *v),
            BcValue::Sides(t) => {
                let along_y: Vec<f64> = (0..g.ny).map(|j| (j as f64 + 0.5) / g.ny as f64).collect();
                let along_x: Vec<f64> = (0..g.nx).map(|i| (i as f64 + 0.5) / g.nx as f64).collect();
                Trace {
                    left: along_y.iter().map(|&s| t.left.at(s)).collect(),
                    right: along_y.iter().map(|&s| t.right.at(s)).collect(),
                    bottom: along_x.iter().map(|&s| t.bottom.at(s)).collect(),
                    top: along_x.iter().map(|&s| t.top.at(s)).collect(),
                }
            }
        }
    }

    /// Mirror image under `x → Lx - x`.
    pub fn mirrored_x(&self) -> BcValue {
        let flip = |v: SideValue| match v {
            SideValue::Constant(c) => SideValue::Constant(c),
            SideValue::Ramp { from, to } => SideValue::Ramp { from: to, to: from },
        };
        match *self {
            BcValue::Constant(v) => BcValue::Constant(v),
            BcValue::Sides(t) => BcValue::Sides(SideTable { left: t.right, right: t.left, bottom: flip(t.bottom), top: flip(t.top) }),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BcSpec {
    pub gamma1: BcValue,
    pub gamma2: BcValue,
    #[serde(rename = "W")]
    pub w: BcValue,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Constant `c1`, `c2`.
    #[default]
    Uniform,
    /// Discrete harmonic extension of the boundary concentrations.
    Harmonic,
    /// Boltzmann state; needs equilibrium boundary data.
    Boltzmann,
    /// Steady state from Gummel iteration.
    Steady,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default)]
    pub kind: InitKind,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "one")]
    pub c2: f64,
    /// Multiplies both concentrations.
    #[serde(default = "one")]
    pub scale: f64,
    /// Smooth multiplicative perturbation `1 + mode·sin(πx/Lx)sin(πy/Ly)` of `c1`.
    #[serde(default)]
    pub mode: f64,
    /// Seeded multiplicative noise amplitude in `[0, 1)`.
    #[serde(default)]
    pub noise: f64,
    /// Amplitude of an initial single-cell vortex.
    #[serde(default)]
    pub velocity: f64,
    /// Start from a checkpoint instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            kind: InitKind::Uniform,
            c1: 1.0,
            c2: 1.0,
            scale: 1.0,
            mode: 0.0,
            noise: 0.0,
            velocity: 0.0,
            checkpoint: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    /// `dt` as given; rejected steps are subdivided.
    #[default]
    Fixed,
    /// `min(dt, safety·stable limit)` recomputed every step.
    Cfl,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub policy: DtPolicy,
    #[serde(default = "default_safety")]
    pub safety: f64,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output cadence; defaults to `t_end / 100`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Also write a checkpoint at every output time.
    #[serde(default)]
    pub checkpoints: bool,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Fill `E_rel` and `mu_dissipation` against the steady state.
    #[serde(default)]
    pub steady_reference: bool,
    /// Transient detection window as a fraction of `t_end`.
    #[serde(default = "default_window")]
    pub transient_window: f64,
    /// Relative change of `F` tolerated over the window.
    #[serde(default = "default_transient_tol")]
    pub transient_tol: f64,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec { steady_reference: false, transient_window: 0.1, transient_tol: 0.01 }
    }
}

fn one() -> f64 {
    1.0
}
fn default_eps() -> f64 {
    Params::default().eps
}
fn default_safety() -> f64 {
    0.9
}
fn default_window() -> f64 {
    0.1
}
fn default_transient_tol() -> f64 {
    0.01
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        positive("grid.Lx", self.grid.lx)?;
        positive("grid.Ly", self.grid.ly)?;
        self.grid()?;
        self.params().validate().map_err(|e| Error::Config(e.to_string()))?;
        positive("time.dt", self.time.dt)?;
        positive("time.t_end", self.time.t_end)?;
        positive("time.safety", self.time.safety)?;
        positive("output.every", self.output_every())?;
        positive("init.scale", self.init.scale)?;
        if self.init.c1 < 0.0 || self.init.c2 < 0.0 {
            return Err(Error::Config("init.c1 and init.c2 must be nonnegative".into()));
        }
        if !(self.init.mode > -1.0) {
            return Err(Error::Config(format!("init.mode must exceed -1, got {}", self.init.mode)));
        }
        if !(0.0..1.0).contains(&self.init.noise) {
            return Err(Error::Config(format!("init.noise must lie in [0, 1), got {}", self.init.noise)));
        }
        positive("diagnostics.transient_window", self.diagnostics.transient_window)?;
        positive("diagnostics.transient_tol", self.diagnostics.transient_tol)?;
        let g = self.grid()?;
        for (name, bc) in [("bc.gamma1", &self.bc.gamma1), ("bc.gamma2", &self.bc.gamma2)] {
            let t = bc.trace(&g);
            if !(t.min() > 0.0) {
                return Err(Error::Config(format!("{name} must be positive everywhere, minimum is {}", t.min())));
            }
        }
        if !self.bc.w.trace(&g).iter().all(f64::is_finite) {
            return Err(Error::Config("bc.W must be finite".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn params(&self) -> Params {
        let s = &self.params;
        Params { eps: s.eps, d1: s.d1, d2: s.d2, nu: s.nu, k: s.k, delta: s.delta }
    }

    pub fn boundary_data(&self, g: &Grid) -> Result<BoundaryData> {
        BoundaryData::new(g, self.bc.gamma1.trace(g), self.bc.gamma2.trace(g), self.bc.w.trace(g))
    }

    pub fn output_every(&self) -> f64 {
        self.output.every.unwrap_or(self.time.t_end / 100.0)
    }

    /// Output times after `t0`, ending exactly at `t_end`.
    pub fn output_times(&self, t0: f64) -> Vec<f64> {
        let every = self.output_every();
        let t_end = self.time.t_end;
        let mut k = (t0 / every + 1e-9).floor() as u64 + 1;
        let mut out = Vec::new();
        loop {
            let t = (k as f64 * every).min(t_end);
            if t > t0 + 1e-12 * t_end.max(1.0) {
                out.push(t);
            }
            if t >= t_end {
                break;
            }
            k += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        [grid]
        nx = 8
        ny = 8
        Lx = 2.0
        [bc]
        gamma1 = 1.0
        gamma2 = { left = 1.0, right = 2.0, bottom = { from = 1.0, to = 2.0 }, top = 1.5 }
        W = 0.0
        [time]
        dt = 0.01
        t_end = 0.1
    "#;

    #[test]
    fn parses_with_defaults() {
        let c = SimConfig::from_toml_str(BASE).unwrap();
        assert_eq!(c.grid.ly, 1.0);
        assert_eq!(c.params(), Params::default());
        assert_eq!(c.time.policy, DtPolicy::Fixed);
        assert!((c.output_every() - 1e-3).abs() < 1e-18);
        let g = c.grid().unwrap();
        let t = c.bc.gamma2.trace(&g);
        assert_eq!(t.right, vec![2.0; 8]);
        assert!((t.bottom[0] - 1.0625).abs() < 1e-15 && (t.bottom[7] - 1.9375).abs() < 1e-15);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let bad = BASE.replace("nx = 8", "nx = 8\nnz = 3");
        assert!(matches!(SimConfig::from_toml_str(&bad), Err(Error::Config(m)) if m.contains("nz")));
        let neg = BASE.replace("gamma1 = 1.0", "gamma1 = -1.0");
        assert!(matches!(SimConfig::from_toml_str(&neg), Err(Error::Config(m)) if m.contains("gamma1")));
        let dt = BASE.replace("dt = 0.01", "dt = 0.0");
        assert!(SimConfig::from_toml_str(&dt).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = SimConfig::from_toml_str(BASE).unwrap();
        let back = SimConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn output_times_end_at_t_end() {
        let mut c = SimConfig::from_toml_str(BASE).unwrap();
        c.output.every = Some(0.03);
        let ts = c.output_times(0.0);
        assert_eq!(ts.len(), 4);
        assert_eq!(*ts.last().unwrap(), 0.1);
        assert_eq!(c.output_times(0.06), vec![0.09, 0.1]);
    }

    #[test]
    fn mirrored_ramp() {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let v = BcValue::Sides(SideTable {
            left: SideValue::Constant(1.0),
            right: SideValue::Constant(2.0),
            bottom: SideValue::Ramp { from: 1.0, to: 2.0 },
            top: SideValue::Ramp { from: 1.0, to: 2.0 },
        });
        let (a, b) = (v.trace(&g), v.mirrored_x().trace(&g));
        assert_eq!(a.left, b.right);
        for i in 0..8 {
            assert!((a.bottom[i] - b.bottom[7 - i]).abs() < 1e-15);
        }
    }
}
