//! Binary checkpoints: little-endian, bit-exact.
//!
//! Layout: magic `NPSCKPT1`, `nx`, `ny` as `u64`, a flag byte (1 for a
//! steady state, 0 otherwise), then `Lx`, `Ly`, `t`, the six parameters
//! `eps D1 D2 nu K delta` as `f64`, then the fields `c1`, `c2`, `ux`, `uy`,
//! `phi`, `rho`. Steady states carry `t = +inf` and zero velocity.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{Grid, ScalarField, VectorField};
use crate::steady::SteadyState;
use crate::transport::{Params, State};

pub const MAGIC: &[u8; 8] = b"NPSCKPT1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: State,
    pub params: Params,
    pub steady: bool,
}

fn put(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(state: &State, p: &Params) -> Vec<u8> {
    let g = state.grid();
    let mut out = Vec::with_capacity(8 * (16 + 6 * g.n_cells()) + 1);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.nx as u64).to_le_bytes());
    out.extend_from_slice(&(g.ny as u64).to_le_bytes());
    out.push(u8::from(state.t == f64::INFINITY));
    put(&mut out, &[g.lx, g.ly, state.t, p.eps, p.d1, p.d2, p.nu, p.k, p.delta]);
    for v in [&state.c1.values, &state.c2.values, &state.u.ux, &state.u.uy, &state.phi.values, &state.rho.values] {
        put(&mut out, v);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        if self.bytes.len() - self.pos < n {
            return Err(format!("truncated at byte {}: need {n} more, have {}", self.pos, self.bytes.len() - self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(8 * n)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(magic), String::from_utf8_lossy(MAGIC)));
    }
    let nx = r.u64()? as usize;
    let ny = r.u64()? as usize;
    if nx == 0 || ny == 0 || nx.checked_mul(ny).is_none_or(|n| n > 1 << 28) {
        return Err(format!("implausible grid size {nx}x{ny}"));
    }
    let steady = match r.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(format!("bad flag byte {b}")),
    };
    let h = r.f64s(9)?;
    if steady != (h[2] == f64::INFINITY) {
        return Err(format!("steady flag {steady} inconsistent with t = {}", h[2]));
    }
    let grid = Grid::new(nx, ny, h[0], h[1]).map_err(|e| e.to_string())?;
    let p = Params { eps: h[3], d1: h[4], d2: h[5], nu: h[6], k: h[7], delta: h[8] };
    let n = grid.n_cells();
    let c1 = r.f64s(n)?;
    let c2 = r.f64s(n)?;
    let ux = r.f64s(grid.n_xfaces())?;
    let uy = r.f64s(grid.n_yfaces())?;
    let phi = r.f64s(n)?;
    let rho = r.f64s(n)?;
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let scalar = |values| ScalarField { grid, values };
    Ok(Checkpoint {
        state: State {
            t: h[2],
            c1: scalar(c1),
            c2: scalar(c2),
            u: VectorField { grid, ux, uy },
            phi: scalar(phi),
            rho: scalar(rho),
        },
        params: p,
        steady,
    })
}

pub fn save(path: &Path, state: &State, p: &Params) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(state, p))?;
    f.sync_all()?;
    Ok(())
}

/// Saves a steady state: `t = +inf`, zero velocity.
pub fn save_steady(path: &Path, s: &SteadyState, p: &Params) -> Result<()> {
    let g = s.c1.grid;
    let state = State {
        t: f64::INFINITY,
        c1: s.c1.clone(),
        c2: s.c2.clone(),
        u: VectorField::zeros(g),
        phi: s.phi.clone(),
        rho: s.rho(),
    };
    save(path, &state, p)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes).map_err(|message| Error::Format { path: path.to_path_buf(), message })
}

impl Checkpoint {
    /// Header agreement with a model's grid and parameters.
    pub fn check_compatible(&self, grid: &Grid, p: &Params) -> Result<()> {
        self.state.grid().same_as(grid)?;
        if self.params != *p {
            return Err(Error::Config(format!("checkpoint parameters {:?} differ from configured {:?}", self.params, p)));
        }
        Ok(())
    }
}
