//! Fast solvers for separable constant-coefficient five-point operators.
//!
//! `shift·I + cx·Tx ⊗ I + cy·I ⊗ Ty`, where each `T` is the 1D second
//! difference `[-1, 2, -1]` with one of three closures, is diagonalized by a
//! real trigonometric transform along each axis:
//!
//! | closure         | unknowns                   | basis                      |
//! |-----------------|----------------------------|----------------------------|
//! | `Neumann`       | cells, zero-flux walls     | DCT-II                     |
//! | `Dirichlet`     | interior nodes, zero ends  | DST-I                      |
//! | `WallDirichlet` | cells, zero at half-cell   | DST-II                     |

use std::f64::consts::PI;
use std::sync::Arc;

use rustdct::{DctPlanner, Dst1, TransformType2And3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closure {
    Neumann,
    Dirichlet,
    WallDirichlet,
}

#[derive(Clone)]
enum Plan {
    Type23(Arc<dyn TransformType2And3<f64>>),
    Type1(Arc<dyn Dst1<f64>>),
}

/// The FFT-based DST-I reads scratch entries it never writes, so every call
/// gets a zeroed buffer.
fn clean(s: &mut [f64]) -> &mut [f64] {
    s.fill(0.0);
    s
}

#[derive(Clone)]
struct Axis {
    closure: Closure,
    n: usize,
    eig: Vec<f64>,
    plan: Plan,
    scratch: usize,
}

impl Axis {
    fn new(closure: Closure, n: usize, planner: &mut DctPlanner<f64>) -> Self {
        let eig = (0..n)
            .map(|k| {
                let theta = match closure {
                    Closure::Neumann => PI * k as f64 / n as f64,
                    Closure::Dirichlet => PI * (k + 1) as f64 / (n + 1) as f64,
                    Closure::WallDirichlet => PI * (k + 1) as f64 / n as f64,
                };
                2.0 - 2.0 * theta.cos()
            })
            .collect();
        let plan = match closure {
            Closure::Neumann => Plan::Type23(planner.plan_dct2(n)),
            Closure::WallDirichlet => Plan::Type23(planner.plan_dst2(n)),
            Closure::Dirichlet => Plan::Type1(planner.plan_dst1(n)),
        };
        let scratch = match &plan {
            Plan::Type23(p) => p.get_scratch_len(),
            Plan::Type1(p) => p.get_scratch_len(),
        };
        Axis { closure, n, eig, plan, scratch }
    }

    fn forward(&self, buf: &mut [f64], scratch: &mut [f64]) {
        let scratch = clean(&mut scratch[..self.scratch]);
        match (&self.plan, self.closure) {
            (Plan::Type23(p), Closure::Neumann) => p.process_dct2_with_scratch(buf, scratch),
            (Plan::Type23(p), _) => p.process_dst2_with_scratch(buf, scratch),
            (Plan::Type1(p), _) => p.process_dst1_with_scratch(buf, scratch),
        }
    }

    /// Inverse of `forward`, normalization included.
    fn inverse(&self, buf: &mut [f64], scratch: &mut [f64]) {
        let scratch = clean(&mut scratch[..self.scratch]);
        let scale = match (&self.plan, self.closure) {
            (Plan::Type23(p), Closure::Neumann) => {
                p.process_dct3_with_scratch(buf, scratch);
                2.0 / self.n as f64
            }
            (Plan::Type23(p), _) => {
                p.process_dst3_with_scratch(buf, scratch);
                2.0 / self.n as f64
            }
            (Plan::Type1(p), _) => {
                p.process_dst1_with_scratch(buf, scratch);
                2.0 / (self.n + 1) as f64
            }
        };
        buf.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Transform solver on an `mx x my` lattice (`i` fastest).
#[derive(Clone)]
pub struct SeparableSolver {
    x: Axis,
    y: Axis,
}

impl std::fmt::Debug for SeparableSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SeparableSolver({}x{}, {:?}/{:?})", self.x.n, self.y.n, self.x.closure, self.y.closure)
    }
}

impl SeparableSolver {
    pub fn new(mx: usize, my: usize, bx: Closure, by: Closure) -> Self {
        SeparableSolver {
            x: Axis::new(bx, mx, &mut DctPlanner::new()),
            y: Axis::new(by, my, &mut DctPlanner::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.x.n * self.y.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Solves `(shift + cx Tx + cy Ty) u = b`. A singular mode (pure Neumann
    /// with zero shift) is dropped, giving the solution orthogonal to it.
    pub fn solve(&self, b: &[f64], shift: f64, cx: f64, cy: f64) -> Vec<f64> {
        let (mx, my) = (self.x.n, self.y.n);
        assert_eq!(b.len(), mx * my, "rhs length mismatch");
        let mut u = b.to_vec();
        let mut sx = vec![0.0; self.x.scratch];
        let mut sy = vec![0.0; self.y.scratch];
        let mut col = vec![0.0; my];
        for row in u.chunks_exact_mut(mx) {
            self.x.forward(row, &mut sx);
        }
        for i in 0..mx {
            for j in 0..my {
                col[j] = u[i + mx * j];
            }
            self.y.forward(&mut col, &mut sy);
            let lx = shift + cx * self.x.eig[i];
            for (j, c) in col.iter_mut().enumerate() {
                let d = lx + cy * self.y.eig[j];
                *c = if d == 0.0 { 0.0 } else { *c / d };
            }
            self.y.inverse(&mut col, &mut sy);
            for j in 0..my {
                u[i + mx * j] = col[j];
            }
        }
        for row in u.chunks_exact_mut(mx) {
            self.x.inverse(row, &mut sx);
        }
        u
    }
}
