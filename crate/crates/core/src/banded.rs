//! Five-point operators on logically rectangular lattices and their banded
//! direct factorization.
//!
//! The lattice is renumbered so the shorter direction runs fastest, giving a
//! half-bandwidth of `min(mx, my)`. Factorization is LU without pivoting,
//! which is stable for the diagonally dominant M-matrices assembled here.

use crate::error::{Error, Result};

/// Coefficients of a five-point operator on an `mx x my` lattice
/// (`i` fastest). Couplings to neighbours outside the lattice are ignored.
#[derive(Clone, Debug)]
pub struct FivePoint {
    pub mx: usize,
    pub my: usize,
    pub diag: Vec<f64>,
    pub west: Vec<f64>,
    pub east: Vec<f64>,
    pub south: Vec<f64>,
    pub north: Vec<f64>,
}

impl FivePoint {
    pub fn zeros(mx: usize, my: usize) -> Self {
        let n = mx * my;
        FivePoint {
            mx,
            my,
            diag: vec![0.0; n],
            west: vec![0.0; n],
            east: vec![0.0; n],
            south: vec![0.0; n],
            north: vec![0.0; n],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.mx * self.my
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (mx, my) = (self.mx, self.my);
        let mut y = vec![0.0; mx * my];
        for j in 0..my {
            for i in 0..mx {
                let k = i + mx * j;
                let mut s = self.diag[k] * x[k];
                if i > 0 {
                    s += self.west[k] * x[k - 1];
                }
                if i + 1 < mx {
                    s += self.east[k] * x[k + 1];
                }
                if j > 0 {
                    s += self.south[k] * x[k - mx];
                }
                if j + 1 < my {
                    s += self.north[k] * x[k + mx];
                }
                y[k] = s;
            }
        }
        y
    }

    /// Replaces row `k` by the identity row.
    pub fn pin(&mut self, k: usize) {
        self.diag[k] = 1.0;
        self.west[k] = 0.0;
        self.east[k] = 0.0;
        self.south[k] = 0.0;
        self.north[k] = 0.0;
    }

    pub fn factor(&self) -> Result<BandedLu> {
        BandedLu::factor(self)
    }
}

#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    bw: usize,
    mx: usize,
    my: usize,
    x_fast: bool,
    lu: Vec<f64>,
}

impl BandedLu {
    #[inline]
    fn perm(&self, i: usize, j: usize) -> usize {
        if self.x_fast {
            i + self.mx * j
        } else {
            j + self.my * i
        }
    }

    pub fn factor(op: &FivePoint) -> Result<Self> {
        let (mx, my) = (op.mx, op.my);
        let n = mx * my;
        if n == 0 {
            return Err(Error::LinearSolveFailure("empty operator".into()));
        }
        let x_fast = mx <= my;
        let bw = mx.min(my);
        let w = 2 * bw + 1;
        let mut f = BandedLu {
            n,
            bw,
            mx,
            my,
            x_fast,
            lu: vec![0.0; n * w],
        };
        for j in 0..my {
            for i in 0..mx {
                let k = i + mx * j;
                let r = f.perm(i, j);
                let mut put = |c: usize, v: f64| {
                    f.lu[r * w + c + bw - r] += v;
                };
                put(r, op.diag[k]);
                if i > 0 {
                    put(if x_fast { r - 1 } else { r - my }, op.west[k]);
                }
                if i + 1 < mx {
                    put(if x_fast { r + 1 } else { r + my }, op.east[k]);
                }
                if j > 0 {
                    put(if x_fast { r - mx } else { r - 1 }, op.south[k]);
                }
                if j + 1 < my {
                    put(if x_fast { r + mx } else { r + 1 }, op.north[k]);
                }
            }
        }
        f.eliminate()?;
        Ok(f)
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        for k in 0..n {
            let pivot = self.lu[k * w + bw];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::LinearSolveFailure(format!(
                    "zero or non-finite pivot {pivot} at row {k}"
                )));
            }
            let kend = (k + bw + 1).min(n);
            let (head, tail) = self.lu.split_at_mut((k + 1) * w);
            let urow = &head[k * w + bw + 1..k * w + bw + (kend - k)];
            for i in k + 1..kend {
                let row = &mut tail[(i - k - 1) * w..(i - k) * w];
                let lpos = k + bw - i;
                let l = row[lpos];
                if l == 0.0 {
                    continue;
                }
                let l = l / pivot;
                row[lpos] = l;
                let start = lpos + 1;
                for (a, &u) in row[start..start + urow.len()].iter_mut().zip(urow) {
                    *a -= l * u;
                }
            }
        }
        Ok(())
    }

    /// Solves in lattice ordering.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n, "rhs length mismatch");
        let (n, bw) = (self.n, self.bw);
        let w = 2 * bw + 1;
        let mut y = vec![0.0; n];
        for j in 0..self.my {
            for i in 0..self.mx {
                y[self.perm(i, j)] = b[i + self.mx * j];
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.lu[i * w..(i + 1) * w];
            let mut s = y[i];
            for (c, &yc) in (lo..i).zip(&y[lo..i]) {
                s -= row[c + bw - i] * yc;
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let row = &self.lu[i * w..(i + 1) * w];
            let mut s = y[i];
            for c in i + 1..hi {
                s -= row[c + bw - i] * y[c];
            }
            y[i] = s / row[bw];
        }
        let mut x = vec![0.0; n];
        for j in 0..self.my {
            for i in 0..self.mx {
                x[i + self.mx * j] = y[self.perm(i, j)];
            }
        }
        x
    }
}
