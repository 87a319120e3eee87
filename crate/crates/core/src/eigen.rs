//! Smallest eigenpairs of symmetric positive definite operators by inverse
//! subspace iteration with Rayleigh-Ritz extraction.
//!
//! A block method is used so that degenerate eigenvalues (common on square
//! domains) are resolved with their full multiplicity.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fixed seed for start vectors so spectra are reproducible.
pub const EIGEN_SEED: u64 = 0x5eed_0001;

pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn solve(&self, b: &[f64]) -> Result<Vec<f64>>;
    /// Restricts a vector to the constrained subspace (identity by default).
    fn project(&self, _x: &mut [f64]) -> Result<()> {
        Ok(())
    }
    /// Number of independent modes available in the constrained subspace.
    fn rank(&self) -> usize {
        self.dim()
    }
}

#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormalizes the columns in place (two passes of modified Gram-Schmidt).
fn orthonormalize(cols: &mut [Vec<f64>]) -> Result<()> {
    for k in 0..cols.len() {
        for _ in 0..2 {
            for j in 0..k {
                let (done, rest) = cols.split_at_mut(k);
                let c = dot(&rest[0], &done[j]);
                for (a, b) in rest[0].iter_mut().zip(&done[j]) {
                    *a -= c * b;
                }
            }
        }
        let nrm = dot(&cols[k], &cols[k]).sqrt();
        if !(nrm > 1e-300) {
            return Err(Error::RankDeficient { index: k });
        }
        cols[k].iter_mut().for_each(|v| *v /= nrm);
    }
    Ok(())
}

/// Computes the `k` smallest eigenpairs, each to relative residual `tol`.
pub fn smallest_eigenpairs<O: SymmetricOperator>(op: &O, k: usize, tol: f64) -> Result<EigenPairs> {
    let n = op.dim();
    let rank = op.rank();
    if k == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: vec![],
            iterations: 0,
        });
    }
    if k > rank {
        return Err(Error::invalid(format!(
            "requested {k} eigenvalues but the operator resolves only {rank} modes"
        )));
    }
    let m = (k + (k / 2).max(6)).min(rank);
    let mut rng = ChaCha8Rng::seed_from_u64(EIGEN_SEED);
    let mut block: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect())
        .collect();
    for v in block.iter_mut() {
        op.project(v)?;
    }
    orthonormalize(&mut block)?;

    const MAX_ITERS: usize = 500;
    let mut last_res = f64::INFINITY;
    for it in 1..=MAX_ITERS {
        let mut next = Vec::with_capacity(m);
        for v in &block {
            let mut y = op.solve(v)?;
            op.project(&mut y)?;
            next.push(y);
        }
        orthonormalize(&mut next)?;
        let images: Vec<Vec<f64>> = next
            .iter()
            .map(|v| {
                let mut a = op.apply(v);
                op.project(&mut a)?;
                Ok(a)
            })
            .collect::<Result<_>>()?;
        let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&next[i], &images[j]) + dot(&next[j], &images[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let mut ritz = Vec::with_capacity(m);
        let mut ritz_img = Vec::with_capacity(m);
        let mut values = Vec::with_capacity(m);
        for &c in &order {
            let mut x = vec![0.0; n];
            let mut ax = vec![0.0; n];
            for (r, (v, a)) in next.iter().zip(&images).enumerate() {
                let w = eig.eigenvectors[(r, c)];
                for ((xi, axi), (vi, ai)) in x.iter_mut().zip(ax.iter_mut()).zip(v.iter().zip(a)) {
                    *xi += w * vi;
                    *axi += w * ai;
                }
            }
            values.push(eig.eigenvalues[c]);
            ritz.push(x);
            ritz_img.push(ax);
        }
        let mut worst: f64 = 0.0;
        for j in 0..k {
            let theta = values[j];
            let r: f64 = ritz_img[j]
                .iter()
                .zip(&ritz[j])
                .map(|(a, x)| (a - theta * x).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r / theta.abs().max(1e-300));
        }
        block = ritz;
        last_res = worst;
        if worst <= tol {
            block.truncate(k);
            values.truncate(k);
            return Ok(EigenPairs {
                values,
                vectors: block,
                iterations: it,
            });
        }
    }
    Err(Error::NonConvergence {
        solver: "subspace iteration",
        iterations: MAX_ITERS,
        residual: last_res,
    })
}
