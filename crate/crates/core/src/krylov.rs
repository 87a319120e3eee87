//! Krylov iterations used where a fresh direct factorization per step would
//! dominate the cost: BiCGSTAB for the nonsymmetric drift-diffusion systems and
//! preconditioned CG on the discrete solenoidal subspace.

use crate::banded::FivePoint;
use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned BiCGSTAB for a five-point operator.
///
/// The true residual is recomputed on exit; the iteration restarts from the
/// current iterate if the recursive residual drifted.
pub fn bicgstab(op: &FivePoint, b: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, KrylovReport)> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], KrylovReport { iterations: 0, relative_residual: 0.0 }));
    }
    let dinv: Vec<f64> = op.diag.iter().map(|d| 1.0 / d).collect();
    let mut x = x0.to_vec();
    let mut total = 0;
    for _restart in 0..4 {
        let ax = op.apply(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        if norm(&r) <= tol * bnorm {
            return Ok((x, KrylovReport { iterations: total, relative_residual: norm(&r) / bnorm }));
        }
        let r0 = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut converged = false;
        while total < max_iter {
            total += 1;
            let rho_new = dot(&r0, &r);
            if rho_new == 0.0 || !rho_new.is_finite() {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for k in 0..n {
                p[k] = r[k] + beta * (p[k] - omega * v[k]);
            }
            let ph: Vec<f64> = p.iter().zip(&dinv).map(|(a, d)| a * d).collect();
            v = op.apply(&ph);
            let r0v = dot(&r0, &v);
            if r0v == 0.0 || !r0v.is_finite() {
                break;
            }
            alpha = rho / r0v;
            let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
            if norm(&s) <= tol * bnorm {
                x.iter_mut().zip(&ph).for_each(|(x, p)| *x += alpha * p);
                converged = true;
                break;
            }
            let sh: Vec<f64> = s.iter().zip(&dinv).map(|(a, d)| a * d).collect();
            let t = op.apply(&sh);
            let tt = dot(&t, &t);
            if tt == 0.0 {
                break;
            }
            omega = dot(&t, &s) / tt;
            for k in 0..n {
                x[k] += alpha * ph[k] + omega * sh[k];
                r[k] = s[k] - omega * t[k];
            }
            if norm(&r) <= tol * bnorm {
                converged = true;
                break;
            }
            if omega == 0.0 {
                break;
            }
        }
        if !converged && total >= max_iter {
            break;
        }
    }
    let ax = op.apply(&x);
    let res = b.iter().zip(&ax).map(|(b, a)| (b - a).powi(2)).sum::<f64>().sqrt() / bnorm;
    if res <= tol && x.iter().all(|v| v.is_finite()) {
        Ok((x, KrylovReport { iterations: total, relative_residual: res }))
    } else {
        Err(Error::NonConvergence { solver: "BiCGSTAB", iterations: total, residual: res })
    }
}

/// Iterations without halving the residual before CG declares stagnation.
const STALL_WINDOW: usize = 25;
/// Stagnation within this factor of the tolerance is accepted as the
/// rounding floor of the operator.
const STALL_SLACK: f64 = 100.0;

/// Preconditioned conjugate gradients with caller-supplied operator and
/// preconditioner. Stops once `‖r‖ ≤ max(tol·‖b‖, atol)`, or when the
/// residual stagnates within `STALL_SLACK·tol`.
pub fn pcg(
    apply: impl Fn(&[f64]) -> Result<Vec<f64>>,
    precond: impl Fn(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
    atol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, KrylovReport)> {
    let bnorm = norm(b);
    let tol = if bnorm > 0.0 { tol.max(atol / bnorm) } else { tol };
    if bnorm == 0.0 {
        return Ok((vec![0.0; b.len()], KrylovReport { iterations: 0, relative_residual: 0.0 }));
    }
    let mut x = x0;
    let ax = apply(&x)?;
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut res = norm(&r) / bnorm;
    if res <= tol {
        return Ok((x, KrylovReport { iterations: 0, relative_residual: res }));
    }
    let mut z = precond(&r)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let (mut best, mut since_best) = (res, 0);
    for it in 1..=max_iter {
        let ap = apply(&p)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolveFailure(format!("CG breakdown: p'Ap = {pap:e}")));
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        res = norm(&r) / bnorm;
        if res <= tol {
            return Ok((x, KrylovReport { iterations: it, relative_residual: res }));
        }
        if res < 0.5 * best {
            (best, since_best) = (res, 0);
        } else {
            since_best += 1;
            if since_best >= STALL_WINDOW && res <= STALL_SLACK * tol {
                log::debug!("CG stagnated at relative residual {res:.3e} (tolerance {tol:.1e})");
                return Ok((x, KrylovReport { iterations: it, relative_residual: res }));
            }
        }
        z = precond(&r)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::NonConvergence { solver: "preconditioned CG", iterations: max_iter, residual: res })
}
