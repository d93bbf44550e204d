//! Small dense/banded kernels shared by the solvers.

use crate::error::{Error, Result};

/// Tridiagonal matrix stored by diagonals. `lower[0]` and `upper[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn transpose(&self) -> Tridiag {
        let n = self.len();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        if n > 1 {
            lower[1..].copy_from_slice(&self.upper[..n - 1]);
            upper[..n - 1].copy_from_slice(&self.lower[1..]);
        }
        Tridiag {
            lower,
            diag: self.diag.clone(),
            upper,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.upper[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// Thomas algorithm. Returns `None` on a vanishing pivot.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot == 0.0 {
            return None;
        }
        c[0] = self.upper[0] / pivot;
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * c[i - 1];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            c[i] = if i + 1 < n { self.upper[i] / pivot } else { 0.0 };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Some(d)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Result of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative residual after each iteration (index 0 is the starting residual).
    pub residual_history: Vec<f64>,
}

/// Conjugate gradient for a symmetric positive definite operator given matrix-free.
///
/// Stops when the true residual `||b - A x||` falls below `tol * ||b||`; the
/// recursive residual is re-anchored to the true one before declaring success.
pub fn conjugate_gradient<F>(mut apply: F, rhs: &[f64], tol: f64, max_iters: usize) -> Result<CgReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = rhs.len();
    let bnorm = norm(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgReport {
            solution: x,
            iterations: 0,
            residual_history: vec![0.0],
        });
    }
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut history = vec![1.0];
    let mut iterations = 0;
    while iterations < max_iters {
        let ap = apply(&p)?;
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rr / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        iterations += 1;
        let rr_new = dot(&r, &r);
        let rel = rr_new.sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            // confirm with the true residual, restart the recursion if it drifted
            let ax = apply(&x)?;
            r = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let true_rel = norm(&r) / bnorm;
            *history.last_mut().unwrap() = true_rel;
            if true_rel <= tol {
                return Ok(CgReport {
                    solution: x,
                    iterations,
                    residual_history: history,
                });
            }
            p = r.clone();
            rr = dot(&r, &r);
            continue;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }
    Err(Error::CgNotConverged {
        iterations,
        residual_history: history,
    })
}
