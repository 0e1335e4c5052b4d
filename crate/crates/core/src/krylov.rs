//! Matrix-free Krylov solvers for symmetric operators.

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(a: &mut [f64]) {
    let m = a.iter().sum::<f64>() / a.len() as f64;
    a.iter_mut().for_each(|x| *x -= m);
}

/// Outcome of a converged Krylov solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KrylovStats {
    pub iterations: usize,
    /// `||b - A x|| / ||b||` at exit.
    pub relative_residual: f64,
}

/// Conjugate gradient for a symmetric positive (semi)definite operator.
///
/// With `zero_mean` set, right-hand side and residuals are projected onto
/// mean-free vectors, which solves singular Neumann problems whose kernel is
/// the constants. `x` holds the initial guess on entry.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
    zero_mean: bool,
) -> Result<KrylovStats> {
    let n = b.len();
    let mut rhs = b.to_vec();
    if zero_mean {
        remove_mean(&mut rhs);
        remove_mean(x);
    }
    let bnorm = norm(&rhs);
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
    if zero_mean {
        remove_mean(&mut r);
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        let res = rr.sqrt() / bnorm;
        if res <= rel_tol {
            return Ok(KrylovStats {
                iterations: it,
                relative_residual: res,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotConverged {
                solver: "conjugate gradient (operator not positive)",
                iterations: it,
                residual: res,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if zero_mean {
            remove_mean(&mut r);
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let res = rr.sqrt() / bnorm;
    if res <= rel_tol {
        return Ok(KrylovStats {
            iterations: max_iter,
            relative_residual: res,
        });
    }
    Err(Error::NotConverged {
        solver: "conjugate gradient",
        iterations: max_iter,
        residual: res,
    })
}

/// MINRES (Paige-Saunders) for symmetric, possibly indefinite operators.
///
/// `x` holds the initial guess on entry.
pub fn minres(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<KrylovStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut av = vec![0.0; n];
    apply(x, &mut av);
    let r0: Vec<f64> = b.iter().zip(&av).map(|(b, a)| b - a).collect();
    let beta1 = norm(&r0);
    if beta1 <= rel_tol * bnorm {
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: beta1 / bnorm,
        });
    }

    let mut v_prev = vec![0.0; n];
    let mut v: Vec<f64> = r0.iter().map(|r| r / beta1).collect();
    let mut w_prev2 = vec![0.0; n];
    let mut w_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut beta = beta1;
    let (mut c_prev, mut c) = (1.0, 1.0);
    let (mut s_prev, mut s) = (0.0, 0.0);
    let mut eta = beta1;

    for it in 1..=max_iter {
        apply(&v, &mut av);
        let alpha = dot(&v, &av);
        for i in 0..n {
            av[i] -= alpha * v[i] + beta * v_prev[i];
        }
        let beta_next = norm(&av);

        let delta = c * alpha - c_prev * s * beta;
        let rho1 = delta.hypot(beta_next);
        let rho2 = s * alpha + c_prev * c * beta;
        let rho3 = s_prev * beta;
        if rho1 == 0.0 {
            break;
        }
        let c_next = delta / rho1;
        let s_next = beta_next / rho1;
        for i in 0..n {
            w[i] = (v[i] - rho3 * w_prev2[i] - rho2 * w_prev[i]) / rho1;
            x[i] += c_next * eta * w[i];
        }
        eta *= -s_next;

        std::mem::swap(&mut w_prev2, &mut w_prev);
        std::mem::swap(&mut w_prev, &mut w);
        std::mem::swap(&mut v_prev, &mut v);
        if beta_next > 0.0 {
            for i in 0..n {
                v[i] = av[i] / beta_next;
            }
        }
        beta = beta_next;
        c_prev = c;
        c = c_next;
        s_prev = s;
        s = s_next;

        if eta.abs() <= rel_tol * bnorm || beta_next == 0.0 {
            apply(x, &mut av);
            let res = b.iter().zip(&av).map(|(b, a)| (b - a).powi(2)).sum::<f64>().sqrt() / bnorm;
            // the recurrence estimate can drift from the true residual
            if res <= 10.0 * rel_tol || beta_next == 0.0 {
                return Ok(KrylovStats {
                    iterations: it,
                    relative_residual: res,
                });
            }
        }
    }
    apply(x, &mut av);
    let res = b.iter().zip(&av).map(|(b, a)| (b - a).powi(2)).sum::<f64>().sqrt() / bnorm;
    Err(Error::NotConverged {
        solver: "MINRES",
        iterations: max_iter,
        residual: res,
    })
}
