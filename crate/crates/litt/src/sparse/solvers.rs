//! Preconditioned conjugate gradient and MINRES.
//!
//! Both start from the zero initial guess and report the relative residual
//! ‖b − Ax‖₂/‖b‖₂. Convergence claims are verified against the true residual,
//! not only the recurrence estimate.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, Preconditioner};

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct SolverReport<T> {
    pub iterations: usize,
    /// Final ‖b − Ax‖₂ / ‖b‖₂ (zero right-hand sides count as converged at 0).
    pub final_residual_norm: T,
    pub converged: bool,
}

fn dot<T: Float>(u: &[T], v: &[T]) -> T {
    u.iter()
        .zip(v)
        .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

fn norm2<T: Float>(u: &[T]) -> T {
    dot(u, u).sqrt()
}

fn check_dims<T: Float>(a: &CsrMatrix<T>, b: &[T], precond: &dyn Preconditioner<T>) -> Result<()> {
    if a.n_rows() != a.n_cols() || a.n_rows() != b.len() || precond.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "solver with {}x{} matrix, rhs of length {}, preconditioner of size {}",
            a.n_rows(),
            a.n_cols(),
            b.len(),
            precond.len()
        )));
    }
    Ok(())
}

/// Preconditioned conjugate gradient for SPD systems.
///
/// Returns the iterate and a report; a report with `converged == false` is not
/// an error, but a zero-curvature direction (A not SPD) is.
pub fn cg_solve<T: Float>(
    a: &CsrMatrix<T>,
    b: &[T],
    precond: &dyn Preconditioner<T>,
    rel_tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, SolverReport<T>)> {
    check_dims(a, b, precond)?;
    let n = b.len();
    let norm_b = norm2(b);
    if norm_b == T::zero() {
        return Ok((
            vec![T::zero(); n],
            SolverReport {
                iterations: 0,
                final_residual_norm: T::zero(),
                converged: true,
            },
        ));
    }

    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];

    for k in 1..=max_iter {
        a.matvec_into(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            return Err(Error::CgBreakdown {
                iteration: k,
                curvature: pap.to_f64().unwrap_or(f64::NAN),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        if norm2(&r) <= rel_tol * norm_b {
            // The recurrence residual can drift from the true one; verify.
            a.matvec_into(&x, &mut ap)?;
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            let true_rel = norm2(&r) / norm_b;
            if true_rel <= rel_tol {
                return Ok((
                    x,
                    SolverReport {
                        iterations: k,
                        final_residual_norm: true_rel,
                        converged: true,
                    },
                ));
            }
            // Continue with the replaced residual and a fresh direction.
            precond.apply(&r, &mut z);
            rz = dot(&r, &z);
            p.copy_from_slice(&z);
            continue;
        }
        precond.apply(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    a.matvec_into(&x, &mut ap)?;
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let true_rel = norm2(&r) / norm_b;
    Ok((
        x,
        SolverReport {
            iterations: max_iter,
            final_residual_norm: true_rel,
            converged: true_rel <= rel_tol,
        },
    ))
}

/// [`cg_solve`] restarted from an initial guess: solves the shifted system
/// A·dx = b − A·x₀ and returns x₀ + dx with the convergence test still
/// relative to ‖b‖₂.
pub fn cg_solve_warm<T: Float>(
    a: &CsrMatrix<T>,
    b: &[T],
    x0: &[T],
    precond: &dyn Preconditioner<T>,
    rel_tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, SolverReport<T>)> {
    check_dims(a, b, precond)?;
    if x0.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "warm start of length {} for a system of size {}",
            x0.len(),
            b.len()
        )));
    }
    let norm_b = norm2(b);
    if norm_b == T::zero() {
        return cg_solve(a, b, precond, rel_tol, max_iter);
    }
    let ax0 = a.matvec(x0)?;
    let shifted: Vec<T> = b.iter().zip(&ax0).map(|(&bi, &ai)| bi - ai).collect();
    let norm_shift = norm2(&shifted);
    if norm_shift <= rel_tol * norm_b {
        return Ok((
            x0.to_vec(),
            SolverReport {
                iterations: 0,
                final_residual_norm: norm_shift / norm_b,
                converged: true,
            },
        ));
    }
    let inner_tol = rel_tol * norm_b / norm_shift;
    let (dx, inner) = cg_solve(a, &shifted, precond, inner_tol, max_iter)?;
    let x: Vec<T> = x0.iter().zip(&dx).map(|(&a0, &d)| a0 + d).collect();
    let rel = inner.final_residual_norm * norm_shift / norm_b;
    Ok((
        x,
        SolverReport {
            iterations: inner.iterations,
            final_residual_norm: rel,
            converged: rel <= rel_tol,
        },
    ))
}

/// Preconditioned MINRES for symmetric (possibly indefinite) systems.
///
/// The preconditioner must be SPD. Convergence is steered by the recurrence
/// estimate of the preconditioned residual and confirmed on the true residual.
pub fn minres_solve<T: Float>(
    a: &CsrMatrix<T>,
    b: &[T],
    precond: &dyn Preconditioner<T>,
    rel_tol: T,
    max_iter: usize,
) -> Result<(Vec<T>, SolverReport<T>)> {
    check_dims(a, b, precond)?;
    let n = b.len();
    let norm_b = norm2(b);
    if norm_b == T::zero() {
        return Ok((
            vec![T::zero(); n],
            SolverReport {
                iterations: 0,
                final_residual_norm: T::zero(),
                converged: true,
            },
        ));
    }

    let mut x = vec![T::zero(); n];
    let mut r1 = b.to_vec();
    let mut y = vec![T::zero(); n];
    precond.apply(&r1, &mut y);
    let beta1_sq = dot(&r1, &y);
    if beta1_sq <= T::zero() {
        return Err(Error::InvalidMatrix(
            "MINRES preconditioner is not positive definite".into(),
        ));
    }
    let beta1 = beta1_sq.sqrt();

    let mut r2 = r1.clone();
    let mut w = vec![T::zero(); n];
    let mut w2 = vec![T::zero(); n];

    let mut oldb = T::zero();
    let mut beta = beta1;
    let mut dbar = T::zero();
    let mut epsln = T::zero();
    let mut phibar = beta1;
    let mut cs = -T::one();
    let mut sn = T::zero();

    // Target for the preconditioned-norm estimate; tightened if the true
    // residual lags behind it.
    let mut est_target = rel_tol * beta1;
    let mut last_iter = 0;

    for k in 1..=max_iter {
        last_iter = k;
        let s = T::one() / beta;
        let v: Vec<T> = y.iter().map(|&yi| yi * s).collect();
        let mut ay = a.matvec(&v)?;
        if k >= 2 {
            let c = beta / oldb;
            for i in 0..n {
                ay[i] = ay[i] - c * r1[i];
            }
        }
        let alfa = dot(&v, &ay);
        let c = alfa / beta;
        for i in 0..n {
            ay[i] = ay[i] - c * r2[i];
        }
        r1 = std::mem::replace(&mut r2, ay);
        precond.apply(&r2, &mut y);
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if beta_sq < T::zero() {
            return Err(Error::InvalidMatrix(
                "MINRES preconditioner is not positive definite".into(),
            ));
        }
        beta = beta_sq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(T::min_positive_value());
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar = sn * phibar;

        let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = (0..n)
            .map(|i| (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma)
            .collect();
        for i in 0..n {
            x[i] = x[i] + phi * w[i];
        }

        if phibar <= est_target {
            let ax = a.matvec(&x)?;
            let true_res: Vec<T> = (0..n).map(|i| b[i] - ax[i]).collect();
            let true_rel = norm2(&true_res) / norm_b;
            if true_rel <= rel_tol {
                return Ok((
                    x,
                    SolverReport {
                        iterations: k,
                        final_residual_norm: true_rel,
                        converged: true,
                    },
                ));
            }
            est_target = est_target * T::from(0.25).expect("small constant");
        }
        if beta == T::zero() {
            break;
        }
    }

    let ax = a.matvec(&x)?;
    let true_res: Vec<T> = (0..n).map(|i| b[i] - ax[i]).collect();
    let true_rel = norm2(&true_res) / norm_b;
    Ok((
        x,
        SolverReport {
            iterations: last_iter,
            final_residual_norm: true_rel,
            converged: true_rel <= rel_tol,
        },
    ))
}
