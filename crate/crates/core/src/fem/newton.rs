//! Damped Newton iteration for sparse nonlinear systems.

use super::solve::Factorization;
use super::sparse::{norm2, CsrMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonTolerances {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Maximum step halvings per iteration when the residual grows.
    pub max_halvings: usize,
}

impl Default for NewtonTolerances {
    fn default() -> Self {
        NewtonTolerances { abs_tol: 1e-11, rel_tol: 1e-12, max_iter: 30, max_halvings: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Solves `R(x) = 0`. Stops when `||R|| <= max(abs_tol, rel_tol ||R(init)||)`.
/// A step that increases the residual norm is halved until it does not.
pub fn newton_solve<R, J>(residual: R, jacobian: J, init: Vec<f64>, tols: &NewtonTolerances) -> Result<NewtonResult>
where
    R: Fn(&[f64]) -> Result<Vec<f64>>,
    J: Fn(&[f64]) -> Result<CsrMatrix>,
{
    let mut x = init;
    let mut r = residual(&x)?;
    let mut rn = norm2(&r);
    let target = tols.abs_tol.max(tols.rel_tol * rn);
    for it in 0..=tols.max_iter {
        if !rn.is_finite() {
            return Err(Error::NoConvergence("non-finite Newton residual".into()));
        }
        if rn <= target {
            return Ok(NewtonResult { solution: x, iterations: it, residual_norm: rn });
        }
        if it == tols.max_iter {
            break;
        }
        let dx = Factorization::new(&jacobian(&x)?, false)?.solve(&r)?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=tols.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, d)| xi - step * d).collect();
            let rt = residual(&trial)?;
            let rtn = norm2(&rt);
            if rtn.is_finite() && rtn < rn {
                x = trial;
                r = rt;
                rn = rtn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if rn <= target.max(1e3 * f64::EPSILON * norm2(&x)) {
                return Ok(NewtonResult { solution: x, iterations: it, residual_norm: rn });
            }
            return Err(Error::NoConvergence(format!("Newton damping exhausted at residual {rn:.3e}")));
        }
        log::debug!("newton iteration {} residual {:.3e}", it + 1, rn);
    }
    Err(Error::NoConvergence(format!(
        "Newton reached {} iterations at residual {rn:.3e}",
        tols.max_iter
    )))
}
