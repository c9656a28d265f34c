//! Damped Newton iteration with strongly imposed Dirichlet values.

use crate::error::{Error, Result};
use crate::fem::solvers::{solve, ConvergenceRecord, LinearSolverConfig, Method};
use crate::fem::{CsrMatrix, Dirichlet};

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_iter: usize,
    /// Smallest damping factor of the halving line search.
    pub min_damping: f64,
    pub linear: LinearSolverConfig,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            rtol: 1e-12,
            atol: 1e-13,
            max_iter: 40,
            min_damping: 1.0 / 1024.0,
            linear: LinearSolverConfig::default().with_rtol(1e-12),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub dampings: Vec<f64>,
    pub linear: Vec<ConvergenceRecord>,
    pub converged: bool,
}

fn free_norm(r: &[f64], mask: &[bool]) -> f64 {
    r.iter().zip(mask).filter(|(_, m)| !**m).map(|(x, _)| x * x).sum::<f64>().sqrt()
}

/// Solve a linear system, falling back to the direct solver if the
/// iterative method does not converge.
pub fn solve_with_fallback(a: &CsrMatrix, b: &[f64], cfg: &LinearSolverConfig) -> Result<(Vec<f64>, ConvergenceRecord)> {
    let first = solve(a, b, None, cfg);
    match first {
        Ok((x, rec)) if rec.converged => Ok((x, rec)),
        _ if cfg.method != Method::Direct => solve(a, b, None, &LinearSolverConfig::direct()),
        other => other,
    }
}

/// Newton's method for `R(x) = 0` on the free dofs. `x0` must already hold
/// the Dirichlet values; `system` returns the residual and Jacobian.
pub fn newton(
    mut x: Vec<f64>,
    bc: &Dirichlet,
    system: impl Fn(&[f64]) -> (Vec<f64>, CsrMatrix),
    residual: impl Fn(&[f64]) -> Vec<f64>,
    opts: &NewtonOptions,
    label: &str,
) -> Result<(Vec<f64>, NewtonReport)> {
    let mask = bc.mask(x.len());
    let mut rep = NewtonReport::default();
    let (mut r, mut jac) = system(&x);
    let mut rn = free_norm(&r, &mask);
    let r0 = rn;
    rep.residuals.push(rn);
    for it in 0..opts.max_iter {
        if !rn.is_finite() {
            return Err(Error::Solver(format!("{label}: non-finite residual at Newton iteration {it}")));
        }
        if rn <= opts.atol || rn <= opts.rtol * r0 {
            rep.converged = true;
            rep.iterations = it;
            return Ok((x, rep));
        }
        let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        bc.apply_homogeneous(&mut jac, &mut rhs);
        let (dx, lin) = solve_with_fallback(&jac, &rhs, &opts.linear)?;
        rep.linear.push(lin);
        let mut lambda = 1.0;
        let mut accepted = None;
        while lambda >= opts.min_damping {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + lambda * d).collect();
            let rt = residual(&xt);
            let nt = free_norm(&rt, &mask);
            if nt.is_finite() && nt < (1.0 - 1e-4 * lambda) * rn {
                accepted = Some(xt);
                break;
            }
            lambda *= 0.5;
        }
        let Some(xt) = accepted else {
            // stagnation at round-off level counts as convergence
            if rn <= 1e3 * opts.atol.max(opts.rtol * r0) {
                rep.converged = true;
                rep.iterations = it;
                return Ok((x, rep));
            }
            return Err(Error::Solver(format!(
                "{label}: line search failed at Newton iteration {it} (residual {rn:.3e})"
            )));
        };
        rep.dampings.push(lambda);
        x = xt;
        let s = system(&x);
        r = s.0;
        jac = s.1;
        rn = free_norm(&r, &mask);
        rep.residuals.push(rn);
    }
    if rn <= opts.atol || rn <= opts.rtol * r0 {
        rep.converged = true;
        rep.iterations = opts.max_iter;
        return Ok((x, rep));
    }
    Err(Error::Solver(format!("{label}: Newton did not converge in {} iterations (residual {rn:.3e})", opts.max_iter)))
}
