//! Deterministic full-batch reference solver for `x*`.

use std::fmt::Write as _;

use crate::numkit::DenseVector;
use crate::objective::{Objective, ObjectiveError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Nesterov momentum on top of the 1/L gradient step.
    pub accelerated: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 10_000_000, accelerated: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution<S> {
    pub x_star: DenseVector<S>,
    pub f_star: S,
    /// ‖∇f(x*)‖ at the returned point.
    pub grad_norm: f64,
    pub tolerance: f64,
    pub iterations: usize,
}

impl<S: Scalar> ReferenceSolution<S> {
    /// A known closed-form optimum.
    pub fn exact(x_star: DenseVector<S>, f_star: S) -> Self {
        Self { x_star, f_star, grad_norm: 0.0, tolerance: 0.0, iterations: 0 }
    }

    /// Flat `key=value` lines; the optimum is written as a comma list.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "f_star={:e}", self.f_star.as_f64());
        let _ = writeln!(out, "grad_norm={:e}", self.grad_norm);
        let _ = writeln!(out, "tolerance={:e}", self.tolerance);
        let _ = writeln!(out, "iterations={}", self.iterations);
        let _ = writeln!(out, "dim={}", self.x_star.dim());
        let xs: Vec<String> = self.x_star.iter().map(|v| format!("{:e}", v.as_f64())).collect();
        let _ = writeln!(out, "x_star={}", xs.join(","));
        out
    }

    /// One `index,value` row per coordinate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,x_star\n");
        for (j, v) in self.x_star.iter().enumerate() {
            let _ = writeln!(out, "{j},{:e}", v.as_f64());
        }
        out
    }
}

/// Gradient descent with step `1/L` (optionally accelerated) until
/// `‖∇f(x)‖ ≤ tol`, starting from the origin. The tolerance is floored at
/// `10·ε·max(L, 1)` for the scalar's machine epsilon, since single precision
/// cannot resolve gradients much below that.
pub fn solve_reference<S: Scalar, O: Objective<S> + ?Sized>(
    problem: &O,
    opts: &SolverOptions,
) -> Result<ReferenceSolution<S>, ObjectiveError> {
    if !(opts.tol > 0.0) || !opts.tol.is_finite() {
        return Err(ObjectiveError::Invalid("tolerance must be positive".into()));
    }
    let d = problem.dim();
    let l = problem.smoothness();
    let mu = problem.strong_convexity();
    let step = S::one() / l;
    let tol = opts.tol.max(10.0 * S::epsilon().as_f64() * l.as_f64().max(1.0));
    let beta_sc = if mu > S::zero() {
        let sk = (l / mu).sqrt();
        Some((sk - S::one()) / (sk + S::one()))
    } else {
        None
    };

    let mut x = vec![S::zero(); d];
    let mut x_prev = x.clone();
    let mut y = x.clone();
    let mut g = vec![S::zero(); d];
    let mut restart_k = 0usize;

    for it in 0..opts.max_iter {
        problem.global_grad_into(&y, &mut g);
        let gn = norm(&g);
        if !gn.is_finite() {
            return Err(ObjectiveError::Invalid(format!("gradient became non-finite at iteration {it}")));
        }
        if gn.as_f64() <= tol {
            let x_star = DenseVector::from_vec_unchecked(y.clone());
            let f_star = problem.global_loss(&y);
            return Ok(ReferenceSolution {
                x_star,
                f_star,
                grad_norm: gn.as_f64(),
                tolerance: tol,
                iterations: it,
            });
        }
        std::mem::swap(&mut x_prev, &mut x);
        for j in 0..d {
            x[j] = y[j] - step * g[j];
        }
        if opts.accelerated {
            // gradient restart: drop momentum once it points uphill
            let uphill: S = (0..d).map(|j| g[j] * (x[j] - x_prev[j])).sum();
            if uphill > S::zero() {
                restart_k = 0;
                y.clone_from(&x);
                continue;
            }
            restart_k += 1;
            let beta = beta_sc.unwrap_or_else(|| S::of_usize(restart_k - 1) / S::of_usize(restart_k + 2));
            for j in 0..d {
                y[j] = x[j] + beta * (x[j] - x_prev[j]);
            }
        } else {
            y.clone_from(&x);
        }
    }
    problem.global_grad_into(&y, &mut g);
    Err(ObjectiveError::SolverCap { iterations: opts.max_iter, grad_norm: norm(&g).as_f64() })
}

fn norm<S: Scalar>(v: &[S]) -> S {
    v.iter().map(|a| *a * *a).sum::<S>().sqrt()
}
