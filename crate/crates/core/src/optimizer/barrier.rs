//! Primal log-barrier interior-point solver for small dense convex programs.
//!
//! ```text
//! maximize   c.x + sum_j w_j ln(1 + x_j)
//! subject to sum_i d_i x_i^2 + sum_i a_i x_i + b <= 0     (d_i >= 0)
//! ```
//!
//! Each centering step minimizes `-t f(x) - sum ln(-g(x))` by damped Newton
//! with a dense Cholesky solve; `t` grows geometrically until the duality gap
//! bound `m / t` drops below the tolerance.

use nalgebra::{DMatrix, DVector};

use super::InfeasibilityReport;
use crate::{Error, Result};

/// `sum d x^2 + sum a x + b <= 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadConstraint {
    pub quad: Vec<(usize, f64)>,
    pub lin: Vec<(usize, f64)>,
    pub constant: f64,
}

impl QuadConstraint {
    pub fn value(&self, x: &[f64]) -> f64 {
        let q: f64 = self.quad.iter().map(|&(i, d)| d * x[i] * x[i]).sum();
        let l: f64 = self.lin.iter().map(|&(i, a)| a * x[i]).sum();
        q + l + self.constant
    }

    fn gradient(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        out.extend(self.quad.iter().map(|&(i, d)| (i, 2.0 * d * x[i])));
        out.extend(self.lin.iter().copied());
        out.sort_unstable_by_key(|e| e.0);
        out.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvexProgram {
    pub dim: usize,
    /// Linear objective coefficients (maximized).
    pub linear: Vec<f64>,
    /// `(j, w)` adds `w ln(1 + x_j)` to the objective; `w > 0`.
    pub log_terms: Vec<(usize, f64)>,
    pub constraints: Vec<QuadConstraint>,
}

impl ConvexProgram {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            linear: vec![0.0; dim],
            ..Self::default()
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().zip(x).map(|(c, x)| c * x).sum();
        let logs: f64 = self.log_terms.iter().map(|&(j, w)| w * x[j].ln_1p()).sum();
        lin + logs
    }

    /// Largest constraint value; negative means strictly feasible.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.is_finite()) && self.log_terms.iter().all(|&(j, _)| x[j] > -1.0)
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        self.in_domain(x) && self.constraints.iter().all(|c| c.value(x) < 0.0)
    }

    /// Barrier function, `+inf` outside the strict interior.
    fn barrier(&self, x: &[f64], t: f64) -> f64 {
        if !self.in_domain(x) {
            return f64::INFINITY;
        }
        let mut phi = -t * self.objective(x);
        for c in &self.constraints {
            let g = c.value(x);
            if g >= 0.0 {
                return f64::INFINITY;
            }
            phi -= (-g).ln();
        }
        phi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target duality gap bound `m / t`.
    pub tol: f64,
    pub mu: f64,
    pub t0: f64,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            mu: 20.0,
            t0: 1.0,
            max_newton: 5_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Upper bound on the distance to the optimal value.
    pub gap: f64,
    pub newton_steps: usize,
    pub max_residual: f64,
}

/// Barrier decreases below this relative size are rounding noise.
const STALL: f64 = 1e-14;

/// Iterates growing this many times past the start are treated as diverging.
const DIVERGENCE: f64 = 1e12;

struct Centering<'a> {
    prog: &'a ConvexProgram,
    grad_buf: Vec<(usize, f64)>,
    bound: f64,
}

impl<'a> Centering<'a> {
    fn new(prog: &'a ConvexProgram, x0: &[f64]) -> Self {
        let scale = x0.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        Self {
            prog,
            grad_buf: Vec::new(),
            bound: DIVERGENCE * scale,
        }
    }
}

impl Centering<'_> {
    /// Gradient and Hessian of the barrier at `x`.
    fn derivatives(&mut self, x: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.prog.dim;
        let mut grad = DVector::from_iterator(n, self.prog.linear.iter().map(|c| -t * c));
        let mut hess = DMatrix::zeros(n, n);
        for &(j, w) in &self.prog.log_terms {
            let u = 1.0 + x[j];
            grad[j] -= t * w / u;
            hess[(j, j)] += t * w / (u * u);
        }
        for c in &self.prog.constraints {
            let r = -1.0 / c.value(x);
            c.gradient(x, &mut self.grad_buf);
            for &(i, gi) in &self.grad_buf {
                grad[i] += r * gi;
                for &(j, gj) in &self.grad_buf {
                    hess[(i, j)] += r * r * gi * gj;
                }
            }
            for &(i, d) in &c.quad {
                hess[(i, i)] += 2.0 * d * r;
            }
        }
        (grad, hess)
    }

    /// Minimizes the barrier at fixed `t`. Returns the Newton steps taken.
    fn center(&mut self, x: &mut Vec<f64>, t: f64, budget: usize) -> Result<usize> {
        let prog = self.prog;
        let mut steps = 0;
        let mut phi = prog.barrier(x, t);
        while steps < budget {
            let (grad, hess) = self.derivatives(x, t);
            let neg_grad = -&grad;
            let dx = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&neg_grad),
                None => hess
                    .lu()
                    .solve(&neg_grad)
                    .ok_or_else(|| Error::Solver("singular Newton system".into()))?,
            };
            steps += 1;
            let decrement = -grad.dot(&dx);
            if !decrement.is_finite() {
                return Err(Error::Solver("non-finite Newton step".into()));
            }
            if decrement / 2.0 <= 1e-10 {
                break;
            }
            let mut s = 1.0;
            let mut accepted = false;
            let mut stalled = false;
            for _ in 0..80 {
                let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(x, d)| x + s * d).collect();
                let phi_trial = prog.barrier(&trial, t);
                if phi_trial <= phi - 0.25 * s * decrement {
                    stalled = phi - phi_trial <= STALL * phi.abs().max(1.0);
                    *x = trial;
                    phi = phi_trial;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted || stalled {
                // no representable descent left at this t
                break;
            }
            if x.iter().any(|v| v.abs() > self.bound) {
                return Err(Error::Unbounded);
            }
        }
        Ok(steps)
    }
}

/// Path-following from a strictly feasible start.
fn solve_interior(prog: &ConvexProgram, x0: &[f64], opts: &SolverOptions) -> Result<Solution> {
    let m = prog.constraints.len().max(1) as f64;
    let mut x = x0.to_vec();
    let mut t = opts.t0;
    let mut steps = 0;
    let mut c = Centering::new(prog, &x);
    loop {
        steps += c.center(&mut x, t, opts.max_newton.saturating_sub(steps))?;
        if m / t <= opts.tol {
            break;
        }
        if steps >= opts.max_newton {
            return Err(Error::Solver(format!(
                "Newton budget exhausted at gap {:.3e}",
                m / t
            )));
        }
        t *= opts.mu;
    }
    Ok(Solution {
        objective: prog.objective(&x),
        max_residual: prog.max_residual(&x),
        gap: m / t,
        newton_steps: steps,
        x,
    })
}

/// Finds a strictly feasible point by minimizing a common slack `v`.
fn phase_one(prog: &ConvexProgram, x0: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    if !prog.in_domain(x0) {
        return Err(Error::Solver("start lies outside the objective domain".into()));
    }
    let n = prog.dim;
    let mut aux = ConvexProgram::new(n + 1);
    aux.linear[n] = -1.0;
    let v0 = prog.max_residual(x0);
    let floor = 1.0 + v0.abs();
    aux.constraints = prog
        .constraints
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.lin.push((n, -1.0));
            c
        })
        .collect();
    // keeps the auxiliary problem bounded
    aux.constraints.push(QuadConstraint {
        lin: vec![(n, -1.0)],
        constant: -floor,
        ..QuadConstraint::default()
    });
    for &(j, _) in &prog.log_terms {
        aux.constraints.push(QuadConstraint {
            lin: vec![(j, -1.0)],
            constant: -1.0 + 1e-12,
            ..QuadConstraint::default()
        });
    }
    let mut x: Vec<f64> = x0.to_vec();
    x.push(v0 + 1.0 + 1e-3 * v0.abs());

    let m = aux.constraints.len() as f64;
    let mut t = opts.t0;
    let mut steps = 0;
    let mut c = Centering::new(&aux, &x);
    loop {
        steps += c.center(&mut x, t, opts.max_newton.saturating_sub(steps))?;
        let candidate = &x[..n];
        if x[n] < 0.0 && prog.strictly_feasible(candidate) {
            return Ok(candidate.to_vec());
        }
        if x[n] - m / t > 0.0 {
            return Err(Error::Infeasible(InfeasibilityReport::new(
                "convex program has no strictly feasible point",
                x[n] - m / t,
            )));
        }
        if m / t <= opts.tol || steps >= opts.max_newton {
            return Err(Error::Infeasible(InfeasibilityReport::new(
                "convex program has no strictly feasible point within tolerance",
                x[n],
            )));
        }
        t *= opts.mu;
    }
}

/// Solves `prog`, running a phase-one search first if `x0` is not strictly feasible.
pub fn solve(prog: &ConvexProgram, x0: &[f64], opts: &SolverOptions) -> Result<Solution> {
    if x0.len() != prog.dim {
        return Err(Error::Solver(format!(
            "start has {} entries, program has {}",
            x0.len(),
            prog.dim
        )));
    }
    if prog.strictly_feasible(x0) {
        solve_interior(prog, x0, opts)
    } else {
        let start = phase_one(prog, x0, opts)?;
        solve_interior(prog, &start, opts)
    }
}
