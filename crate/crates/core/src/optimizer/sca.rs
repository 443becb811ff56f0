//! Inner-approximation loop over the ZF power-allocation problem.
//!
//! Variables are normalized so every entry is O(1): `omega_k = S_k s_k^2`
//! with `S_k` the largest weight any single AP budget allows for UE k, and
//! `p_l = P_max q_l^2`. In these units each SINR reads `s_k^2 / D_k(s, q)`
//! with a denominator that is a nonnegative diagonal quadratic plus a
//! constant, which makes the epigraph constraints `D_k <= psi_k` convex.

use std::io::Write;

use super::barrier::{self, ConvexProgram, QuadConstraint, SolverOptions};
use super::surrogate::surrogate_fr;
use super::{InfeasibilityReport, Link, UnmetFloor};
use crate::linalg::RMat;
use crate::scenario::SystemConfig;
use crate::zf::LinkGains;
use crate::{Error, Result};

/// Relative slack kept between each proxy and the value it bounds at start.
const START_SLACK: f64 = 1e-3;
const PHASE_ONE_MAX_ITER: usize = 100;

/// The power-allocation problem in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledModel {
    k: usize,
    l: usize,
    a_dl: RMat,
    b_dl: RMat,
    d0: Vec<f64>,
    c_ul: RMat,
    e_ul: RMat,
    u0: Vec<f64>,
    /// M x K; row m must satisfy `sum_k power[m,k] s_k^2 <= 1`.
    power: RMat,
    omega_scale: Vec<f64>,
    p_max: f64,
    floor_dl: f64,
    floor_ul: f64,
}

impl ScaledModel {
    pub fn new(gains: &LinkGains, cfg: &SystemConfig) -> Result<Self> {
        let (k, l) = (gains.num_dl(), gains.num_ul());
        let p_ap = cfg.ap_power_max();
        let p_max = cfg.ul_power_max;
        let omega_scale: Vec<f64> = (0..k)
            .map(|j| {
                let worst = gains.ap_cost.column(j).max();
                if worst > 0.0 && gains.g_dl[j] > 0.0 {
                    Ok(p_ap / worst)
                } else {
                    Err(Error::Domain(format!("DL UE {j} has no usable precoder")))
                }
            })
            .collect::<Result<_>>()?;
        if let Some(j) = gains.g_ul.iter().position(|&g| !(g > 0.0)) {
            return Err(Error::Domain(format!("UL UE {j} has no usable combiner")));
        }
        let dl_unit = |j: usize| gains.g_dl[j] * omega_scale[j];
        let ul_unit = |j: usize| gains.g_ul[j] * p_max;
        Ok(Self {
            k,
            l,
            a_dl: RMat::from_fn(k, k, |j, i| gains.e_dl[(j, i)] * omega_scale[i] / dl_unit(j)),
            b_dl: RMat::from_fn(k, l, |j, i| gains.c_cci[(j, i)] * p_max / dl_unit(j)),
            d0: (0..k).map(|j| gains.n_dl[j] / dl_unit(j)).collect(),
            c_ul: RMat::from_fn(l, l, |j, i| gains.f_ul[(j, i)] * p_max / ul_unit(j)),
            e_ul: RMat::from_fn(l, k, |j, i| gains.s_aa[(j, i)] * omega_scale[i] / ul_unit(j)),
            u0: (0..l).map(|j| gains.n_ul[j] / ul_unit(j)).collect(),
            power: RMat::from_fn(gains.ap_cost.nrows(), k, |m, i| {
                gains.ap_cost[(m, i)] * omega_scale[i] / p_ap
            }),
            omega_scale,
            p_max,
            floor_dl: SystemConfig::sinr_floor(cfg.rate_floor_dl),
            floor_ul: SystemConfig::sinr_floor(cfg.rate_floor_ul),
        })
    }

    pub fn num_dl(&self) -> usize {
        self.k
    }

    pub fn num_ul(&self) -> usize {
        self.l
    }

    /// Number of optimization variables `(s, q, lambda, psi)`.
    pub fn dim(&self) -> usize {
        3 * (self.k + self.l)
    }

    fn s(&self, j: usize) -> usize {
        j
    }
    fn q(&self, j: usize) -> usize {
        self.k + j
    }
    fn lam_dl(&self, j: usize) -> usize {
        self.k + self.l + j
    }
    fn lam_ul(&self, j: usize) -> usize {
        2 * self.k + self.l + j
    }
    fn psi_dl(&self, j: usize) -> usize {
        2 * (self.k + self.l) + j
    }
    fn psi_ul(&self, j: usize) -> usize {
        3 * self.k + 2 * self.l + j
    }

    fn dl_denominator(&self, x: &[f64], j: usize) -> f64 {
        let err: f64 = (0..self.k).map(|i| self.a_dl[(j, i)] * x[self.s(i)].powi(2)).sum();
        let cci: f64 = (0..self.l).map(|i| self.b_dl[(j, i)] * x[self.q(i)].powi(2)).sum();
        err + cci + self.d0[j]
    }

    fn ul_denominator(&self, x: &[f64], j: usize) -> f64 {
        let err: f64 = (0..self.l).map(|i| self.c_ul[(j, i)] * x[self.q(i)].powi(2)).sum();
        let si: f64 = (0..self.k).map(|i| self.e_ul[(j, i)] * x[self.s(i)].powi(2)).sum();
        err + si + self.u0[j]
    }

    /// ZF SINRs of the powers encoded in `x`.
    pub fn sinrs(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dl = (0..self.k)
            .map(|j| x[self.s(j)].powi(2) / self.dl_denominator(x, j))
            .collect();
        let ul = (0..self.l)
            .map(|j| x[self.q(j)].powi(2) / self.ul_denominator(x, j))
            .collect();
        (dl, ul)
    }

    pub fn omega(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k).map(|j| self.omega_scale[j] * x[self.s(j)].powi(2)).collect()
    }

    pub fn p(&self, x: &[f64]) -> Vec<f64> {
        (0..self.l).map(|j| self.p_max * x[self.q(j)].powi(2)).collect()
    }

    /// `sum ln(1 + lambda)` in nats.
    pub fn objective(&self, x: &[f64]) -> f64 {
        (self.k + self.l..2 * (self.k + self.l)).map(|i| x[i].ln_1p()).sum()
    }

    fn floors(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.k)
            .map(|j| (self.lam_dl(j), self.floor_dl))
            .chain((0..self.l).map(|j| (self.lam_ul(j), self.floor_ul)))
    }

    /// Convex restriction of the problem around `x0`.
    ///
    /// With `phase_one` set, an extra trailing variable `v` relaxes every
    /// rate floor and the objective becomes `-v`.
    pub fn build_subproblem(&self, x0: &[f64], phase_one: bool) -> Result<ConvexProgram> {
        let n = self.dim();
        let mut prog = ConvexProgram::new(n + usize::from(phase_one));
        let mut push = |quad: Vec<(usize, f64)>, lin: Vec<(usize, f64)>, constant: f64| {
            prog.constraints.push(QuadConstraint {
                quad,
                lin,
                constant,
            })
        };

        let links = (0..self.k)
            .map(|j| (self.s(j), self.lam_dl(j), self.psi_dl(j)))
            .chain((0..self.l).map(|j| (self.q(j), self.lam_ul(j), self.psi_ul(j))));
        for (xs, xl, xp) in links {
            let (s0, p0) = (x0[xs], x0[xp]);
            // lambda <= surrogate(s, psi), which is linear in (s, psi)
            let slope_s = surrogate_fr(1.0, 0.0, s0, p0)?;
            let slope_p = surrogate_fr(0.0, 1.0, s0, p0)?;
            push(Vec::new(), vec![(xl, 1.0), (xs, -slope_s), (xp, -slope_p)], 0.0);
        }
        for j in 0..self.k {
            let mut quad: Vec<(usize, f64)> =
                (0..self.k).map(|i| (self.s(i), self.a_dl[(j, i)])).collect();
            quad.extend((0..self.l).map(|i| (self.q(i), self.b_dl[(j, i)])));
            quad.retain(|e| e.1 != 0.0);
            push(quad, vec![(self.psi_dl(j), -1.0)], self.d0[j]);
        }
        for j in 0..self.l {
            let mut quad: Vec<(usize, f64)> =
                (0..self.l).map(|i| (self.q(i), self.c_ul[(j, i)])).collect();
            quad.extend((0..self.k).map(|i| (self.s(i), self.e_ul[(j, i)])));
            quad.retain(|e| e.1 != 0.0);
            push(quad, vec![(self.psi_ul(j), -1.0)], self.u0[j]);
        }
        for row in self.power.row_iter() {
            let quad: Vec<(usize, f64)> = row
                .iter()
                .enumerate()
                .filter(|e| *e.1 > 0.0)
                .map(|(i, &c)| (self.s(i), c))
                .collect();
            if !quad.is_empty() {
                push(quad, Vec::new(), -1.0);
            }
        }
        for j in 0..self.l {
            push(vec![(self.q(j), 1.0)], Vec::new(), -1.0);
            push(Vec::new(), vec![(self.q(j), -1.0)], 0.0);
        }
        for j in 0..self.k {
            push(Vec::new(), vec![(self.s(j), -1.0)], 0.0);
        }
        for (i, floor) in self.floors() {
            let mut lin = vec![(i, -1.0)];
            if phase_one {
                lin.push((n, -1.0));
            }
            push(Vec::new(), lin, floor);
        }

        if phase_one {
            prog.linear[n] = -1.0;
            // keeps the slack bounded below
            prog.constraints.push(QuadConstraint {
                lin: vec![(n, -1.0)],
                constant: -1.0,
                ..QuadConstraint::default()
            });
        } else {
            prog.log_terms = (self.k + self.l..2 * (self.k + self.l)).map(|i| (i, 1.0)).collect();
        }
        Ok(prog)
    }

    /// Point with the given powers, `psi` just above the denominators and
    /// `lambda` just below the SINRs.
    fn start_point(&self, s: &[f64], q: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        x[..self.k].copy_from_slice(s);
        x[self.k..self.k + self.l].copy_from_slice(q);
        for j in 0..self.k {
            let psi = self.dl_denominator(&x, j) * (1.0 + START_SLACK);
            x[self.psi_dl(j)] = psi;
            x[self.lam_dl(j)] = s[j] * s[j] / psi * (1.0 - START_SLACK);
        }
        for j in 0..self.l {
            let psi = self.ul_denominator(&x, j) * (1.0 + START_SLACK);
            x[self.psi_ul(j)] = psi;
            x[self.lam_ul(j)] = q[j] * q[j] / psi * (1.0 - START_SLACK);
        }
        x
    }

    fn unmet_floors(&self, x: &[f64]) -> Vec<UnmetFloor> {
        let (dl, ul) = self.sinrs(x);
        let dl = dl.into_iter().enumerate().filter(|e| e.1 <= self.floor_dl).map(|(index, sinr)| {
            UnmetFloor {
                link: Link::Dl,
                index,
                sinr,
                floor: self.floor_dl,
            }
        });
        let ul = ul.into_iter().enumerate().filter(|e| e.1 <= self.floor_ul).map(|(index, sinr)| {
            UnmetFloor {
                link: Link::Ul,
                index,
                sinr,
                floor: self.floor_ul,
            }
        });
        dl.chain(ul).collect()
    }

    /// UEs whose floor exceeds the SINR they would get at full power with
    /// every other transmitter silent.
    fn interference_free_bound_violations(&self) -> Vec<UnmetFloor> {
        let dl = self.d0.iter().enumerate().map(|(index, d)| UnmetFloor {
            link: Link::Dl,
            index,
            sinr: 1.0 / d,
            floor: self.floor_dl,
        });
        let ul = self.u0.iter().enumerate().map(|(index, u)| UnmetFloor {
            link: Link::Ul,
            index,
            sinr: 1.0 / u,
            floor: self.floor_ul,
        });
        dl.chain(ul).filter(|u| u.floor >= u.sinr).collect()
    }

    fn floors_strictly_met(&self, x: &[f64]) -> bool {
        self.floors().all(|(i, f)| x[i] > f)
    }
}

/// One accepted inner-approximation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective_nats: f64,
    pub max_constraint_residual: f64,
    pub solver_newton_steps: usize,
}

/// Optimizer iterate in physical units.
///
/// `psi_dl`/`psi_ul` are the denominator proxies in the normalized units of
/// [`ScaledModel`], where the SINR is `s^2 / psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    pub omega: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda_dl: Vec<f64>,
    pub lambda_ul: Vec<f64>,
    pub psi_dl: Vec<f64>,
    pub psi_ul: Vec<f64>,
    pub iteration: usize,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    x: Vec<f64>,
}

impl SolveState {
    fn from_point(model: &ScaledModel, x: Vec<f64>) -> Self {
        let (k, l) = (model.k, model.l);
        let o = k + l;
        Self {
            omega: model.omega(&x),
            p: model.p(&x),
            lambda_dl: x[o..o + k].to_vec(),
            lambda_ul: x[o + k..2 * o].to_vec(),
            psi_dl: x[2 * o..2 * o + k].to_vec(),
            psi_ul: x[2 * o + k..].to_vec(),
            iteration: 0,
            trace: Vec::new(),
            converged: false,
            x,
        }
    }

    /// Normalized variable vector `(s, q, lambda, psi)`.
    pub fn point(&self) -> &[f64] {
        &self.x
    }

    /// `sum ln(1 + lambda)` in nats.
    pub fn objective(&self) -> f64 {
        self.lambda_dl.iter().chain(&self.lambda_ul).map(|v| v.ln_1p()).sum()
    }

    /// Writes `iteration,objective_nats,max_constraint_residual,solver_newton_steps`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "iteration",
            "objective_nats",
            "max_constraint_residual",
            "solver_newton_steps",
        ])?;
        for r in &self.trace {
            wtr.write_record([
                r.iteration.to_string(),
                r.objective_nats.to_string(),
                r.max_constraint_residual.to_string(),
                r.solver_newton_steps.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn solver_options(cfg: &SystemConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.solver_tol,
        ..SolverOptions::default()
    }
}

/// Strictly feasible starting point.
///
/// Every DL UE gets the same weight, half of what the tightest AP budget
/// allows, and every UL UE transmits at half its maximum power. If the rate
/// floors fail there, a phase-one inner approximation minimizes the largest
/// floor violation instead.
pub fn initialize_feasible(model: &ScaledModel, cfg: &SystemConfig) -> Result<SolveState> {
    let omega_uniform = (0..model.power.nrows())
        .map(|m| {
            let load: f64 = (0..model.k)
                .map(|j| model.power[(m, j)] / model.omega_scale[j])
                .sum();
            0.5 / load
        })
        .fold(f64::INFINITY, f64::min);
    let s: Vec<f64> = (0..model.k)
        .map(|j| (omega_uniform / model.omega_scale[j]).sqrt())
        .collect();
    let q = vec![0.5f64.sqrt(); model.l];
    let mut x = model.start_point(&s, &q);
    let beyond_reach = model.interference_free_bound_violations();
    if !beyond_reach.is_empty() {
        return Err(Error::Infeasible(InfeasibilityReport {
            reason: "rate floors exceed the interference-free SINR".into(),
            min_slack: beyond_reach
                .iter()
                .map(|u| u.floor - u.sinr)
                .fold(f64::NEG_INFINITY, f64::max),
            unmet: beyond_reach,
        }));
    }
    if !model.floors_strictly_met(&x) {
        x = phase_one(model, x, cfg)?;
    }
    let prog = model.build_subproblem(&x, false)?;
    let residual = prog.max_residual(&x);
    if !(residual < 0.0) {
        return Err(Error::Solver(format!(
            "initial point is not strictly feasible (residual {residual:.3e})"
        )));
    }
    let mut state = SolveState::from_point(model, x);
    state.trace.push(TraceRow {
        iteration: 0,
        objective_nats: state.objective(),
        max_constraint_residual: residual,
        solver_newton_steps: 0,
    });
    Ok(state)
}

fn phase_one(model: &ScaledModel, x0: Vec<f64>, cfg: &SystemConfig) -> Result<Vec<f64>> {
    let opts = solver_options(cfg);
    let worst = |x: &[f64]| {
        model
            .floors()
            .map(|(i, f)| f - x[i])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut x = x0;
    let mut v = worst(&x);
    for _ in 0..PHASE_ONE_MAX_ITER {
        let mut start = x.clone();
        start.push(v + 0.1 * (1.0 + v.abs()));
        let prog = model.build_subproblem(&x, true)?;
        let sol = barrier::solve(&prog, &start, &opts)?;
        let n = model.dim();
        let v_new = sol.x[n];
        x = sol.x[..n].to_vec();
        if v_new < 0.0 {
            return Ok(x);
        }
        if v - v_new < cfg.sca_tol * 1e-3 {
            v = v_new;
            break;
        }
        v = v_new;
    }
    Err(Error::Infeasible(InfeasibilityReport {
        reason: "rate floors unattainable from the feasible-point search".into(),
        min_slack: v,
        unmet: model.unmet_floors(&x),
    }))
}

/// Repeats convex restrictions until the objective gain drops below
/// `cfg.sca_tol` or `cfg.sca_max_iter` subproblems have been solved.
///
/// A subproblem solution that would lower the objective is rejected, so the
/// trace never decreases.
pub fn run_sca(model: &ScaledModel, init: SolveState, cfg: &SystemConfig) -> Result<SolveState> {
    let opts = solver_options(cfg);
    let mut state = init;
    let mut x = state.x.clone();
    let mut obj = model.objective(&x);
    let mut converged = false;
    for it in 1..=cfg.sca_max_iter {
        let prog = model.build_subproblem(&x, false)?;
        let sol = match barrier::solve(&prog, &x, &opts) {
            Ok(sol) => sol,
            // numerical trouble after progress: keep the best iterate, unflagged
            Err(Error::Solver(_)) if it > 1 => break,
            Err(e) => return Err(e),
        };
        let (residual, steps) = (sol.max_residual, sol.newton_steps);
        let gain = sol.objective - obj;
        if gain >= 0.0 {
            x = sol.x;
            obj = sol.objective;
        }
        state.trace.push(TraceRow {
            iteration: it,
            objective_nats: obj,
            max_constraint_residual: if gain >= 0.0 { residual } else { prog.max_residual(&x) },
            solver_newton_steps: steps,
        });
        state.iteration = it;
        if gain.max(0.0) < cfg.sca_tol {
            converged = true;
            break;
        }
    }
    let trace = std::mem::take(&mut state.trace);
    let iteration = state.iteration;
    let mut out = SolveState::from_point(model, x);
    out.trace = trace;
    out.iteration = iteration;
    out.converged = converged;
    Ok(out)
}
