//! End-to-end transcription: problem → expansion → QP → trajectories.

use crate::chebwave::{CoeffVector, PiecewisePoly, WaveletBasis};
use crate::dde_oracle::{self, ErrorReport, Trajectory};
use crate::error::{Error, Result};
use crate::lqt_model::{self, DelayRounding, DelayedLqtProblem};
use crate::qp_assembler::{self, QuadraticProgram};
use crate::qp_solver::{self, QpSolution, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Snap misaligned delays to the nearest grid multiple instead of failing.
    pub round_delays: bool,
    /// Inequality enforcement points per subinterval; `None` uses `M`.
    pub samples_per_subinterval: Option<usize>,
    pub solver: SolverOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { round_delays: false, samples_per_subinterval: None, solver: SolverOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct TrackerSolution {
    /// The problem actually solved (after any delay rounding).
    pub problem: DelayedLqtProblem,
    pub basis: WaveletBasis,
    pub rounding: Vec<DelayRounding>,
    pub state: CoeffVector,
    pub control: CoeffVector,
    pub state_poly: PiecewisePoly,
    pub control_poly: PiecewisePoly,
    /// `½ χᵀHχ` in shifted coordinates.
    pub objective: f64,
    pub qp: QuadraticProgram,
    pub qp_solution: QpSolution,
}

#[derive(Clone, Debug)]
pub struct Verification {
    /// Open-loop replay from `x0`.
    pub trajectory: Trajectory,
    pub cost: f64,
    pub report: ErrorReport,
    /// Replay restarted from the reconstructed state at every subinterval.
    pub anchored: ErrorReport,
    /// Cost measured along the restarted replay.
    pub anchored_cost: f64,
}

pub fn solve_tracking(p: &DelayedLqtProblem, basis: &WaveletBasis, opts: &SolveOptions) -> Result<TrackerSolution> {
    p.validate()?;
    let (problem, rounding) = if opts.round_delays {
        lqt_model::round_delays(p, basis.k())
    } else {
        let report = lqt_model::validate_grid(p, basis.k());
        if !report.aligned {
            return Err(Error::Grid(report.diagnostic.unwrap_or_default()));
        }
        (p.clone(), Vec::new())
    };
    let e = lqt_model::expand_problem(&problem, basis)?;
    let samples = opts.samples_per_subinterval.unwrap_or(basis.order());
    let qp = qp_assembler::assemble_qp(&e, &problem.constraints, problem.compat_continuity, samples)?;
    let sol = qp_solver::solve_convex_qp(&qp, &opts.solver);
    let (q, r, s) = (problem.q, problem.r, basis.dim());
    let mut xs = sol.chi[..q * s].to_vec();
    xs.iter_mut().zip(&e.gamma.data).for_each(|(x, g)| *x += g);
    let state = CoeffVector::from_data(*basis, q, xs)?;
    let control = CoeffVector::from_data(*basis, r, sol.chi[q * s..].to_vec())?;
    Ok(TrackerSolution {
        state_poly: state.to_piecewise_poly(problem.t_f),
        control_poly: control.to_piecewise_poly(problem.t_f),
        objective: sol.objective,
        problem,
        basis: *basis,
        rounding,
        state,
        control,
        qp,
        qp_solution: sol,
    })
}

impl TrackerSolution {
    pub fn unknowns(&self) -> usize {
        self.qp.unknowns()
    }

    /// Integration step with `per_subinterval` steps in each wavelet subinterval.
    pub fn oracle_step(&self, per_subinterval: usize) -> f64 {
        self.problem.t_f / (self.basis.subintervals() * per_subinterval.max(1)) as f64
    }

    /// Re-integrates the dynamics under the solved control and re-measures the cost.
    pub fn verify(&self, per_subinterval: usize) -> Result<Verification> {
        let per = per_subinterval.max(1);
        let per = per + per % 2;
        let trajectory = dde_oracle::integrate_dde(&self.problem, &self.control_poly, self.oracle_step(per))?;
        let cost = dde_oracle::evaluate_cost(&self.problem, &trajectory)?;
        let report = dde_oracle::compare(&self.state_poly, &self.control_poly, &trajectory);
        let anchor = |t: f64| self.state_poly.eval_right(t);
        let restarted =
            dde_oracle::integrate_dde_anchored(&self.problem, &self.control_poly, self.oracle_step(per), &anchor, per)?;
        let anchored = dde_oracle::compare(&self.state_poly, &self.control_poly, &restarted);
        let anchored_cost = dde_oracle::evaluate_cost(&self.problem, &restarted)?;
        Ok(Verification { trajectory, cost, report, anchored, anchored_cost })
    }

    /// Value of window constraint `idx` (left limit) at original time `t`.
    pub fn constraint_value(&self, idx: usize, t: f64) -> f64 {
        self.constraint_value_on(idx, t, false)
    }

    fn constraint_value_on(&self, idx: usize, t: f64, right: bool) -> f64 {
        let w = &self.problem.constraints.window_inequalities[idx];
        let (x, u) = if right {
            (self.state_poly.eval_right(t), self.control_poly.eval_right(t))
        } else {
            (self.state_poly.eval(t), self.control_poly.eval(t))
        };
        let cx = w.state.eval_vec(t);
        let cu = w.control.eval_vec(t);
        crate::dense::dot(&cx, &x) + crate::dense::dot(&cu, &u)
    }

    /// Largest `g(t) − bound(t)` over every window; see [`Self::window_violations`].
    pub fn constraint_sweep(&self, per_subinterval: usize) -> Option<f64> {
        self.window_violations(per_subinterval).into_iter().reduce(f64::max)
    }

    /// Largest `g(t) − bound(t)` per window, with `per_subinterval` uniform
    /// points per subinterval and both one-sided limits at interfaces.
    pub fn window_violations(&self, per_subinterval: usize) -> Vec<f64> {
        let t_f = self.problem.t_f;
        let per = per_subinterval.max(1);
        let windows = &self.problem.constraints.window_inequalities;
        let mut out = Vec::with_capacity(windows.len());
        for (idx, w) in windows.iter().enumerate() {
            let mut worst = f64::NEG_INFINITY;
            for n0 in 0..self.basis.subintervals() {
                let (lo, hi) = self.basis.bounds(n0);
                for j in 0..=per {
                    let t = (lo + (hi - lo) * j as f64 / per as f64) * t_f;
                    if t < w.start - 1e-12 || t > w.end + 1e-12 {
                        continue;
                    }
                    let bound = w.bound.eval(t);
                    if t > w.start + 1e-12 {
                        worst = worst.max(self.constraint_value_on(idx, t, false) - bound);
                    }
                    if t < w.end - 1e-12 {
                        worst = worst.max(self.constraint_value_on(idx, t, true) - bound);
                    }
                }
            }
            out.push(worst);
        }
        out
    }
}
