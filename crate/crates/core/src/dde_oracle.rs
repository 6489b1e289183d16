//! Independent check of a transcribed solution: fixed-step RK4 on the delayed
//! dynamics under a given control, quadrature of the cost, and error reports.

use crate::chebwave::PiecewisePoly;
use crate::dense::{self, Matrix};
use crate::error::{arg, Result};
use crate::lqt_model::DelayedLqtProblem;

/// A control that may jump; `right` selects the right-limit at a jump.
pub trait ControlSignal {
    fn value(&self, t: f64, right: bool) -> Vec<f64>;
}

impl ControlSignal for PiecewisePoly {
    fn value(&self, t: f64, right: bool) -> Vec<f64> {
        if right {
            self.eval_right(t)
        } else {
            self.eval(t)
        }
    }
}

/// Wraps a continuous control given as a closure.
pub struct FnControl<F>(pub F);

impl<F: Fn(f64) -> Vec<f64>> ControlSignal for FnControl<F> {
    fn value(&self, t: f64, _right: bool) -> Vec<f64> {
        (self.0)(t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Left limits (right limit at `t = 0`).
    pub controls: Vec<Vec<f64>>,
    pub controls_right: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t, x…, u…, r…, e` where `e = |x − r|`.
    pub fn to_csv(&self, problem: &DelayedLqtProblem) -> String {
        let q = self.states.first().map_or(0, |x| x.len());
        let r = self.controls.first().map_or(0, |u| u.len());
        let mut out = String::from("t");
        (1..=q).for_each(|i| out.push_str(&format!(",x{i}")));
        (1..=r).for_each(|i| out.push_str(&format!(",u{i}")));
        (1..=q).for_each(|i| out.push_str(&format!(",r{i}")));
        out.push_str(",e\n");
        for (i, &t) in self.times.iter().enumerate() {
            let rf = problem.reference.eval_vec(t);
            let e = self.states[i].iter().zip(&rf).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            out.push_str(&format!("{t:.10e}"));
            self.states[i].iter().chain(&self.controls[i]).chain(&rf).for_each(|v| out.push_str(&format!(",{v:.10e}")));
            out.push_str(&format!(",{e:.10e}\n"));
        }
        out
    }
}

/// Plant data restricted to the physical states of a lifted problem.
struct Plant<'a> {
    p: &'a DelayedLqtProblem,
    q: usize,
}

impl Plant<'_> {
    fn top(&self, m: Matrix, cols: usize) -> Matrix {
        m.as_ref().submatrix(0, 0, self.q, cols).to_owned()
    }

    fn a(&self, t: f64) -> Matrix {
        self.top(self.p.a.eval(t), self.q)
    }

    fn b(&self, t: f64) -> Matrix {
        self.top(self.p.b.eval(t), self.p.r)
    }

    fn history(&self, t: f64) -> Vec<f64> {
        self.p.initial_state.eval_vec(t)[..self.q].to_vec()
    }
}

struct History {
    step: f64,
    x: Vec<Vec<f64>>,
    d_right: Vec<Vec<f64>>,
    d_left: Vec<Vec<f64>>,
}

impl History {
    fn at(&self, t: f64) -> Vec<f64> {
        let pos = t / self.step;
        let j = pos.round();
        if (pos - j).abs() < 1e-9 && (j as usize) < self.x.len() {
            return self.x[j as usize].clone();
        }
        let i = pos.floor() as usize;
        let s = pos - i as f64;
        let h = self.step;
        let (x0, x1) = (&self.x[i], &self.x[i + 1]);
        let (d0, d1) = (&self.d_right[i], &self.d_left[i + 1]);
        let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        let h10 = s * s * s - 2.0 * s * s + s;
        let h01 = -2.0 * s * s * s + 3.0 * s * s;
        let h11 = s * s * s - s * s;
        (0..x0.len()).map(|c| h00 * x0[c] + h10 * h * d0[c] + h01 * x1[c] + h11 * h * d1[c]).collect()
    }
}

fn aligned(value: f64, step: f64) -> bool {
    let n = value / step;
    (n - n.round()).abs() < 1e-9 * n.abs().max(1.0)
}

/// Classical RK4 with delayed reads from a Hermite-interpolated history.
///
/// For a lifted problem the physical plant is integrated and the appended
/// output states are filled in as `C x + D u`.
pub fn integrate_dde(problem: &DelayedLqtProblem, control: &dyn ControlSignal, step: f64) -> Result<Trajectory> {
    integrate(problem, control, step, None)
}

/// Like [`integrate_dde`], but the state is reset to `anchor(t)` after every
/// `every` steps. Each segment then only accumulates its own local defect,
/// which keeps the comparison meaningful for unstable plants over long horizons.
pub fn integrate_dde_anchored(
    problem: &DelayedLqtProblem,
    control: &dyn ControlSignal,
    step: f64,
    anchor: &dyn Fn(f64) -> Vec<f64>,
    every: usize,
) -> Result<Trajectory> {
    if every == 0 {
        return arg("anchor spacing must be positive");
    }
    integrate(problem, control, step, Some((anchor, every)))
}

type Anchor<'a> = Option<(&'a dyn Fn(f64) -> Vec<f64>, usize)>;

fn integrate(problem: &DelayedLqtProblem, control: &dyn ControlSignal, step: f64, anchor: Anchor<'_>) -> Result<Trajectory> {
    let t_f = problem.t_f;
    if !(step > 0.0) || !aligned(t_f, step) {
        return arg(format!("step {step} does not divide t_f = {t_f}"));
    }
    for d in problem.delayed_state.iter().chain(&problem.delayed_input) {
        if !aligned(d.delay, step) {
            return arg(format!("step {step} does not divide delay {}", d.delay));
        }
    }
    let q = problem.lifting.as_ref().map_or(problem.q, |l| l.base_q);
    let plant = Plant { p: problem, q };
    let n = (t_f / step).round() as usize;
    let mut hist = History { step, x: Vec::with_capacity(n + 1), d_right: Vec::new(), d_left: Vec::new() };
    hist.x.push(problem.x0[..q].to_vec());
    hist.d_left.push(vec![0.0; q]);

    let rhs = |hist: &History, t: f64, x: &[f64], right: bool| -> Vec<f64> {
        let u = control.value(t, right);
        let mut dx = dense::matvec(plant.a(t).as_ref(), x);
        add(&mut dx, &dense::matvec(plant.b(t).as_ref(), &u));
        for d in &problem.delayed_state {
            let td = t - d.delay;
            let xd = if d.delay == 0.0 {
                x.to_vec()
            } else if td <= 0.0 {
                plant.history(td)
            } else {
                hist.at(td)
            };
            let m = plant.top(d.matrix.eval(t), q);
            add(&mut dx, &dense::matvec(m.as_ref(), &xd));
        }
        for d in &problem.delayed_input {
            let td = t - d.delay;
            let ud = if td < 0.0 || (td == 0.0 && !right) {
                problem.initial_control.eval_vec(td)
            } else {
                control.value(td, right)
            };
            let m = plant.top(d.matrix.eval(t), problem.r);
            add(&mut dx, &dense::matvec(m.as_ref(), &ud));
        }
        dx
    };

    for i in 0..n {
        let t = i as f64 * step;
        let x = hist.x[i].clone();
        let k1 = rhs(&hist, t, &x, true);
        let k2 = rhs(&hist, t + 0.5 * step, &axpy(&x, 0.5 * step, &k1), false);
        let k3 = rhs(&hist, t + 0.5 * step, &axpy(&x, 0.5 * step, &k2), false);
        let k4 = rhs(&hist, t + step, &axpy(&x, step, &k3), false);
        let next: Vec<f64> = (0..q).map(|c| x[c] + step / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])).collect();
        hist.d_right.push(k1);
        hist.x.push(next);
        let t1 = (i + 1) as f64 * step;
        if let Some((f, every)) = anchor {
            if (i + 1) % every == 0 && i + 1 < n {
                hist.x[i + 1] = f(t1)[..q].to_vec();
            }
        }
        let x1 = hist.x[i + 1].clone();
        let dl = rhs(&hist, t1, &x1, false);
        hist.d_left.push(dl);
    }

    let times: Vec<f64> = (0..=n).map(|i| if i == n { t_f } else { i as f64 * step }).collect();
    let controls: Vec<Vec<f64>> = times.iter().map(|&t| control.value(t, t == 0.0)).collect();
    let controls_right: Vec<Vec<f64>> = times.iter().map(|&t| control.value(t, true)).collect();
    let states = match &problem.lifting {
        None => hist.x,
        Some(l) => hist
            .x
            .iter()
            .zip(&controls)
            .enumerate()
            .map(|(i, (x, u))| {
                let mut z = dense::matvec(l.c.as_ref(), x);
                if i > 0 {
                    add(&mut z, &dense::matvec(l.d.as_ref(), u));
                }
                x.iter().copied().chain(z).collect()
            })
            .collect(),
    };
    Ok(Trajectory { times, states, controls, controls_right })
}

fn add(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(p, q)| p + a * q).collect()
}

fn quad(m: &Matrix, v: &[f64]) -> f64 {
    dense::dot(v, &dense::matvec(m.as_ref(), v))
}

/// `½ eᵀ(t_f) T e(t_f) + ½ ∫ (eᵀQe + uᵀRu) dt` by composite Simpson, `e = x − r`.
///
/// Panels use the control's right limit at their left end, so jumps on even
/// nodes are integrated exactly.
pub fn evaluate_cost(problem: &DelayedLqtProblem, traj: &Trajectory) -> Result<f64> {
    let n = traj.len();
    if n < 3 || n % 2 == 0 {
        return arg(format!("Simpson quadrature needs an odd sample count, got {n}"));
    }
    let err = |i: usize| -> Vec<f64> {
        let r = problem.reference.eval_vec(traj.times[i]);
        traj.states[i].iter().zip(&r).map(|(x, r)| x - r).collect()
    };
    let integrand = |i: usize, u: &[f64]| -> f64 {
        let t = traj.times[i];
        quad(&problem.q_weight, &err(i)) + quad(&problem.r_weight.eval(t), u)
    };
    let mut integral = 0.0;
    for j in (0..n - 1).step_by(2) {
        let h = traj.times[j + 2] - traj.times[j];
        let f0 = integrand(j, &traj.controls_right[j]);
        let f1 = integrand(j + 1, &traj.controls[j + 1]);
        let f2 = integrand(j + 2, &traj.controls[j + 2]);
        integral += h / 6.0 * (f0 + 4.0 * f1 + f2);
    }
    let terminal = quad(&problem.t_weight, &err(n - 1));
    Ok(0.5 * terminal + 0.5 * integral)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub state_sup: Vec<f64>,
    pub state_l2: Vec<f64>,
    pub control_sup: Vec<f64>,
    pub control_l2: Vec<f64>,
    /// Largest state error over the largest oracle state magnitude.
    pub relative_sup: f64,
    /// Largest jump of the reconstructed state across subinterval interfaces.
    pub interface_jump: f64,
}

impl ErrorReport {
    pub fn discontinuous(&self) -> bool {
        self.interface_jump > 1e-6
    }
}

/// Per-channel sup and L₂ errors of reconstructions against an oracle run.
pub fn compare(state: &PiecewisePoly, control: &PiecewisePoly, oracle: &Trajectory) -> ErrorReport {
    let n = oracle.len();
    let channel_errors = |rec: &dyn Fn(usize) -> Vec<f64>, reference: &[Vec<f64>]| {
        let dim = reference.first().map_or(0, |v| v.len());
        let mut sup = vec![0.0f64; dim];
        let mut l2 = vec![0.0f64; dim];
        let mut prev: Option<Vec<f64>> = None;
        for i in 0..n {
            let e: Vec<f64> = rec(i).iter().zip(&reference[i]).map(|(a, b)| a - b).collect();
            for c in 0..dim {
                sup[c] = sup[c].max(e[c].abs());
            }
            if let Some(p) = &prev {
                let h = oracle.times[i] - oracle.times[i - 1];
                for c in 0..dim {
                    l2[c] += 0.5 * h * (p[c] * p[c] + e[c] * e[c]);
                }
            }
            prev = Some(e);
        }
        (sup, l2.into_iter().map(f64::sqrt).collect::<Vec<_>>())
    };
    let (state_sup, state_l2) = channel_errors(&|i| state.eval(oracle.times[i]), &oracle.states);
    let (control_sup, control_l2) = channel_errors(&|i| control.eval(oracle.times[i]), &oracle.controls);
    let scale = oracle.states.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = state_sup.iter().fold(0.0f64, |m, v| m.max(*v));
    let relative_sup = if scale > 0.0 { worst / scale } else { worst };
    let mut interface_jump = 0.0f64;
    for n0 in 0..state.basis.subintervals().saturating_sub(1) {
        let t = state.basis.bounds(n0).1 * state.t_f;
        let left = state.eval(t);
        let right = state.eval_right(t);
        for (a, b) in left.iter().zip(&right) {
            interface_jump = interface_jump.max((a - b).abs());
        }
    }
    ErrorReport { state_sup, state_l2, control_sup, control_l2, relative_sup, interface_jump }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqt_model::{DelayTerm, MatrixFn};

    fn pure_delay() -> DelayedLqtProblem {
        let mut p = DelayedLqtProblem::new(1, 1, 1.0);
        p.delayed_state.push(DelayTerm { matrix: MatrixFn::new(1, 1, vec![(-1.0).into()]).unwrap(), delay: 1.0 });
        p.initial_state = MatrixFn::new(1, 1, vec![1.0.into()]).unwrap();
        p.x0 = vec![1.0];
        p
    }

    #[test]
    fn method_of_steps_linear_solution() {
        let p = pure_delay();
        let traj = integrate_dde(&p, &FnControl(|_| vec![0.0]), 1.0 / 64.0).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            assert!((x[0] - (1.0 - t)).abs() < 1e-10);
        }
    }

    #[test]
    fn anchoring_to_the_exact_solution_changes_nothing() {
        let p = pure_delay();
        let exact = |t: f64| vec![1.0 - t];
        let traj = integrate_dde_anchored(&p, &FnControl(|_| vec![0.0]), 1.0 / 64.0, &exact, 8).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            assert!((x[0] - (1.0 - t)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_dynamics_are_constant() {
        let mut p = DelayedLqtProblem::new(2, 1, 2.0);
        p.x0 = vec![0.3, -1.0];
        let traj = integrate_dde(&p, &FnControl(|_| vec![0.0]), 0.25).unwrap();
        assert!(traj.states.iter().all(|x| x == &p.x0));
    }

    #[test]
    fn misaligned_step_is_rejected() {
        let p = pure_delay();
        assert!(integrate_dde(&p, &FnControl(|_| vec![0.0]), 0.3).is_err());
    }

    #[test]
    fn zero_cost_and_even_count() {
        let p = DelayedLqtProblem::new(1, 1, 1.0);
        let traj = integrate_dde(&p, &FnControl(|_| vec![0.0]), 0.25).unwrap();
        assert_eq!(evaluate_cost(&p, &traj).unwrap(), 0.0);
        let traj = integrate_dde(&p, &FnControl(|_| vec![0.0]), 1.0 / 3.0).unwrap();
        assert!(evaluate_cost(&p, &traj).is_err());
    }
}
