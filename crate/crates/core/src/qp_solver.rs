//! Dense convex QP: `min ½ χᵀHχ  s.t.  Aχ = b,  Gχ ≤ h`.
//!
//! Equality-only problems go straight to a symmetric indefinite KKT solve.
//! With inequalities a Mehrotra predictor-corrector interior point method is
//! used. Both paths run sequentially and without randomness, so repeated
//! solves are bitwise identical.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::dense::{self, Matrix};
use crate::qp_assembler::QuadraticProgram;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relative pivot threshold for pruning dependent equality rows.
    pub rank_tol: f64,
    pub fraction_to_boundary: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, rank_tol: 1e-10, fraction_to_boundary: 0.995 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

/// Infinity norms of the four KKT residual blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub complementarity: f64,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub chi: Vec<f64>,
    pub lambda_eq: Vec<f64>,
    pub mu_in: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: KktResiduals,
    pub tikhonov_shift: f64,
    /// Equality rows dropped as linearly dependent.
    pub pruned_rows: Vec<usize>,
    /// Interior-point merit per iteration, starting with the initial point.
    pub merit_log: Vec<f64>,
}

/// Recomputes every residual from scratch.
pub fn kkt_residuals(qp: &QuadraticProgram, sol: &QpSolution) -> KktResiduals {
    let chi = &sol.chi;
    let mut grad = dense::matvec(qp.h.as_ref(), chi);
    if qp.a_eq.nrows() > 0 {
        add(&mut grad, &dense::matvec(qp.a_eq.transpose(), &sol.lambda_eq));
    }
    if qp.g_in.nrows() > 0 {
        add(&mut grad, &dense::matvec(qp.g_in.transpose(), &sol.mu_in));
    }
    let eq = residual(&qp.a_eq, chi, &qp.b_eq);
    let ineq = residual(&qp.g_in, chi, &qp.h_in);
    KktResiduals {
        stationarity: dense::norm_inf(&grad),
        primal_eq: dense::norm_inf(&eq),
        primal_ineq: ineq.iter().fold(0.0, |m, v| m.max(v.max(0.0))),
        complementarity: ineq.iter().zip(&sol.mu_in).fold(0.0, |m, (g, z)| m.max((g * z).abs())),
    }
}

fn add(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

/// `Mx − v`.
fn residual(m: &Matrix, x: &[f64], v: &[f64]) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut r = dense::matvec(m.as_ref(), x);
    r.iter_mut().zip(v).for_each(|(a, b)| *a -= b);
    r
}

/// Linearly independent equality rows, in ascending order.
pub fn independent_rows(a: &Matrix, rank_tol: f64) -> Vec<usize> {
    let m = a.nrows();
    if m == 0 {
        return Vec::new();
    }
    let at = a.transpose().to_owned();
    // blocked unpivoted QR settles the common full-rank case cheaply
    if m <= a.ncols() {
        let r = at.qr().thin_R().to_owned();
        let d: Vec<f64> = (0..m).map(|i| r[(i, i)].abs()).collect();
        let lead = d.iter().fold(0.0f64, |x, y| x.max(*y));
        if lead > 0.0 && d.iter().all(|v| *v > rank_tol * lead) {
            return (0..m).collect();
        }
    }
    let qr = at.col_piv_qr();
    let r = qr.thin_R();
    let diag = r.nrows().min(r.ncols());
    let lead = if diag > 0 { r[(0, 0)].abs() } else { 0.0 };
    if lead == 0.0 {
        return Vec::new();
    }
    let rank = (0..diag).take_while(|&i| r[(i, i)].abs() > rank_tol * lead).count();
    let (fwd, _) = qr.P().arrays();
    let mut keep: Vec<usize> = fwd[..rank].to_vec();
    keep.sort_unstable();
    keep
}

fn select_rows(a: &Matrix, rows: &[usize]) -> Matrix {
    Mat::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// LBLT factorization of `[[H + εI, Aᵀ], [A, 0]]`.
struct KktFactor {
    n: usize,
    k: Matrix,
    f: faer::linalg::solvers::Lblt<f64>,
}

impl KktFactor {
    fn new(h: &Matrix, a: &Matrix, shift: f64) -> Self {
        let (n, m) = (h.nrows(), a.nrows());
        let mut k = Mat::zeros(n + m, n + m);
        k.as_mut().submatrix_mut(0, 0, n, n).copy_from(h);
        for i in 0..n {
            k[(i, i)] += shift;
        }
        k.as_mut().submatrix_mut(n, 0, m, n).copy_from(a);
        k.as_mut().submatrix_mut(0, n, n, m).copy_from(a.transpose());
        let f = k.lblt(Side::Lower);
        Self { n, k, f }
    }

    /// Solves for `[x; y]` with two refinement sweeps; `None` when the result is unusable.
    fn solve(&self, c: &[f64], d: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let (n, m) = (self.n, d.len());
        let rhs = Mat::from_fn(n + m, 1, |i, _| if i < n { c[i] } else { d[i - n] });
        let mut z = self.f.solve(&rhs);
        for _ in 0..2 {
            let res = &rhs - &self.k * &z;
            z += self.f.solve(&res);
        }
        if (0..n + m).any(|i| !z[(i, 0)].is_finite()) {
            return None;
        }
        let res = &rhs - &self.k * &z;
        let scale = dense::max_abs(self.k.as_ref()) * dense::max_abs(z.as_ref()) + dense::max_abs(rhs.as_ref());
        if dense::max_abs(res.as_ref()) > 1e-9 * scale.max(1e-300) {
            return None;
        }
        Some(((0..n).map(|i| z[(i, 0)]).collect(), (0..m).map(|i| z[(n + i, 0)]).collect()))
    }
}

fn kkt_solve(h: &Matrix, a: &Matrix, shift: f64, c: &[f64], d: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    KktFactor::new(h, a, shift).solve(c, d)
}

fn converged(qp: &QuadraticProgram, sol: &QpSolution, tol: f64) -> bool {
    let r = &sol.residuals;
    let hx = dense::norm_inf(&dense::matvec(qp.h.as_ref(), &sol.chi));
    let grad_scale = 1.0 + hx.max(dense::max_abs(qp.h.as_ref()));
    r.stationarity <= tol * grad_scale
        && r.primal_eq <= tol * (1.0 + dense::norm_inf(&qp.b_eq))
        && r.primal_ineq <= tol * (1.0 + dense::norm_inf(&qp.h_in))
        && r.complementarity <= tol * (1.0 + sol.objective.abs())
}

fn expand_multipliers(kept: &[usize], y: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for (i, &row) in kept.iter().enumerate() {
        out[row] = y[i];
    }
    out
}

fn pruned(kept: &[usize], m: usize) -> Vec<usize> {
    (0..m).filter(|i| kept.binary_search(i).is_err()).collect()
}

pub fn solve_equality_qp(qp: &QuadraticProgram, opts: &SolverOptions) -> QpSolution {
    let n = qp.unknowns();
    let m = qp.a_eq.nrows();
    let kept = independent_rows(&qp.a_eq, opts.rank_tol);
    let a = select_rows(&qp.a_eq, &kept);
    let b: Vec<f64> = kept.iter().map(|&i| qp.b_eq[i]).collect();
    let zeros = vec![0.0; n];
    let mut result = None;
    for shift in [0.0, 1e-10, 1e-8, 1e-6] {
        if let Some(sol) = kkt_solve(&qp.h, &a, shift, &zeros, &b) {
            result = Some((sol, shift));
            break;
        }
    }
    let Some(((chi, y), shift)) = result else {
        return failed(qp, SolveStatus::NumericalFailure, pruned(&kept, m));
    };
    let mut sol = QpSolution {
        objective: qp.objective(&chi),
        chi,
        lambda_eq: expand_multipliers(&kept, &y, m),
        mu_in: vec![0.0; qp.g_in.nrows()],
        status: SolveStatus::Optimal,
        iterations: 1,
        residuals: KktResiduals::default(),
        tikhonov_shift: shift,
        pruned_rows: pruned(&kept, m),
        merit_log: Vec::new(),
    };
    sol.residuals = kkt_residuals(qp, &sol);
    if !converged(qp, &sol, opts.tol) {
        let consistent = sol.residuals.primal_eq <= opts.tol.sqrt() * (1.0 + dense::norm_inf(&qp.b_eq));
        sol.status = if consistent { SolveStatus::NumericalFailure } else { SolveStatus::Infeasible };
        if !sol.pruned_rows.is_empty() && !consistent {
            sol.status = SolveStatus::Infeasible;
        }
    }
    sol
}

fn failed(qp: &QuadraticProgram, status: SolveStatus, pruned_rows: Vec<usize>) -> QpSolution {
    let n = qp.unknowns();
    let mut sol = QpSolution {
        chi: vec![0.0; n],
        lambda_eq: vec![0.0; qp.a_eq.nrows()],
        mu_in: vec![0.0; qp.g_in.nrows()],
        objective: 0.0,
        status,
        iterations: 0,
        residuals: KktResiduals::default(),
        tikhonov_shift: 0.0,
        pruned_rows,
        merit_log: Vec::new(),
    };
    sol.residuals = kkt_residuals(qp, &sol);
    sol
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
}

struct Residuals {
    rd: Vec<f64>,
    rp: Vec<f64>,
    ri: Vec<f64>,
    mu: f64,
}

impl Residuals {
    fn merit(&self) -> f64 {
        dense::norm_inf(&self.rd) + dense::norm_inf(&self.rp) + dense::norm_inf(&self.ri) + self.mu
    }
}

fn ipm_residuals(h: &Matrix, a: &Matrix, b: &[f64], g: &Matrix, hv: &[f64], it: &Iterate) -> Residuals {
    let mut rd = dense::matvec(h.as_ref(), &it.x);
    if a.nrows() > 0 {
        add(&mut rd, &dense::matvec(a.transpose(), &it.y));
    }
    add(&mut rd, &dense::matvec(g.transpose(), &it.z));
    let rp = residual(a, &it.x, b);
    let mut ri = residual(g, &it.x, hv);
    add(&mut ri, &it.s);
    let mu = dense::dot(&it.s, &it.z) / it.s.len() as f64;
    Residuals { rd, rp, ri, mu }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).fold(1.0f64, |a, (x, d)| if *d < 0.0 { a.min(-x / d) } else { a })
}

fn axpy(v: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    v.iter().zip(d).map(|(x, y)| x + a * y).collect()
}

/// Interior point for problems with inequalities; equality-only input is delegated.
pub fn solve_convex_qp(qp: &QuadraticProgram, opts: &SolverOptions) -> QpSolution {
    if qp.g_in.nrows() == 0 {
        return solve_equality_qp(qp, opts);
    }
    let n = qp.unknowns();
    let m_eq = qp.a_eq.nrows();
    let m_in = qp.g_in.nrows();
    let kept = independent_rows(&qp.a_eq, opts.rank_tol);
    let a = select_rows(&qp.a_eq, &kept);
    let b: Vec<f64> = kept.iter().map(|&i| qp.b_eq[i]).collect();
    let g = &qp.g_in;
    let hv = &qp.h_in;

    let eye = Mat::<f64>::identity(n, n);
    let x0 = if a.nrows() > 0 {
        match kkt_solve(&eye, &a, 0.0, &vec![0.0; n], &b) {
            Some((x, _)) => x,
            None => return failed(qp, SolveStatus::NumericalFailure, pruned(&kept, m_eq)),
        }
    } else {
        vec![0.0; n]
    };
    let gx = dense::matvec(g.as_ref(), &x0);
    let s0: Vec<f64> = hv.iter().zip(&gx).map(|(h, v)| (h - v).max(1.0)).collect();
    let mut it = Iterate { x: x0, y: vec![0.0; a.nrows()], z: vec![1.0; m_in], s: s0 };

    let gt = g.transpose().to_owned();
    let mut res = ipm_residuals(&qp.h, &a, &b, g, hv, &it);
    let mut merit_log = vec![res.merit()];
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let z_cap = 1e12 * (1.0 + dense::max_abs(qp.h.as_ref()));

    for iter in 0..opts.max_iter {
        let trial = finish(qp, &kept, &it, status, iter, &merit_log);
        if converged(qp, &trial, opts.tol) {
            status = SolveStatus::Optimal;
            iterations = iter;
            break;
        }
        iterations = iter + 1;
        if dense::norm_inf(&it.z) > z_cap {
            status = SolveStatus::Infeasible;
            break;
        }
        let w: Vec<f64> = it.z.iter().zip(&it.s).map(|(z, s)| z / s).collect();
        let scaled_g = Mat::from_fn(m_in, n, |i, j| w[i] * g[(i, j)]);
        let kx = &qp.h + &gt * &scaled_g;
        let factor = KktFactor::new(&kx, &a, 0.0);
        let shifted = std::cell::OnceCell::new();
        let reduced = |c: &[f64], d: &[f64]| {
            factor.solve(c, d).or_else(|| shifted.get_or_init(|| KktFactor::new(&kx, &a, 1e-10)).solve(c, d))
        };
        // Newton step for residuals (rd, rp, ri, rc) after eliminating dz and ds
        let newton = |rd: &[f64], rp: &[f64], ri: &[f64], rc: &[f64]| -> Option<Direction> {
            let t: Vec<f64> = (0..m_in).map(|i| (it.z[i] * ri[i] - rc[i]) / it.s[i]).collect();
            let gt_t = dense::matvec(gt.as_ref(), &t);
            let c: Vec<f64> = (0..n).map(|i| -rd[i] - gt_t[i]).collect();
            let d: Vec<f64> = rp.iter().map(|v| -v).collect();
            let (dx, dy) = reduced(&c, &d)?;
            let gdx = dense::matvec(g.as_ref(), &dx);
            let dz = (0..m_in).map(|i| t[i] + w[i] * gdx[i]).collect();
            let ds = (0..m_in).map(|i| -ri[i] - gdx[i]).collect();
            Some(Direction { dx, dy, dz, ds })
        };
        // the reduced matrix is badly conditioned once z/s spreads out, so
        // refine against the full system
        let solve_dir = |rc: &[f64]| -> Option<Direction> {
            let mut d = newton(&res.rd, &res.rp, &res.ri, rc)?;
            for _ in 0..2 {
                let mut e1 = dense::matvec(qp.h.as_ref(), &d.dx);
                if a.nrows() > 0 {
                    add(&mut e1, &dense::matvec(a.transpose(), &d.dy));
                }
                add(&mut e1, &dense::matvec(gt.as_ref(), &d.dz));
                add(&mut e1, &res.rd);
                let mut e2 = residual(&a, &d.dx, &[]);
                add(&mut e2, &res.rp);
                let mut e3 = dense::matvec(g.as_ref(), &d.dx);
                add(&mut e3, &d.ds);
                add(&mut e3, &res.ri);
                let e4: Vec<f64> =
                    (0..m_in).map(|i| it.s[i] * d.dz[i] + it.z[i] * d.ds[i] + rc[i]).collect();
                let c = newton(&e1, &e2, &e3, &e4)?;
                add(&mut d.dx, &c.dx);
                add(&mut d.dy, &c.dy);
                add(&mut d.dz, &c.dz);
                add(&mut d.ds, &c.ds);
            }
            Some(d)
        };
        let rc_aff: Vec<f64> = it.s.iter().zip(&it.z).map(|(s, z)| s * z).collect();
        let Some(Direction { dz: dz_a, ds: ds_a, .. }) = solve_dir(&rc_aff) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let alpha_aff = max_step(&it.s, &ds_a).min(max_step(&it.z, &dz_a));
        let mu_aff = dense::dot(&axpy(&it.s, alpha_aff, &ds_a), &axpy(&it.z, alpha_aff, &dz_a)) / m_in as f64;
        let sigma = (mu_aff / res.mu).powi(3).min(1.0);
        let rc: Vec<f64> = (0..m_in)
            .map(|i| it.s[i] * it.z[i] + ds_a[i] * dz_a[i] - sigma * res.mu)
            .collect();
        let old = res.merit();
        // the first iterations may raise the merit while the start is far from feasible
        let free = iter < 3;
        let step = |d: Direction| -> Option<(Iterate, Residuals)> {
            let alpha_max = max_step(&it.s, &d.ds).min(max_step(&it.z, &d.dz));
            let mut alpha = (opts.fraction_to_boundary * alpha_max).min(1.0);
            for _ in 0..40 {
                let cand = Iterate {
                    x: axpy(&it.x, alpha, &d.dx),
                    y: axpy(&it.y, alpha, &d.dy),
                    z: axpy(&it.z, alpha, &d.dz),
                    s: axpy(&it.s, alpha, &d.ds),
                };
                let r = ipm_residuals(&qp.h, &a, &b, g, hv, &cand);
                if free || r.merit() <= old {
                    return Some((cand, r));
                }
                alpha *= 0.5;
            }
            None
        };
        let mut accepted = solve_dir(&rc).and_then(step);
        if accepted.is_none() {
            // the second-order term can turn the step uphill for the merit;
            // the plain centered Newton step always descends
            let rc: Vec<f64> = (0..m_in).map(|i| it.s[i] * it.z[i] - sigma.min(0.5) * res.mu).collect();
            accepted = solve_dir(&rc).and_then(step);
        }
        let Some((cand, r)) = accepted else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        it = cand;
        res = r;
        merit_log.push(res.merit());
    }
    finish(qp, &kept, &it, status, iterations, &merit_log)
}

fn finish(
    qp: &QuadraticProgram,
    kept: &[usize],
    it: &Iterate,
    status: SolveStatus,
    iterations: usize,
    merit_log: &[f64],
) -> QpSolution {
    let m = qp.a_eq.nrows();
    let mut sol = QpSolution {
        objective: qp.objective(&it.x),
        chi: it.x.clone(),
        lambda_eq: expand_multipliers(kept, &it.y, m),
        mu_in: it.z.clone(),
        status,
        iterations,
        residuals: KktResiduals::default(),
        tikhonov_shift: 0.0,
        pruned_rows: pruned(kept, m),
        merit_log: merit_log.to_vec(),
    };
    sol.residuals = kkt_residuals(qp, &sol);
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp_assembler::QpMeta;

    fn qp(h: Matrix, a: Matrix, b: Vec<f64>, g: Matrix, hv: Vec<f64>) -> QuadraticProgram {
        let n = h.nrows();
        QuadraticProgram {
            h,
            a_eq: a,
            b_eq: b,
            g_in: g,
            h_in: hv,
            meta: QpMeta {
                q: n,
                r: 0,
                s: 1,
                t_f: 1.0,
                dynamics_rows: 0,
                compat_rows: 0,
                point_rows: 0,
                inequality_rows: 0,
            },
        }
    }

    #[test]
    fn hand_solvable_equality() {
        let a = dense::from_rows(&[vec![1.0, 0.0, 0.0, 0.0]]);
        let p = qp(Mat::identity(4, 4), a, vec![1.0], Mat::zeros(0, 4), vec![]);
        let s = solve_equality_qp(&p, &SolverOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.chi[0] - 1.0).abs() < 1e-12);
        assert!(s.chi[1..].iter().all(|v| v.abs() < 1e-12));
        assert!((s.lambda_eq[0] + 1.0).abs() < 1e-12);
        let r = kkt_residuals(&p, &s);
        assert_eq!(r, s.residuals);
    }

    #[test]
    fn bound_constraint() {
        let h = dense::from_rows(&[vec![1.0]]);
        let g = dense::from_rows(&[vec![-1.0]]);
        let p = qp(h.clone(), Mat::zeros(0, 1), vec![], g, vec![-1.0]);
        let s = solve_convex_qp(&p, &SolverOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.chi[0] - 1.0).abs() < 1e-7);
        assert!((s.mu_in[0] - 1.0).abs() < 1e-6);

        let g2 = dense::from_rows(&[vec![-1.0], vec![-1.0]]);
        let p2 = qp(h, Mat::zeros(0, 1), vec![], g2, vec![-1.0, 10.0]);
        let s2 = solve_convex_qp(&p2, &SolverOptions::default());
        assert!((s2.chi[0] - 1.0).abs() < 1e-7);
        assert!(s2.mu_in[1].abs() < 1e-6);
    }

    #[test]
    fn duplicate_rows_are_pruned() {
        let a = dense::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let p = qp(Mat::identity(3, 3), a, vec![1.0, 2.0, 3.0], Mat::zeros(0, 3), vec![]);
        let s = solve_equality_qp(&p, &SolverOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.pruned_rows.len(), 1);
        assert!((s.chi[0] - 0.5).abs() < 1e-12 && (s.chi[2] - 3.0).abs() < 1e-12);

        let a = dense::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]);
        let p = qp(Mat::identity(3, 3), a, vec![1.0, 5.0], Mat::zeros(0, 3), vec![]);
        let s = solve_equality_qp(&p, &SolverOptions::default());
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn zero_problem_has_zero_residuals() {
        let p = qp(Mat::zeros(2, 2), Mat::zeros(0, 2), vec![], Mat::zeros(0, 2), vec![]);
        let s = failed(&p, SolveStatus::Optimal, vec![]);
        assert_eq!(kkt_residuals(&p, &s), KktResiduals::default());
    }
}
