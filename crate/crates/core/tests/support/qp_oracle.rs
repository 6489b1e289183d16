//! Brute-force active-set enumeration for tiny convex QPs.
//!
//! Every subset of inequality rows is treated as active, the resulting
//! equality QP is solved through its KKT matrix, and the best candidate that
//! is primal feasible with nonnegative multipliers wins.

use chebtrack::dense;
use chebtrack::qp_assembler::{QpMeta, QuadraticProgram};
use faer::linalg::solvers::Solve;
use faer::Mat;
use proptest::prelude::*;

pub struct Oracle {
    pub objective: f64,
}

pub fn brute_force(
    h: &Mat<f64>,
    a: &Mat<f64>,
    b: &[f64],
    g: &Mat<f64>,
    hv: &[f64],
) -> Option<Oracle> {
    let n = h.nrows();
    let mi = g.nrows();
    assert!(mi <= 12, "enumeration limited to 12 inequalities");
    let mut best: Option<Oracle> = None;
    for mask in 0u32..(1 << mi) {
        let active: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let rows = a.nrows() + active.len();
        if rows > n {
            continue;
        }
        let mut k = Mat::<f64>::zeros(n + rows, n + rows);
        let mut rhs = Mat::<f64>::zeros(n + rows, 1);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = h[(i, j)];
            }
        }
        let mut put = |row: usize, coeffs: &dyn Fn(usize) -> f64, value: f64| {
            for j in 0..n {
                k[(n + row, j)] = coeffs(j);
                k[(j, n + row)] = coeffs(j);
            }
            rhs[(n + row, 0)] = value;
        };
        for r in 0..a.nrows() {
            put(r, &|j| a[(r, j)], b[r]);
        }
        for (off, &r) in active.iter().enumerate() {
            put(a.nrows() + off, &|j| g[(r, j)], hv[r]);
        }
        let sol = k.full_piv_lu().solve(&rhs);
        let resid = &k * &sol - &rhs;
        let scale = 1.0 + rhs.norm_max();
        if !sol.norm_max().is_finite() || resid.norm_max() > 1e-9 * scale {
            continue;
        }
        let x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        // H x + Gᵀ μ = 0 on the active rows, so μ must be nonnegative
        let dual_ok = (0..active.len()).all(|off| sol[(n + a.nrows() + off, 0)] >= -1e-9);
        let primal_ok = (0..mi).all(|r| {
            let gx: f64 = (0..n).map(|j| g[(r, j)] * x[j]).sum();
            gx <= hv[r] + 1e-9
        });
        if !(dual_ok && primal_ok) {
            continue;
        }
        let hx: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[(i, j)] * x[j]).sum()).collect();
        let objective = 0.5 * x.iter().zip(&hx).map(|(a, b)| a * b).sum::<f64>();
        if best.as_ref().map_or(true, |o| objective < o.objective) {
            best = Some(Oracle { objective });
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub n: usize,
    pub meq: usize,
    pub min: usize,
    pub pool: Vec<f64>,
}

pub fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=20)
        .prop_flat_map(|n| (Just(n), 0..=n / 2, 0usize..=6))
        .prop_flat_map(|(n, meq, min)| {
            let len = n * n + (meq + min + 1) * n + min;
            (Just(n), Just(meq), Just(min), prop::collection::vec(-1.0..1.0f64, len))
        })
        .prop_map(|(n, meq, min, pool)| Instance { n, meq, min, pool })
}

/// Feasible QP with `H = LLᵀ + 0.1 I` and every row passing through or around a known point.
pub fn build(inst: &Instance) -> QuadraticProgram {
    let Instance { n, meq, min, ref pool } = *inst;
    let mut it = pool.iter().copied();
    let mut next = || it.next().unwrap();
    let l = Mat::from_fn(n, n, |_, _| next());
    let mut h = &l * l.transpose();
    for i in 0..n {
        h[(i, i)] += 0.1;
    }
    let a = Mat::from_fn(meq, n, |_, _| next());
    let g = Mat::from_fn(min, n, |_, _| next());
    let x0: Vec<f64> = (0..n).map(|_| 2.0 * next()).collect();
    let slack: Vec<f64> = (0..min).map(|_| 0.5 * (next() + 1.0)).collect();
    let b_eq = dense::matvec(a.as_ref(), &x0);
    // x0 is feasible; with |x0| up to 2 the origin usually is not, so rows bind
    let mut h_in = dense::matvec(g.as_ref(), &x0);
    h_in.iter_mut().zip(&slack).for_each(|(v, s)| *v += s);
    QuadraticProgram {
        h,
        a_eq: a,
        b_eq,
        g_in: g,
        h_in,
        meta: QpMeta {
            q: n,
            r: 0,
            s: 1,
            t_f: 1.0,
            dynamics_rows: meq,
            compat_rows: 0,
            point_rows: 0,
            inequality_rows: min,
        },
    }
}

