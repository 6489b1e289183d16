//! Quadratic program over `χ = [X̄; U]`.
//!
//! `X̄` holds the coefficients of the tracking error `x − r` and `U` those of
//! the control. Equality rows are stacked as dynamics, then interface
//! continuity, then point and terminal constraints.

use faer::{Mat, Side};

use crate::chebwave::{CoeffVector, WaveletBasis};
use crate::dense::{self, Matrix};
use crate::error::{arg, Error, Result};
use crate::lqt_model::{ConstraintSet, ControlWeight, ProblemExpansion};
use crate::opmat;

#[derive(Clone, Debug, PartialEq)]
pub struct QpMeta {
    pub q: usize,
    pub r: usize,
    pub s: usize,
    pub t_f: f64,
    pub dynamics_rows: usize,
    pub compat_rows: usize,
    pub point_rows: usize,
    pub inequality_rows: usize,
}

#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    pub h: Matrix,
    pub a_eq: Matrix,
    pub b_eq: Vec<f64>,
    pub g_in: Matrix,
    pub h_in: Vec<f64>,
    pub meta: QpMeta,
}

impl QuadraticProgram {
    pub fn unknowns(&self) -> usize {
        self.h.nrows()
    }

    /// `½ χᵀ H χ`.
    pub fn objective(&self, chi: &[f64]) -> f64 {
        0.5 * dense::dot(chi, &dense::matvec(self.h.as_ref(), chi))
    }
}

/// Times and sides at which a window inequality is enforced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    /// Normalized time.
    pub tau: f64,
    /// Zero-based subinterval used for evaluation.
    pub subinterval: usize,
}

pub fn assemble_hessian(e: &ProblemExpansion) -> Result<Matrix> {
    let b = &e.basis;
    let (q, r, s) = (e.q, e.r, b.dim());
    let c = opmat::gram_matrix(b);
    let e1 = opmat::endpoint_outer(b);
    let mut h = Mat::zeros((q + r) * s, (q + r) * s);
    let hx = dense::kron(c.as_ref(), e.q_weight.as_ref()) * e.t_f + dense::kron(e1.as_ref(), e.t_weight.as_ref());
    h.as_mut().submatrix_mut(0, 0, q * s, q * s).copy_from(&hx);
    let hu = match &e.r_weight {
        ControlWeight::Constant(rw) => dense::kron(c.as_ref(), rw.as_ref()) * e.t_f,
        ControlWeight::Varying(rt) => {
            let cr = dense::kron_apply(c.as_ref(), r, rt.as_ref());
            (&cr + cr.transpose()) * (0.5 * e.t_f)
        }
    };
    h.as_mut().submatrix_mut(q * s, q * s, r * s, r * s).copy_from(&hu);
    dense::symmetrize(&mut h);
    check_block_psd(&h, b, q, r)?;
    Ok(h)
}

/// `H` is block diagonal per subinterval, so definiteness is checked blockwise.
fn check_block_psd(h: &Matrix, b: &WaveletBasis, q: usize, r: usize) -> Result<()> {
    let scale = dense::max_abs(h.as_ref()).max(1.0);
    let mm = b.order();
    let s = b.dim();
    for n0 in 0..b.subintervals() {
        for (off, dim) in [(n0 * mm * q, mm * q), (q * s + n0 * mm * r, mm * r)] {
            let blk = h.as_ref().submatrix(off, off, dim, dim).to_owned();
            let eig = blk
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| Error::Assembly(format!("eigenvalue failure {e:?}")))?;
            if let Some(&min) = eig.first() {
                if min < -1e-8 * scale {
                    return Err(Error::Assembly(format!(
                        "Hessian is not positive semidefinite (eigenvalue {min:e})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Dynamics rows `[Λ₁₁ | Λ₁₂]` and right-hand side.
pub fn assemble_dynamics(e: &ProblemExpansion) -> Result<(Matrix, Vec<f64>)> {
    let b = &e.basis;
    let (q, r, s) = (e.q, e.r, b.dim());
    if e.a.nrows() != q * s || e.b.ncols() != r * s || e.gamma.channels != q {
        return Err(Error::Assembly("expansion dimensions are inconsistent".into()));
    }
    let pt = opmat::integration_matrix(b).transpose().to_owned();
    let mut asum = e.a.clone();
    for (shift, am) in &e.a_delayed {
        asum += opmat::delay_shift_columns(am, b, *shift, q);
    }
    let mut bsum = e.b.clone();
    for (shift, bm) in &e.b_delayed {
        bsum += opmat::delay_shift_columns(bm, b, *shift, r);
    }
    let mut l11 = dense::kron_apply(pt.as_ref(), q, asum.as_ref()) * e.t_f;
    for i in 0..q * s {
        l11[(i, i)] -= 1.0;
    }
    let l12 = dense::kron_apply(pt.as_ref(), q, bsum.as_ref()) * e.t_f;

    let gamma = &e.gamma.data;
    let mut v = dense::matvec(e.a.as_ref(), gamma);
    for ((shift, am), f) in e.a_delayed.iter().zip(&e.f_terms) {
        let shifted = opmat::delay_transpose_apply(gamma, b, *shift, q);
        let w: Vec<f64> = shifted.iter().zip(&f.data).map(|(x, y)| x + y).collect();
        add_into(&mut v, &dense::matvec(am.as_ref(), &w));
    }
    for ((_, bm), g) in e.b_delayed.iter().zip(&e.g_terms) {
        add_into(&mut v, &dense::matvec(bm.as_ref(), &g.data));
    }
    let pv = dense::kron_apply_vec(pt.as_ref(), q, &v);
    let rhs: Vec<f64> = (0..q * s).map(|i| gamma[i] - e.x0.data[i] - e.t_f * pv[i]).collect();

    let mut rows = Mat::zeros(q * s, (q + r) * s);
    rows.as_mut().submatrix_mut(0, 0, q * s, q * s).copy_from(&l11);
    rows.as_mut().submatrix_mut(0, q * s, q * s, r * s).copy_from(&l12);
    Ok((rows, rhs))
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

/// Adds `I_s ⊗ B_u` to the control columns of the dynamics rows.
pub fn apply_control_derivative_adjustment(
    rows: &mut Matrix,
    b_u: &Matrix,
    basis: &WaveletBasis,
) -> Result<()> {
    let (q, r, s) = (b_u.nrows(), b_u.ncols(), basis.dim());
    if rows.nrows() < q * s || rows.ncols() != (q + r) * s {
        return Err(Error::Assembly("control derivative matrix does not fit the dynamics rows".into()));
    }
    for blk in 0..s {
        for i in 0..q {
            for j in 0..r {
                rows[(blk * q + i, q * s + blk * r + j)] += b_u[(i, j)];
            }
        }
    }
    Ok(())
}

/// Continuity rows `x̄(τ_ι⁻) = x̄(τ_ι⁺)` at every interface, over the `X̄` columns only.
pub fn assemble_compatibility(b: &WaveletBasis, q: usize) -> Matrix {
    let n = b.subintervals();
    let mm = b.order();
    let mut out = Mat::zeros((n - 1) * q, b.dim() * q);
    for iota in 1..n {
        let t = iota as f64 / n as f64;
        let left = b.local_values(iota - 1, t);
        let right = b.local_values(iota, t);
        for ch in 0..q {
            let row = (iota - 1) * q + ch;
            for m in 0..mm {
                out[(row, ((iota - 1) * mm + m) * q + ch)] = left[m];
                out[(row, (iota * mm + m) * q + ch)] = -right[m];
            }
        }
    }
    out
}

/// Row over `χ` for `cx · x(τ) + cu · u(τ)` evaluated on subinterval `n0`.
fn point_row(b: &WaveletBasis, n0: usize, tau: f64, cx: &[f64], cu: &[f64]) -> Vec<f64> {
    let (q, r, s) = (cx.len(), cu.len(), b.dim());
    let psi = b.local_values(n0, tau);
    let mut row = vec![0.0; (q + r) * s];
    for (m, p) in psi.iter().enumerate() {
        let j = n0 * b.order() + m;
        for i in 0..q {
            row[j * q + i] = p * cx[i];
        }
        for i in 0..r {
            row[q * s + j * r + i] = p * cu[i];
        }
    }
    row
}

fn reference_on(gamma: &CoeffVector, n0: usize, tau: f64) -> Vec<f64> {
    gamma.reconstruct_on(n0, tau)
}

/// Point and terminal equalities in shifted coordinates.
pub fn assemble_point_constraints(
    b: &WaveletBasis,
    constraints: &ConstraintSet,
    e: &ProblemExpansion,
) -> Result<(Matrix, Vec<f64>)> {
    let (q, r) = (e.q, e.r);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for p in &constraints.point_equalities {
        let tau = p.time / e.t_f;
        if !(-1e-12..=1.0 + 1e-12).contains(&tau) {
            return arg(format!("point constraint time {} outside [0, t_f]", p.time));
        }
        let tau = tau.clamp(0.0, 1.0);
        let n0 = b.subinterval_of(tau);
        rows.push(point_row(b, n0, tau, &p.state, &p.control));
        rhs.push(p.value - dense::dot(&p.state, &reference_on(&e.gamma, n0, tau)));
    }
    for p in &constraints.terminal_equalities {
        let n0 = b.subintervals() - 1;
        rows.push(point_row(b, n0, 1.0, &p.state, &vec![0.0; r]));
        rhs.push(p.value - dense::dot(&p.state, &reference_on(&e.gamma, n0, 1.0)));
    }
    let m = dense::from_rows(&rows);
    let m = if rows.is_empty() { Mat::zeros(0, (q + r) * b.dim()) } else { m };
    Ok((m, rhs))
}

/// Enforcement points of a window `[ta, tb]` in normalized time.
///
/// The start point takes the right-hand subinterval and the end point the
/// left-hand one, so both stay inside the window at interfaces.
pub fn window_samples(b: &WaveletBasis, ta: f64, tb: f64, per_subinterval: usize) -> Vec<Sample> {
    let mut out = vec![Sample { tau: ta, subinterval: b.subinterval_right_of(ta) }];
    for n0 in 0..b.subintervals() {
        let (lo, hi) = b.bounds(n0);
        if hi <= ta || lo >= tb {
            continue;
        }
        for tau in b.chebyshev_gauss_points(n0, per_subinterval) {
            if tau > ta && tau < tb {
                out.push(Sample { tau, subinterval: n0 });
            }
        }
    }
    out.push(Sample { tau: tb, subinterval: b.subinterval_of(tb) });
    out
}

pub fn assemble_inequalities(
    b: &WaveletBasis,
    constraints: &ConstraintSet,
    e: &ProblemExpansion,
    samples_per_subinterval: usize,
) -> Result<(Matrix, Vec<f64>)> {
    let (q, r) = (e.q, e.r);
    if samples_per_subinterval == 0 && !constraints.window_inequalities.is_empty() {
        return arg("inequality sampling needs at least one point per subinterval");
    }
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for w in &constraints.window_inequalities {
        let (ta, tb) = (w.start / e.t_f, w.end / e.t_f);
        for smp in window_samples(b, ta, tb, samples_per_subinterval) {
            let t = smp.tau * e.t_f;
            let cx = w.state.eval_vec(t);
            let cu = w.control.eval_vec(t);
            let bound = w.bound.eval(t);
            if !bound.is_finite() || cx.iter().chain(&cu).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t, value: bound });
            }
            rows.push(point_row(b, smp.subinterval, smp.tau, &cx, &cu));
            rhs.push(bound - dense::dot(&cx, &reference_on(&e.gamma, smp.subinterval, smp.tau)));
        }
    }
    let m = if rows.is_empty() { Mat::zeros(0, (q + r) * b.dim()) } else { dense::from_rows(&rows) };
    Ok((m, rhs))
}

/// Full program for an expanded problem.
pub fn assemble_qp(
    e: &ProblemExpansion,
    constraints: &ConstraintSet,
    compat_continuity: bool,
    samples_per_subinterval: usize,
) -> Result<QuadraticProgram> {
    let b = e.basis;
    let (q, r, s) = (e.q, e.r, b.dim());
    let n = (q + r) * s;
    let h = assemble_hessian(e)?;
    let (mut dyn_rows, dyn_rhs) = assemble_dynamics(e)?;
    if let Some(bu) = &e.control_derivative {
        apply_control_derivative_adjustment(&mut dyn_rows, bu, &b)?;
    }
    let compat = if compat_continuity && b.subintervals() > 1 {
        let c = assemble_compatibility(&b, q);
        let mut padded = Mat::zeros(c.nrows(), n);
        padded.as_mut().submatrix_mut(0, 0, c.nrows(), q * s).copy_from(&c);
        padded
    } else {
        Mat::zeros(0, n)
    };
    let (pt_rows, pt_rhs) = assemble_point_constraints(&b, constraints, e)?;
    let a_eq = dense::vstack(&[dyn_rows.as_ref(), compat.as_ref(), pt_rows.as_ref()], n);
    let mut b_eq = dyn_rhs;
    b_eq.extend(std::iter::repeat(0.0).take(compat.nrows()));
    b_eq.extend(pt_rhs);
    let (g_in, h_in) = assemble_inequalities(&b, constraints, e, samples_per_subinterval)?;
    let meta = QpMeta {
        q,
        r,
        s,
        t_f: e.t_f,
        dynamics_rows: q * s,
        compat_rows: compat.nrows(),
        point_rows: pt_rows.nrows(),
        inequality_rows: g_in.nrows(),
    };
    Ok(QuadraticProgram { h, a_eq, b_eq, g_in, h_in, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn compatibility_row_small_case() {
        let b = WaveletBasis::new(2, 5).unwrap();
        let c = assemble_compatibility(&b, 1);
        assert_eq!(c.nrows(), 1);
        let a = 2.0 / PI.sqrt();
        let s = 2.0 * SQRT_2 / PI.sqrt();
        let want = [a, s, s, s, s, -a, s, -s, s, -s];
        for j in 0..10 {
            assert!((c[(0, j)] - want[j]).abs() < 1e-14, "{j}");
        }
    }

    #[test]
    fn window_samples_cover_endpoints() {
        let b = WaveletBasis::new(3, 4).unwrap();
        let s = window_samples(&b, 0.25, 0.75, 4);
        assert_eq!(s.len(), 2 + 8);
        assert_eq!(s[0].subinterval, 1);
        assert_eq!(s.last().unwrap().subinterval, 2);
        assert!(s.windows(2).all(|w| w[0].tau <= w[1].tau));
    }
}
