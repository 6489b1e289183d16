//! Operational matrices: integration, Gram, product, delay and endpoint.
//!
//! All of them are built from closed-form entries; quadrature is only used
//! by the tests that check them.

use std::f64::consts::{PI, SQRT_2};

use faer::Mat;

use crate::chebwave::{weight, CoeffVector, WaveletBasis};
use crate::dense::{self, Matrix};
use crate::error::{arg, Result};

fn diagonal_block(order: usize) -> Matrix {
    let mut l = Mat::zeros(order, order);
    l[(0, 0)] = 1.0;
    l[(0, 1)] = 1.0 / SQRT_2;
    l[(1, 0)] = -SQRT_2 / 4.0;
    if order > 2 {
        l[(1, 2)] = 0.25;
    }
    for m in 2..order {
        let mf = m as f64;
        let sign = if (m - 1) % 2 == 0 { 1.0 } else { -1.0 };
        l[(m, 0)] = sign * SQRT_2 / (mf * mf - 1.0);
        l[(m, m - 1)] = -1.0 / (2.0 * (mf - 1.0));
        if m + 1 < order {
            l[(m, m + 1)] = 1.0 / (2.0 * (mf + 1.0));
        }
    }
    l
}

fn coupling_block(order: usize) -> Matrix {
    let mut e = Mat::zeros(order, order);
    e[(0, 0)] = 2.0;
    for m in 2..order {
        let mf = m as f64;
        let even = if m % 2 == 0 { 2.0 } else { 0.0 };
        e[(m, 0)] = -even * SQRT_2 / (mf * mf - 1.0);
    }
    e
}

/// `P` with `∫₀ᵗ Ψ ≈ P Ψ(t)`.
pub fn integration_matrix(b: &WaveletBasis) -> Matrix {
    let mm = b.order();
    let n = b.subintervals();
    let scale = 1.0 / (1u64 << b.k()) as f64;
    let l = diagonal_block(mm);
    let e = coupling_block(mm);
    let mut p = Mat::zeros(b.dim(), b.dim());
    for bi in 0..n {
        for bj in bi..n {
            let blk = if bi == bj { &l } else { &e };
            for i in 0..mm {
                for j in 0..mm {
                    p[(bi * mm + i, bj * mm + j)] = scale * blk[(i, j)];
                }
            }
        }
    }
    p
}

/// One diagonal block of `C` before the `2/π` factor.
pub fn gram_block(order: usize) -> Matrix {
    Mat::from_fn(order, order, |i0, j0| {
        let (i, j) = (i0 as f64 + 1.0, j0 as f64 + 1.0);
        if (i0 + j0) % 2 == 1 {
            return 0.0;
        }
        let l = match (i0, j0) {
            (0, 0) => 1.0,
            (0, _) | (_, 0) => SQRT_2,
            _ => 2.0,
        };
        let num = 1.0 - (i - 1.0).powi(2) - (j - 1.0).powi(2);
        let den = ((i + j - 2.0).powi(2) - 1.0) * ((i - j).powi(2) - 1.0);
        l * num / den
    })
}

/// `C = ∫₀¹ Ψ Ψᵀ dt`.
pub fn gram_matrix(b: &WaveletBasis) -> Matrix {
    let mm = b.order();
    let blk = gram_block(mm);
    let mut c = Mat::zeros(b.dim(), b.dim());
    for n0 in 0..b.subintervals() {
        for i in 0..mm {
            for j in 0..mm {
                c[(n0 * mm + i, n0 * mm + j)] = 2.0 / PI * blk[(i, j)];
            }
        }
    }
    c
}

/// Nonzero `(a, b, c, w)` with `ψ_a ψ_b ≈ sqrt(2^k/π) Σ w ψ_c` inside one subinterval.
pub fn product_rule(order: usize) -> Vec<(usize, usize, usize, f64)> {
    let mut out = Vec::new();
    for a in 0..order {
        for bb in 0..order {
            let wab = weight(a) * weight(bb);
            for c in [a + bb, a.abs_diff(bb)] {
                if c < order {
                    out.push((a, bb, c, wab / (2.0 * weight(c))));
                }
            }
        }
    }
    out
}

/// Scalar product matrix `f̃` with `f Ψᵀ x ≈ Ψᵀ f̃ x`.
pub fn product_matrix(b: &WaveletBasis, f: &CoeffVector) -> Result<Matrix> {
    if f.channels != 1 {
        return arg(format!("product matrix needs one channel, got {}", f.channels));
    }
    let blocks: Vec<Matrix> = f.data.iter().map(|v| Mat::from_fn(1, 1, |_, _| *v)).collect();
    block_product_matrix(b, &blocks)
}

/// Matrix-valued product: `F(τ)(Ψᵀ ⊗ I_q) ≈ (Ψᵀ ⊗ I_p) F̃` from blocks `F_{nm}` (p×q).
pub fn block_product_matrix(b: &WaveletBasis, blocks: &[Matrix]) -> Result<Matrix> {
    if blocks.len() != b.dim() {
        return arg(format!("expected {} blocks, got {}", b.dim(), blocks.len()));
    }
    let (p, q) = (blocks[0].nrows(), blocks[0].ncols());
    if blocks.iter().any(|m| m.nrows() != p || m.ncols() != q) {
        return arg("product blocks have inconsistent shapes");
    }
    let mm = b.order();
    let amp = b.scale();
    let rule = product_rule(mm);
    let mut out = Mat::zeros(b.dim() * p, b.dim() * q);
    for n0 in 0..b.subintervals() {
        for &(a, bb, c, w) in &rule {
            let blk = &blocks[n0 * mm + a];
            let (r0, c0) = ((n0 * mm + c) * p, (n0 * mm + bb) * q);
            let f = amp * w;
            for j in 0..q {
                for i in 0..p {
                    out[(r0 + i, c0 + j)] += f * blk[(i, j)];
                }
            }
        }
    }
    Ok(out)
}

/// `D_v` with `Ψ(t − h_v) = D_v Ψ(t)` for `h_v = n_v / 2^(k−1)`.
pub fn delay_matrix(b: &WaveletBasis, shift: usize) -> Result<Matrix> {
    let n = b.subintervals();
    if shift > n {
        return arg(format!("delay shift {shift} exceeds {n} subintervals"));
    }
    let off = shift * b.order();
    let mut d = Mat::zeros(b.dim(), b.dim());
    for i in 0..(n - shift) * b.order() {
        d[(i, i + off)] = 1.0;
    }
    Ok(d)
}

/// `X (D_vᵀ ⊗ I_dim)`: shifts column blocks left by `shift` subintervals.
pub fn delay_shift_columns(x: &Matrix, b: &WaveletBasis, shift: usize, dim: usize) -> Matrix {
    let off = shift * b.order() * dim;
    let keep = x.ncols().saturating_sub(off);
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| if j < keep { x[(i, j + off)] } else { 0.0 })
}

/// `(D_vᵀ ⊗ I_dim) v`: moves coefficients `shift` subintervals later.
pub fn delay_transpose_apply(v: &[f64], b: &WaveletBasis, shift: usize, dim: usize) -> Vec<f64> {
    let off = shift * b.order() * dim;
    (0..v.len()).map(|j| if j >= off { v[j - off] } else { 0.0 }).collect()
}

/// `E₁ = Ψ(1) Ψ(1)ᵀ`.
pub fn endpoint_outer(b: &WaveletBasis) -> Matrix {
    let psi = b.vector_on(b.subintervals() - 1, 1.0);
    Mat::from_fn(b.dim(), b.dim(), |i, j| psi[i] * psi[j])
}

/// `m ⊗ I_dim`.
pub fn kron_lift(m: &Matrix, dim: usize) -> Matrix {
    dense::kron_identity(m.as_ref(), dim)
}
