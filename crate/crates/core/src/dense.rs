//! Small dense helpers on top of `faer`.

use faer::{Col, Mat, MatRef};

pub type Matrix = Mat<f64>;

/// `a ⊗ I_dim`.
pub fn kron_identity(a: MatRef<'_, f64>, dim: usize) -> Matrix {
    let mut out = Mat::zeros(a.nrows() * dim, a.ncols() * dim);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v != 0.0 {
                for c in 0..dim {
                    out[(i * dim + c, j * dim + c)] = v;
                }
            }
        }
    }
    out
}

/// `a ⊗ b`.
pub fn kron(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Matrix {
    let (p, q) = (b.nrows(), b.ncols());
    let mut out = Mat::zeros(a.nrows() * p, a.ncols() * q);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let v = a[(i, j)];
            if v == 0.0 {
                continue;
            }
            for bj in 0..q {
                for bi in 0..p {
                    out[(i * p + bi, j * q + bj)] = v * b[(bi, bj)];
                }
            }
        }
    }
    out
}

/// `(a ⊗ I_dim) x` without forming the Kronecker product.
pub fn kron_apply(a: MatRef<'_, f64>, dim: usize, x: MatRef<'_, f64>) -> Matrix {
    let s = a.ncols();
    assert_eq!(x.nrows(), s * dim, "kron_apply row mismatch");
    let cols = x.ncols();
    let folded = Mat::from_fn(s, dim * cols, |l, cj| x[(l * dim + cj % dim, cj / dim)]);
    let prod = a * &folded;
    Mat::from_fn(a.nrows() * dim, cols, |r, j| prod[(r / dim, r % dim + dim * j)])
}

/// `(a ⊗ I_dim) v` for a vector.
pub fn kron_apply_vec(a: MatRef<'_, f64>, dim: usize, v: &[f64]) -> Vec<f64> {
    let x = Mat::from_fn(v.len(), 1, |i, _| v[i]);
    column(kron_apply(a, dim, x.as_ref()).as_ref(), 0)
}

pub fn matvec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), v.len(), "matvec dimension mismatch");
    let x = Col::from_fn(v.len(), |i| v[i]);
    let y = a * &x;
    (0..y.nrows()).map(|i| y[i]).collect()
}

pub fn column(a: MatRef<'_, f64>, j: usize) -> Vec<f64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

pub fn from_rows(rows: &[Vec<f64>]) -> Matrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

/// Stack matrices with equal column counts.
pub fn vstack(parts: &[MatRef<'_, f64>], ncols: usize) -> Matrix {
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Mat::zeros(rows, ncols);
    let mut r0 = 0;
    for p in parts {
        assert_eq!(p.ncols(), ncols, "vstack column mismatch");
        out.as_mut().submatrix_mut(r0, 0, p.nrows(), ncols).copy_from(p);
        r0 += p.nrows();
    }
    out
}

pub fn symmetrize(a: &mut Matrix) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}
