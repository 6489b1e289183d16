use std::f64::consts::PI;

use chebtrack::chebwave::GaussLegendre;
use chebtrack::dense;
use chebtrack::opmat;
use chebtrack::WaveletBasis;
use proptest::prelude::*;

fn basis_strategy() -> impl Strategy<Value = WaveletBasis> {
    (2u32..=4, 3usize..=8).prop_map(|(k, m)| WaveletBasis::new(k, m).unwrap())
}

fn interior_times(b: &WaveletBasis, per: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for n0 in 0..b.subintervals() {
        let (a, c) = b.bounds(n0);
        out.extend((0..per).map(|i| a + (c - a) * (i as f64 + 0.5) / per as f64));
    }
    out
}

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * t + v)
}

#[test]
fn weighted_orthonormality() {
    let b = WaveletBasis::new(3, 6).unwrap();
    // Gauss–Chebyshev with 16 nodes integrates the products exactly
    let nodes = 16;
    for n0 in 0..b.subintervals() {
        let mut gram = vec![vec![0.0; b.order()]; b.order()];
        for j in 0..nodes {
            let x = ((2 * j + 1) as f64 * PI / (2 * nodes) as f64).cos();
            let t = (x + (2 * n0 + 1) as f64) / 8.0;
            let v = b.local_values(n0, t);
            for i in 0..b.order() {
                for l in 0..b.order() {
                    gram[i][l] += v[i] * v[l] * PI / nodes as f64 / 8.0;
                }
            }
        }
        for i in 0..b.order() {
            for l in 0..b.order() {
                let want = if i == l { 1.0 } else { 0.0 };
                assert!((gram[i][l] - want).abs() < 1e-8, "n0 {n0} ({i},{l}) = {}", gram[i][l]);
            }
        }
    }
}

#[test]
fn compact_support() {
    let b = WaveletBasis::new(3, 6).unwrap();
    for i in 0..=400 {
        let t = i as f64 / 400.0;
        let n0 = b.subinterval_of(t);
        let v = b.eval_vector(t).unwrap();
        for (j, x) in v.iter().enumerate() {
            if j / b.order() != n0 {
                assert_eq!(*x, 0.0);
            }
        }
    }
}

#[test]
fn integration_matrix_against_quadrature() {
    // the last column drops a T_8 term of size sqrt(2)/(16 sqrt(pi 2^k)),
    // which first falls under 5e-3 at k = 7
    for k in [2u32, 3, 7] {
        let b = WaveletBasis::new(k, 8).unwrap();
        let p = opmat::integration_matrix(&b);
        let gl = GaussLegendre::new(16);
        for idx in 0..b.dim() {
            let (n0, m) = (idx / b.order(), idx % b.order());
            let (a, c) = b.bounds(n0);
            let mut worst: f64 = 0.0;
            for i in 0..200 {
                let t = (i as f64 + 0.5) / 200.0;
                let exact = if t <= a {
                    0.0
                } else {
                    gl.integrate(a, t.min(c), |s| b.local_values(n0, s)[m])
                };
                let psi = b.eval_vector(t).unwrap();
                let approx: f64 = (0..b.dim()).map(|j| p[(idx, j)] * psi[j]).sum();
                worst = worst.max((exact - approx).abs());
            }
            if k == 7 {
                assert!(worst <= 5e-3, "k {k} column {idx}: {worst}");
            }
            if m + 1 < b.order() {
                assert!(worst <= 1e-9, "k {k} column {idx} should be exact: {worst}");
            }
        }
    }
}

#[test]
fn gram_matrix_against_quadrature() {
    for (k, mm) in [(2u32, 5usize), (3, 8), (4, 6)] {
        let b = WaveletBasis::new(k, mm).unwrap();
        let c = opmat::gram_matrix(&b);
        let gl = GaussLegendre::new(2 * mm);
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                let (ni, nj) = (i / mm, j / mm);
                let want = if ni != nj {
                    0.0
                } else {
                    let (a, e) = b.bounds(ni);
                    gl.integrate(a, e, |t| {
                        let v = b.local_values(ni, t);
                        v[i % mm] * v[j % mm]
                    })
                };
                assert!((c[(i, j)] - want).abs() <= 1e-10, "({i},{j}): {} vs {want}", c[(i, j)]);
            }
        }
    }
}

#[test]
fn delay_composition() {
    let b = WaveletBasis::new(4, 5).unwrap();
    let n = b.subintervals();
    for v in 0..=n {
        for w in 0..=(n - v) {
            let dv = opmat::delay_matrix(&b, v).unwrap();
            let dw = opmat::delay_matrix(&b, w).unwrap();
            let dvw = opmat::delay_matrix(&b, v + w).unwrap();
            assert_eq!(dense::max_abs((&dv * &dw - &dvw).as_ref()), 0.0, "v {v} w {w}");
        }
    }
}

#[test]
fn delay_exact_on_basis() {
    let b = WaveletBasis::new(3, 6).unwrap();
    let width = b.width();
    for shift in 0..=b.subintervals() {
        let d = opmat::delay_matrix(&b, shift).unwrap();
        let h = shift as f64 * width;
        for t in interior_times(&b, 7) {
            let psi = b.eval_vector(t).unwrap();
            let got = dense::matvec(d.as_ref(), &psi);
            let want = if t - h < 0.0 { vec![0.0; b.dim()] } else { b.eval_vector(t - h).unwrap() };
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "shift {shift} t {t}");
            }
        }
    }
}

#[test]
fn endpoint_quadratic_form() {
    let b = WaveletBasis::new(3, 8).unwrap();
    let f = |t: f64| (1.3 * t).exp() * (2.0 * t).cos();
    let c = b.expand_scalar(&f).unwrap();
    let e1 = opmat::endpoint_outer(&b);
    let q = dense::dot(&c.data, &dense::matvec(e1.as_ref(), &c.data));
    assert!((q - f(1.0).powi(2)).abs() < 1e-8, "{q}");
}

#[test]
fn decay_bounds_for_sine() {
    let b = WaveletBasis::new(4, 8).unwrap();
    let c = b.expand_scalar(&|t| (2.0 * PI * t).sin()).unwrap();
    let bounds = b.coefficient_decay_bounds(1.0, 2.0 * PI, 4.0 * PI * PI);
    for (v, bound) in c.data.iter().zip(&bounds) {
        assert!(v.abs() <= *bound + 1e-14, "{v} > {bound}");
    }
    let zero = b.coefficient_decay_bounds(0.0, 0.0, 0.0);
    assert!(zero.iter().all(|v| *v == 0.0));
    let b2 = WaveletBasis::new(2, 5).unwrap();
    let lin = b2.coefficient_decay_bounds(0.0, 1.0, 0.0);
    assert!((lin[1] - (PI / 32.0).sqrt()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn polynomial_round_trip(b in basis_strategy(), coeffs in prop::collection::vec(-2.0..2.0f64, 8)) {
        let deg = b.order() - 1;
        let c = &coeffs[..=deg];
        let e = b.expand_scalar(&|t| poly(c, t)).unwrap();
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let got = e.reconstruct(t)[0];
            prop_assert!((got - poly(c, t)).abs() <= 1e-9, "t {} got {} want {}", t, got, poly(c, t));
        }
    }

    #[test]
    fn piecewise_poly_matches_wavelet_form(
        b in basis_strategy(),
        data in prop::collection::vec(-1.0..1.0f64, 2 * 8 * 8),
        t_f in 0.5..20.0f64,
    ) {
        let coeffs = chebtrack::CoeffVector::from_data(b, 2, data[..2 * b.dim()].to_vec()).unwrap();
        let pp = coeffs.to_piecewise_poly(t_f);
        for i in 0..100 {
            let tau = (i as f64 + 0.37) / 100.0;
            let want = coeffs.reconstruct(tau);
            let got = pp.eval(tau * t_f);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-10 * (1.0 + w.abs()), "tau {} {} vs {}", tau, g, w);
            }
        }
    }

    #[test]
    fn product_matrix_pointwise(
        b in basis_strategy(),
        split in 0usize..8,
        fc in prop::collection::vec(-1.0..1.0f64, 8),
        gc in prop::collection::vec(-1.0..1.0f64, 8),
    ) {
        let top = b.order() - 1;
        let df = split.min(top);
        let dg = top - df;
        let (fp, gp) = (&fc[..=df], &gc[..=dg]);
        let f = b.expand_scalar(&|t| poly(fp, t)).unwrap();
        let g = b.expand_scalar(&|t| poly(gp, t)).unwrap();
        let ft = opmat::product_matrix(&b, &f).unwrap();
        let prod = dense::matvec(ft.as_ref(), &g.data);
        for t in interior_times(&b, 10) {
            let psi = b.eval_vector(t).unwrap();
            let got = dense::dot(&psi, &prod);
            let want = poly(fp, t) * poly(gp, t);
            prop_assert!((got - want).abs() <= 1e-8, "t {} got {} want {}", t, got, want);
        }
    }

    #[test]
    fn decay_bounds_hold(
        k in 2u32..=5,
        mm in 3usize..=10,
        amp in -3.0..3.0f64,
        omega in 0.1..12.0f64,
        phase in 0.0..6.3f64,
    ) {
        let b = WaveletBasis::new(k, mm).unwrap();
        let c = b.expand_scalar(&|t| amp * (omega * t + phase).sin()).unwrap();
        let a = amp.abs();
        let bounds = b.coefficient_decay_bounds(a, a * omega, a * omega * omega);
        for (i, (v, bound)) in c.data.iter().zip(&bounds).enumerate() {
            prop_assert!(v.abs() <= bound + 1e-12, "index {}: {} > {}", i, v, bound);
        }
    }
}
