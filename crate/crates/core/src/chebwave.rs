//! First-kind Chebyshev wavelets on the unit interval.
//!
//! The basis splits `[0, 1]` into `2^(k-1)` dyadic subintervals and places
//! the first `M` shifted Chebyshev polynomials on each. Coefficient vectors
//! interleave channels: for every wavelet index `(n, m)` the channel values
//! are stored next to each other.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{arg, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletBasis {
    k: u32,
    order: usize,
}

impl WaveletBasis {
    pub fn new(k: u32, order: usize) -> Result<Self> {
        if k < 2 {
            return arg(format!("resolution level k = {k} must be at least 2"));
        }
        if k > 20 {
            return arg(format!("resolution level k = {k} is too large"));
        }
        if order < 3 {
            return arg(format!("polynomial order M = {order} must be at least 3"));
        }
        Ok(Self { k, order })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Polynomial order `M`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of subintervals, `2^(k-1)`.
    pub fn subintervals(&self) -> usize {
        1usize << (self.k - 1)
    }

    /// Total dimension `s = 2^(k-1) * M`.
    pub fn dim(&self) -> usize {
        self.subintervals() * self.order
    }

    pub fn width(&self) -> f64 {
        1.0 / self.subintervals() as f64
    }

    /// `[start, end]` of the zero-based subinterval `n0`.
    pub fn bounds(&self, n0: usize) -> (f64, f64) {
        let w = self.width();
        (n0 as f64 * w, (n0 + 1) as f64 * w)
    }

    /// Amplitude `sqrt(2^k / pi)`.
    pub fn scale(&self) -> f64 {
        ((1u64 << self.k) as f64 / PI).sqrt()
    }

    /// Zero-based subinterval owning `t`; interfaces belong to the left piece.
    pub fn subinterval_of(&self, t: f64) -> usize {
        let n = self.subintervals();
        if t <= 0.0 {
            return 0;
        }
        let c = (t * n as f64).ceil() as usize;
        c.saturating_sub(1).min(n - 1)
    }

    /// Zero-based subinterval whose half-open span `[start, end)` holds `t`.
    pub fn subinterval_right_of(&self, t: f64) -> usize {
        let n = self.subintervals();
        if t <= 0.0 {
            return 0;
        }
        ((t * n as f64).floor() as usize).min(n - 1)
    }

    /// Values of `psi_{n0, m}(t)` for all `m`, ignoring the support check.
    pub fn local_values(&self, n0: usize, t: f64) -> Vec<f64> {
        let x = (1u64 << self.k) as f64 * t - (2 * n0 + 1) as f64;
        let mut out = chebyshev_values(self.order, x);
        let a = self.scale();
        for (m, v) in out.iter_mut().enumerate() {
            *v *= a * weight(m);
        }
        out
    }

    /// Single wavelet `psi_{n,m}(t)` with one-based `n`.
    pub fn eval_psi(&self, n: usize, m: usize, t: f64) -> Result<f64> {
        if n == 0 || n > self.subintervals() {
            return arg(format!("subinterval index {n} outside 1..={}", self.subintervals()));
        }
        if m >= self.order {
            return arg(format!("order index {m} outside 0..{}", self.order));
        }
        check_unit(t)?;
        if self.subinterval_of(t) != n - 1 {
            return Ok(0.0);
        }
        Ok(self.local_values(n - 1, t)[m])
    }

    /// Full basis vector `Psi(t)` of length `s`.
    pub fn eval_vector(&self, t: f64) -> Result<Vec<f64>> {
        check_unit(t)?;
        Ok(self.vector_on(self.subinterval_of(t), t))
    }

    /// `Psi` at the right limit of `t`, for times that sit on an interface.
    pub fn eval_vector_right(&self, t: f64) -> Result<Vec<f64>> {
        check_unit(t)?;
        Ok(self.vector_on(self.subinterval_right_of(t), t))
    }

    pub(crate) fn vector_on(&self, n0: usize, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        let base = n0 * self.order;
        v[base..base + self.order].copy_from_slice(&self.local_values(n0, t));
        v
    }

    /// Coefficients of a scalar function.
    pub fn expand_scalar(&self, f: &dyn Fn(f64) -> f64) -> Result<CoeffVector> {
        self.expand_vector(1, &|t, out: &mut [f64]| out[0] = f(t))
    }

    /// Coefficients of a vector function with `channels` components.
    pub fn expand_vector(
        &self,
        channels: usize,
        f: &dyn Fn(f64, &mut [f64]),
    ) -> Result<CoeffVector> {
        let all: Vec<usize> = (0..self.subintervals()).collect();
        self.expand_on(channels, &all, f)
    }

    /// Expansion restricted to the listed zero-based subintervals; the rest stay zero.
    pub fn expand_on(
        &self,
        channels: usize,
        subintervals: &[usize],
        f: &dyn Fn(f64, &mut [f64]),
    ) -> Result<CoeffVector> {
        let mm = self.order;
        let rule = GaussLegendre::new(4 * mm);
        let two_k = (1u64 << self.k) as f64;
        let norm = 1.0 / (two_k * PI).sqrt();
        // nodes on [0, pi] and cos(m theta) tables are shared by every subinterval
        let thetas: Vec<f64> = rule.nodes.iter().map(|x| 0.5 * PI * (x + 1.0)).collect();
        let wts: Vec<f64> = rule.weights.iter().map(|w| 0.5 * PI * w).collect();
        let cosines: Vec<Vec<f64>> = (0..mm)
            .map(|m| thetas.iter().map(|th| (m as f64 * th).cos()).collect())
            .collect();
        let mut out = CoeffVector::zeros(*self, channels);
        let mut vals = vec![0.0; channels];
        for &n0 in subintervals {
            let mut acc = vec![0.0; mm * channels];
            for (j, th) in thetas.iter().enumerate() {
                let t = (th.cos() + (2 * n0 + 1) as f64) / two_k;
                vals.iter_mut().for_each(|v| *v = 0.0);
                f(t, &mut vals);
                for &v in &vals {
                    if !v.is_finite() {
                        return Err(Error::NonFinite { t, value: v });
                    }
                }
                for m in 0..mm {
                    let c = wts[j] * cosines[m][j];
                    for ch in 0..channels {
                        acc[m * channels + ch] += c * vals[ch];
                    }
                }
            }
            for m in 0..mm {
                let wm = weight(m) * norm;
                for ch in 0..channels {
                    out.data[(n0 * mm + m) * channels + ch] = wm * acc[m * channels + ch];
                }
            }
        }
        Ok(out)
    }

    /// Coefficients of a constant vector: only the `m = 0` entries are nonzero.
    pub fn expand_constant(&self, values: &[f64]) -> CoeffVector {
        let c = (PI / (1u64 << self.k) as f64).sqrt();
        let mut out = CoeffVector::zeros(*self, values.len());
        for n0 in 0..self.subintervals() {
            for (ch, v) in values.iter().enumerate() {
                out.set(n0, 0, ch, c * v);
            }
        }
        out
    }

    /// Upper bounds on `|f_nm|` from sup-norms of `f`, `f'` and `f''`.
    pub fn coefficient_decay_bounds(&self, rho0: f64, rho1: f64, rho2: f64) -> Vec<f64> {
        let k = self.k as i32;
        let b0 = (PI / 2f64.powi(k)).sqrt() * rho0;
        let b1 = (PI / 2f64.powi(3 * k - 1)).sqrt() * rho1;
        let b2 = (PI / 2f64.powi(5 * k - 1)).sqrt() * rho2;
        let mut out = Vec::with_capacity(self.dim());
        for _ in 0..self.subintervals() {
            for m in 0..self.order {
                out.push(match m {
                    0 => b0,
                    1 => b1,
                    _ => b2 / ((m * m - 1) as f64),
                });
            }
        }
        out
    }

    /// Chebyshev–Gauss points of subinterval `n0`, ascending.
    pub fn chebyshev_gauss_points(&self, n0: usize, count: usize) -> Vec<f64> {
        let (a, b) = self.bounds(n0);
        let mut pts: Vec<f64> = (1..=count)
            .map(|j| {
                let x = ((2 * j - 1) as f64 * PI / (2 * count) as f64).cos();
                0.5 * (a + b) + 0.5 * (b - a) * x
            })
            .collect();
        pts.reverse();
        pts
    }
}

fn check_unit(t: f64) -> Result<()> {
    if !(-1e-12..=1.0 + 1e-12).contains(&t) {
        return arg(format!("time {t} outside [0, 1]"));
    }
    Ok(())
}

/// `℘_m`: 1 for `m = 0`, `sqrt(2)` otherwise.
pub fn weight(m: usize) -> f64 {
    if m == 0 {
        1.0
    } else {
        SQRT_2
    }
}

/// `T_0(x) .. T_{count-1}(x)` by the three-term recurrence.
pub fn chebyshev_values(count: usize, x: f64) -> Vec<f64> {
    let mut t = vec![0.0; count];
    if count > 0 {
        t[0] = 1.0;
    }
    if count > 1 {
        t[1] = x;
    }
    for m in 2..count {
        t[m] = 2.0 * x * t[m - 1] - t[m - 2];
    }
    t
}

/// Monomial coefficients of `T_0 .. T_{count-1}`, lowest degree first.
pub fn chebyshev_monomials(count: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    for m in 0..count {
        let p = match m {
            0 => vec![1.0],
            1 => vec![0.0, 1.0],
            _ => {
                let mut p = vec![0.0; m + 1];
                for (i, c) in out[m - 1].iter().enumerate() {
                    p[i + 1] += 2.0 * c;
                }
                for (i, c) in out[m - 2].iter().enumerate() {
                    p[i] -= c;
                }
                p
            }
        };
        out.push(p);
    }
    out
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(c + h * x))
            .sum::<f64>()
            * h
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector {
    pub basis: WaveletBasis,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl CoeffVector {
    pub fn zeros(basis: WaveletBasis, channels: usize) -> Self {
        Self { basis, channels, data: vec![0.0; basis.dim() * channels] }
    }

    pub fn from_data(basis: WaveletBasis, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != basis.dim() * channels {
            return arg(format!(
                "coefficient length {} does not match {} channels x {}",
                data.len(),
                channels,
                basis.dim()
            ));
        }
        Ok(Self { basis, channels, data })
    }

    fn index(&self, n0: usize, m: usize, ch: usize) -> usize {
        (n0 * self.basis.order() + m) * self.channels + ch
    }

    pub fn get(&self, n0: usize, m: usize, ch: usize) -> f64 {
        self.data[self.index(n0, m, ch)]
    }

    pub fn set(&mut self, n0: usize, m: usize, ch: usize, v: f64) {
        let i = self.index(n0, m, ch);
        self.data[i] = v;
    }

    /// Value at `t`; interfaces take the left subinterval.
    pub fn reconstruct(&self, t: f64) -> Vec<f64> {
        self.reconstruct_on(self.basis.subinterval_of(t), t)
    }

    /// Right limit at `t`.
    pub fn reconstruct_right(&self, t: f64) -> Vec<f64> {
        self.reconstruct_on(self.basis.subinterval_right_of(t), t)
    }

    pub fn reconstruct_on(&self, n0: usize, t: f64) -> Vec<f64> {
        let psi = self.basis.local_values(n0, t);
        let mut out = vec![0.0; self.channels];
        for (m, p) in psi.iter().enumerate() {
            for (ch, o) in out.iter_mut().enumerate() {
                *o += p * self.get(n0, m, ch);
            }
        }
        out
    }

    /// Exact change to monomials per subinterval; `t_f` maps unit time to original time.
    pub fn to_piecewise_poly(&self, t_f: f64) -> PiecewisePoly {
        let b = self.basis;
        let mm = b.order();
        let cheb = chebyshev_monomials(mm);
        let width = b.width() * t_f;
        let mut pieces = Vec::with_capacity(b.subintervals());
        for n0 in 0..b.subintervals() {
            // x = -1 + 2 s / width with s = t - start
            let lin = [-1.0, 2.0 / width];
            let mut per_channel = vec![vec![0.0; mm]; self.channels];
            let mut power = vec![1.0];
            let mut xpow: Vec<Vec<f64>> = Vec::with_capacity(mm);
            for _ in 0..mm {
                xpow.push(power.clone());
                power = poly_mul(&power, &lin);
            }
            for m in 0..mm {
                let amp = b.scale() * weight(m);
                for (deg, c) in cheb[m].iter().enumerate() {
                    if *c == 0.0 {
                        continue;
                    }
                    for (i, p) in xpow[deg].iter().enumerate() {
                        for ch in 0..self.channels {
                            per_channel[ch][i] += amp * c * p * self.get(n0, m, ch);
                        }
                    }
                }
            }
            pieces.push(per_channel);
        }
        PiecewisePoly { basis: b, channels: self.channels, t_f, pieces }
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Piecewise polynomial in original time.
///
/// Each subinterval stores monomials in the local offset `t - start`, which
/// keeps evaluation well conditioned for long horizons; `monomials_in_t`
/// expands a piece in powers of `t` itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    pub basis: WaveletBasis,
    pub channels: usize,
    pub t_f: f64,
    /// `pieces[n0][channel][degree]`
    pub pieces: Vec<Vec<Vec<f64>>>,
}

impl PiecewisePoly {
    pub fn start(&self, n0: usize) -> f64 {
        self.basis.bounds(n0).0 * self.t_f
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.eval_on(self.basis.subinterval_of(t / self.t_f), t)
    }

    pub fn eval_right(&self, t: f64) -> Vec<f64> {
        self.eval_on(self.basis.subinterval_right_of(t / self.t_f), t)
    }

    pub fn eval_on(&self, n0: usize, t: f64) -> Vec<f64> {
        let s = t - self.start(n0);
        self.pieces[n0]
            .iter()
            .map(|p| p.iter().rev().fold(0.0, |acc, c| acc * s + c))
            .collect()
    }

    /// Coefficients of piece `n0`, channel `ch`, in powers of `t`.
    pub fn monomials_in_t(&self, n0: usize, ch: usize) -> Vec<f64> {
        let a = self.start(n0);
        let local = &self.pieces[n0][ch];
        let mut out = vec![0.0; local.len()];
        // (t - a)^d expanded by the binomial theorem
        for (d, c) in local.iter().enumerate() {
            let mut binom = 1.0;
            for j in 0..=d {
                out[j] += c * binom * (-a).powi((d - j) as i32);
                binom = binom * (d - j) as f64 / (j + 1) as f64;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_wavelet_value() {
        let b = WaveletBasis::new(2, 5).unwrap();
        let v = b.eval_psi(1, 0, 0.25).unwrap();
        assert!((v - 2.0 / PI.sqrt()).abs() < 1e-15);
        assert_eq!(b.eval_psi(2, 0, 0.25).unwrap(), 0.0);
        let v = b.eval_psi(1, 2, 0.25).unwrap();
        assert!((v + (8.0 / PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_indices() {
        let b = WaveletBasis::new(2, 5).unwrap();
        assert!(b.eval_psi(0, 0, 0.1).is_err());
        assert!(b.eval_psi(3, 0, 0.1).is_err());
        assert!(b.eval_psi(1, 5, 0.1).is_err());
        assert!(WaveletBasis::new(1, 5).is_err());
        assert!(WaveletBasis::new(2, 2).is_err());
    }

    #[test]
    fn support_of_vector() {
        let b = WaveletBasis::new(2, 5).unwrap();
        let v = b.eval_vector(0.1).unwrap();
        assert!(v[5..].iter().all(|x| *x == 0.0));
        let b = WaveletBasis::new(3, 4).unwrap();
        let v = b.eval_vector(0.9).unwrap();
        assert!(v[..12].iter().all(|x| *x == 0.0));
        assert!(v[12..].iter().all(|x| *x != 0.0));
    }

    #[test]
    fn interface_belongs_to_left_piece() {
        let b = WaveletBasis::new(2, 5).unwrap();
        assert_eq!(b.subinterval_of(0.5), 0);
        assert_eq!(b.subinterval_right_of(0.5), 1);
        assert_eq!(b.subinterval_of(1.0), 1);
        assert_eq!(b.subinterval_right_of(1.0), 1);
        assert_eq!(b.subinterval_of(0.0), 0);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let g = GaussLegendre::new(6);
        let v = g.integrate(0.0, 2.0, |x| x.powi(11));
        assert!((v - 2f64.powi(12) / 12.0).abs() < 1e-10);
        assert!((g.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn constant_expansion_matches_closed_form() {
        let b = WaveletBasis::new(3, 6).unwrap();
        let c = b.expand_scalar(&|_| 1.0).unwrap();
        let e = b.expand_constant(&[1.0]);
        for (x, y) in c.data.iter().zip(&e.data) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn chebyshev_monomials_match_recurrence() {
        let p = chebyshev_monomials(6);
        for &x in &[-0.9, -0.3, 0.2, 0.77] {
            let t = chebyshev_values(6, x);
            for m in 0..6 {
                let v: f64 = p[m].iter().enumerate().map(|(i, c)| c * x.powi(i as i32)).sum();
                assert!((v - t[m]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn decay_bounds_zero_and_linear() {
        let b = WaveletBasis::new(2, 5).unwrap();
        assert!(b.coefficient_decay_bounds(0.0, 0.0, 0.0).iter().all(|x| *x == 0.0));
        let bounds = b.coefficient_decay_bounds(0.0, 1.0, 0.0);
        assert!((bounds[1] - (PI / 32.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn monomials_in_t_reproduce_values() {
        let b = WaveletBasis::new(2, 5).unwrap();
        let c = b.expand_scalar(&|t| 1.0 + 2.0 * t - t.powi(3)).unwrap();
        let pp = c.to_piecewise_poly(1.0);
        let g = pp.monomials_in_t(1, 0);
        assert!((g[0] - 1.0).abs() < 1e-10);
        assert!((g[1] - 2.0).abs() < 1e-10);
        assert!(g[2].abs() < 1e-10);
        assert!((g[3] + 1.0).abs() < 1e-10);
    }
}
