//! Delayed linear quadratic tracking problems and their wavelet images.

use std::fmt;
use std::sync::Arc;

use faer::{Mat, Side};

use crate::chebwave::{CoeffVector, WaveletBasis};
use crate::dense::{self, Matrix};
use crate::error::{arg, Error, Result};
use crate::opmat;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar that is either fixed or a function of time.
#[derive(Clone)]
pub enum Scalar {
    Const(f64),
    Func(ScalarFn),
}

impl Scalar {
    pub fn func(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Scalar::Func(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Scalar::Const(c) => *c,
            Scalar::Func(f) => f(t),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Scalar::Const(c) => Some(*c),
            Scalar::Func(_) => None,
        }
    }

    /// `t ↦ self(scale · t)`.
    pub fn time_scaled(&self, scale: f64) -> Self {
        match self {
            Scalar::Const(c) => Scalar::Const(*c),
            Scalar::Func(f) => {
                let f = f.clone();
                Scalar::func(move |t| f(scale * t))
            }
        }
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Const(c) => write!(f, "{c}"),
            Scalar::Func(_) => write!(f, "<fn>"),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Const(v)
    }
}

/// Row-major matrix of scalars, possibly time-varying.
#[derive(Clone, Debug)]
pub struct MatrixFn {
    rows: usize,
    cols: usize,
    entries: Vec<Scalar>,
}

impl MatrixFn {
    pub fn new(rows: usize, cols: usize, entries: Vec<Scalar>) -> Result<Self> {
        if entries.len() != rows * cols {
            return arg(format!("{} entries for a {rows}x{cols} matrix", entries.len()));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![Scalar::Const(0.0); rows * cols] }
    }

    pub fn constant(m: &Matrix) -> Self {
        let entries = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| Scalar::Const(m[(i, j)]))
            .collect();
        Self { rows: m.nrows(), cols: m.ncols(), entries }
    }

    /// Column vector of scalars.
    pub fn column(entries: Vec<Scalar>) -> Self {
        Self { rows: entries.len(), cols: 1, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &Scalar {
        &self.entries[i * self.cols + j]
    }

    pub fn eval(&self, t: f64) -> Matrix {
        Mat::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).eval(t))
    }

    /// Entries in row-major order; for columns this is the vector value.
    pub fn eval_vec(&self, t: f64) -> Vec<f64> {
        self.entries.iter().map(|e| e.eval(t)).collect()
    }

    pub fn is_constant(&self) -> bool {
        self.entries.iter().all(|e| e.as_const().is_some())
    }

    pub fn constant_value(&self) -> Option<Matrix> {
        self.is_constant().then(|| self.eval(0.0))
    }

    pub fn time_scaled(&self, scale: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e.time_scaled(scale)).collect(),
        }
    }

    /// `c · self` for a constant `c`.
    pub fn left_mul(&self, c: &Matrix) -> Result<Self> {
        if c.ncols() != self.rows {
            return arg("left_mul dimension mismatch");
        }
        let mut entries = Vec::with_capacity(c.nrows() * self.cols);
        for i in 0..c.nrows() {
            for j in 0..self.cols {
                let terms: Vec<(f64, Scalar)> = (0..self.rows)
                    .filter(|&l| c[(i, l)] != 0.0)
                    .map(|l| (c[(i, l)], self.entry(l, j).clone()))
                    .collect();
                entries.push(combine(terms));
            }
        }
        Ok(Self { rows: c.nrows(), cols: self.cols, entries })
    }

    /// Stack `self` above `other`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return arg("vstack column mismatch");
        }
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        Ok(Self { rows: self.rows + other.rows, cols: self.cols, entries })
    }

    /// Append zero columns on the right.
    pub fn pad_cols(&self, extra: usize) -> Self {
        let cols = self.cols + extra;
        let mut entries = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            for j in 0..cols {
                entries.push(if j < self.cols { self.entry(i, j).clone() } else { Scalar::Const(0.0) });
            }
        }
        Self { rows: self.rows, cols, entries }
    }

    /// Entry-wise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return arg("add shape mismatch");
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| combine(vec![(1.0, a.clone()), (1.0, b.clone())]))
            .collect();
        Ok(Self { rows: self.rows, cols: self.cols, entries })
    }
}

fn combine(terms: Vec<(f64, Scalar)>) -> Scalar {
    if terms.iter().all(|(_, s)| s.as_const().is_some()) {
        return Scalar::Const(terms.iter().map(|(w, s)| w * s.as_const().unwrap()).sum());
    }
    Scalar::func(move |t| terms.iter().map(|(w, s)| w * s.eval(t)).sum())
}

#[derive(Clone, Debug)]
pub struct DelayTerm {
    pub matrix: MatrixFn,
    pub delay: f64,
}

/// `state · x(time) + control · u(time) = value`.
#[derive(Clone, Debug)]
pub struct PointEquality {
    pub time: f64,
    pub state: Vec<f64>,
    pub control: Vec<f64>,
    pub value: f64,
}

/// `state · x(t_f) = value`.
#[derive(Clone, Debug)]
pub struct TerminalEquality {
    pub state: Vec<f64>,
    pub value: f64,
}

/// `state(t) · x(t) + control(t) · u(t) ≤ bound(t)` for `t ∈ [start, end]`.
#[derive(Clone, Debug)]
pub struct WindowInequality {
    pub start: f64,
    pub end: f64,
    pub state: MatrixFn,
    pub control: MatrixFn,
    pub bound: Scalar,
}

#[derive(Clone, Debug, Default)]
pub struct ConstraintSet {
    pub point_equalities: Vec<PointEquality>,
    pub terminal_equalities: Vec<TerminalEquality>,
    pub window_inequalities: Vec<WindowInequality>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.point_equalities.is_empty()
            && self.terminal_equalities.is_empty()
            && self.window_inequalities.is_empty()
    }
}

/// How an augmented problem relates to the plant it was built from.
#[derive(Clone, Debug)]
pub struct OutputLifting {
    pub base_q: usize,
    pub c: Matrix,
    pub d: Matrix,
}

#[derive(Clone, Debug)]
pub struct DelayedLqtProblem {
    pub q: usize,
    pub r: usize,
    pub a: MatrixFn,
    pub b: MatrixFn,
    pub delayed_state: Vec<DelayTerm>,
    pub delayed_input: Vec<DelayTerm>,
    /// `f(t)` for `t ≤ 0`, a `q × 1` column.
    pub initial_state: MatrixFn,
    /// `g(t)` for `t ≤ 0`, an `r × 1` column.
    pub initial_control: MatrixFn,
    pub x0: Vec<f64>,
    pub q_weight: Matrix,
    pub r_weight: MatrixFn,
    pub t_weight: Matrix,
    pub reference: MatrixFn,
    pub t_f: f64,
    pub constraints: ConstraintSet,
    pub compat_continuity: bool,
    /// `B_u` of `ẋ = A x + B u + B_u u̇`, present after output reformulation.
    pub control_derivative: Option<Matrix>,
    pub lifting: Option<OutputLifting>,
}

impl DelayedLqtProblem {
    /// Zero plant with identity control weight; callers fill in the rest.
    pub fn new(q: usize, r: usize, t_f: f64) -> Self {
        Self {
            q,
            r,
            a: MatrixFn::zeros(q, q),
            b: MatrixFn::zeros(q, r),
            delayed_state: Vec::new(),
            delayed_input: Vec::new(),
            initial_state: MatrixFn::zeros(q, 1),
            initial_control: MatrixFn::zeros(r, 1),
            x0: vec![0.0; q],
            q_weight: Mat::zeros(q, q),
            r_weight: MatrixFn::constant(&Mat::identity(r, r)),
            t_weight: Mat::zeros(q, q),
            reference: MatrixFn::zeros(q, 1),
            t_f,
            constraints: ConstraintSet::default(),
            compat_continuity: true,
            control_derivative: None,
            lifting: None,
        }
    }

    pub fn max_state_delay(&self) -> f64 {
        self.delayed_state.iter().fold(0.0, |m, d| m.max(d.delay))
    }

    pub fn max_input_delay(&self) -> f64 {
        self.delayed_input.iter().fold(0.0, |m, d| m.max(d.delay))
    }

    /// Shape and sign checks; `R(t)` must be PD at nine evenly spaced times.
    pub fn validate(&self) -> Result<()> {
        let (q, r) = (self.q, self.r);
        if q == 0 || r == 0 {
            return arg("state and control dimensions must be positive");
        }
        if !(self.t_f > 0.0) || !self.t_f.is_finite() {
            return arg(format!("horizon t_f = {} must be positive", self.t_f));
        }
        shape(&self.a, q, q, "A")?;
        shape(&self.b, q, r, "B")?;
        for (i, d) in self.delayed_state.iter().enumerate() {
            shape(&d.matrix, q, q, &format!("delayed state term {i}"))?;
            delay_range(d.delay, self.t_f, &format!("delayed state term {i}"))?;
        }
        for (i, d) in self.delayed_input.iter().enumerate() {
            shape(&d.matrix, q, r, &format!("delayed input term {i}"))?;
            delay_range(d.delay, self.t_f, &format!("delayed input term {i}"))?;
        }
        shape(&self.initial_state, q, 1, "f")?;
        shape(&self.initial_control, r, 1, "g")?;
        shape(&self.reference, q, 1, "reference")?;
        shape(&self.r_weight, r, r, "R")?;
        if self.x0.len() != q {
            return arg(format!("x0 has {} entries, expected {q}", self.x0.len()));
        }
        if self.q_weight.nrows() != q || self.q_weight.ncols() != q {
            return arg("Q must be q x q");
        }
        if self.t_weight.nrows() != q || self.t_weight.ncols() != q {
            return arg("T must be q x q");
        }
        check_psd(&self.q_weight, "Q", false)?;
        check_psd(&self.t_weight, "T", false)?;
        for j in 0..=8 {
            let t = self.t_f * j as f64 / 8.0;
            check_psd(&self.r_weight.eval(t), &format!("R({t})"), true)?;
        }
        if !self.delayed_state.is_empty() {
            let f0 = self.initial_state.eval_vec(0.0);
            let gap = f0.iter().zip(&self.x0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if gap > 1e-8 {
                return arg(format!("f(0) differs from x0 by {gap:e}"));
            }
        }
        if let Some(bu) = &self.control_derivative {
            if bu.nrows() != q || bu.ncols() != r {
                return arg("control derivative matrix must be q x r");
            }
        }
        self.validate_constraints()
    }

    fn validate_constraints(&self) -> Result<()> {
        let within = |t: f64| (-1e-12..=self.t_f * (1.0 + 1e-12)).contains(&t);
        for (i, p) in self.constraints.point_equalities.iter().enumerate() {
            if !within(p.time) {
                return arg(format!("point equality {i} at t = {} lies outside [0, t_f]", p.time));
            }
            if p.state.len() != self.q || p.control.len() != self.r {
                return arg(format!("point equality {i} has wrong coefficient lengths"));
            }
        }
        for (i, p) in self.constraints.terminal_equalities.iter().enumerate() {
            if p.state.len() != self.q {
                return arg(format!("terminal equality {i} has wrong coefficient length"));
            }
        }
        for (i, w) in self.constraints.window_inequalities.iter().enumerate() {
            if !within(w.start) || !within(w.end) || !(w.end > w.start) {
                return arg(format!("window inequality {i} has an invalid window"));
            }
            shape(&w.state, 1, self.q, &format!("window inequality {i} state row"))?;
            shape(&w.control, 1, self.r, &format!("window inequality {i} control row"))?;
        }
        Ok(())
    }
}

fn shape(m: &MatrixFn, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.rows() != rows || m.cols() != cols {
        return arg(format!("{what} is {}x{}, expected {rows}x{cols}", m.rows(), m.cols()));
    }
    Ok(())
}

fn delay_range(h: f64, t_f: f64, what: &str) -> Result<()> {
    if !(0.0..=t_f).contains(&h) {
        return arg(format!("{what}: delay {h} outside [0, t_f]"));
    }
    Ok(())
}

fn check_psd(m: &Matrix, what: &str, strict: bool) -> Result<()> {
    let asym = dense::max_abs((m - m.transpose()).as_ref());
    let scale = dense::max_abs(m.as_ref()).max(1.0);
    if asym > 1e-12 * scale {
        return arg(format!("{what} is not symmetric"));
    }
    let eig = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Argument(format!("{what}: eigenvalue failure {e:?}")))?;
    let min = eig.first().copied().unwrap_or(0.0);
    if strict && min <= 0.0 {
        return arg(format!("{what} is not positive definite (min eigenvalue {min:e})"));
    }
    if !strict && min < -1e-10 * scale {
        return arg(format!("{what} is not positive semidefinite (min eigenvalue {min:e})"));
    }
    Ok(())
}

/// Problem data re-expressed on `τ = t / t_f ∈ [0, 1]`.
#[derive(Clone, Debug)]
pub struct NormalizedProblem {
    pub t_f: f64,
    pub q: usize,
    pub r: usize,
    pub a: MatrixFn,
    pub b: MatrixFn,
    /// Delay terms with delays in `τ` units.
    pub delayed_state: Vec<DelayTerm>,
    pub delayed_input: Vec<DelayTerm>,
    pub initial_state: MatrixFn,
    pub initial_control: MatrixFn,
    pub x0: Vec<f64>,
    pub reference: MatrixFn,
    pub r_weight: MatrixFn,
}

pub fn rescale(p: &DelayedLqtProblem) -> Result<NormalizedProblem> {
    if !(p.t_f > 0.0) {
        return arg(format!("horizon t_f = {} must be positive", p.t_f));
    }
    let s = p.t_f;
    let map = |terms: &[DelayTerm]| {
        terms
            .iter()
            .map(|d| DelayTerm { matrix: d.matrix.time_scaled(s), delay: d.delay / s })
            .collect()
    };
    Ok(NormalizedProblem {
        t_f: s,
        q: p.q,
        r: p.r,
        a: p.a.time_scaled(s),
        b: p.b.time_scaled(s),
        delayed_state: map(&p.delayed_state),
        delayed_input: map(&p.delayed_input),
        initial_state: p.initial_state.time_scaled(s),
        initial_control: p.initial_control.time_scaled(s),
        x0: p.x0.clone(),
        reference: p.reference.time_scaled(s),
        r_weight: p.r_weight.time_scaled(s),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridReport {
    pub aligned: bool,
    /// Nearest integer shift for each delayed state term.
    pub state_shifts: Vec<usize>,
    pub input_shifts: Vec<usize>,
    pub diagnostic: Option<String>,
    pub smallest_k: Option<u32>,
}

const GRID_TOL: f64 = 1e-9;

fn shift_of(h: f64, t_f: f64, k: u32) -> (usize, bool) {
    let x = (1u64 << (k - 1)) as f64 * h / t_f;
    let n = x.round();
    (n.max(0.0) as usize, (x - n).abs() <= GRID_TOL * x.abs().max(1.0))
}

fn delays(p: &DelayedLqtProblem) -> impl Iterator<Item = f64> + '_ {
    p.delayed_state.iter().chain(&p.delayed_input).map(|d| d.delay)
}

/// Checks that every delay is a whole number of subintervals at level `k`.
pub fn validate_grid(p: &DelayedLqtProblem, k: u32) -> GridReport {
    let aligned_at =
        |k: u32| delays(p).all(|h| shift_of(h, p.t_f, k).1 && shift_of(h, p.t_f, k).0 <= 1 << (k - 1));
    let state_shifts = p.delayed_state.iter().map(|d| shift_of(d.delay, p.t_f, k).0).collect();
    let input_shifts = p.delayed_input.iter().map(|d| shift_of(d.delay, p.t_f, k).0).collect();
    let smallest_k = (2..=16).find(|&kk| aligned_at(kk));
    let aligned = aligned_at(k);
    let diagnostic = if aligned {
        None
    } else {
        let bad: Vec<String> = delays(p)
            .filter(|&h| !shift_of(h, p.t_f, k).1)
            .map(|h| format!("h = {h} gives shift {}", (1u64 << (k - 1)) as f64 * h / p.t_f))
            .collect();
        Some(match smallest_k {
            Some(kk) => format!("delays off the k = {k} grid ({}); smallest aligned k is {kk}", bad.join(", ")),
            None => format!("delays off the k = {k} grid ({}); no dyadic k <= 16 aligns", bad.join(", ")),
        })
    };
    GridReport { aligned, state_shifts, input_shifts, diagnostic, smallest_k }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayRounding {
    /// `"state"` or `"input"`.
    pub kind: &'static str,
    pub index: usize,
    pub requested: f64,
    pub applied: f64,
    pub shift: usize,
}

/// Snaps every delay to the nearest grid point of level `k`.
pub fn round_delays(p: &DelayedLqtProblem, k: u32) -> (DelayedLqtProblem, Vec<DelayRounding>) {
    let n = (1u64 << (k - 1)) as f64;
    let mut out = p.clone();
    let mut log = Vec::new();
    let mut snap = |terms: &mut Vec<DelayTerm>, kind: &'static str| {
        for (i, d) in terms.iter_mut().enumerate() {
            let (shift, exact) = shift_of(d.delay, p.t_f, k);
            let shift = shift.min(n as usize);
            let applied = shift as f64 * p.t_f / n;
            if !exact {
                log.push(DelayRounding { kind, index: i, requested: d.delay, applied, shift });
            }
            d.delay = applied;
        }
    };
    snap(&mut out.delayed_state, "state");
    snap(&mut out.delayed_input, "input");
    (out, log)
}

#[derive(Clone, Debug)]
pub enum ControlWeight {
    Constant(Matrix),
    /// Block product image `R̃` of a time-varying weight.
    Varying(Matrix),
}

/// Wavelet images of all problem data.
#[derive(Clone, Debug)]
pub struct ProblemExpansion {
    pub basis: WaveletBasis,
    pub q: usize,
    pub r: usize,
    pub t_f: f64,
    pub a: Matrix,
    /// `(n_μ, Ã_μ)`.
    pub a_delayed: Vec<(usize, Matrix)>,
    pub b: Matrix,
    pub b_delayed: Vec<(usize, Matrix)>,
    pub gamma: CoeffVector,
    pub x0: CoeffVector,
    pub f_terms: Vec<CoeffVector>,
    pub g_terms: Vec<CoeffVector>,
    pub r_weight: ControlWeight,
    pub q_weight: Matrix,
    pub t_weight: Matrix,
    pub control_derivative: Option<Matrix>,
}

/// Block product matrix of a matrix function of `τ`.
pub fn expand_matrix_fn(basis: &WaveletBasis, m: &MatrixFn) -> Result<Matrix> {
    if let Some(c) = m.constant_value() {
        let eye = Mat::<f64>::identity(basis.dim(), basis.dim());
        return Ok(dense::kron(eye.as_ref(), c.as_ref()));
    }
    let (p, q) = (m.rows(), m.cols());
    let mut blocks = vec![Mat::<f64>::zeros(p, q); basis.dim()];
    for i in 0..p {
        for j in 0..q {
            let e = m.entry(i, j);
            let coeffs = match e.as_const() {
                Some(c) => basis.expand_constant(&[c]),
                None => basis.expand_scalar(&|t| e.eval(t))?,
            };
            for (idx, blk) in blocks.iter_mut().enumerate() {
                blk[(i, j)] = coeffs.data[idx];
            }
        }
    }
    opmat::block_product_matrix(basis, &blocks)
}

fn expand_column(basis: &WaveletBasis, m: &MatrixFn, on: &[usize]) -> Result<CoeffVector> {
    if let Some(c) = m.constant_value() {
        let mut v = basis.expand_constant(&dense::column(c.as_ref(), 0));
        let keep: Vec<bool> = (0..basis.subintervals()).map(|n| on.contains(&n)).collect();
        let per = basis.order() * m.rows();
        for (i, x) in v.data.iter_mut().enumerate() {
            if !keep[i / per] {
                *x = 0.0;
            }
        }
        return Ok(v);
    }
    basis.expand_on(m.rows(), on, &|t, out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = m.entry(i, 0).eval(t);
        }
    })
}

pub fn expand_problem(p: &DelayedLqtProblem, basis: &WaveletBasis) -> Result<ProblemExpansion> {
    let report = validate_grid(p, basis.k());
    if !report.aligned {
        return Err(Error::Grid(report.diagnostic.unwrap_or_default()));
    }
    let np = rescale(p)?;
    let all: Vec<usize> = (0..basis.subintervals()).collect();
    let a = expand_matrix_fn(basis, &np.a)?;
    let b = expand_matrix_fn(basis, &np.b)?;
    let mut a_delayed = Vec::new();
    let mut f_terms = Vec::new();
    for (d, &shift) in np.delayed_state.iter().zip(&report.state_shifts) {
        a_delayed.push((shift, expand_matrix_fn(basis, &d.matrix)?));
        let f = np.initial_state.clone();
        let tau = d.delay;
        let shifted = MatrixFn::column(
            (0..np.q)
                .map(|i| {
                    let e = f.entry(i, 0).clone();
                    Scalar::func(move |t| e.eval(t - tau))
                })
                .collect(),
        );
        let early: Vec<usize> = (0..shift).collect();
        f_terms.push(expand_column(basis, &shifted, &early)?);
    }
    let mut b_delayed = Vec::new();
    let mut g_terms = Vec::new();
    for (d, &shift) in np.delayed_input.iter().zip(&report.input_shifts) {
        b_delayed.push((shift, expand_matrix_fn(basis, &d.matrix)?));
        let g = np.initial_control.clone();
        let tau = d.delay;
        let shifted = MatrixFn::column(
            (0..np.r)
                .map(|i| {
                    let e = g.entry(i, 0).clone();
                    Scalar::func(move |t| e.eval(t - tau))
                })
                .collect(),
        );
        let early: Vec<usize> = (0..shift).collect();
        g_terms.push(expand_column(basis, &shifted, &early)?);
    }
    let gamma = expand_column(basis, &np.reference, &all)?;
    let x0 = basis.expand_constant(&np.x0);
    let r_weight = match np.r_weight.constant_value() {
        Some(c) => ControlWeight::Constant(c),
        None => ControlWeight::Varying(expand_matrix_fn(basis, &np.r_weight)?),
    };
    Ok(ProblemExpansion {
        basis: *basis,
        q: np.q,
        r: np.r,
        t_f: np.t_f,
        a,
        a_delayed,
        b,
        b_delayed,
        gamma,
        x0,
        f_terms,
        g_terms,
        r_weight,
        q_weight: p.q_weight.clone(),
        t_weight: p.t_weight.clone(),
        control_derivative: p.control_derivative.clone(),
    })
}

/// Output tracking data: track `y = C x + D u` instead of the state.
#[derive(Clone, Debug)]
pub struct OutputTracking {
    pub c: Matrix,
    pub d: Matrix,
    pub q_weight: Matrix,
    pub t_weight: Option<Matrix>,
    /// `p × 1` output reference.
    pub reference: MatrixFn,
}

#[derive(Clone, Debug)]
pub struct OutputReform {
    pub problem: DelayedLqtProblem,
    /// `B_u`, present when `D ≠ 0`.
    pub derivative_adjustment: Option<Matrix>,
}

/// Appends `z = C x + D u` as extra states so the output can be tracked as a state.
pub fn output_to_state_reform(p: &DelayedLqtProblem, out: &OutputTracking) -> Result<OutputReform> {
    let (q, r) = (p.q, p.r);
    let np = out.c.nrows();
    if out.c.ncols() != q || out.d.nrows() != np || out.d.ncols() != r {
        return arg("output map dimensions do not match the plant");
    }
    if out.q_weight.nrows() != np || out.q_weight.ncols() != np {
        return arg("output weight must be p x p");
    }
    if out.reference.rows() != np || out.reference.cols() != 1 {
        return arg("output reference must have p entries");
    }
    let sv = out.c.singular_values().map_err(|e| Error::Argument(format!("{e:?}")))?;
    let smax = sv.first().copied().unwrap_or(0.0);
    if sv.len() < np || sv.iter().any(|s| *s <= 1e-10 * smax.max(1e-300)) {
        return arg("output map C is rank deficient");
    }
    let lift = |m: &MatrixFn| -> Result<MatrixFn> { m.vstack(&m.left_mul(&out.c)?) };
    let qn = q + np;
    let mut aug = p.clone();
    aug.q = qn;
    aug.a = lift(&p.a)?.pad_cols(np);
    aug.b = lift(&p.b)?;
    aug.delayed_state = p
        .delayed_state
        .iter()
        .map(|d| Ok(DelayTerm { matrix: lift(&d.matrix)?.pad_cols(np), delay: d.delay }))
        .collect::<Result<_>>()?;
    aug.delayed_input = p
        .delayed_input
        .iter()
        .map(|d| Ok(DelayTerm { matrix: lift(&d.matrix)?, delay: d.delay }))
        .collect::<Result<_>>()?;
    let z_hist = p.initial_state.left_mul(&out.c)?.add(&p.initial_control.left_mul(&out.d)?)?;
    aug.initial_state = p.initial_state.vstack(&z_hist)?;
    let cx0 = dense::matvec(out.c.as_ref(), &p.x0);
    aug.x0 = p.x0.iter().copied().chain(cx0).collect();
    aug.q_weight = block_diag(&p.q_weight, &out.q_weight);
    let ty = out.t_weight.clone().unwrap_or_else(|| Mat::zeros(np, np));
    aug.t_weight = block_diag(&p.t_weight, &ty);
    aug.reference = p.reference.vstack(&out.reference)?;
    aug.constraints = lift_constraints(&p.constraints, np)?;
    let has_d = dense::max_abs(out.d.as_ref()) > 0.0;
    let bu = has_d.then(|| {
        let mut m = Mat::zeros(qn, r);
        m.as_mut().submatrix_mut(q, 0, np, r).copy_from(&out.d);
        m
    });
    aug.control_derivative = bu.clone();
    aug.lifting = Some(OutputLifting { base_q: q, c: out.c.clone(), d: out.d.clone() });
    Ok(OutputReform { problem: aug, derivative_adjustment: bu })
}

fn lift_constraints(c: &ConstraintSet, extra: usize) -> Result<ConstraintSet> {
    let pad = |v: &[f64]| v.iter().copied().chain(std::iter::repeat(0.0).take(extra)).collect();
    Ok(ConstraintSet {
        point_equalities: c
            .point_equalities
            .iter()
            .map(|p| PointEquality { state: pad(&p.state), ..p.clone() })
            .collect(),
        terminal_equalities: c
            .terminal_equalities
            .iter()
            .map(|p| TerminalEquality { state: pad(&p.state), value: p.value })
            .collect(),
        window_inequalities: c
            .window_inequalities
            .iter()
            .map(|w| WindowInequality { state: w.state.pad_cols(extra), ..w.clone() })
            .collect(),
    })
}

pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (n1, n2) = (a.nrows(), b.nrows());
    let (m1, m2) = (a.ncols(), b.ncols());
    let mut out = Mat::zeros(n1 + n2, m1 + m2);
    out.as_mut().submatrix_mut(0, 0, n1, m1).copy_from(a);
    out.as_mut().submatrix_mut(n1, m1, n2, m2).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn scalar_delay_plant() -> DelayedLqtProblem {
        let mut p = DelayedLqtProblem::new(1, 1, 1.0);
        p.a = MatrixFn::new(1, 1, vec![Scalar::func(|t| t * t)]).unwrap();
        p.b = MatrixFn::new(1, 1, vec![2.0.into()]).unwrap();
        p.delayed_state.push(DelayTerm {
            matrix: MatrixFn::new(1, 1, vec![Scalar::func(|t| -3.0 * t)]).unwrap(),
            delay: 0.5,
        });
        p.delayed_input.push(DelayTerm { matrix: MatrixFn::new(1, 1, vec![1.0.into()]).unwrap(), delay: 0.5 });
        p.initial_state = MatrixFn::column(vec![Scalar::func(|t| t * t + 1.0)]);
        p.initial_control = MatrixFn::column(vec![Scalar::func(|t| t + 1.0)]);
        p.x0 = vec![1.0];
        p
    }

    #[test]
    fn grid_checks() {
        let p = scalar_delay_plant();
        let rep = validate_grid(&p, 2);
        assert!(rep.aligned);
        assert_eq!(rep.state_shifts, vec![1]);
        assert_eq!(rep.input_shifts, vec![1]);

        let mut p3 = DelayedLqtProblem::new(1, 1, 3.0);
        p3.delayed_state.push(DelayTerm { matrix: MatrixFn::zeros(1, 1), delay: 1.0 });
        let rep = validate_grid(&p3, 4);
        assert!(!rep.aligned);
        assert!(rep.diagnostic.unwrap().contains("no dyadic"));

        let mut p2 = DelayedLqtProblem::new(1, 1, 15.0);
        p2.delayed_state.push(DelayTerm { matrix: MatrixFn::zeros(1, 1), delay: 1.0 });
        assert!(!validate_grid(&p2, 6).aligned);
        let (snapped, log) = round_delays(&p2, 6);
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].shift, 2);
        assert!((snapped.delayed_state[0].delay - 0.9375).abs() < 1e-15);
        assert!(validate_grid(&snapped, 6).aligned);
    }

    #[test]
    fn rescale_maps_delays_and_data() {
        let mut p = DelayedLqtProblem::new(2, 1, 15.0);
        p.reference = MatrixFn::column(vec![Scalar::func(|t| 0.2 * t), 0.0.into()]);
        p.delayed_state.push(DelayTerm { matrix: MatrixFn::zeros(2, 2), delay: 1.0 });
        let n = rescale(&p).unwrap();
        assert!((n.delayed_state[0].delay - 1.0 / 15.0).abs() < 1e-15);
        assert!((n.reference.eval_vec(0.5)[0] - 1.5).abs() < 1e-14);
        let mut bad = p.clone();
        bad.t_f = 0.0;
        assert!(rescale(&bad).is_err());
    }

    #[test]
    fn expansion_of_scalar_delay_plant_data() {
        let p = scalar_delay_plant();
        let b = WaveletBasis::new(2, 5).unwrap();
        let e = expand_problem(&p, &b).unwrap();
        let sp = PI.sqrt();
        let s2p = (2.0 * PI).sqrt();
        let f = &e.f_terms[0].data;
        let want = [35.0 * sp / 64.0, -s2p / 32.0, s2p / 128.0, 0.0, 0.0];
        for i in 0..5 {
            assert!((f[i] - want[i]).abs() < 1e-13, "{i}");
            assert_eq!(f[5 + i], 0.0);
        }
        assert!((e.x0.data[0] - sp / 2.0).abs() < 1e-15);
        assert!((e.x0.data[5] - sp / 2.0).abs() < 1e-15);
    }

    #[test]
    fn reform_adds_output_states() {
        let mut p = DelayedLqtProblem::new(5, 2, 1.0);
        p.a = MatrixFn::constant(&Mat::from_fn(5, 5, |i, j| (i + 2 * j) as f64 * 0.1));
        let c = dense::from_rows(&[vec![2.0, 0.0, 1.0, 0.0, 0.0], vec![0.0, 1.5, 0.0, 1.2, 1.0]]);
        let out = OutputTracking {
            c,
            d: Mat::zeros(2, 2),
            q_weight: Mat::identity(2, 2),
            t_weight: None,
            reference: MatrixFn::zeros(2, 1),
        };
        let reform = output_to_state_reform(&p, &out).unwrap();
        assert_eq!(reform.problem.q, 7);
        assert!(reform.derivative_adjustment.is_none());
        reform.problem.validate().unwrap();

        let rank_def = OutputTracking { c: Mat::zeros(2, 5), ..out };
        assert!(output_to_state_reform(&p, &rank_def).is_err());
    }

    #[test]
    fn validate_rejects_indefinite_weights() {
        let mut p = scalar_delay_plant();
        p.validate().unwrap();
        p.q_weight = dense::from_rows(&[vec![-1.0]]);
        assert!(p.validate().is_err());
        let mut p = scalar_delay_plant();
        p.r_weight = MatrixFn::new(1, 1, vec![Scalar::func(|t| t - 0.5)]).unwrap();
        assert!(p.validate().is_err());
    }
}
