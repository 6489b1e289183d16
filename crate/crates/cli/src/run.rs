//! Batch driver: document → solve → verification → files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use chebtrack::dde_oracle::Trajectory;
use chebtrack::dense::Matrix;
use chebtrack::tracker::Verification;
use chebtrack::{opmat, solve_tracking, Error, SolveOptions, SolveStatus, SolverOptions, TrackerSolution, WaveletBasis};
use serde_json::{json, Value};

use crate::document::{parse_document, ProblemCase};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub config: PathBuf,
    /// Overrides the document's resolution level.
    pub k: Option<u32>,
    /// Overrides the document's polynomial order.
    pub order: Option<usize>,
    pub out: PathBuf,
    pub round_delays: bool,
    pub oracle_check: bool,
    /// Points in the exported trajectory grid.
    pub samples: usize,
    pub dump_opmats: bool,
    pub dump_qp: bool,
    pub gnuplot: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl RunConfig {
    pub fn new(config: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        let solver = SolverOptions::default();
        Self {
            config: config.into(),
            k: None,
            order: None,
            out: out.into(),
            round_delays: false,
            oracle_check: false,
            samples: 200,
            dump_opmats: false,
            dump_qp: false,
            gnuplot: false,
            tol: solver.tol,
            max_iter: solver.max_iter,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Parse(_) => 2,
            RunError::Grid(_) => 3,
            RunError::Solver(_) => 4,
            RunError::Io(_) => 5,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Argument(_) | Error::NonFinite { .. } => RunError::Parse(e.to_string()),
            Error::Grid(_) => RunError::Grid(e.to_string()),
            Error::Assembly(_) | Error::Solver(_) => RunError::Solver(e.to_string()),
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

#[derive(Clone, Debug)]
pub struct CaseReport {
    pub name: String,
    pub label: Option<String>,
    pub solution: TrackerSolution,
    pub verification: Verification,
    /// Largest `g − bound` over the dense sweep, if the case has inequalities.
    pub sweep_max: Option<f64>,
    /// The same per window inequality.
    pub window_violations: Vec<f64>,
    pub elapsed: Duration,
}

impl CaseReport {
    pub fn status(&self) -> SolveStatus {
        self.solution.qp_solution.status
    }

    pub fn objective(&self) -> f64 {
        self.solution.objective
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub cases: Vec<CaseReport>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.cases.iter().all(|c| c.status() == SolveStatus::Optimal) {
            0
        } else {
            4
        }
    }

    pub fn case(&self, label: &str) -> Option<&CaseReport> {
        self.cases.iter().find(|c| c.label.as_deref() == Some(label))
    }
}

pub fn load_cases(path: &Path) -> Result<Vec<ProblemCase>, RunError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    parse_document(&text).map_err(|e| RunError::Parse(e.to_string()))
}

/// Solves and verifies one case without touching the file system.
pub fn solve_case(case: &ProblemCase, cfg: &RunConfig) -> Result<CaseReport, RunError> {
    let started = Instant::now();
    let k = cfg.k.or(case.discretization.k).ok_or_else(|| RunError::Parse("resolution level k not given".into()))?;
    let order = cfg.order.or(case.discretization.order).ok_or_else(|| RunError::Parse("order M not given".into()))?;
    let basis = WaveletBasis::new(k, order)?;
    let opts = SolveOptions {
        round_delays: cfg.round_delays || case.round_delays,
        samples_per_subinterval: case.discretization.samples_per_subinterval,
        solver: SolverOptions { tol: cfg.tol, max_iter: cfg.max_iter, ..SolverOptions::default() },
    };
    let solution = solve_tracking(&case.problem, &basis, &opts)?;
    let per = cfg.samples.div_ceil(basis.subintervals()).max(4);
    let verification = solution.verify(per)?;
    let density = 10 * order.max(case.discretization.samples_per_subinterval.unwrap_or(0));
    let window_violations = solution.window_violations(density);
    let sweep_max = window_violations.iter().copied().reduce(f64::max);
    Ok(CaseReport {
        name: case.name.clone(),
        label: case.label.clone(),
        solution,
        verification,
        sweep_max,
        window_violations,
        elapsed: started.elapsed(),
    })
}

pub fn run(cfg: &RunConfig) -> Result<RunReport, RunError> {
    let cases = load_cases(&cfg.config)?;
    let mut reports = Vec::with_capacity(cases.len());
    for case in &cases {
        let report = solve_case(case, cfg)?;
        let dir = match &case.label {
            Some(l) => cfg.out.join(l),
            None => cfg.out.clone(),
        };
        write_case(&dir, &report, cfg)?;
        reports.push(report);
    }
    let report = RunReport { cases: reports };
    if cases.iter().any(|c| c.label.is_some()) {
        let path = cfg.out.join("sweep.csv");
        fs::write(&path, sweep_csv(&report)).map_err(|e| io(&path, e))?;
    }
    Ok(report)
}

fn sweep_csv(report: &RunReport) -> String {
    let mut out = String::from("label,k,M,unknowns,status,iterations,J_qp,J_quadrature\n");
    for c in &report.cases {
        let s = &c.solution;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.label.as_deref().unwrap_or(""),
            s.basis.k(),
            s.basis.order(),
            s.unknowns(),
            c.status().as_str(),
            s.qp_solution.iterations,
            s.objective,
            c.verification.cost
        );
    }
    out
}

/// `summary.json` content; only `timestamp` varies between identical runs.
pub fn summary(report: &CaseReport, cfg: &RunConfig) -> Value {
    let s = &report.solution;
    let qs = &s.qp_solution;
    let meta = &s.qp.meta;
    let rounding: Vec<Value> = s
        .rounding
        .iter()
        .map(|d| {
            json!({
                "kind": d.kind,
                "index": d.index,
                "requested": d.requested,
                "applied": d.applied,
                "shift": d.shift,
                "perturbation": d.applied - d.requested,
            })
        })
        .collect();
    let v = &report.verification;
    let mut out = json!({
        "name": report.name,
        "label": report.label,
        "k": s.basis.k(),
        "M": s.basis.order(),
        "t_f": s.problem.t_f,
        "q": meta.q,
        "r": meta.r,
        "unknowns": s.unknowns(),
        "rows": {
            "dynamics": meta.dynamics_rows,
            "compatibility": meta.compat_rows,
            "point": meta.point_rows,
            "inequality": meta.inequality_rows,
        },
        "J": s.objective,
        "J_qp": s.objective,
        "J_quadrature": v.cost,
        "J_quadrature_anchored": v.anchored_cost,
        "status": qs.status.as_str(),
        "iterations": qs.iterations,
        "residuals": {
            "stationarity": qs.residuals.stationarity,
            "primal_eq": qs.residuals.primal_eq,
            "primal_ineq": qs.residuals.primal_ineq,
            "complementarity": qs.residuals.complementarity,
        },
        "tikhonov_shift": qs.tikhonov_shift,
        "pruned_rows": qs.pruned_rows,
        "constraint_violation_max": report.sweep_max,
        "constraint_violations": report.window_violations,
        "delay_rounding": rounding,
        "timestamp": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    });
    if cfg.oracle_check {
        out["oracle"] = json!({
            "steps": v.trajectory.len() - 1,
            "state_sup": v.report.state_sup,
            "state_l2": v.report.state_l2,
            "control_sup": v.report.control_sup,
            "relative_sup": v.report.relative_sup,
            "interface_jump": v.report.interface_jump,
            "anchored_state_sup": v.anchored.state_sup,
            "anchored_relative_sup": v.anchored.relative_sup,
            "discontinuous": s.problem.compat_continuity && v.report.discontinuous(),
        });
    }
    out
}

/// The reconstruction sampled on `samples + 1` uniform points.
pub fn reconstructed_trajectory(s: &TrackerSolution, samples: usize) -> Trajectory {
    let n = samples.max(1);
    let t_f = s.problem.t_f;
    let times: Vec<f64> = (0..=n).map(|i| if i == n { t_f } else { t_f * i as f64 / n as f64 }).collect();
    Trajectory {
        states: times.iter().map(|&t| s.state_poly.eval(t)).collect(),
        controls: times.iter().map(|&t| s.control_poly.eval(t)).collect(),
        controls_right: times.iter().map(|&t| s.control_poly.eval_right(t)).collect(),
        times,
    }
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| io(path, e))
}

fn matrix_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn vector_csv(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}\n")).collect()
}

pub fn write_case(dir: &Path, report: &CaseReport, cfg: &RunConfig) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let s = &report.solution;
    let traj = reconstructed_trajectory(s, cfg.samples);
    write(&dir.join("solution.csv"), &traj.to_csv(&s.problem))?;
    let text = serde_json::to_string_pretty(&summary(report, cfg)).expect("serializable") + "\n";
    write(&dir.join("summary.json"), &text)?;
    if cfg.oracle_check {
        write(&dir.join("oracle.csv"), &report.verification.trajectory.to_csv(&s.problem))?;
    }
    if cfg.dump_opmats {
        let b = &s.basis;
        write(&dir.join("P.csv"), &matrix_csv(&opmat::integration_matrix(b)))?;
        write(&dir.join("C.csv"), &matrix_csv(&opmat::gram_matrix(b)))?;
        write(&dir.join("E1.csv"), &matrix_csv(&opmat::endpoint_outer(b)))?;
        let report = chebtrack::lqt_model::validate_grid(&s.problem, b.k());
        let mut shifts: Vec<usize> = report.state_shifts.iter().chain(&report.input_shifts).copied().collect();
        shifts.sort_unstable();
        shifts.dedup();
        for shift in shifts {
            let d = opmat::delay_matrix(b, shift)?;
            write(&dir.join(format!("D_{shift}.csv")), &matrix_csv(&d))?;
        }
    }
    if cfg.dump_qp {
        let qp = &s.qp;
        write(&dir.join("H.csv"), &matrix_csv(&qp.h))?;
        write(&dir.join("A_eq.csv"), &matrix_csv(&qp.a_eq))?;
        write(&dir.join("b_eq.csv"), &vector_csv(&qp.b_eq))?;
        write(&dir.join("G_in.csv"), &matrix_csv(&qp.g_in))?;
        write(&dir.join("h_in.csv"), &vector_csv(&qp.h_in))?;
    }
    if cfg.gnuplot {
        write(&dir.join("plot.gp"), &gnuplot_script(s.problem.q, s.problem.r))?;
    }
    Ok(())
}

fn gnuplot_script(q: usize, r: usize) -> String {
    let x_last = 1 + q;
    let u_first = x_last + 1;
    let u_last = x_last + r;
    let r_first = u_last + 1;
    let r_last = u_last + q;
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 't'\n\
         set terminal pngcairo size 900,600\n\
         set output 'states.png'\n\
         plot for [i=2:{x_last}] 'solution.csv' using 1:i with lines, \\\n     \
         for [i={r_first}:{r_last}] 'solution.csv' using 1:i with lines dashtype 2\n\
         set output 'controls.png'\n\
         plot for [i={u_first}:{u_last}] 'solution.csv' using 1:i with lines\n"
    )
}
