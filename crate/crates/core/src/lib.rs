//! Optimal tracking for linear time-varying systems with state and input
//! delays, transcribed onto a Chebyshev wavelet basis and solved as a dense QP.

pub mod chebwave;
pub mod dde_oracle;
pub mod dense;
pub mod error;
pub mod lqt_model;
pub mod opmat;
pub mod qp_assembler;
pub mod qp_solver;
pub mod tracker;

pub use chebwave::{CoeffVector, PiecewisePoly, WaveletBasis};
pub use error::{Error, Result};
pub use lqt_model::{DelayedLqtProblem, MatrixFn, Scalar};
pub use qp_assembler::QuadraticProgram;
pub use qp_solver::{QpSolution, SolveStatus, SolverOptions};
pub use tracker::{solve_tracking, SolveOptions, TrackerSolution};
