//! Command-line front end: JSON problem documents in, trajectories and summaries out.

pub mod document;
pub mod expr;
pub mod run;

pub use document::{parse_document, ProblemCase};
pub use run::{run, solve_case, RunConfig, RunError, RunReport};
