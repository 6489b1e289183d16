use std::path::PathBuf;
use std::process::ExitCode;

use chebtrack_cli::{run, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "chebtrack",
    version,
    about = "Optimal tracking for delayed linear time-varying systems on a Chebyshev wavelet basis",
    after_help = "Exit codes: 0 optimal, 2 parse error, 3 delay grid mismatch, 4 solver failure or non-optimal status, 5 I/O error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem document (every variant when it has several).
    Solve {
        config: PathBuf,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long = "M")]
        order: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Snap delays to the nearest grid point instead of failing.
        #[arg(long)]
        round_delays: bool,
        /// Write oracle.csv and the oracle comparison block.
        #[arg(long)]
        oracle_check: bool,
        /// Points in the exported trajectory grid.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        dump_opmats: bool,
        #[arg(long)]
        dump_qp: bool,
        #[arg(long)]
        gnuplot: bool,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Solve {
        config,
        k,
        order,
        out,
        round_delays,
        oracle_check,
        samples,
        dump_opmats,
        dump_qp,
        gnuplot,
        tol,
        max_iter,
    } = cli.command;
    let cfg = RunConfig {
        config,
        k,
        order,
        out,
        round_delays,
        oracle_check,
        samples,
        dump_opmats,
        dump_qp,
        gnuplot,
        tol,
        max_iter,
    };
    match run(&cfg) {
        Ok(report) => {
            for c in &report.cases {
                println!(
                    "{}: status {} J = {:.7} (quadrature {:.7}), {} unknowns, {:.2?}",
                    c.label.as_deref().unwrap_or(&c.name),
                    c.status().as_str(),
                    c.objective(),
                    c.verification.cost,
                    c.solution.unknowns(),
                    c.elapsed
                );
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
