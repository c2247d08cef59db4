mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dioph_core::CantorError;

use output::Format;

/// Environment variable holding the default precision cap in bits.
pub const MAX_BITS_ENV: &str = "DIOPH_MAX_BITS";

#[derive(Parser, Debug)]
#[command(name = "dioph", version, about = "Exact experiments in metric Diophantine approximation")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// Key-value file of flag defaults (`key = value` per line)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel scans (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Seed for randomized choices; recorded in JSON output
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-level cover sizes and s-volumes next to the comparison series
    CoverSum(commands::CoverSumArgs),
    /// Count shifted rational points near a curve
    CountCurve(commands::CountCurveArgs),
    /// Cantor-rectangle construction of badly approximable points
    Cantor {
        #[command(subcommand)]
        action: commands::CantorAction,
    },
    /// Box-counting slope of points or rectangles
    Boxdim(commands::BoxdimArgs),
    /// Convergence verdict for a comparison series
    Series(commands::SeriesArgs),
    /// Certified member of the ψ-approximable set via continued fractions
    S1Member(commands::S1MemberArgs),
}

/// 2 for contradictions found by the construction, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let contradiction = err.chain().any(|e| {
        e.downcast_ref::<CantorError>().is_some_and(CantorError::is_contradiction)
            || e.downcast_ref::<commands::Mismatch>().is_some()
    });
    if contradiction {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(jobs) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
