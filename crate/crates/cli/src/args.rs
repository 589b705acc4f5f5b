use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "nsgate", version, about = "Post-selected linear-optical NS gate toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Output format; each command has its own default.
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,

    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Points per axis for scans.
    #[arg(long = "grid-n", global = true, default_value_t = 101)]
    pub grid_n: usize,

    /// Random starts beyond the first in `optimize`.
    #[arg(long, global = true, default_value_t = 50)]
    pub restarts: usize,

    /// Total optical modes.
    #[arg(long, global = true, default_value_t = 3)]
    pub modes: usize,

    /// Number of accepted output modes in `optimize`.
    #[arg(long, global = true, default_value_t = 1)]
    pub rank: usize,

    /// Pass threshold for the verifying commands.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Check the three-mode optimum: p = 1/4 and a working sign shift.
    VerifyKlm,
    /// Success probability along the feasibility boundary.
    ScanCurve,
    /// Feasibility of a grid over the (x2, y2) square.
    Region,
    /// Numeric search for the best NS gate over all unitaries.
    Optimize,
    /// Completeness of the measurement operators of a unitary.
    KrausCheck {
        /// JSON file with a row-major list of [re, im] pairs, or an
        /// `optimize` result. A seeded random unitary is used otherwise.
        #[arg(long)]
        unitary: Option<PathBuf>,
    },
    /// Compare a superposed ancilla photon with its single-mode reduction.
    ReduceDemo,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}
